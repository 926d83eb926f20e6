class OccMapError(Exception):
    pass


class OutOfBounds(OccMapError, IndexError):
    pass


class SpecMismatch(OccMapError, ValueError):
    pass


class ShapeMismatch(OccMapError, ValueError):
    pass


class GenerationFailed(OccMapError):
    pass


class PoseInObstacle(OccMapError, ValueError):
    pass


class NoValidCells(OccMapError, ValueError):
    pass


class EmptyDataset(OccMapError, ValueError):
    pass


class NoPath(OccMapError):
    pass


class StartBlocked(OccMapError):
    pass


class Unreachable(OccMapError):
    pass


class InvalidStart(OccMapError):
    pass


class NonpositiveShortest(OccMapError, ValueError):
    pass


class NoFreePoses(OccMapError):
    pass


class ParseError(OccMapError, ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
