"""Kernel dispatch: compiled loops by default, numpy when ``OCCMAP_NO_JIT`` is set."""

from ._jit import use_numba

if use_numba():
    from .kernels_nb import (astar, dijkstra, patch_logits, raycast, scatter_local,
                              traverse_local)

    BACKEND = "numba"
else:
    from .kernels_np import (astar, dijkstra, patch_logits, raycast, scatter_local,
                              traverse_local)

    BACKEND = "numpy"

__all__ = ["BACKEND", "astar", "dijkstra", "patch_logits", "raycast", "scatter_local",
           "traverse_local"]
