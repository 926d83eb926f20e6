"""Predictive occupancy mapping for 2D indoor exploration.

A desk-scale simulator: depth scans from generated floorplans, egocentric
occupancy maps, anticipators that fill in what the sensor missed, a global
map fused by moving average, and exploration and PointGoal harnesses that
plan with (weighted) A*.
"""

from .grid import (FREE, OCCUPIED, UNKNOWN, VOID, GlobalOccupancy, GroundTruthLayout,
                   LocalOccupancy, MapSpec, Pose, binarize, class_scores, map_accuracy,
                   transform_local_to_global, world_to_cell)
from .kernels import BACKEND

__version__ = "0.1.0"
