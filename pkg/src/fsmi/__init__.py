"""Fast Shannon mutual information for range-sensor beams on occupancy grids."""

from .grid import OccupancyGrid2D, Pose, RayTrace, bayes_update, entropy, new_grid, ray_trace
from .sensor import MiTables, SensorModel, build_tables, f_value

__version__ = "0.1.0"

__all__ = [
    "OccupancyGrid2D", "Pose", "RayTrace", "bayes_update", "entropy", "new_grid", "ray_trace",
    "MiTables", "SensorModel", "build_tables", "f_value",
]
