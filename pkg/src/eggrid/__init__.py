"""Multi-patch elastic geodesic grid pipeline."""

__version__ = "0.1.0"
