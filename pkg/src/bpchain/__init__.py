"""Chain recurrence, BP-chain recurrence and fixed points of planar
homeomorphisms, with the two leaf-preserving example maps."""
from .geometry import BoxR, Point
from .maps import MapHandle, compose, conjugate, identity, inverse, iterate_map, rotation, scaling, translation

__version__ = "0.1.0"

__all__ = ["BoxR", "MapHandle", "Point", "compose", "conjugate", "identity", "inverse",
           "iterate_map", "rotation", "scaling", "translation", "__version__"]
