"""Min-max piecewise-affine control barrier functions for switched affine systems."""

from minmaxcbf.geometry import Polyhedron
from minmaxcbf.system import SwitchedAffineSystem
from minmaxcbf.barrier import PiecewiseAffineBarrier

__all__ = ["Polyhedron", "SwitchedAffineSystem", "PiecewiseAffineBarrier"]
__version__ = "0.1.0"
