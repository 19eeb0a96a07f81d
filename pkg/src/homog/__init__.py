"""Periodic homogenization of hyperbolic systems through Bloch-Fourier fibers.

Cell problems and effective matrices, spectral germs and threshold
coefficients, fiber cosine errors and Cauchy-problem rates on the torus.
"""

from .bundle import Bundle, prepare
from .fields import EXAMPLES, get_example
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "Bundle", "EXAMPLES", "get_example", "prepare", "__version__"]
