"""Target networks versus functional regularization for Q-value estimation.

Exact spectral analysis of TD(0), target-network value iteration and
functionally regularized value iteration under linear function
approximation, plus sample-based Q-learning on Four Rooms.
"""
from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
