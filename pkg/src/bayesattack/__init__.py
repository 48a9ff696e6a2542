"""Hard-label black-box adversarial attacks via Bayesian optimization."""
from bayesattack._backend import BACKEND

__version__ = "0.1.0"
__all__ = ["BACKEND", "__version__"]
