"""branchlab: a branch-and-bound laboratory for learning-enhanced branching.

Builds desk-scale unit-commitment MILP families, collects strong-branching
scores, trains per-variable / per-group regression models, and measures the
gap closure of ML branching rules against non-ML baselines.
"""

from .backend import backend_name
from .model import MILPInstance, load_instance, save_instance

__version__ = "0.1.0"

__all__ = ["MILPInstance", "load_instance", "save_instance", "backend_name", "__version__"]
