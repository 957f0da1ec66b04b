"""Bayesian hierarchical beta regression for bounded proportion data.

Submodules: ``data`` (ingestion), ``dists`` (log densities), ``slicer``
(constrained slice sampling), ``model`` (Gibbs sampler), ``wbc`` (structured
cross means), ``diagnostics`` (summaries), ``simulate`` (truth simulators and
replication studies), ``cli`` (command-line entry points).
"""

from .data import Dataset, MissingnessMask, load_dataset
from .model import GibbsSampler, ModelState, PriorConfig, SampleStore, run_chains

__all__ = [
    "Dataset",
    "MissingnessMask",
    "load_dataset",
    "GibbsSampler",
    "ModelState",
    "PriorConfig",
    "SampleStore",
    "run_chains",
]

__version__ = "0.1.0"
