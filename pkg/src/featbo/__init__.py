"""Bayesian optimization in a learned low-dimensional feature space."""

from .acquisition import AcquisitionSpec, acq_value, estimate_lipschitz, propose
from .benchmarks import EmbeddedObjective, get_benchmark
from .surrogate import DecoderStructure, JointSurrogate, ModelConfig, fit, reconstruct

__all__ = [
    "AcquisitionSpec",
    "DecoderStructure",
    "EmbeddedObjective",
    "JointSurrogate",
    "ModelConfig",
    "acq_value",
    "estimate_lipschitz",
    "fit",
    "get_benchmark",
    "propose",
    "reconstruct",
]
__version__ = "0.1.0"
