"""Simulation and numerical verification toolkit for Poisson cluster point processes."""

__version__ = "0.1.0"

from .configspace import (ClusterVector, Configuration, LiftedBatch, LiftedConfiguration, Window,
                          project_lifted, project_vector)
from .errors import DivergenceError, DivergenceReport, ModelError
from .measures import (BumpDensity, ClusterLaw, ClusterProcessModel, ExchangeableGaussian, ExpWeight,
                       FixedOffsets, GaussianPoints, HeavyTailPoints, Lebesgue, lambda_star_density)
from .sampler import sample_lifted, sample_lifted_batch, sample_mucl, sample_mucl_batch, sample_poisson
from .stats import Estimate

__all__ = [
    "ClusterVector", "Configuration", "LiftedBatch", "LiftedConfiguration", "Window", "project_lifted",
    "project_vector", "DivergenceError", "DivergenceReport", "ModelError", "BumpDensity", "ClusterLaw",
    "ClusterProcessModel", "ExchangeableGaussian", "ExpWeight", "FixedOffsets", "GaussianPoints",
    "HeavyTailPoints", "Lebesgue", "lambda_star_density", "sample_lifted", "sample_lifted_batch", "sample_mucl",
    "sample_mucl_batch", "sample_poisson", "Estimate",
]
