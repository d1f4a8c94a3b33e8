"""Reference models and test-function catalog on the line.

Every acceptance check draws its functions from here so that the same
objects are exercised across modules.
"""

from __future__ import annotations

import numpy as np

from .measures import ClusterLaw, ClusterProcessModel, FixedOffsets, GaussianPoints, Lebesgue
from .quasiinv import CompactDiffeo
from .testfunctions import Bump, CylinderFunction, OuterFunction, Plateau, SmoothVectorField

GAUSSIAN_SIZE_PROBS = np.array([0.1, 0.3, 0.4, 0.2])


def gaussian_pairs_model(size_probs=GAUSSIAN_SIZE_PROBS, sigma: float = 1.0, **numerics) -> ClusterProcessModel:
    """Unit Lebesgue centres on the line with i.i.d. N(0, sigma^2) offsets."""
    return ClusterProcessModel(Lebesgue(1), ClusterLaw(np.asarray(size_probs, dtype=float), GaussianPoints(sigma, 1)),
                               **numerics)


def delta_model(scale: float = 1.0) -> ClusterProcessModel:
    """Single-point clusters at the centre: the Poisson process itself."""
    return ClusterProcessModel(Lebesgue(1, scale), ClusterLaw(np.array([0.0, 1.0]), FixedOffsets(np.zeros((1, 1)))))


def bumps() -> list[Bump]:
    """Five nonnegative bumps of different centres, widths and heights."""
    return [
        Bump([0.5], 1.0, 2.0),
        Bump([0.0], 0.5, 3.0),
        Bump([1.0], 1.5, 1.0),
        Bump([-0.5], 0.8, 4.0),
        Bump([0.3], 2.0, 1.5),
    ]


def indicator_plateau() -> Plateau:
    """``ln 2`` times a steep plateau over [0, 1] (Lebesgue mass 1)."""
    return Plateau([0.0], [1.0], 0.02, np.log(2.0))


def diffeos() -> list[CompactDiffeo]:
    return [
        CompactDiffeo(Bump([0.5], 1.0), 0.5),
        CompactDiffeo(Bump([0.0], 1.5), -0.6),
        CompactDiffeo(Bump([1.0], 0.8), 0.3),
    ]


def cylinder_functions() -> list[CylinderFunction]:
    return [
        CylinderFunction(OuterFunction.tanh([1.0]), [Bump([0.6], 0.8, 3.0)]),
        CylinderFunction(OuterFunction.sine([1.0, -0.5], 0.3), [Bump([0.2], 1.2, 2.0), Bump([0.9], 0.7, 3.0)]),
        CylinderFunction(OuterFunction.gaussian([0.5], 1.0), [Bump([0.4], 1.5, 2.0)]),
    ]


def vector_fields() -> list[SmoothVectorField]:
    return [
        SmoothVectorField.along(Bump([0.5], 1.5), [1.0]),
        SmoothVectorField.along(Bump([0.2], 1.0, 2.0), [-1.0]),
        SmoothVectorField.along(Bump([0.8], 2.0, 1.5), [1.0]),
    ]


def observables() -> list:
    """Observables for the dynamics checks: two linear statistics and one cylinder function."""
    return [Bump([1.0], 1.0, 1.0), Bump([0.7], 0.6, 2.0),
            CylinderFunction(OuterFunction.tanh([1.0]), [Bump([1.2], 0.8, 3.0)])]
