"""Excess loss of a linear predictor split into multiplier and quadratic parts.

For residual ``xi = <t*, X> - Y`` and increment ``h = <t - t*, X>``::

    excess     = loss(xi + h) - loss(xi)
    multiplier = loss'(xi) * h
    quadratic  = integral_{xi}^{xi+h} (loss'(w) - loss'(xi)) dw
               = loss(xi + h) - loss(xi) - loss'(xi) * h

The quadratic part is a Bregman remainder and is nonnegative for convex losses.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError
from .losses import LossSpec, loss_deriv, loss_value


@dataclass(frozen=True)
class Sample:
    design: np.ndarray
    responses: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.design, dtype=float)
        y = np.asarray(self.responses, dtype=float)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise ArgumentError(f"design must be an N x n matrix with N, n >= 1, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ArgumentError(f"responses must have length {X.shape[0]}, got shape {y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ArgumentError("sample contains non-finite entries")
        object.__setattr__(self, "design", X)
        object.__setattr__(self, "responses", y)

    @property
    def N(self):
        return self.design.shape[0]

    @property
    def n(self):
        return self.design.shape[1]


@dataclass(frozen=True)
class DecompositionTerms:
    excess: np.ndarray
    multiplier: np.ndarray
    quadratic: np.ndarray
    residuals_star: np.ndarray


def split_excess(spec: LossSpec, xi, h):
    """Return ``(excess, multiplier, quadratic)`` for residuals ``xi`` and increments ``h``."""
    xi = np.asarray(xi, dtype=float)
    h = np.asarray(h, dtype=float)
    multiplier = loss_deriv(spec, xi) * h
    if spec.kind == "squared":
        # polynomial forms avoid cancellation when |xi| >> |h|
        quadratic = h * h
        excess = h * (2.0 * xi + h)
    else:
        excess = loss_value(spec, xi + h) - loss_value(spec, xi)
        quadratic = excess - multiplier
    return excess, multiplier, quadratic


def decompose(spec: LossSpec, t, t_star, sample: Sample) -> DecompositionTerms:
    t = np.asarray(t, dtype=float)
    t_star = np.asarray(t_star, dtype=float)
    if t.shape != (sample.n,) or t_star.shape != (sample.n,):
        raise ArgumentError(f"parameter vectors must have dimension {sample.n}")
    X = sample.design
    xi = X @ t_star - sample.responses
    h = X @ (t - t_star)
    excess, multiplier, quadratic = split_excess(spec, xi, h)
    return DecompositionTerms(excess, multiplier, quadratic, xi)


def empirical_means(terms: DecompositionTerms):
    """Sample means ``(P_N excess, P_N multiplier, P_N quadratic)``."""
    return (float(np.mean(terms.excess)), float(np.mean(terms.multiplier)),
            float(np.mean(terms.quadratic)))


def check_exclusion(terms: DecompositionTerms, theta, r, h_norm, expected_multiplier=0.0):
    """Whether the excluding events hold for one candidate predictor.

    Checks the quadratic lower bound ``P_N Q >= theta * h_norm**2`` and the
    multiplier deviation ``|P_N M - E M| <= (theta/4) max(h_norm**2, r**2)``.
    ``expected_multiplier`` is ``E M`` (zero for independent symmetric noise,
    otherwise a Monte Carlo estimate supplied by the caller).  When both hold
    and ``h_norm >= r`` the empirical excess risk is at least
    ``(theta/4) h_norm**2``, so the candidate cannot minimise the empirical risk.
    """
    if theta <= 0 or r <= 0 or h_norm < 0:
        raise ArgumentError("need theta > 0, r > 0 and h_norm >= 0")
    _, pm, pq = empirical_means(terms)
    quad_ok = pq >= theta * h_norm ** 2
    mult_ok = abs(pm - expected_multiplier) <= 0.25 * theta * max(h_norm ** 2, r ** 2)
    return bool(quad_ok and mult_ok)
