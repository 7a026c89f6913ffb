"""Convex, even loss functions used for risk minimization.

Three losses are supported:

* ``squared``  -- ``t**2``
* ``huber``    -- ``t**2 / 2`` for ``|t| <= gamma`` and ``gamma*|t| - gamma**2/2`` beyond
* ``logistic`` -- ``-log(4 e^t / (1 + e^t)^2)``, i.e. ``2 log cosh(t/2)``

All evaluation functions accept scalars or numpy arrays and return the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ArgumentError, CalibrationError, DomainError

KINDS = ("squared", "huber", "logistic")

# sup of the second derivative over the real line, per loss
_CURVATURE_BOUND = {"squared": 2.0, "huber": 1.0, "logistic": 0.5}


@dataclass(frozen=True)
class LossSpec:
    kind: str
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown loss kind {self.kind!r}")
        if self.kind == "huber":
            if self.gamma is None or not np.isfinite(self.gamma) or self.gamma <= 0:
                raise ArgumentError(f"huber loss needs gamma > 0, got {self.gamma!r}")
        elif self.gamma is not None:
            # gamma only carries meaning for the Huber loss
            object.__setattr__(self, "gamma", None)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "huber":
            d["gamma"] = float(self.gamma)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], gamma=d.get("gamma"))

    @property
    def curvature_bound(self):
        """Supremum of the second derivative over the real line."""
        return _CURVATURE_BOUND[self.kind]


SQUARED = LossSpec("squared")
LOGISTIC = LossSpec("logistic")


def huber(gamma):
    return LossSpec("huber", float(gamma))


def _as_finite(t):
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("loss evaluated at a non-finite point")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def _log_cosh(a):
    # accurate both near 0 (no cancellation) and for large |a| (no overflow)
    a = np.abs(a)
    small = a < 1.0
    out = np.empty_like(a)
    s = np.sinh(a[small] / 2.0)
    out[small] = np.log1p(2.0 * s * s)
    big = a[~small]
    out[~small] = big + np.log1p(np.exp(-2.0 * big)) - np.log(2.0)
    return out


def loss_value(spec: LossSpec, t):
    """Evaluate the loss at ``t``."""
    x = _as_finite(t)
    if spec.kind == "squared":
        v = x * x
    elif spec.kind == "huber":
        g = spec.gamma
        a = np.abs(x)
        v = np.where(a <= g, 0.5 * x * x, g * a - 0.5 * g * g)
    else:
        v = 2.0 * _log_cosh(np.atleast_1d(x / 2.0)).reshape(x.shape)
    return _out(v, t)


def loss_deriv(spec: LossSpec, t):
    """First derivative of the loss."""
    x = _as_finite(t)
    if spec.kind == "squared":
        v = 2.0 * x
    elif spec.kind == "huber":
        v = np.clip(x, -spec.gamma, spec.gamma)
    else:
        # 1 - 2/(e^t + 1) == tanh(t/2)
        v = np.tanh(x / 2.0)
    return _out(v, t)


def loss_second_deriv(spec: LossSpec, t):
    """Second derivative; for Huber the kink ``|t| = gamma`` gets the value 0."""
    x = _as_finite(t)
    if spec.kind == "squared":
        v = np.full_like(x, 2.0)
    elif spec.kind == "huber":
        v = np.where(np.abs(x) < spec.gamma, 1.0, 0.0)
    else:
        e = np.exp(-np.abs(x))
        v = 2.0 * e / (1.0 + e) ** 2
    return _out(v, t)


def rho(spec: LossSpec, t1, t2):
    """Infimum of the second derivative over ``[t1, t2]`` (kinks excluded).

    Each supported loss has a second derivative that is constant or
    non-increasing on the positive half-line, so the infimum is attained at
    ``t2`` and no numerical search is needed.
    """
    t1 = float(t1)
    t2 = float(t2)
    if not (np.isfinite(t1) and np.isfinite(t2)):
        raise DomainError("rho needs finite endpoints")
    if t1 < 0 or t1 > t2:
        raise ArgumentError(f"rho needs 0 <= t1 <= t2, got ({t1}, {t2})")
    if spec.kind == "squared":
        return 2.0
    if spec.kind == "huber":
        return 1.0 if t2 < spec.gamma else 0.0
    return float(loss_second_deriv(spec, t2))


def calibrate_huber(sigma_estimate, r_Q, c0=1.0):
    """Huber loss whose kink sits at ``c0 * max(sigma_estimate, r_Q)``."""
    if sigma_estimate < 0 or r_Q < 0:
        raise ArgumentError("noise level and complexity must be nonnegative")
    if c0 <= 0:
        raise ArgumentError(f"c0 must be positive, got {c0}")
    scale = max(float(sigma_estimate), float(r_Q))
    if scale == 0:
        raise CalibrationError("cannot calibrate Huber loss: noise level and r_Q are both zero")
    return huber(c0 * scale)
