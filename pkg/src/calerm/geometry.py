"""Origin-centred convex constraint sets and their basic geometry.

A :class:`ConstraintSet` is one of

* ``full_space``            -- all of R^n
* ``l2_ball``               -- {t : ||t||_2 <= r}
* ``l1_ball``               -- {t : ||t||_1 <= alpha}
* ``l1_l2_intersection``    -- both constraints at once

Every set is symmetric about the origin, which the width estimators rely on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .errors import ArgumentError, UnboundedSetError

KINDS = ("full_space", "l2_ball", "l1_ball", "l1_l2_intersection")

FEAS_TOL = 1e-12
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ConstraintSet:
    kind: str
    dim: int
    alpha: Optional[float] = None
    r: Optional[float] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"unknown constraint set kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ArgumentError(f"dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        need_alpha = self.kind in ("l1_ball", "l1_l2_intersection")
        need_r = self.kind in ("l2_ball", "l1_l2_intersection")
        for name, needed in (("alpha", need_alpha), ("r", need_r)):
            value = getattr(self, name)
            if needed:
                if value is None or not np.isfinite(value) or value <= 0:
                    raise ArgumentError(f"{self.kind} needs {name} > 0, got {value!r}")
                object.__setattr__(self, name, float(value))
            else:
                object.__setattr__(self, name, None)

    @property
    def bounded(self):
        return self.kind != "full_space"

    def to_dict(self):
        d = {"kind": self.kind, "dim": self.dim}
        if self.alpha is not None:
            d["alpha"] = self.alpha
        if self.r is not None:
            d["r"] = self.r
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(kind=d["kind"], dim=d["dim"], alpha=d.get("alpha"), r=d.get("r"))

    def with_dim(self, dim):
        return ConstraintSet(self.kind, dim, self.alpha, self.r)


def full_space(n):
    return ConstraintSet("full_space", n)


def l2_ball(n, r):
    return ConstraintSet("l2_ball", n, r=r)


def l1_ball(n, alpha):
    return ConstraintSet("l1_ball", n, alpha=alpha)


def l1_l2_intersection(n, alpha, r):
    return ConstraintSet("l1_l2_intersection", n, alpha=alpha, r=r)


def intersect_l2(cset: ConstraintSet, r):
    """The set ``cset ∩ r B_2^n`` expressed as one of the supported kinds."""
    if r <= 0:
        raise ArgumentError(f"localization radius must be positive, got {r}")
    n = cset.dim
    if cset.kind == "full_space":
        return l2_ball(n, r)
    if cset.kind == "l2_ball":
        return l2_ball(n, min(cset.r, r))
    if cset.kind == "l1_ball":
        if r >= cset.alpha:
            # alpha B_1 already sits inside alpha B_2
            return cset
        return l1_l2_intersection(n, cset.alpha, r)
    r_new = min(cset.r, r)
    if r_new >= cset.alpha:
        return l1_ball(n, cset.alpha)
    return l1_l2_intersection(n, cset.alpha, r_new)


def _check_dim(cset, x):
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cset.dim:
        raise ArgumentError(f"vector of dimension {x.shape[-1]} for a set in R^{cset.dim}")
    return x


def contains(cset: ConstraintSet, t, tol=FEAS_TOL):
    t = _check_dim(cset, t)
    if cset.alpha is not None and np.abs(t).sum() > cset.alpha + tol:
        return False
    if cset.r is not None and np.linalg.norm(t) > cset.r + tol:
        return False
    return True


def soft_threshold(w, tau):
    return np.sign(w) * np.maximum(np.abs(w) - tau, 0.0)


def _project_l2(p, r):
    nrm = np.linalg.norm(p)
    if nrm <= r:
        return p.copy()
    return p * (r / nrm)


def _project_l1(p, alpha):
    a = np.abs(p)
    if a.sum() <= alpha:
        return p.copy()
    u = np.sort(a)[::-1]
    css = np.cumsum(u) - alpha
    k = np.arange(1, p.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.sign(p) * np.maximum(a - theta, 0.0)


def _project_l1_l2(p, alpha, r):
    q = _project_l2(p, r)
    if np.abs(q).sum() <= alpha:
        return q
    q = _project_l1(p, alpha)
    if np.linalg.norm(q) <= r:
        return q
    # both constraints active: x = r S_tau(p) / ||S_tau(p)||_2 with ||x||_1 = alpha,
    # and ||S_tau||_1 / ||S_tau||_2 is non-increasing in tau
    a = np.abs(p)
    target = alpha / r

    def gap(tau):
        s = np.maximum(a - tau, 0.0)
        return s.sum() / np.linalg.norm(s) - target

    top = a.max()
    if gap(0.0) <= 0:
        tau = 0.0
    else:
        # just below the largest entry only the top coordinates survive and the
        # ratio drops to sqrt(#ties) < alpha/r, otherwise the l1 projection was feasible
        upper = np.nextafter(top, 0.0)
        tau = brentq(gap, 0.0, upper, xtol=1e-15 * top, rtol=4 * np.finfo(float).eps)
    s = soft_threshold(p, tau)
    x = s * (r / np.linalg.norm(s))
    # shave rounding so both norm constraints hold
    x *= min(1.0, alpha / max(np.abs(x).sum(), 1e-300), r / max(np.linalg.norm(x), 1e-300))
    return x


def project(cset: ConstraintSet, point):
    """Euclidean projection onto the set."""
    p = _check_dim(cset, point)
    if p.ndim != 1:
        raise ArgumentError("project expects a single vector")
    if cset.kind == "full_space":
        return p.copy()
    if cset.kind == "l2_ball":
        return _project_l2(p, cset.r)
    if cset.kind == "l1_ball":
        return _project_l1(p, cset.alpha)
    return _project_l1_l2(p, cset.alpha, cset.r)


def _golden_min_rows(f, hi, rel_tol=1e-10):
    """Row-wise golden-section minimisation of a unimodal ``f`` on ``[0, hi]``.

    ``f`` maps a vector of trial points (one per row) to a vector of values.
    """
    lo = np.zeros_like(hi)
    up = hi.copy()
    c = up - _INVPHI * (up - lo)
    d = lo + _INVPHI * (up - lo)
    fc = f(c)
    fd = f(d)
    tol = rel_tol * np.maximum(hi, 1e-300)
    while np.any(up - lo > tol):
        left = fc < fd
        # left rows keep [lo, d], the others keep [c, up]
        up = np.where(left, d, up)
        lo = np.where(left, lo, c)
        new = np.where(left, up - _INVPHI * (up - lo), lo + _INVPHI * (up - lo))
        fnew = f(new)
        c, d = np.where(left, new, d), np.where(left, c, new)
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
    mid = 0.5 * (lo + up)
    return np.minimum(f(mid), np.minimum(f(np.zeros_like(hi)), f(hi)))


def support_values(cset: ConstraintSet, W):
    """``sup_{t in set} <w, t>`` for every row ``w`` of ``W``."""
    W = np.atleast_2d(_check_dim(cset, W))
    if not cset.bounded:
        raise UnboundedSetError("support function of the full space is infinite")
    if cset.kind == "l2_ball":
        return cset.r * np.linalg.norm(W, axis=1)
    if cset.kind == "l1_ball":
        return cset.alpha * np.abs(W).max(axis=1)
    # support of an intersection is the infimal convolution of the two supports:
    # min over tau >= 0 of alpha*tau + r*||soft_threshold(w, tau)||_2
    A = np.abs(W)
    alpha, r = cset.alpha, cset.r

    def f(tau):
        s = np.maximum(A - tau[:, None], 0.0)
        return alpha * tau + r * np.sqrt(np.einsum("ij,ij->i", s, s))

    return _golden_min_rows(f, A.max(axis=1))


def support_value(cset: ConstraintSet, w):
    w = _check_dim(cset, w)
    if w.ndim != 1:
        raise ArgumentError("support_value expects a single vector")
    return float(support_values(cset, w[None, :])[0])


def symmetric_support(cset: ConstraintSet, w):
    """``sup_{t in set} |<w, t>|``."""
    return max(support_value(cset, w), support_value(cset, -np.asarray(w, dtype=float)))


def symmetric_supports(cset: ConstraintSet, W):
    # all supported sets are symmetric, so sup |<w,t>| equals sup <w,t>
    return support_values(cset, W)


def diameter(cset: ConstraintSet):
    if cset.kind == "full_space":
        return math.inf
    if cset.kind == "l2_ball":
        return 2.0 * cset.r
    if cset.kind == "l1_ball":
        return 2.0 * cset.alpha
    return 2.0 * min(cset.alpha, cset.r)


def sample_feasible(cset: ConstraintSet, rng, count, scale=1.0):
    """Random points of the set (projections of scaled Gaussian vectors)."""
    n = cset.dim
    if cset.bounded:
        radius = 0.5 * diameter(cset)
        pts = rng.standard_normal((count, n)) * (radius / math.sqrt(n))
        pts *= rng.uniform(0.2, 3.0, size=(count, 1))
        return np.array([project(cset, p) for p in pts])
    return rng.standard_normal((count, n)) * (scale / math.sqrt(n))
