"""Small-ball constants: empirical curves, Paley-Zygmund certificates and order statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .decomposition import Sample
from .errors import ArgumentError, DegenerateError
from .geometry import ConstraintSet, diameter, project
from .synthdata import as_rng


@dataclass(frozen=True)
class SmallBallParams:
    """``Pr(|Z| >= kappa0 * ||Z||_2) >= eps``."""
    kappa0: float
    eps: float

    def __post_init__(self):
        if not self.kappa0 > 0:
            raise ArgumentError(f"kappa0 must be positive, got {self.kappa0}")
        if not 0 < self.eps < 1:
            raise ArgumentError(f"eps must lie in (0, 1), got {self.eps}")

    @property
    def quadratic_floor(self):
        """Lower bound ``eps * kappa0**2 / 16`` on normalised empirical second moments."""
        return self.eps * self.kappa0 ** 2 / 16.0


def _l2(draws):
    return float(np.sqrt(np.mean(np.square(draws))))


def smallball_curve(draws, kappa_grid):
    """Empirical ``Pr(|Z| >= kappa * ||Z||_2)`` for each kappa, norm taken from the draws."""
    z = np.abs(np.asarray(draws, dtype=float).ravel())
    if z.size < 100:
        raise ArgumentError(f"need at least 100 draws, got {z.size}")
    norm = _l2(z)
    if norm == 0:
        raise DegenerateError("all draws are zero")
    kappas = np.asarray(kappa_grid, dtype=float)
    zs = np.sort(z)
    # count of draws >= threshold via binary search on the sorted magnitudes
    idx = np.searchsorted(zs, kappas * norm, side="left")
    return (z.size - idx) / z.size


def small_ball_lower_tail(draws, kappa):
    """Empirical ``Pr(|W| <= kappa * ||W||_2)``; used for the noise constant kappa_1."""
    z = np.abs(np.asarray(draws, dtype=float).ravel())
    norm = _l2(z)
    if norm == 0:
        raise DegenerateError("all draws are zero")
    return float(np.mean(z <= kappa * norm))


def paley_zygmund_certificate(l4_over_l2, theta=0.25):
    """Small-ball constants implied by a fourth-moment bound.

    Paley-Zygmund applied to ``Z**2`` gives
    ``Pr(Z**2 > theta E Z**2) >= (1 - theta)**2 (E Z**2)**2 / E Z**4``, hence
    ``kappa0 = sqrt(theta)`` and ``eps = (1 - theta)**2 / L**4`` with
    ``L = ||Z||_4 / ||Z||_2``.
    """
    if not 0 < theta < 1:
        raise ArgumentError(f"theta must lie in (0, 1), got {theta}")
    if not l4_over_l2 >= 1:
        raise ArgumentError(f"L4/L2 ratio is at least 1, got {l4_over_l2}")
    return SmallBallParams(math.sqrt(theta), (1.0 - theta) ** 2 / l4_over_l2 ** 4)


def _directions(cset: ConstraintSet, r, count, rng):
    n = cset.dim
    g = rng.standard_normal((count, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    if not cset.bounded:
        return g
    reach = 0.5 * diameter(cset)
    pts = np.array([project(cset, reach * v) for v in g])
    norms = np.linalg.norm(pts, axis=1)
    keep = norms >= r * (1.0 - 1e-12)
    return pts[keep] / norms[keep, None]


def empirical_smallball_check(sample: Sample, cset: ConstraintSet, r, params: SmallBallParams,
                              num_directions=256, rng_seed=0, directions=None):
    """Minimum over directions of ``(1/N) sum <u, X_i>**2`` against ``eps*kappa0**2/16``.

    Directions are unit vectors ``u`` such that ``s*u`` lies in the set for some
    ``s >= r``; pass ``directions`` to use a fixed list instead of random ones.
    """
    if cset.dim != sample.n:
        raise ArgumentError("set and design dimensions differ")
    if directions is None:
        U = _directions(cset, r, num_directions, as_rng(rng_seed))
    else:
        U = np.atleast_2d(np.asarray(directions, dtype=float))
        U = U / np.linalg.norm(U, axis=1, keepdims=True)
    if U.shape[0] == 0:
        raise ArgumentError(f"no feasible direction reaches norm {r}")
    second = np.mean((sample.design @ U.T) ** 2, axis=0)
    min_value = float(second.min())
    return {"pass": bool(min_value > params.quadratic_floor), "min_value": min_value}


def order_statistics_check(draws, q, r_moment, u, lr_norm=None):
    """Whether ``Z*_k <= u (N/k)**(1/q) ||Z||_{L_r}`` for all ``1 <= k <= N/2``.

    ``Z*`` is the non-increasing rearrangement of ``|Z_i|``.  ``lr_norm`` defaults
    to the empirical ``L_r`` norm of the draws.
    """
    if not (q >= 1 and r_moment >= q and u >= 2):
        raise ArgumentError("need q >= 1, r >= q and u >= 2")
    z = np.sort(np.abs(np.asarray(draws, dtype=float).ravel()))[::-1]
    N = z.size
    if lr_norm is None:
        lr_norm = float(np.mean(z ** r_moment) ** (1.0 / r_moment))
    if not np.isfinite(lr_norm):
        raise ArgumentError("L_r norm must be finite")
    kmax = N // 2
    if kmax < 1:
        return True
    k = np.arange(1, kmax + 1)
    return bool(np.all(z[:kmax] <= u * (N / k) ** (1.0 / q) * lr_norm))


def order_statistics_failure_bound(N, q, r_moment, u):
    """Probability bound ``2 u**-r N**-(r/q - 1)`` on a violation of the order-statistics check."""
    return 2.0 * u ** (-r_moment) * N ** (-(r_moment / q - 1.0))


def upper_tail_fraction(draws, eps, l2_norm, c2=2.0):
    """Fraction of draws with ``|Z_i| >= c2 * eps**-0.5 * ||Z||_2``."""
    z = np.abs(np.asarray(draws, dtype=float))
    return float(np.mean(z >= c2 * l2_norm / math.sqrt(eps)))


def two_sided_count(draws, params: SmallBallParams, l2_norm, c2=2.0):
    """Number of draws with ``kappa0 ||Z|| <= |Z_j| <= c2 ||Z|| / sqrt(eps)``."""
    z = np.abs(np.asarray(draws, dtype=float))
    lo = params.kappa0 * l2_norm
    hi = c2 * l2_norm / math.sqrt(params.eps)
    return int(np.count_nonzero((z >= lo) & (z <= hi)))
