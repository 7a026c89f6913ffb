"""Complexity parameters of localized linear classes.

Widths are Monte Carlo averages of support functions of ``T ∩ r B_2^n``; for
isotropic designs the L2(mu) ball coincides with the Euclidean ball, so the
localized class is again one of the supported constraint sets.

Fixed points are found by bisection in ``r``.  All evaluations along one
bisection reuse the same random draws (common random numbers), and because
``T`` is star-shaped the criterion ``stat(r) / r**p`` is then non-increasing
path by path, which is what makes bisection valid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .decomposition import Sample
from .errors import ArgumentError
from .geometry import ConstraintSet, diameter, intersect_l2, symmetric_supports
from .losses import LossSpec, loss_deriv
from .synthdata import DesignKind, NoiseKind, noise_moments, sample_design, sample_noise

FIXED_POINT_KINDS = ("r1Q", "r2Q", "rM_prime", "r0", "rM_total", "kbarN")
CHUNK = 256

# stream tags keep independent uses of one master seed apart
_STREAM = {"width": 1, "rademacher": 2, "multiplier": 3, "directions": 4}


@dataclass(frozen=True)
class WidthEstimate:
    value: float
    std_error: float
    reps: int


@dataclass
class FixedPointResult:
    r: float
    bracket_lo: float
    bracket_hi: float
    mc_std_error: float
    kind: str
    capped: bool = False
    trace: list = field(default_factory=list, repr=False, compare=False)

    def to_row(self):
        return {"kind": self.kind, "r": self.r, "bracket_lo": self.bracket_lo,
                "bracket_hi": self.bracket_hi, "mc_std_error": self.mc_std_error,
                "capped": self.capped}


def chunk_rng(seed, stream, chunk):
    """Generator for one block of replicates; a pure function of its arguments."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAM[stream], int(chunk)]))


def _chunks(reps):
    for c, start in enumerate(range(0, reps, CHUNK)):
        yield c, min(CHUNK, reps - start)


def gaussian_vectors(seed, reps, n):
    """``reps`` standard Gaussian vectors in R^n, replicate ``j`` fixed by ``(seed, j)``."""
    return np.concatenate([chunk_rng(seed, "width", c).standard_normal((m, n)) for c, m in _chunks(reps)])


def gaussian_width(cset: ConstraintSet, r, reps=2000, rng_seed=0, vectors=None) -> WidthEstimate:
    """Monte Carlo estimate of ``E sup_{t in T ∩ rB_2} |<g, t>|``."""
    if reps < 2:
        raise ArgumentError(f"need at least 2 replicates, got {reps}")
    G = gaussian_vectors(rng_seed, reps, cset.dim) if vectors is None else vectors
    vals = symmetric_supports(intersect_l2(cset, r), G)
    return WidthEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals))), len(vals))


def chi_mean(n):
    """``E ||g||_2`` for a standard Gaussian vector in R^n."""
    return math.sqrt(2.0) * math.exp(math.lgamma((n + 1) / 2.0) - math.lgamma(n / 2.0))


def rademacher_multiplier_width(cset: ConstraintSet, r, sample: Sample, multipliers, rademacher):
    """``(1/sqrt N) sup_{t in T ∩ rB_2} |sum_i eps_i m_i <t, X_i>|`` evaluated exactly."""
    m = np.asarray(multipliers, dtype=float)
    e = np.asarray(rademacher, dtype=float)
    if m.shape != (sample.N,) or e.shape != (sample.N,):
        raise ArgumentError(f"multipliers and signs must have length {sample.N}")
    if cset.dim != sample.n:
        raise ArgumentError("set and design dimensions differ")
    w = sample.design.T @ (e * m)
    return float(symmetric_supports(intersect_l2(cset, r), w[None, :])[0] / math.sqrt(sample.N))


def process_vectors(seed, reps, N, design: DesignKind, multiplier=None, stream="rademacher"):
    """Replicates of ``sum_i eps_i m_i X_i`` for fresh ``(X, eps, m)`` draws.

    ``multiplier`` maps ``(N, rng)`` to a length-N vector, default all ones.  For
    the Gaussian design the sum is drawn directly as ``||eps*m||_2 * g``, which
    has exactly the same law.
    """
    out = np.empty((reps, design.dim))
    row = 0
    for c, m in _chunks(reps):
        rng = chunk_rng(seed, stream, c)
        for _ in range(m):
            mult = np.ones(N) if multiplier is None else multiplier(N, rng)
            if design.kind == "gaussian_isotropic":
                out[row] = np.linalg.norm(mult) * rng.standard_normal(design.dim)
            else:
                eps = rng.integers(0, 2, size=N) * 2.0 - 1.0
                X = sample_design(design, N, rng)
                out[row] = X.T @ (eps * mult)
            row += 1
    return out


def _quantile_se(vals, level):
    """Order-statistic spread around the empirical ``level`` quantile (binomial +/- 1 sd)."""
    M = len(vals)
    s = np.sort(vals)
    k = math.ceil(level * M) - 1
    d = math.sqrt(M * level * (1.0 - level))
    lo = s[max(0, int(math.floor(k - d)))]
    hi = s[min(M - 1, int(math.ceil(k + d)))]
    return float(s[k]), 0.5 * float(hi - lo)


def _bisect(holds, r_max, rel_tol):
    """Smallest r in (r_min, r_max] where ``holds`` becomes true, assuming an up-set.

    Returns ``(r, lo, hi, capped)``; r = 0 when the condition already holds at
    r_min = 1e-6 * r_max, and r = r_max (capped) when it never holds.
    """
    r_min = 1e-6 * r_max
    if holds(r_min):
        return 0.0, 0.0, r_min, False
    if not holds(r_max):
        return r_max, r_max, r_max, True
    lo, hi = r_min, r_max
    while hi - lo > rel_tol * hi:
        mid = math.sqrt(lo * hi) if hi > 2.0 * lo else 0.5 * (lo + hi)
        if holds(mid):
            hi = mid
        else:
            lo = mid
    return hi, lo, hi, False


def solve_fixed_point(kind, cset: ConstraintSet, N, *, zeta=None, kappa=None, delta=None,
                      mc_budget=2000, rng_seed=0, design: Optional[DesignKind] = None,
                      loss: Optional[LossSpec] = None, noise: Optional[NoiseKind] = None,
                      lipschitz=1.0, cap=1e3, rel_tol=1e-3) -> FixedPointResult:
    """Bisection for the fixed points ``r1Q``, ``r2Q``, ``kbarN`` and ``rM_prime``.

    * ``r1Q``:      E||G||_{T ∩ rB}            <= zeta * r * sqrt(N)
    * ``r2Q``:      E phi_N(r)                 <= zeta * r**2 * sqrt(N)
    * ``kbarN``:    E phi_N(r / lipschitz)     <= zeta * r**2 * sqrt(N)
    * ``rM_prime``: (1-delta)-quantile of phi_N^loss(r) <= kappa * r**2 * sqrt(N)

    where ``phi_N(r) = N**-0.5 sup_{t in T ∩ rB} |sum eps_i <t, X_i>|`` and
    ``phi_N^loss`` carries the extra multipliers ``loss'(xi_i)``.  Expectations
    and the quantile use ``mc_budget`` replicates shared across all ``r``.
    """
    if kind not in ("r1Q", "r2Q", "kbarN", "rM_prime"):
        raise ArgumentError(f"solve_fixed_point does not handle kind {kind!r}")
    if int(N) != N or N < 1:
        raise ArgumentError(f"N must be a positive integer, got {N!r}")
    if mc_budget < 2:
        raise ArgumentError("mc_budget must be at least 2")
    n = cset.dim
    design = design or DesignKind("gaussian_isotropic", n)
    if design.dim != n:
        raise ArgumentError("design and set dimensions differ")
    r_max = 0.5 * diameter(cset) if cset.bounded else float(cap)
    sqrtN = math.sqrt(N)
    trace = []

    if kind == "rM_prime":
        if mc_budget < 100:
            raise ArgumentError(f"rM_prime needs mc_budget >= 100 for a usable quantile, got {mc_budget}")
        if loss is None or noise is None:
            raise ArgumentError("rM_prime needs a loss and a noise law")
        if kappa is None or not kappa > 0:
            raise ArgumentError("rM_prime needs kappa > 0")
        if delta is None or not 0 < delta < 1:
            raise ArgumentError("rM_prime needs delta in (0, 1)")

        def multiplier(size, rng):
            # xi = <t*, X> - Y = -W for a well-specified model; loss' is odd and the
            # Rademacher signs absorb the sign
            return loss_deriv(loss, sample_noise(noise, size, rng, signal=rng.standard_normal(size)))

        W = process_vectors(rng_seed, mc_budget, N, design, multiplier, stream="multiplier")
        level = 1.0 - delta
        power, scale = 2, kappa

        def stat(r):
            vals = symmetric_supports(intersect_l2(cset, r), W) / sqrtN
            return _quantile_se(vals, level)
    else:
        if zeta is None or not zeta > 0:
            raise ArgumentError(f"{kind} needs zeta > 0")
        if kind == "r1Q":
            W = gaussian_vectors(rng_seed, mc_budget, n)
            power, shrink = 1, 1.0
        else:
            W = process_vectors(rng_seed, mc_budget, N, design)
            power = 2
            shrink = 1.0 / lipschitz if kind == "kbarN" else 1.0
            if lipschitz <= 0:
                raise ArgumentError("lipschitz constant must be positive")
        scale = zeta
        norm = 1.0 if kind == "r1Q" else sqrtN

        def stat(r):
            vals = symmetric_supports(intersect_l2(cset, r * shrink), W) / norm
            return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))

    def holds(r):
        value, se = stat(r)
        bound = scale * r ** power * sqrtN
        trace.append((r, value, se, bound))
        return value <= bound

    r, lo, hi, capped = _bisect(holds, r_max, rel_tol)
    at = hi if hi > 0 else lo
    _, se = stat(at) if at > 0 else (0.0, 0.0)
    return FixedPointResult(r, lo, hi, se, kind, capped, trace)


def r0(spec: LossSpec, cset: ConstraintSet, noise_l2_of_lprime, N, kappa,
       mode="independent_isotropic", sample: Optional[Sample] = None, t_star=None,
       rng_seed=0, num_directions=512, cap=1e3, rel_tol=1e-3):
    """Smallest r with ``sup_{h in T ∩ rB} ||loss'(xi) h(X)||_2 <= sqrt(N) kappa r**2 / 4``.

    In ``independent_isotropic`` mode the supremum equals ``||loss'(xi)||_2 * r``
    and the answer is ``4 ||loss'(xi)||_2 / (sqrt(N) kappa)``.  In ``monte_carlo``
    mode the norms are estimated from ``sample`` (residuals taken at ``t_star``)
    over a net of random directions, and the crossing is bisected.
    """
    if not kappa > 0:
        raise ArgumentError(f"kappa must be positive, got {kappa}")
    if mode == "independent_isotropic":
        if noise_l2_of_lprime < 0:
            raise ArgumentError("norm of loss'(xi) must be nonnegative")
        return 4.0 * float(noise_l2_of_lprime) / (math.sqrt(N) * kappa)
    if mode != "monte_carlo":
        raise ArgumentError(f"unknown r0 mode {mode!r}")
    if sample is None:
        raise ArgumentError("monte_carlo mode needs a sample")
    t_star = np.zeros(sample.n) if t_star is None else np.asarray(t_star, dtype=float)
    xi = sample.design @ t_star - sample.responses
    lp = loss_deriv(spec, xi)
    rng = chunk_rng(rng_seed, "directions", 0)
    U = rng.standard_normal((num_directions, sample.n))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    # ||loss'(xi) <u, X>||_2 per unit direction, and the largest feasible scale along u
    a = np.sqrt(np.mean((lp[:, None] * (sample.design @ U.T)) ** 2, axis=0))
    reach = np.full(num_directions, np.inf)
    if cset.alpha is not None:
        reach = np.minimum(reach, cset.alpha / np.abs(U).sum(axis=1))
    if cset.r is not None:
        reach = np.minimum(reach, cset.r)
    r_max = 0.5 * diameter(cset) if cset.bounded else float(cap)

    def holds(r):
        return float(np.max(np.minimum(reach, r) * a)) <= math.sqrt(N) * kappa * r * r / 4.0

    r_val, _, _, _ = _bisect(holds, r_max, rel_tol)
    return r_val


def r_M_total(rM_prime: FixedPointResult, r0_value) -> FixedPointResult:
    if r0_value < 0:
        raise ArgumentError("r0 must be nonnegative")
    return FixedPointResult(rM_prime.r + r0_value, rM_prime.bracket_lo + r0_value,
                            rM_prime.bracket_hi + r0_value, rM_prime.mc_std_error, "rM_total",
                            rM_prime.capped)


def dvoretzky_dimension(width: WidthEstimate, diam):
    """``(E||G|| / diameter)**2``."""
    if not (diam > 0 and math.isfinite(diam)):
        raise ArgumentError(f"diameter must be positive and finite, got {diam}")
    return (width.value / diam) ** 2


# --------------------------------------------------------------------------------------
# closed-form rate predictors


@dataclass(frozen=True)
class RatePrediction:
    r_Q_pred: float
    r_M_pred: float
    regime: str
    formula_id: str
    classical_pred: Optional[float] = None


def _regime(rq, rm):
    return "noise_dominated" if rm > rq else "intrinsic"


def _full_space_rates(p, c):
    n, N, delta = p["n"], p["N"], p.get("delta", 0.05)
    loss_kind = p.get("loss_kind", "huber")
    r_q = 0.0 if N >= c["c1"] * n else math.inf
    root = math.sqrt(n / N)
    conf = 1.0 + math.sqrt(math.log(1.0 / delta) / n)
    if loss_kind == "squared":
        beta = max((N * delta) ** -0.25, 1.0)
        r_m = c["c3"] * beta * conf * p.get("sigma_l4", 0.0) * root
    elif loss_kind == "huber":
        r_m = c["c3"] * conf * p.get("sigma_l2", 0.0) * root
    elif loss_kind == "logistic":
        r_m = c["c3"] * math.exp(c["c1"] * p.get("sigma_l2", 0.0)) * conf * root
    else:
        raise ArgumentError(f"unknown loss kind {loss_kind!r}")
    return r_q, r_m, None


def l1_class_r_Q(n, N, alpha, c1=1.0, c2=1.0):
    if N <= c1 * n:
        return alpha / math.sqrt(N) * math.sqrt(math.log(math.e * n / N))
    if N <= c2 * n:
        return alpha / math.sqrt(n)
    return 0.0


def _l1_class_rates(p, c):
    n, N, alpha, delta = p["n"], p["N"], p["alpha"], p.get("delta", 0.05)
    loss_kind = p.get("loss_kind", "huber")
    r_q = l1_class_r_Q(n, N, alpha, c["c1"], c["c2"])
    sqN = math.sqrt(N)
    if loss_kind == "squared":
        s4 = p.get("sigma_l4", 0.0)
        beta = max((N * delta) ** -0.25, 1.0)
        scale = beta * s4
        head = scale ** 2 * math.log(2.0 / delta) / N
    elif loss_kind == "huber":
        s2 = p.get("sigma_l2", 0.0)
        scale = p.get("gamma") or c["c0"] * max(s2, r_q)
        head = s2 ** 2 * math.log(2.0 / delta) / N
    else:
        raise ArgumentError(f"no l1-class rate available for loss {loss_kind!r}")
    if scale > 0 and alpha <= scale * n / sqN:
        tail = scale * alpha / sqN * math.sqrt(math.log(math.e * n * scale / (alpha * sqN)))
    else:
        tail = scale ** 2 * n / N
    return r_q, c["c3"] * math.sqrt(head + tail), None


def persistence_rates(n, N, r, sigma, c1=1.0, c2=1.0):
    """Classical rate rho_N and the optimal-rate terms v1, v2 for ``r B_1^n`` on the cube."""
    if N <= c1 * n * n:
        rho_N = r * r / math.sqrt(N) * math.sqrt(math.log(2.0 * c1 * n / math.sqrt(N)))
    else:
        rho_N = r * r * n / N
    v1 = r * r / N * math.log(2.0 * c1 * n / N) if N <= c1 * n else 0.0
    if sigma > 0 and N <= c2 * n * n * sigma * sigma / (r * r):
        v2 = r * sigma / math.sqrt(N) * math.sqrt(math.log(2.0 * c2 * n * sigma / (math.sqrt(N) * r)))
    else:
        v2 = sigma * sigma * n / N
    return rho_N, v1, v2


def predict_rates(example, params, constants=None) -> RatePrediction:
    """Evaluate closed-form rate displays with configurable constants (default 1).

    ``example`` is ``full_space``, ``l1_class`` or ``persistence_cube``.  For the
    persistence problem the intrinsic and noise terms are ``v1`` and ``v2`` and
    the classical rate ``rho_N`` is reported alongside; those three are rates for
    the excess risk, the others for the L2 estimation error.
    """
    c = {"c0": 1.0, "c1": 1.0, "c2": 1.0, "c3": 1.0}
    c.update(constants or {})
    for key in ("n", "N"):
        if not params.get(key, 0) > 0:
            raise ArgumentError(f"{key} must be positive")
    if example == "full_space":
        rq, rm, classical = _full_space_rates(params, c)
    elif example == "l1_class":
        rq, rm, classical = _l1_class_rates(params, c)
    elif example == "persistence_cube":
        classical, rq, rm = persistence_rates(params["n"], params["N"], params["alpha"],
                                              params.get("sigma_l2", 0.0), c["c1"], c["c2"])
    else:
        raise ArgumentError(f"unknown example {example!r}")
    loss_kind = params.get("loss_kind", "huber")
    fid = example if example == "persistence_cube" else f"{example}/{loss_kind}"
    return RatePrediction(rq, rm, _regime(rq, rm), fid, classical)


# --------------------------------------------------------------------------------------
# default constants


@dataclass(frozen=True)
class ComplexityParams:
    """Constants for the fixed points; ``None`` entries are derived from (kappa0, eps)."""
    kappa0: float = 0.5
    eps: float = 0.1875
    zeta1: Optional[float] = None
    zeta2: Optional[float] = None
    kappa: Optional[float] = None
    delta: float = 0.1
    mc_budget: int = 2000
    lipschitz: float = 1.0
    cap: float = 1e3

    @property
    def zeta1_value(self):
        return self.zeta1 if self.zeta1 is not None else self.kappa0 * self.eps ** 1.5

    @property
    def zeta2_value(self):
        return self.zeta2 if self.zeta2 is not None else self.kappa0 * self.eps

    def theta(self, loss: LossSpec, noise_l2):
        """``eps * kappa0**2 * rho / 16`` with rho the curvature floor near the origin.

        For Huber the floor is the strong-convexity constant on ``(-gamma, gamma)``.
        """
        from .losses import rho
        if loss.kind == "huber":
            curv = 1.0
        else:
            curv = rho(loss, 0.0, noise_l2)
        return self.eps * self.kappa0 ** 2 * curv / 16.0

    def kappa_value(self, loss: LossSpec, noise_l2):
        return self.kappa if self.kappa is not None else self.theta(loss, noise_l2) / 16.0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def lprime_l2(loss: LossSpec, noise: NoiseKind, draws=200_000, seed=0):
    """Monte Carlo estimate of ``||loss'(W)||_2`` (exact for the noise-free case)."""
    if noise.kind == "none" or noise.scale == 0:
        return 0.0
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 5]))
    w = sample_noise(noise, draws, rng, signal=rng.standard_normal(draws))
    return float(np.sqrt(np.mean(loss_deriv(loss, w) ** 2)))


def compute_all(cset: ConstraintSet, N, params: ComplexityParams, loss: LossSpec,
                noise: NoiseKind, design: Optional[DesignKind] = None, rng_seed=0):
    """Every complexity parameter for one configuration, keyed by name."""
    design = design or DesignKind("gaussian_isotropic", cset.dim)
    common = dict(mc_budget=params.mc_budget, rng_seed=rng_seed, design=design, cap=params.cap)
    r1 = solve_fixed_point("r1Q", cset, N, zeta=params.zeta1_value, **common)
    r2 = solve_fixed_point("r2Q", cset, N, zeta=params.zeta2_value, **common)
    kb = solve_fixed_point("kbarN", cset, N, zeta=params.zeta2_value, lipschitz=params.lipschitz, **common)
    l2 = noise_moments(noise)["l2"]
    kappa = params.kappa_value(loss, l2)
    rm = solve_fixed_point("rM_prime", cset, N, kappa=kappa, delta=params.delta, loss=loss,
                           noise=noise, **common)
    r0_val = r0(loss, cset, lprime_l2(loss, noise, seed=rng_seed), N, kappa)
    total = r_M_total(rm, r0_val)
    diam = diameter(cset)
    if math.isfinite(diam):
        w = gaussian_width(cset, 0.5 * diam, reps=params.mc_budget, rng_seed=rng_seed)
        k_F = dvoretzky_dimension(w, diam)
    else:
        k_F = math.inf
    return {"r1Q": r1, "r2Q": r2, "kbarN": kb, "rM_prime": rm, "r0": r0_val, "rM_total": total,
            "r_Q": max(r1.r, r2.r), "k_F": k_F, "k_F_sqrt": math.sqrt(k_F), "kappa": kappa}
