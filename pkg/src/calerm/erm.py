"""Empirical risk minimisation over a constraint set by projected gradient descent."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .decomposition import Sample
from .errors import ArgumentError, NumericError
from .geometry import ConstraintSet, contains, project, sample_feasible
from .losses import LossSpec, loss_deriv, loss_value

STEP_RULES = ("fixed_inverse_smoothness", "backtracking")


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 5000
    tol: float = 1e-10
    step_rule: str = "fixed_inverse_smoothness"
    backtracking_shrink: float = 0.5

    def __post_init__(self):
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ArgumentError(f"max_iters must be a positive integer, got {self.max_iters!r}")
        if not self.tol > 0:
            raise ArgumentError(f"tol must be positive, got {self.tol!r}")
        if self.step_rule not in STEP_RULES:
            raise ArgumentError(f"unknown step rule {self.step_rule!r}")
        if not 0 < self.backtracking_shrink < 1:
            raise ArgumentError("backtracking_shrink must lie in (0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class FitResult:
    t_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool


def _check(t, sample):
    t = np.asarray(t, dtype=float)
    if t.shape != (sample.n,):
        raise ArgumentError(f"parameter of shape {t.shape} for a design with {sample.n} columns")
    return t


def empirical_risk(spec: LossSpec, t, sample: Sample):
    t = _check(t, sample)
    return float(np.mean(loss_value(spec, sample.design @ t - sample.responses)))


def gram_top_eigenvalue(X, iters=50, seed=0):
    """Largest eigenvalue of ``X^T X / N`` by power iteration."""
    N = X.shape[0]
    v = np.random.default_rng(seed).standard_normal(X.shape[1])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = X.T @ (X @ v) / N
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return 0.0
        v = w / lam
    return lam


def _least_squares_cg(sample, t_init, opts):
    X, y = sample.design, sample.responses
    n = sample.n
    op = LinearOperator((n, n), matvec=lambda v: X.T @ (X @ v), dtype=float)
    count = [0]

    def tick(_):
        count[0] += 1

    t, info = cg(op, X.T @ y, x0=t_init, rtol=1e-12, atol=0.0, maxiter=max(10 * n, 100), callback=tick)
    if not np.all(np.isfinite(t)):
        raise NumericError("conjugate gradient produced non-finite iterates")
    return FitResult(t, empirical_risk(SQUARED_SPEC, t, sample), count[0], info == 0)


SQUARED_SPEC = LossSpec("squared")


def fit(spec: LossSpec, cset: ConstraintSet, sample: Sample, opts: SolverOptions | None = None,
        t_init=None, trace=None) -> FitResult:
    """Minimise the empirical risk of ``t -> <t, X>`` over ``cset``.

    Projected gradient with step ``1/L`` where ``L = sup loss'' * lambda_max(X^T X / N)``,
    or with backtracking.  Stops once the relative decrease of the objective drops
    below ``opts.tol``.  If ``trace`` is a list, every accepted objective value is
    appended to it.
    """
    opts = opts or SolverOptions()
    if cset.dim != sample.n:
        raise ArgumentError(f"set lives in R^{cset.dim} but design has {sample.n} columns")
    t = np.zeros(sample.n) if t_init is None else _check(t_init, sample).copy()
    if not contains(cset, t, tol=1e-10):
        raise ArgumentError("t_init is not feasible")

    if spec.kind == "squared" and cset.kind == "full_space":
        res = _least_squares_cg(sample, t, opts)
        if trace is not None:
            trace.append(res.objective)
        return res

    X, y = sample.design, sample.responses
    N = sample.N

    def objective(res):
        return float(np.mean(loss_value(spec, res)))

    resid = X @ t - y
    obj = objective(resid)
    if not np.isfinite(obj):
        raise NumericError("non-finite objective at the initial point")
    if trace is not None:
        trace.append(obj)

    smooth = spec.curvature_bound * gram_top_eigenvalue(X)
    if smooth == 0.0:
        return FitResult(t, obj, 0, True)
    step = 1.0 / smooth
    backtrack = opts.step_rule == "backtracking"

    converged = False
    it = 0
    for it in range(1, opts.max_iters + 1):
        grad = X.T @ loss_deriv(spec, resid) / N
        if backtrack:
            step = step / opts.backtracking_shrink
            while True:
                t_new = project(cset, t - step * grad)
                diff = t_new - t
                resid_new = X @ t_new - y
                obj_new = objective(resid_new)
                bound = obj + grad @ diff + (diff @ diff) / (2.0 * step)
                if obj_new <= bound + 1e-15 * abs(obj) or not np.any(diff):
                    break
                step *= opts.backtracking_shrink
        else:
            t_new = project(cset, t - step * grad)
            resid_new = X @ t_new - y
            obj_new = objective(resid_new)
        if not np.isfinite(obj_new):
            raise NumericError(f"non-finite objective at iteration {it}")
        decrease = obj - obj_new
        if obj_new <= obj:
            t, resid = t_new, resid_new
            obj = obj_new
            if trace is not None:
                trace.append(obj)
        if obj == 0.0 or decrease <= opts.tol * abs(obj + max(decrease, 0.0)):
            converged = True
            break

    return FitResult(t, empirical_risk(spec, t, sample), it, converged)


def erm_certificate(spec: LossSpec, cset: ConstraintSet, sample: Sample, t_hat, t0=None,
                    n_random=100, rng=None, slack=1e-8):
    """Check that ``t_hat`` beats a batch of reference points in empirical risk.

    References are the origin, ``t0`` when given, and ``n_random`` random feasible
    points.  Returns ``True`` when no reference has smaller risk (beyond ``slack``).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    best = empirical_risk(spec, t_hat, sample)
    scale = 1.0 if t0 is None else max(1.0, float(np.linalg.norm(t0)))
    refs = [np.zeros(sample.n)]
    if t0 is not None:
        refs.append(np.asarray(t0, dtype=float))
    refs.extend(sample_feasible(cset, rng, n_random, scale=scale))
    resid = np.stack(refs) @ sample.design.T - sample.responses
    risks = np.mean(loss_value(spec, resid), axis=1)
    return bool(best <= risks.min() + slack)
