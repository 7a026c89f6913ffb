"""Monte Carlo experiments: repeated ERM fits on synthetic data, written as CSV.

Every trial draws its data from a seed that is a pure function of
``(master_seed, sweep_index, trial_index)``, so the output does not depend on
how trials are spread over worker processes.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .complexity import ComplexityParams, persistence_rates, solve_fixed_point
from .erm import SolverOptions, erm_certificate, fit
from .errors import ArgumentError, CalibrationError, ConfigError
from .geometry import ConstraintSet
from .losses import LossSpec, calibrate_huber, huber, loss_value
from .synthdata import (DesignKind, NoiseKind, TargetSpec, make_t0, noise_moments, sample_dataset,
                        sample_design, sample_noise)

EXPERIMENTS = ("trials", "regime_sweep", "loss_comparison", "rate_fit", "persistence")
SWEEP_PARAMS = ("sigma", "N", "n")
CSV_COLUMNS = ("experiment_id", "sweep_param", "sweep_value", "trial", "seed", "loss_kind", "gamma",
               "N", "n", "alpha", "sigma_l2", "noise_kind", "est_error_l2", "excess_risk", "converged",
               "runtime_ms")
QUANTILES = (0.5, 0.25, 0.75, 0.99)
MAD_SCALE = 1.4826


@dataclass(frozen=True)
class HuberAuto:
    """Huber loss calibrated per dataset: ``gamma = c0 * max(noise level, r_Q)``.

    ``oracle`` uses the true L2 norm of the noise, ``plugin`` a MAD estimate from
    a pilot fit.  ``zeta`` and ``mc_budget`` control the r_Q estimate.
    """
    c0: float = 1.0
    mode: str = "oracle"
    zeta: float = 1.0
    mc_budget: int = 500

    def __post_init__(self):
        if not self.c0 > 0:
            raise ArgumentError(f"huber_auto needs c0 > 0, got {self.c0!r}")
        if self.mode not in ("oracle", "plugin"):
            raise ArgumentError(f"huber_auto mode must be oracle or plugin, got {self.mode!r}")
        if not self.zeta > 0:
            raise ArgumentError(f"huber_auto needs zeta > 0, got {self.zeta!r}")
        if int(self.mc_budget) != self.mc_budget or self.mc_budget < 2:
            raise ArgumentError(f"huber_auto needs mc_budget >= 2, got {self.mc_budget!r}")

    kind = "huber_auto"

    def to_dict(self):
        return {"huber_auto": {"c0": self.c0, "mode": self.mode, "zeta": self.zeta,
                               "mc_budget": self.mc_budget}}


LossChoice = Union[LossSpec, HuberAuto]


@dataclass(frozen=True)
class Sweep:
    parameter: str
    values: tuple

    def __post_init__(self):
        if self.parameter not in SWEEP_PARAMS:
            raise ArgumentError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {self.parameter!r}")
        vals = tuple(self.values)
        if not vals:
            raise ArgumentError("sweep values must be non-empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ArgumentError("sweep values must be strictly increasing")
        if self.parameter in ("N", "n") and any(int(v) != v or v < 1 for v in vals):
            raise ArgumentError(f"sweep values for {self.parameter} must be positive integers")
        if self.parameter == "sigma" and any(v < 0 for v in vals):
            raise ArgumentError("sweep values for sigma must be nonnegative")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ExperimentConfig:
    design: DesignKind
    t0: object
    noise: NoiseKind
    set: ConstraintSet
    loss: LossChoice
    N: int
    solver: SolverOptions = SolverOptions()
    trials: int = 100
    master_seed: int = 0
    sweep: Optional[Sweep] = None
    experiment: str = "trials"
    experiment_id: str = "experiment"
    losses: tuple = ()
    holdout: int = 100_000
    timing: bool = False
    threshold: float = 1.5
    alpha_rule: Optional[dict] = None
    complexity: ComplexityParams = ComplexityParams()
    smallball: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.trials) != self.trials or self.trials < 1:
            raise ArgumentError(f"trials must be a positive integer, got {self.trials!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ArgumentError(f"N must be a positive integer, got {self.N!r}")
        if int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ArgumentError(f"master_seed must be a nonnegative integer, got {self.master_seed!r}")
        if self.experiment not in EXPERIMENTS:
            raise ArgumentError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if int(self.holdout) != self.holdout or self.holdout < 2:
            raise ArgumentError(f"holdout must be an integer >= 2, got {self.holdout!r}")
        if self.design.dim != self.set.dim:
            raise ArgumentError("design dim and set dim differ")
        if self.experiment == "loss_comparison" and len(self.losses) < 2:
            raise ArgumentError("loss_comparison needs at least two losses")
        if self.experiment == "regime_sweep" and (self.sweep is None or self.sweep.parameter != "sigma"):
            raise ArgumentError("regime_sweep needs a sweep over sigma")
        if self.experiment == "rate_fit" and (self.sweep is None or self.sweep.parameter != "N"):
            raise ArgumentError("rate_fit needs a sweep over N")
        if self.experiment == "persistence" and (self.sweep is None or self.sweep.parameter != "n"):
            raise ArgumentError("persistence needs a sweep over n")
        if self.sweep is not None and self.sweep.parameter == "n" and not isinstance(self.t0, dict):
            raise ArgumentError("sweeping n needs t0 given as {kind, l2}")
        make_t0(self.t0, self.design.dim)  # validates

    def target(self) -> TargetSpec:
        return TargetSpec(make_t0(self.t0, self.design.dim), self.noise)

    def at_sweep(self, index):
        """Configuration with the sweep parameter fixed to its ``index``-th value."""
        if self.sweep is None:
            return self
        v = self.sweep.values[index]
        if self.sweep.parameter == "sigma":
            return replace(self, noise=self.noise.with_scale(float(v)))
        if self.sweep.parameter == "N":
            return replace(self, N=int(v))
        n = int(v)
        cset = self.set.with_dim(n)
        if self.alpha_rule is not None and cset.alpha is not None:
            cset = ConstraintSet(cset.kind, n, alpha_from_rule(self.alpha_rule, n), cset.r)
        return replace(self, design=self.design.with_dim(n), set=cset)

    @property
    def sweep_points(self):
        return 1 if self.sweep is None else len(self.sweep.values)

    def loss_choices(self):
        return tuple(self.losses) if self.experiment == "loss_comparison" else (self.loss,)


def alpha_from_rule(rule, n):
    """``alpha = scale * n**exponent``."""
    return float(rule.get("scale", 1.0)) * float(n) ** float(rule.get("exponent", 0.0))


# --------------------------------------------------------------------------------------
# config (de)serialisation


_TOP_KEYS = {"design", "t0", "noise", "set", "loss", "N", "solver", "trials", "master_seed", "sweep",
             "experiment", "experiment_id", "losses", "holdout", "timing", "threshold", "alpha_rule",
             "complexity", "smallball"}


def _offending_key(prefix, d, err):
    msg = str(err)
    if isinstance(d, dict):
        for k in d:
            if str(k) in msg:
                return f"{prefix}.{k}"
    return prefix


def _section(prefix, d, build):
    if not isinstance(d, dict):
        raise ConfigError(prefix, "expected an object")
    try:
        return build(d)
    except (ArgumentError, ValueError) as err:
        raise ConfigError(_offending_key(prefix, d, err), str(err)) from None
    except (KeyError, TypeError) as err:
        raise ConfigError(prefix, f"missing or malformed field: {err}") from None


def _known(prefix, d, allowed):
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{prefix}.{k}" if prefix else k, "unknown key")


def loss_from_dict(d, prefix="loss") -> LossChoice:
    if isinstance(d, dict) and "huber_auto" in d:
        _known(prefix, d, {"huber_auto"})
        sub = d["huber_auto"] or {}
        _known(f"{prefix}.huber_auto", sub, {"c0", "mode", "zeta", "mc_budget"})
        return _section(f"{prefix}.huber_auto", sub, lambda s: HuberAuto(**s))
    if isinstance(d, dict):
        _known(prefix, d, {"kind", "gamma"})
    return _section(prefix, d, LossSpec.from_dict)


def loss_to_dict(loss: LossChoice):
    return loss.to_dict()


def config_from_dict(d) -> ExperimentConfig:
    """Parse and validate a configuration; errors carry the offending key."""
    if not isinstance(d, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    _known("", d, _TOP_KEYS)
    for key in ("design", "t0", "noise", "set", "loss", "N"):
        if key not in d:
            raise ConfigError(key, "required key is missing")
    kw = {}
    _known("design", d["design"], {"kind", "dim", "df"})
    kw["design"] = _section("design", d["design"], DesignKind.from_dict)
    _known("noise", d["noise"], {"kind", "scale", "df", "tail_index"})
    kw["noise"] = _section("noise", d["noise"], NoiseKind.from_dict)
    _known("set", d["set"], {"kind", "dim", "alpha", "r"})
    kw["set"] = _section("set", d["set"], ConstraintSet.from_dict)
    kw["loss"] = loss_from_dict(d["loss"])
    kw["t0"] = d["t0"]
    kw["N"] = d["N"]
    if "solver" in d:
        _known("solver", d["solver"], set(SolverOptions.__dataclass_fields__))
        kw["solver"] = _section("solver", d["solver"], SolverOptions.from_dict)
    if d.get("sweep") is not None:
        _known("sweep", d["sweep"], {"parameter", "values"})
        kw["sweep"] = _section("sweep", d["sweep"], lambda s: Sweep(s["parameter"], tuple(s["values"])))
    if "losses" in d:
        if not isinstance(d["losses"], list):
            raise ConfigError("losses", "expected a list")
        kw["losses"] = tuple(loss_from_dict(x, f"losses[{i}]") for i, x in enumerate(d["losses"]))
    if "complexity" in d:
        _known("complexity", d["complexity"], set(ComplexityParams.__dataclass_fields__))
        kw["complexity"] = _section("complexity", d["complexity"], ComplexityParams.from_dict)
    for key in ("trials", "master_seed", "experiment", "experiment_id", "holdout", "timing", "threshold",
                "alpha_rule", "smallball"):
        if key in d:
            kw[key] = d[key]
    if "timing" in kw and not isinstance(kw["timing"], bool):
        raise ConfigError("timing", "expected true or false")
    try:
        cfg = ExperimentConfig(**kw)
    except (ArgumentError, ValueError, TypeError) as err:
        raise ConfigError(_offending_key("", kw, err).lstrip(".") or "<root>", str(err)) from None
    return cfg


def config_to_dict(cfg: ExperimentConfig):
    d = {
        "experiment": cfg.experiment,
        "experiment_id": cfg.experiment_id,
        "design": cfg.design.to_dict(),
        "t0": cfg.t0.tolist() if isinstance(cfg.t0, np.ndarray) else copy.deepcopy(cfg.t0),
        "noise": cfg.noise.to_dict(),
        "set": cfg.set.to_dict(),
        "loss": loss_to_dict(cfg.loss),
        "N": cfg.N,
        "solver": cfg.solver.to_dict(),
        "trials": cfg.trials,
        "master_seed": cfg.master_seed,
        "sweep": None if cfg.sweep is None else {"parameter": cfg.sweep.parameter,
                                                  "values": list(cfg.sweep.values)},
        "losses": [loss_to_dict(x) for x in cfg.losses],
        "holdout": cfg.holdout,
        "timing": cfg.timing,
        "threshold": cfg.threshold,
        "alpha_rule": copy.deepcopy(cfg.alpha_rule),
        "complexity": cfg.complexity.to_dict(),
        "smallball": copy.deepcopy(cfg.smallball),
    }
    return d


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(d, overrides):
    """Apply ``KEY=VALUE`` strings (dotted keys, JSON values) to a raw config dict."""
    d = copy.deepcopy(d)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like KEY=VALUE")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = d
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = _parse_value(text)
    return d


def load_config(path, overrides=(), seed=None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as err:
        raise ConfigError("--config", f"cannot read {path}: {err}") from None
    except json.JSONDecodeError as err:
        raise ConfigError("--config", f"invalid JSON: {err}") from None
    raw = apply_overrides(raw, overrides)
    if seed is not None:
        raw["master_seed"] = seed
    return config_from_dict(raw)


# --------------------------------------------------------------------------------------
# single trials


@dataclass
class TrialResult:
    est_error_l2: float
    excess_risk: float
    excess_se: float
    runtime_ms: Optional[float]
    seed: int
    loss_kind: str
    gamma: Optional[float]
    converged: bool
    certified: bool
    trial: int = 0
    sweep_index: int = 0
    loss_index: int = 0
    flags: list = field(default_factory=list)

    @property
    def flagged(self):
        return bool(self.flags)


def trial_seed(master_seed, sweep_index, trial_index):
    """64-bit seed derived from ``(master_seed, sweep_index, trial_index)``."""
    ss = np.random.SeedSequence([int(master_seed), int(sweep_index), int(trial_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def estimate_r_Q(cfg: ExperimentConfig, auto: HuberAuto):
    """``max(r1Q, r2Q)`` with the calibration's zeta, seeded by the master seed."""
    common = dict(mc_budget=auto.mc_budget, rng_seed=cfg.master_seed, design=cfg.design,
                  cap=cfg.complexity.cap)
    r1 = solve_fixed_point("r1Q", cfg.set, cfg.N, zeta=auto.zeta, **common)
    r2 = solve_fixed_point("r2Q", cfg.set, cfg.N, zeta=auto.zeta, **common)
    return max(r1.r, r2.r)


def _mad(x):
    return float(np.median(np.abs(x - np.median(x))))


def resolve_loss(choice: LossChoice, cfg, sample, r_q, flags):
    if isinstance(choice, LossSpec):
        return choice
    if choice.mode == "oracle":
        sigma = noise_moments(cfg.noise)["l2"]
    else:
        pilot_gamma = _mad(sample.responses) or float(np.std(sample.responses)) or 1.0
        pilot = fit(huber(pilot_gamma), cfg.set, sample, cfg.solver)
        resid = sample.responses - sample.design @ pilot.t_hat
        sigma = MAD_SCALE * _mad(resid)
    if not math.isfinite(sigma):
        raise CalibrationError("noise level is not finite")
    try:
        return calibrate_huber(sigma, r_q, choice.c0)
    except CalibrationError:
        # noise-free and zero complexity: every kink gives the same minimiser
        flags.append("calibration_degenerate")
        return huber(1.0)


def holdout_excess_risk(loss: LossSpec, t_hat, cfg: ExperimentConfig, seed, chunk=20_000):
    """Mean and standard error of ``loss(<t_hat,X>-Y) - loss(<t0,X>-Y)`` on fresh draws.

    For the Gaussian design with independent noise ``<t_hat - t0, X>`` is exactly
    ``||t_hat - t0|| * Z`` with Z standard normal, which is used directly.
    """
    t0 = make_t0(cfg.t0, cfg.design.dim)
    d = np.asarray(t_hat) - t0
    rng = np.random.default_rng([seed, 1])
    M = int(cfg.holdout)
    diffs = np.empty(M)
    if cfg.design.kind == "gaussian_isotropic" and cfg.noise.kind != "dependent_sign":
        z = rng.standard_normal(M) * float(np.linalg.norm(d))
        w = sample_noise(cfg.noise, M, rng)
        diffs[:] = loss_value(loss, z - w) - loss_value(loss, -w)
    else:
        for start in range(0, M, chunk):
            m = min(chunk, M - start)
            X = sample_design(cfg.design, m, rng)
            w = sample_noise(cfg.noise, m, rng, signal=X @ t0)
            diffs[start:start + m] = loss_value(loss, X @ d - w) - loss_value(loss, -w)
    return float(diffs.mean()), float(diffs.std(ddof=1) / math.sqrt(M))


def _fit_one(choice, cfg, sample, seed, r_q, t0):
    start = time.perf_counter()
    flags = []
    loss = resolve_loss(choice, cfg, sample, r_q, flags)
    res = fit(loss, cfg.set, sample, cfg.solver)
    elapsed = (time.perf_counter() - start) * 1e3
    err = float(np.linalg.norm(res.t_hat - t0))
    excess, se = holdout_excess_risk(loss, res.t_hat, cfg, seed)
    cert = erm_certificate(loss, cfg.set, sample, res.t_hat, t0=t0 if _feasible(cfg.set, t0) else None,
                           rng=np.random.default_rng([seed, 2]))
    if not res.converged:
        flags.append("not_converged")
    if not cert:
        flags.append("certificate_failed")
    if excess < -4.0 * se:
        flags.append("negative_excess_risk")
    return TrialResult(err, excess, se, elapsed if cfg.timing else None, seed, choice.kind,
                       loss.gamma, res.converged, cert, flags=flags)


def _feasible(cset, t):
    from .geometry import contains
    return contains(cset, t, tol=1e-9)


def _trial_task(args):
    cfg, sweep_index, trial_index, r_q = args
    seed = trial_seed(cfg.master_seed, sweep_index, trial_index)
    target = cfg.target()
    sample = sample_dataset(cfg.design, target, cfg.N, seed)
    out = []
    for j, choice in enumerate(cfg.loss_choices()):
        r = _fit_one(choice, cfg, sample, seed, r_q, target.t0)
        r.trial, r.sweep_index, r.loss_index = trial_index, sweep_index, j
        out.append(r)
    return out


def r_Q_for(cfg):
    autos = [c for c in cfg.loss_choices() if isinstance(c, HuberAuto)]
    return estimate_r_Q(cfg, autos[0]) if autos else 0.0


def run_trial(config: ExperimentConfig, trial_index, sweep_index=0, r_q=None) -> TrialResult:
    """One fit of ``config.loss`` on the dataset of ``(sweep_index, trial_index)``."""
    cfg = replace(config.at_sweep(sweep_index), experiment="trials")
    if r_q is None:
        r_q = r_Q_for(cfg)
    return _trial_task((cfg, sweep_index, trial_index, r_q))[0]


def default_workers():
    return os.cpu_count() or 1


def run_all(config: ExperimentConfig, threads=None):
    """All trials at every sweep point, ordered by (sweep index, trial, loss)."""
    points = [config.at_sweep(i) for i in range(config.sweep_points)]
    rqs = [r_Q_for(p) for p in points]
    tasks = [(p, i, t, rq) for i, (p, rq) in enumerate(zip(points, rqs)) for t in range(config.trials)]
    threads = default_workers() if threads is None else int(threads)
    if threads < 1:
        raise ArgumentError("threads must be at least 1")
    if threads == 1 or len(tasks) == 1:
        nested = [_trial_task(t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * threads))
        with ProcessPoolExecutor(max_workers=threads) as pool:
            nested = list(pool.map(_trial_task, tasks, chunksize=chunk))
    return points, [r for group in nested for r in group]


# --------------------------------------------------------------------------------------
# output


def fmt(x):
    """Float with 17 significant digits; empty for ``None``."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def result_rows(config: ExperimentConfig, points, results):
    rows = []
    param = config.sweep.parameter if config.sweep else None
    for r in results:
        p = points[r.sweep_index]
        rows.append({
            "experiment_id": config.experiment_id,
            "sweep_param": param or "",
            "sweep_value": fmt(config.sweep.values[r.sweep_index]) if param else "",
            "trial": str(r.trial),
            "seed": str(r.seed),
            "loss_kind": r.loss_kind,
            "gamma": fmt(r.gamma),
            "N": str(p.N),
            "n": str(p.design.dim),
            "alpha": fmt(p.set.alpha),
            "sigma_l2": fmt(noise_moments(p.noise)["l2"]),
            "noise_kind": p.noise.kind,
            "est_error_l2": fmt(r.est_error_l2),
            "excess_risk": fmt(r.excess_risk),
            "converged": fmt(r.converged),
            "runtime_ms": fmt(r.runtime_ms),
        })
    return rows


def write_csv(path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (v if isinstance(v, str) else fmt(v)) for k, v in row.items()})


def flag_rows(config, results):
    return [{"experiment_id": config.experiment_id, "sweep_index": str(r.sweep_index), "trial": str(r.trial),
             "loss_kind": r.loss_kind, "flag": f} for r in results for f in r.flags]


FLAG_COLUMNS = ("experiment_id", "sweep_index", "trial", "loss_kind", "flag")


# --------------------------------------------------------------------------------------
# aggregate experiments


def quantiles(values):
    v = np.asarray(values, dtype=float)
    return {f"q{int(q * 100):02d}": float(np.quantile(v, q)) for q in QUANTILES}


def _group(results, key):
    out = {}
    for r in results:
        out.setdefault(key(r), []).append(r)
    return out


def regime_sweep(config: ExperimentConfig, threads=None):
    """Per sigma value: quantiles of the estimation error over trials."""
    points, results = run_all(config, threads)
    table = []
    for i, group in sorted(_group(results, lambda r: r.sweep_index).items()):
        q = quantiles([r.est_error_l2 for r in group])
        table.append({"sigma": config.sweep.values[i], "sigma_l2": noise_moments(points[i].noise)["l2"],
                      "median": q["q50"], "q25": q["q25"], "q75": q["q75"], "q99": q["q99"],
                      "flagged": sum(r.flagged for r in group)})
    return {"points": points, "results": results, "table": table}


def loss_comparison(config: ExperimentConfig, threads=None):
    """Median and 0.99-quantile of the error per loss, every loss fit on the same datasets."""
    points, results = run_all(config, threads)
    table = []
    for (i, j), group in sorted(_group(results, lambda r: (r.sweep_index, r.loss_index)).items()):
        errs = [r.est_error_l2 for r in group]
        table.append({"sweep_index": i, "loss": loss_label(config.losses[j]),
                      "median": float(np.median(errs)), "q99": float(np.quantile(errs, 0.99)),
                      "flagged": sum(r.flagged for r in group)})
    return {"points": points, "results": results, "table": table}


def loss_label(choice):
    if isinstance(choice, HuberAuto):
        return f"huber_auto_{choice.mode}"
    return choice.kind if choice.gamma is None else f"huber_{choice.gamma:g}"



def rate_fit(config: ExperimentConfig, threads=None):
    """Least-squares line through ``(log N, log median error)``; flagged when errors vanish."""
    points, results = run_all(config, threads)
    Ns = np.array(config.sweep.values, dtype=float)
    med = np.array([np.median([r.est_error_l2 for r in results if r.sweep_index == i])
                    for i in range(len(Ns))])
    out = {"points": points, "results": results, "N": Ns.tolist(), "median": med.tolist()}
    if len(Ns) < 2 or np.any(med <= 1e-12) or not np.all(np.isfinite(med)):
        out.update(slope=math.nan, intercept=math.nan, r2=math.nan, degenerate=True)
        return out
    x, y = np.log(Ns), np.log(med)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    out.update(slope=float(slope), intercept=float(intercept), r2=r2, degenerate=False)
    return out


def persistence_experiment(config: ExperimentConfig, threads=None, constants=None):
    """Achieved excess risk on ``alpha B_1^n`` next to the classical and optimal rate displays."""
    c = {"c1": 1.0, "c2": 1.0}
    c.update(constants or {})
    points, results = run_all(config, threads)
    table = []
    for i, p in enumerate(points):
        group = [r for r in results if r.sweep_index == i]
        n, N, alpha = p.design.dim, p.N, p.set.alpha
        sigma = noise_moments(p.noise)["l2"]
        rho_N, v1, v2 = persistence_rates(n, N, alpha, sigma, c["c1"], c["c2"])
        med_excess = float(np.median([r.excess_risk for r in group]))
        v = max(v1, v2)
        table.append({"n": n, "N": N, "alpha": alpha, "median_error": float(np.median([r.est_error_l2 for r in group])),
                      "median_excess": med_excess, "rho_N": rho_N, "v1": v1, "v2": v2,
                      "ratio_optimal": med_excess / v if v > 0 else math.nan,
                      "ratio_classical": med_excess / rho_N if rho_N > 0 else math.nan})
    ratios = [row["ratio_optimal"] for row in table if math.isfinite(row["ratio_optimal"]) and row["ratio_optimal"] > 0]
    shape_ok = bool(ratios) and max(ratios) / min(ratios) <= 3.0
    return {"points": points, "results": results, "table": table, "shape_ok": shape_ok}


def run_experiment(config: ExperimentConfig, threads=None):
    """Dispatch on ``config.experiment``; always returns points, results and a summary table."""
    if config.experiment == "regime_sweep":
        return regime_sweep(config, threads)
    if config.experiment == "loss_comparison":
        return loss_comparison(config, threads)
    if config.experiment == "rate_fit":
        out = rate_fit(config, threads)
        out["table"] = [{"N": N, "median": m} for N, m in zip(out["N"], out["median"])]
        return out
    if config.experiment == "persistence":
        return persistence_experiment(config, threads)
    points, results = run_all(config, threads)
    table = []
    for i, group in sorted(_group(results, lambda r: r.sweep_index).items()):
        q = quantiles([r.est_error_l2 for r in group])
        row = {"sweep_index": i, "median": q["q50"], "q25": q["q25"], "q75": q["q75"], "q99": q["q99"],
               "flagged": sum(r.flagged for r in group)}
        if config.sweep is not None:
            row["sweep_value"] = config.sweep.values[i]
        table.append(row)
    return {"points": points, "results": results, "table": table}

