"""Command-line entry point: ``calerm {fit,complexity,smallball,experiment} --config FILE``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.  Diagnostics
go to stderr; stdout carries a single summary line.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import complexity, experiments, smallball
from .erm import fit
from .errors import ArgumentError, CalibrationError, CalermError, ConfigError, DegenerateError, NumericError
from .experiments import CSV_COLUMNS, FLAG_COLUMNS, config_to_dict, fmt, load_config, write_csv
from .synthdata import DesignKind, as_rng, sample_dataset, sample_design

log = logging.getLogger("calerm")

class _StderrHandler(logging.StreamHandler):
    """Writes to whatever ``sys.stderr`` is at emit time, so redirection after setup is honoured."""

    @property
    def stream(self):
        return sys.stderr

    @stream.setter
    def stream(self, value):
        pass


SMALLBALL_DISTRIBUTIONS = ("design", "gaussian", "rademacher", "student_t", "uniform", "laplace")


def _write_echo(cfg, out_dir):
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_fit(cfg, out_dir, threads):
    seed = experiments.trial_seed(cfg.master_seed, 0, 0)
    target = cfg.target()
    sample = sample_dataset(cfg.design, target, cfg.N, seed)
    r_q = experiments.r_Q_for(cfg)
    flags = []
    loss = experiments.resolve_loss(cfg.loss, cfg, sample, r_q, flags)
    res = fit(loss, cfg.set, sample, cfg.solver)
    err = float(np.linalg.norm(res.t_hat - target.t0))
    cols = ["loss_kind", "gamma", "objective", "iterations", "converged", "est_error_l2"]
    cols += [f"t_hat_{j + 1}" for j in range(sample.n)]
    row = {"loss_kind": loss.kind, "gamma": fmt(loss.gamma), "objective": res.objective,
           "iterations": res.iterations, "converged": res.converged, "est_error_l2": err}
    row.update({f"t_hat_{j + 1}": v for j, v in enumerate(res.t_hat)})
    write_csv(os.path.join(out_dir, "fit.csv"), cols, [row])
    for f in flags:
        log.warning("fit flag: %s", f)
    if not res.converged:
        log.warning("solver stopped after %d iterations without meeting the tolerance", res.iterations)
    return f"fit loss={loss.kind} gamma={fmt(loss.gamma) or '-'} objective={res.objective:.6g} " \
           f"iterations={res.iterations} est_error_l2={err:.6g}"


def cmd_complexity(cfg, out_dir, threads):
    loss = cfg.loss
    if isinstance(loss, experiments.HuberAuto):
        seed = experiments.trial_seed(cfg.master_seed, 0, 0)
        sample = sample_dataset(cfg.design, cfg.target(), cfg.N, seed)
        loss = experiments.resolve_loss(loss, cfg, sample, experiments.r_Q_for(cfg), [])
    res = complexity.compute_all(cfg.set, cfg.N, cfg.complexity, loss, cfg.noise, cfg.design,
                                 rng_seed=cfg.master_seed)
    cols = ("quantity", "value", "bracket_lo", "bracket_hi", "mc_std_error", "capped")
    rows = []
    for key in ("r1Q", "r2Q", "kbarN", "rM_prime", "rM_total"):
        fp = res[key]
        rows.append({"quantity": key, "value": fp.r, "bracket_lo": fp.bracket_lo, "bracket_hi": fp.bracket_hi,
                     "mc_std_error": fp.mc_std_error, "capped": fp.capped})
    for key in ("r0", "r_Q", "k_F", "k_F_sqrt", "kappa"):
        rows.append({"quantity": key, "value": res[key], "bracket_lo": "", "bracket_hi": "",
                     "mc_std_error": "", "capped": ""})
    write_csv(os.path.join(out_dir, "complexity.csv"), cols, rows)
    return "complexity " + " ".join(f"{k}={res[k].r if hasattr(res[k], 'r') else res[k]:.6g}"
                                    for k in ("r1Q", "r2Q", "rM_prime", "r0", "rM_total"))


def smallball_draws(spec, design: DesignKind, rng):
    """One-dimensional draws named by the ``smallball`` config section."""
    dist = spec.get("distribution", "design")
    M = int(spec.get("draws", 100_000))
    if dist not in SMALLBALL_DISTRIBUTIONS:
        raise ConfigError("smallball.distribution", f"must be one of {SMALLBALL_DISTRIBUTIONS}")
    if M < 100:
        raise ConfigError("smallball.draws", "need at least 100 draws")
    if dist == "design":
        # marginal of the design along a random unit direction
        u = rng.standard_normal(design.dim)
        u /= np.linalg.norm(u)
        return sample_design(design, M, rng) @ u
    if dist == "gaussian":
        return rng.standard_normal(M)
    if dist == "rademacher":
        return rng.integers(0, 2, size=M) * 2.0 - 1.0
    if dist == "uniform":
        return rng.uniform(-1.0, 1.0, size=M)
    if dist == "laplace":
        return rng.laplace(size=M)
    df = float(spec.get("df", 5.0))
    if not df > 4:
        raise ConfigError("smallball.df", "student_t needs df > 4 for a finite fourth moment")
    return rng.standard_t(df, size=M)


def cmd_smallball(cfg, out_dir, threads):
    spec = dict(cfg.smallball)
    allowed = {"distribution", "draws", "kappa_grid", "theta", "df"}
    for k in spec:
        if k not in allowed:
            raise ConfigError(f"smallball.{k}", "unknown key")
    grid = spec.get("kappa_grid", [round(0.05 * i, 2) for i in range(1, 21)])
    if not isinstance(grid, list) or not grid or any(not isinstance(k, (int, float)) or k < 0 for k in grid):
        raise ConfigError("smallball.kappa_grid", "expected a non-empty list of nonnegative numbers")
    theta = float(spec.get("theta", 0.25))
    if not 0 < theta < 1:
        raise ConfigError("smallball.theta", "must lie in (0, 1)")
    rng = as_rng(np.random.SeedSequence([cfg.master_seed, 6]))
    z = smallball_draws(spec, cfg.design, rng)
    curve = smallball.smallball_curve(z, grid)
    write_csv(os.path.join(out_dir, "smallball.csv"), ("kappa", "probability"),
              [{"kappa": k, "probability": p} for k, p in zip(grid, curve)])
    l2 = float(np.sqrt(np.mean(z ** 2)))
    l4 = float(np.mean(z ** 4) ** 0.25)
    cert = smallball.paley_zygmund_certificate(l4 / l2, theta)
    achieved = float(smallball.smallball_curve(z, [cert.kappa0])[0])
    holds = achieved >= cert.eps
    write_csv(os.path.join(out_dir, "certificate.csv"), ("kappa0", "eps", "empirical_probability", "holds"),
              [{"kappa0": cert.kappa0, "eps": cert.eps, "empirical_probability": achieved, "holds": holds}])
    return f"smallball kappa0={cert.kappa0:.6g} eps={cert.eps:.6g} empirical={achieved:.6g} " \
           f"certificate={'holds' if holds else 'fails'}"


def _plot(out, cfg, out_dir):
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "calerm"
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3.5))
    results = out["results"]
    labels = [experiments.loss_label(c) for c in cfg.loss_choices()]
    xs = list(cfg.sweep.values) if cfg.sweep else [0]
    for j, label in enumerate(labels):
        med = [float(np.median([r.est_error_l2 for r in results if r.sweep_index == i and r.loss_index == j]))
               for i in range(len(xs))]
        ax.plot(xs, med, marker="o", label=label)
    ax.set_xlabel(cfg.sweep.parameter if cfg.sweep else "")
    ax.set_ylabel("median est_error_l2")
    if cfg.sweep and cfg.sweep.parameter == "N":
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(out_dir, "summary.svg"), format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_experiment(cfg, out_dir, threads, plot=False):
    out = experiments.run_experiment(cfg, threads)
    rows = experiments.result_rows(cfg, out["points"], out["results"])
    write_csv(os.path.join(out_dir, "results.csv"), CSV_COLUMNS, rows)
    write_csv(os.path.join(out_dir, "flags.csv"), FLAG_COLUMNS, experiments.flag_rows(cfg, out["results"]))
    table = out.get("table") or []
    if table:
        cols = list(table[0].keys())
        write_csv(os.path.join(out_dir, "summary.csv"), cols, table)
    if plot:
        _plot(out, cfg, out_dir)
    nflag = sum(r.flagged for r in out["results"])
    if nflag:
        log.warning("%d trial fits flagged, see flags.csv", nflag)
    extra = ""
    if cfg.experiment == "rate_fit":
        extra = f" slope={out['slope']:.6g}" + (" degenerate" if out["degenerate"] else "")
    elif cfg.experiment == "persistence":
        extra = f" shape_ok={out['shape_ok']}"
    return f"experiment {cfg.experiment_id} kind={cfg.experiment} rows={len(rows)} flagged={nflag}{extra}"


COMMANDS = {"fit": cmd_fit, "complexity": cmd_complexity, "smallball": cmd_smallball,
            "experiment": cmd_experiment}


def build_parser():
    p = argparse.ArgumentParser(prog="calerm", description="Calibrated ERM: fits, complexity estimates, "
                                "small-ball diagnostics and Monte Carlo experiments.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="JSON configuration file")
    p.add_argument("--out", default="./out", help="output directory (default ./out)")
    p.add_argument("--seed", type=int, default=None, help="master seed; falls back to $CALERM_SEED")
    p.add_argument("--threads", type=int, default=None, help="worker processes (default: all cores)")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, dotted keys and JSON values (repeatable)")
    p.add_argument("--plot", action="store_true", help="also write summary.svg (experiment only)")
    return p


def _seed(args):
    if args.seed is not None:
        return args.seed
    env = os.environ.get("CALERM_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError("CALERM_SEED", f"not an integer: {env!r}") from None
    return None


def main(argv=None):
    if not log.handlers:
        handler = _StderrHandler()
        handler.setFormatter(logging.Formatter("calerm: %(levelname)s: %(message)s"))
        log.addHandler(handler)
        log.setLevel(logging.INFO)
        log.propagate = False
    args = build_parser().parse_args(argv)
    try:
        seed = _seed(args)
        if seed is not None and not 0 <= seed < 2 ** 64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads", "must be at least 1")
        cfg = load_config(args.config, args.override, seed)
        try:
            os.makedirs(args.out, exist_ok=True)
        except OSError as err:
            raise ConfigError("--out", f"cannot create {args.out}: {err}") from None
        _write_echo(cfg, args.out)
        if args.command == "experiment":
            summary = cmd_experiment(cfg, args.out, args.threads, args.plot)
        else:
            summary = COMMANDS[args.command](cfg, args.out, args.threads)
    except ConfigError as err:
        log.error("config error: %s", err)
        return 2
    except (NumericError, CalibrationError, DegenerateError, FloatingPointError) as err:
        log.error("numerical failure: %s", err)
        return 3
    except (ArgumentError, CalermError) as err:
        log.error("invalid input: %s", err)
        return 2
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
