"""Synthetic regression data with isotropic designs and symmetric noise.

Responses follow ``Y = <t0, X> + W`` with ``W`` independent of ``X``
(except for the experimental ``dependent_sign`` noise).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .decomposition import Sample
from .errors import ArgumentError

DESIGN_KINDS = ("gaussian_isotropic", "rademacher_cube", "student_t_isotropic")
NOISE_KINDS = ("none", "gaussian", "student_t", "symmetrized_pareto", "dependent_sign")


def as_rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class DesignKind:
    kind: str
    dim: int
    df: Optional[float] = None

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ArgumentError(f"unknown design kind {self.kind!r}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise ArgumentError(f"design dim must be a positive integer, got {self.dim!r}")
        object.__setattr__(self, "dim", int(self.dim))
        if self.kind == "student_t_isotropic":
            if self.df is None or not self.df > 2:
                raise ArgumentError(f"student_t design needs df > 2 (finite variance), got {self.df!r}")
        else:
            object.__setattr__(self, "df", None)

    def to_dict(self):
        d = {"kind": self.kind, "dim": self.dim}
        if self.df is not None:
            d["df"] = self.df
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["dim"], d.get("df"))

    def with_dim(self, dim):
        return DesignKind(self.kind, dim, self.df)


@dataclass(frozen=True)
class NoiseKind:
    """Symmetric noise law.

    ``scale`` means: standard deviation (gaussian), the t scale parameter
    (student_t), the L2 norm of the law (symmetrized_pareto; the Pareto
    threshold is derived from it) and the standard deviation of the underlying
    Gaussian magnitude (dependent_sign).
    """
    kind: str = "none"
    scale: float = 0.0
    df: Optional[float] = None
    tail_index: Optional[float] = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ArgumentError(f"unknown noise kind {self.kind!r}")
        if self.kind == "none":
            object.__setattr__(self, "scale", 0.0)
        elif not (np.isfinite(self.scale) and self.scale >= 0):
            raise ArgumentError(f"noise scale must be finite and nonnegative, got {self.scale!r}")
        if self.kind == "student_t":
            if self.df is None or not self.df > 2:
                raise ArgumentError(f"student_t noise needs df > 2 (finite variance), got {self.df!r}")
        else:
            object.__setattr__(self, "df", None)
        if self.kind == "symmetrized_pareto":
            if self.tail_index is None or not self.tail_index > 2:
                raise ArgumentError(
                    f"symmetrized_pareto noise needs tail_index > 2 (finite variance), got {self.tail_index!r}")
        else:
            object.__setattr__(self, "tail_index", None)

    def to_dict(self):
        d = {"kind": self.kind, "scale": self.scale}
        if self.df is not None:
            d["df"] = self.df
        if self.tail_index is not None:
            d["tail_index"] = self.tail_index
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", "none"), float(d.get("scale", 0.0)), d.get("df"), d.get("tail_index"))

    def with_scale(self, scale):
        if self.kind == "none":
            if scale == 0:
                return self
            return NoiseKind("gaussian", scale)
        return NoiseKind(self.kind, scale, self.df, self.tail_index)

    @property
    def experimental(self):
        return self.kind == "dependent_sign"


@dataclass(frozen=True)
class TargetSpec:
    t0: np.ndarray
    noise: NoiseKind = NoiseKind()

    def __post_init__(self):
        object.__setattr__(self, "t0", np.asarray(self.t0, dtype=float))
        if self.t0.ndim != 1:
            raise ArgumentError("t0 must be a vector")


def noise_moments(noise: NoiseKind):
    """Exact L2 and L4 norms of the noise law (``inf`` when the fourth moment diverges)."""
    s = noise.scale
    if noise.kind == "none":
        return {"l2": 0.0, "l4": 0.0}
    if noise.kind in ("gaussian", "dependent_sign"):
        return {"l2": s, "l4": s * 3.0 ** 0.25}
    if noise.kind == "student_t":
        df = noise.df
        l2 = s * math.sqrt(df / (df - 2.0))
        l4 = s * (3.0 * df * df / ((df - 2.0) * (df - 4.0))) ** 0.25 if df > 4 else math.inf
        return {"l2": l2, "l4": l4}
    a = noise.tail_index
    x_min = pareto_threshold(noise)
    l2 = x_min * math.sqrt(a / (a - 2.0))
    l4 = x_min * (a / (a - 4.0)) ** 0.25 if a > 4 else math.inf
    return {"l2": l2, "l4": l4}


def pareto_threshold(noise: NoiseKind):
    """Smallest magnitude of the symmetrized Pareto law with the configured L2 norm."""
    a = noise.tail_index
    return noise.scale * math.sqrt((a - 2.0) / a)


def sample_design(design: DesignKind, N, rng):
    n = design.dim
    if design.kind == "gaussian_isotropic":
        return rng.standard_normal((N, n))
    if design.kind == "rademacher_cube":
        return rng.integers(0, 2, size=(N, n)).astype(float) * 2.0 - 1.0
    df = design.df
    z = rng.standard_normal((N, n))
    chi2 = rng.chisquare(df, size=(N, n))
    return z / np.sqrt(chi2 / df) * math.sqrt((df - 2.0) / df)


def sample_noise(noise: NoiseKind, N, rng, signal=None):
    if noise.kind == "none" or noise.scale == 0:
        return np.zeros(N)
    if noise.kind == "gaussian":
        return noise.scale * rng.standard_normal(N)
    if noise.kind == "student_t":
        z = rng.standard_normal(N)
        chi2 = rng.chisquare(noise.df, size=N)
        return noise.scale * z / np.sqrt(chi2 / noise.df)
    if noise.kind == "symmetrized_pareto":
        u = 1.0 - rng.random(N)  # in (0, 1]
        mag = pareto_threshold(noise) * u ** (-1.0 / noise.tail_index)
        sign = rng.integers(0, 2, size=N) * 2.0 - 1.0
        return sign * mag
    # experimental: magnitude independent of X, sign copied from the clean signal
    mag = np.abs(noise.scale * rng.standard_normal(N))
    return np.where(signal >= 0, 1.0, -1.0) * mag


def sample_dataset(design: DesignKind, target: TargetSpec, N, rng_seed) -> Sample:
    if target.t0.shape != (design.dim,):
        raise ArgumentError(f"t0 has dimension {target.t0.size}, design has {design.dim}")
    if int(N) != N or N < 1:
        raise ArgumentError(f"N must be a positive integer, got {N!r}")
    rng = as_rng(rng_seed)
    X = sample_design(design, int(N), rng)
    signal = X @ target.t0
    W = sample_noise(target.noise, int(N), rng, signal)
    return Sample(X, signal + W)


def write_dataset_csv(sample: Sample, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x_{j + 1}" for j in range(sample.n)] + ["y"])
        for row, y in zip(sample.design, sample.responses):
            w.writerow([repr(float(v)) for v in row] + [repr(float(y))])


def make_t0(spec, n):
    """Build a target vector from a list or from ``{"kind": "spike"|"dense", "l2": value}``."""
    if isinstance(spec, dict):
        kind = spec.get("kind", "spike")
        norm = float(spec.get("l2", 1.0))
        if kind == "spike":
            t0 = np.zeros(n)
            t0[0] = norm
            return t0
        if kind == "dense":
            return np.full(n, norm / math.sqrt(n))
        raise ArgumentError(f"unknown t0 kind {kind!r}")
    t0 = np.asarray(spec, dtype=float)
    if t0.shape != (n,):
        raise ArgumentError(f"t0 has {t0.size} entries, expected {n}")
    return t0
