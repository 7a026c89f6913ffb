import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calerm.complexity import (ComplexityParams, FixedPointResult, WidthEstimate, chi_mean, compute_all,
                               dvoretzky_dimension, gaussian_width, lprime_l2, predict_rates, r0, r_M_total,
                               rademacher_multiplier_width, solve_fixed_point)
from calerm.decomposition import Sample
from calerm.errors import ArgumentError
from calerm.geometry import diameter, full_space, l1_ball, l1_l2_intersection, l2_ball, project, sample_feasible
from calerm.losses import SQUARED, huber
from calerm.synthdata import DesignKind, NoiseKind


def test_chi_mean():
    assert chi_mean(16) == pytest.approx(3.938, abs=5e-4)
    assert chi_mean(1) == pytest.approx(math.sqrt(2 / math.pi))


def test_width_full_space_against_chi_mean():
    w = gaussian_width(full_space(16), 2.0, reps=10_000, rng_seed=4)
    assert abs(w.value - 2.0 * chi_mean(16)) <= 3 * w.std_error
    assert w.reps == 10_000


def test_width_small_radius_linear():
    s = l1_ball(32, 1.0)
    a = gaussian_width(s, 1e-3, reps=500, rng_seed=1)
    b = gaussian_width(s, 1e-4, reps=500, rng_seed=1)
    assert a.value == pytest.approx(10 * b.value, rel=1e-9)
    assert gaussian_width(s, 1e-9, reps=100).value < 1e-7


def test_width_reps_error():
    with pytest.raises(ArgumentError):
        gaussian_width(l2_ball(3, 1.0), 1.0, reps=0)


@settings(max_examples=30, deadline=None)
@given(r=st.floats(0.01, 3.0), c=st.floats(1.01, 5.0), alpha=st.floats(0.2, 3.0))
def test_width_homogeneity(r, c, alpha):
    s = l1_ball(20, alpha)
    a = gaussian_width(s, r, reps=300, rng_seed=3)
    b = gaussian_width(s, c * r, reps=300, rng_seed=3)
    assert b.value <= c * a.value * (1 + 3 * a.std_error / max(a.value, 1e-300))


def test_width_deterministic():
    a = gaussian_width(l1_ball(10, 1.0), 0.4, reps=700, rng_seed=12)
    b = gaussian_width(l1_ball(10, 1.0), 0.4, reps=700, rng_seed=12)
    assert a == b


def test_multiplier_width_examples(rng):
    X = rng.normal(size=(6, 4))
    s = Sample(X, np.zeros(6))
    eps = rng.choice([-1.0, 1.0], size=6)
    assert rademacher_multiplier_width(l1_ball(4, 1.0), 0.5, s, np.zeros(6), eps) == 0.0
    m = rng.normal(size=6)
    expected = 0.7 / math.sqrt(6) * np.linalg.norm(X.T @ (eps * m))
    assert rademacher_multiplier_width(full_space(4), 0.7, s, m, eps) == pytest.approx(expected, rel=1e-12)
    with pytest.raises(ArgumentError):
        rademacher_multiplier_width(full_space(4), 0.7, s, m[:5], eps)


def test_multiplier_width_brute_force(rng):
    for cset in (l1_ball(3, 1.0), l2_ball(3, 2.0), l1_l2_intersection(3, 1.0, 0.8)):
        X = rng.normal(size=(4, 3))
        s = Sample(X, np.zeros(4))
        eps = rng.choice([-1.0, 1.0], size=4)
        m = rng.normal(size=4)
        r = 0.6
        local = l1_l2_intersection(3, cset.alpha, min(r, cset.r or r)) if cset.alpha else l2_ball(3, min(r, cset.r))
        w = X.T @ (eps * m)
        T = sample_feasible(local, rng, 100_000)
        vals = np.abs(T @ w)
        t = T[vals.argmax()] * np.sign(T[vals.argmax()] @ w)
        for k in range(200):  # projected-gradient polish
            t = project(local, t + (1 + k) * w / np.linalg.norm(w))
        brute = max(vals.max(), abs(t @ w)) / 2.0
        assert rademacher_multiplier_width(cset, r, s, m, eps) == pytest.approx(brute, rel=1e-3)


def test_r1Q_full_space_examples():
    n = 16
    res = solve_fixed_point("r1Q", full_space(n), 4 * n, zeta=1.0, mc_budget=500)
    assert res.r == 0.0 and res.bracket_lo <= res.r <= res.bracket_hi
    capped = solve_fixed_point("r1Q", full_space(n), n // 2, zeta=1.0, mc_budget=500, cap=1e3)
    assert capped.r == 1e3 and capped.capped


def test_kbarN_equals_r2Q():
    s = l1_ball(32, 2.0)
    a = solve_fixed_point("r2Q", s, 100, zeta=0.2, mc_budget=400, rng_seed=9)
    b = solve_fixed_point("kbarN", s, 100, zeta=0.2, mc_budget=400, rng_seed=9, lipschitz=1.0)
    assert a.r == b.r
    c = solve_fixed_point("kbarN", s, 100, zeta=0.2, mc_budget=400, rng_seed=9, lipschitz=2.0)
    assert c.r <= a.r  # phi(r/L) <= phi(r): a larger constant only helps


@pytest.mark.parametrize("kind", ["r1Q", "r2Q", "rM_prime"])
def test_bisection_monotone(kind):
    s = l1_ball(32, 3.0)
    kw = dict(mc_budget=400, rng_seed=2)
    if kind == "rM_prime":
        kw.update(kappa=0.05, delta=0.1, loss=huber(1.0), noise=NoiseKind("student_t", 1.0, df=5))
    else:
        kw.update(zeta=0.2)
    res = solve_fixed_point(kind, s, 64, **kw)
    power = 1 if kind == "r1Q" else 2
    tr = sorted(res.trace)
    ratios = [(v / r ** power, se / r ** power) for r, v, se, _ in tr if r > 0]
    for (a, sa), (b, sb) in zip(ratios, ratios[1:]):
        assert b <= a + 3 * max(sa, sb) + 1e-12
    assert res.bracket_lo <= res.r <= res.bracket_hi
    assert res.bracket_hi - res.bracket_lo <= 1e-3 * res.bracket_hi or res.r == 0 or res.capped


def test_rM_prime_errors_and_noise_free():
    s = l1_ball(8, 1.0)
    with pytest.raises(ArgumentError):
        solve_fixed_point("rM_prime", s, 50, kappa=0.1, delta=0.1, loss=SQUARED, noise=NoiseKind("gaussian", 1.0),
                          mc_budget=50)
    with pytest.raises(ArgumentError):
        solve_fixed_point("rM_prime", s, 50, kappa=0.1, delta=1.5, loss=SQUARED, noise=NoiseKind("gaussian", 1.0))
    res = solve_fixed_point("rM_prime", s, 50, kappa=0.1, delta=0.1, loss=SQUARED, noise=NoiseKind(), mc_budget=200)
    assert res.r == 0.0
    with pytest.raises(ArgumentError):
        solve_fixed_point("r0", s, 50)


def test_rM_prime_grows_with_noise():
    s = l1_ball(16, 2.0)
    kw = dict(kappa=0.1, delta=0.1, loss=SQUARED, mc_budget=300, rng_seed=1)
    lo = solve_fixed_point("rM_prime", s, 100, noise=NoiseKind("gaussian", 0.1), **kw)
    hi = solve_fixed_point("rM_prime", s, 100, noise=NoiseKind("gaussian", 1.0), **kw)
    assert 0 < lo.r < hi.r


def test_generic_design_path_matches_gaussian_shortcut_in_law():
    # Rademacher cube design goes through explicit sums; compare against the Gaussian shortcut
    s = l2_ball(8, 10.0)
    a = solve_fixed_point("r2Q", s, 200, zeta=0.3, mc_budget=800, design=DesignKind("gaussian_isotropic", 8))
    b = solve_fixed_point("r2Q", s, 200, zeta=0.3, mc_budget=800, design=DesignKind("rademacher_cube", 8))
    assert a.r == pytest.approx(b.r, rel=0.05)


def test_r0_examples(rng):
    assert r0(SQUARED, full_space(3), 1.0, 100, 0.4) == pytest.approx(1.0)
    assert r0(SQUARED, full_space(3), 0.0, 100, 0.4) == 0.0
    gamma = 0.7
    lp = lprime_l2(huber(gamma), NoiseKind("student_t", 1.0, df=3))
    assert lp <= gamma
    assert r0(huber(gamma), full_space(3), lp, 100, 0.4) <= 4 * gamma / (10 * 0.4)
    with pytest.raises(ArgumentError):
        r0(SQUARED, full_space(3), 1.0, 100, 0.4, mode="monte_carlo")
    with pytest.raises(ArgumentError):
        r0(SQUARED, full_space(3), 1.0, 100, 0.0)


def test_r0_monte_carlo_matches_closed_form(rng):
    n, N = 5, 20_000
    X = rng.normal(size=(N, n))
    W = rng.normal(size=N)
    s = Sample(X, W)
    spec = huber(1.0)
    closed = r0(spec, full_space(n), lprime_l2(spec, NoiseKind("gaussian", 1.0)), 100, 0.3)
    mc = r0(spec, full_space(n), None, 100, 0.3, mode="monte_carlo", sample=s, t_star=np.zeros(n))
    assert mc == pytest.approx(closed, rel=0.05)


def test_r_M_total_examples():
    fp = FixedPointResult(0.3, 0.29, 0.31, 0.01, "rM_prime")
    assert r_M_total(fp, 0.1).r == pytest.approx(0.4)
    assert r_M_total(FixedPointResult(0, 0, 1e-6, 0, "rM_prime"), 0).r == 0
    assert r_M_total(fp, 0.0).r == fp.r
    with pytest.raises(ArgumentError):
        r_M_total(fp, -1)


def test_dvoretzky_examples():
    assert dvoretzky_dimension(WidthEstimate(2.0, 0.0, 10), 1.0) == 4.0
    assert dvoretzky_dimension(WidthEstimate(0.0, 0.0, 10), 1.0) == 0.0
    n = 400
    w = gaussian_width(l2_ball(n, 1.0), 1.0, reps=200)
    assert dvoretzky_dimension(w, diameter(l2_ball(n, 1.0))) == pytest.approx(n / 4, rel=0.02)
    with pytest.raises(ArgumentError):
        dvoretzky_dimension(w, math.inf)


def test_predict_rates_examples():
    p = predict_rates("persistence_cube", {"n": 10, "N": 1000, "alpha": 2.0, "sigma_l2": 0.0})
    assert p.classical_pred == pytest.approx(4.0 * 10 / 1000)
    p = predict_rates("persistence_cube", {"n": 100, "N": 50, "alpha": 2.0, "sigma_l2": 0.0})
    assert p.r_Q_pred == pytest.approx(4.0 / 50 * math.log(2 * 100 / 50))
    p = predict_rates("full_space", {"n": 10, "N": 100, "sigma_l2": 0.0, "loss_kind": "huber"})
    assert p.r_Q_pred == 0.0 and p.r_M_pred == 0.0 and p.regime == "intrinsic"
    with pytest.raises(ArgumentError):
        predict_rates("simplex", {"n": 1, "N": 1})


def test_predict_rates_shapes():
    base = {"n": 32, "sigma_l2": 1.0, "sigma_l4": 3 ** 0.25, "delta": 0.05}
    for loss in ("huber", "squared", "logistic"):
        a = predict_rates("full_space", dict(base, N=400, loss_kind=loss))
        b = predict_rates("full_space", dict(base, N=1600, loss_kind=loss))
        assert b.r_M_pred < a.r_M_pred
        assert a.regime == "noise_dominated"
    h1 = predict_rates("full_space", dict(base, N=400, loss_kind="huber"))
    h2 = predict_rates("full_space", dict(base, N=400, loss_kind="huber", sigma_l2=2.0))
    assert h2.r_M_pred == pytest.approx(2 * h1.r_M_pred)
    l1 = predict_rates("l1_class", {"n": 100, "N": 50, "alpha": 1.0, "sigma_l2": 0.0, "loss_kind": "huber"})
    assert l1.r_Q_pred == pytest.approx(math.sqrt(math.log(math.e * 2)) / math.sqrt(50))
    assert predict_rates("l1_class", {"n": 100, "N": 1000, "alpha": 1.0, "loss_kind": "huber"}).r_Q_pred == 0.0
    with pytest.raises(ArgumentError):
        predict_rates("l1_class", {"n": 100, "N": 50, "alpha": 1.0, "loss_kind": "logistic"})


def test_compute_all_noise_free():
    res = compute_all(l1_ball(8, 1.0), 64, ComplexityParams(mc_budget=200), huber(1.0), NoiseKind())
    assert res["r0"] == 0.0 and res["rM_prime"].r == 0.0
    assert res["rM_total"].r == 0.0
    assert res["k_F_sqrt"] == pytest.approx(math.sqrt(res["k_F"]))
