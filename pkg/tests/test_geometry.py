import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import brentq

from calerm.errors import ArgumentError, UnboundedSetError
from calerm.geometry import (ConstraintSet, contains, diameter, full_space, intersect_l2, l1_ball,
                             l1_l2_intersection, l2_ball, project, sample_feasible, support_value, support_values,
                             symmetric_support)


def l1_projection_oracle(p, alpha):
    """Soft threshold with the level found by root finding on the l1 budget."""
    if np.abs(p).sum() <= alpha:
        return p.copy()
    f = lambda tau: np.maximum(np.abs(p) - tau, 0).sum() - alpha
    tau = brentq(f, 0.0, np.abs(p).max(), xtol=1e-15, rtol=1e-15)
    return np.sign(p) * np.maximum(np.abs(p) - tau, 0)


def pga_support(cset, w, rng, restarts=10, iters=60):
    """Projected gradient ascent on <w, t> from random feasible starts.

    The objective is linear, so step sizes grow linearly; every iterate is
    feasible and the best objective value seen is returned.
    """
    best = -np.inf
    scale = 1.0 / max(np.linalg.norm(w), 1e-300)
    for t in sample_feasible(cset, rng, restarts):
        for k in range(iters):
            t = project(cset, t + (1 + k) * scale * w)
            best = max(best, float(w @ t))
    return best


def random_set(rng, n):
    k = rng.integers(0, 3)
    if k == 0:
        return l2_ball(n, rng.uniform(0.2, 3))
    if k == 1:
        return l1_ball(n, rng.uniform(0.2, 3))
    return l1_l2_intersection(n, rng.uniform(0.2, 3), rng.uniform(0.2, 3))


def test_projection_examples():
    assert np.allclose(project(l1_ball(2, 1.0), [3.0, 0.0]), [1.0, 0.0])
    assert np.array_equal(project(l1_ball(2, 1.0), [0.3, 0.2]), [0.3, 0.2])
    assert np.allclose(project(l2_ball(2, 2.0), [3.0, 4.0]), [1.2, 1.6])
    x = np.array([5.0, -7.0, 1.0])
    assert np.array_equal(project(full_space(3), x), x)


def test_support_examples():
    assert support_value(l1_l2_intersection(2, 1, 1), [1, 0]) == pytest.approx(1.0, rel=1e-10)
    assert support_value(l1_l2_intersection(2, 1, 1), [1, 1]) == pytest.approx(1.0, rel=1e-10)
    assert support_value(l2_ball(2, 3), [0, 4]) == pytest.approx(12.0)
    assert symmetric_support(l1_ball(2, 2), [-3, 1]) == 6.0
    assert symmetric_support(l2_ball(2, 1), [0, 0]) == 0.0
    assert symmetric_support(l1_l2_intersection(2, 1, 0.5), [1, 0]) == pytest.approx(0.5, rel=1e-10)


def test_diameter_examples():
    assert diameter(l2_ball(3, 3)) == 6
    assert diameter(l1_ball(3, 2)) == 4
    assert diameter(l1_l2_intersection(4, 5, 1)) == 2
    assert diameter(full_space(4)) == math.inf


def test_errors():
    with pytest.raises(UnboundedSetError):
        support_value(full_space(2), [1, 0])
    with pytest.raises(ArgumentError):
        project(l2_ball(3, 1), [1, 2])
    with pytest.raises(ArgumentError):
        support_value(l1_ball(3, 1), [1, 2])
    with pytest.raises(ArgumentError):
        ConstraintSet("l1_l2_intersection", 3, alpha=1.0)
    with pytest.raises(ArgumentError):
        l1_ball(3, -1.0)
    with pytest.raises(ArgumentError):
        ConstraintSet("simplex", 3)


def test_serialisation_round_trip():
    for c in (full_space(3), l2_ball(3, 2), l1_ball(5, 0.5), l1_l2_intersection(4, 2, 1)):
        assert ConstraintSet.from_dict(c.to_dict()) == c


def test_intersect_l2():
    assert intersect_l2(full_space(3), 2.0) == l2_ball(3, 2.0)
    assert intersect_l2(l2_ball(3, 5.0), 2.0) == l2_ball(3, 2.0)
    assert intersect_l2(l1_ball(3, 1.0), 2.0) == l1_ball(3, 1.0)
    assert intersect_l2(l1_ball(3, 1.0), 0.5) == l1_l2_intersection(3, 1.0, 0.5)
    assert intersect_l2(l1_l2_intersection(3, 1.0, 0.5), 2.0) == l1_l2_intersection(3, 1.0, 0.5)


def test_l1_projection_matches_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(1, 9))
        alpha = rng.uniform(0.1, 3)
        p = rng.normal(scale=rng.uniform(0.1, 5), size=n)
        assert np.max(np.abs(project(l1_ball(n, alpha), p) - l1_projection_oracle(p, alpha))) <= 1e-8


def test_projection_beats_feasible_points(rng):
    for _ in range(100):
        n = int(rng.integers(1, 9))
        cset = random_set(rng, n)
        p = rng.normal(scale=3, size=n)
        x = project(cset, p)
        assert contains(cset, x, tol=1e-12)
        T = sample_feasible(cset, rng, 10_000)
        assert np.linalg.norm(x - p) <= np.linalg.norm(T - p, axis=1).min() + 1e-8


def test_support_matches_gradient_ascent(rng):
    for _ in range(100):
        n = int(rng.integers(1, 17))
        cset = random_set(rng, n)
        w = rng.normal(size=n)
        oracle = pga_support(cset, w, rng)
        assert support_value(cset, w) == pytest.approx(oracle, rel=1e-6)


def test_batch_support_matches_single(rng):
    cset = l1_l2_intersection(12, 2.0, 0.7)
    W = rng.normal(size=(50, 12))
    batch = support_values(cset, W)
    assert np.allclose(batch, [support_value(cset, w) for w in W], rtol=1e-12)


vec = arrays(np.float64, 6, elements=st.floats(-10, 10, allow_nan=False))
sets = st.sampled_from([l2_ball(6, 1.5), l1_ball(6, 2.0), l1_l2_intersection(6, 2.0, 1.0),
                        l1_l2_intersection(6, 0.5, 3.0)])


@settings(max_examples=200, deadline=None)
@given(cset=sets, p=vec)
def test_projection_feasible_and_idempotent(cset, p):
    x = project(cset, p)
    assert contains(cset, x, tol=1e-12)
    assert np.allclose(project(cset, x), x, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(cset=sets, p=vec, q=vec)
def test_projection_nonexpansive(cset, p, q):
    assert np.linalg.norm(project(cset, p) - project(cset, q)) <= np.linalg.norm(p - q) + 1e-10


@settings(max_examples=200, deadline=None)
@given(cset=sets, w=vec, c=st.floats(0.01, 100))
def test_support_homogeneous(cset, w, c):
    assert support_value(cset, c * w) == pytest.approx(c * support_value(cset, w), rel=1e-12, abs=1e-300)


@settings(max_examples=200, deadline=None)
@given(cset=sets, w=vec)
def test_support_symmetric(cset, w):
    assert support_value(cset, w) == pytest.approx(support_value(cset, -w), rel=1e-12, abs=1e-300)
    assert symmetric_support(cset, w) == pytest.approx(support_value(cset, w), rel=1e-12, abs=1e-300)


@settings(max_examples=100, deadline=None)
@given(cset=sets, w=vec)
def test_duality_with_projection(cset, w):
    s = support_value(cset, w)
    # push far outside the set whatever the size of w, so the projection lands on the maximising face
    push = 1e6 / max(float(np.linalg.norm(w)), 1e-300)
    val = float(w @ project(cset, push * w))
    assert val == pytest.approx(s, rel=1e-6, abs=1e-12)
