import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from acof import bayesopt as bo
from acof.core import ParameterSpace, ParameterSpec, Region, StructuralError

from conftest import opamp_space, unit_space
from oracles import dense_gp_posterior, mc_expected_improvement


def test_two_point_closed_form():
    # X = {0, 1}, y = {1, -1}, unit kernel: mean at 0 is (1 - r) / (1 + s - r), r = exp(-1/2)
    s = 1e-6
    model = bo.GpModel.build([[0.0], [1.0]], [1.0, -1.0], bo.Kernel(1.0, (1.0,), s))
    mean, var = bo.posterior(model, [0.0])
    r = math.exp(-0.5)
    assert mean == pytest.approx((1 - r) / (1 + s - r), abs=1e-12)
    # frozen: same value, computed once by hand
    assert mean == pytest.approx(0.9999974585123769, abs=1e-12)
    expected_var = 1 - np.array([1, r]) @ np.linalg.inv([[1 + s, r], [r, 1 + s]]) @ np.array([1, r])
    assert var == pytest.approx(expected_var, abs=1e-12)


def test_posterior_matches_dense_solve():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n, d = rng.integers(1, 9), rng.integers(1, 4)
        X, y = rng.random((n, d)), rng.normal(size=n)
        k = bo.Kernel(rng.uniform(0.1, 3), tuple(rng.uniform(0.1, 2, d)), rng.uniform(1e-4, 1e-1))
        Z = rng.random((5, d))
        mean, var = bo.GpModel.build(X, y, k).predict(Z)
        m2, v2 = dense_gp_posterior(X, y, Z, k.signal_var, k.lengthscales, k.noise_var)
        assert np.allclose(mean, m2, atol=1e-8)
        assert np.allclose(var, np.maximum(v2, 0), atol=1e-8)


def test_lml_matches_scipy():
    rng = np.random.default_rng(3)
    X, y = rng.random((7, 2)), rng.normal(size=7)
    yc = y - y.mean()
    k = bo.Kernel(1.3, (0.4, 0.9), 0.05)
    K = bo.kernel_matrix(X, X, k) + k.noise_var * np.eye(7)
    assert bo.log_marginal_likelihood(X, yc, k) == pytest.approx(
        multivariate_normal(np.zeros(7), K).logpdf(yc), abs=1e-9)


def test_hyperparameters_stay_in_bounds_and_improve_lml():
    rng = np.random.default_rng(0)
    X = rng.random((40, 3))
    y = np.sin(6 * X[:, 0]) + 0.1 * X[:, 1]
    yc = y - y.mean()
    k = bo.optimize_hyperparameters(X, yc)
    assert all(bo.LENGTHSCALE_BOUNDS[0] <= v <= bo.LENGTHSCALE_BOUNDS[1] for v in k.lengthscales)
    assert bo.SIGNAL_VAR_BOUNDS[0] <= k.signal_var <= bo.SIGNAL_VAR_BOUNDS[1]
    assert bo.NOISE_VAR_BOUNDS[0] <= k.noise_var <= bo.NOISE_VAR_BOUNDS[1]
    fitted = bo.log_marginal_likelihood(X, yc, k)
    for theta in bo.start_grid(3, float(np.var(yc))):
        assert fitted >= bo.log_marginal_likelihood(X, yc, bo._theta_to_kernel(theta, 3)) - 1e-9
    # irrelevant third input gets a long lengthscale
    assert k.lengthscales[2] > k.lengthscales[0]


def test_fit_gp_guards():
    with pytest.raises(bo.InsufficientDataError):
        bo.fit_gp([([0.1], 1.0)])
    with pytest.raises(ValueError):
        bo.fit_gp([([0.1], 1.0), ([0.2], math.nan)])
    model = bo.fit_gp([([0.1, 0.2], -1.0), ([0.5, 0.9], -0.5), ([0.9, 0.1], -2.0)])
    with pytest.raises(StructuralError):
        model.predict([[0.1, 0.2, 0.3]])


def test_duplicate_inputs_factorize():
    X = np.array([[0.5, 0.5]] * 5)
    model = bo.GpModel.build(X, [1.0, 1.0, 1.0, 1.0, 1.0], bo.Kernel(1.0, (0.3, 0.3), 1e-10))
    mean, var = model.predict([[0.5, 0.5]])
    assert np.isfinite(mean).all() and np.isfinite(var).all()


def test_select_subset_best_plus_recent():
    y = np.array([5.0, 0.0, 4.0, 1.0, 3.0, 2.0, -1.0])
    idx = bo.select_subset(y, n_max=4, n_best=2, n_recent=2)
    assert idx.tolist() == [0, 2, 5, 6]
    assert bo.select_subset(y, 10, 5, 5).tolist() == list(range(7))


def test_ei_known_values():
    assert bo.expected_improvement(1.0, 0.0, 0.5) == pytest.approx(0.5)
    assert bo.expected_improvement(0.0, 0.0, 0.5) == 0.0
    # delta = 0, sigma = 1 -> 1/sqrt(2 pi)
    assert bo.expected_improvement(0.0, 1.0, 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi))


def test_ei_matches_monte_carlo_spot():
    rng = np.random.default_rng(1)
    ei = bo.expected_improvement(0.2, 0.3**2, 0.0, 0.01)
    assert ei == pytest.approx(mc_expected_improvement(0.2, 0.3, 0.0, 0.01, 400_000, rng), rel=0.02)


@given(st.floats(-5, 5), st.floats(0, 4), st.floats(-5, 5), st.floats(0, 0.5))
@settings(max_examples=300, deadline=None)
def test_ei_nonnegative_and_monotone(mean, var, f_best, xi):
    ei = bo.expected_improvement(mean, var, f_best, xi)
    assert ei >= 0
    assert bo.expected_improvement(mean + 0.5, var, f_best, xi) >= ei - 1e-12
    assert bo.expected_improvement(mean, var + 0.5, f_best, xi) >= ei - 1e-12


def test_select_diverse_respects_distance_then_relaxes():
    Z = np.array([[0.0], [0.01], [0.02], [0.5], [1.0]])
    scores = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
    assert bo.select_diverse(Z, scores, 3, 0.1) == [0, 3, 4]
    # five points, floor too strict: gets halved until all fit
    assert sorted(bo.select_diverse(Z, scores, 5, 0.5)) == [0, 1, 2, 3, 4]


def test_select_diverse_tie_keys():
    Z = np.array([[0.0], [0.5], [1.0]])
    scores = np.zeros(3)
    assert bo.select_diverse(Z, scores, 1, 0.0, np.array([0.9, 0.1, 0.5])) == [1]


def test_degenerate_region_rejected():
    space = unit_space(2)
    with pytest.raises(bo.DegenerateRegionError, match="x1"):
        bo.sample_region(Region(((0.1, 0.4), (0.3, 0.3))), space, 4, np.random.default_rng(0))


def test_propose_batch_inside_region_and_distinct():
    space = opamp_space(6)
    rng = np.random.default_rng(0)
    Z = rng.random((30, 6))
    model = bo.fit_gp([(z, -float(np.sum((z - 0.3) ** 2))) for z in Z])
    lo = space.from_unit(np.full(6, 0.2))
    hi = space.from_unit(np.full(6, 0.6))
    region = Region(tuple(zip(lo, hi)))
    pts = bo.propose_batch(model, region, space, bo.AcquisitionParams(pool_size=256, q=10), rng)
    assert len(pts) == 10 and len(set(pts)) == 10
    assert all(region.contains(p) for p in pts)


def test_propose_batch_deterministic():
    space = unit_space(3)
    Z = np.random.default_rng(0).random((20, 3))
    model = bo.fit_gp([(z, float(z[0])) for z in Z])
    region = space.full_region()
    a = bo.propose_batch(model, region, space, bo.AcquisitionParams(256, 5), np.random.default_rng(11))
    b = bo.propose_batch(model, region, space, bo.AcquisitionParams(256, 5), np.random.default_rng(11))
    assert a == b
