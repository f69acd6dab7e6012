import time

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import random_product
from kronsgp.dense import DenseGpProblem, log_marginal, log_marginal_eig, predict_dense_var
from kronsgp.egp import egp_fit, egp_log_marginal, egp_predict, egp_predict_fit
from kronsgp.inputs import ProductInputs
from kronsgp.kernels import SE, Hyperparameters, ProductKernel
from oracles import cartesian, gp_predict, kmat, lml


def dense_of(inputs, y, kernel, hyp):
    return DenseGpProblem(inputs.expand(), y, kernel, hyp)


def test_single_subspace_reduces_to_eig_path(rng):
    inputs, y, kern, hyp = random_product(rng, [9], dims=[2])
    assert abs(egp_log_marginal(inputs, y, kern, hyp)
               - log_marginal_eig(dense_of(inputs, y, kern, hyp))) <= 1e-10


def test_three_by_four_grid_matches_dense(rng):
    inputs, y, kern, hyp = random_product(rng, [3, 4])
    X = cartesian(inputs.subspaces)
    assert_allclose(inputs.expand(), X)
    assert abs(egp_log_marginal(inputs, y, kern, hyp)
               - lml(kmat(kern, hyp, X), y, hyp.noise_var)) <= 1e-8


def test_paper_bluff_body_resolution_is_fast(rng):
    x, yy = np.linspace(0, 1, 33), np.linspace(-1, 1, 13)
    inputs = ProductInputs([yy, x])
    kern = ProductKernel([SE((0,)), SE((1,))])
    hyp = Hyperparameters(1.0, ((0.3,), (0.1,)), 0.05)
    y = rng.standard_normal(inputs.N)
    egp_log_marginal(inputs, y, kern, hyp)
    t0 = time.perf_counter()
    egp_log_marginal(inputs, y, kern, hyp)
    assert time.perf_counter() - t0 < 1.0


def test_interpolation_limit(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 5], noise=1e-6)
    mean, _ = egp_predict(inputs, y, kern, hyp, inputs)
    assert_allclose(mean, y, atol=1e-4)


def test_prior_recovery(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 5])
    mean, var = egp_predict(inputs, y, kern, hyp, np.full((3, 2), 60.0))
    assert_allclose(mean, 0.0, atol=1e-6)
    assert_allclose(var, hyp.signal_var, atol=1e-6)


def test_arbitrary_points_match_dense(rng):
    inputs, y, kern, hyp = random_product(rng, [3, 4])
    Xs = rng.uniform(size=(5, 2))
    mean, var = egp_predict(inputs, y, kern, hyp, Xs)
    X = inputs.expand()
    m0, c0 = gp_predict(kmat(kern, hyp, X), kmat(kern, hyp, Xs, X), kmat(kern, hyp, Xs), y,
                        hyp.noise_var)
    assert np.max(np.abs(mean - m0)) <= 1e-8
    assert np.max(np.abs(var - np.diag(c0))) <= 1e-6


def test_grid_and_point_queries_agree(rng):
    inputs, y, kern, hyp = random_product(rng, [3, 4, 2], dims=[2, 1, 1], periodic_last=True)
    fit = egp_fit(inputs, y, kern, hyp)
    grid = ProductInputs([rng.uniform(size=(2, 2)), rng.uniform(size=3), rng.uniform(size=2)])
    mg, vg = egp_predict_fit(fit, grid)
    mp, vp = egp_predict_fit(fit, grid.expand())
    assert_allclose(mg, mp, atol=1e-10)
    assert_allclose(vg, vp, atol=1e-10)


def test_fit_caches_consistent(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 3])
    fit = egp_fit(inputs, y, kern, hyp)
    assert fit.log_marginal == egp_log_marginal(inputs, y, kern, hyp)
    assert np.all(fit.eigenvalues >= 0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1),
       sizes=st.lists(st.integers(1, 10), min_size=1, max_size=3),
       periodic=st.booleans())
def test_oracle_equivalence_property(seed, sizes, periodic):
    rng = np.random.default_rng(seed)
    dims = [int(rng.integers(1, 3)) for _ in sizes]
    inputs, y, kern, hyp = random_product(rng, sizes, dims, periodic_last=periodic)
    p = dense_of(inputs, y, kern, hyp)
    assert abs(egp_log_marginal(inputs, y, kern, hyp) - log_marginal(p)) <= 1e-8
    Xs = rng.uniform(-0.5, 1.5, (4, inputs.dim))
    mean, var = egp_predict(inputs, y, kern, hyp, Xs)
    m0, v0 = predict_dense_var(p, Xs)
    assert_allclose(mean, m0, atol=1e-6)
    assert_allclose(var, np.maximum(v0, 1e-12), atol=1e-6)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_subspace_order_does_not_matter(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.uniform(size=(4, 1)), rng.uniform(size=(3, 2))
    y = rng.standard_normal(12)
    kern_ab = ProductKernel([SE((0,)), SE((1, 2))])
    kern_ba = ProductKernel([SE((0, 1)), SE((2,))])
    hyp_ab = Hyperparameters(1.2, ((0.4,), (0.3, 0.5)), 0.2)
    hyp_ba = Hyperparameters(1.2, ((0.3, 0.5), (0.4,)), 0.2)
    y_ba = y.reshape(4, 3).T.ravel()
    v1 = egp_log_marginal(ProductInputs([a, b]), y, kern_ab, hyp_ab)
    v2 = egp_log_marginal(ProductInputs([b, a]), y_ba, kern_ba, hyp_ba)
    assert abs(v1 - v2) <= 1e-8
