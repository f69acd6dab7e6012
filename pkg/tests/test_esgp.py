import time

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from conftest import random_inducing, random_product
from kronsgp.dense import DenseGpProblem, log_marginal
from kronsgp.egp import egp_log_marginal, egp_predict
from kronsgp.esgp import (
    InducingGrid,
    InducingSubspace,
    esgp_elbo,
    esgp_fit,
    esgp_predict,
    esgp_trace_residual,
    inner_grid_kmm,
)
from kronsgp.exceptions import DimensionError
from kronsgp.inputs import ProductInputs
from kronsgp.kernels import SE, Hyperparameters, ProductKernel, eval_symmetric
from kronsgp.sparse import InducingSet, elbo_direct, optimal_q_direct, predict_sgp_dense
from oracles import elbo, kmat, q_opt, sgp_predict


def dense_pair(inputs, y, kern, hyp, grid):
    p = DenseGpProblem(inputs.expand(), y, kern, hyp)
    return p, InducingSet(grid.as_product_inputs(inputs.columns).expand())


def test_inducing_at_training_points_equals_exact(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 5])
    grid = InducingGrid.from_inputs(inputs)
    assert abs(esgp_elbo(inputs, y, grid, kern, hyp)
               - egp_log_marginal(inputs, y, kern, hyp)) <= 1e-6
    assert abs(esgp_trace_residual(inputs, grid, kern, hyp)) <= 1e-8


def test_small_grid_matches_dense_bound(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 5])
    grid = random_inducing(rng, inputs, [2, 3])
    p, ind = dense_pair(inputs, y, kern, hyp, grid)
    value = esgp_elbo(inputs, y, grid, kern, hyp)
    assert abs(value - elbo_direct(p, ind)) <= 1e-7
    Knn, Knm, Kmm = kmat(kern, hyp, p.X), kmat(kern, hyp, p.X, ind.X), kmat(kern, hyp, ind.X)
    assert abs(value - elbo(Knn, Knm, Kmm, y, hyp.noise_var)) <= 1e-7


def test_cavity_sized_instance_evaluates(rng):
    space = rng.uniform(size=(6437, 2))
    speeds = np.array([0.02, 0.04, 0.08, 0.2, 0.64, 1.0, 1.5])
    inputs = ProductInputs([space, speeds])
    kern = ProductKernel([SE((0, 1)), SE((2,))])
    hyp = Hyperparameters(1.0, ((0.2, 0.2), (0.5,)), 0.05)
    grid = InducingGrid([InducingSubspace(axes=[np.linspace(0, 1, 20), np.linspace(0, 1, 30)]),
                         InducingSubspace(points=speeds[:, None])])
    assert inputs.N == 45059 and grid.m == 4200
    y = rng.standard_normal(inputs.N)
    t0 = time.perf_counter()
    fit = esgp_fit(inputs, y, grid, kern, hyp)
    assert np.isfinite(fit.elbo)
    assert time.perf_counter() - t0 < 30.0
    mean, var = fit.predict(np.column_stack([rng.uniform(size=(5, 2)), np.full(5, 0.7)]))
    assert np.all(np.isfinite(mean)) and np.all(var > 0)


def test_weights_equal_kmm_inverse_mean(rng):
    # weights are only as accurate as K_mm is conditioned, so spread the grid out
    inputs, y, kern, hyp = random_product(rng, [5, 4], dims=[2, 1])
    grid = InducingGrid([InducingSubspace(axes=[np.array([0.0, 0.5, 1.0])] * 2),
                         InducingSubspace(points=[[0.1], [0.9]])])
    p, ind = dense_pair(inputs, y, kern, hyp, grid)
    assert np.linalg.cond(kmat(kern, hyp, ind.X)) < 1e4
    Knm, Kmm = kmat(kern, hyp, p.X, ind.X), kmat(kern, hyp, ind.X)
    mu, _ = q_opt(Knm, Kmm, y, hyp.noise_var)
    fit = esgp_fit(inputs, y, grid, kern, hyp)
    w = np.linalg.solve(Kmm, mu)
    assert np.max(np.abs(fit.weights - w)) <= 1e-6 * max(1.0, np.abs(w).max())


def test_deterministic(rng):
    inputs, y, kern, hyp = random_product(rng, [6, 5])
    grid = random_inducing(rng, inputs, [3, 3])
    a, b = esgp_fit(inputs, y, grid, kern, hyp), esgp_fit(inputs, y, grid, kern, hyp)
    assert a.elbo == b.elbo
    assert np.array_equal(a.weights, b.weights)


def test_prior_recovery(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 5])
    fit = esgp_fit(inputs, y, random_inducing(rng, inputs, [2, 3]), kern, hyp)
    mean, var = esgp_predict(fit, np.full((3, 2), 60.0))
    assert_allclose(mean, 0.0, atol=1e-6)
    assert_allclose(var, hyp.signal_var, atol=1e-6)


def test_prediction_matches_dense_reference(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 3, 2], periodic_last=True)
    grid = random_inducing(rng, inputs, [3, 2, 2])
    p, ind = dense_pair(inputs, y, kern, hyp, grid)
    q = optimal_q_direct(p, ind)
    Xs = rng.uniform(size=(7, 3))
    m0, v0 = predict_sgp_dense(ind, q, hyp, kern, Xs)
    mean, var = esgp_fit(inputs, y, grid, kern, hyp).predict(Xs)
    assert np.max(np.abs(mean - m0)) <= 1e-8
    assert np.max(np.abs(var - np.maximum(v0, 1e-12))) <= 1e-8
    m1, v1 = sgp_predict(kmat(kern, hyp, Xs, ind.X), kmat(kern, hyp, ind.X),
                         np.full(7, hyp.signal_var), q.mean, q.cov)
    assert np.max(np.abs(mean - m1)) <= 1e-7


def test_grid_and_point_queries_agree(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 3], dims=[2, 1])
    fit = esgp_fit(inputs, y, random_inducing(rng, inputs, [4, 2], grid=True), kern, hyp)
    test = ProductInputs([rng.uniform(size=(3, 2)), rng.uniform(size=4)])
    mg, vg = fit.predict(test)
    mp, vp = fit.predict(test.expand())
    assert_allclose(mg, mp, atol=1e-10)
    assert_allclose(vg, vp, atol=1e-10)


def test_inner_grid_kmm_two_by_two(rng):
    kern = ProductKernel([SE((0, 1))])
    hyp = Hyperparameters(1.3, ((0.4, 0.7),), 0.1)
    sub = InducingSubspace(axes=[np.array([0.1, 0.6]), np.array([0.2, 0.9])])
    kron, factors = inner_grid_kmm(sub, kern, hyp, (0, 1), amplitude=True)
    dense = eval_symmetric(kern, hyp, sub.points)
    assert_allclose(kron.todense(), dense, atol=1e-12)
    for (L, dropped), k in zip(factors, kron.factors):
        assert dropped == 0
        assert_allclose(L @ L.T, np.linalg.inv(k), rtol=1e-10)


def test_inner_grid_single_axis_matches_point_form(rng):
    inputs, y, kern, hyp = random_product(rng, [6, 4])
    a, b = np.sort(rng.uniform(size=3)), rng.uniform(size=(2, 1))
    as_axes = InducingGrid([InducingSubspace(axes=[a]), InducingSubspace(points=b)])
    as_points = InducingGrid([InducingSubspace(points=a[:, None]), InducingSubspace(points=b)])
    assert abs(esgp_elbo(inputs, y, as_axes, kern, hyp)
               - esgp_elbo(inputs, y, as_points, kern, hyp)) <= 1e-10


def test_mismatched_inducing_rejected(rng):
    inputs, y, kern, hyp = random_product(rng, [3, 3])
    grid = random_inducing(rng, inputs, [2, 2])
    with pytest.raises(DimensionError):
        esgp_elbo(inputs, y, InducingGrid(grid.subspaces[:1]), kern, hyp)
    with pytest.raises(DimensionError):
        esgp_elbo(inputs, y[:-1], grid, kern, hyp)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1),
       sizes=st.lists(st.integers(2, 6), min_size=1, max_size=3),
       use_grid=st.booleans())
def test_bound_below_exact_and_matches_dense(seed, sizes, use_grid):
    rng = np.random.default_rng(seed)
    inputs, y, kern, hyp = random_product(rng, sizes)
    grid = random_inducing(rng, inputs, [max(1, s - 1) for s in sizes], grid=use_grid)
    p, ind = dense_pair(inputs, y, kern, hyp, grid)
    # clustered random inducing points make K_mm numerically singular for every method
    assume(np.linalg.cond(kmat(kern, hyp, ind.X)) < 1e8)
    value = esgp_elbo(inputs, y, grid, kern, hyp)
    assert value <= log_marginal(p) + 1e-7
    assert abs(value - elbo_direct(p, ind)) <= 1e-6 * max(1.0, abs(value))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), n=st.integers(3, 8), m=st.integers(1, 4))
def test_more_inducing_points_never_hurt(seed, n, m):
    rng = np.random.default_rng(seed)
    inputs, y, kern, hyp = random_product(rng, [n, 3])
    extra = rng.uniform(size=(2, 1))
    small = rng.uniform(size=(m, 1))
    other = InducingSubspace(points=inputs.subspaces[1])
    g1 = InducingGrid([InducingSubspace(points=small), other])
    g2 = InducingGrid([InducingSubspace(points=np.vstack([small, extra])), other])
    assert esgp_elbo(inputs, y, g2, kern, hyp) >= esgp_elbo(inputs, y, g1, kern, hyp) - 1e-7


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_trace_residual_matches_dense(seed):
    rng = np.random.default_rng(seed)
    inputs, _, kern, hyp = random_product(rng, [4, 3], dims=[2, 1])
    grid = random_inducing(rng, inputs, [3, 2], grid=bool(seed % 2))
    X = inputs.expand()
    Z = grid.as_product_inputs(inputs.columns).expand()
    Knm, Kmm = kmat(kern, hyp, X, Z), kmat(kern, hyp, Z)
    assume(np.linalg.cond(Kmm) < 1e8)
    dense = np.trace(kmat(kern, hyp, X) - Knm @ np.linalg.solve(Kmm, Knm.T))
    fast = esgp_trace_residual(inputs, grid, kern, hyp)
    assert fast >= -1e-8
    assert abs(fast - dense) <= 1e-6 * max(1.0, abs(dense))


def test_training_inducing_prediction_equals_exact(rng):
    inputs, y, kern, hyp = random_product(rng, [4, 4])
    Xs = rng.uniform(size=(6, 2))
    m0, v0 = egp_predict(inputs, y, kern, hyp, Xs)
    fit = esgp_fit(inputs, y, InducingGrid.from_inputs(inputs), kern, hyp)
    m1, v1 = fit.predict(Xs)
    assert_allclose(m1, m0, atol=1e-6)
    assert_allclose(v1, v0, atol=1e-6)


@pytest.mark.parametrize("gap", [1e-4, 2e-5, 1e-5, 3e-6])
def test_near_duplicate_knots_keep_the_bound(gap):
    # Cholesky succeeds on these K_mm but its inverse factor is garbage
    x, t = np.linspace(0, 0.4, 80), np.linspace(0, 1, 6)
    inputs = ProductInputs([x, t])
    kern = ProductKernel([SE([0]), SE([1])])
    hyp = Hyperparameters(0.55, ((0.03,), (0.5,)), 0.06)
    y = np.sin(20 * inputs.expand()[:, 0])
    base = np.linspace(0, 0.4, 30)
    knots = np.sort(np.r_[base, base[[7, 19]] + gap])
    grid = InducingGrid([InducingSubspace(axes=[knots]), InducingSubspace(points=t[:, None])])
    assert esgp_trace_residual(inputs, grid, kern, hyp) >= -1e-8
    assert esgp_elbo(inputs, y, grid, kern, hyp) <= egp_log_marginal(inputs, y, kern, hyp) + 1e-8
