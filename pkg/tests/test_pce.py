import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.polynomial import legendre as npleg

from stochsobol.mars import anova, fit
from stochsobol.models import gfun_eval, gfun_expected_a, gfun_indices_from_a
from stochsobol.pce import (
    PcBasis,
    PcSurrogate,
    UnsupportedDistributionError,
    basis_count,
    fit_pc,
    legendre_orthonormal,
    pc_sobol,
    project_l1_ball,
    spg_l1,
)
from stochsobol.sampling import ParameterSpace, RngStream, SizeError, beta, lhs
from stochsobol.sobol import normalized_error

UNIT = lambda p: ParameterSpace.uniform_box([(0.0, 1.0)] * p)


def test_legendre_against_numpy():
    xi = np.linspace(-1, 1, 17)
    P = legendre_orthonormal(xi, 5)
    for k in range(6):
        ref = npleg.legval(xi, np.eye(6)[k]) * np.sqrt(2 * k + 1)
        assert np.allclose(P[:, k], ref, atol=1e-13)


def test_orthonormal_gram():
    nodes, weights = npleg.leggauss(12)
    basis = PcBasis(2, 3)
    X = np.array(list(itertools.product((nodes + 1) / 2, repeat=2)))
    w = np.array([a * b for a, b in itertools.product(weights / 2, repeat=2)])
    A = basis.matrix(X, UNIT(2))
    assert np.allclose(A.T @ (A * w[:, None]), np.eye(basis.size), atol=1e-12)


def test_graded_order():
    idx = PcBasis(3, 2).indices
    assert idx[0].tolist() == [0, 0, 0]
    assert np.all(np.diff(idx.sum(axis=1)) >= 0)
    assert len(idx) == basis_count(3, 2) == 10
    assert basis_count(15, 3) == 816


def test_constant_response():
    X = lhs(UNIT(3), 60, RngStream(1))
    s = fit_pc(X, np.full(60, 5.0), order=2, tau=10.0, rtol=1e-14)
    assert abs(s.coefs[0] - 5) < 1e-6 and np.all(np.abs(s.coefs[1:]) < 1e-6)
    assert not pc_sobol(s).indices.defined


def test_degree_one_response():
    X = lhs(UNIT(2), 2000, RngStream(2))
    y = np.sqrt(3) * (2 * X[:, 0] - 1)
    s = fit_pc(X, y, order=2, tau=10.0, rtol=1e-14)
    j = [i for i, a in enumerate(s.basis.indices.tolist()) if a == [1, 0]][0]
    assert abs(s.coefs[j] - 1) < 1e-6
    assert np.max(np.abs(np.delete(s.coefs, j))) < 1e-6


def test_l1_constraint_respected():
    X = lhs(UNIT(4), 100, RngStream(3))
    y = np.exp(X.sum(axis=1))
    tau = 0.025
    s = fit_pc(X, y, order=3, tau=tau)
    assert np.abs(s.coefs).mean() <= tau * (1 + 1e-12)


@settings(max_examples=50, deadline=None)
@given(v=st.lists(st.floats(-5, 5), min_size=1, max_size=30), r=st.floats(0.01, 10))
def test_projection_is_nearest_point(v, r):
    v = np.array(v)
    p = project_l1_ball(v, r)
    assert np.abs(p).sum() <= r * (1 + 1e-12) + 1e-12
    # optimality: no feasible random point is closer
    gen = np.random.default_rng(0)
    for _ in range(20):
        q = project_l1_ball(p + 0.1 * gen.standard_normal(v.size), r)
        assert np.sum((v - p) ** 2) <= np.sum((v - q) ** 2) + 1e-9


def test_spg_matches_unconstrained_lstsq_when_inactive():
    gen = np.random.default_rng(4)
    A = gen.standard_normal((50, 6))
    d = A @ np.array([0.3, -0.2, 0.1, 0, 0, 0.05]) + 0.01 * gen.standard_normal(50)
    c, _, _ = spg_l1(A, d, 100.0, rtol=1e-15)
    assert np.allclose(c, np.linalg.lstsq(A, d, rcond=None)[0], atol=1e-7)


def test_pc_sobol_examples():
    basis = PcBasis(2, 2)
    c = np.zeros(basis.size)
    c[0] = 7.0
    c[basis.indices.tolist().index([1, 0])] = 1.0
    S = pc_sobol(PcSurrogate(basis, c, UNIT(2))).indices.values
    assert np.allclose(S, [1, 0])
    c = np.zeros(basis.size)
    c[basis.indices.tolist().index([1, 1])] = 1.0
    S = pc_sobol(PcSurrogate(basis, c, UNIT(2))).indices.values
    assert np.allclose(S, [0, 0]) and S.sum() < 1


def test_pc_sobol_matches_quadrature_of_polynomial():
    X = lhs(UNIT(3), 200, RngStream(5))
    y = np.exp(X[:, 0]) * (1 + X[:, 1]) + X[:, 2] ** 2
    s = fit_pc(X, y, order=3, tau=1.0)
    nodes, weights = npleg.leggauss(8)
    u, w = (nodes + 1) / 2, weights / 2
    grid = np.array(list(itertools.product(u, repeat=3)))
    W = np.array([a * b * c for a, b, c in itertools.product(w, repeat=3)])
    f = s(grid).reshape(8, 8, 8)
    Wt = W.reshape(8, 8, 8)
    mean = np.sum(f * Wt)
    total = np.sum((f - mean) ** 2 * Wt)
    cond = [np.tensordot(f, np.outer(w, w), axes=([1, 2], [0, 1])),
            np.tensordot(f, np.outer(w, w), axes=([0, 2], [0, 1])),
            np.tensordot(f, np.outer(w, w), axes=([0, 1], [0, 1]))]
    Sq = np.array([np.sum(w * (ck - mean) ** 2) for ck in cond]) / total
    assert np.allclose(pc_sobol(s).indices.values, Sq, atol=1e-8)


def test_gfunction_comparable_to_mars():
    a = gfun_expected_a(100_000)
    exact = gfun_indices_from_a(a).values
    X = lhs(UNIT(15), 600, RngStream(6))
    y = gfun_eval(X, a=a)
    e_pc = normalized_error(exact, pc_sobol(fit_pc(X, y)).indices)
    e_mars = normalized_error(exact, anova(fit(X, y)).indices)
    assert e_pc < 0.1
    assert 0.1 < e_pc / e_mars < 10


def test_errors():
    with pytest.raises(SizeError):
        fit_pc(np.zeros((1, 2)), np.zeros(1))
    space = ParameterSpace((beta(5, 3), beta(2, 2)))
    with pytest.raises(UnsupportedDistributionError):
        fit_pc(np.full((10, 2), 0.5), np.zeros(10), space=space)


def test_json_roundtrip():
    X = lhs(UNIT(2), 50, RngStream(7))
    s = fit_pc(X, X[:, 0] * X[:, 1], order=2, tau=1.0)
    back = PcSurrogate.from_json(s.to_json())
    assert np.array_equal(back(X), s(X))
