import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from stochsobol import mars
from stochsobol.mars import AdditiveSurrogate, Hinge, MarsConfig, anova, evaluate, fit, hinge_mean
from stochsobol.models import gfun_eval, gfun_expected_a, gfun_indices_from_a
from stochsobol.sampling import ParameterSpace, RngStream, SizeError, beta, lhs, uniform
from stochsobol.sobol import normalized_error, saltelli

UNIT = lambda p: ParameterSpace.uniform_box([(0.0, 1.0)] * p)


def _design(n, p, seed):
    return lhs(UNIT(p), n, RngStream(seed))


def test_linear_response_reproduced_exactly():
    X = _design(80, 3, 1)
    s = fit(X, 3 * X[:, 0] + 1)
    assert s.info["r2"] > 1 - 1e-8
    Xt = RngStream(2).generator().random((200, 3))
    assert np.allclose(s(Xt), 3 * Xt[:, 0] + 1, atol=1e-8)


def test_constant_response_gives_undefined_indices():
    X = _design(50, 2, 3)
    s = fit(X, np.full(50, 4.2))
    assert s.hinges == () and np.isclose(s.intercept, 4.2)
    assert not anova(s).indices.defined


def test_hinge_values():
    h = Hinge(0, 0.5, 1)
    assert h(0.5) == 0 and h(0.75) == 0.25
    assert Hinge(0, 0.5, -1)(0.2) == pytest.approx(0.3)


def test_intercept_only_surrogate():
    s = AdditiveSurrogate(2.0, (), np.zeros(0), UNIT(3))
    assert evaluate(s, np.array([0.1, 0.2, 0.3])) == 2.0
    with pytest.raises(SizeError):
        evaluate(s, np.zeros(4))


def test_hinge_mean_quadrature():
    val, _ = integrate.quad(lambda x: max(0.0, x - 0.5), 0, 1)
    assert abs(val - 0.125) < 1e-12
    assert hinge_mean(Hinge(0, 0.5, 1)) == pytest.approx(val, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(t=st.floats(-1, 3), a=st.floats(-0.5, 1.0), w=st.floats(0.1, 2.0), sign=st.sampled_from([1, -1]))
def test_hinge_mean_any_interval(t, a, w, sign):
    b = a + w
    h = Hinge(0, t, sign)
    val = integrate.quad(lambda x: float(h(x)), a, b, points=[t] if a < t < b else None)[0] / (b - a)
    assert hinge_mean(h, a, b) == pytest.approx(val, abs=1e-10)


def test_single_variable_function_indices():
    X = _design(200, 2, 4)
    s = fit(X, X[:, 0])
    S = anova(s).indices.values
    assert abs(S[0] - 1) < 1e-8 and abs(S[1]) < 1e-8


def test_component_variance_by_quadrature():
    X = _design(300, 3, 5)
    y = np.sin(4 * X[:, 0]) + (X[:, 1] - 0.3) ** 2 + 0.1 * X[:, 2]
    s = fit(X, y)
    res = anova(s)
    for k in range(3):
        terms = s.terms_of(k)
        g = lambda x: sum(c * float(h(x)) for h, c in terms)
        knots = sorted(h.knot for h, _ in terms)
        m = integrate.quad(g, 0, 1, points=knots or None, limit=200)[0]
        v = integrate.quad(lambda x: (g(x) - m) ** 2, 0, 1, points=knots or None, limit=200)[0]
        assert res.variances[k] == pytest.approx(v, rel=1e-8, abs=1e-14)


def test_anova_matches_saltelli_on_surrogate():
    X = _design(400, 4, 6)
    y = np.exp(X[:, 0]) + 2 * np.abs(X[:, 1] - 0.4) + X[:, 2] * X[:, 3]
    s = fit(X, y)
    est = saltelli(s, s.space, 100_000, RngStream(7))
    S = anova(s).indices.values
    assert np.all(np.abs(est.values - S) < 3 * est.stderr + 1e-9)


def test_anova_nonuniform_fallback():
    space = ParameterSpace((beta(5, 3), uniform(0, 1)))
    X = lhs(space, 300, RngStream(8))
    s = fit(X, X[:, 0] ** 2 + 0.5 * X[:, 1], space=space)
    res = anova(s, RngStream(9))
    assert res.approximate
    est = saltelli(s, space, 100_000, RngStream(10))
    assert np.all(np.abs(est.values - res.indices.values) < 3 * est.stderr + 0.01)


def test_rows_sum_to_one():
    X = _design(150, 5, 11)
    y = X @ np.arange(1, 6) + np.cos(5 * X[:, 2])
    assert anova(fit(X, y)).indices.values.sum() == pytest.approx(1.0, abs=1e-12)


def test_duplicate_columns_and_points_are_tolerated():
    X = _design(40, 2, 12)
    X = np.vstack([X, X])
    X[:, 1] = X[:, 0]
    s = fit(X, X[:, 0] ** 2)
    assert np.all(np.isfinite(s.coefs)) and s.info["r2"] > 0.99


def test_tiny_design():
    X = _design(10, 3, 13)
    s = fit(X, X[:, 0] + X[:, 1] ** 2)
    assert len(s.hinges) + 1 <= 9


def test_size_errors():
    with pytest.raises(SizeError):
        fit(np.zeros((5, 2)), np.zeros(5))
    with pytest.raises(SizeError):
        fit(np.zeros((20, 2)), np.zeros(19))


def test_json_roundtrip():
    X = _design(100, 3, 14)
    s = fit(X, np.sin(3 * X[:, 0]) + X[:, 2])
    back = AdditiveSurrogate.from_json(s.to_json())
    assert np.array_equal(back(X), s(X))


def test_default_spans():
    cfg = MarsConfig()
    assert cfg.spans_for(1000, 15) == (11, 7)
    assert MarsConfig(endspan=0, minspan=1).spans_for(1000, 15) == (0, 1)


def test_forward_scores_match_direct_least_squares():
    # the recurrence-based pair gain equals the RSS drop of an explicit refit
    X = _design(60, 2, 15)
    y = np.sin(6 * X[:, 0]) + X[:, 1]
    fw = mars._Forward(X, y, MarsConfig(endspan=0, minspan=1))
    fw.add_column(np.ones(60), None)
    k, i, gain = fw.best_pair()
    t = fw.xs[i, k]
    B = np.column_stack([np.ones(60), np.maximum(0, X[:, k] - t), np.maximum(0, t - X[:, k])])
    rss1 = np.sum((y - B @ np.linalg.lstsq(B, y, rcond=None)[0]) ** 2)
    assert gain == pytest.approx(np.sum((y - y.mean()) ** 2) - rss1, rel=1e-9)
    best = 0.0
    for kk in range(2):
        for tt in X[:, kk]:
            B = np.column_stack([np.ones(60), np.maximum(0, X[:, kk] - tt), np.maximum(0, tt - X[:, kk])])
            r = np.sum((y - B @ np.linalg.lstsq(B, y, rcond=None)[0]) ** 2)
            best = max(best, np.sum((y - y.mean()) ** 2) - r)
    assert gain == pytest.approx(best, rel=1e-9)


def test_deterministic_gfunction_error_at_600():
    a = gfun_expected_a(100_000)
    exact = gfun_indices_from_a(a).values
    errs = []
    for r in range(10):
        X = _design(600, 15, 100 + r)
        errs.append(normalized_error(exact, anova(fit(X, gfun_eval(X, a=a))).indices))
    assert np.mean(errs) < 0.1
