import numpy as np
import pytest

from stochsobol.mars import anova, fit
from stochsobol.models import GFunction, ToyModel
from stochsobol.pipeline import (
    Experiment,
    convergence_study,
    distribution_summary,
    fit_indices,
    histograms,
    loglog_rate,
    run_algorithm2,
    run_time_resolved,
    tv_distance,
)
from stochsobol.sampling import DESIGN, OMEGA, RngStream, SizeError, lhs
from stochsobol.sobol import IndexSample, moments, normalized_error


class CountingToy(ToyModel):
    calls = 0

    def evaluate(self, X, noise):
        CountingToy.calls += len(X)
        return super().evaluate(X, noise)


def test_experiment_validation():
    with pytest.raises(SizeError):
        Experiment("toy", n=9, m=1)
    with pytest.raises(SizeError):
        Experiment("toy", n=10, m=0)
    with pytest.raises(ValueError):
        Experiment("toy", n=10, m=1, surrogate="kriging")


@pytest.mark.parametrize("n,m", [(20, 3), (57, 11)])
def test_evaluation_count(n, m):
    CountingToy.calls = 0
    s = run_algorithm2(Experiment("toy", n=n, m=m, seed=1), model=CountingToy(1.0))
    assert CountingToy.calls == n * m == s.meta["evaluations"]


def test_single_replicate_equals_direct_fit():
    exp = Experiment("gfunction", n=80, m=1, seed=3)
    s = run_algorithm2(exp)
    model = GFunction()
    root = RngStream(3).substream(0, 0)
    w = model.draw_noise(root.substream(OMEGA))
    X = lhs(model.space, 80, root.substream(DESIGN))
    direct = anova(fit(X, model.evaluate(X, w), space=model.space)).indices.values
    assert np.array_equal(s.values[0], direct)
    assert int(s.omega_seeds[0]) == root.substream(OMEGA).seed64()


def test_rows_sum_to_one_and_in_unit_interval():
    s = run_algorithm2(Experiment("gfunction", n=100, m=6, seed=4))
    v = s.valid()
    assert np.allclose(v.sum(axis=1), 1.0) and v.min() >= 0 and v.max() <= 1


def test_independent_of_worker_count():
    exp = Experiment("toy", n=40, m=6, seed=5)
    a = run_algorithm2(exp)
    b = run_algorithm2(Experiment("toy", n=40, m=6, seed=5, workers=2))
    assert a.to_csv() == b.to_csv()


def test_pce_surrogate_path():
    s = run_algorithm2(Experiment("toy", n=60, m=4, seed=6, surrogate="pce", pce_tau=1.0))
    assert s.valid().shape == (4, 2)


def test_degenerate_replicate_is_undefined():
    class Flat(ToyModel):
        def evaluate(self, X, noise):
            return np.zeros(len(X)) if noise > 0 else super().evaluate(X, noise)

    s = run_algorithm2(Experiment("toy", n=30, m=10, seed=7), model=Flat(1.0))
    assert s.meta["undefined"] == (~s.defined).sum() > 0
    assert "undefined" in s.to_csv()


def test_toy_end_to_end_quick():
    s = run_algorithm2(Experiment("toy", n=100, m=100, seed=8))
    assert abs(moments(s, 1).values[1] - 0.3443) < 0.06


def test_convergence_single_replicate_equals_single_run():
    tmpl = Experiment("toy", n=50, m=5, seed=9)
    table = convergence_study(tmpl, [50], replicates=1)
    s = run_algorithm2(tmpl, dataset=0)
    exact = ToyModel(1.0).expected_indices()
    assert table.errors[0, 0] == normalized_error(exact, moments(s, 1).values)


def test_convergence_requires_oracle():
    with pytest.raises(ValueError, match="no analytic oracle"):
        convergence_study(Experiment("oscillator", n=20, m=1), [20], 1)


def test_loglog_rate():
    n = np.array([100, 200, 400, 800])
    assert loglog_rate(n, 3.0 * n**-0.6) == pytest.approx(0.6)


def test_histograms_constant_sample():
    h = histograms(np.full((40, 1), 0.37), 50)
    assert h[0, 18] == 1.0 and h.sum() == 1.0
    assert tv_distance(h[0], h[0]) == 0.0


def test_distribution_summary_with_oracle():
    s = run_algorithm2(Experiment("toy", n=40, m=40, seed=10))
    out = distribution_summary(s, 20, ToyModel(1.0), oracle_size=20_000)
    assert np.asarray(out["histograms"]).shape == (2, 20)
    assert len(out["qq_exact"][0]) == 99 and out["excluded_undefined"] == 0
    with pytest.raises(SizeError):
        distribution_summary(IndexSample(np.zeros((10, 2)), np.ones(10, bool), np.arange(10)))


def test_time_resolved_small():
    exp = Experiment("oscillator", n=12, m=2, seed=11, t_final=20.0, dt=5.0)
    res = run_time_resolved(exp)
    assert res.values.shape == (5, 2, 15)
    assert not res.defined[0].any()  # C = 0 for every design point at t = 0
    assert res.meta["evaluations"] == 24
    again = run_time_resolved(exp)
    assert np.array_equal(res.values, again.values)
    assert res.histogram_tensor(10).shape == (15, 5, 10)


def test_fit_indices_dispatch():
    X = lhs(ToyModel().space, 50, RngStream(12))
    y = X[:, 0] + 0.1 * X[:, 1]
    for kind in ("mars", "pce"):
        idx, _ = fit_indices(X, y, Experiment("toy", n=50, m=1, surrogate=kind, pce_tau=1.0), ToyModel().space)
        assert idx.values[0] > 0.9
