"""Invariant checks behind ``stochsobol validate``.

Each check returns ``(name, passed, detail)``. The quick variant keeps sample
sizes small enough to finish in well under a minute.
"""
from __future__ import annotations

import numpy as np

from .models import GFunction, ToyModel, toy_expected_sigma_index
from .pipeline import Experiment, run_algorithm2
from .sampling import ORACLE, ParameterSpace, RngStream, lhs
from .sobol import saltelli


def _lhs_strata():
    space = ParameterSpace.uniform_box([(0.0, 1.0)] * 4)
    X = lhs(space, 50, RngStream(1))
    ok = all(np.array_equal(np.sort(np.floor(X[:, k] * 50)), np.arange(50)) for k in range(4))
    return "lhs one point per stratum", ok, "n=50, p=4"


def _toy_oracle(size):
    w = RngStream(2).substream(ORACLE).generator().standard_normal(size)
    mc = np.mean(w**2 / (1 + w**2))
    se = np.std(w**2 / (1 + w**2)) / np.sqrt(size)
    exact = toy_expected_sigma_index(1.0)
    return "toy closed form vs Monte Carlo", abs(mc - exact) < 4 * se, f"exact={exact:.5f} mc={mc:.5f}"


def _gfun_pick_freeze(N):
    model = GFunction()
    worst = 0.0
    for w in (0.3, 0.7):
        est = saltelli(lambda X: model.evaluate(X, w), model.space, N, RngStream(3, (int(w * 10),)))
        z = np.abs(est.values - model.indices(w).values) / np.maximum(est.stderr, 1e-12)
        worst = max(worst, float(z.max()))
    # 30 comparisons: allow the usual 3-sigma band plus a little for multiplicity
    return "g-function analytic vs pick-freeze", worst < 4.0, f"max |z|={worst:.2f}"


def _pipeline_contract():
    exp = Experiment("toy", n=60, m=8, seed=4)
    a = run_algorithm2(exp)
    b = run_algorithm2(exp)
    sums = np.abs(a.valid().sum(axis=1) - 1).max()
    ok = a.meta["evaluations"] == exp.m * exp.n and a.to_csv() == b.to_csv() and sums < 1e-9
    return "evaluation count, row sums, determinism", ok, f"evals={a.meta['evaluations']} max|sum-1|={sums:.1e}"


def _ssa_checks(reps):
    from .ssa import ReactionNetwork, oscillator_network, simulate

    death = ReactionNetwork(("A",), np.array([[1]]), np.array([[0]]), np.array([0]), ("k",), np.array([1.0]))
    grid = np.array([1.0, 2.0, 3.0])
    A = np.array([simulate(death, [1.0], [10], grid, RngStream(5, (r,))).states[:, 0] for r in range(reps)])
    z = np.abs(A.mean(axis=0) - 10 * np.exp(-grid)) / (A.std(axis=0, ddof=1) / np.sqrt(reps))
    out = [("linear death mean", bool(np.all(z < 3.0)), f"max z={z.max():.2f} over {reps} runs")]
    net = oscillator_network()
    tr = simulate(net, net.nominal, net.initial, np.arange(0.0, 51.0), RngStream(6))
    cons = np.all(tr["D_A"] + tr["D'_A"] == 1) and np.all(tr["D_R"] + tr["D'_R"] == 1)
    out.append(("oscillator gene-copy conservation", bool(cons and tr.states.min() >= 0), "t in [0, 50]"))
    return out


def run_checks(quick: bool = True):
    results = [
        _lhs_strata(),
        _toy_oracle(100_000 if quick else 1_000_000),
        _gfun_pick_freeze(10_000 if quick else 100_000),
        _pipeline_contract(),
    ]
    results += _ssa_checks(1000 if quick else 10_000)
    return results
