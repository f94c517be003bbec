"""Surrogate-based sampling of the index distribution over the model noise.

For each noise replicate ``omega_i`` a fresh Latin hypercube design of size
``n`` is evaluated at that fixed ``omega_i``, a surrogate is fitted, and its
first-order indices are extracted analytically. The ``m`` index vectors form an
:class:`~stochsobol.sobol.IndexSample` whose moments and histograms describe
the random indices.

Every replicate derives its random streams from ``(seed, dataset, i)`` only,
so results are independent of the number of workers and of task order.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import mars, pce
from .models import StochasticModel, get_model
from .sampling import DESIGN, OMEGA, ORACLE, RngStream, SizeError, lhs
from .sobol import IndexSample, IndexVector, moments, normalized_error

log = logging.getLogger(__name__)

__all__ = [
    "Experiment",
    "run_algorithm2",
    "fit_indices",
    "convergence_study",
    "ConvergenceTable",
    "distribution_summary",
    "tv_distance",
    "run_time_resolved",
    "TimeResolvedIndices",
]


@dataclass(frozen=True)
class Experiment:
    """Description of one surrogate-sampling run.

    ``model_params`` are forwarded to the model factory. ``replicates`` is the
    number of independent datasets used by :func:`convergence_study`.
    ``t_final`` / ``dt`` define the output grid of time-resolved runs and
    ``reuse_design`` shares one design across all noise replicates there.
    """

    model: str
    n: int
    m: int
    surrogate: str = "mars"
    seed: int = 0
    model_params: dict = field(default_factory=dict)
    mars: mars.MarsConfig = field(default_factory=mars.MarsConfig)
    pce_order: int = 3
    pce_tau: float = 0.025
    replicates: int = 500
    t_final: float = 400.0
    dt: float = 1.0
    reuse_design: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.n < 10:
            raise SizeError(f"n must be >= 10, got {self.n}")
        if self.m < 1:
            raise SizeError(f"m must be >= 1, got {self.m}")
        if self.surrogate not in ("mars", "pce"):
            raise ValueError(f"unknown surrogate {self.surrogate!r}")

    def build_model(self) -> StochasticModel:
        return get_model(self.model, **self.model_params)

    def describe(self) -> dict:
        d = asdict(self)
        d.pop("workers")
        return d


def fit_indices(X, y, exp: Experiment, space) -> tuple[IndexVector, dict]:
    """Fit the experiment's surrogate on ``(X, y)`` and return its indices."""
    if exp.surrogate == "mars":
        s = mars.fit(X, y, exp.mars, space)
        summary = mars.anova(s)
    else:
        s = pce.fit_pc(X, y, exp.pce_order, exp.pce_tau, space)
        summary = pce.pc_sobol(s)
    return summary.indices, s.info


def _replicate(model: StochasticModel, exp: Experiment, dataset: int, i: int):
    root = RngStream(exp.seed).substream(dataset, i)
    omega = root.substream(OMEGA)
    noise = model.draw_noise(omega)
    X = lhs(model.space, exp.n, root.substream(DESIGN))
    y = np.asarray(model.evaluate(X, noise), dtype=float)
    idx, info = fit_indices(X, y, exp, model.space)
    return idx, omega.seed64(), X.shape[0], info


def _replicate_block(args):
    model, exp, dataset, ids = args
    return [_replicate(model, exp, dataset, i) for i in ids]


def _chunks(items, k):
    k = max(1, min(k, len(items)))
    size = math.ceil(len(items) / k)
    return [items[j : j + size] for j in range(0, len(items), size)]


def _map_blocks(fn, blocks, workers):
    if workers <= 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, blocks))


def run_algorithm2(exp: Experiment, dataset: int = 0, model: StochasticModel | None = None) -> IndexSample:
    """Sample ``m`` index vectors of the surrogate, one per noise replicate.

    The returned sample's ``meta["evaluations"]`` counts model evaluations and
    equals ``m * n``. Rows whose surrogate has zero variance are kept as
    undefined and counted in ``meta["undefined"]``.
    """
    model = model or exp.build_model()
    ids = list(range(exp.m))
    blocks = [(model, exp, dataset, c) for c in _chunks(ids, exp.workers * 4 if exp.workers > 1 else 1)]
    results = [r for block in _map_blocks(_replicate_block, blocks, exp.workers) for r in block]
    rows = [r[0] for r in results]
    seeds = [r[1] for r in results]
    evaluations = int(sum(r[2] for r in results))
    undefined = sum(not r.defined for r in rows)
    if undefined:
        log.warning("%d of %d replicates gave a constant surrogate", undefined, exp.m)
    meta = {
        "model": exp.model,
        "n": exp.n,
        "m": exp.m,
        "surrogate": exp.surrogate,
        "seed": exp.seed,
        "dataset": dataset,
        "evaluations": evaluations,
        "undefined": undefined,
        "mean_terms": float(np.mean([r[3].get("terms", np.nan) for r in results])) if exp.surrogate == "mars" else None,
        "noise_coupling": "common random numbers: one noise realisation per replicate shared by all design points",
    }
    return IndexSample.from_vectors(rows, seeds, meta)


@dataclass
class ConvergenceTable:
    n_values: list[int]
    mean_error: np.ndarray
    error_stderr: np.ndarray
    errors: np.ndarray  # (len(n_values), replicates)
    rate: float
    exact: np.ndarray

    def to_csv(self, header_comment: str | None = None) -> str:
        lines = [f"# {header_comment}"] if header_comment else []
        lines.append("n,mean_error,stderr,replicates")
        for n, e, s in zip(self.n_values, self.mean_error, self.error_stderr):
            lines.append(f"{n},{float(e)!r},{float(s)!r},{self.errors.shape[1]}")
        return "\n".join(lines) + "\n"


def _dataset_error(args):
    exp, model, exact, dataset = args
    sample = run_algorithm2(replace(exp, workers=1), dataset=dataset, model=model)
    mu = moments(sample, 1).values
    return normalized_error(exact, mu)


def loglog_rate(n_values, errors) -> float:
    """Convergence rate r in ``error ~ n^-r`` from a least-squares fit in log-log scale."""
    slope = np.polyfit(np.log(np.asarray(n_values, float)), np.log(np.asarray(errors, float)), 1)[0]
    return float(-slope)


def convergence_study(template: Experiment, n_values, replicates: int | None = None) -> ConvergenceTable:
    """Average normalised error of the expected indices as ``n`` grows.

    For each ``n`` and each dataset ``l`` the sample mean of the indices over
    ``m`` noise replicates is compared with the exact expectations; the table
    holds the average over datasets and the fitted log-log rate.
    """
    replicates = replicates or template.replicates
    model = template.build_model()
    if not model.has_oracle:
        raise ValueError(f"model {template.model!r} has no analytic oracle")
    exact = np.asarray(model.expected_indices())
    errs = np.zeros((len(n_values), replicates))
    for a, n in enumerate(n_values):
        exp = replace(template, n=int(n))
        tasks = [(exp, model, exact, ell) for ell in range(replicates)]
        errs[a] = _map_blocks(_dataset_error, tasks, template.workers)
        log.info("n=%d mean error %.4g", n, errs[a].mean())
    mean = errs.mean(axis=1)
    se = errs.std(axis=1, ddof=1) / np.sqrt(replicates) if replicates > 1 else np.zeros(len(n_values))
    rate = loglog_rate(n_values, mean) if len(n_values) > 1 else float("nan")
    return ConvergenceTable(list(map(int, n_values)), mean, se, errs, rate, exact)


def histograms(values: np.ndarray, bins: int = 50) -> np.ndarray:
    """Per-column relative-frequency histograms over ``[0, 1]``; shape ``(p, bins)``."""
    values = np.atleast_2d(values)
    edges = np.linspace(0.0, 1.0, bins + 1)
    out = np.zeros((values.shape[1], bins))
    for k in range(values.shape[1]):
        counts, _ = np.histogram(np.clip(values[:, k], 0.0, 1.0), bins=edges)
        out[k] = counts / max(values.shape[0], 1)
    return out


def tv_distance(p_hist, q_hist) -> float:
    """Total-variation distance between two relative-frequency histograms."""
    return 0.5 * float(np.sum(np.abs(np.asarray(p_hist) - np.asarray(q_hist))))


def distribution_summary(sample: IndexSample, bins: int = 50, model: StochasticModel | None = None,
                         oracle_size: int = 1_000_000, seed: int = 0) -> dict:
    """Histograms of each index and, when ``model`` has an oracle, QQ pairs.

    QQ pairs are ``(exact quantile, surrogate quantile)`` at percentiles
    1..99; the exact distribution is represented by ``oracle_size`` draws of
    the analytic indices.
    """
    v = sample.valid()
    if v.shape[0] < 30:
        raise SizeError("need at least 30 defined rows for histograms")
    out = {
        "bins": bins,
        "edges": np.linspace(0.0, 1.0, bins + 1).tolist(),
        "histograms": histograms(v, bins).tolist(),
        "excluded_undefined": int(sample.m - v.shape[0]),
    }
    if model is not None and model.has_oracle:
        ref = model.oracle_sample(RngStream(seed).substream(ORACLE), oracle_size)
        pct = np.arange(1, 100)
        out["percentiles"] = pct.tolist()
        out["qq_exact"] = np.percentile(ref, pct, axis=0).T.tolist()
        out["qq_surrogate"] = np.percentile(v, pct, axis=0).T.tolist()
        out["oracle_histograms"] = histograms(ref, bins).tolist()
    return out


@dataclass
class TimeResolvedIndices:
    """Index samples at every output time of a time-resolved run.

    ``values`` has shape ``(T, m, p)`` and ``defined`` shape ``(T, m)``.
    """

    times: np.ndarray
    values: np.ndarray
    defined: np.ndarray
    omega_seeds: np.ndarray
    names: tuple[str, ...]
    meta: dict = field(default_factory=dict)

    def sample_at(self, j: int) -> IndexSample:
        return IndexSample(self.values[j], self.defined[j], self.omega_seeds, {"time": float(self.times[j])})

    def mean(self) -> np.ndarray:
        """Mean index per time and variable over defined rows; NaN where none are defined."""
        out = np.full((len(self.times), self.values.shape[2]), np.nan)
        for j in range(len(self.times)):
            ok = self.defined[j]
            if ok.any():
                out[j] = self.values[j][ok].mean(axis=0)
        return out

    def variance(self) -> np.ndarray:
        out = np.full((len(self.times), self.values.shape[2]), np.nan)
        for j in range(len(self.times)):
            ok = self.defined[j]
            if ok.sum() > 1:
                out[j] = self.values[j][ok].var(axis=0, ddof=1)
        return out

    def histogram_tensor(self, bins: int = 50) -> np.ndarray:
        """Shape ``(p, T, bins)``; each time slice is a relative-frequency histogram."""
        T, _, p = self.values.shape
        out = np.zeros((p, T, bins))
        for j in range(T):
            ok = self.defined[j]
            if ok.any():
                out[:, j, :] = histograms(self.values[j][ok], bins)
        return out


def run_time_resolved(exp: Experiment, model=None) -> TimeResolvedIndices:
    """Indices of a trajectory-valued model at every time of the output grid.

    For each noise replicate the model is simulated at every design point with
    the replicate's shared seed; a surrogate is then fitted independently at
    each output time.
    """
    model = model or exp.build_model()
    if not hasattr(model, "simulate_design"):
        raise ValueError(f"model {exp.model!r} does not produce trajectories")
    times = np.arange(0.0, exp.t_final + 0.5 * exp.dt, exp.dt)
    ids = list(range(exp.m))
    blocks = [(model, exp, times, c) for c in _chunks(ids, exp.workers * 4 if exp.workers > 1 else 1)]
    results = [r for block in _map_blocks(_time_block, blocks, exp.workers) for r in block]
    T, p = len(times), model.space.dim
    values = np.zeros((T, exp.m, p))
    defined = np.zeros((T, exp.m), dtype=bool)
    seeds = np.zeros(exp.m, dtype=np.uint64)
    evaluations = 0
    for i, (rows, seed, nev) in enumerate(results):
        seeds[i] = seed
        evaluations += nev
        for j, r in enumerate(rows):
            if r.defined:
                values[j, i] = r.values
                defined[j, i] = True
    meta = {
        "model": exp.model,
        "n": exp.n,
        "m": exp.m,
        "seed": exp.seed,
        "t_final": exp.t_final,
        "dt": exp.dt,
        "reuse_design": exp.reuse_design,
        "evaluations": evaluations,
        "undefined_per_time": (~defined).sum(axis=1).tolist(),
        "noise_coupling": "common random numbers: one SSA seed per replicate shared by all design points",
    }
    return TimeResolvedIndices(times, values, defined, seeds, model.space.names, meta)


def _time_block(args):
    model, exp, times, ids = args
    out = []
    root = RngStream(exp.seed)
    for i in ids:
        rep = root.substream(0, i)
        omega = rep.substream(OMEGA)
        design_stream = root.substream(0, 0, DESIGN) if exp.reuse_design else rep.substream(DESIGN)
        X = lhs(model.space, exp.n, design_stream)
        Y = model.simulate_design(X, omega.seed64(), times)  # (n, T)
        rows = []
        for j in range(len(times)):
            y = Y[:, j].astype(float)
            if np.ptp(y) == 0.0:
                rows.append(IndexVector.undefined(model.space.dim))
                continue
            idx, _ = fit_indices(X, y, exp, model.space)
            rows.append(idx)
        out.append((rows, omega.seed64(), X.shape[0]))
    return out
