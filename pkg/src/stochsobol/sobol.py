"""First-order Sobol' indices: containers, Monte Carlo estimator, error and moments.

An index vector whose output variance is zero has no meaningful indices. That
situation is represented explicitly (``IndexVector.undefined``) and is never
encoded as NaN values travelling through arithmetic.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .sampling import ParameterSpace, RngStream, SizeError

__all__ = [
    "UndefinedIndexError",
    "IndexVector",
    "IndexSample",
    "MomentEstimate",
    "saltelli",
    "normalized_error",
    "moments",
    "variance_bound_check",
]

UNDEFINED = "undefined"


class UndefinedIndexError(ValueError):
    """Raised when numbers are requested from an undefined index vector."""


@dataclass(frozen=True)
class IndexVector:
    """First-order indices ``S_1..S_p``, or the undefined state.

    ``stderr`` is filled by Monte Carlo estimators. ``clamped`` marks entries
    whose raw estimate fell outside ``[0, 1]`` and was clipped.
    """

    p: int
    _values: np.ndarray | None = None
    stderr: np.ndarray | None = None
    clamped: np.ndarray | None = None

    @classmethod
    def of(cls, values, stderr=None, clamped=None) -> "IndexVector":
        v = np.asarray(values, dtype=float).copy()
        v.setflags(write=False)
        return cls(v.size, v, None if stderr is None else np.asarray(stderr, float), clamped)

    @classmethod
    def undefined(cls, p: int) -> "IndexVector":
        return cls(int(p))

    @property
    def defined(self) -> bool:
        return self._values is not None

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            raise UndefinedIndexError("index vector is undefined (zero output variance)")
        return self._values

    def __len__(self):
        return self.p

    def __repr__(self):
        if not self.defined:
            return f"IndexVector(p={self.p}, {UNDEFINED})"
        return f"IndexVector({np.array2string(self._values, precision=4)})"


@dataclass
class IndexSample:
    """``m`` realisations of the index vector, one row per noise replicate.

    Rows whose surrogate was degenerate are kept in place with
    ``defined[i] = False``; their entries in ``values`` carry no meaning.
    """

    values: np.ndarray
    defined: np.ndarray
    omega_seeds: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.defined = np.asarray(self.defined, dtype=bool)
        self.omega_seeds = np.asarray(self.omega_seeds, dtype=np.uint64)
        if self.values.ndim != 2:
            raise SizeError("IndexSample values must be an m x p matrix")
        if not (len(self.defined) == len(self.omega_seeds) == self.values.shape[0]):
            raise SizeError("values, defined and omega_seeds disagree on m")
        self.values[~self.defined] = 0.0

    @classmethod
    def from_vectors(cls, rows: Sequence[IndexVector], omega_seeds, meta=None) -> "IndexSample":
        p = rows[0].p
        vals = np.zeros((len(rows), p))
        ok = np.zeros(len(rows), dtype=bool)
        for i, r in enumerate(rows):
            if r.defined:
                vals[i] = r.values
                ok[i] = True
        return cls(vals, ok, np.asarray(omega_seeds, dtype=np.uint64), dict(meta or {}))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def valid(self) -> np.ndarray:
        """Matrix of the defined rows only."""
        return self.values[self.defined]

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["omega_seed"] + [f"S_{k + 1}" for k in range(self.p)])
        for seed, ok, row in zip(self.omega_seeds, self.defined, self.values):
            if ok:
                w.writerow([int(seed)] + [repr(float(v)) for v in row])
            else:
                w.writerow([int(seed)] + [UNDEFINED] * self.p)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "IndexSample":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rows = list(csv.reader(lines))
        header, body = rows[0], rows[1:]
        p = len(header) - 1
        vals = np.zeros((len(body), p))
        ok = np.ones(len(body), dtype=bool)
        seeds = np.zeros(len(body), dtype=np.uint64)
        for i, r in enumerate(body):
            seeds[i] = int(r[0])
            if r[1] == UNDEFINED:
                ok[i] = False
            else:
                vals[i] = [float(v) for v in r[1:]]
        return cls(vals, ok, seeds)


@dataclass(frozen=True)
class MomentEstimate:
    """Per-variable sample ``r``-th moment over ``m`` defined replicates."""

    order: int
    values: np.ndarray
    m: int

    @property
    def bound(self) -> float:
        return 1.0 / (4.0 * self.m)

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "m": self.m,
            "moments": [float(v) for v in self.values],
            "variance_bound": self.bound,
        }


def _janon(y: np.ndarray, yk: np.ndarray):
    """Janon-normalised pick-freeze estimate and its delta-method standard error.

    ``y`` is ``f(A)``; ``yk`` is ``f`` at points sharing only coordinate k with A.
    Works column-wise when ``yk`` is ``(N, p)``.
    """
    n = y.shape[0]
    y = y[:, None]
    mean = 0.5 * (y.mean(axis=0) + yk.mean(axis=0))
    yc = y - mean
    ykc = yk - mean
    num = np.mean(yc * ykc, axis=0)
    den = np.mean(0.5 * (yc**2 + ykc**2), axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = num / den
        infl = yc * ykc - 0.5 * s * (yc**2 + ykc**2)
        se = np.sqrt(np.var(infl, axis=0, ddof=1) / n) / den
    return s, se, den


def saltelli(
    fn: Callable[[np.ndarray], np.ndarray],
    space: ParameterSpace,
    N: int,
    rng: RngStream,
) -> IndexVector:
    """Pick-and-freeze estimate of first-order indices.

    ``fn`` maps an ``(N, p)`` array of points to ``N`` outputs. Two independent
    blocks A and B are drawn; for each k the block B with column k taken from A
    is evaluated, for exactly ``(p + 1) N`` evaluations. Estimates outside
    ``[0, 1]`` are clipped and flagged in ``clamped``.
    """
    if N < 100:
        raise SizeError(f"saltelli needs N >= 100, got {N}")
    gen = rng.generator()
    p = space.dim
    A = space.draw(gen, N)
    B = space.draw(gen, N)
    y = np.asarray(fn(A), dtype=float)
    yk = np.empty((N, p))
    for k in range(p):
        Bk = B.copy()
        Bk[:, k] = A[:, k]
        yk[:, k] = fn(Bk)
    s, se, den = _janon(y, yk)
    if not np.all(den > 1e-14 * max(1.0, float(np.mean(y**2)))):
        return IndexVector.undefined(p)
    clamped = (s < 0.0) | (s > 1.0)
    return IndexVector.of(np.clip(s, 0.0, 1.0), stderr=se, clamped=clamped)


def normalized_error(exact, approx) -> float:
    """Sup-norm distance between the two index vectors after dividing each by its sum."""
    e = exact.values if isinstance(exact, IndexVector) else np.asarray(exact, dtype=float)
    a = approx.values if isinstance(approx, IndexVector) else np.asarray(approx, dtype=float)
    if e.shape != a.shape:
        raise SizeError("index vectors differ in length")
    se, sa = e.sum(), a.sum()
    if not (se > 0 and sa > 0):
        raise UndefinedIndexError("normalized error needs positive index sums")
    return float(np.max(np.abs(e / se - a / sa)))


def moments(sample: IndexSample, r: int) -> MomentEstimate:
    """Sample ``r``-th moment of each index over the defined rows."""
    if r < 1:
        raise ValueError(f"moment order must be >= 1, got {r}")
    v = sample.valid()
    if v.shape[0] == 0:
        raise SizeError("no defined rows in index sample")
    return MomentEstimate(int(r), np.mean(v**r, axis=0), v.shape[0])


@dataclass(frozen=True)
class BoundReport:
    """Spread of a moment estimator over independent replicates versus its bound."""

    empirical_var: np.ndarray
    var_stderr: np.ndarray
    bernoulli_bound: np.ndarray
    bound: float
    violations: np.ndarray
    replicates: int

    @property
    def ok(self) -> bool:
        return not bool(np.any(self.violations))

    def to_json(self) -> dict:
        return {
            "replicates": self.replicates,
            "bound": self.bound,
            "empirical_var": self.empirical_var.tolist(),
            "var_stderr": self.var_stderr.tolist(),
            "mean_based_bound": self.bernoulli_bound.tolist(),
            "violations": self.violations.tolist(),
            "ok": self.ok,
        }


def variance_bound_check(samples: Iterable[MomentEstimate], slack: float = 3.0) -> BoundReport:
    """Compare the replicate variance of moment estimates to ``1/(4m)``.

    A variable is flagged when its empirical variance exceeds the bound by more
    than ``slack`` standard errors of the variance estimate itself.
    """
    samples = list(samples)
    if len(samples) < 2:
        raise SizeError("need at least two replicates")
    m = samples[0].m
    vals = np.array([s.values for s in samples])
    R = vals.shape[0]
    var = np.var(vals, axis=0, ddof=1)
    centred = vals - vals.mean(axis=0)
    m4 = np.mean(centred**4, axis=0)
    var_se = np.sqrt(np.maximum(m4 - var**2 * (R - 3) / (R - 1), 0.0) / R)
    mean = vals.mean(axis=0)
    bound = 1.0 / (4.0 * m)
    return BoundReport(
        empirical_var=var,
        var_stderr=var_se,
        bernoulli_bound=mean * (1.0 - mean) / m,
        bound=bound,
        violations=var > bound + slack * var_se,
        replicates=R,
    )


def moments_json(est: MomentEstimate, meta: dict | None = None) -> str:
    doc = {"metadata": dict(meta or {}), **est.to_json()}
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
