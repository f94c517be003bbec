"""Additive MARS surrogates and their closed-form first-order Sobol' indices.

The surrogate is

    f(x) = b0 + sum_k sum_j b_kj * h_kj(x_k)

with every ``h_kj`` a hinge ``max(0, x_k - t)`` or ``max(0, t - x_k)``. Because
each term depends on one coordinate only, the ANOVA decomposition is obtained
by centring each term, and the main-effect variances are integrals of
piecewise-quadratic functions, which Simpson's rule integrates exactly.

Fitting follows the usual two-pass scheme. The forward pass greedily adds
reflected hinge pairs with knots at observed data values. The backward pass
deletes single terms and keeps the subset with the smallest generalized
cross-validation score.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .sampling import FALLBACK, ParameterSpace, RngStream, SizeError
from .sobol import IndexVector

__all__ = [
    "Hinge",
    "MarsConfig",
    "AdditiveSurrogate",
    "AnovaSummary",
    "fit",
    "evaluate",
    "anova",
    "hinge_mean",
]


@dataclass(frozen=True)
class Hinge:
    """``max(0, x_k - t)`` for ``sign=+1``, ``max(0, t - x_k)`` for ``sign=-1``."""

    variable: int
    knot: float
    sign: int

    def __call__(self, xk):
        return np.maximum(0.0, self.sign * (np.asarray(xk, dtype=float) - self.knot))


@dataclass(frozen=True)
class MarsConfig:
    """Fitting controls.

    max_terms
        Cap on basis size (intercept included) at the end of the forward pass.
        ``None`` means ``min(200, max(20, 2p)) + 1``.
    threshold
        Forward pass stops once the best candidate raises R^2 by less than
        this, or once R^2 exceeds ``1 - threshold``.
    penalty
        GCV cost per knot.
    knot_cap
        When set and ``n > 500``, candidate knots per variable are thinned to
        this many evenly spaced order statistics.
    endspan, minspan
        Knots are barred from the ``endspan`` smallest and largest order
        statistics of each variable and restricted to every ``minspan``-th one
        in between. ``None`` picks the usual data-driven spans (5% chance of a
        spurious run of noise, Friedman 1991); ``endspan=0, minspan=1`` keeps
        every observed value as a candidate.
    """

    max_terms: int | None = None
    threshold: float = 1e-3
    penalty: float = 2.0
    knot_cap: int | None = None
    endspan: int | None = None
    minspan: int | None = None
    dependence_tol: float = 1e-10

    def terms_for(self, n: int, p: int) -> int:
        if self.max_terms is not None:
            return int(self.max_terms)
        return min(200, max(20, 2 * p)) + 1

    def spans_for(self, n: int, p: int) -> tuple[int, int]:
        alpha = 0.05
        endspan = self.endspan
        if endspan is None:
            endspan = int(3.0 - math.log2(alpha / p))
        minspan = self.minspan
        if minspan is None:
            minspan = int(-math.log2(-math.log1p(-alpha) / (p * n)) / 2.5)
        endspan = min(max(endspan, 0), (n - 1) // 2)
        return endspan, max(minspan, 1)


@dataclass(frozen=True)
class AdditiveSurrogate:
    intercept: float
    hinges: tuple[Hinge, ...]
    coefs: np.ndarray
    space: ParameterSpace
    info: dict = field(default_factory=dict, compare=False)

    @property
    def p(self) -> int:
        return self.space.dim

    def terms_of(self, k: int) -> list[tuple[Hinge, float]]:
        return [(h, float(c)) for h, c in zip(self.hinges, self.coefs) if h.variable == k]

    def __call__(self, x):
        return evaluate(self, x)

    def to_json(self) -> str:
        doc = {
            "kind": "mars-additive",
            "intercept": float(self.intercept),
            "space": self.space.to_dict(),
            "terms": [
                {"variable": h.variable, "knot": float(h.knot), "sign": "+" if h.sign > 0 else "-", "coef": float(c)}
                for h, c in zip(self.hinges, self.coefs)
            ],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AdditiveSurrogate":
        doc = json.loads(text)
        if doc.get("kind") != "mars-additive":
            raise ValueError("not an additive MARS document")
        hinges = tuple(Hinge(int(t["variable"]), float(t["knot"]), 1 if t["sign"] == "+" else -1) for t in doc["terms"])
        coefs = np.array([float(t["coef"]) for t in doc["terms"]])
        return cls(float(doc["intercept"]), hinges, coefs, ParameterSpace.from_dict(doc["space"]))


@dataclass(frozen=True)
class AnovaSummary:
    """Main-effect decomposition of a surrogate.

    ``means[k]`` lists the basis-function means for variable k (empty for PC
    surrogates), ``variances[k]`` is its main-effect variance and
    ``total_variance`` the variance the indices are normalised by.
    """

    means: tuple[np.ndarray, ...]
    variances: np.ndarray
    indices: IndexVector
    total_variance: float
    approximate: bool = False


# ---------------------------------------------------------------------------
# fitting


def _suffix(v):
    """Reverse cumulative sum along axis 0: out[i] = sum_{j >= i} v[j]."""
    return np.cumsum(v[::-1], axis=0)[::-1]


def _hinge_dot(delta, vs):
    """Inner products <(x - x_(i))_+, v> for every sorted position i, column-wise.

    ``delta`` holds the gaps between consecutive sorted values, ``vs`` the
    vector in sorted order. Accumulating ``gap * tail-sum`` from the top keeps
    the result accurate for knots near the maximum, where the direct
    ``sum(x v) - t sum(v)`` form cancels.
    """
    tail = _suffix(vs)[1:]
    out = np.zeros_like(vs)
    out[:-1] = _suffix(delta * tail)
    return out


class _Forward:
    """State of the forward pass over an orthonormal basis ``Q``."""

    def __init__(self, X, y, cfg: MarsConfig):
        n, p = X.shape
        self.X, self.y, self.cfg = X, y, cfg
        self.n, self.p = n, p
        self.order = np.argsort(X, axis=0, kind="stable")
        self.xs = np.take_along_axis(X, self.order, axis=0)
        self.delta = np.diff(self.xs, axis=0)
        counts = np.arange(n - 1, 0, -1, dtype=float)[:, None]  # points strictly above gap l
        lin = np.zeros((n, p))
        lin[:-1] = _suffix(self.delta * counts)
        sq = np.zeros((n, p))
        lin_above = np.vstack([lin[1:], np.zeros((1, p))])
        sq[:-1] = _suffix(2.0 * self.delta * lin_above[:-1] + counts * self.delta**2)
        self.hh = sq
        self.hq2 = np.zeros((n, p))
        self.allowed = np.ones((n, p), dtype=bool)
        if cfg.knot_cap is not None and n > 500:
            keep = np.unique(np.linspace(0, n - 1, int(cfg.knot_cap)).round().astype(int))
            self.allowed[:] = False
            self.allowed[keep] = True
        endspan, minspan = cfg.spans_for(n, p)
        if endspan > 0:
            self.allowed[:endspan] = False
            self.allowed[n - endspan :] = False
        if minspan > 1:
            pos = np.arange(n) - endspan
            self.allowed[pos % minspan != 0] = False
        self.Q = np.empty((n, 0))
        self.R_cols: list[np.ndarray] = []
        self.columns: list[np.ndarray] = []
        self.labels: list[Hinge | None] = []
        self.r = y.astype(float).copy()
        self.xperp = X.astype(float).copy()
        self.xscale = np.sum((X - X.mean(axis=0)) ** 2, axis=0)

    def add_column(self, col, label) -> bool:
        norm = np.linalg.norm(col)
        if norm == 0.0:
            return False
        v = col.copy()
        coef = np.zeros(self.Q.shape[1])
        for _ in range(2):
            c = self.Q.T @ v
            v -= self.Q @ c
            coef += c
        rnorm = np.linalg.norm(v)
        if rnorm <= self.cfg.dependence_tol * norm:
            return False
        q = v / rnorm
        self.Q = np.column_stack([self.Q, q])
        self.R_cols.append(np.append(coef, rnorm))
        self.columns.append(col)
        self.labels.append(label)
        self.r -= q * (q @ self.r)
        self.xperp -= np.outer(q, q @ self.xperp)
        gq = _hinge_dot(self.delta, q[self.order])
        self.hq2 += gq * gq
        return True

    def best_pair(self):
        """Best (variable, sorted position) to split at and its RSS reduction."""
        xx = np.sum(self.xperp**2, axis=0)
        xr = self.xperp.T @ self.r
        xok = xx > 1e-9 * np.maximum(self.xscale, 1e-300)
        sx = np.sqrt(np.where(xok, xx, 1.0))
        lin_gain = np.where(xok, xr**2 / np.where(xok, xx, 1.0), 0.0)
        hr = _hinge_dot(self.delta, self.r[self.order])
        hx = _hinge_dot(self.delta, np.take_along_axis(self.xperp, self.order, axis=0))
        g = np.where(xok, hx / sx, 0.0)
        hperp2 = self.hh - self.hq2 - g * g
        num = hr - g * np.where(xok, xr / sx, 0.0)
        ok = self.allowed & (self.hh > 0) & (hperp2 > 1e-9 * self.hh)
        gain = np.where(ok, lin_gain + num * num / np.where(ok, hperp2, 1.0), -np.inf)
        flat = gain.T.ravel()  # variable-major, knots ascending: first max wins ties
        idx = int(np.argmax(flat))
        k, i = divmod(idx, self.n)
        return k, i, float(flat[idx])

    def rss(self):
        return float(self.r @ self.r)


def _backward(R, z, yy, n, penalty):
    """Delete terms one at a time; return the kept column indices minimising GCV.

    Works in the coordinates of the forward basis: the design is ``Q R`` and
    ``z = Q^T y``, so every reduced least-squares problem is ``M x M``.
    """
    M = R.shape[0]
    active = list(range(M))
    Rinv = scipy.linalg.solve_triangular(R, np.eye(M))
    C = Rinv @ Rinv.T
    beta = Rinv @ z
    rss = max(yy - float(z @ z), 0.0)
    best = (math.inf, list(active))

    def gcv(rss_, size):
        cost = size + penalty * (size - 1) / 2.0
        if cost >= n:
            return math.inf
        return (rss_ / n) / (1.0 - cost / n) ** 2

    g = gcv(rss, len(active))
    if g < best[0]:
        best = (g, list(active))
    while len(active) > 1:
        d = np.diag(C)[1:]
        inc = beta[1:] ** 2 / d
        j = 1 + int(np.argmin(inc))
        rss += float(inc[j - 1])
        cj = C[:, j].copy()
        beta = beta - cj * (beta[j] / C[j, j])
        C = C - np.outer(cj, cj) / C[j, j]
        keep = np.arange(len(active)) != j
        C = C[np.ix_(keep, keep)]
        beta = beta[keep]
        del active[j]
        g = gcv(rss, len(active))
        if g <= best[0]:
            best = (g, list(active))
    return best[1], best[0]


def _lstsq_pivoted(B, y, tol):
    """Least squares by pivoted QR; columns below ``tol`` relative are dropped."""
    Qm, Rm, piv = scipy.linalg.qr(B, mode="economic", pivoting=True)
    diag = np.abs(np.diag(Rm))
    rank = int(np.sum(diag > tol * diag[0])) if diag.size else 0
    coef = np.zeros(B.shape[1])
    if rank:
        sol = scipy.linalg.solve_triangular(Rm[:rank, :rank], (Qm[:, :rank].T @ y))
        coef[piv[:rank]] = sol
    return coef, piv[:rank]


def fit(design, responses, config: MarsConfig | None = None, space: ParameterSpace | None = None) -> AdditiveSurrogate:
    """Fit an additive MARS surrogate to ``(design, responses)``.

    Parameters
    ----------
    design : array, shape (n, p)
    responses : array, shape (n,)
    config : MarsConfig, optional
    space : ParameterSpace, optional
        Input law used later by :func:`anova`; defaults to the unit cube.
    """
    cfg = config or MarsConfig()
    X = np.asarray(design, dtype=float)
    y = np.asarray(responses, dtype=float)
    if X.ndim != 2:
        raise SizeError("design must be an (n, p) matrix")
    n, p = X.shape
    if y.shape != (n,):
        raise SizeError(f"expected {n} responses, got shape {y.shape}")
    if n < 10:
        raise SizeError(f"MARS needs at least 10 rows, got {n}")
    if space is None:
        space = ParameterSpace.uniform_box([(0.0, 1.0)] * p)
    if space.dim != p:
        raise SizeError("parameter space dimension does not match design")

    fw = _Forward(X, y, cfg)
    fw.add_column(np.ones(n), None)
    yy = float(y @ y)
    tss = fw.rss()
    max_terms = min(cfg.terms_for(n, p), n - 1)
    steps = 0
    if tss > 1e-24 * max(yy, 1e-300):
        while len(fw.labels) + 2 <= max_terms:
            k, i, gain = fw.best_pair()
            if not np.isfinite(gain) or gain / tss < cfg.threshold:
                break
            t = float(fw.xs[i, k])
            xk = X[:, k]
            added = fw.add_column(np.maximum(0.0, xk - t), Hinge(k, t, 1))
            added |= fw.add_column(np.maximum(0.0, t - xk), Hinge(k, t, -1))
            if not added:
                fw.allowed[i, k] = False
                continue
            steps += 1
            if fw.rss() / tss < cfg.threshold:
                break

    M = len(fw.labels)
    R = np.zeros((M, M))
    for j, col in enumerate(fw.R_cols):
        R[: len(col), j] = col
    z = fw.Q.T @ y
    kept, gcv = _backward(R, z, yy, n, cfg.penalty)

    B = np.column_stack([fw.columns[j] for j in kept])
    coef, used = _lstsq_pivoted(B, y, cfg.dependence_tol)
    used = set(int(u) for u in used)
    intercept = float(coef[0]) if 0 in used else 0.0
    hinges, coefs = [], []
    for pos, j in enumerate(kept):
        if j == 0 or pos not in used or coef[pos] == 0.0:
            continue
        hinges.append(fw.labels[j])
        coefs.append(coef[pos])
    fitted = B @ coef
    rss = float(np.sum((y - fitted) ** 2))
    info = {
        "n": n,
        "forward_terms": M,
        "forward_steps": steps,
        "terms": len(hinges) + 1,
        "rss": rss,
        "r2": 1.0 - rss / tss if tss > 0 else 1.0,
        "gcv": gcv,
    }
    return AdditiveSurrogate(intercept, tuple(hinges), np.array(coefs, dtype=float), space, info)


# ---------------------------------------------------------------------------
# evaluation and ANOVA


def evaluate(s: AdditiveSurrogate, x):
    """Surrogate value at a point (shape ``(p,)``) or at each row of ``(N, p)``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != s.p:
        raise SizeError(f"expected points of dimension {s.p}, got {X.shape[1]}")
    out = np.full(X.shape[0], s.intercept)
    for h, c in zip(s.hinges, s.coefs):
        out += c * h(X[:, h.variable])
    return float(out[0]) if single else out


def hinge_mean(h: Hinge, a: float = 0.0, b: float = 1.0) -> float:
    """Mean of a hinge under ``U(a, b)``; ``(1 - t)^2 / 2`` for ``(x - t)_+`` on the unit interval."""
    t = h.knot
    if h.sign > 0:
        lo = max(t, a)
        if lo >= b:
            return 0.0
        return ((b - t) ** 2 - (lo - t) ** 2) / (2.0 * (b - a))
    hi = min(t, b)
    if hi <= a:
        return 0.0
    return ((t - a) ** 2 - (t - hi) ** 2) / (2.0 * (b - a))


def _component_variance_uniform(terms, a, b, centre):
    knots = sorted({min(max(h.knot, a), b) for h, _ in terms} | {a, b})
    lo = np.array(knots[:-1])
    hi = np.array(knots[1:])
    mid = 0.5 * (lo + hi)

    def g(x):
        return sum(c * h(x) for h, c in terms) - centre

    # Simpson is exact for the piecewise quadratic integrand
    integral = np.sum((hi - lo) / 6.0 * (g(lo) ** 2 + 4.0 * g(mid) ** 2 + g(hi) ** 2))
    return float(integral / (b - a))


def anova(s: AdditiveSurrogate, rng: RngStream | None = None, fallback_size: int = 100_000) -> AnovaSummary:
    """Main-effect variances and first-order indices of an additive surrogate.

    Uniform coordinates are handled in closed form. Any other input law falls
    back to sample moments on a fresh Monte Carlo design of ``fallback_size``
    points drawn from ``rng``; the summary is then flagged ``approximate``.
    """
    p = s.p
    means, var = [], np.zeros(p)
    approximate = not s.space.all_uniform
    if approximate:
        gen = (rng or RngStream(0)).substream(FALLBACK).generator()
        Xmc = s.space.draw(gen, fallback_size)
    for k in range(p):
        terms = s.terms_of(k)
        if not terms:
            means.append(np.zeros(0))
            continue
        if approximate:
            xk = Xmc[:, k]
            I = np.array([h(xk).mean() for h, _ in terms])
            comp = sum(c * h(xk) for h, c in terms)
            var[k] = float(np.var(comp))
        else:
            a, b = s.space.dists[k].params
            I = np.array([hinge_mean(h, a, b) for h, _ in terms])
            centre = float(sum(c * m for (_, c), m in zip(terms, I)))
            var[k] = max(_component_variance_uniform(terms, a, b, centre), 0.0)
        means.append(I)
    total = float(var.sum())
    if total > 0.0:
        idx = IndexVector.of(var / total)
    else:
        idx = IndexVector.undefined(p)
    return AnovaSummary(tuple(means), var, idx, total, approximate)
