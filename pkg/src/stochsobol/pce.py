"""Sparse Legendre polynomial-chaos surrogate.

Coefficients solve ``min ||L c - d||^2`` subject to ``mean(|c|) <= tau`` with a
spectral projected-gradient method on the l1 ball. First-order indices follow
from the coefficients because the basis is orthonormal under the uniform law.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .mars import AnovaSummary
from .sampling import ParameterSpace, SizeError
from .sobol import IndexVector

__all__ = [
    "UnsupportedDistributionError",
    "PcBasis",
    "PcSurrogate",
    "legendre_orthonormal",
    "project_l1_ball",
    "spg_l1",
    "fit_pc",
    "pc_sobol",
]


class UnsupportedDistributionError(ValueError):
    """Raised for inputs that are not uniform (only Legendre chaos is provided)."""


def legendre_orthonormal(xi, order: int) -> np.ndarray:
    """Legendre polynomials of degree 0..order at ``xi`` in [-1, 1], scaled to unit variance.

    Returns an array of shape ``xi.shape + (order + 1,)``.
    """
    xi = np.asarray(xi, dtype=float)
    P = np.empty(xi.shape + (order + 1,))
    P[..., 0] = 1.0
    if order >= 1:
        P[..., 1] = xi
    for k in range(1, order):
        P[..., k + 1] = ((2 * k + 1) * xi * P[..., k] - k * P[..., k - 1]) / (k + 1)
    return P * np.sqrt(2.0 * np.arange(order + 1) + 1.0)


@dataclass(frozen=True)
class PcBasis:
    """Total-degree multi-index set in graded lexicographic order."""

    dim: int
    order: int
    indices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        rows = []
        for d in range(self.order + 1):
            for combo in itertools.combinations_with_replacement(range(self.dim), d):
                alpha = np.zeros(self.dim, dtype=int)
                for j in combo:
                    alpha[j] += 1
                rows.append(alpha)
        object.__setattr__(self, "indices", np.array(rows, dtype=int).reshape(-1, self.dim))

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    def matrix(self, X, space: ParameterSpace) -> np.ndarray:
        """Basis functions at the rows of ``X``; shape ``(n, size)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        lo, hi = space.bounds().T
        xi = 2.0 * (X - lo) / (hi - lo) - 1.0
        P = legendre_orthonormal(xi, self.order)  # (n, p, order + 1)
        out = np.ones((X.shape[0], self.size))
        for j in range(self.dim):
            out *= P[:, j, self.indices[:, j]]
        return out


@dataclass(frozen=True)
class PcSurrogate:
    basis: PcBasis
    coefs: np.ndarray
    space: ParameterSpace
    info: dict = field(default_factory=dict, compare=False)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if np.atleast_2d(X).shape[1] != self.basis.dim:
            raise SizeError(f"expected points of dimension {self.basis.dim}")
        out = self.basis.matrix(X, self.space) @ self.coefs
        return float(out[0]) if single else out

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "pce-legendre",
                "order": self.basis.order,
                "space": self.space.to_dict(),
                "multi_indices": self.basis.indices.tolist(),
                "coefs": [float(c) for c in self.coefs],
            },
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "PcSurrogate":
        doc = json.loads(text)
        if doc.get("kind") != "pce-legendre":
            raise ValueError("not a Legendre PC document")
        space = ParameterSpace.from_dict(doc["space"])
        basis = PcBasis(space.dim, int(doc["order"]))
        if basis.indices.tolist() != doc["multi_indices"]:
            raise ValueError("multi-index list does not match the graded ordering")
        return cls(basis, np.array(doc["coefs"], dtype=float), space)


def project_l1_ball(v, radius: float) -> np.ndarray:
    """Euclidean projection onto ``{c : sum |c| <= radius}`` by sorting."""
    v = np.asarray(v, dtype=float)
    if np.abs(v).sum() <= radius:
        return v.copy()
    u = np.sort(np.abs(v))[::-1]
    css = np.cumsum(u)
    j = np.arange(1, u.size + 1)
    rho = np.nonzero(u * j > css - radius)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(np.abs(v) - theta, 0.0)


def spg_l1(A, d, radius, rtol=1e-8, max_iter=10_000, memory=10):
    """Minimise ``||A c - d||^2`` over the l1 ball of the given radius.

    Barzilai-Borwein steps with a non-monotone Armijo search; stops when the
    relative change of the objective drops below ``rtol``.
    Returns ``(c, objective, iterations)``.
    """
    n_pc = A.shape[1]
    c = np.zeros(n_pc)
    res = A @ c - d
    f = float(res @ res)
    g = 2.0 * (A.T @ res)
    recent = [f]
    step = 1.0 / max(2.0 * float(np.sum(A * A)), 1e-300)
    floor = 1e-30 * max(float(d @ d), 1e-300)
    it = 0
    for it in range(1, max_iter + 1):
        cand = project_l1_ball(c - step * g, radius)
        dirn = cand - c
        gd = float(g @ dirn)
        if gd >= 0.0:
            break
        lam, fmax = 1.0, max(recent)
        while True:
            c_new = c + lam * dirn
            res_new = A @ c_new - d
            f_new = float(res_new @ res_new)
            if f_new <= fmax + 1e-4 * lam * gd or lam < 1e-12:
                break
            lam *= 0.5
        g_new = 2.0 * (A.T @ res_new)
        s = c_new - c
        yv = g_new - g
        sy = float(s @ yv)
        step = float(np.clip(s @ s / sy, 1e-12, 1e12)) if sy > 0 else 1e12
        change = abs(f - f_new) / max(f, floor)
        c, g, f = c_new, g_new, f_new
        recent.append(f)
        if len(recent) > memory:
            recent.pop(0)
        if change < rtol or f <= floor:
            break
    return c, f, it


def fit_pc(design, responses, order: int = 3, tau: float = 0.025, space: ParameterSpace | None = None,
           rtol: float = 1e-8, max_iter: int = 10_000) -> PcSurrogate:
    """Sparse total-degree Legendre expansion with ``mean(|c|) <= tau``."""
    X = np.asarray(design, dtype=float)
    y = np.asarray(responses, dtype=float)
    if X.ndim != 2:
        raise SizeError("design must be an (n, p) matrix")
    n, p = X.shape
    if n < 2:
        raise SizeError("need at least two design points")
    if y.shape != (n,):
        raise SizeError(f"expected {n} responses, got shape {y.shape}")
    if order < 1:
        raise ValueError("order must be >= 1")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if space is None:
        space = ParameterSpace.uniform_box([(0.0, 1.0)] * p)
    if not space.all_uniform:
        raise UnsupportedDistributionError("Legendre chaos needs uniform inputs")
    basis = PcBasis(p, order)
    A = basis.matrix(X, space)
    radius = tau * basis.size
    c, obj, iters = spg_l1(A, y, radius, rtol=rtol, max_iter=max_iter)
    return PcSurrogate(basis, c, space, {"objective": obj, "iterations": iters, "radius": radius})


def pc_sobol(s: PcSurrogate) -> AnovaSummary:
    """First-order indices from the squared coefficients of an orthonormal expansion."""
    alpha = s.basis.indices
    c2 = s.coefs**2
    nz = alpha > 0
    active = nz.sum(axis=1)
    var = np.zeros(s.basis.dim)
    for k in range(s.basis.dim):
        var[k] = c2[(active == 1) & nz[:, k]].sum()
    total = float(c2[active > 0].sum())
    # variance at round-off level relative to the mean is treated as zero
    defined = total > 1e-24 * float(c2.sum())
    idx = IndexVector.of(var / total) if defined else IndexVector.undefined(s.basis.dim)
    return AnovaSummary(tuple(np.zeros(0) for _ in range(s.basis.dim)), var, idx, total)


def basis_count(p: int, r: int) -> int:
    return math.comb(p + r, r)
