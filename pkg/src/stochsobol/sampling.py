"""Random streams, input distributions, Latin hypercube designs and quadrature.

Every random draw in the package goes through an :class:`RngStream`. A stream
is identified by a root seed plus a tuple of integer keys, so replicate ``i`` of
an experiment can derive its own generator without knowing how many workers
are running or in which order tasks execute.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

__all__ = [
    "ParameterError",
    "SizeError",
    "RngStream",
    "Distribution",
    "uniform",
    "beta",
    "normal",
    "ParameterSpace",
    "sample",
    "lhs",
    "trapezoid",
]

_U64 = (1 << 64) - 1

# purpose tags for sub-streams
OMEGA = 1
DESIGN = 2
ORACLE = 3
FALLBACK = 4


class ParameterError(ValueError):
    """Invalid distribution or model parameters."""


class SizeError(ValueError):
    """A sample size or array shape violates a precondition."""


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream addressed by ``(seed, stream)``.

    ``stream`` is a tuple of non-negative integers. Identical addresses give
    identical sequences; distinct addresses give independent ones (they map to
    distinct ``SeedSequence`` spawn keys).
    """

    seed: int
    stream: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= int(self.seed) <= _U64:
            raise ParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        for s in self.stream:
            if not 0 <= int(s) <= _U64:
                raise ParameterError(f"stream id must be a 64-bit unsigned integer, got {s}")

    def substream(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, tuple(self.stream) + tuple(int(k) for k in keys))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=tuple(self.stream))
        return np.random.Generator(np.random.PCG64(ss))

    def seed64(self) -> int:
        """A single 64-bit integer summarising this stream address."""
        ss = np.random.SeedSequence(entropy=int(self.seed), spawn_key=tuple(self.stream))
        lo, hi = ss.generate_state(2, dtype=np.uint32)
        return int(lo) | (int(hi) << 32)


@dataclass(frozen=True)
class Distribution:
    """Univariate input law: ``uniform(a, b)``, ``beta(alpha, beta)`` or ``normal(mu, var)``."""

    kind: str
    params: tuple[float, float]

    def __post_init__(self):
        a, b = self.params
        if self.kind == "uniform":
            if not a < b:
                raise ParameterError(f"uniform needs a < b, got ({a}, {b})")
        elif self.kind == "beta":
            if not (a > 0 and b > 0):
                raise ParameterError(f"beta needs alpha, beta > 0, got ({a}, {b})")
        elif self.kind == "normal":
            if not b > 0:
                raise ParameterError(f"normal needs variance > 0, got {b}")
        else:
            raise ParameterError(f"unknown distribution kind {self.kind!r}")

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "uniform":
            return self.params
        if self.kind == "beta":
            return (0.0, 1.0)
        return (-np.inf, np.inf)

    @property
    def mean(self) -> float:
        a, b = self.params
        if self.kind == "uniform":
            return 0.5 * (a + b)
        if self.kind == "beta":
            return a / (a + b)
        return a

    @property
    def variance(self) -> float:
        a, b = self.params
        if self.kind == "uniform":
            return (b - a) ** 2 / 12.0
        if self.kind == "beta":
            return a * b / ((a + b) ** 2 * (a + b + 1.0))
        return b

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.params
        if self.kind == "uniform":
            return np.where((x >= a) & (x <= b), 1.0 / (b - a), 0.0)
        if self.kind == "beta":
            inside = (x >= 0.0) & (x <= 1.0)
            xc = np.clip(x, 0.0, 1.0)
            with np.errstate(divide="ignore", invalid="ignore"):
                logp = (
                    special.xlogy(a - 1.0, xc)
                    + special.xlog1py(b - 1.0, -xc)
                    - special.betaln(a, b)
                )
            return np.where(inside, np.exp(logp), 0.0)
        return np.exp(-0.5 * (x - a) ** 2 / b) / np.sqrt(2.0 * np.pi * b)

    def ppf(self, u):
        u = np.asarray(u, dtype=float)
        a, b = self.params
        if self.kind == "uniform":
            return a + (b - a) * u
        if self.kind == "beta":
            return special.betaincinv(a, b, u)
        return a + np.sqrt(b) * special.ndtri(u)

    def draw(self, gen: np.random.Generator, count: int) -> np.ndarray:
        a, b = self.params
        if self.kind == "uniform":
            return gen.uniform(a, b, size=count)
        if self.kind == "beta":
            return gen.beta(a, b, size=count)
        return gen.normal(a, np.sqrt(b), size=count)


def uniform(a: float = 0.0, b: float = 1.0) -> Distribution:
    return Distribution("uniform", (float(a), float(b)))


def beta(alpha: float, beta_: float) -> Distribution:
    return Distribution("beta", (float(alpha), float(beta_)))


def normal(mu: float = 0.0, var: float = 1.0) -> Distribution:
    return Distribution("normal", (float(mu), float(var)))


@dataclass(frozen=True)
class ParameterSpace:
    """Independent inputs, one :class:`Distribution` per coordinate."""

    dists: tuple[Distribution, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.names:
            object.__setattr__(self, "names", tuple(f"x{k + 1}" for k in range(len(self.dists))))
        if len(self.names) != len(self.dists):
            raise SizeError("one name per distribution required")

    @classmethod
    def uniform_box(cls, bounds: Sequence[tuple[float, float]], names=()) -> "ParameterSpace":
        return cls(tuple(uniform(a, b) for a, b in bounds), tuple(names))

    @property
    def dim(self) -> int:
        return len(self.dists)

    @property
    def all_uniform(self) -> bool:
        return all(d.kind == "uniform" for d in self.dists)

    def bounds(self) -> np.ndarray:
        return np.array([d.support for d in self.dists], dtype=float)

    def contains(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, hi = self.bounds().T
        return np.all((x >= lo) & (x <= hi), axis=1)

    def draw(self, gen: np.random.Generator, count: int) -> np.ndarray:
        """Plain Monte Carlo sample, shape ``(count, dim)``."""
        return np.column_stack([d.draw(gen, count) for d in self.dists])

    def to_dict(self) -> dict:
        return {
            "names": list(self.names),
            "dists": [{"kind": d.kind, "params": list(d.params)} for d in self.dists],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ParameterSpace":
        dists = tuple(Distribution(d["kind"], tuple(float(v) for v in d["params"])) for d in doc["dists"])
        return cls(dists, tuple(doc.get("names", ())))


def sample(dist: Distribution, rng: RngStream, count: int) -> np.ndarray:
    """``count`` iid draws from ``dist`` using the stream ``rng``."""
    if count < 1:
        raise SizeError(f"count must be >= 1, got {count}")
    return dist.draw(rng.generator(), int(count))


def lhs(space: ParameterSpace, n: int, rng: RngStream) -> np.ndarray:
    """Latin hypercube design of ``n`` points in ``space``.

    Each column gets an independent random permutation of the ``n``
    equiprobable strata and a uniform position inside its stratum, mapped
    through the inverse CDF of that coordinate.

    Returns
    -------
    ndarray, shape (n, space.dim)
    """
    if n < 2:
        raise SizeError(f"LHS needs n >= 2, got {n}")
    gen = rng.generator()
    p = space.dim
    perms = np.argsort(gen.random((n, p)), axis=0)
    u = (perms + gen.random((n, p))) / n
    return np.column_stack([space.dists[k].ppf(u[:, k]) for k in range(p)])


def trapezoid(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, nodes: int) -> float:
    """Composite trapezoid rule on ``nodes`` equispaced nodes.

    ``fn`` is vectorised over its argument. If it returns shape ``(..., nodes)``
    the leading axes are integrated independently and an array is returned.
    """
    if not a < b:
        raise ParameterError(f"need a < b, got ({a}, {b})")
    if nodes < 2:
        raise SizeError(f"need at least 2 nodes, got {nodes}")
    t = np.linspace(a, b, int(nodes))
    y = np.asarray(fn(t), dtype=float)
    h = (b - a) / (nodes - 1)
    out = h * (y.sum(axis=-1) - 0.5 * (y[..., 0] + y[..., -1]))
    return float(out) if np.ndim(out) == 0 else out
