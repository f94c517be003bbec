"""Built-in stochastic models with analytic index oracles.

A model evaluates ``f(X, omega)`` for a whole design at one fixed noise
realisation. The noise is drawn once per replicate from an :class:`RngStream`
and reused for every design point (common random numbers), so the indices of
``f(., omega)`` are well defined for that replicate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy import special

from .sampling import ParameterSpace, RngStream, beta, normal, uniform
from .sobol import IndexVector

__all__ = [
    "StochasticModel",
    "ToyModel",
    "GFunction",
    "toy_eval",
    "toy_indices",
    "toy_expected_mu_index",
    "toy_expected_sigma_index",
    "gfun_a",
    "gfun_eval",
    "gfun_indices",
    "gfun_indices_from_a",
    "gfun_expected_indices",
    "gfun_expected_a",
    "register",
    "get_model",
    "MODELS",
]


class StochasticModel:
    """Interface for ``Y = f(X, omega)``.

    Subclasses set ``space`` and implement ``draw_noise`` and ``evaluate``.
    Models with analytic indices also implement ``indices`` (per noise value)
    and may implement ``expected_indices`` and ``oracle_sample``.
    """

    id: str = ""
    space: ParameterSpace
    has_oracle: bool = False

    def draw_noise(self, rng: RngStream) -> Any:
        raise NotImplementedError

    def noise_seed(self, noise) -> int:
        """Integer recorded in output files to identify a noise realisation."""
        return 0

    def evaluate(self, X: np.ndarray, noise) -> np.ndarray:
        raise NotImplementedError

    def indices(self, noise) -> IndexVector:
        raise NotImplementedError(f"model {self.id!r} has no analytic oracle")

    def expected_indices(self, nodes: int = 1_000_000) -> np.ndarray:
        raise NotImplementedError(f"model {self.id!r} has no analytic oracle")

    def oracle_sample(self, rng: RngStream, count: int) -> np.ndarray:
        raise NotImplementedError(f"model {self.id!r} has no analytic oracle")

    def params(self) -> dict:
        return {}


# ---------------------------------------------------------------------------
# toy model  Y = mu + sigma W


def toy_eval(mu, sigma, w):
    return np.asarray(mu) + np.asarray(sigma) * w


def toy_indices(L: float, w: float) -> IndexVector:
    if L < 0:
        raise ValueError("L must be non-negative")
    q = (L * w) ** 2
    return IndexVector.of([1.0 / (1.0 + q), q / (1.0 + q)])


def toy_expected_mu_index(L):
    """Expected first-order index of ``mu`` over ``W ~ N(0, 1)``.

    Uses the scaled complementary error function, so small ``L`` (where
    ``exp(1 / (2 L^2))`` overflows) is handled; ``L = 0`` gives 1.
    """
    L = np.asarray(L, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = 1.0 / (np.sqrt(2.0) * L)
        val = np.sqrt(np.pi / 2.0) / L * special.erfcx(z)
    out = np.where(L > 0, val, 1.0)
    return float(out) if out.ndim == 0 else out


def toy_expected_sigma_index(L):
    out = 1.0 - np.asarray(toy_expected_mu_index(L))
    return float(out) if out.ndim == 0 else out


@dataclass
class ToyModel(StochasticModel):
    """``mu ~ U(0, 1)``, ``sigma ~ U(1, 1 + L)``, ``W ~ N(0, 1)``."""

    L: float = 1.0
    id = "toy"
    has_oracle = True

    def __post_init__(self):
        if self.L <= 0:
            raise ValueError("toy model needs L > 0 (sigma ~ U(1, 1 + L))")
        self.space = ParameterSpace((uniform(0.0, 1.0), uniform(1.0, 1.0 + self.L)), ("mu", "sigma"))
        self.noise = normal(0.0, 1.0)

    def draw_noise(self, rng):
        return float(self.noise.draw(rng.generator(), 1)[0])

    def evaluate(self, X, noise):
        X = np.asarray(X, dtype=float)
        return toy_eval(X[:, 0], X[:, 1], noise)

    def indices(self, noise):
        return toy_indices(self.L, noise)

    def expected_indices(self, nodes=None):
        s = toy_expected_sigma_index(self.L)
        return np.array([1.0 - s, s])

    def oracle_sample(self, rng, count):
        w = self.noise.draw(rng.generator(), count)
        q = (self.L * w) ** 2
        return np.column_stack([1.0 / (1.0 + q), q / (1.0 + q)])

    def params(self):
        return {"L": self.L}


# ---------------------------------------------------------------------------
# stochastic g-function


def gfun_a(t) -> np.ndarray:
    """The 15 coefficient functions evaluated at ``t``; shape ``(15,) + t.shape``."""
    t = np.asarray(t, dtype=float)
    return np.stack(
        [
            (1.0 - t) ** 5,
            t**5,
            np.sin(8.0 * t) ** 2,
            np.sin(10.0 * (1.0 - t)) ** 2,
            np.cos(10.0 * (1.0 - t)) ** 2,
            np.cos(8.0 * t) ** 2,
            (1.5 - t) ** 2,
            (0.5 + t) ** 2,
            (3.0 - t) ** 2,
            (2.0 + t) ** 2,
            (3.5 - t) ** 2,
            (2.5 + t) ** 2,
            (4.0 - t) ** 2,
            (3.0 + t) ** 2,
            (4.0 + t) ** 2,
        ]
    )


def gfun_eval(x, w=None, a=None):
    """Stochastic g-function at points ``x`` (shape ``(15,)`` or ``(N, 15)``).

    Either the noise value ``w`` or the coefficient vector ``a`` is given;
    passing the expected coefficients gives the deterministic g-function.
    """
    if a is None:
        a = gfun_a(w)
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    return np.prod((np.abs(4.0 * x - 2.0) + a) / (1.0 + a), axis=-1)


def gfun_indices_from_a(a) -> IndexVector:
    """First-order indices of the product ``prod (|4 x_k - 2| + a_k) / (1 + a_k)``.

    Each factor has mean 1 and variance ``(1/3) / (1 + a_k)^2``; the total
    variance is ``prod(1 + V_k) - 1`` and ``S_k = V_k / Var``.
    """
    a = np.asarray(a, dtype=float)
    with np.errstate(over="ignore"):
        v = (1.0 / 3.0) / (1.0 + a) ** 2
    var = np.expm1(np.sum(np.log1p(v)))
    if not var > 0.0:
        return IndexVector.undefined(a.size)
    return IndexVector.of(v / var)


def gfun_indices(w: float) -> IndexVector:
    return gfun_indices_from_a(gfun_a(w))


def _gfun_index_table(t):
    """Index vectors for an array of noise values; shape ``(15, len(t))``."""
    v = (1.0 / 3.0) / (1.0 + gfun_a(t)) ** 2
    var = np.expm1(np.sum(np.log1p(v), axis=0))
    return v / var


_W_LAW = beta(5.0, 3.0)


def gfun_expected_indices(nodes: int = 1_000_000) -> np.ndarray:
    """Expectation of every index over ``W ~ Beta(5, 3)`` by the trapezoid rule."""
    if nodes < 1000:
        raise ValueError("need at least 1000 quadrature nodes")
    return _trapezoid_blocked(lambda t: _gfun_index_table(t) * _W_LAW.pdf(t), nodes)


def _trapezoid_blocked(fn, nodes, block=100_000):
    """Composite trapezoid on [0, 1] evaluated in blocks of nodes to bound memory."""
    h = 1.0 / (nodes - 1)
    total = 0.0
    for start in range(0, nodes, block):
        idx = np.arange(start, min(start + block, nodes))
        t = idx * h
        y = fn(t)
        wts = np.full(idx.size, h)
        wts[idx == 0] = 0.5 * h
        wts[idx == nodes - 1] = 0.5 * h
        total = total + y @ wts
    return total


def gfun_expected_a(nodes: int = 1_000_000) -> np.ndarray:
    """``E[a_k(W)]`` for the deterministic g-function."""
    return _trapezoid_blocked(lambda t: gfun_a(t) * _W_LAW.pdf(t), nodes)


@dataclass
class GFunction(StochasticModel):
    """15-dimensional stochastic g-function with ``W ~ Beta(5, 3)``.

    ``deterministic=True`` freezes the coefficients at their expectations.
    """

    deterministic: bool = False
    id = "gfunction"
    has_oracle = True

    def __post_init__(self):
        self.space = ParameterSpace.uniform_box([(0.0, 1.0)] * 15, tuple(f"x{k + 1}" for k in range(15)))
        self.noise = _W_LAW
        self._a_mean = None

    @property
    def a_mean(self):
        if self._a_mean is None:
            self._a_mean = gfun_expected_a()
        return self._a_mean

    def draw_noise(self, rng):
        if self.deterministic:
            return None
        return float(self.noise.draw(rng.generator(), 1)[0])

    def evaluate(self, X, noise):
        if self.deterministic:
            return gfun_eval(X, a=self.a_mean)
        return gfun_eval(X, noise)

    def indices(self, noise):
        if self.deterministic:
            return gfun_indices_from_a(self.a_mean)
        return gfun_indices(noise)

    def expected_indices(self, nodes=1_000_000):
        if self.deterministic:
            return self.indices(None).values
        return gfun_expected_indices(nodes)

    def oracle_sample(self, rng, count):
        w = self.noise.draw(rng.generator(), count)
        return _gfun_index_table(w).T

    def params(self):
        return {"deterministic": self.deterministic}


# ---------------------------------------------------------------------------
# registry

MODELS: dict[str, Callable[..., StochasticModel]] = {}


def register(name: str, factory: Callable[..., StochasticModel]):
    MODELS[name] = factory


def get_model(name: str, **params) -> StochasticModel:
    try:
        factory = MODELS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(MODELS)}") from None
    return factory(**params)


register("toy", ToyModel)
register("gfunction", GFunction)


def _oscillator(**params):
    from .ssa import OscillatorModel  # numba import deferred until needed

    return OscillatorModel(**params)


register("oscillator", _oscillator)
