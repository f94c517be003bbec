"""Gillespie direct-method simulation of mass-action reaction networks.

The inner loop is compiled with numba. Uniform variates come from a PCG64
generator and are handed to the kernel in buffers; unused variates carry over
between refills, so a trajectory depends only on its seed and never on the
buffer size.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numba
import numpy as np

from .models import StochasticModel
from .sampling import ParameterError, ParameterSpace, RngStream, uniform

__all__ = [
    "ReactionNetwork",
    "Trajectory",
    "propensities",
    "simulate",
    "perturbed_rates",
    "oscillator_network",
    "OscillatorModel",
]


@dataclass(frozen=True)
class ReactionNetwork:
    """Species, reactions and named rate constants.

    ``reactants`` and ``products`` are ``(n_reactions, n_species)`` integer
    stoichiometry matrices; ``roles[r]`` is the index of the rate constant used
    by reaction r, so several reactions may share one constant.
    """

    species: tuple[str, ...]
    reactants: np.ndarray
    products: np.ndarray
    roles: np.ndarray
    rate_names: tuple[str, ...]
    nominal: np.ndarray
    initial: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        S, R = len(self.species), len(self.roles)
        for arr_name in ("reactants", "products"):
            a = np.asarray(getattr(self, arr_name))
            if a.shape != (R, S):
                raise ParameterError(f"{arr_name} must have shape ({R}, {S}), got {a.shape}")
            if np.any(a < 0) or np.any(a != np.round(a)):
                raise ParameterError(f"{arr_name} must hold non-negative integers")
            object.__setattr__(self, arr_name, a.astype(np.int64))
        roles = np.asarray(self.roles, dtype=np.int64)
        if np.any(roles < 0) or np.any(roles >= len(self.rate_names)):
            raise ParameterError("reaction rate role out of range")
        object.__setattr__(self, "roles", roles)
        nominal = np.asarray(self.nominal, dtype=float)
        if nominal.shape != (len(self.rate_names),) or np.any(nominal <= 0):
            raise ParameterError("nominal rates must be positive, one per rate name")
        object.__setattr__(self, "nominal", nominal)
        if self.initial is not None:
            x0 = np.asarray(self.initial, dtype=np.int64)
            if x0.shape != (S,) or np.any(x0 < 0):
                raise ParameterError("initial state must be non-negative counts, one per species")
            object.__setattr__(self, "initial", x0)

    @property
    def n_species(self) -> int:
        return len(self.species)

    @property
    def n_reactions(self) -> int:
        return len(self.roles)

    @property
    def change(self) -> np.ndarray:
        return self.products - self.reactants

    def species_index(self, name: str) -> int:
        return self.species.index(name)

    @classmethod
    def from_dict(cls, doc: dict) -> "ReactionNetwork":
        species = tuple(doc["species"])
        rate_names = tuple(r["name"] for r in doc["rates"])
        reac = np.zeros((len(doc["reactions"]), len(species)), dtype=np.int64)
        prod = np.zeros_like(reac)
        roles = np.zeros(len(doc["reactions"]), dtype=np.int64)
        for r, rx in enumerate(doc["reactions"]):
            for sp, c in rx.get("reactants", {}).items():
                reac[r, species.index(sp)] = c
            for sp, c in rx.get("products", {}).items():
                prod[r, species.index(sp)] = c
            roles[r] = rate_names.index(rx["rate"])
        return cls(
            species, reac, prod, roles, rate_names,
            np.array([r["nominal"] for r in doc["rates"]], dtype=float),
            None if doc.get("initial") is None else np.array(doc["initial"]),
            doc.get("name", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "ReactionNetwork":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        def side(row):
            return {self.species[s]: int(c) for s, c in enumerate(row) if c}

        doc = {
            "name": self.name,
            "species": list(self.species),
            "rates": [{"name": n, "nominal": float(v)} for n, v in zip(self.rate_names, self.nominal)],
            "reactions": [
                {"reactants": side(self.reactants[r]), "products": side(self.products[r]),
                 "rate": self.rate_names[self.roles[r]]}
                for r in range(self.n_reactions)
            ],
        }
        if self.initial is not None:
            doc["initial"] = self.initial.tolist()
        return doc


def oscillator_network() -> ReactionNetwork:
    """The nine-species, sixteen-reaction activator/repressor circuit shipped with the package."""
    text = resources.files("stochsobol").joinpath("data/oscillator.json").read_text()
    return ReactionNetwork.from_json(text)


@dataclass
class Trajectory:
    """Species counts recorded on a time grid (state at or just before each grid time)."""

    times: np.ndarray
    states: np.ndarray
    species: tuple[str, ...] = field(default=())

    def __getitem__(self, name: str) -> np.ndarray:
        return self.states[:, self.species.index(name)]


def _reaction_rates(net: ReactionNetwork, rates) -> np.ndarray:
    rates = np.asarray(rates, dtype=float)
    if rates.shape != (len(net.rate_names),):
        raise ParameterError(f"expected {len(net.rate_names)} rates, got shape {rates.shape}")
    if np.any(rates < 0):
        raise ParameterError("rates must be non-negative")
    return rates[net.roles]


def _sparse_reactants(reac: np.ndarray):
    """Per reaction, the reactant species and their orders, padded with order 0."""
    width = max(1, int((reac > 0).sum(axis=1).max()))
    idx = np.zeros((reac.shape[0], width), dtype=np.int64)
    order = np.zeros_like(idx)
    for r, row in enumerate(reac):
        nz = np.flatnonzero(row)
        idx[r, : nz.size] = nz
        order[r, : nz.size] = row[nz]
    return idx, order


@numba.njit(cache=True)
def _props(x, k, ridx, rord, a):
    R, K = ridx.shape
    a0 = 0.0
    for r in range(R):
        v = k[r]
        for c in range(K):
            xs = x[ridx[r, c]]
            for q in range(rord[r, c]):
                v *= xs - q
        if v < 0.0:
            v = 0.0
        a[r] = v
        a0 += v
    return a0


def propensities(net: ReactionNetwork, state, rates) -> np.ndarray:
    """Stochastic mass-action propensities: rate times falling factorials of reactant counts."""
    x = np.asarray(state, dtype=np.int64)
    if np.any(x < 0):
        raise ParameterError("counts must be non-negative")
    a = np.empty(net.n_reactions)
    ridx, rord = _sparse_reactants(net.reactants)
    _props(x.astype(np.float64), _reaction_rates(net, rates), ridx, rord, a)
    return a


@numba.njit(cache=True)
def _direct(x, t, k, ridx, rord, change, grid, gi, out, buf, bi):
    """Advance the direct method until the grid is filled or the buffer runs dry.

    Returns ``(t, gi, bi, done)``. ``x`` and ``out`` are updated in place.
    """
    R, S = change.shape
    a = np.empty(R)
    xf = np.empty(S)
    G = grid.shape[0]
    while True:
        for s in range(S):
            xf[s] = x[s]
        a0 = _props(xf, k, ridx, rord, a)
        if a0 <= 0.0:
            # absorbing state: frozen from here on
            while gi < G:
                out[gi, :] = x
                gi += 1
            return t, gi, bi, True
        if bi + 2 > buf.shape[0]:
            return t, gi, bi, False
        u1 = buf[bi]
        u2 = buf[bi + 1]
        bi += 2
        tn = t - math.log1p(-u1) / a0
        while gi < G and grid[gi] < tn:
            out[gi, :] = x
            gi += 1
        if gi >= G:
            return tn, gi, bi, True
        target = u2 * a0
        acc = 0.0
        j = -1
        for r in range(R):
            if a[r] > 0.0:
                j = r
                acc += a[r]
                if target < acc:
                    break
        for s in range(S):
            x[s] += change[j, s]
        t = tn


_BUFFER = 1 << 16


def simulate(net: ReactionNetwork, rates, initial, grid, rng: RngStream, buffer: int = _BUFFER) -> Trajectory:
    """Exact direct-method trajectory recorded on ``grid`` (starting time 0).

    A state whose total propensity is zero is absorbing and is carried to the
    end of the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ParameterError("grid must be a non-empty 1-d sequence")
    if grid[0] < 0 or np.any(np.diff(grid) <= 0):
        raise ParameterError("grid must be non-negative and strictly increasing")
    x = np.array(initial if initial is not None else net.initial, dtype=np.int64)
    if x.shape != (net.n_species,) or np.any(x < 0):
        raise ParameterError("initial counts must be non-negative, one per species")
    k = _reaction_rates(net, rates)
    change = net.change
    ridx, rord = _sparse_reactants(net.reactants)
    out = np.zeros((grid.size, net.n_species), dtype=np.int64)
    gen = rng.generator()
    buf = gen.random(buffer)
    t, gi, bi = 0.0, 0, 0
    while True:
        t, gi, bi, done = _direct(x, t, k, ridx, rord, change, grid, gi, out, buf, bi)
        if done:
            break
        rest = buf[bi:]
        buf = np.concatenate([rest, gen.random(buffer - rest.size)])
        bi = 0
    return Trajectory(grid, out, net.species)


def perturbed_rates(nominal, rng: RngStream, spread: float = 0.1) -> np.ndarray:
    """Independent draws ``U((1 - spread) * nominal, (1 + spread) * nominal)``."""
    nominal = np.asarray(nominal, dtype=float)
    if not 0 <= spread < 1:
        raise ParameterError("spread must lie in [0, 1)")
    if spread == 0:
        return nominal.copy()
    return rng.generator().uniform(nominal * (1 - spread), nominal * (1 + spread))


class OscillatorModel(StochasticModel):
    """Count of one species of a reaction network as a stochastic model of its rates.

    Rates are uniform within ``spread`` of their nominal values. The noise of
    one replicate is a 64-bit seed; every design point of the replicate reuses
    it (common random numbers). ``evaluate`` returns the count at ``t_final``;
    ``simulate_design`` returns whole trajectories on a grid.
    """

    id = "oscillator"
    has_oracle = False
    noise_coupling = "common-seed"

    def __init__(self, output: str = "C", t_final: float = 400.0, spread: float = 0.1,
                 network: ReactionNetwork | None = None):
        self.network = network or oscillator_network()
        if self.network.initial is None:
            raise ParameterError("network needs an initial state")
        if not t_final > 0:
            raise ParameterError("t_final must be positive")
        self.output = output
        self.out_index = self.network.species_index(output)
        self.t_final = float(t_final)
        self.spread = float(spread)
        nom = self.network.nominal
        self.space = ParameterSpace(
            tuple(uniform(v * (1 - spread), v * (1 + spread)) for v in nom), self.network.rate_names
        )

    def draw_noise(self, rng: RngStream) -> int:
        return rng.seed64()

    def noise_seed(self, noise) -> int:
        return int(noise)

    def simulate_design(self, X, seed: int, times) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        times = np.asarray(times, dtype=float)
        out = np.empty((X.shape[0], times.size))
        for j, rates in enumerate(X):
            traj = simulate(self.network, rates, self.network.initial, times, RngStream(int(seed)))
            out[j] = traj.states[:, self.out_index]
        return out

    def evaluate(self, X, noise) -> np.ndarray:
        return self.simulate_design(X, noise, [self.t_final])[:, 0]

    def params(self):
        return {"output": self.output, "t_final": self.t_final, "spread": self.spread}
