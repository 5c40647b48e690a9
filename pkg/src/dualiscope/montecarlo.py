"""Stochastic simulation and Monte Carlo estimators.

Jump processes are simulated exactly with the Gillespie direct method.
The diffusions use edge-splitting schemes that keep their conserved
quantity: random rotations for the momentum process, and antisymmetric
Euler-Maruyama increments on fixed-point energies for the energy process.

Random streams: replica ``r`` of a run with master seed ``s`` draws from
``numpy.random.default_rng(SeedSequence([s, r]))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .duality import duality_product, site_duality
from .errors import InvalidPairing, InvalidParameter, ResourceLimit
from .measures import ProductMeasureSpec, sample_product
from .model import (
    BEP,
    BMP,
    IRW,
    SEP,
    SIP,
    BoundaryDrivenSIP,
    GeneralizedAB,
    SiteGraph,
    check_labeled,
    check_occupation,
    enumerate_moves,
)

OCCUPANCY_CAP = 10**6
# BEP energies are integers in units of 2**-ENERGY_BITS
ENERGY_BITS = 40


def replica_rng(master_seed: int, replica: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), int(replica)]))


# --------------------------------------------------------------------------
# Estimates
# --------------------------------------------------------------------------


@dataclass
class RunningStats:
    """Welford accumulator; ``merge`` is associative."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def push(self, x: float) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.n == 0:
            return RunningStats(self.n, self.mean, self.m2)
        if self.n == 0:
            return RunningStats(other.n, other.mean, other.m2)
        n = self.n + other.n
        d = other.mean - self.mean
        mean = self.mean + d * other.n / n
        m2 = self.m2 + other.m2 + d * d * self.n * other.n / n
        return RunningStats(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


@dataclass(frozen=True)
class Estimate:
    mean: float
    stderr: float
    replicas: int
    seed: int | None = None

    @classmethod
    def from_stats(cls, s: RunningStats, seed=None) -> "Estimate":
        if s.n < 2:
            raise InvalidParameter("an estimate needs at least two replicas")
        return cls(s.mean, math.sqrt(s.variance / s.n), s.n, seed)

    def agrees(self, value: float, sigmas: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.mean - value) <= sigmas * self.stderr + slack

    def to_json(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "replicas": self.replicas, "seed": self.seed}


# --------------------------------------------------------------------------
# Jump processes
# --------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Piecewise-constant path: ``states[i]`` holds on ``[times[i], times[i+1])``."""

    times: list
    states: list
    horizon: float

    @property
    def final(self):
        return self.states[-1]

    def state_at(self, t: float):
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        return self.states[max(i, 0)]

    @property
    def jumps(self) -> int:
        return len(self.states) - 1


class _RateTable:
    """Float cumulative rates per state, built lazily from the exact move lists."""

    def __init__(self, spec, graph, labeled):
        self.spec, self.graph, self.labeled = spec, graph, labeled
        self.cache: dict = {}

    def __call__(self, state):
        entry = self.cache.get(state)
        if entry is None:
            moves = enumerate_moves(self.spec, state, self.graph, self.labeled)
            targets = [t for t, _ in moves]
            cum = np.cumsum([float(r) for _, r in moves]) if moves else np.zeros(0)
            entry = (targets, cum)
            if len(self.cache) < 500_000:
                self.cache[state] = entry
        return entry


def _gillespie(spec, start, T, rng, graph, labeled, record, on_hold=None):
    if T < 0:
        raise InvalidParameter("horizon must be nonnegative")
    table = _RateTable(spec, graph, labeled)
    state = tuple(start)
    if labeled:
        check_labeled(spec, state, graph)
    else:
        check_occupation(spec, state, graph)
    guard = isinstance(spec, BoundaryDrivenSIP)
    t = 0.0
    times, states = [0.0], [state]
    while True:
        targets, cum = table(state)
        total = cum[-1] if len(cum) else 0.0
        if total <= 0:
            break
        dt = rng.exponential(1.0 / total)
        if t + dt > T:
            break
        if on_hold is not None:
            on_hold(state, t, t + dt)
        t += dt
        state = targets[int(np.searchsorted(cum, rng.random() * total, side="right"))]
        if guard and max(state) > OCCUPANCY_CAP:
            raise ResourceLimit(f"occupancy above {OCCUPANCY_CAP} at t={t}")
        if record:
            times.append(t)
            states.append(state)
        else:
            times[0], states[0] = t, state
    if on_hold is not None:
        on_hold(state, t, T)
    if not record:
        times, states = [0.0], [state]
    return Trajectory(times, states, T)


def simulate_ctmc(spec, start: Sequence[int], T: float, rng: np.random.Generator,
                  graph: SiteGraph | None = None, record: bool = True) -> Trajectory:
    """Exact-law trajectory of an occupation process up to time ``T``.

    With ``record=False`` only the final state is kept.
    """
    return _gillespie(spec, start, T, rng, graph, False, record)


def simulate_labeled(a, b, start: Sequence[int], T: float, rng: np.random.Generator,
                     graph: SiteGraph, record: bool = True) -> Trajectory:
    """Labeled walkers with generator ``p(x_i, y)(a + b #{j: x_j = y})``."""
    spec = GeneralizedAB(a, b) if b != 0 else IRW(a)
    return _gillespie(spec, start, T, rng, graph, True, record)


# --------------------------------------------------------------------------
# Diffusions
# --------------------------------------------------------------------------


@dataclass
class DiffusionTrajectory:
    times: np.ndarray
    states: np.ndarray  # shape (len(times), sites)
    clamped: int = 0

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _windows(T: float, dt: float):
    if dt <= 0:
        raise InvalidParameter("time step must be positive")
    if T < 0:
        raise InvalidParameter("horizon must be nonnegative")
    n = int(math.ceil(T / dt - 1e-12)) if T > 0 else 0
    t = 0.0
    for k in range(n):
        h = min(dt, T - t)
        t = T if k == n - 1 else t + h
        yield t, h


def simulate_bmp(start: Sequence[float], T: float, dt: float, rng: np.random.Generator,
                 graph: SiteGraph, record: bool = True) -> DiffusionTrajectory:
    """Momentum process by random edge rotations.

    In each window every edge, in a fresh random order, rotates its pair
    by a centred Gaussian angle of variance ``2 p(x, y) h``.
    """
    eta = np.array(start, dtype=float)
    edges = [(x, y, float(p)) for x, y, p in graph.edges]
    times, states = [0.0], [eta.copy()]
    for t, h in _windows(T, dt):
        for e in rng.permutation(len(edges)):
            x, y, p = edges[e]
            theta = rng.normal(0.0, math.sqrt(2.0 * p * h))
            c, s = math.cos(theta), math.sin(theta)
            ex, ey = eta[x], eta[y]
            eta[x] = c * ex - s * ey
            eta[y] = s * ex + c * ey
        if record:
            times.append(t)
            states.append(eta.copy())
    if not record:
        times, states = [T], [eta.copy()]
    return DiffusionTrajectory(np.array(times), np.array(states))


def simulate_bep(start: Sequence[float], m, T: float, dt: float, rng: np.random.Generator,
                 graph: SiteGraph, record: bool = True) -> DiffusionTrajectory:
    """Energy process by edge-wise Euler-Maruyama on the exchanged energy.

    Per edge the exchange ``dZ`` (added to ``x``, removed from ``y``) has
    drift ``-2 m p (eta_x - eta_y)`` and variance rate ``8 p eta_x eta_y``.
    Energies are held as integers in units of ``2**-40`` so the total is
    conserved exactly; steps leaving ``[0, inf)`` are clamped and counted.
    """
    unit = 2.0**ENERGY_BITS
    if any(v < 0 for v in start):
        raise InvalidParameter("energies must be nonnegative")
    q = [int(round(float(v) * unit)) for v in start]
    m = float(m)
    edges = [(x, y, float(p)) for x, y, p in graph.edges]
    clamped = 0
    times, states = [0.0], [np.array(q, dtype=float) / unit]
    for t, h in _windows(T, dt):
        for e in rng.permutation(len(edges)):
            x, y, p = edges[e]
            ex, ey = q[x] / unit, q[y] / unit
            noise = rng.normal()
            dz = -2.0 * m * p * (ex - ey) * h + math.sqrt(8.0 * p * ex * ey * h) * noise
            dq = int(round(dz * unit))
            if q[x] + dq < 0:
                dq = -q[x]
                clamped += 1
            elif q[y] - dq < 0:
                dq = q[y]
                clamped += 1
            q[x] += dq
            q[y] -= dq
        if record:
            times.append(t)
            states.append(np.array(q, dtype=float) / unit)
    if not record:
        times, states = [T], [np.array(q, dtype=float) / unit]
    traj = DiffusionTrajectory(np.array(times), np.array(states), clamped)
    traj.quanta = q
    return traj


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------


def _evolve(family, eta0, t, rng, graph, dt):
    if isinstance(family, (SIP, SEP)):
        return simulate_ctmc(family, tuple(int(v) for v in eta0), t, rng, graph, record=False).final
    if dt is None:
        raise InvalidParameter("diffusion estimates need a time step dt")
    if isinstance(family, BMP):
        return simulate_bmp(eta0, t, dt, rng, graph, record=False).final
    if isinstance(family, BEP):
        return simulate_bep(eta0, family.m, t, dt, rng, graph, record=False).final
    raise InvalidPairing(f"cannot simulate {family!r}")


def estimate_K(family, measure: ProductMeasureSpec, xi: Sequence[int], t: float, replicas: int,
               seed: int, graph: SiteGraph, dt: float | None = None) -> Estimate:
    """Monte Carlo mean of ``D(xi, eta_t)`` with ``eta_0`` drawn from ``measure``."""
    if replicas < 2:
        raise InvalidParameter("need at least two replicas")
    if not measure.pairs_with(family):
        raise InvalidPairing(f"{measure.family} measure does not pair with {family!r}")
    xi = tuple(xi)
    stats = RunningStats()
    for r in range(replicas):
        rng = replica_rng(seed, r)
        eta0 = sample_product(measure, rng)
        eta_t = _evolve(family, eta0, t, rng, graph, dt)
        value = 1.0
        for k, v in zip(xi, eta_t):
            if k:
                value *= float(site_duality(family, k, int(v) if isinstance(family, (SIP, SEP)) else float(v)))
        stats.push(value)
    return Estimate.from_stats(stats, seed)


def stationary_time_average(spec: BoundaryDrivenSIP, observable: Callable, burn_in: float,
                            horizon: float, seed: int, start: Sequence[int] | None = None,
                            batches: int = 50) -> Estimate:
    """Time average of ``observable`` over ``[burn_in, horizon]`` with batch-means error."""
    if horizon <= burn_in:
        raise InvalidParameter("horizon must exceed burn-in")
    if batches < 2:
        raise InvalidParameter("need at least two batches")
    rng = replica_rng(seed, 0)
    start = tuple(start) if start is not None else (0,) * spec.N
    width = (horizon - burn_in) / batches
    sums = np.zeros(batches)
    values: dict = {}
    # integrate deviations from the first value seen, so a constant gives exact zeros
    ref: list = []

    def on_hold(state, a, b):
        a, b = max(a, burn_in), min(b, horizon)
        if b <= a:
            return
        v = values.get(state)
        if v is None:
            v = values[state] = float(observable(state))
        if not ref:
            ref.append(v)
        v -= ref[0]
        i = int((a - burn_in) // width)
        while a < b and i < batches:
            end = min(b, burn_in + (i + 1) * width)
            sums[i] += v * (end - a)
            a = end
            i += 1

    _gillespie(spec, start, horizon, rng, None, False, False, on_hold=on_hold)
    means = (ref[0] if ref else 0.0) + sums / width
    s = RunningStats()
    for v in means:
        s.push(float(v))
    return Estimate(s.mean, math.sqrt(s.variance / s.n), batches, seed)


def boundary_density_observable(spec: BoundaryDrivenSIP, site: int) -> Callable:
    """``eta -> D(delta_site, eta)`` for the boundary chain (``site`` is 0-based)."""
    def obs(eta):
        xi = tuple(1 if i == site else 0 for i in range(spec.N))
        return duality_product(xi, eta, SIP(spec.m))
    return obs
