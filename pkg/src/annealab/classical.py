"""Metropolis simulated annealing with single spin flips."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .lattice import SpinGlassInstance, energy
from .stats import DEFAULT_BATCHES, batch_means, batch_variance


def kernel_seed(seed: int) -> int:
    """Map an arbitrary integer seed to the 32-bit seed numba's generator takes."""
    return int(np.random.SeedSequence(int(seed)).generate_state(1)[0])


@njit(cache=True)
def _seed_numba(seed):
    np.random.seed(seed)


@njit(cache=True)
def _accept(delta, beta):
    if delta <= 0.0:
        return True
    return np.random.random() < math.exp(-beta * delta)


@njit(cache=True)
def _acceptance_count(delta, beta, trials):
    hits = 0
    for _ in range(trials):
        if _accept(delta, beta):
            hits += 1
    return hits


@njit(cache=True)
def _random_spins(n):
    s = np.empty(n, dtype=np.int8)
    for i in range(n):
        s[i] = 1 if np.random.random() < 0.5 else -1
    return s


@njit(cache=True)
def _energy(spins, nbr, nbr_j, deg, h):
    e = 0.0
    for i in range(spins.shape[0]):
        loc = 0.0
        for k in range(deg[i]):
            j = nbr[i, k]
            if j > i:
                loc += nbr_j[i, k] * spins[j]
        e -= spins[i] * (loc + h[i])
    return e


@njit(cache=True)
def _metropolis(spins, nbr, nbr_j, deg, h, betas, e, trace):
    n = spins.shape[0]
    for t in range(betas.shape[0]):
        b = betas[t]
        for i in range(n):
            loc = h[i]
            for k in range(deg[i]):
                loc += nbr_j[i, k] * spins[nbr[i, k]]
            d = 2.0 * spins[i] * loc
            if _accept(d, b):
                spins[i] = -spins[i]
                e += d
        trace[t] = e
    return e


def acceptance_frequency(delta_e: float, beta: float, trials: int, seed: int) -> float:
    """Empirical acceptance rate of one fixed proposal, using the sweep kernel's rule."""
    _seed_numba(kernel_seed(seed))
    return _acceptance_count(float(delta_e), float(beta), int(trials)) / trials


@dataclass(frozen=True)
class CaRunParams:
    betas: np.ndarray
    seed: int = 0
    measure_every: int = 0

    def __post_init__(self):
        b = np.ascontiguousarray(self.betas, dtype=np.float64).ravel()
        object.__setattr__(self, "betas", b)
        if b.size < 1:
            raise ValueError("sweeps must be >= 1")
        if self.measure_every < 0:
            raise ValueError("measure_every must be >= 0")

    @property
    def sweeps(self) -> int:
        return self.betas.size

    @classmethod
    def from_schedule(cls, schedule, seed=0, measure_every=0, sweeps=None):
        if schedule.beta is None:
            raise ValueError(f"classical annealing needs a beta schedule, got {schedule.kind}")
        if sweeps is not None and sweeps != len(schedule):
            raise ValueError(f"schedule has {len(schedule)} points but {sweeps} sweeps requested")
        return cls(schedule.beta, seed, measure_every)


@dataclass(frozen=True)
class EnergyStatistics:
    beta: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    count: np.ndarray
    stderr: np.ndarray


@dataclass(frozen=True)
class CaResult:
    spins: np.ndarray
    energy: float
    tracked_energy: float
    trace: np.ndarray
    stats: EnergyStatistics | None


def _window_stats(betas, trace, every) -> EnergyStatistics:
    rows = []
    for start in range(0, trace.size, every):
        chunk = trace[start:start + every]
        mean, err = batch_means(chunk, DEFAULT_BATCHES) if chunk.size > 1 else (float(chunk[0]), math.nan)
        rows.append((betas[min(start + every, trace.size) - 1], mean, float(chunk.var()), chunk.size, err))
    cols = list(zip(*rows))
    return EnergyStatistics(*(np.asarray(c) for c in cols))


def ca_anneal(instance: SpinGlassInstance, params: CaRunParams, initial=None) -> CaResult:
    """Anneal with one typewriter sweep per schedule entry.

    Starts from a uniformly random configuration drawn from ``params.seed``
    unless ``initial`` is given.
    """
    nbr, nbr_j, deg = instance.neighbor_table
    _seed_numba(kernel_seed(params.seed))
    if initial is None:
        spins = _random_spins(instance.n_spins)
    else:
        spins = np.array(initial, dtype=np.int8)
        if spins.shape != (instance.n_spins,):
            raise ValueError("initial configuration has wrong length")
    e0 = _energy(spins, nbr, nbr_j, deg, instance.fields)
    trace = np.empty(params.sweeps)
    tracked = _metropolis(spins, nbr, nbr_j, deg, instance.fields, params.betas, e0, trace)
    stats = _window_stats(params.betas, trace, params.measure_every) if params.measure_every else None
    return CaResult(spins, energy(instance, spins), tracked, trace, stats)


@dataclass(frozen=True)
class EquilibriumEstimate:
    mean: float
    variance: float
    stderr: float
    variance_stderr: float
    samples: int


def ca_equilibrium_measure(instance: SpinGlassInstance, beta: float, warmup: int, measure: int,
                           seed: int, n_batches: int = DEFAULT_BATCHES) -> EquilibriumEstimate:
    """Fixed-beta sampling of ``<E>`` and ``sigma = <E^2> - <E>^2``."""
    if warmup < 1 or measure < 2:
        raise ValueError("need warmup >= 1 and measure >= 2")
    betas = np.full(warmup + measure, float(beta))
    res = ca_anneal(instance, CaRunParams(betas, seed))
    samples = res.trace[warmup:]
    mean, err = batch_means(samples, n_batches)
    var, var_err = batch_variance(samples, n_batches)
    return EquilibriumEstimate(mean, var, err, var_err, samples.size)


def search_ground_state(instance: SpinGlassInstance, restarts: int = 32, sweeps: int = 20000,
                        beta_start: float = 0.1, beta_end: float = 8.0, seed: int = 0):
    """Best energy over independent long anneals, each finished by a zero-temperature quench.

    This is a heuristic for instances past the enumeration bound. Returns
    ``(best_energy, hits, best_config)`` where ``hits`` counts the restarts that
    reached the best energy; many hits make a missed ground state unlikely.
    """
    betas = np.concatenate([np.linspace(beta_start, beta_end, sweeps), np.full(16, 1e6)])
    ss = np.random.SeedSequence(int(seed))
    best, hits, config = math.inf, 0, None
    for child in ss.spawn(restarts):
        res = ca_anneal(instance, CaRunParams(betas, int(child.generate_state(1)[0])))
        tol = 1e-9 * max(1.0, abs(res.energy))
        if res.energy < best - tol:
            best, hits, config = res.energy, 1, res.spins.copy()
        elif abs(res.energy - best) <= tol:
            hits += 1
    return best, hits, config
