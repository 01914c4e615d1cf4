"""Discrete-time simulated quantum annealing by path-integral Monte Carlo.

``H = H_P - Gamma sum_i sigma^x_i`` is mapped onto ``M`` Trotter slices, each a
copy of the classical problem weighted by ``exp(-tau H_P)`` with ``tau = beta / M``.
Neighbouring slices of the same site are coupled with strength
``K = -1/2 ln tanh(tau Gamma)``.

Updates are Swendsen-Wang cluster moves along imaginary time only: on each
site line, bonds between aligned neighbouring slices are activated with
probability ``1 - exp(-2K) = 1 - tanh(tau Gamma)``, and each resulting segment
is flipped with heat-bath probability ``1 / (1 + exp(dS))`` for the change ``dS``
in spatial action. A segment with ``dS = 0`` flips with probability 1/2, as in
plain Swendsen-Wang; always flipping it would freeze the kink structure.

The ``<sigma^x>`` estimator is the link average of ``tanh(tau Gamma) ** (s s')``,
i.e. ``tanh`` on aligned links and ``coth`` on kinks. With the negative driver
sign used here the weights are positive and ``<sigma^x> > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .classical import _energy, _seed_numba, kernel_seed
from .lattice import SpinGlassInstance, energy
from .stats import DEFAULT_BATCHES, batch_means

OPEN = "open"
PERIODIC = "periodic"
DEFAULT_SLICES = 1024


def time_coupling(tau: float, gamma: float) -> float:
    """Imaginary-time coupling ``K = -1/2 ln tanh(tau Gamma)``."""
    if tau <= 0 or gamma <= 0:
        raise ValueError("time_coupling needs tau > 0 and gamma > 0")
    return -0.5 * math.log(math.tanh(tau * gamma))


@njit(cache=True)
def _slice_energies(spins, nbr, nbr_j, deg, h):
    m = spins.shape[0]
    out = np.empty(m)
    for k in range(m):
        out[k] = _energy(spins[k], nbr, nbr_j, deg, h)
    return out


@njit(cache=True)
def _count_kinks(spins, periodic):
    m, n = spins.shape
    links = m if periodic else m - 1
    kinks = 0
    for k in range(links):
        k2 = (k + 1) % m
        for i in range(n):
            if spins[k, i] != spins[k2, i]:
                kinks += 1
    return kinks


@njit(cache=True)
def _flip_segment(spins, i, seg, length, de, nbr, nbr_j, deg, h, tau, scale, slice_e):
    ds = 0.0
    for q in range(length):
        k = seg[q]
        loc = h[i]
        for r in range(deg[i]):
            loc += nbr_j[i, r] * spins[k, nbr[i, r]]
        de[q] = 2.0 * spins[k, i] * loc
        ds += de[q]
    if np.random.random() * (1.0 + math.exp(min(tau * scale * ds, 700.0))) < 1.0:
        for q in range(length):
            k = seg[q]
            spins[k, i] = -spins[k, i]
            slice_e[k] += de[q]


@njit(cache=True)
def _sqa_sweeps(spins, nbr, nbr_j, deg, h, taus, gammas, scales, periodic, slice_e, diag):
    m, n = spins.shape
    links = m if periodic else m - 1
    active = np.empty(m, dtype=np.bool_)
    seg = np.empty(m, dtype=np.int64)
    de = np.empty(m)
    for t in range(taus.shape[0]):
        tau, g, sc = taus[t], gammas[t], scales[t]
        p = 1.0 - math.tanh(tau * g) if g > 0.0 else 1.0
        for i in range(n):
            first_cut = -1
            for k in range(links):
                k2 = (k + 1) % m
                a = spins[k, i] == spins[k2, i] and (p >= 1.0 or np.random.random() < p)
                active[k] = a
                if not a and first_cut < 0:
                    first_cut = k
            if periodic:
                if first_cut < 0:
                    for q in range(m):
                        seg[q] = q
                    _flip_segment(spins, i, seg, m, de, nbr, nbr_j, deg, h, tau, sc, slice_e)
                    continue
                start = (first_cut + 1) % m
                length = 0
                for step in range(m):
                    k = (start + step) % m
                    seg[length] = k
                    length += 1
                    if not active[k]:
                        _flip_segment(spins, i, seg, length, de, nbr, nbr_j, deg, h, tau, sc, slice_e)
                        length = 0
            else:
                length = 0
                for k in range(m):
                    seg[length] = k
                    length += 1
                    if k == m - 1 or not active[k]:
                        _flip_segment(spins, i, seg, length, de, nbr, nbr_j, deg, h, tau, sc, slice_e)
                        length = 0
        lo = slice_e[0]
        tot = 0.0
        for k in range(m):
            tot += slice_e[k]
            if slice_e[k] < lo:
                lo = slice_e[k]
        diag[t, 0] = lo
        diag[t, 1] = tot / m
        diag[t, 2] = _count_kinks(spins, periodic)


@njit(cache=True)
def _random_path(m, n):
    s = np.empty((m, n), dtype=np.int8)
    for k in range(m):
        for i in range(n):
            s[k, i] = 1 if np.random.random() < 0.5 else -1
    return s


def spatial_action(instance: SpinGlassInstance, spins, tau: float, scale: float = 1.0) -> float:
    """``tau * scale * sum_k H_P(s^k)``."""
    return float(tau * scale * np.sum(energy(instance, spins)))


def time_action(spins, tau: float, gamma: float, time_boundary: str = OPEN) -> float:
    """``-K sum_links s s'`` along imaginary time (constant prefactors dropped)."""
    s = np.asarray(spins, dtype=np.float64)
    prod = s[:-1] * s[1:]
    total = prod.sum()
    if time_boundary == PERIODIC:
        total += float(s[-1] @ s[0])
    return -time_coupling(tau, gamma) * float(total)


class _Run:
    """Shared setup for annealing and equilibrium runs."""

    def __init__(self, instance, slices, time_boundary, seed, initial=None):
        if slices < 2:
            raise ValueError("need at least 2 Trotter slices")
        if time_boundary not in (OPEN, PERIODIC):
            raise ValueError(f"time_boundary must be 'open' or 'periodic', got {time_boundary!r}")
        self.instance = instance
        self.table = instance.neighbor_table
        self.periodic = time_boundary == PERIODIC
        _seed_numba(kernel_seed(seed))
        if initial is None:
            self.spins = _random_path(slices, instance.n_spins)
        else:
            self.spins = np.array(initial, dtype=np.int8)
            if self.spins.shape != (slices, instance.n_spins):
                raise ValueError("initial path has the wrong shape")
        nbr, nbr_j, deg = self.table
        self.slice_e = _slice_energies(self.spins, nbr, nbr_j, deg, instance.fields)

    def run(self, taus, gammas, scales):
        nbr, nbr_j, deg = self.table
        diag = np.empty((len(taus), 3))
        _sqa_sweeps(self.spins, nbr, nbr_j, deg, self.instance.fields,
                    np.ascontiguousarray(taus, dtype=np.float64),
                    np.ascontiguousarray(gammas, dtype=np.float64),
                    np.ascontiguousarray(scales, dtype=np.float64),
                    self.periodic, self.slice_e, diag)
        return diag


@dataclass(frozen=True)
class PimcParams:
    """Run parameters. ``schedule`` supplies per-sweep ``gamma`` and optionally ``beta``."""

    schedule: object
    slices: int = DEFAULT_SLICES
    beta: float | None = None
    time_boundary: str = OPEN
    seed: int = 0
    readout: str = "best"

    def __post_init__(self):
        gamma = getattr(self.schedule, "gamma", None)
        if gamma is None:
            raise ValueError("SQA needs a schedule with transverse-field values")
        if gamma[-1] != 0.0:
            raise ValueError(f"SQA schedule must end at gamma = 0, ends at {gamma[-1]!r}")
        if self.slices < 2:
            raise ValueError("need at least 2 Trotter slices")
        if self.betas is None:
            raise ValueError("no inverse temperature: pass beta or use a hybrid schedule")
        if np.any(self.betas <= 0):
            raise ValueError("beta must be positive")
        if self.readout not in ("best", "random"):
            raise ValueError("readout must be 'best' or 'random'")

    @property
    def betas(self):
        sb = getattr(self.schedule, "beta", None)
        if sb is not None:
            return np.asarray(sb, dtype=float)
        if self.beta is None:
            return None
        return np.full(len(self.schedule.gamma), float(self.beta))

    @property
    def sweeps(self) -> int:
        return len(self.schedule.gamma)


@dataclass(frozen=True)
class SqaResult:
    spins: np.ndarray
    energy: float
    path: np.ndarray
    slice_energies: np.ndarray
    diagnostics: dict = field(repr=False)


def sqa_anneal(instance: SpinGlassInstance, params: PimcParams, initial=None) -> SqaResult:
    """Anneal the transverse field down to zero; one sweep is one cluster move per site line.

    Readout is the lowest-energy slice of the final path (``readout='best'``)
    or a slice picked at random from the seed (``readout='random'``).
    """
    run = _Run(instance, params.slices, params.time_boundary, params.seed, initial)
    gammas = np.asarray(params.schedule.gamma, dtype=float)
    taus = params.betas / params.slices
    diag = run.run(taus, gammas, np.ones_like(taus))
    energies = energy(instance, run.spins)
    if params.readout == "best":
        k = int(np.argmin(energies))
    else:
        k = int(np.random.default_rng(params.seed).integers(params.slices))
    links = params.slices if run.periodic else params.slices - 1
    diagnostics = {
        "gamma": gammas,
        "beta": params.betas,
        "min_slice_energy": diag[:, 0],
        "mean_slice_energy": diag[:, 1],
        "kink_fraction": diag[:, 2] / (links * instance.n_spins) if instance.n_spins else diag[:, 2],
    }
    return SqaResult(run.spins[k].copy(), float(energies[k]), run.spins, run.slice_e, diagnostics)


def link_estimator(kinks, links: int, tau: float, gamma: float):
    """Per-sample ``<sigma^x>`` from kink counts over ``links`` site-links."""
    t = math.tanh(tau * gamma)
    kinks = np.asarray(kinks, dtype=float)
    return ((links - kinks) * t + kinks / t) / links


@dataclass(frozen=True)
class QuantumStiffnessMeasurement:
    gamma: float
    sigma_x: float
    stderr: float
    c_q: float
    samples: int
    beta: float = math.nan


def sqa_equilibrium_measure(instance: SpinGlassInstance, beta: float, gamma: float, slices: int,
                            warmup: int, measure: int, seed: int, time_boundary: str = PERIODIC,
                            n_batches: int = DEFAULT_BATCHES) -> QuantumStiffnessMeasurement:
    """Fixed-field sampling of ``<sigma^x>`` and ``C_q = beta Gamma (1 - <sigma^x>^2)``.

    Periodic imaginary time samples the thermal trace; open ends sample the
    projected ensemble instead (see ``exact.exact_open_boundary_sigma_x``).
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive for a sigma^x measurement")
    if beta <= 0 or warmup < 1 or measure < 2:
        raise ValueError("need beta > 0, warmup >= 1 and measure >= 2")
    run = _Run(instance, slices, time_boundary, seed)
    tau = beta / slices
    total = warmup + measure
    diag = run.run(np.full(total, tau), np.full(total, float(gamma)), np.ones(total))
    links = (slices if run.periodic else slices - 1) * instance.n_spins
    est = link_estimator(diag[warmup:, 2], links, tau, gamma)
    mean, err = batch_means(est, n_batches)
    return QuantumStiffnessMeasurement(float(gamma), mean, err, beta * gamma * (1 - mean ** 2), est.size, float(beta))


def sqa_general_curvature(instance: SpinGlassInstance, beta: float, gamma0: float, s: float, slices: int,
                          warmup: int, measure: int, seed: int,
                          n_batches: int = DEFAULT_BATCHES) -> tuple[float, float]:
    """Estimate ``(1/beta) d^2 log Z / ds^2`` for ``H(s) = s H_P - (1 - s) Gamma0 X``.

    Uses the thermodynamic estimator: the variance of ``d log W / ds`` plus the
    mean of ``d^2 log W / ds^2`` over path weights ``W``. Periodic time only.
    Returns the value and a batch-means error bar.
    """
    if not 0 <= s < 1:
        raise ValueError("s must lie in [0, 1)")
    run = _Run(instance, slices, PERIODIC, seed)
    tau = beta / slices
    total = warmup + measure
    gamma = (1 - s) * gamma0
    diag = run.run(np.full(total, tau), np.full(total, gamma), np.full(total, float(s)))
    links = slices * instance.n_spins
    kinks = diag[warmup:, 2]
    action = slices * diag[warmup:, 1]
    t = math.tanh(tau * gamma)
    aligned = links - kinks
    g1 = -tau * action - tau * gamma0 * (aligned * t + kinks / t)
    g2 = (tau * gamma0) ** 2 * (aligned * (1 - t * t) + kinks * (1 - 1 / (t * t)))
    value = (g1.var() + g2.mean()) / beta
    nb = min(n_batches, g1.size)
    size = g1.size // nb
    per = [(g1[b * size:(b + 1) * size].var() + g2[b * size:(b + 1) * size].mean()) / beta for b in range(nb)]
    return float(value), float(np.std(per, ddof=1) / math.sqrt(nb))


@dataclass(frozen=True)
class ConvergenceRow:
    slices: int
    sigma_x: float
    stderr: float
    discretized: float
    oracle: float

    @property
    def deviation(self) -> float:
        """Deviation of the discretised expectation from the continuum oracle."""
        return abs(self.discretized - self.oracle)

    @property
    def sampled_deviation(self) -> float:
        return abs(self.sigma_x - self.oracle)


def trotter_convergence_scan(instance: SpinGlassInstance, beta: float, gamma: float, slices_list,
                             warmup: int = 2000, measure: int = 20000, seed: int = 0) -> list[ConvergenceRow]:
    """Sampled and exactly-summed ``<sigma^x>`` at each ``M`` against the thermal oracle.

    The exactly summed value isolates the Trotter bias from sampling noise;
    the sampled value checks that the engine reproduces it.
    """
    from .exact import exact_quantum_expectations, trotter_sigma_x

    oracle = float(exact_quantum_expectations(instance, beta, [gamma]).sigma_x[0])
    rows = []
    for idx, m in enumerate(slices_list):
        meas = sqa_equilibrium_measure(instance, beta, gamma, int(m), warmup, measure, seed + idx, PERIODIC)
        exact_m = trotter_sigma_x(instance, beta, gamma, int(m), PERIODIC)
        rows.append(ConvergenceRow(int(m), meas.sigma_x, meas.stderr, exact_m, oracle))
    return rows


def convergence_slope(slices, deviations) -> float:
    """Least-squares slope of ``log |deviation|`` against ``log M``."""
    return float(np.polyfit(np.log(np.asarray(slices, float)), np.log(np.asarray(deviations, float)), 1)[0])
