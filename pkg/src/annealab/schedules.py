"""Annealing schedules and the fluctuation-driven adaptive construction.

An adaptive schedule advances its control variable ``x`` (beta for classical
annealing, ``s`` for quantum annealing with ``Gamma(s) = (1 - s) Gamma0``) by

    x_{k+1} = x_k + lam / D(x_k)

where ``D`` is a measured fluctuation profile: the energy variance
``sigma(beta) = <E^2> - <E>^2`` classically, or ``beta Gamma0 sqrt(1 - <sigma^x>_s^2)``
for the transverse-field schedule. ``lam`` is fixed by requiring exactly ``T``
points from ``start`` to ``end``, so constant prefactors in ``D`` drop out.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

CLASSICAL = "classical_beta"
QUANTUM = "quantum_gamma"
HYBRID = "hybrid"
KINDS = (CLASSICAL, QUANTUM, HYBRID)
EXP_FLOOR = 1e-3


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Schedule:
    """Per-sweep control values. ``beta`` and/or ``gamma`` arrays depending on ``kind``."""

    kind: str
    beta: np.ndarray | None = None
    gamma: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ScheduleError(f"unknown schedule kind {self.kind!r}")
        for name in ("beta", "gamma"):
            v = getattr(self, name)
            if v is not None:
                v = np.array(v, dtype=np.float64).ravel()
                v.setflags(write=False)
                object.__setattr__(self, name, v)
        need_beta = self.kind in (CLASSICAL, HYBRID)
        need_gamma = self.kind in (QUANTUM, HYBRID)
        if need_beta != (self.beta is not None) or need_gamma != (self.gamma is not None):
            raise ScheduleError(f"{self.kind} schedule needs "
                                + " and ".join(n for n, f in (("beta", need_beta), ("gamma", need_gamma)) if f))
        if self.beta is not None and self.gamma is not None and self.beta.size != self.gamma.size:
            raise ScheduleError("beta and gamma arrays differ in length")
        if len(self) < 1:
            raise ScheduleError("empty schedule")
        if self.beta is not None:
            if np.any(np.diff(self.beta) < 0):
                raise ScheduleError("beta must be non-decreasing")
            if np.any(self.beta < 0):
                raise ScheduleError("beta must be non-negative")
        if self.gamma is not None:
            if np.any(np.diff(self.gamma) > 0):
                raise ScheduleError("gamma must be non-increasing")
            if self.gamma[-1] != 0.0:
                raise ScheduleError(f"transverse field must end at 0, ends at {self.gamma[-1]!r}")

    def __len__(self):
        return (self.beta if self.beta is not None else self.gamma).size

    def __eq__(self, other):
        if not isinstance(other, Schedule):
            return NotImplemented
        same = lambda a, b: (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))
        return self.kind == other.kind and same(self.beta, other.beta) and same(self.gamma, other.gamma)

    __hash__ = None

    @property
    def gamma0(self) -> float | None:
        return None if self.gamma is None else float(self.gamma[0])

    def s(self) -> np.ndarray:
        """Control parameter ``s = 1 - Gamma / Gamma0``."""
        if self.gamma is None:
            raise ScheduleError("no transverse field in a classical schedule")
        return 1.0 - self.gamma / self.gamma[0] if self.gamma[0] > 0 else np.ones_like(self.gamma)


def _check_direction(kind, start, end):
    if kind == CLASSICAL and end < start:
        raise ScheduleError(f"beta must increase: {start} -> {end}")
    if kind == QUANTUM:
        if end > start:
            raise ScheduleError(f"transverse field must decrease: {start} -> {end}")
        if end != 0:
            raise ScheduleError("transverse field must end at 0")


def linear_schedule(kind: str, start: float, end: float, sweeps: int) -> Schedule:
    if sweeps < 2:
        raise ScheduleError("a schedule needs at least 2 sweeps to hit both endpoints")
    if kind == HYBRID:
        raise ScheduleError("use hybrid_schedule for combined beta/gamma schedules")
    _check_direction(kind, start, end)
    values = np.linspace(start, end, sweeps)
    return Schedule(kind, beta=values) if kind == CLASSICAL else Schedule(kind, gamma=values)


def exponential_schedule(kind: str, start: float, end: float, sweeps: int, floor: float = EXP_FLOOR) -> Schedule:
    """Geometric interpolation.

    A field decreasing to zero uses ``(Gamma0 + floor) * r^k - floor`` so that
    both endpoints are reached; the last point is set to exactly 0.
    """
    if sweeps < 2:
        raise ScheduleError("a schedule needs at least 2 sweeps to hit both endpoints")
    _check_direction(kind, start, end)
    if kind == CLASSICAL:
        if start <= 0 or end <= 0:
            raise ScheduleError("geometric beta schedule needs positive endpoints")
        return Schedule(kind, beta=np.geomspace(start, end, sweeps))
    if kind == QUANTUM:
        values = np.geomspace(start + floor, floor, sweeps) - floor
        values[0], values[-1] = start, 0.0
        return Schedule(kind, gamma=np.minimum.accumulate(values))
    raise ScheduleError("exponential hybrid schedules are not supported")


def hybrid_schedule(beta_start: float, beta_end: float, gamma0: float, sweeps: int) -> Schedule:
    """Beta rises linearly while the transverse field falls linearly to zero."""
    if sweeps < 2:
        raise ScheduleError("a hybrid schedule needs at least 2 sweeps")
    _check_direction(CLASSICAL, beta_start, beta_end)
    _check_direction(QUANTUM, gamma0, 0.0)
    return Schedule(HYBRID, beta=np.linspace(beta_start, beta_end, sweeps),
                    gamma=np.linspace(gamma0, 0.0, sweeps))


# -- fluctuation profiles ---------------------------------------------------

@dataclass(frozen=True)
class FluctuationProfile:
    """Measured step-size denominator on a monotone control grid."""

    kind: str
    control: np.ndarray
    denominator: np.ndarray
    stderr: np.ndarray
    n: int
    beta: float | None = None
    gamma0: float | None = None

    def __post_init__(self):
        for name in ("control", "denominator", "stderr"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        if self.control.size == 0:
            raise ScheduleError("empty profile grid")
        if not (self.control.size == self.denominator.size == self.stderr.size):
            raise ScheduleError("profile columns differ in length")
        if np.any(np.diff(self.control) <= 0):
            raise ScheduleError("profile grid must be strictly increasing")
        if np.any(self.denominator < 0):
            raise ScheduleError("profile denominators must be non-negative")

    def scaled(self, factor: float) -> "FluctuationProfile":
        return FluctuationProfile(self.kind, self.control, self.denominator * factor, self.stderr * factor,
                                  self.n, self.beta, self.gamma0)

    def __call__(self, x):
        return np.interp(x, self.control, self.denominator)


def _grid(values):
    g = np.asarray(values, dtype=float).ravel()
    if g.size == 0:
        raise ScheduleError("empty control grid")
    if np.any(np.diff(g) <= 0):
        raise ScheduleError("control grid must be strictly increasing")
    return g


def measure_classical_profile(instances, betas, warmup: int = 1000, measure: int = 10000,
                              seed: int = 0) -> FluctuationProfile:
    """Ensemble-averaged energy variance ``sigma(beta)`` on a beta grid."""
    from .classical import ca_equilibrium_measure

    grid = _grid(betas)
    instances = list(instances)
    if not instances:
        raise ScheduleError("need at least one instance")
    ss = np.random.SeedSequence(int(seed))
    seeds = ss.generate_state(len(instances) * grid.size).reshape(len(instances), grid.size)
    var = np.empty((len(instances), grid.size))
    err = np.empty_like(var)
    for a, inst in enumerate(instances):
        for b, beta in enumerate(grid):
            est = ca_equilibrium_measure(inst, beta, warmup, measure, int(seeds[a, b]))
            var[a, b], err[a, b] = est.variance, est.variance_stderr
    mean = var.mean(axis=0)
    if len(instances) > 1:
        stderr = var.std(axis=0, ddof=1) / math.sqrt(len(instances))
    else:
        stderr = err[0]
    return FluctuationProfile("classical", grid, mean, stderr, len(instances))


def quantum_denominator(sigma_x, beta: float, gamma0: float):
    """``beta Gamma0 sqrt(1 - <sigma^x>^2)``, clipped at zero."""
    sx = np.clip(np.asarray(sigma_x, dtype=float), -1.0, 1.0)
    return beta * gamma0 * np.sqrt(1.0 - sx ** 2)


def measure_quantum_profile(instances, s_grid, beta: float, gamma0: float, slices: int,
                            warmup: int = 500, measure: int = 5000, seed: int = 0,
                            form: str = "simple", time_boundary: str = "periodic") -> FluctuationProfile:
    """Step-size denominator of the transverse-field schedule on an ``s`` grid.

    ``form='simple'`` averages ``<sigma^x>_s`` over the ensemble and returns
    ``beta Gamma0 sqrt(1 - <sigma^x>^2)``. At ``s = 1`` the field vanishes and
    ``<sigma^x> = 0`` exactly, so that point is filled in without sampling.
    ``form='general'`` returns ``sqrt(beta C(s))`` from the thermodynamic
    curvature of ``H(s) = s H_P + (1 - s) H_D`` (sampled with periodic time).
    """
    from .pimc import sqa_equilibrium_measure, sqa_general_curvature

    grid = _grid(s_grid)
    if grid[0] < 0 or grid[-1] > 1:
        raise ScheduleError("s grid must lie within [0, 1]")
    instances = list(instances)
    if not instances:
        raise ScheduleError("need at least one instance")
    ss = np.random.SeedSequence(int(seed))
    seeds = ss.generate_state(len(instances) * grid.size).reshape(len(instances), grid.size)
    vals = np.zeros((len(instances), grid.size))
    errs = np.zeros_like(vals)
    for b, s in enumerate(grid):
        gamma = (1.0 - s) * gamma0
        for a, inst in enumerate(instances):
            if form == "simple":
                if gamma <= 0:
                    continue
                m = sqa_equilibrium_measure(inst, beta, gamma, slices, warmup, measure, int(seeds[a, b]),
                                            time_boundary)
                vals[a, b], errs[a, b] = m.sigma_x, m.stderr
            elif form == "general":
                if s >= 1:
                    raise ScheduleError("the general form needs s < 1")
                c, e = sqa_general_curvature(inst, beta, gamma0, s, slices, warmup, measure, int(seeds[a, b]))
                vals[a, b], errs[a, b] = c, e
            else:
                raise ScheduleError(f"unknown profile form {form!r}")
    n = len(instances)
    mean = vals.mean(axis=0)
    spread = vals.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else errs[0]
    if form == "simple":
        denom = quantum_denominator(mean, beta, gamma0)
        # delta method: dD/dx = -beta Gamma0 x / sqrt(1 - x^2)
        slope = np.where(denom > 0, (beta * gamma0) ** 2 * np.abs(mean) / np.where(denom > 0, denom, 1.0), 0.0)
        stderr = slope * spread
    else:
        clipped = np.maximum(mean, 0.0)
        denom = np.sqrt(beta * clipped)
        stderr = np.where(denom > 0, beta * spread / (2 * np.where(denom > 0, denom, 1.0)), 0.0)
    return FluctuationProfile("quantum", grid, denom, stderr, n, beta, gamma0)


# -- adaptive construction ----------------------------------------------------

@njit(cache=True)
def _interp(x, xs, ys):
    n = xs.shape[0]
    if x <= xs[0]:
        return ys[0]
    if x >= xs[n - 1]:
        return ys[n - 1]
    lo, hi = 0, n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if xs[mid] <= x:
            lo = mid
        else:
            hi = mid
    w = (x - xs[lo]) / (xs[hi] - xs[lo])
    return ys[lo] + w * (ys[hi] - ys[lo])


@njit(cache=True)
def _iterate(lam, start, steps, xs, ys, out):
    x = start
    out[0] = x
    for k in range(steps):
        x = x + lam / _interp(x, xs, ys)
        out[k + 1] = x
    return x


def adaptive_controls(control, denominator, sweeps: int, start: float, end: float) -> tuple[np.ndarray, float]:
    """Control values of the adaptive rule and the normalising ``lam``.

    ``lam`` is found by bisection so that step ``T - 1`` lands on ``end``; the
    denominator is linearly interpolated (held constant past the grid ends)
    and floored at ``1e-12`` of its maximum to keep steps finite.
    """
    if sweeps < 2:
        raise ScheduleError("need at least 2 sweeps")
    if not end > start:
        raise ScheduleError("adaptive schedule needs end > start")
    xs = np.ascontiguousarray(control, dtype=float)
    ys = np.asarray(denominator, dtype=float)
    top = ys.max() if ys.size else 0.0
    if not np.isfinite(top) or top <= 0:
        raise ScheduleError("profile is zero everywhere; no step size can be normalised")
    ys = np.ascontiguousarray(np.maximum(ys, 1e-12 * top))
    out = np.empty(sweeps)
    steps = sweeps - 1
    span = end - start
    lo, hi = 0.0, span * top / steps
    while _iterate(hi, start, steps, xs, ys, out) < end:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _iterate(mid, start, steps, xs, ys, out) < end:
            lo = mid
        else:
            hi = mid
    lam = hi
    _iterate(lam, start, steps, xs, ys, out)
    out = np.minimum(out, end)
    out[-1] = end
    return out, lam


def build_adaptive_schedule(profile: FluctuationProfile, sweeps: int, start: float, end: float,
                            gamma0: float | None = None) -> Schedule:
    """Adaptive schedule from a profile.

    For a classical profile ``start``/``end`` are beta values. For a quantum
    profile they are values of ``s`` and the result is returned as a field
    schedule ``Gamma_k = (1 - s_k) Gamma0``.
    """
    xs, _ = adaptive_controls(profile.control, profile.denominator, sweeps, start, end)
    if profile.kind == "classical":
        return Schedule(CLASSICAL, beta=xs)
    g0 = gamma0 if gamma0 is not None else profile.gamma0
    if g0 is None:
        raise ScheduleError("quantum profile without Gamma0")
    if end != 1.0:
        raise ScheduleError("a field schedule must end at s = 1 (Gamma = 0)")
    gamma = (1.0 - xs) * g0
    gamma[-1] = 0.0
    return Schedule(QUANTUM, gamma=np.maximum(np.minimum.accumulate(gamma), 0.0))


def optimize_gamma0(instances, ground_energies, gamma0_grid, make_schedule, slices: int, beta: float,
                    repetitions: int = 1, seed: int = 0, time_boundary: str = "open"):
    """Pick the starting field with the lowest median per-spin residual energy.

    ``make_schedule(gamma0)`` returns the field schedule to try. Ties go to the
    smaller ``Gamma0``. Returns ``(best_gamma0, table)`` with one
    ``(gamma0, median_residual_per_spin)`` row per candidate.
    """
    from .pimc import PimcParams, sqa_anneal

    grid = sorted(float(g) for g in gamma0_grid)
    if not grid:
        raise ScheduleError("empty Gamma0 grid")
    instances = list(instances)
    table = []
    for g0 in grid:
        sched = make_schedule(g0)
        res = []
        for a, inst in enumerate(instances):
            for r in range(repetitions):
                run_seed = int(np.random.SeedSequence([int(seed), a, r]).generate_state(1)[0])
                out = sqa_anneal(inst, PimcParams(sched, slices, beta, time_boundary, run_seed))
                res.append((out.energy - ground_energies[a]) / inst.n_spins)
        table.append((g0, float(np.median(res))))
    best = min(table, key=lambda row: (row[1], row[0]))[0]
    return best, table


# -- files ----------------------------------------------------------------------

def save_schedule(schedule: Schedule, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "beta", "gamma"])
        for k in range(len(schedule)):
            w.writerow([k,
                        "" if schedule.beta is None else repr(float(schedule.beta[k])),
                        "" if schedule.gamma is None else repr(float(schedule.gamma[k]))])


def load_schedule(path) -> Schedule:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"sweep", "beta", "gamma"}:
        raise ScheduleError(f"{path}: expected header sweep,beta,gamma")
    for k, row in enumerate(rows):
        if int(row["sweep"]) != k:
            raise ScheduleError(f"{path}: sweep column out of order at row {k + 2}")
    has_b = [r["beta"] != "" for r in rows]
    has_g = [r["gamma"] != "" for r in rows]
    if len(set(has_b)) > 1 or len(set(has_g)) > 1:
        raise ScheduleError(f"{path}: mixed empty and non-empty values in a column")
    beta = np.array([float(r["beta"]) for r in rows]) if has_b[0] else None
    gamma = np.array([float(r["gamma"]) for r in rows]) if has_g[0] else None
    kind = HYBRID if beta is not None and gamma is not None else CLASSICAL if beta is not None else QUANTUM
    return Schedule(kind, beta=beta, gamma=gamma)


def save_profile(profile: FluctuationProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["control", "denominator", "stderr", "n"])
        for x, d, e in zip(profile.control, profile.denominator, profile.stderr):
            w.writerow([repr(float(x)), repr(float(d)), repr(float(e)), profile.n])


def load_profile(path, kind: str = "classical", beta: float | None = None,
                 gamma0: float | None = None) -> FluctuationProfile:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"control", "denominator", "stderr", "n"}:
        raise ScheduleError(f"{path}: expected header control,denominator,stderr,n")
    col = lambda k: np.array([float(r[k]) for r in rows])
    return FluctuationProfile(kind, col("control"), col("denominator"), col("stderr"),
                              int(rows[0]["n"]), beta, gamma0)
