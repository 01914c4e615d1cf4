"""Exact reference calculations for small instances.

Basis states are labelled by an integer code whose bit ``i`` is set when
spin ``i`` is ``+1``. The quantum Hamiltonian is ``H = H_P - Gamma * sum_i sigma^x_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from numba import njit

from .lattice import SpinGlassInstance

GROUND_STATE_BOUND = 30
THERMAL_BOUND = 24
QUANTUM_BOUND = 12


class EnumerationBoundError(ValueError):
    """Instance too large for exhaustive treatment."""


class MissingGroundTruthError(KeyError):
    """No ground-state energy known for an instance."""

    def __str__(self):
        return f"no ground truth for instance {self.args[0]!r}"


class RegistryFormatError(ValueError):
    pass


def _check_bound(instance, bound, what, hint=""):
    if instance.n_spins > bound:
        raise EnumerationBoundError(
            f"{what} is limited to {bound} spins, instance {instance.id!r} has {instance.n_spins}{hint}"
        )


@njit(cache=True)
def _local(spins, i, nbr, nbr_j, deg, h):
    loc = h[i]
    for k in range(deg[i]):
        loc += nbr_j[i, k] * spins[nbr[i, k]]
    return loc


@njit(cache=True)
def _full_energy(spins, nbr, nbr_j, deg, h):
    e = 0.0
    for i in range(spins.shape[0]):
        loc = 0.0
        for k in range(deg[i]):
            if nbr[i, k] > i:
                loc += nbr_j[i, k] * spins[nbr[i, k]]
        e -= spins[i] * (loc + h[i])
    return e


@njit(cache=True)
def _trailing_zeros(k):
    i = 0
    while (k & 1) == 0:
        k >>= 1
        i += 1
    return i


@njit(cache=True)
def _gray_minimum(n, nbr, nbr_j, deg, h):
    spins = -np.ones(n)
    e = _full_energy(spins, nbr, nbr_j, deg, h)
    code = 0
    best, count, best_code = e, 1, 0
    for k in range(1, 1 << n):
        i = _trailing_zeros(k)
        e += 2.0 * spins[i] * _local(spins, i, nbr, nbr_j, deg, h)
        spins[i] = -spins[i]
        code ^= 1 << i
        if (k & 1023) == 0:
            e = _full_energy(spins, nbr, nbr_j, deg, h)
        tol = 1e-9 * max(1.0, abs(best))
        if e < best - tol:
            best, count, best_code = e, 1, code
        elif e <= best + tol:
            count += 1
    return best, count, best_code


@njit(cache=True)
def _gray_energies(n, nbr, nbr_j, deg, h):
    out = np.empty(1 << n)
    spins = -np.ones(n)
    e = _full_energy(spins, nbr, nbr_j, deg, h)
    out[0] = e
    code = 0
    for k in range(1, 1 << n):
        i = _trailing_zeros(k)
        e += 2.0 * spins[i] * _local(spins, i, nbr, nbr_j, deg, h)
        spins[i] = -spins[i]
        code ^= 1 << i
        if (k & 1023) == 0:
            e = _full_energy(spins, nbr, nbr_j, deg, h)
        out[code] = e
    return out


def code_to_spins(code: int, n: int) -> np.ndarray:
    return np.array([1 if (code >> i) & 1 else -1 for i in range(n)], dtype=np.int8)


def all_energies(instance: SpinGlassInstance, bound: int = THERMAL_BOUND) -> np.ndarray:
    """Energy of every basis state, indexed by spin code."""
    _check_bound(instance, bound, "full enumeration")
    nbr, nbr_j, deg = instance.neighbor_table
    return _gray_energies(instance.n_spins, nbr, nbr_j, deg, instance.fields)


def brute_force_ground_state(instance: SpinGlassInstance, bound: int = GROUND_STATE_BOUND):
    """Exact ``(E0, degeneracy, minimizing configuration)`` by Gray-code enumeration."""
    _check_bound(instance, bound, "brute-force ground state",
                 "; import a ground-state registry for larger instances")
    nbr, nbr_j, deg = instance.neighbor_table
    n = instance.n_spins
    e0, count, code = _gray_minimum(n, nbr, nbr_j, deg, instance.fields)
    config = code_to_spins(code, n)
    spins = config.astype(np.float64)
    return _full_energy(spins, nbr, nbr_j, deg, instance.fields), int(count), config


@dataclass(frozen=True)
class ExactClassicalSummary:
    ground_energy: float
    ground_degeneracy: int
    beta: np.ndarray
    mean_energy: np.ndarray
    variance: np.ndarray


def thermal_moments(energies: np.ndarray, betas) -> tuple[np.ndarray, np.ndarray]:
    e = np.asarray(energies)
    emin = e.min()
    means, variances = [], []
    for b in np.atleast_1d(np.asarray(betas, dtype=float)):
        w = np.exp(-b * (e - emin))
        z = w.sum()
        m = float(w @ e / z)
        means.append(m)
        variances.append(float(w @ (e - m) ** 2 / z))
    return np.array(means), np.array(variances)


def exact_classical_thermal(instance: SpinGlassInstance, betas, bound: int = THERMAL_BOUND) -> ExactClassicalSummary:
    e = all_energies(instance, bound)
    emin = e.min()
    degeneracy = int(np.count_nonzero(e <= emin + 1e-9 * max(1.0, abs(emin))))
    means, variances = thermal_moments(e, betas)
    return ExactClassicalSummary(float(emin), degeneracy, np.atleast_1d(np.asarray(betas, float)), means, variances)


# -- quantum ----------------------------------------------------------------

def transverse_operator(n: int) -> sparse.csr_matrix:
    """``sum_i sigma^x_i`` in the spin-code basis."""
    dim = 1 << n
    rows = np.tile(np.arange(dim), n)
    cols = np.concatenate([np.arange(dim) ^ (1 << i) for i in range(n)])
    return sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(dim, dim))


@dataclass(frozen=True)
class ExactQuantumSummary:
    beta: float
    gamma: np.ndarray
    sigma_x: np.ndarray
    problem_energy: np.ndarray
    variance: np.ndarray


def exact_quantum_expectations(instance: SpinGlassInstance, beta: float, gammas,
                               bound: int = QUANTUM_BOUND) -> ExactQuantumSummary:
    """Thermal ``<sigma^x>`` (site average), ``<H_P>`` and ``var(H_P - H_D)`` at each Gamma.

    With ``H_D = -Gamma sum sigma^x`` the fluctuating operator is ``H_P + Gamma X``.
    """
    _check_bound(instance, bound, "exact diagonalization")
    n = instance.n_spins
    ep = all_energies(instance, bound)
    x = transverse_operator(n)
    hp = sparse.diags(ep)
    sx, mean_hp, var = [], [], []
    gammas = np.atleast_1d(np.asarray(gammas, dtype=float))
    for g in gammas:
        h = (hp - g * x).toarray()
        lam, vec = np.linalg.eigh(h)
        w = np.exp(-beta * (lam - lam[0]))
        w /= w.sum()
        xv = x @ vec
        x_diag = np.einsum("ij,ij->j", vec, xv)
        hp_diag = np.einsum("ij,ij->j", vec, ep[:, None] * vec)
        ov = ep[:, None] * vec + g * xv
        o_diag = np.einsum("ij,ij->j", vec, ov)
        o2_diag = np.einsum("ij,ij->j", ov, ov)
        o_mean = w @ o_diag
        sx.append(float(w @ x_diag) / n)
        mean_hp.append(float(w @ hp_diag))
        var.append(float(w @ o2_diag - o_mean ** 2))
    return ExactQuantumSummary(float(beta), gammas, np.array(sx), np.array(mean_hp), np.array(var))


def _phi(x):
    """``(1 - exp(-x)) / x`` with the removable singularity at 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2, -np.expm1(-safe) / safe)


def exact_open_boundary_sigma_x(instance: SpinGlassInstance, beta: float, gamma: float,
                                bound: int = QUANTUM_BOUND) -> float:
    """Continuum limit of the open-time-boundary link estimator.

    Open ends sum freely over the first and last slice, which projects onto the
    uniform superposition ``|+>``; the estimator then averages ``sigma^x``
    inserted uniformly over imaginary time:
    ``(1/beta) int_0^beta <+|e^{-(beta-t)H} X e^{-tH}|+> dt / <+|e^{-beta H}|+>``.
    """
    _check_bound(instance, bound, "exact diagonalization")
    n = instance.n_spins
    ep = all_energies(instance, bound)
    x = transverse_operator(n)
    h = (sparse.diags(ep) - gamma * x).toarray()
    lam, vec = np.linalg.eigh(h)
    a = lam - lam[0]
    c = vec.sum(axis=0)
    xe = vec.T @ (x @ vec)
    am, an = np.meshgrid(a, a, indexing="ij")
    kern = np.exp(-beta * am) * _phi(beta * (an - am))
    num = c @ (xe * kern) @ c
    den = c @ (np.exp(-beta * a) * c)
    return float(num / den) / n


def exact_log_partition(instance: SpinGlassInstance, beta: float, gamma: float,
                        problem_scale: float = 1.0, bound: int = QUANTUM_BOUND) -> float:
    """``log tr exp(-beta (scale * H_P - Gamma X))``."""
    _check_bound(instance, bound, "exact diagonalization")
    ep = all_energies(instance, bound)
    h = (sparse.diags(problem_scale * ep) - gamma * transverse_operator(instance.n_spins)).toarray()
    lam = np.linalg.eigvalsh(h)
    return float(-beta * lam[0] + np.log(np.exp(-beta * (lam - lam[0])).sum()))


def exact_general_curvature(instance: SpinGlassInstance, beta: float, gamma0: float, s: float,
                            step: float = 1e-3) -> float:
    """``(1/beta) d^2 log Z / ds^2`` for ``H(s) = s H_P - (1 - s) Gamma0 X``, by central differences."""
    f = [exact_log_partition(instance, beta, (1 - t) * gamma0, t) for t in (s - step, s, s + step)]
    return (f[0] - 2 * f[1] + f[2]) / step ** 2 / beta


def _link_factors(n, a):
    """Normalised ``e^{aX}`` and ``X e^{aX}`` as dense matrices (common factor cosh(a)^n removed)."""
    t = math.tanh(a)
    one = np.array([[1.0, t], [t, 1.0]])
    der = np.array([[t, 1.0], [1.0, t]])
    e = np.ones((1, 1))
    for _ in range(n):
        e = np.kron(e, one)
    xe = np.zeros_like(e)
    for i in range(n):
        m = np.ones((1, 1))
        for k in range(n):
            m = np.kron(m, der if k == i else one)
        xe += m
    return e, xe


def trotter_sigma_x(instance: SpinGlassInstance, beta: float, gamma: float, slices: int,
                    time_boundary: str = "periodic", problem_scale: float = 1.0, bound: int = 8) -> float:
    """Exact expectation of the path-integral ``<sigma^x>`` link estimator at finite ``M``.

    This sums the discretised path weights by transfer matrices, so it carries
    the same Trotter error as the Monte Carlo sampler but no statistical noise.
    """
    _check_bound(instance, bound, "transfer-matrix evaluation")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    n, m = instance.n_spins, int(slices)
    tau = beta / m
    ep = all_energies(instance, bound) * problem_scale
    d = np.exp(-tau * (ep - ep.min()))
    e, xe = _link_factors(n, tau * gamma)
    if time_boundary == "periodic":
        ed = e * d[None, :]
        p = np.eye(d.size)
        base, k = ed, m - 1
        while k:
            if k & 1:
                p = p @ base
                p /= np.abs(p).max()
            base = base @ base
            base /= np.abs(base).max()
            k >>= 1
        dp = d[:, None] * p
        return float(np.trace(xe @ dp) / np.trace(e @ dp)) / n
    if time_boundary != "open":
        raise ValueError(f"unknown time boundary {time_boundary!r}")
    fwd = [d / d.max()]
    for _ in range(m - 1):
        v = d * (e @ fwd[-1])
        fwd.append(v / v.max())
    total = 0.0
    for k in range(1, m):
        left, right = fwd[m - k - 1], fwd[k - 1]
        total += (left @ xe @ right) / (left @ e @ right)
    return total / (m - 1) / n


# -- ground-state registry --------------------------------------------------

def parse_ground_states(text: str, path=None) -> dict[str, float]:
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        if len(tok) != 3 or tok[0] != "gs":
            raise RegistryFormatError(f"{path or '<registry>'}:{lineno}: expected 'gs <id> <E0>'")
        try:
            e0 = float(tok[2])
        except ValueError:
            raise RegistryFormatError(f"{path or '<registry>'}:{lineno}: bad energy {tok[2]!r}") from None
        if tok[1] in out and out[tok[1]] != e0:
            raise RegistryFormatError(
                f"{path or '<registry>'}:{lineno}: conflicting E0 for {tok[1]!r} ({out[tok[1]]!r} vs {e0!r})")
        out[tok[1]] = e0
    return out


def import_ground_state(path) -> dict[str, float]:
    with open(path) as fh:
        return parse_ground_states(fh.read(), path)


def format_ground_states(registry: dict[str, float]) -> str:
    return "".join(f"gs {k} {v!r}\n" for k, v in registry.items())


def save_ground_states(registry: dict[str, float], path) -> None:
    with open(path, "w") as fh:
        fh.write(format_ground_states(registry))


def lookup_ground_state(registry: dict[str, float], instance_id: str) -> float:
    try:
        return registry[instance_id]
    except KeyError:
        raise MissingGroundTruthError(instance_id) from None
