"""Exact oracles checked against independent constructions.

Reference values here come from plain itertools enumeration, Kronecker-product
Hamiltonians with ``scipy.linalg.expm``, and explicit path sums, none of which
share code with the package.
"""

import itertools
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import expm

from annealab.exact import (EnumerationBoundError, MissingGroundTruthError, RegistryFormatError,
                            all_energies, brute_force_ground_state, code_to_spins, exact_classical_thermal,
                            exact_general_curvature, exact_log_partition, exact_open_boundary_sigma_x,
                            exact_quantum_expectations, format_ground_states, import_ground_state,
                            lookup_ground_state, parse_ground_states, save_ground_states, trotter_sigma_x)
from annealab.lattice import LatticeSpec, SpinGlassInstance, energy, generate_spin_glass, single_spin

SX = np.array([[0.0, 1.0], [1.0, 0.0]])
SZ = np.array([[1.0, 0.0], [0.0, -1.0]])


def small_glass(dims=(2, 2, 1), seed=5, fields=None):
    inst = generate_spin_glass(LatticeSpec(dims, "open"), seed)
    if fields is None:
        return inst
    return SpinGlassInstance(inst.lattice, inst.bonds, inst.couplings, fields, id=inst.id)


def site_op(op, i, n):
    """Operator acting on site i, with site 0 as the rightmost Kronecker factor."""
    out = np.ones((1, 1))
    for k in reversed(range(n)):
        out = np.kron(out, op if k == i else np.eye(2))
    return out


def kron_hamiltonians(inst):
    """(H_P, X) in the basis where state index bit i set means sigma^z_i = +1."""
    n = inst.n_spins
    # sigma^z = +1 on basis vector |0>; flip the sign so that bit = 1 means spin up
    z = [-site_op(SZ, i, n) for i in range(n)]
    hp = np.zeros((2**n, 2**n))
    for (i, j), c in zip(inst.bonds.tolist(), inst.couplings.tolist()):
        hp -= c * z[i] @ z[j]
    for i, h in enumerate(inst.fields.tolist()):
        hp -= h * z[i]
    x = sum(site_op(SX, i, n) for i in range(n))
    return hp, x


def test_code_convention_and_all_energies():
    inst = small_glass((2, 2, 2), 3)
    e = all_energies(inst)
    for code in [0, 1, 77, 255]:
        s = [1 if (code >> i) & 1 else -1 for i in range(8)]
        assert e[code] == pytest.approx(energy(inst, s), abs=1e-12)
    assert np.array_equal(code_to_spins(5, 4), [1, -1, 1, -1])


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_brute_force_matches_itertools(seed):
    inst = small_glass((2, 2, 3), seed)
    energies = {s: energy(inst, s) for s in itertools.product([-1, 1], repeat=inst.n_spins)}
    ref = min(energies.values())
    degen = sum(abs(v - ref) < 1e-9 for v in energies.values())
    e0, count, config = brute_force_ground_state(inst)
    assert e0 == pytest.approx(ref, abs=1e-12)
    assert count == degen
    assert energy(inst, config) == pytest.approx(ref, abs=1e-12)


def test_zero_field_ground_state_is_doubly_degenerate():
    inst = small_glass((2, 2, 2), 1)
    e0, count, _ = brute_force_ground_state(inst)
    assert count % 2 == 0
    assert e0 == pytest.approx(-5.281962166978929, abs=1e-12)
    assert count == 2


def test_enumeration_bounds():
    big = generate_spin_glass(LatticeSpec((4, 4, 2), "open"), 0)
    with pytest.raises(EnumerationBoundError):
        brute_force_ground_state(big)
    with pytest.raises(EnumerationBoundError):
        exact_quantum_expectations(small_glass((2, 2, 4)), 1.0, [1.0])


def test_classical_thermal_matches_direct_sum():
    inst = small_glass((2, 2, 2), 4)
    betas = [0.0, 0.5, 2.0]
    summ = exact_classical_thermal(inst, betas)
    e = np.array([energy(inst, s) for s in itertools.product([-1, 1], repeat=8)])
    for k, b in enumerate(betas):
        w = np.exp(-b * e)
        m = (w @ e) / w.sum()
        v = (w @ e**2) / w.sum() - m**2
        assert summ.mean_energy[k] == pytest.approx(m, abs=1e-10)
        assert summ.variance[k] == pytest.approx(v, abs=1e-10)
    assert summ.mean_energy[0] == pytest.approx(0.0, abs=1e-12)


def test_thermal_derivative_identity():
    # d<E>/dbeta = -var(E)
    inst = small_glass((2, 2, 2), 6)
    b, h = 1.3, 1e-5
    s = exact_classical_thermal(inst, [b - h, b, b + h])
    deriv = (s.mean_energy[2] - s.mean_energy[0]) / (2 * h)
    assert deriv == pytest.approx(-s.variance[1], rel=1e-6)


@pytest.mark.parametrize("beta,gamma,h", [(2.0, 1.0, 1.0), (1.0, 0.5, -0.3), (3.0, 2.0, 0.0)])
def test_single_spin_analytic(beta, gamma, h):
    omega = math.hypot(h, gamma)
    res = exact_quantum_expectations(single_spin(h), beta, [gamma])
    assert res.sigma_x[0] == pytest.approx(gamma / omega * math.tanh(beta * omega), abs=1e-12)
    assert res.problem_energy[0] == pytest.approx(-h * h / omega * math.tanh(beta * omega), abs=1e-12)


def test_single_spin_reference_value():
    res = exact_quantum_expectations(single_spin(1.0), 2.0, [1.0])
    assert res.sigma_x[0] == pytest.approx(0.70218, abs=1e-5)


def test_quantum_expectations_match_expm():
    fields = np.array([0.3, 0.0, -0.2, 0.0])
    inst = small_glass((2, 2, 1), 8, fields)
    hp, x = kron_hamiltonians(inst)
    beta, gammas = 1.7, [0.4, 1.5]
    res = exact_quantum_expectations(inst, beta, gammas)
    for k, g in enumerate(gammas):
        rho = expm(-beta * (hp - g * x))
        z = np.trace(rho)
        o = hp + g * x
        assert res.sigma_x[k] == pytest.approx(np.trace(rho @ x) / z / 4, abs=1e-10)
        assert res.problem_energy[k] == pytest.approx(np.trace(rho @ hp) / z, abs=1e-10)
        om = np.trace(rho @ o) / z
        assert res.variance[k] == pytest.approx(np.trace(rho @ o @ o) / z - om**2, abs=1e-9)
        assert exact_log_partition(inst, beta, g) == pytest.approx(math.log(z), abs=1e-10)


def test_general_curvature_matches_expm_differences():
    inst = small_glass((2, 1, 1), 2)
    hp, x = kron_hamiltonians(inst)
    beta, g0, s, h = 2.0, 3.0, 0.4, 1e-3

    def logz(t):
        return math.log(np.trace(expm(-beta * (t * hp - (1 - t) * g0 * x))))

    ref = (logz(s - h) - 2 * logz(s) + logz(s + h)) / h**2 / beta
    assert exact_general_curvature(inst, beta, g0, s) == pytest.approx(ref, rel=1e-5)
    assert ref > 0


def test_open_boundary_oracle_matches_quadrature():
    inst = small_glass((2, 1, 1), 3, np.array([0.4, 0.0]))
    hp, x = kron_hamiltonians(inst)
    beta, g = 1.5, 0.8
    hm = hp - g * x
    plus = np.ones(4) / 2.0

    def integrand(t):
        return plus @ expm(-(beta - t) * hm) @ x @ expm(-t * hm) @ plus

    num = quad(integrand, 0.0, beta)[0] / beta
    den = plus @ expm(-beta * hm) @ plus
    assert exact_open_boundary_sigma_x(inst, beta, g) == pytest.approx(num / den / 2, abs=1e-8)


def path_sum_sigma_x(h, beta, gamma, m, periodic):
    """Explicit sum over every imaginary-time path of one spin."""
    tau = beta / m
    t = math.tanh(tau * gamma)
    k = -0.5 * math.log(t)
    links = m if periodic else m - 1
    num = den = 0.0
    for path in itertools.product([-1, 1], repeat=m):
        w = math.exp(tau * h * sum(path))
        est = 0.0
        for a in range(links):
            b = (a + 1) % m
            w *= math.exp(k * path[a] * path[b])
            est += t if path[a] == path[b] else 1.0 / t
        num += w * est / links
        den += w
    return num / den


@pytest.mark.parametrize("periodic", [True, False])
@pytest.mark.parametrize("m", [3, 6, 9])
def test_trotter_oracle_matches_path_enumeration(periodic, m):
    ref = path_sum_sigma_x(0.7, 2.0, 1.0, m, periodic)
    got = trotter_sigma_x(single_spin(0.7), 2.0, 1.0, m, "periodic" if periodic else "open")
    assert got == pytest.approx(ref, abs=1e-12)


def test_trotter_oracle_limits():
    inst = small_glass((2, 1, 1), 9, np.array([0.2, -0.5]))
    beta, g = 2.0, 1.2
    thermal = exact_quantum_expectations(inst, beta, [g]).sigma_x[0]
    projected = exact_open_boundary_sigma_x(inst, beta, g)
    d64 = abs(trotter_sigma_x(inst, beta, g, 64) - thermal)
    d128 = abs(trotter_sigma_x(inst, beta, g, 128) - thermal)
    assert d128 < 1e-3
    # second-order Trotter error for the periodic trace
    assert d64 / d128 == pytest.approx(4.0, rel=0.05)
    assert trotter_sigma_x(inst, beta, g, 512, "open") == pytest.approx(projected, abs=5e-3)
    with pytest.raises(ValueError):
        trotter_sigma_x(inst, beta, 0.0, 8)


def test_registry_round_trip(tmp_path):
    reg = {"a": -1.25, "sg-3x3x3-periodic-s1": -40.123456789012345}
    p = tmp_path / "gs.txt"
    save_ground_states(reg, p)
    assert import_ground_state(p) == reg
    assert parse_ground_states(format_ground_states(reg)) == reg
    assert parse_ground_states("# comment\n\ngs a 1.0\ngs a 1.0\n") == {"a": 1.0}


@pytest.mark.parametrize("text", ["gs a\n", "energy a 1.0\n", "gs a x\n", "gs a 1.0\ngs a 2.0\n"])
def test_registry_errors(text):
    with pytest.raises(RegistryFormatError):
        parse_ground_states(text)


def test_lookup_missing():
    with pytest.raises(MissingGroundTruthError) as info:
        lookup_ground_state({"a": 1.0}, "b")
    assert "'b'" in str(info.value)
    assert lookup_ground_state({"a": 1.0}, "a") == 1.0
