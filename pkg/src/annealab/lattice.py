"""Ising spin-glass instances on 3D simple cubic lattices.

Sites are indexed row-major, ``i = x + Lx * (y + Ly * z)``. Energies follow

.. math ::
    E(s) = - \\sum_{(i,j)} J_{ij} s_i s_j - \\sum_i h_i s_i

with ``k_B = 1`` throughout.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

PERIODIC = "periodic"
OPEN = "open"
BOUNDARIES = (PERIODIC, OPEN)
MAX_DEGREE = 6


class LatticeError(ValueError):
    """Invalid lattice geometry."""


class InstanceFormatError(ValueError):
    """Malformed instance file. Carries the offending line number."""

    def __init__(self, message: str, lineno: int | None = None, path=None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if lineno is not None:
            where += f":{lineno}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class LatticeSpec:
    dims: tuple[int, int, int]
    boundary: str = PERIODIC

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        if len(dims) != 3:
            raise LatticeError(f"need three dimensions, got {len(dims)}")
        if self.boundary not in BOUNDARIES:
            raise LatticeError(f"boundary must be one of {BOUNDARIES}, got {self.boundary!r}")
        if any(d < 1 for d in dims):
            raise LatticeError(f"all dimensions must be >= 1, got {dims}")
        if self.boundary == PERIODIC and any(d < 3 for d in dims):
            raise LatticeError(
                f"periodic boundaries need every dimension >= 3 (got {dims}); "
                "smaller periodic lattices would duplicate bonds between the same pair"
            )

    @property
    def n_sites(self) -> int:
        lx, ly, lz = self.dims
        return lx * ly * lz

    @property
    def n_bonds(self) -> int:
        lx, ly, lz = self.dims
        n = self.n_sites
        if self.boundary == PERIODIC:
            return 3 * n
        return 3 * n - (ly * lz + lx * lz + lx * ly)

    def site(self, x: int, y: int, z: int) -> int:
        lx, ly, _ = self.dims
        return x + lx * (y + ly * z)

    def coords(self, i: int) -> tuple[int, int, int]:
        lx, ly, _ = self.dims
        return i % lx, (i // lx) % ly, i // (lx * ly)

    def bond_pairs(self) -> np.ndarray:
        """Sorted ``(n_bonds, 2)`` array of nearest-neighbour pairs with ``i < j``."""
        lx, ly, lz = self.dims
        periodic = self.boundary == PERIODIC
        pairs = []
        for z in range(lz):
            for y in range(ly):
                for x in range(lx):
                    i = self.site(x, y, z)
                    for axis, size in enumerate(self.dims):
                        c = [x, y, z]
                        c[axis] += 1
                        if c[axis] == size:
                            if not periodic:
                                continue
                            c[axis] = 0
                        j = self.site(*c)
                        pairs.append((min(i, j), max(i, j)))
        arr = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        return arr

    @cached_property
    def _pair_set(self) -> frozenset:
        return frozenset(map(tuple, self.bond_pairs().tolist()))

    def is_neighbor_pair(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self._pair_set


@dataclass(frozen=True, eq=False)
class SpinGlassInstance:
    """Immutable problem instance: lattice, bond list and local fields.

    ``bonds`` is an ``(n_bonds, 2)`` int array with ``i < j`` in every row,
    ``couplings`` the matching ``J_ij`` values, ``fields`` the length-N ``h_i``.
    """

    lattice: LatticeSpec
    bonds: np.ndarray
    couplings: np.ndarray
    fields: np.ndarray
    id: str = ""
    seed: int | None = None

    def __post_init__(self):
        bonds = np.ascontiguousarray(self.bonds, dtype=np.int64).reshape(-1, 2)
        couplings = np.ascontiguousarray(self.couplings, dtype=np.float64).ravel()
        fields = np.ascontiguousarray(self.fields, dtype=np.float64).ravel()
        for arr in (bonds, couplings, fields):
            arr.setflags(write=False)
        object.__setattr__(self, "bonds", bonds)
        object.__setattr__(self, "couplings", couplings)
        object.__setattr__(self, "fields", fields)
        _validate(self)

    @property
    def n_spins(self) -> int:
        return self.lattice.n_sites

    def __eq__(self, other):
        if not isinstance(other, SpinGlassInstance):
            return NotImplemented
        return (
            self.lattice == other.lattice
            and self.id == other.id
            and self.seed == other.seed
            and np.array_equal(self.bonds, other.bonds)
            and np.array_equal(self.couplings, other.couplings)
            and np.array_equal(self.fields, other.fields)
        )

    __hash__ = None

    @cached_property
    def neighbor_table(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(nbr, nbr_j, degree)`` arrays for the Monte Carlo kernels.

        ``nbr[i, :degree[i]]`` are the neighbours of ``i`` and ``nbr_j`` the
        couplings to them.
        """
        n = self.n_spins
        nbr = np.zeros((n, MAX_DEGREE), dtype=np.int64)
        nbr_j = np.zeros((n, MAX_DEGREE), dtype=np.float64)
        degree = np.zeros(n, dtype=np.int64)
        for (i, j), c in zip(self.bonds, self.couplings):
            nbr[i, degree[i]] = j
            nbr_j[i, degree[i]] = c
            degree[i] += 1
            nbr[j, degree[j]] = i
            nbr_j[j, degree[j]] = c
            degree[j] += 1
        return nbr, nbr_j, degree

    def local_fields(self, spins) -> np.ndarray:
        """Effective field ``sum_j J_ij s_j + h_i`` at every site."""
        s = np.asarray(spins, dtype=np.float64)
        out = self.fields.copy()
        i, j = self.bonds[:, 0], self.bonds[:, 1]
        np.add.at(out, i, self.couplings * s[j])
        np.add.at(out, j, self.couplings * s[i])
        return out


def _validate(inst: SpinGlassInstance):
    n = inst.lattice.n_sites
    if inst.fields.shape != (n,):
        raise ValueError(f"fields must have length {n}, got {inst.fields.shape[0]}")
    if inst.couplings.shape[0] != inst.bonds.shape[0]:
        raise ValueError("bonds and couplings differ in length")
    if inst.bonds.shape[0] != inst.lattice.n_bonds:
        raise ValueError(f"expected {inst.lattice.n_bonds} bonds, got {inst.bonds.shape[0]}")
    if inst.bonds.size:
        if np.any(inst.bonds[:, 0] >= inst.bonds[:, 1]):
            raise ValueError("every bond must satisfy i < j")
        keys = inst.bonds[:, 0] * n + inst.bonds[:, 1]
        if np.unique(keys).size != keys.size:
            raise ValueError("duplicate bond")
        pairs = inst.lattice._pair_set
        for i, j in inst.bonds.tolist():
            if (i, j) not in pairs:
                raise ValueError(f"bond ({i}, {j}) is not a nearest-neighbour pair")


def generate_spin_glass(lattice: LatticeSpec, seed: int, id: str | None = None) -> SpinGlassInstance:
    """Couplings i.i.d. uniform on [-1, 1], zero local fields."""
    pairs = lattice.bond_pairs()
    rng = np.random.default_rng(seed)
    couplings = rng.uniform(-1.0, 1.0, size=len(pairs))
    if id is None:
        lx, ly, lz = lattice.dims
        id = f"sg-{lx}x{ly}x{lz}-{lattice.boundary}-s{seed}"
    return SpinGlassInstance(lattice, pairs, couplings, np.zeros(lattice.n_sites), id=id, seed=int(seed))


def generate_ferromagnet(lattice: LatticeSpec, field_site: int = 0, field_strength: float = 0.0,
                         id: str | None = None) -> SpinGlassInstance:
    """All couplings +1; a single local field breaks the global flip symmetry."""
    n = lattice.n_sites
    if not 0 <= field_site < n:
        raise IndexError(f"field_site {field_site} out of range for {n} sites")
    pairs = lattice.bond_pairs()
    fields = np.zeros(n)
    fields[field_site] = field_strength
    if id is None:
        lx, ly, lz = lattice.dims
        id = f"fm-{lx}x{ly}x{lz}-{lattice.boundary}-site{field_site}-h{field_strength!r}"
    return SpinGlassInstance(lattice, pairs, np.ones(len(pairs)), fields, id=id)


def single_spin(field: float = 0.0, id: str = "single-spin") -> SpinGlassInstance:
    """One isolated spin, handy for two-level analytic checks."""
    return SpinGlassInstance(LatticeSpec((1, 1, 1), OPEN), np.zeros((0, 2), dtype=np.int64),
                             np.zeros(0), np.array([field], dtype=float), id=id)


def _as_spins(instance: SpinGlassInstance, config) -> np.ndarray:
    s = np.asarray(config)
    if s.shape[-1] != instance.n_spins:
        raise ValueError(f"configuration has length {s.shape[-1]}, instance has {instance.n_spins} spins")
    return s.astype(np.float64)


def energy(instance: SpinGlassInstance, config) -> float | np.ndarray:
    """Energy of one configuration, or of a stack of them along the last axis."""
    s = _as_spins(instance, config)
    i, j = instance.bonds[:, 0], instance.bonds[:, 1]
    e = -(s[..., i] * s[..., j]) @ instance.couplings - s @ instance.fields
    return float(e) if np.ndim(e) == 0 else e


def flip_delta(instance: SpinGlassInstance, config, i: int) -> float:
    """Energy change from flipping spin ``i``: ``2 s_i (sum_j J_ij s_j + h_i)``."""
    s = _as_spins(instance, config)
    nbr, nbr_j, deg = instance.neighbor_table
    d = deg[i]
    local = float(np.dot(nbr_j[i, :d], s[nbr[i, :d]])) + instance.fields[i]
    return 2.0 * s[i] * local


def random_configuration(n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(np.array([-1, 1], dtype=np.int8), size=n)


# -- text format ------------------------------------------------------------

def format_instance(instance: SpinGlassInstance) -> str:
    lx, ly, lz = instance.lattice.dims
    lines = [f"ising3d {lx} {ly} {lz} {instance.lattice.boundary}"]
    if instance.id:
        lines.append(f"# id {instance.id}")
    if instance.seed is not None:
        lines.append(f"# seed {instance.seed}")
    for (i, j), c in zip(instance.bonds.tolist(), instance.couplings.tolist()):
        lines.append(f"b {i} {j} {c!r}")
    for i, h in enumerate(instance.fields.tolist()):
        if h != 0.0:
            lines.append(f"f {i} {h!r}")
    return "\n".join(lines) + "\n"


def save_instance(instance: SpinGlassInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_instance(instance))


def parse_instance(text: str, path=None) -> SpinGlassInstance:
    lattice = None
    inst_id, seed = "", None
    bonds: list[tuple[int, int]] = []
    couplings: list[float] = []
    fields: dict[int, float] = {}
    seen: dict[tuple[int, int], int] = {}

    def fail(msg, lineno):
        raise InstanceFormatError(msg, lineno, path)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            meta = line[1:].split(None, 1)
            if len(meta) == 2 and meta[0] == "id":
                inst_id = meta[1].strip()
            elif len(meta) == 2 and meta[0] == "seed":
                try:
                    seed = int(meta[1])
                except ValueError:
                    fail(f"bad seed {meta[1]!r}", lineno)
            continue
        tok = line.split()
        if lattice is None:
            if tok[0] != "ising3d" or len(tok) != 5:
                fail("expected header 'ising3d <Lx> <Ly> <Lz> <periodic|open>'", lineno)
            try:
                lattice = LatticeSpec(tuple(int(t) for t in tok[1:4]), tok[4])
            except (ValueError, LatticeError) as exc:
                fail(f"bad header: {exc}", lineno)
            continue
        n = lattice.n_sites
        try:
            if tok[0] == "b" and len(tok) == 4:
                i, j, c = int(tok[1]), int(tok[2]), float(tok[3])
                if not (0 <= i < n and 0 <= j < n):
                    fail(f"site index out of range in bond ({i}, {j})", lineno)
                key = (min(i, j), max(i, j))
                if key in seen:
                    fail(f"duplicate bond {key} (first on line {seen[key]})", lineno)
                if not lattice.is_neighbor_pair(*key):
                    fail(f"bond {key} is not a nearest-neighbour pair", lineno)
                seen[key] = lineno
                bonds.append(key)
                couplings.append(c)
            elif tok[0] == "f" and len(tok) == 3:
                i, h = int(tok[1]), float(tok[2])
                if not 0 <= i < n:
                    fail(f"field site {i} out of range", lineno)
                if i in fields:
                    fail(f"duplicate field for site {i}", lineno)
                fields[i] = h
            else:
                fail(f"unrecognised line {line!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, InstanceFormatError):
                raise
            fail(f"cannot parse {line!r}: {exc}", lineno)
    if lattice is None:
        raise InstanceFormatError("missing 'ising3d' header", None, path)
    if len(bonds) != lattice.n_bonds:
        raise InstanceFormatError(f"expected {lattice.n_bonds} bonds, found {len(bonds)}", None, path)
    order = sorted(range(len(bonds)), key=bonds.__getitem__)
    h = np.zeros(lattice.n_sites)
    for i, v in fields.items():
        h[i] = v
    return SpinGlassInstance(
        lattice,
        np.array([bonds[k] for k in order], dtype=np.int64).reshape(-1, 2),
        np.array([couplings[k] for k in order]),
        h,
        id=inst_id or (os.path.splitext(os.path.basename(str(path)))[0] if path else ""),
        seed=seed,
    )


def load_instance(path) -> SpinGlassInstance:
    with open(path) as fh:
        return parse_instance(fh.read(), path=path)


def load_instances(paths: Sequence) -> list[SpinGlassInstance]:
    return [load_instance(p) for p in paths]
