"""Residual-energy and time-to-solution benchmarks for CA and SQA."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import schedules as sch
from .classical import CaRunParams, ca_anneal
from .exact import GROUND_STATE_BOUND, brute_force_ground_state, import_ground_state
from .lattice import LatticeSpec, SpinGlassInstance, generate_spin_glass, load_instance
from .pimc import PimcParams, sqa_anneal
from .stats import wilson_interval

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CURVE_COLUMNS = ["method", "N", "t_a", "median_Eres_per_spin", "q25", "q75"]
TTS_COLUMNS = ["method", "N", "t_a", "median_p", "median_R", "median_effort"]
OPTIMUM_COLUMNS = ["method", "N", "best_t_a", "effort", "interior"]
SCALING_COLUMNS = ["method", "abscissa", "slope", "ci_low", "ci_high", "sizes"]
NUMERIC_TOLERANCE = 1e-9


class GroundStateIntegrityError(RuntimeError):
    """A run found an energy below the recorded ground state."""


class ConfigError(ValueError):
    """Invalid campaign configuration; ``errors`` lists every violation."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class BenchmarkRecord:
    index: int
    instance_id: str
    n_spins: int
    method: str
    schedule: str
    t_a: int
    seed: int
    energy: float
    e0: float
    e_res: float
    e_res_per_spin: float
    success: bool
    schema_version: int = SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "BenchmarkRecord":
        return cls(**json.loads(line))


def make_record(index, instance, method, schedule, t_a, seed, e, e0, tolerance=NUMERIC_TOLERANCE,
                relative=False) -> BenchmarkRecord:
    e_res = e - e0
    if e_res < -NUMERIC_TOLERANCE * max(1.0, abs(e0)):
        raise GroundStateIntegrityError(
            f"instance {instance.id!r}: energy {e!r} is below the recorded ground state {e0!r}")
    tol = tolerance * max(1.0, abs(e0)) if relative else tolerance
    return BenchmarkRecord(index, instance.id, instance.n_spins, method, schedule, int(t_a), int(seed),
                           float(e), float(e0), float(e_res), float(e_res / instance.n_spins), bool(e_res <= tol))


# -- success probability and time to solution ---------------------------------

def repetitions_needed(p: float, target: float = 0.9) -> tuple[float, float]:
    """Repetitions to see at least one success with probability ``target``.

    ``R = ln(1 - target) / ln(1 - p)``; returns ``(R, ceil(R))``. ``p = 0``
    gives ``(inf, inf)``; ``p = 1`` gives ``(1, 1)``.
    """
    if not 0 < target < 1:
        raise ValueError("target probability must lie in (0, 1)")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    if p == 0:
        return math.inf, math.inf
    if p == 1:
        return 1.0, 1
    r = math.log1p(-target) / math.log1p(-p)
    return r, max(1, math.ceil(r - 1e-12))


def estimate_success_probability(records) -> tuple[float, tuple[float, float]]:
    records = list(records)
    if not records:
        raise ValueError("need at least one record")
    k = sum(1 for r in records if r.success)
    return k / len(records), wilson_interval(k, len(records))


def effort(t_a: float, p: float, target: float = 0.9) -> float:
    """Sweeps spent to reach ``target`` success; at least one full run is always paid."""
    r, _ = repetitions_needed(p, target)
    return t_a * max(r, 1.0)


@dataclass(frozen=True)
class TtsOptimum:
    t_a: int
    effort: float
    interior: bool


def tts_optimize(t_grid, efforts) -> TtsOptimum:
    """Minimum of the effort curve over the sweep grid; warns if it sits on the grid edge."""
    t = np.asarray(t_grid)
    e = np.asarray(efforts, dtype=float)
    if t.size < 2:
        raise ValueError("need at least two sweep budgets")
    if not np.any(np.isfinite(e)):
        return TtsOptimum(int(t[-1]), math.inf, False)
    k = int(np.argmin(e))
    interior = 0 < k < t.size - 1
    if not interior:
        warnings.warn(f"effort minimum at the grid edge (t_a={t[k]}); widen the sweep grid", stacklevel=2)
    return TtsOptimum(int(t[k]), float(e[k]), interior)


ABSCISSAE = {
    "sqrtN": lambda n: np.sqrt(n),
    "N": lambda n: np.asarray(n, dtype=float),
    "L": lambda n: np.cbrt(n),
}


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    ci_low: float
    ci_high: float
    intercept: float
    abscissa: str


def _size_statistic(e):
    e = np.asarray(e, dtype=float)
    if e.ndim == 0:
        return float(e)
    med = np.median(e, axis=0)
    return float(np.min(med)) if np.ndim(med) else float(med)


def scaling_fit(sizes, efforts, abscissa: str = "sqrtN", n_boot: int = 1000, seed: int = 0) -> ScalingFit:
    """Fit ``log10(effort)`` linearly against a size abscissa.

    ``efforts[k]`` is either one number for size ``sizes[k]`` or per-instance
    values (shape ``(instances,)`` or ``(instances, budgets)``): the size
    statistic is then the median over instances, minimised over budgets, and the
    95% interval comes from bootstrap resampling of instances. Scalar input
    uses the ordinary least-squares t interval.
    """
    from scipy import stats as sps

    if abscissa not in ABSCISSAE:
        raise ValueError(f"abscissa must be one of {sorted(ABSCISSAE)}")
    sizes = np.asarray(sizes, dtype=float)
    if sizes.size < 3:
        raise ValueError("need at least three sizes")
    x = ABSCISSAE[abscissa](sizes)
    if np.ptp(x) == 0:
        raise ValueError("degenerate fit: all sizes equal")
    y = np.log10([_size_statistic(e) for e in efforts])
    if not np.all(np.isfinite(y)):
        raise ValueError("efforts must be finite and positive")
    fit = sps.linregress(x, y)
    if all(np.ndim(e) == 0 for e in efforts):
        half = sps.t.ppf(0.975, x.size - 2) * fit.stderr if x.size > 2 else math.inf
        return ScalingFit(float(fit.slope), float(fit.slope - half), float(fit.slope + half),
                          float(fit.intercept), abscissa)
    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(n_boot):
        yb = []
        for e in efforts:
            e = np.asarray(e, dtype=float)
            if e.ndim == 0:
                yb.append(float(e))
            else:
                yb.append(_size_statistic(e[rng.integers(0, e.shape[0], e.shape[0])]))
        yb = np.log10(yb)
        if np.all(np.isfinite(yb)):
            boot.append(np.polyfit(x, yb, 1)[0])
    if not boot:
        lo = hi = math.nan
    else:
        lo, hi = np.percentile(boot, [2.5, 97.5])
    return ScalingFit(float(fit.slope), float(lo), float(hi), float(fit.intercept), abscissa)


# -- campaign configuration -------------------------------------------------

METHOD_FAMILIES = {
    "ca": ("linear", "exponential", "adaptive"),
    "sqa": ("linear", "exponential", "adaptive", "hybrid"),
}


@dataclass
class MethodSpec:
    label: str
    method: str
    family: str = "linear"
    beta_start: float = 0.1
    beta_end: float = 5.0
    beta: float = 16.0
    gamma0: float = 1.5
    slices: int = 64
    time_boundary: str = "open"
    profile: str | None = None
    profile_grid: list | None = None
    profile_instances: int = 4
    profile_slices: int | None = None
    profile_warmup: int = 200
    profile_measure: int = 2000

    def errors(self, prefix):
        out = []
        if self.method not in METHOD_FAMILIES:
            out.append(f"{prefix}.method must be 'ca' or 'sqa', got {self.method!r}")
        elif self.family not in METHOD_FAMILIES[self.method]:
            out.append(f"{prefix}.family {self.family!r} not available for {self.method}")
        if self.method == "ca" and self.beta_end < self.beta_start:
            out.append(f"{prefix}: beta_end must be >= beta_start")
        if self.method == "sqa":
            if self.beta <= 0:
                out.append(f"{prefix}.beta must be positive")
            if self.gamma0 <= 0:
                out.append(f"{prefix}.gamma0 must be positive")
            if self.slices < 2:
                out.append(f"{prefix}.slices must be >= 2")
            if self.time_boundary not in ("open", "periodic"):
                out.append(f"{prefix}.time_boundary must be 'open' or 'periodic'")
        if self.profile is not None and not os.path.exists(self.profile):
            out.append(f"{prefix}.profile file {self.profile!r} does not exist")
        return out

    def descriptor(self) -> str:
        if self.method == "ca":
            return f"ca-{self.family}-b{self.beta_start:g}-{self.beta_end:g}"
        extra = f"-b{self.beta_start:g}-{self.beta_end:g}" if self.family == "hybrid" else f"-b{self.beta:g}"
        return f"sqa-{self.family}-g{self.gamma0:g}{extra}-M{self.slices}"


@dataclass
class CampaignConfig:
    sizes: list = field(default_factory=lambda: [3])
    count: int = 4
    boundary: str = "periodic"
    instance_seed: int = 0
    instance_files: list = field(default_factory=list)
    methods: list = field(default_factory=list)
    sweeps: list = field(default_factory=lambda: [100, 1000])
    repetitions: int = 10
    success_tolerance: float = NUMERIC_TOLERANCE
    relative_tolerance: bool = False
    target_probability: float = 0.9
    ground_states: str | None = None
    brute_force_bound: int = 24
    abscissa: str = "sqrtN"
    bootstrap: int = 1000
    master_seed: int = 0
    workers: int = 1
    output: str = "campaign-out"
    figures: bool = True

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        data = dict(data)
        errors = []
        known = set(cls.__dataclass_fields__)
        for k in sorted(set(data) - known):
            errors.append(f"unknown key {k!r}")
            data.pop(k)
        methods = []
        mfields = set(MethodSpec.__dataclass_fields__)
        for i, m in enumerate(data.pop("methods", []) or []):
            if isinstance(m, MethodSpec):
                methods.append(m)
                continue
            bad = sorted(set(m) - mfields)
            if bad:
                errors.append(f"methods[{i}]: unknown keys {bad}")
            missing = [k for k in ("label", "method") if k not in m]
            if missing:
                errors.append(f"methods[{i}]: missing {missing}")
                continue
            methods.append(MethodSpec(**{k: v for k, v in m.items() if k in mfields}))
        try:
            cfg = cls(methods=methods, **data)
        except TypeError as exc:
            raise ConfigError(errors + [str(exc)]) from None
        cfg.validate(errors)
        return cfg

    def validate(self, errors=None):
        errors = list(errors or [])
        if self.repetitions < 1:
            errors.append("repetitions must be >= 1")
        if not 0 < self.target_probability < 1:
            errors.append("target_probability must lie in (0, 1)")
        if not self.sweeps or any(int(t) < 2 for t in self.sweeps):
            errors.append("sweeps must be a non-empty list of budgets >= 2")
        if not self.methods:
            errors.append("at least one method is required")
        labels = [m.label for m in self.methods]
        if len(set(labels)) != len(labels):
            errors.append("method labels must be unique")
        for i, m in enumerate(self.methods):
            errors.extend(m.errors(f"methods[{i}]"))
        if self.boundary not in ("periodic", "open"):
            errors.append("boundary must be 'periodic' or 'open'")
        if not self.instance_files:
            if self.count < 1:
                errors.append("count must be >= 1")
            for L in self.sizes:
                try:
                    LatticeSpec((L, L, L), self.boundary)
                except ValueError as exc:
                    errors.append(f"size {L}: {exc}")
        for p in self.instance_files:
            if not os.path.exists(p):
                errors.append(f"instance file {p!r} does not exist")
        if self.ground_states is not None and not os.path.exists(self.ground_states):
            errors.append(f"ground-state registry {self.ground_states!r} does not exist")
        if self.abscissa not in ABSCISSAE:
            errors.append(f"abscissa must be one of {sorted(ABSCISSAE)}")
        if self.workers < 1:
            errors.append("workers must be >= 1")
        if errors:
            raise ConfigError(errors)
        return self

    def instances(self) -> list[SpinGlassInstance]:
        if self.instance_files:
            return [load_instance(p) for p in self.instance_files]
        out = []
        for L in self.sizes:
            lattice = LatticeSpec((L, L, L), self.boundary)
            for k in range(self.count):
                seed = instance_seed(self.instance_seed, L, k)
                out.append(generate_spin_glass(lattice, seed, id=f"sg-{L}x{L}x{L}-{self.boundary}-m{self.instance_seed}-i{k}"))
        return out

    def plan_size(self) -> dict:
        n_inst = len(self.instance_files) or len(self.sizes) * self.count
        return {"instances": n_inst, "methods": len(self.methods), "sweeps": len(self.sweeps),
                "repetitions": self.repetitions,
                "runs": n_inst * len(self.methods) * len(self.sweeps) * self.repetitions}


def instance_seed(master: int, size: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(size), int(index)]).generate_state(1)[0])


def record_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


# -- campaign execution -------------------------------------------------------

def _profile_for(spec: MethodSpec, instances, master_seed):
    """Measured (or loaded) fluctuation profile for an adaptive method."""
    if spec.method == "ca":
        if spec.profile:
            return sch.load_profile(spec.profile, "classical")
        grid = spec.profile_grid or np.linspace(spec.beta_start, spec.beta_end, 17).tolist()
        return sch.measure_classical_profile(instances[: spec.profile_instances], grid,
                                             spec.profile_warmup, spec.profile_measure, master_seed)
    if spec.profile:
        return sch.load_profile(spec.profile, "quantum", spec.beta, spec.gamma0)
    grid = spec.profile_grid or np.linspace(0.0, 1.0, 17).tolist()
    return sch.measure_quantum_profile(instances[: spec.profile_instances], grid, spec.beta, spec.gamma0,
                                       spec.profile_slices or spec.slices, spec.profile_warmup,
                                       spec.profile_measure, master_seed)


def build_schedule(spec: MethodSpec, t_a: int, profile=None) -> sch.Schedule:
    if spec.method == "ca":
        if spec.family == "linear":
            return sch.linear_schedule(sch.CLASSICAL, spec.beta_start, spec.beta_end, t_a)
        if spec.family == "exponential":
            return sch.exponential_schedule(sch.CLASSICAL, spec.beta_start, spec.beta_end, t_a)
        return sch.build_adaptive_schedule(profile, t_a, spec.beta_start, spec.beta_end)
    if spec.family == "linear":
        return sch.linear_schedule(sch.QUANTUM, spec.gamma0, 0.0, t_a)
    if spec.family == "exponential":
        return sch.exponential_schedule(sch.QUANTUM, spec.gamma0, 0.0, t_a)
    if spec.family == "hybrid":
        return sch.hybrid_schedule(spec.beta_start, spec.beta_end, spec.gamma0, t_a)
    return sch.build_adaptive_schedule(profile, t_a, 0.0, 1.0, spec.gamma0)


def run_one(instance: SpinGlassInstance, spec: MethodSpec, schedule: sch.Schedule, seed: int):
    """Final energy of one annealing run."""
    if spec.method == "ca":
        return ca_anneal(instance, CaRunParams(schedule.beta, seed)).energy
    beta = None if schedule.beta is not None else spec.beta
    return sqa_anneal(instance, PimcParams(schedule, spec.slices, beta, spec.time_boundary, seed)).energy


def _task(args):
    index, instance, spec, schedule, t_a, seed, e0, tol, relative = args
    e = run_one(instance, spec, schedule, seed)
    return make_record(index, instance, spec.label, spec.descriptor(), t_a, seed, e, e0, tol, relative)


def resolve_ground_states(instances, registry_path=None, bound=24):
    """Known E0 per instance id and the ids left without ground truth."""
    registry = import_ground_state(registry_path) if registry_path else {}
    known, missing = {}, []
    for inst in instances:
        if inst.id in registry:
            known[inst.id] = registry[inst.id]
        elif inst.n_spins <= min(bound, GROUND_STATE_BOUND):
            known[inst.id] = brute_force_ground_state(inst)[0]
        else:
            missing.append(inst.id)
    return known, missing


def plan(config: CampaignConfig, instances=None):
    """Deterministic task list ``(index, instance, spec, t_a, rep)`` in record order."""
    instances = config.instances() if instances is None else instances
    rows = []
    index = 0
    for inst in instances:
        for spec in config.methods:
            for t_a in config.sweeps:
                for rep in range(config.repetitions):
                    rows.append((index, inst, spec, int(t_a), rep))
                    index += 1
    return rows


@dataclass
class CampaignResult:
    records: list
    omitted: list
    curves: list
    tts: list
    optimum: list
    scaling: list


def run_campaign(config: CampaignConfig, instances=None, ground_states=None, progress=None) -> CampaignResult:
    """Run every (instance, method, budget, repetition) and aggregate.

    Instances without known ground state are skipped and listed in
    ``omitted``; records keep their planned indices so seeds stay stable.
    """
    instances = config.instances() if instances is None else list(instances)
    if ground_states is None:
        ground_states, missing = resolve_ground_states(instances, config.ground_states, config.brute_force_bound)
    else:
        missing = [i.id for i in instances if i.id not in ground_states]
    for mid in missing:
        log.warning("no ground truth for %s; skipping", mid)

    profiles = {}
    by_size = defaultdict(list)
    for inst in instances:
        by_size[inst.n_spins].append(inst)
    for spec in config.methods:
        if spec.family == "adaptive":
            for n, group in sorted(by_size.items()):
                log.info("measuring %s profile for %s (N=%d)", spec.method, spec.label, n)
                profiles[spec.label, n] = _profile_for(spec, group, config.master_seed)

    sched_cache = {}
    tasks = []
    for index, inst, spec, t_a, rep in plan(config, instances):
        if inst.id in missing:
            continue
        key = (spec.label, inst.n_spins, t_a)
        if key not in sched_cache:
            sched_cache[key] = build_schedule(spec, t_a, profiles.get((spec.label, inst.n_spins)))
        tasks.append((index, inst, spec, sched_cache[key], t_a, record_seed(config.master_seed, index),
                      ground_states[inst.id], config.success_tolerance, config.relative_tolerance))

    records = []
    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            for rec in pool.map(_task, tasks, chunksize=max(1, len(tasks) // (8 * config.workers))):
                records.append(rec)
                if progress:
                    progress(len(records), len(tasks))
    else:
        for t in tasks:
            records.append(_task(t))
            if progress:
                progress(len(records), len(tasks))
    return aggregate(records, config, missing)


def aggregate(records, config: CampaignConfig, omitted=()) -> CampaignResult:
    curves, tts, optimum, scaling = [], [], [], []
    groups = defaultdict(list)
    for r in records:
        groups[r.method, r.n_spins, r.t_a].append(r)
    for (m, n, t), rs in sorted(groups.items()):
        v = [r.e_res_per_spin for r in rs]
        q25, med, q75 = np.percentile(v, [25, 50, 75])
        curves.append({"method": m, "N": n, "t_a": t, "median_Eres_per_spin": float(med),
                       "q25": float(q25), "q75": float(q75)})

    # per (method, N): instance x budget effort matrix
    per_instance = defaultdict(lambda: defaultdict(list))
    for r in records:
        per_instance[r.method, r.n_spins][r.instance_id, r.t_a].append(r)
    target = config.target_probability
    effort_matrices = {}
    for (m, n), cells in sorted(per_instance.items()):
        ids = sorted({i for i, _ in cells})
        budgets = sorted({t for _, t in cells})
        p = np.array([[estimate_success_probability(cells[i, t])[0] for t in budgets] for i in ids])
        eff = np.array([[effort(t, p[a, b], target) for b, t in enumerate(budgets)] for a in range(len(ids))])
        reps = np.array([[repetitions_needed(p[a, b], target)[0] for b in range(len(budgets))]
                         for a in range(len(ids))])
        effort_matrices[m, n] = (budgets, eff)
        med_eff = np.median(eff, axis=0)
        for b, t in enumerate(budgets):
            tts.append({"method": m, "N": n, "t_a": t, "median_p": float(np.median(p[:, b])),
                        "median_R": float(np.median(reps[:, b])), "median_effort": float(med_eff[b])})
        if len(budgets) >= 2:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                opt = tts_optimize(budgets, med_eff)
            optimum.append({"method": m, "N": n, "best_t_a": opt.t_a, "effort": opt.effort,
                            "interior": opt.interior})
    methods = sorted({m for m, _ in effort_matrices})
    for m in methods:
        sizes = sorted(n for mm, n in effort_matrices if mm == m)
        usable = [n for n in sizes if np.isfinite(_size_statistic(effort_matrices[m, n][1]))]
        if len(usable) < 3:
            continue
        fit = scaling_fit(usable, [effort_matrices[m, n][1] for n in usable], config.abscissa,
                          config.bootstrap, config.master_seed)
        scaling.append({"method": m, "abscissa": fit.abscissa, "slope": fit.slope, "ci_low": fit.ci_low,
                        "ci_high": fit.ci_high, "sizes": " ".join(str(n) for n in usable)})
    return CampaignResult(list(records), list(omitted), curves, tts, optimum, scaling)


# -- output -------------------------------------------------------------------

def _write_csv(path, columns, rows):
    try:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            w.writeheader()
            for row in rows:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_results(result: CampaignResult, outdir, figures: bool = True) -> dict:
    """Write records (JSON lines), aggregate CSVs, a summary and optional figures."""
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {outdir}: {exc}") from exc
    paths = {k: os.path.join(outdir, v) for k, v in {
        "records": "records.jsonl", "curves": "residual_curves.csv", "tts": "tts.csv",
        "optimum": "tts_optimum.csv", "scaling": "scaling.csv", "summary": "summary.json"}.items()}
    try:
        with open(paths["records"], "w") as fh:
            for r in result.records:
                fh.write(r.to_json() + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {paths['records']}: {exc}") from exc
    _write_csv(paths["curves"], CURVE_COLUMNS, result.curves)
    _write_csv(paths["tts"], TTS_COLUMNS, result.tts)
    _write_csv(paths["optimum"], OPTIMUM_COLUMNS, result.optimum)
    _write_csv(paths["scaling"], SCALING_COLUMNS, result.scaling)
    with open(paths["summary"], "w") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "records": len(result.records),
                   "omitted": result.omitted}, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if figures and result.curves:
        from . import plotting

        paths["curves_png"] = plotting.plot_residual_curves(result.curves, os.path.join(outdir, "residual_curves.png"))
        if result.optimum:
            paths["scaling_png"] = plotting.plot_effort_scaling(result.optimum, result.scaling,
                                                                os.path.join(outdir, "tts_scaling.png"))
    return paths


def load_records(path) -> list[BenchmarkRecord]:
    with open(path) as fh:
        return [BenchmarkRecord.from_json(line) for line in fh if line.strip()]
