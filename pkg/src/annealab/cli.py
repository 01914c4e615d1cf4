"""Command-line entry point: ``annealab <subcommand> [options]``.

Every subcommand accepts ``--config FILE`` (TOML). Keys are the long option
names with dashes replaced by underscores, either at top level or inside a
table named after the subcommand; command-line flags win over the file.

Exit codes: 0 success, 2 configuration error, 3 runtime error,
4 missing ground truth.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_NO_TRUTH = 0, 2, 3, 4

log = logging.getLogger("annealab")


class CliConfigError(Exception):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# defaults applied after merging flags and config file
DEFAULTS = {
    "generate": {"boundary": "periodic", "count": 1, "out": ".", "ferromagnet": False,
                 "field_site": 0, "field_strength": 0.0},
    "groundstate": {"method": "brute", "restarts": 32, "search_sweeps": 20000, "bound": 30, "seed": 0,
                    "instances": []},
    "profile": {"kind": "quantum", "beta": 32.0, "gamma0": 10.0, "trotter": 64, "warmup": 500,
                "measure": 5000, "form": "simple", "time_boundary": "periodic", "points": 17},
    "schedule": {"kind": "quantum", "family": "linear"},
    "anneal": {"method": "ca", "beta": 32.0, "trotter": 64, "time_boundary": "open", "readout": "best"},
    "campaign": {"dry_run": False},
}
REQUIRED = {
    "generate": ["dims"],
    "groundstate": ["out"],
    "profile": ["instances", "out", "seed"],
    "schedule": ["sweeps", "out"],
    "anneal": ["schedule", "instance", "seed"],
    "campaign": ["config"],
}
# options naming input files that must exist
INPUT_FILES = {
    "groundstate": ["instances", "import_"],
    "profile": ["instances"],
    "schedule": ["profile"],
    "anneal": ["schedule", "instance", "ground_states"],
    "campaign": ["config"],
}


def _common(p):
    p.add_argument("--config", help="TOML file with default values for this subcommand")
    p.add_argument("--seed", type=int, help="master seed (required for stochastic subcommands)")
    p.add_argument("--workers", type=int, help="worker processes (1 = sequential)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more progress output on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="annealab", description="Classical and simulated quantum annealing "
                                     "of 3D Ising spin glasses with adaptive schedules.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write spin-glass or ferromagnet instance files")
    _common(p)
    p.add_argument("--dims", type=int, nargs=3, metavar=("LX", "LY", "LZ"), help="lattice dimensions")
    p.add_argument("--boundary", choices=["periodic", "open"], help="spatial boundary (default periodic)")
    p.add_argument("--count", type=int, help="number of random instances (default 1)")
    p.add_argument("--out", help="output directory (default .)")
    p.add_argument("--ferromagnet", action="store_const", const=True, help="uniform +1 couplings instead")
    p.add_argument("--field-site", type=int, help="ferromagnet: site carrying the local field")
    p.add_argument("--field-strength", type=float, help="ferromagnet: local field value")

    p = sub.add_parser("groundstate", help="compute or import ground-state energies into a registry")
    _common(p)
    p.add_argument("--instances", nargs="+", help="instance files")
    p.add_argument("--out", help="registry file to write")
    p.add_argument("--method", choices=["brute", "search"],
                   help="brute: exact enumeration; search: best of repeated long anneals")
    p.add_argument("--import", dest="import_", metavar="FILE", help="existing registry to merge in")
    p.add_argument("--restarts", type=int, help="search: independent anneals (default 32)")
    p.add_argument("--search-sweeps", type=int, help="search: sweeps per anneal (default 20000)")
    p.add_argument("--bound", type=int, help="brute: largest spin count to enumerate (default 30)")

    p = sub.add_parser("profile", help="measure a fluctuation profile for adaptive schedules")
    _common(p)
    p.add_argument("--kind", choices=["classical", "quantum"], help="energy variance or <sigma^x> profile")
    p.add_argument("--instances", nargs="+", help="instance files forming the ensemble")
    p.add_argument("--grid", type=float, nargs=2, metavar=("START", "END"),
                   help="control range (beta, or s in [0,1]); default 0.1..5 or 0..1")
    p.add_argument("--points", type=int, help="grid points (default 17)")
    p.add_argument("--beta", type=float, help="quantum: inverse temperature (default 32)")
    p.add_argument("--gamma0", type=float, help="quantum: initial transverse field (default 10)")
    p.add_argument("--trotter", type=int, help="quantum: Trotter slices M (default 64)")
    p.add_argument("--warmup", type=int, help="equilibration sweeps per grid point (default 500)")
    p.add_argument("--measure", type=int, help="measurement sweeps per grid point (default 5000)")
    p.add_argument("--form", choices=["simple", "general"], help="quantum denominator form (default simple)")
    p.add_argument("--time-boundary", choices=["periodic", "open"], help="imaginary-time boundary")
    p.add_argument("--out", help="profile CSV to write")
    p.add_argument("--plot", help="also render the profile to this image file")

    p = sub.add_parser("schedule", help="build a schedule CSV")
    _common(p)
    p.add_argument("--kind", choices=["classical", "quantum"], help="beta or transverse-field schedule")
    p.add_argument("--family", choices=["linear", "exponential", "adaptive", "hybrid"], help="schedule shape")
    p.add_argument("--start", type=float, help="start value (beta, or Gamma0 for quantum)")
    p.add_argument("--end", type=float, help="end value (beta; quantum always ends at 0)")
    p.add_argument("--sweeps", type=int, help="number of sweeps T")
    p.add_argument("--profile", help="adaptive: profile CSV")
    p.add_argument("--gamma0", type=float, help="adaptive quantum / hybrid: initial field")
    p.add_argument("--beta-start", type=float, help="hybrid: initial beta")
    p.add_argument("--beta-end", type=float, help="hybrid: final beta")
    p.add_argument("--out", help="schedule CSV to write")
    p.add_argument("--plot", help="also render the schedule to this image file")

    p = sub.add_parser("anneal", help="run one annealing and report the result as JSON")
    _common(p)
    p.add_argument("--method", choices=["ca", "sqa"], help="classical or simulated quantum annealing")
    p.add_argument("--schedule", help="schedule CSV")
    p.add_argument("--instance", help="instance file")
    p.add_argument("--beta", type=float, help="sqa: inverse temperature unless the schedule carries beta (default 32)")
    p.add_argument("--trotter", type=int, help="sqa: Trotter slices (default 64)")
    p.add_argument("--time-boundary", choices=["open", "periodic"], help="sqa: imaginary-time boundary")
    p.add_argument("--readout", choices=["best", "random"], help="sqa: slice readout (default best)")
    p.add_argument("--ground-states", help="registry for reporting residual energy")
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("campaign", help="run a benchmark campaign from a TOML config")
    _common(p)
    p.add_argument("--dry-run", action="store_const", const=True, help="print the run matrix; run nothing")
    p.add_argument("--out", help="output directory (overrides 'output' in the config)")
    return parser


def _load_toml(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise CliConfigError([f"config file {path!r} does not exist"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise CliConfigError([f"config file {path!r}: {exc}"]) from None


def merge_options(args: argparse.Namespace, parser_dests) -> dict:
    """Flags over config-file values over defaults; lists every problem at once."""
    cmd = args.command
    opts = {k: v for k, v in vars(args).items() if k not in ("command", "verbose")}
    errors = []
    file_vals = {}
    if cmd != "campaign" and args.config:
        data = _load_toml(args.config)
        file_vals = data.get(cmd, {k: v for k, v in data.items() if not isinstance(v, dict)})
        alias = {"import": "import_"}
        file_vals = {alias.get(k, k): v for k, v in file_vals.items()}
        for k in sorted(set(file_vals) - set(parser_dests)):
            errors.append(f"unknown config key {k!r} for {cmd}")
    merged = dict(DEFAULTS.get(cmd, {}))
    merged.update({k: v for k, v in file_vals.items() if k in parser_dests})
    merged.update({k: v for k, v in opts.items() if v is not None})
    for k in parser_dests:
        merged.setdefault(k, None)
    for k in REQUIRED.get(cmd, []):
        if merged.get(k) in (None, [], ""):
            errors.append(f"--{k.replace('_', '-')} is required for {cmd}")
    for k in INPUT_FILES.get(cmd, []):
        paths = merged.get(k)
        _check_files([paths] if isinstance(paths, str) else paths, f"--{k.strip('_').replace('_', '-')} file", errors)
    if errors:
        raise CliConfigError(errors)
    return merged


def _dests(parser, cmd):
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction)).choices[cmd]
    return {a.dest for a in sub._actions if a.dest not in ("help", "verbose")}


def _check_files(paths, what, errors):
    for p in paths or []:
        if not os.path.exists(p):
            errors.append(f"{what} {p!r} does not exist")


# -- subcommands ----------------------------------------------------------------

def cmd_generate(o):
    from .lattice import LatticeSpec, generate_ferromagnet, generate_spin_glass, save_instance

    errors = []
    if not o["ferromagnet"] and o["seed"] is None:
        errors.append("--seed is required for random instances")
    if o["count"] < 1:
        errors.append("--count must be >= 1")
    try:
        lattice = LatticeSpec(tuple(o["dims"]), o["boundary"])
    except ValueError as exc:
        errors.append(str(exc))
    if errors:
        raise CliConfigError(errors)
    os.makedirs(o["out"], exist_ok=True)
    lx, ly, lz = lattice.dims
    written = []
    if o["ferromagnet"]:
        try:
            insts = [generate_ferromagnet(lattice, o["field_site"], o["field_strength"])]
        except IndexError as exc:
            raise CliConfigError([str(exc)]) from None
    else:
        insts = []
        for k in range(o["count"]):
            seed = int(np.random.SeedSequence([o["seed"], k]).generate_state(1)[0])
            iid = f"sg-{lx}x{ly}x{lz}-{lattice.boundary}-s{o['seed']}-i{k:04d}"
            insts.append(generate_spin_glass(lattice, seed, id=iid))
    for inst in insts:
        path = os.path.join(o["out"], f"{inst.id}.txt")
        save_instance(inst, path)
        written.append(path)
    for p in written:
        print(p)
    return EXIT_OK


def cmd_groundstate(o):
    from .classical import search_ground_state
    from .exact import brute_force_ground_state, import_ground_state, save_ground_states
    from .lattice import load_instance

    errors = []
    _check_files(o["instances"], "instance file", errors)
    _check_files([o["import_"]] if o["import_"] else [], "registry", errors)
    if not o["instances"] and not o["import_"]:
        errors.append("give --instances and/or --import")
    if errors:
        raise CliConfigError(errors)
    registry = import_ground_state(o["import_"]) if o["import_"] else {}
    for path in o["instances"]:
        inst = load_instance(path)
        if inst.id in registry:
            continue
        if o["method"] == "brute":
            e0, deg, _ = brute_force_ground_state(inst, bound=o["bound"])
            log.info("%s: E0=%r degeneracy=%d", inst.id, e0, deg)
        else:
            e0, hits, _ = search_ground_state(inst, o["restarts"], o["search_sweeps"], seed=o["seed"])
            log.info("%s: best=%r reached by %d/%d restarts", inst.id, e0, hits, o["restarts"])
        registry[inst.id] = e0
    save_ground_states(registry, o["out"])
    print(o["out"])
    return EXIT_OK


def cmd_profile(o):
    from . import schedules as sch
    from .lattice import load_instance

    errors = []
    _check_files(o["instances"], "instance file", errors)
    if o["points"] < 1:
        errors.append("--points must be >= 1")
    if errors:
        raise CliConfigError(errors)
    insts = [load_instance(p) for p in o["instances"]]
    if o["kind"] == "classical":
        lo, hi = o["grid"] or (0.1, 5.0)
        grid = np.linspace(lo, hi, o["points"])
        prof = sch.measure_classical_profile(insts, grid, o["warmup"], o["measure"], o["seed"])
    else:
        lo, hi = o["grid"] or (0.0, 1.0)
        grid = np.linspace(lo, hi, o["points"])
        prof = sch.measure_quantum_profile(insts, grid, o["beta"], o["gamma0"], o["trotter"], o["warmup"],
                                           o["measure"], o["seed"], o["form"], o["time_boundary"])
    sch.save_profile(prof, o["out"])
    if o["plot"]:
        from .plotting import plot_profile

        plot_profile(prof, o["plot"])
    print(o["out"])
    return EXIT_OK


def cmd_schedule(o):
    from . import schedules as sch

    errors = []
    fam, kind = o["family"], sch.CLASSICAL if o["kind"] == "classical" else sch.QUANTUM
    if fam == "hybrid":
        for k in ("beta_start", "beta_end", "gamma0"):
            if o[k] is None:
                errors.append(f"--{k.replace('_', '-')} is required for hybrid schedules")
    elif fam == "adaptive":
        if not o["profile"]:
            errors.append("--profile is required for adaptive schedules")
        _check_files([o["profile"]] if o["profile"] else [], "profile", errors)
        if kind == sch.QUANTUM and o["gamma0"] is None:
            errors.append("--gamma0 is required for adaptive quantum schedules")
        if kind == sch.CLASSICAL and (o["start"] is None or o["end"] is None):
            errors.append("--start and --end are required for adaptive classical schedules")
    else:
        if o["start"] is None:
            errors.append("--start is required")
        if kind == sch.CLASSICAL and o["end"] is None:
            errors.append("--end is required for classical schedules")
    if errors:
        raise CliConfigError(errors)
    try:
        if fam == "hybrid":
            s = sch.hybrid_schedule(o["beta_start"], o["beta_end"], o["gamma0"], o["sweeps"])
        elif fam == "adaptive":
            if kind == sch.CLASSICAL:
                prof = sch.load_profile(o["profile"], "classical")
                s = sch.build_adaptive_schedule(prof, o["sweeps"], o["start"], o["end"])
            else:
                prof = sch.load_profile(o["profile"], "quantum", gamma0=o["gamma0"])
                s = sch.build_adaptive_schedule(prof, o["sweeps"], 0.0, 1.0, o["gamma0"])
        else:
            end = o["end"] if kind == sch.CLASSICAL else 0.0
            make = sch.linear_schedule if fam == "linear" else sch.exponential_schedule
            s = make(kind, o["start"], end, o["sweeps"])
    except sch.ScheduleError as exc:
        raise CliConfigError([str(exc)]) from None
    sch.save_schedule(s, o["out"])
    if o["plot"]:
        from .plotting import plot_schedules

        plot_schedules([s], o["plot"], [fam])
    print(o["out"])
    return EXIT_OK


def anneal_report(o) -> dict:
    from .classical import CaRunParams, ca_anneal
    from .exact import import_ground_state, lookup_ground_state
    from .lattice import load_instance
    from .pimc import PimcParams, sqa_anneal
    from .schedules import load_schedule

    inst = load_instance(o["instance"])
    sched = load_schedule(o["schedule"])
    if o["method"] == "ca":
        if sched.beta is None:
            raise CliConfigError(["classical annealing needs a schedule with a beta column"])
        res = ca_anneal(inst, CaRunParams(sched.beta, o["seed"]))
        e, spins = res.energy, res.spins
    else:
        try:
            params = PimcParams(sched, o["trotter"], o["beta"], o["time_boundary"], o["seed"], o["readout"])
        except ValueError as exc:
            raise CliConfigError([str(exc)]) from None
        res = sqa_anneal(inst, params)
        e, spins = res.energy, res.spins
    report = {"instance": inst.id, "n_spins": inst.n_spins, "method": o["method"], "sweeps": len(sched),
              "seed": o["seed"], "energy": e, "spins": "".join("+" if v > 0 else "-" for v in spins)}
    if o["ground_states"]:
        e0 = lookup_ground_state(import_ground_state(o["ground_states"]), inst.id)
        report.update(e0=e0, e_res=e - e0, e_res_per_spin=(e - e0) / inst.n_spins)
    return report


def cmd_anneal(o):
    errors = []
    _check_files([o["schedule"], o["instance"]] + ([o["ground_states"]] if o["ground_states"] else []),
                 "file", errors)
    if errors:
        raise CliConfigError(errors)
    text = json.dumps(anneal_report(o), sort_keys=True)
    if o["out"]:
        with open(o["out"], "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_campaign(o):
    from .benchmark import CampaignConfig, ConfigError, emit_results, run_campaign

    data = _load_toml(o["config"])
    data = data.get("campaign", data) if isinstance(data.get("campaign"), dict) else data
    if o["seed"] is not None:
        data["master_seed"] = o["seed"]
    if o["workers"] is not None:
        data["workers"] = o["workers"]
    if o["out"] is not None:
        data["output"] = o["out"]
    base = os.path.dirname(os.path.abspath(o["config"]))
    for key in ("ground_states",):
        if data.get(key):
            data[key] = os.path.join(base, data[key])
    if data.get("instance_files"):
        data["instance_files"] = [os.path.join(base, p) for p in data["instance_files"]]
    for m in data.get("methods", []) or []:
        if isinstance(m, dict) and m.get("profile"):
            m["profile"] = os.path.join(base, m["profile"])
    try:
        cfg = CampaignConfig.from_dict(data)
    except ConfigError as exc:
        raise CliConfigError(exc.errors) from None
    if o["dry_run"]:
        print(json.dumps(cfg.plan_size(), sort_keys=True))
        return EXIT_OK

    def progress(done, total):
        if done == total or done % max(1, total // 20) == 0:
            log.info("campaign: %d/%d runs", done, total)

    result = run_campaign(cfg, progress=progress)
    paths = emit_results(result, cfg.output, cfg.figures)
    print(json.dumps({"records": len(result.records), "omitted": result.omitted, "outputs": paths},
                     sort_keys=True))
    return EXIT_NO_TRUTH if result.omitted else EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "groundstate": cmd_groundstate,
    "profile": cmd_profile,
    "schedule": cmd_schedule,
    "anneal": cmd_anneal,
    "campaign": cmd_campaign,
}


def _fail(category, messages, code):
    sys.stderr.write(json.dumps({"error": category, "messages": messages}) + "\n")
    return code


def main(argv=None) -> int:
    from .exact import MissingGroundTruthError

    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        opts = merge_options(args, _dests(parser, args.command))
        return COMMANDS[args.command](opts)
    except CliConfigError as exc:
        return _fail("config", exc.errors, EXIT_CONFIG)
    except MissingGroundTruthError as exc:
        return _fail("missing_ground_truth", [str(exc)], EXIT_NO_TRUTH)
    except Exception as exc:  # noqa: BLE001 - map everything else to the runtime exit code
        log.debug("runtime failure", exc_info=True)
        return _fail("runtime", [f"{type(exc).__name__}: {exc}"], EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
