import csv
import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from annealab.benchmark import (CURVE_COLUMNS, SCALING_COLUMNS, BenchmarkRecord, CampaignConfig, ConfigError,
                                GroundStateIntegrityError, MethodSpec, aggregate, effort, emit_results,
                                estimate_success_probability, load_records, make_record, plan,
                                repetitions_needed, resolve_ground_states, run_campaign, scaling_fit,
                                tts_optimize)
from annealab.exact import save_ground_states
from annealab.lattice import LatticeSpec, generate_ferromagnet, generate_spin_glass


def fake_records(outcomes, t_a=100, method="m"):
    inst = generate_spin_glass(LatticeSpec((2, 2, 2), "open"), 1)
    return [make_record(k, inst, method, "x", t_a, k, -5.0 + (0 if ok else 0.5), -5.0)
            for k, ok in enumerate(outcomes)]


def test_repetitions_examples():
    r, ri = repetitions_needed(0.5, 0.9)
    assert r == pytest.approx(math.log(0.1) / math.log(0.5))
    assert r == pytest.approx(3.32, abs=0.01) and ri == 4
    assert repetitions_needed(0.9, 0.9) == (pytest.approx(1.0), 1)
    assert repetitions_needed(1.0, 0.9) == (1.0, 1)
    assert repetitions_needed(0.0, 0.9) == (math.inf, math.inf)
    with pytest.raises(ValueError):
        repetitions_needed(0.5, 1.0)


@settings(max_examples=100, deadline=None)
@given(p1=st.floats(0.01, 0.99), p2=st.floats(0.01, 0.99), s=st.floats(0.05, 0.95), s2=st.floats(0.05, 0.95))
def test_repetitions_monotone(p1, p2, s, s2):
    lo, hi = sorted((p1, p2))
    assert repetitions_needed(lo, s)[0] >= repetitions_needed(hi, s)[0]
    a, b = sorted((s, s2))
    assert repetitions_needed(p1, a)[0] <= repetitions_needed(p1, b)[0]


def test_effort():
    assert effort(100, 0.5) == pytest.approx(100 * math.log(0.1) / math.log(0.5))
    assert effort(100, 0.99) == 100
    assert effort(100, 0.0) == math.inf


@pytest.mark.parametrize("k,lo,hi", [(0, 0.0, 0.037), (50, 0.404, 0.596), (100, 0.963, 1.0)])
def test_success_probability(k, lo, hi):
    p, (a, b) = estimate_success_probability(fake_records([True] * k + [False] * (100 - k)))
    assert p == k / 100
    assert a == pytest.approx(lo, abs=1e-3)
    assert b == pytest.approx(hi, abs=1e-3)


def test_record_integrity_and_round_trip():
    inst = generate_spin_glass(LatticeSpec((2, 2, 2), "open"), 1)
    with pytest.raises(GroundStateIntegrityError):
        make_record(0, inst, "m", "x", 10, 0, -5.1, -5.0)
    r = make_record(3, inst, "m", "x", 10, 7, -5.0 + 1e-12, -5.0)
    assert r.success and r.e_res_per_spin == pytest.approx(1e-12 / 8)
    assert BenchmarkRecord.from_json(r.to_json()) == r
    assert json.loads(r.to_json())["schema_version"] == 1
    rel = make_record(0, inst, "m", "x", 10, 0, -99.0, -100.0, tolerance=0.02, relative=True)
    assert rel.success
    assert not make_record(0, inst, "m", "x", 10, 0, -99.0, -100.0).success


def test_tts_optimize():
    opt = tts_optimize([10, 100, 1000], [500.0, 200.0, 1000.0])
    assert (opt.t_a, opt.effort, opt.interior) == (100, 200.0, True)
    with pytest.warns(UserWarning):
        opt = tts_optimize([10, 100, 1000], [500.0, 300.0, 200.0])
    assert opt.t_a == 1000 and not opt.interior
    opt = tts_optimize([10, 100], [math.inf, math.inf])
    assert opt.effort == math.inf


def test_scaling_fit_synthetic():
    n = np.array([27, 64, 125, 216, 343])
    fit = scaling_fit(n, list(10 ** (0.65 * np.sqrt(n) + 1.0)))
    assert fit.slope == pytest.approx(0.65, abs=1e-10)
    assert fit.ci_low <= 0.65 <= fit.ci_high
    flat = scaling_fit(n, [100.0] * 5)
    assert flat.slope == pytest.approx(0.0, abs=1e-12)
    assert flat.ci_low <= 0 <= flat.ci_high
    by_n = scaling_fit(n, list(10 ** (0.01 * n)), abscissa="N")
    assert by_n.slope == pytest.approx(0.01)
    with pytest.raises(ValueError):
        scaling_fit([64, 64, 64], [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        scaling_fit(n, [1.0, 2.0, math.inf, 3.0, 4.0])
    with pytest.raises(ValueError):
        scaling_fit(n, [1.0] * 5, abscissa="logN")


def test_scaling_fit_bootstrap():
    rng = np.random.default_rng(0)
    n = np.array([27, 64, 125])
    per_inst = [10 ** (0.65 * np.sqrt(k) + rng.normal(0, 0.1, size=(40, 3))) for k in n]
    fit = scaling_fit(n, per_inst, n_boot=300, seed=1)
    assert fit.ci_low < fit.slope < fit.ci_high
    assert fit.slope == pytest.approx(0.65, abs=0.05)
    assert scaling_fit(n, per_inst, n_boot=300, seed=1) == fit


def ferro_config(tmp_path, **kw):
    data = dict(sizes=[2], count=2, boundary="open", sweeps=[50, 200], repetitions=3,
                methods=[{"label": "ca", "method": "ca", "family": "linear", "beta_start": 0.1, "beta_end": 4.0}],
                output=str(tmp_path / "out"))
    data.update(kw)
    return CampaignConfig.from_dict(data)


def test_config_collects_every_error():
    with pytest.raises(ConfigError) as info:
        CampaignConfig.from_dict({"sizes": [2], "repetitions": 0, "abscissa": "x", "bogus": 1,
                                  "methods": [{"label": "a", "method": "qmc"}, {"method": "ca"}]})
    errs = info.value.errors
    assert len(errs) >= 5
    joined = " ".join(errs)
    for word in ("bogus", "repetitions", "abscissa", "qmc", "size 2"):
        assert word in joined


def test_plan_and_ids(tmp_path):
    cfg = ferro_config(tmp_path)
    rows = plan(cfg)
    assert len(rows) == cfg.plan_size()["runs"] == 2 * 1 * 2 * 3
    assert [r[0] for r in rows] == list(range(len(rows)))
    ids = [i.id for i in cfg.instances()]
    assert len(set(ids)) == 2


def test_one_instance_one_seed_gives_one_record_per_budget(tmp_path):
    inst = generate_spin_glass(LatticeSpec((2, 2, 2), "open"), 1)
    cfg = ferro_config(tmp_path, repetitions=1, sweeps=[20, 40, 80])
    res = run_campaign(cfg, instances=[inst])
    assert sorted(r.t_a for r in res.records) == [20, 40, 80]


def test_ferromagnet_campaign_always_succeeds(tmp_path):
    # a pinning field as strong as the coordination makes the reversed state unstable
    insts = [generate_ferromagnet(LatticeSpec((2, 2, 2), "open"), k, 3.0, id=f"fm{k}") for k in range(3)]
    cfg = ferro_config(tmp_path, sweeps=[500, 1000])
    cfg.methods[0].beta_end = 8.0
    cfg.methods.append(MethodSpec("sqa", "sqa", "linear", beta=16.0, gamma0=2.0, slices=16))
    res = run_campaign(cfg, instances=insts)
    assert len(res.records) == 3 * 2 * 2 * 3
    assert all(r.success for r in res.records)
    assert all(row["median_Eres_per_spin"] == 0 for row in res.curves)


def test_missing_ground_truth_is_omitted(tmp_path):
    big = generate_spin_glass(LatticeSpec((3, 3, 3)), 0, id="big")
    small = generate_spin_glass(LatticeSpec((2, 2, 2), "open"), 0, id="small")
    known, missing = resolve_ground_states([big, small], None, bound=24)
    assert missing == ["big"] and set(known) == {"small"}
    reg = tmp_path / "gs.txt"
    save_ground_states({"big": -40.0}, reg)
    known, missing = resolve_ground_states([big], str(reg))
    assert known == {"big": -40.0} and not missing
    res = run_campaign(ferro_config(tmp_path, repetitions=1), instances=[big, small])
    assert res.omitted == ["big"]
    assert {r.instance_id for r in res.records} == {"small"}


def test_campaign_determinism_and_workers(tmp_path):
    cfg = ferro_config(tmp_path, sizes=[2], count=2)
    a = run_campaign(cfg)
    b = run_campaign(cfg)
    assert [r.to_json() for r in a.records] == [r.to_json() for r in b.records]
    cfg2 = ferro_config(tmp_path, workers=2)
    c = run_campaign(cfg2)
    assert [r.to_json() for r in a.records] == [r.to_json() for r in c.records]


def test_emit_results(tmp_path):
    cfg = ferro_config(tmp_path)
    res = run_campaign(cfg)
    paths = emit_results(res, tmp_path / "o")
    assert load_records(paths["records"]) == res.records
    with open(paths["curves"]) as fh:
        assert next(csv.reader(fh)) == CURVE_COLUMNS
    assert (tmp_path / "o" / "residual_curves.png").stat().st_size > 0


def test_empty_campaign_writes_headers(tmp_path):
    res = aggregate([], ferro_config(tmp_path))
    paths = emit_results(res, tmp_path / "empty")
    with open(paths["scaling"]) as fh:
        assert fh.read() == ",".join(SCALING_COLUMNS) + "\n"
    assert load_records(paths["records"]) == []
    assert json.load(open(paths["summary"]))["records"] == 0


def test_emit_reports_path_on_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError) as info:
        emit_results(aggregate([], ferro_config(tmp_path)), blocker / "sub")
    assert str(blocker) in str(info.value)


def test_aggregate_effort_tables(tmp_path):
    cfg = ferro_config(tmp_path)
    recs = fake_records([True, False, True, False], t_a=10) + fake_records([True] * 4, t_a=100)
    recs = [BenchmarkRecord(**{**r.__dict__, "index": k}) for k, r in enumerate(recs)]
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        res = aggregate(recs, cfg)
    tts = {row["t_a"]: row for row in res.tts}
    assert tts[10]["median_p"] == 0.5
    assert tts[10]["median_effort"] == pytest.approx(effort(10, 0.5))
    assert tts[100]["median_effort"] == 100
    assert res.optimum[0]["best_t_a"] == 10
