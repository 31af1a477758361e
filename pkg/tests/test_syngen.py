import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest

from icubench.core import Task
from icubench.pipeline import build_benchmark
from icubench.syngen import SynthConfig, SynthConfigError, generate, generate_tables, plant_signal

QUIET = dict(multi_stay_rate=0.0, pediatric_rate=0.0, outlier_rate=0.0, unparseable_rate=0.0,
             bad_category_rate=0.0, unknown_item_rate=0.0, missing_stay_id_rate=0.0, out_of_window_rate=0.0,
             orphan_event_rate=0.0)


def _digest(folder):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(folder.iterdir())}


def test_same_seed_same_bytes(tmp_path):
    cfg = SynthConfig(seed=7, n_patients=50)
    generate(cfg, tmp_path / "a")
    generate(cfg, tmp_path / "b")
    a, b = _digest(tmp_path / "a"), _digest(tmp_path / "b")
    assert a == b
    assert {"PATIENTS.csv", "CHARTEVENTS.csv", "generation_report.json", "synth_config.json"} <= set(a)
    generate(replace(cfg, seed=8), tmp_path / "c")
    assert _digest(tmp_path / "c")["CHARTEVENTS.csv"] != a["CHARTEVENTS.csv"]


def test_parallel_matches_serial():
    cfg = SynthConfig(seed=3, n_patients=12)
    serial, r1 = generate_tables(cfg)
    parallel, r2 = generate_tables(cfg, jobs=2)
    for name in serial:
        assert serial[name].equals(parallel[name]), name
    assert r1.counts == r2.counts


def test_headers_follow_schema(tmp_path):
    generate(SynthConfig(seed=0, n_patients=3), tmp_path)
    head = (tmp_path / "ICUSTAYS.csv").read_text().splitlines()[0]
    assert head == "SUBJECT_ID,HADM_ID,ICUSTAY_ID,INTIME,OUTTIME,LOS"
    cfg = json.loads((tmp_path / "synth_config.json").read_text())
    assert cfg["seed"] == 0 and cfg["n_patients"] == 3


def test_referential_integrity():
    tables, truth = generate_tables(SynthConfig(seed=5, n_patients=60))
    stays = set(tables["ICUSTAYS"]["ICUSTAY_ID"]) | {""}
    admissions = set(tables["ADMISSIONS"]["HADM_ID"])
    ev = tables["CHARTEVENTS"]
    assert set(ev["ICUSTAY_ID"]) <= stays
    orphans = int((~ev["HADM_ID"].isin(admissions)).sum())
    assert orphans == truth["orphan_admission"] > 0
    assert set(tables["ICUSTAYS"]["SUBJECT_ID"]) <= set(tables["PATIENTS"]["SUBJECT_ID"])
    assert truth["events"] == len(ev)


def test_no_anomalies_means_no_exclusions(specs, ccs):
    tables, truth = generate_tables(SynthConfig(seed=2, n_patients=80, **QUIET))
    bench = build_benchmark(tables, specs, ccs)
    st = bench.report.stage("extract_subjects")
    assert st["admissions_excluded_multistay"] == 0
    assert st["admissions_excluded_age"] == 0
    va = bench.report.stage("validate_events")
    assert va["orphan_admission"] == va["out_of_window"] == 0
    ex = bench.report.stage("extract_episodes")
    assert ex["outlier"] == ex["unparseable"] == ex["unknown_item"] == ex["unknown_category"] == 0
    assert truth["stays_kept"] == st["stays_kept"] == st["stays_in"]


def test_mortality_rate_near_target(specs, ccs):
    tables, _ = generate_tables(SynthConfig(seed=1, n_patients=2000, rate_scale=0.05))
    bench = build_benchmark(tables, specs, ccs)
    rate = np.mean([e.mortality_inhospital for e in bench.episodes])
    assert abs(rate - 0.13) <= 0.03


def test_invalid_configs():
    for bad in (dict(n_patients=0), dict(mortality_rate=1.5), dict(rate_scale=0.0),
                dict(phenotype_prevalence=(0.1,) * 3), dict(signal_kind="cubic"),
                dict(outlier_rate=0.5, unknown_item_rate=0.5)):
        with pytest.raises(SynthConfigError):
            SynthConfig(**bad).validate()
    with pytest.raises(SynthConfigError):
        plant_signal(SynthConfig(n_patients=2), 1.5)


def _hr_split(bench, specs):
    """Heart-rate values in the 24 hours before death vs all other hours."""
    hr = next(s.id for s in specs if s.name == "heart_rate")
    near, far = [], []
    for e in bench.episodes:
        sel = e.variables == hr
        t, v = e.times[sel], e.values[sel]
        if e.dod_hours is not None:
            close = e.dod_hours - t <= 24
            near.extend(v[close])
            far.extend(v[~close])
        else:
            far.extend(v)
    return np.asarray(near), np.asarray(far)


def _welch(a, b):
    return (a.mean() - b.mean()) / np.sqrt(a.var() / len(a) + b.var() / len(b))


@pytest.fixture(scope="module")
def planted_pair(specs, ccs):
    cfg = SynthConfig(seed=4, n_patients=150, rate_scale=0.3, mortality_rate=0.3)
    out = {}
    for strength in (0.0, 1.0):
        tables, _ = plant_signal(cfg, strength)
        out[strength] = build_benchmark(tables, specs, ccs)
    return out


def test_planted_shift_before_death(planted_pair, specs):
    near, far = _hr_split(planted_pair[1.0], specs)
    assert _welch(near, far) > 5
    near0, far0 = _hr_split(planted_pair[0.0], specs)
    assert abs(_welch(near0, far0)) < 3


def test_planted_phenotype_raises_a_vital(planted_pair, specs):
    bench = planted_pair[1.0]
    # at least one phenotype label moves some variable's stay mean by a wide margin
    means = {}
    for e in bench.episodes:
        means[e.stay_id] = [e.values[e.variables == s.id].mean() if np.any(e.variables == s.id) else np.nan
                            for s in specs]
    labels = {i.stay_id: np.asarray(i.target) for side in bench.instances[Task.PHENO] for i in side}
    stays = sorted(labels)
    M = np.array([means[s] for s in stays])
    Y = np.array([labels[s] for s in stays])
    best = 0.0
    for k in range(Y.shape[1]):
        pos, neg = Y[:, k] == 1, Y[:, k] == 0
        if pos.sum() < 5 or neg.sum() < 5:
            continue
        for j in range(M.shape[1]):
            a, b = M[pos, j], M[neg, j]
            a, b = a[np.isfinite(a)], b[np.isfinite(b)]
            if len(a) > 3 and len(b) > 3 and b.std() > 0:
                best = max(best, abs(_welch(a, b)))
    assert best > 4
