"""Synthetic MIMIC-shaped cohort generator.

Produces PATIENTS, ADMISSIONS, ICUSTAYS, CHARTEVENTS and DIAGNOSES tables
with planted anomalies (pediatric patients, multi-stay admissions, orphan
and out-of-window events, outliers, unknown items) and an optional
learnable signal.  Every patient draws from its own random stream derived
from ``(seed, patient_index)``, so any partition of patients over workers
reproduces the serial output exactly.

Outcome model: labels are drawn first, then observations are generated
conditionally on them.  With signal strength 0 the observations do not
depend on any label.

Hazard model: an admission ends in death with probability
``mortality_rate``.  A death happens in the ICU (death time = ICU out time)
with probability ``icu_death_fraction``, otherwise on the ward after an
exponential delay following ICU discharge, which then also ends the
hospital stay.  Survivors leave hospital hours to days after the ICU and
may carry a date of death far after discharge.  This yields stays with
decompensation-positive hours (the last 24 h before an ICU death, or
ward deaths within a day of transfer) and stays with none.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .core import (
    N_PHENOTYPES,
    PhenotypeSpec,
    VariableSpec,
    load_phenotype_config,
    load_variable_config,
)

TABLE_COLUMNS = {
    "PATIENTS": ["SUBJECT_ID", "GENDER", "DOB", "DOD"],
    "ADMISSIONS": ["SUBJECT_ID", "HADM_ID", "ADMITTIME", "DISCHTIME", "DEATHTIME"],
    "ICUSTAYS": ["SUBJECT_ID", "HADM_ID", "ICUSTAY_ID", "INTIME", "OUTTIME", "LOS"],
    "CHARTEVENTS": ["SUBJECT_ID", "HADM_ID", "ICUSTAY_ID", "CHARTTIME", "ITEMID", "VALUE", "VALUEUOM"],
    "DIAGNOSES": ["SUBJECT_ID", "HADM_ID", "ICD9_CODE"],
}

BASE_TIME = np.datetime64("2130-01-01T00:00", "m")
UNKNOWN_ITEMIDS = (999001, 999002, 999003)
UNMAPPED_ICD9 = ("V5861", "E8788", "3051", "V1582", "2859", "V4986")

# per-variable sampling rate (events/hour), between-stay and within-stay sd
DEFAULT_RATES = {
    "capillary_refill_rate": 0.1,
    "diastolic_blood_pressure": 1.0,
    "fraction_inspired_oxygen": 0.1,
    "gcs_eye_opening": 0.25,
    "gcs_motor_response": 0.25,
    "gcs_total": 0.25,
    "gcs_verbal_response": 0.25,
    "glucose": 0.15,
    "heart_rate": 1.0,
    "height": 0.01,
    "mean_blood_pressure": 1.0,
    "oxygen_saturation": 1.0,
    "respiratory_rate": 1.0,
    "systolic_blood_pressure": 1.0,
    "temperature": 0.25,
    "weight": 0.02,
    "ph": 0.1,
}
DEFAULT_SPREAD = {
    # name: (between-stay sd, within-stay sd, decimals)
    "diastolic_blood_pressure": (8.0, 6.0, 0),
    "fraction_inspired_oxygen": (0.08, 0.05, 2),
    "glucose": (25.0, 20.0, 0),
    "heart_rate": (10.0, 6.0, 0),
    "height": (9.0, 0.5, 0),
    "mean_blood_pressure": (9.0, 6.0, 0),
    "oxygen_saturation": (1.5, 1.0, 0),
    "respiratory_rate": (3.0, 2.5, 0),
    "systolic_blood_pressure": (14.0, 9.0, 0),
    "temperature": (0.4, 0.3, 1),
    "weight": (15.0, 0.5, 1),
    "ph": (0.04, 0.03, 2),
}
DEFAULT_PREVALENCE = (
    0.20, 0.07, 0.10, 0.32, 0.13, 0.13, 0.20, 0.07, 0.27, 0.32, 0.10, 0.19, 0.29,
    0.42, 0.27, 0.07, 0.13, 0.08, 0.05, 0.04, 0.09, 0.14, 0.18, 0.14, 0.08,
)

# continuous variable shifted upward by each phenotype when a signal is planted
_PHENO_SIGNAL_VARS = (
    "glucose", "heart_rate", "respiratory_rate", "temperature", "systolic_blood_pressure",
    "mean_blood_pressure", "diastolic_blood_pressure", "ph", "fraction_inspired_oxygen",
    "oxygen_saturation", "weight",
)


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_patients: int = 200
    readmission_rate: float = 0.15
    multi_stay_rate: float = 0.05
    pediatric_rate: float = 0.03
    elderly_shift_rate: float = 0.02
    age_mean: float = 64.0
    age_sd: float = 17.0
    los_log_mean: float = math.log(2.5)
    los_log_sd: float = 0.6
    min_los_hours: float = 6.0
    mortality_rate: float = 0.13
    icu_death_fraction: float = 0.6
    rate_scale: float = 1.0
    rates: dict = field(default_factory=lambda: dict(DEFAULT_RATES))
    spread: dict = field(default_factory=lambda: {k: tuple(v) for k, v in DEFAULT_SPREAD.items()})
    phenotype_prevalence: tuple[float, ...] = DEFAULT_PREVALENCE
    outlier_rate: float = 0.005
    unparseable_rate: float = 0.002
    bad_category_rate: float = 0.005
    unknown_item_rate: float = 0.01
    missing_stay_id_rate: float = 0.02
    out_of_window_rate: float = 0.005
    orphan_event_rate: float = 0.005
    unmapped_code_rate: float = 0.5
    signal_strength: float = 0.0
    signal_kind: str = "linear"

    def validate(self) -> None:
        if self.n_patients < 1:
            raise SynthConfigError("n_patients must be positive")
        probs = (
            "readmission_rate", "multi_stay_rate", "pediatric_rate", "elderly_shift_rate", "mortality_rate",
            "icu_death_fraction", "outlier_rate", "unparseable_rate", "bad_category_rate", "unknown_item_rate",
            "missing_stay_id_rate", "out_of_window_rate", "orphan_event_rate", "unmapped_code_rate",
            "signal_strength",
        )
        for name in probs:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SynthConfigError(f"{name} must lie in [0, 1], got {v}")
        anomaly = (self.outlier_rate + self.unparseable_rate + self.bad_category_rate + self.unknown_item_rate
                   + self.missing_stay_id_rate + self.out_of_window_rate)
        if anomaly >= 1.0:
            raise SynthConfigError("event anomaly rates must sum to less than 1")
        if len(self.phenotype_prevalence) != N_PHENOTYPES:
            raise SynthConfigError(f"phenotype_prevalence needs {N_PHENOTYPES} entries")
        if any(not 0.0 <= p <= 1.0 for p in self.phenotype_prevalence):
            raise SynthConfigError("prevalences must lie in [0, 1]")
        if self.rate_scale <= 0 or any(r <= 0 for r in self.rates.values()):
            raise SynthConfigError("sampling rates must be positive")
        if self.age_sd <= 0 or self.los_log_sd <= 0:
            raise SynthConfigError("distribution scales must be positive")
        if self.signal_kind not in ("linear", "xor"):
            raise SynthConfigError("signal_kind must be 'linear' or 'xor'")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["phenotype_prevalence"] = list(self.phenotype_prevalence)
        d["spread"] = {k: list(v) for k, v in self.spread.items()}
        return d


@dataclass
class GenerationReport:
    """Ground truth of what the generator planted, in pipeline terms."""

    counts: Counter = field(default_factory=Counter)

    def __getitem__(self, key: str) -> int:
        return self.counts[key]

    def to_json(self) -> str:
        return json.dumps(dict(sorted(self.counts.items())), indent=2, sort_keys=True) + "\n"


# event categories recorded per emitted CHARTEVENTS row
EV_KEPT = "kept"
EV_RECOVERED = "recovered_kept"
EV_EXCLUDED = "excluded_stay"
EV_ORPHAN = "orphan_admission"
EV_WINDOW = "out_of_window"
EV_UNKNOWN_ITEM = "unknown_item"
EV_UNPARSEABLE = "unparseable"
EV_OUTLIER = "outlier"
EV_BAD_CATEGORY = "unknown_category"


def _fmt_times(minutes: np.ndarray) -> list[str]:
    stamps = np.datetime_as_string(BASE_TIME + np.asarray(minutes, dtype="int64").astype("timedelta64[m]"),
                                   unit="s")
    return [s.replace("T", " ") for s in stamps]


def _fmt_date(minutes: int) -> str:
    day = (BASE_TIME + np.timedelta64(int(minutes), "m")).astype("datetime64[D]")
    return f"{day} 00:00:00"


def _dob_minutes(intime_min: int, age_years: float) -> int:
    """DOB at midnight such that the age at ``intime`` is about ``age_years``."""
    minutes = intime_min - int(round(age_years * 365.25 * 1440))
    day = (BASE_TIME + np.timedelta64(minutes, "m")).astype("datetime64[D]")
    return int((day.astype("datetime64[m]") - BASE_TIME) / np.timedelta64(1, "m"))


def _value_string(v: float, decimals: int) -> str:
    if decimals == 0:
        return str(int(round(v)))
    return f"{v:.{decimals}f}"


def _categorical_choice(rng, spec: VariableSpec, score: np.ndarray) -> np.ndarray:
    """Category index per event whose numeric stand-in is closest to ``score``."""
    vals = spec.numeric_values()
    d = np.abs(vals[None, :] - np.asarray(score, dtype=float)[:, None])
    ties = d == d.min(axis=1, keepdims=True)
    # uniform choice among equally close categories
    return np.argmax(ties * rng.random(d.shape), axis=1)


def _patient_tables(i: int, cfg: SynthConfig, specs: Sequence[VariableSpec],
                    phenos: Sequence[PhenotypeSpec]) -> dict:
    rng = np.random.default_rng([cfg.seed, i])
    subject = 10000 + i
    s_strength = cfg.signal_strength
    rows = {k: [] for k in TABLE_COLUMNS}
    truth = Counter()
    ev_cols = {c: [] for c in TABLE_COLUMNS["CHARTEVENTS"]}
    ev_truth: list[str] = []

    pediatric = rng.random() < cfg.pediatric_rate
    elderly_shift = (not pediatric) and rng.random() < cfg.elderly_shift_rate
    if pediatric:
        age0 = rng.uniform(1.0, 16.0)
    else:
        age0 = float(np.clip(rng.normal(cfg.age_mean, cfg.age_sd), 18.5, 89.0))
    gender = "F" if rng.random() < 0.45 else "M"
    n_adm = 2 if rng.random() < cfg.readmission_rate else 1

    admit = int(rng.integers(0, 3 * 365 * 1440))
    first_intime = None
    dod_text = ""
    truth["patients"] += 1
    for a in range(n_adm):
        hadm = 100000 + 10 * i + a
        truth["admissions"] += 1
        multi = rng.random() < cfg.multi_stay_rate
        n_stays = 2 if multi else 1
        dies = rng.random() < cfg.mortality_rate
        in_icu_death = rng.random() < cfg.icu_death_fraction
        xor_sign = 1.0 if rng.random() < 0.5 else -1.0
        follow_rule = rng.random() < s_strength
        pheno_labels = rng.random(N_PHENOTYPES) < np.asarray(cfg.phenotype_prevalence)

        # diagnoses
        for k in np.flatnonzero(pheno_labels):
            codes = phenos[k].codes
            rows["DIAGNOSES"].append((subject, hadm, codes[rng.integers(len(codes))]))
        if rng.random() < cfg.unmapped_code_rate:
            rows["DIAGNOSES"].append((subject, hadm, UNMAPPED_ICD9[rng.integers(len(UNMAPPED_ICD9))]))

        cursor = admit + int(rng.integers(30, 24 * 60))
        stays = []
        for s in range(n_stays):
            los_h = max(cfg.min_los_hours, float(np.exp(rng.normal(cfg.los_log_mean, cfg.los_log_sd))) * 24.0)
            los_min = int(round(los_h * 60))
            stays.append((200000 + 10 * i + 2 * a + s, cursor, cursor + los_min))
            cursor += los_min + int(rng.integers(60, 48 * 60))
        last_out = stays[-1][2]
        deathtime = None
        if dies and in_icu_death:
            deathtime = last_out
            disch = last_out
        elif dies:
            deathtime = last_out + int(60 + rng.exponential(36.0) * 60)
            disch = deathtime
        else:
            disch = last_out + int(rng.integers(2 * 60, 96 * 60))
        if first_intime is None:
            first_intime = stays[0][1]
            dob = _dob_minutes(first_intime, age0)
            if elderly_shift:
                dob -= int(300 * 365.25 * 1440)
        rows["ADMISSIONS"].append((subject, hadm, admit, disch, deathtime))

        adm_excluded = multi or pediatric
        if multi:
            truth["admissions_excluded_multistay"] += 1
            truth["stays_excluded_multistay"] += n_stays
        elif pediatric:
            truth["admissions_excluded_age"] += 1
            truth["stays_excluded_age"] += 1
        else:
            truth["stays_kept"] += 1
            if dies:
                truth["deaths_kept"] += 1

        for stay_id, intime, outtime in stays:
            los_min = outtime - intime
            rows["ICUSTAYS"].append((subject, hadm, stay_id, intime, outtime, los_min))
            truth["stays"] += 1
            dod_h = (deathtime - intime) / 60.0 if (deathtime is not None and stay_id == stays[-1][0]) else None
            _stay_events(rng, cfg, specs, subject, hadm, stay_id, intime, los_min, dies, dod_h, pheno_labels,
                         xor_sign, follow_rule, adm_excluded, ev_cols, ev_truth)

        if dies:
            dod_text = _fmt_date(deathtime)
            break
        admit = disch + int(rng.integers(30, 300)) * 1440

    if not dod_text and rng.random() < 0.2:
        dod_text = _fmt_date(rows["ADMISSIONS"][-1][3] + int(rng.integers(30, 2000)) * 1440)
    rows["PATIENTS"].append((subject, gender, dob, dod_text))

    # orphan events: admission ids that exist nowhere
    n_orphans = rng.binomial(len(ev_truth), cfg.orphan_event_rate) if ev_truth else 0
    for k in range(n_orphans):
        spec = specs[int(rng.integers(len(specs)))]
        ev_cols["SUBJECT_ID"].append(subject)
        ev_cols["HADM_ID"].append(str(900000 + 10 * i + k % 10))
        ev_cols["ICUSTAY_ID"].append("")
        ev_cols["CHARTTIME"].append(first_intime + int(rng.integers(0, 48 * 60)))
        ev_cols["ITEMID"].append(spec.itemids[0])
        ev_cols["VALUE"].append(str(spec.normal_value))
        ev_cols["VALUEUOM"].append(spec.unit)
        ev_truth.append(EV_ORPHAN)

    return {"rows": rows, "events": ev_cols, "ev_truth": ev_truth, "truth": truth}


def _stay_events(rng, cfg, specs, subject, hadm, stay_id, intime, los_min, dies, dod_h, pheno_labels,
                 xor_sign, follow_rule, excluded, ev_cols, ev_truth) -> None:
    los_h = los_min / 60.0
    s = cfg.signal_strength
    z_los = (math.log(max(los_h, 1.0) / 24.0) - cfg.los_log_mean) / cfg.los_log_sd
    by_name = {sp.name: sp for sp in specs}

    # level shifts (per stay) and a ramp toward death (per event)
    shift = {name: 0.0 for name in by_name}
    death_ramp = {name: 0.0 for name in by_name}
    gcs_shift = 0.0
    gcs_ramp = 0.0
    if cfg.signal_kind == "linear":
        if dies:
            shift["heart_rate"] += 25.0 * s
            shift["respiratory_rate"] += 5.0 * s
            shift["systolic_blood_pressure"] -= 18.0 * s
            shift["oxygen_saturation"] -= 2.5 * s
            gcs_shift -= 4.0 * s
            death_ramp["heart_rate"] = 25.0 * s
            gcs_ramp = -4.0 * s
        shift["temperature"] += 0.5 * s * z_los
        shift["glucose"] += 20.0 * s * z_los
        for k in np.flatnonzero(pheno_labels):
            name = _PHENO_SIGNAL_VARS[k % len(_PHENO_SIGNAL_VARS)]
            shift[name] += 0.6 * s * cfg.spread[name][0]
    else:
        # sign of the heart-rate shift times sign of the blood-pressure shift
        # encodes mortality for rule-following stays; marginals carry no signal
        a = xor_sign
        b = (a if dies else -a) if follow_rule else (1.0 if rng.random() < 0.5 else -1.0)
        shift["heart_rate"] += 22.0 * a
        shift["systolic_blood_pressure"] += 22.0 * b

    base_gcs = 15.0 - abs(rng.normal(0.0, 2.0))
    for sp in specs:
        rate = cfg.rates[sp.name] * cfg.rate_scale
        n = rng.poisson(rate * los_h)
        if n == 0:
            continue
        minutes = np.sort(rng.integers(0, los_min, size=n))
        t_h = minutes / 60.0
        ramp = np.zeros(n)
        if dod_h is not None:
            ramp = np.clip(1.0 - (dod_h - t_h) / 24.0, 0.0, 1.0)
        if sp.is_categorical:
            if sp.name == "capillary_refill_rate":
                p_abn = 0.1 + (0.5 * s if (dies and cfg.signal_kind == "linear") else 0.0)
                score = (rng.random(n) < p_abn).astype(float)
            else:
                total = np.clip(base_gcs + gcs_shift + gcs_ramp * ramp + rng.normal(0.0, 0.8, n), 3, 15)
                scale = {"gcs_total": 1.0, "gcs_eye_opening": 4 / 15, "gcs_motor_response": 6 / 15,
                         "gcs_verbal_response": 5 / 15}[sp.name]
                score = np.round(total * scale)
            idx = _categorical_choice(rng, sp, score)
            values = [sp.categories[k] for k in idx]
        else:
            between, within, decimals = cfg.spread[sp.name]
            lo, hi = sp.valid_range
            level = float(sp.normal_value) + rng.normal(0.0, between) + shift[sp.name]
            v = level + death_ramp[sp.name] * ramp + rng.normal(0.0, within, n)
            v = np.clip(v, lo, hi)
            values = [_value_string(x, decimals) for x in v]
            # rounding may not leave the valid range
            values = [x if lo <= float(x) <= hi else _value_string(min(max(float(x), lo), hi), decimals + 2)
                      for x in values]
        charttime = intime + minutes
        items = np.asarray(sp.itemids)[rng.integers(len(sp.itemids), size=n)]
        stay_field = np.full(n, str(stay_id), dtype=object)
        values = np.asarray(values, dtype=object)
        category = np.full(n, EV_KEPT, dtype=object)
        edges = np.cumsum([cfg.missing_stay_id_rate, cfg.out_of_window_rate, cfg.unknown_item_rate,
                           cfg.outlier_rate, cfg.unparseable_rate, cfg.bad_category_rate])
        slot = np.searchsorted(edges, rng.random(n), side="right")
        sel = slot == 0
        stay_field[sel] = ""
        category[sel] = EV_RECOVERED
        sel = np.flatnonzero(slot == 1)
        if sel.size:
            before = rng.random(sel.size) < 0.5
            offset = rng.integers(1, 240, size=sel.size)
            charttime[sel] = np.where(before, intime - offset, intime + los_min + offset)
            category[sel] = EV_WINDOW
        sel = slot == 2
        items[sel] = np.asarray(UNKNOWN_ITEMIDS)[rng.integers(len(UNKNOWN_ITEMIDS), size=int(sel.sum()))]
        category[sel] = EV_UNKNOWN_ITEM
        if sp.is_categorical:
            sel = slot == 5
            values[sel] = "Unable to assess"
            category[sel] = EV_BAD_CATEGORY
        else:
            sel = slot == 3
            values[sel] = _value_string(sp.valid_range[1] * 3 + 1, 0)
            category[sel] = EV_OUTLIER
            sel = slot == 4
            values[sel] = "n/a"
            category[sel] = EV_UNPARSEABLE
        ev_cols["SUBJECT_ID"].extend([subject] * n)
        ev_cols["HADM_ID"].extend([str(hadm)] * n)
        ev_cols["ICUSTAY_ID"].extend(stay_field.tolist())
        ev_cols["CHARTTIME"].extend(charttime.tolist())
        ev_cols["ITEMID"].extend(items.tolist())
        ev_cols["VALUE"].extend(values.tolist())
        ev_cols["VALUEUOM"].extend([sp.unit] * n)
        ev_truth.extend([EV_EXCLUDED] * n if excluded else category.tolist())


def _generate_chunk(args) -> list[dict]:
    indices, cfg, specs, phenos = args
    return [_patient_tables(i, cfg, specs, phenos) for i in indices]


def generate_tables(cfg: SynthConfig, specs: Sequence[VariableSpec] | None = None,
                    phenotypes: Sequence[PhenotypeSpec] | None = None,
                    jobs: int = 1) -> tuple[dict[str, pd.DataFrame], GenerationReport]:
    """Build all tables in memory (every cell a string, as written to disk)."""
    cfg.validate()
    specs = list(specs) if specs is not None else load_variable_config()
    phenos = list(phenotypes) if phenotypes is not None else load_phenotype_config()
    missing = [s.name for s in specs if s.name not in cfg.rates]
    if missing:
        raise SynthConfigError(f"no sampling rate for {missing}")

    indices = list(range(cfg.n_patients))
    if jobs > 1:
        chunks = [indices[k::jobs] for k in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_generate_chunk, [(c, cfg, specs, phenos) for c in chunks]))
        by_index = {}
        for c, part in zip(chunks, parts):
            by_index.update(zip(c, part))
        results = [by_index[i] for i in indices]
    else:
        results = _generate_chunk((indices, cfg, specs, phenos))

    report = GenerationReport()
    rows = {k: [] for k in TABLE_COLUMNS}
    ev = {c: [] for c in TABLE_COLUMNS["CHARTEVENTS"]}
    for r in results:
        report.counts.update(r["truth"])
        report.counts.update(r["ev_truth"])
        for k in rows:
            rows[k].extend(r["rows"][k])
        for c in ev:
            ev[c].extend(r["events"][c])
    report.counts["events"] = len(ev["SUBJECT_ID"])
    report.counts["diagnoses"] = len(rows["DIAGNOSES"])

    p = pd.DataFrame(rows["PATIENTS"], columns=TABLE_COLUMNS["PATIENTS"])
    p["DOB"] = [_fmt_date(m) for m in p["DOB"]]
    a = pd.DataFrame(rows["ADMISSIONS"], columns=TABLE_COLUMNS["ADMISSIONS"])
    a["ADMITTIME"] = _fmt_times(a["ADMITTIME"].to_numpy())
    a["DISCHTIME"] = _fmt_times(a["DISCHTIME"].to_numpy())
    a["DEATHTIME"] = ["" if pd.isna(m) else _fmt_times([int(m)])[0] for m in a["DEATHTIME"]]
    s = pd.DataFrame(rows["ICUSTAYS"], columns=TABLE_COLUMNS["ICUSTAYS"])
    s["LOS"] = [repr(m / 1440.0) for m in s["LOS"]]
    s["INTIME"] = _fmt_times(s["INTIME"].to_numpy())
    s["OUTTIME"] = _fmt_times(s["OUTTIME"].to_numpy())
    e = pd.DataFrame(ev, columns=TABLE_COLUMNS["CHARTEVENTS"])
    e["CHARTTIME"] = _fmt_times(e["CHARTTIME"].to_numpy()) if len(e) else []
    d = pd.DataFrame(rows["DIAGNOSES"], columns=TABLE_COLUMNS["DIAGNOSES"])
    tables = {"PATIENTS": p, "ADMISSIONS": a, "ICUSTAYS": s, "CHARTEVENTS": e, "DIAGNOSES": d}
    tables = {k: v.astype(str) for k, v in tables.items()}
    return tables, report


def write_tables(tables: dict[str, pd.DataFrame], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, df in tables.items():
        df.to_csv(out / f"{name}.csv", index=False, lineterminator="\n")


def generate(cfg: SynthConfig, out_dir, specs=None, phenotypes=None, jobs: int = 1) -> GenerationReport:
    """Write the five tables plus ``generation_report.json`` and ``synth_config.json``."""
    tables, report = generate_tables(cfg, specs, phenotypes, jobs)
    write_tables(tables, out_dir)
    out = Path(out_dir)
    (out / "generation_report.json").write_text(report.to_json())
    (out / "synth_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    return report


def plant_signal(cfg: SynthConfig, strength: float, kind: str | None = None, specs=None, phenotypes=None,
                 jobs: int = 1) -> tuple[dict[str, pd.DataFrame], GenerationReport]:
    """Generate tables whose observations depend on the labels with the given strength.

    ``linear``: dying patients show raised heart and respiratory rate, lower
    blood pressure, saturation and GCS, plus a heart-rate/GCS ramp in the
    day before death; temperature and glucose rise with length of stay;
    each phenotype raises one vital sign.  ``xor``: mortality is encoded in
    whether heart rate and systolic pressure deviate in the same direction,
    which no per-variable summary separates linearly.
    """
    if not 0.0 <= strength <= 1.0:
        raise SynthConfigError("strength must lie in [0, 1]")
    cfg = replace(cfg, signal_strength=strength, signal_kind=kind or cfg.signal_kind)
    return generate_tables(cfg, specs, phenotypes, jobs)
