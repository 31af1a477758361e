"""Benchmark construction: cohort extraction, event validation, episodes, split and task builders."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import pandas as pd

from .core import (
    N_PHENOTYPES,
    EpisodeTimeline,
    Task,
    TaskInstance,
    VariableSpec,
    bucketize_hours,
)
from .syngen import TABLE_COLUMNS

IHM_WINDOW_HOURS = 48.0
FIRST_PREDICTION_HOUR = 4
DECOMP_HORIZON_HOURS = 24.0
ADULT_AGE = 18.0
SHIFTED_AGE_CUTOFF = 120.0
SHIFTED_AGE_VALUE = 90.0
TASK_DIRS = {Task.IHM: "ihm", Task.DECOMP: "decomp", Task.LOS: "los", Task.PHENO: "pheno"}


class SchemaError(ValueError):
    def __init__(self, table: str, column: str):
        super().__init__(f"table {table} is missing column {column}")
        self.table = table
        self.column = column


@dataclass
class CohortReport:
    """Counts per stage; each stage has ``*_in`` totals matched by kept + dropped counts."""

    stages: dict[str, dict[str, int]] = field(default_factory=dict)
    row_errors: list[str] = field(default_factory=list)

    def stage(self, name: str) -> dict[str, int]:
        return self.stages.setdefault(name, {})

    def to_text(self) -> str:
        lines = []
        for name, counts in self.stages.items():
            lines.append(f"[{name}]")
            lines.extend(f"  {k} = {v}" for k, v in counts.items())
        lines.append(f"[row_errors] {len(self.row_errors)}")
        lines.extend(f"  {e}" for e in self.row_errors)
        return "\n".join(lines) + "\n"

    def conservation_violations(self) -> list[str]:
        """Stages whose kept + dropped totals disagree with their input count."""
        bad = []
        rules = {
            "extract_subjects": ("events_in", ["events_excluded_stay", "events_unparseable_time", "events_out"]),
            "validate_events": ("events_in", ["orphan_admission", "unmatched_stay", "stay_mismatch",
                                              "out_of_window", "events_kept"]),
            "extract_episodes": ("events_in", ["unknown_item", "unparseable", "outlier", "unknown_category",
                                               "events_kept"]),
        }
        for name, (total, parts) in rules.items():
            if name in self.stages:
                c = self.stages[name]
                if c[total] != sum(c[p] for p in parts):
                    bad.append(name)
        if "extract_subjects" in self.stages:
            c = self.stages["extract_subjects"]
            if c["stays_in"] != (c["stays_kept"] + c["stays_excluded_multistay"] + c["stays_excluded_age"]
                                 + c["stays_unparseable"]):
                bad.append("extract_subjects:stays")
        return bad


@dataclass
class SubjectStore:
    """Cohort after a pipeline stage; ``stays`` holds one row per kept stay."""

    stays: pd.DataFrame
    events: pd.DataFrame
    diagnoses: pd.DataFrame
    report: CohortReport


@dataclass(frozen=True)
class SplitManifest:
    test_patients: frozenset[int]
    fraction: float
    seed: int
    n_patients: int

    def is_test(self, patient_id: int) -> bool:
        return patient_id in self.test_patients

    def to_json(self) -> str:
        return json.dumps({"fraction": self.fraction, "seed": self.seed, "n_patients": self.n_patients,
                           "test_patients": sorted(self.test_patients)}, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SplitManifest":
        d = json.loads(text)
        return cls(frozenset(int(p) for p in d["test_patients"]), float(d["fraction"]), int(d["seed"]),
                   int(d["n_patients"]))


# --- table loading -----------------------------------------------------------
def load_tables(tables_dir) -> dict[str, pd.DataFrame]:
    root = Path(tables_dir)
    out = {}
    for name in TABLE_COLUMNS:
        path = root / f"{name}.csv"
        if not path.exists():
            raise FileNotFoundError(f"missing table {path}")
        out[name] = pd.read_csv(path, dtype=str, keep_default_na=False)
    return out


def _check_schema(tables: Mapping[str, pd.DataFrame]) -> None:
    for name, cols in TABLE_COLUMNS.items():
        if name not in tables:
            raise SchemaError(name, "<table>")
        for c in cols:
            if c not in tables[name].columns:
                raise SchemaError(name, c)


def _parse_time(s: pd.Series) -> pd.Series:
    s = s.astype(str).str.strip()
    return pd.to_datetime(s.where(s != ""), format="ISO8601", errors="coerce")


def _parse_date_wide(s: pd.Series) -> np.ndarray:
    """Second-resolution datetimes valid far outside the pandas nanosecond range (shifted birth dates)."""
    out = np.full(len(s), np.datetime64("NaT"), dtype="datetime64[s]")
    for k, text in enumerate(s.astype(str).str.strip()):
        try:
            out[k] = np.datetime64(text.replace(" ", "T"), "s")
        except ValueError:
            pass
    return out


def _hours(delta: pd.Series) -> np.ndarray:
    return delta.dt.total_seconds().to_numpy() / 3600.0


def _collect_errors(report: CohortReport, table: str, raw: pd.Series, parsed: pd.Series, limit: int = 50) -> None:
    bad = parsed.isna() & (raw.astype(str).str.strip() != "")
    for idx in np.flatnonzero(bad.to_numpy())[:limit]:
        report.row_errors.append(f"{table} row {idx + 2}: unparseable timestamp {raw.iloc[idx]!r}")
    extra = int(bad.sum()) - limit
    if extra > 0:
        report.row_errors.append(f"{table}: {extra} more unparseable timestamps")


# --- stage 1 -------------------------------------------------------------------
def extract_subjects(tables) -> SubjectStore:
    """Drop multi-stay admissions and stays of patients younger than 18 at ICU admission.

    ``tables`` is a directory of CSVs or a mapping of DataFrames.  An
    admission whose only stay is pediatric is dropped as a whole, so none of
    its events can resurface through the stay-id recovery in the next stage.
    """
    if not isinstance(tables, Mapping):
        tables = load_tables(tables)
    _check_schema(tables)
    report = CohortReport()
    st = report.stage("extract_subjects")

    patients = tables["PATIENTS"].copy()
    adm = tables["ADMISSIONS"].copy()
    stays = tables["ICUSTAYS"].copy()
    events = tables["CHARTEVENTS"]
    diag = tables["DIAGNOSES"]

    st["patients_in"] = len(patients)
    st["admissions_in"] = len(adm)
    st["stays_in"] = len(stays)

    for c in ("INTIME", "OUTTIME"):
        parsed = _parse_time(stays[c])
        _collect_errors(report, "ICUSTAYS", stays[c], parsed)
        stays[c] = parsed
    bad_time = stays["INTIME"].isna() | stays["OUTTIME"].isna()
    st["stays_unparseable"] = int(bad_time.sum())

    per_adm = stays.groupby("HADM_ID")["ICUSTAY_ID"].transform("count")
    multi = (per_adm >= 2) & ~bad_time

    patients["DOD"] = _parse_time(patients["DOD"])
    stays = stays.merge(patients[["SUBJECT_ID", "DOB", "DOD"]], on="SUBJECT_ID", how="left")
    dob = _parse_date_wide(stays["DOB"].fillna(""))
    intime = stays["INTIME"].to_numpy().astype("datetime64[s]")
    age = pd.Series((intime - dob).astype("timedelta64[s]").astype(float) / (365.25 * 86400.0), index=stays.index)
    age[np.isnat(dob) | np.isnat(intime)] = np.nan
    age = age.where(~(age > SHIFTED_AGE_CUTOFF), SHIFTED_AGE_VALUE)
    stays["AGE"] = age
    young = ~multi & ~bad_time & ~(age >= ADULT_AGE)
    st["stays_excluded_multistay"] = int(multi.sum())
    st["stays_excluded_age"] = int(young.sum())
    st["admissions_excluded_multistay"] = int(stays.loc[multi, "HADM_ID"].nunique())
    st["admissions_excluded_age"] = int(stays.loc[young, "HADM_ID"].nunique())

    keep = ~(multi | young | bad_time)
    excluded_hadm = set(stays.loc[~keep, "HADM_ID"])
    excluded_stays = set(stays.loc[~keep, "ICUSTAY_ID"])
    stays = stays[keep].copy()
    st["stays_kept"] = len(stays)
    st["admissions_kept"] = stays["HADM_ID"].nunique()
    st["patients_kept"] = stays["SUBJECT_ID"].nunique()

    # mortality: death time within the hospital admission, date of death as fallback
    adm = adm.assign(ADMITTIME=_parse_time(adm["ADMITTIME"]), DISCHTIME=_parse_time(adm["DISCHTIME"]),
                     DEATHTIME=_parse_time(adm["DEATHTIME"]))
    stays = stays.merge(adm[["HADM_ID", "ADMITTIME", "DISCHTIME", "DEATHTIME"]], on="HADM_ID", how="left")
    in_hosp = stays["DEATHTIME"].notna() & (stays["DEATHTIME"] >= stays["ADMITTIME"]) & (
        stays["DEATHTIME"] <= stays["DISCHTIME"])
    dod_day = stays["DOD"].dt.normalize()
    by_dod = stays["DEATHTIME"].isna() & stays["DOD"].notna() & (dod_day >= stays["ADMITTIME"].dt.normalize()) & (
        dod_day <= stays["DISCHTIME"].dt.normalize())
    death = stays["DEATHTIME"].where(in_hosp, stays["DOD"].where(by_dod))
    stays["MORTALITY"] = (in_hosp | by_dod).astype(int)
    stays["DOD_HOURS"] = np.maximum(_hours(death - stays["INTIME"]), 0.0)
    los = pd.to_numeric(stays["LOS"], errors="coerce")
    stays["LOS_HOURS"] = np.round(los.to_numpy() * 24.0, 6)
    stays["ICUSTAY_ID"] = stays["ICUSTAY_ID"].astype(int)
    stays = stays.sort_values("ICUSTAY_ID", kind="stable").reset_index(drop=True)
    st["deaths_kept"] = int(stays["MORTALITY"].sum())

    st["events_in"] = len(events)
    ev_excl = events["HADM_ID"].isin(excluded_hadm) | events["ICUSTAY_ID"].isin(excluded_stays)
    events = events[~ev_excl]
    charttime = _parse_time(events["CHARTTIME"])
    _collect_errors(report, "CHARTEVENTS", events["CHARTTIME"], charttime)
    bad = charttime.isna()
    events = events.assign(CHARTTIME=charttime)[~bad]
    st["events_excluded_stay"] = int(ev_excl.sum())
    st["events_unparseable_time"] = int(bad.sum())
    st["events_out"] = len(events)

    diag = diag[diag["HADM_ID"].isin(set(stays["HADM_ID"]))]
    return SubjectStore(stays, events.reset_index(drop=True), diag.reset_index(drop=True), report)


# --- stage 2 -------------------------------------------------------------------
def validate_events(store: SubjectStore) -> SubjectStore:
    """Match events to stays; recover blank stay ids through the admission; drop out-of-window events."""
    report = store.report
    st = report.stage("validate_events")
    ev = store.events
    st["events_in"] = len(ev)
    stays = store.stays
    hadm_to_stay = dict(zip(stays["HADM_ID"], stays["ICUSTAY_ID"]))
    stay_to_hadm = dict(zip(stays["ICUSTAY_ID"].astype(str), stays["HADM_ID"]))

    orphan = ~ev["HADM_ID"].isin(hadm_to_stay.keys())
    blank = ev["ICUSTAY_ID"].astype(str).str.strip() == ""
    given = ~blank & ~orphan
    unmatched = given & ~ev["ICUSTAY_ID"].isin(stay_to_hadm.keys())
    mismatch = given & ~unmatched & (ev["ICUSTAY_ID"].map(stay_to_hadm) != ev["HADM_ID"])
    recovered = blank & ~orphan

    stay_id = pd.Series(np.zeros(len(ev), dtype=np.int64), index=ev.index)
    ok = ~(orphan | unmatched | mismatch)
    stay_id[recovered] = ev.loc[recovered, "HADM_ID"].map(hadm_to_stay).astype(np.int64)
    direct = ok & ~recovered
    stay_id[direct] = ev.loc[direct, "ICUSTAY_ID"].astype(np.int64)

    ev = ev.assign(STAY=stay_id)
    times = stays.set_index("ICUSTAY_ID")[["INTIME", "OUTTIME"]]
    intime = ev["STAY"].map(times["INTIME"])
    outtime = ev["STAY"].map(times["OUTTIME"])
    outside = ok & ~((ev["CHARTTIME"] >= intime) & (ev["CHARTTIME"] <= outtime))
    kept = ok & ~outside

    st["orphan_admission"] = int(orphan.sum())
    st["unmatched_stay"] = int(unmatched.sum())
    st["stay_mismatch"] = int(mismatch.sum())
    st["out_of_window"] = int(outside.sum())
    st["recovered_stay_id"] = int((recovered & kept).sum())
    st["events_kept"] = int(kept.sum())
    ev = ev[kept].assign(HOURS=_hours(ev.loc[kept, "CHARTTIME"] - intime[kept]))
    return SubjectStore(stays, ev.reset_index(drop=True), store.diagnoses, report)


# --- stage 3 -------------------------------------------------------------------
def extract_episodes(store: SubjectStore, specs: Sequence[VariableSpec]) -> list[EpisodeTimeline]:
    """Parse values per variable kind, drop outliers and unknown strings, build per-stay timelines."""
    report = store.report
    st = report.stage("extract_episodes")
    ev = store.events
    st["events_in"] = len(ev)
    item_to_var = {item: s.id for s in specs for item in s.itemids}
    var = pd.to_numeric(ev["ITEMID"], errors="coerce").map(item_to_var)
    unknown_item = var.isna()
    var = var.fillna(-1).astype(int).to_numpy()

    values = np.full(len(ev), np.nan)
    unparseable = np.zeros(len(ev), dtype=bool)
    outlier = np.zeros(len(ev), dtype=bool)
    bad_cat = np.zeros(len(ev), dtype=bool)
    raw = ev["VALUE"].astype(str).str.strip()
    for s in specs:
        sel = var == s.id
        if not sel.any():
            continue
        if s.is_categorical:
            lookup = {c: k for k, c in enumerate(s.categories)}
            codes = raw[sel].map(lookup)
            bad_cat[sel] = codes.isna().to_numpy()
            values[sel] = codes.to_numpy(dtype=float)
        else:
            x = pd.to_numeric(raw[sel], errors="coerce").to_numpy(dtype=float)
            nan = ~np.isfinite(x)
            lo, hi = s.valid_range
            out = ~nan & ((x < lo) | (x > hi))
            unparseable[sel] = nan
            outlier[sel] = out
            values[sel] = x
    kept = ~unknown_item.to_numpy() & ~unparseable & ~outlier & ~bad_cat
    st["unknown_item"] = int(unknown_item.sum())
    st["unparseable"] = int(unparseable.sum())
    st["outlier"] = int(outlier.sum())
    st["unknown_category"] = int(bad_cat.sum())
    st["events_kept"] = int(kept.sum())

    frame = pd.DataFrame({"stay": ev["STAY"].to_numpy()[kept], "hours": ev["HOURS"].to_numpy()[kept],
                          "var": var[kept], "value": values[kept]})
    frame = frame.sort_values(["stay", "hours"], kind="stable")
    groups = {k: g for k, g in frame.groupby("stay", sort=True)}

    diag = store.diagnoses.groupby("HADM_ID")["ICD9_CODE"].apply(lambda c: frozenset(c.astype(str).str.strip()))
    episodes = []
    empty = 0
    for row in store.stays.itertuples(index=False):
        g = groups.get(row.ICUSTAY_ID)
        if g is None:
            empty += 1
            t, v, x = np.zeros(0), np.zeros(0, dtype=int), np.zeros(0)
        else:
            t, v, x = g["hours"].to_numpy(), g["var"].to_numpy(), g["value"].to_numpy()
        los = None if not np.isfinite(row.LOS_HOURS) else float(row.LOS_HOURS)
        episodes.append(EpisodeTimeline(
            stay_id=int(row.ICUSTAY_ID),
            patient_id=int(row.SUBJECT_ID),
            admission_id=int(row.HADM_ID),
            intime=str(row.INTIME),
            outtime=str(row.OUTTIME),
            los_hours=los,
            age_years=float(row.AGE),
            mortality_inhospital=bool(row.MORTALITY),
            dod_hours=float(row.DOD_HOURS) if row.MORTALITY else None,
            diagnoses=diag.get(row.HADM_ID, frozenset()),
            times=t,
            variables=v,
            values=x,
        ))
    st["episodes"] = len(episodes)
    st["empty_episodes"] = empty
    return episodes


# --- split ---------------------------------------------------------------------
def split_train_test(patients: Iterable[int], fraction: float = 0.15, seed: int = 0) -> SplitManifest:
    """Hold out ``round(fraction * N)`` patients (halves round up)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must lie in (0, 1)")
    ids = sorted(set(int(p) for p in patients))
    if not ids:
        raise ValueError("cannot split an empty patient set")
    n_test = int(math.floor(fraction * len(ids) + 0.5))
    order = np.random.default_rng(seed).permutation(len(ids))
    test = frozenset(ids[i] for i in order[:n_test])
    return SplitManifest(test, fraction, seed, len(ids))


def _by_side(instances: list[TaskInstance], episodes, manifest) -> tuple[list, list]:
    patient = {e.stay_id: e.patient_id for e in episodes}
    train = [i for i in instances if not manifest.is_test(patient[i.stay_id])]
    test = [i for i in instances if manifest.is_test(patient[i.stay_id])]
    return train, test


# --- task builders ------------------------------------------------------------
def ihm_eligible(ep: EpisodeTimeline) -> bool:
    if ep.los_hours is None or ep.los_hours < IHM_WINDOW_HOURS:
        return False
    return bool(np.any(ep.times < IHM_WINDOW_HOURS))


def prediction_grid(ep: EpisodeTimeline) -> np.ndarray:
    """Integer hours 4..floor(min(los, dod)); empty when neither end is known."""
    end = ep.end_hours()
    if end is None:
        return np.zeros(0, dtype=int)
    return np.arange(FIRST_PREDICTION_HOUR, int(math.floor(end)) + 1)


def decomp_labels(ep: EpisodeTimeline, grid: np.ndarray | None = None) -> np.ndarray:
    grid = prediction_grid(ep) if grid is None else grid
    if ep.dod_hours is None:
        return np.zeros(len(grid), dtype=int)
    gap = ep.dod_hours - grid
    return ((gap >= 0) & (gap <= DECOMP_HORIZON_HOURS)).astype(int)


def remaining_los(ep: EpisodeTimeline, grid: np.ndarray | None = None) -> np.ndarray:
    grid = prediction_grid(ep) if grid is None else grid
    return np.maximum(ep.los_hours - grid, 0.0)


def pheno_labels(ep: EpisodeTimeline, ccs: Mapping[str, int]) -> tuple[np.ndarray, int]:
    """Label vector and the number of unmapped codes."""
    y = np.zeros(N_PHENOTYPES, dtype=int)
    unmapped = 0
    for code in ep.diagnoses:
        k = ccs.get(code)
        if k is None:
            unmapped += 1
        else:
            y[k] = 1
    return y, unmapped


def stay_window(ep: EpisodeTimeline) -> float:
    """Full-stay window: recorded LOS, else the in/out time difference."""
    if ep.los_hours is not None:
        return ep.los_hours
    return (pd.Timestamp(ep.outtime) - pd.Timestamp(ep.intime)).total_seconds() / 3600.0


def build_ihm(episodes: Sequence[EpisodeTimeline], manifest: SplitManifest):
    inst = [TaskInstance(e.stay_id, Task.IHM, IHM_WINDOW_HOURS, int(e.mortality_inhospital))
            for e in sorted(episodes, key=lambda e: e.stay_id) if ihm_eligible(e)]
    return _by_side(inst, episodes, manifest)


def build_decomp(episodes: Sequence[EpisodeTimeline], manifest: SplitManifest):
    inst = []
    for e in sorted(episodes, key=lambda e: e.stay_id):
        grid = prediction_grid(e)
        for tau, d in zip(grid, decomp_labels(e, grid)):
            inst.append(TaskInstance(e.stay_id, Task.DECOMP, float(tau), int(d)))
    return _by_side(inst, episodes, manifest)


def build_los(episodes: Sequence[EpisodeTimeline], manifest: SplitManifest):
    inst = []
    for e in sorted(episodes, key=lambda e: e.stay_id):
        if e.los_hours is None:
            continue
        grid = prediction_grid(e)
        rem = remaining_los(e, grid)
        for tau, r, b in zip(grid, rem, bucketize_hours(rem)):
            inst.append(TaskInstance(e.stay_id, Task.LOS, float(tau), float(r), int(b)))
    return _by_side(inst, episodes, manifest)


def build_pheno(episodes: Sequence[EpisodeTimeline], manifest: SplitManifest, ccs: Mapping[str, int],
                report: CohortReport | None = None):
    inst = []
    unmapped = 0
    for e in sorted(episodes, key=lambda e: e.stay_id):
        y, u = pheno_labels(e, ccs)
        unmapped += u
        inst.append(TaskInstance(e.stay_id, Task.PHENO, stay_window(e), y))
    if report is not None:
        report.stage("build_pheno")["unmapped_codes"] = unmapped
    return _by_side(inst, episodes, manifest)


# --- on-disk layout -------------------------------------------------------------
def _fmt(x: float) -> str:
    return repr(float(x))


def write_episode(ep: EpisodeTimeline, specs: Sequence[VariableSpec], path) -> None:
    """Hours + one column per variable; simultaneous repeats of a variable go on extra rows."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["Hours"] + [s.name for s in specs])
        row: list[str] | None = None
        row_time = None
        for t, v, x in zip(ep.times, ep.variables, ep.values):
            s = specs[int(v)]
            cell = s.categories[int(x)] if s.is_categorical else _fmt(x)
            if row is None or t != row_time or row[int(v) + 1] != "":
                if row is not None:
                    w.writerow(row)
                row = [_fmt(t)] + [""] * len(specs)
                row_time = t
            row[int(v) + 1] = cell
        if row is not None:
            w.writerow(row)


def read_episode(meta: Mapping, specs: Sequence[VariableSpec], path) -> EpisodeTimeline:
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    times, variables, values = [], [], []
    lookups = [{c: k for k, c in enumerate(s.categories)} for s in specs]
    cols = [s.name for s in specs]
    for rec in df.itertuples(index=False):
        t = float(rec[0])
        for i, name in enumerate(cols):
            cell = rec[i + 1]
            if cell == "":
                continue
            times.append(t)
            variables.append(i)
            values.append(float(lookups[i][cell]) if specs[i].is_categorical else float(cell))
    return EpisodeTimeline(
        stay_id=int(meta["stay"]),
        patient_id=int(meta["patient"]),
        admission_id=int(meta["admission"]),
        intime=meta["intime"],
        outtime=meta["outtime"],
        los_hours=None if meta["los_hours"] == "" else float(meta["los_hours"]),
        age_years=float(meta["age_years"]),
        mortality_inhospital=meta["mortality"] == "1",
        dod_hours=None if meta["dod_hours"] == "" else float(meta["dod_hours"]),
        diagnoses=frozenset(c for c in meta["diagnoses"].split(";") if c),
        times=np.asarray(times, dtype=float),
        variables=np.asarray(variables, dtype=int),
        values=np.asarray(values, dtype=float),
    )


STAYS_HEADER = ["stay", "patient", "admission", "intime", "outtime", "los_hours", "age_years", "mortality",
                "dod_hours", "diagnoses"]


def _listfile_rows(task: Task, instances: Sequence[TaskInstance]):
    if task is Task.IHM:
        yield ["stay", "y_true"]
        for i in instances:
            yield [i.stay_id, i.target]
    elif task is Task.PHENO:
        yield ["stay", "period_length"] + [f"y_{k}" for k in range(N_PHENOTYPES)]
        for i in instances:
            yield [i.stay_id, _fmt(i.window_end_hours)] + [int(v) for v in i.target]
    else:
        yield ["stay", "period_length", "y_true"]
        for i in instances:
            yield [i.stay_id, _fmt(i.window_end_hours), _fmt(i.target) if task is Task.LOS else i.target]


def write_listfile(path, task: Task, instances: Sequence[TaskInstance]) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(_listfile_rows(task, instances))


def read_listfile(path, task: Task) -> list[TaskInstance]:
    out = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        for row in r:
            stay = int(row[0])
            if task is Task.IHM:
                out.append(TaskInstance(stay, task, IHM_WINDOW_HOURS, int(row[1])))
            elif task is Task.PHENO:
                out.append(TaskInstance(stay, task, float(row[1]), np.asarray([int(v) for v in row[2:]])))
            elif task is Task.LOS:
                rem = float(row[2])
                out.append(TaskInstance(stay, task, float(row[1]), rem, int(bucketize_hours(rem))))
            else:
                out.append(TaskInstance(stay, task, float(row[1]), int(row[2])))
    return out


@dataclass
class Benchmark:
    episodes: list[EpisodeTimeline]
    manifest: SplitManifest
    instances: dict[Task, tuple[list[TaskInstance], list[TaskInstance]]]
    report: CohortReport

    def episode_map(self) -> dict[int, EpisodeTimeline]:
        return {e.stay_id: e for e in self.episodes}


def build_benchmark(tables, specs: Sequence[VariableSpec], ccs: Mapping[str, int], fraction: float = 0.15,
                    seed: int = 0) -> Benchmark:
    store = validate_events(extract_subjects(tables))
    report = store.report
    episodes = extract_episodes(store, specs)
    manifest = split_train_test([e.patient_id for e in episodes], fraction, seed)
    inst = {
        Task.IHM: build_ihm(episodes, manifest),
        Task.DECOMP: build_decomp(episodes, manifest),
        Task.LOS: build_los(episodes, manifest),
        Task.PHENO: build_pheno(episodes, manifest, ccs, report),
    }
    counts = report.stage("build")
    for task, (tr, te) in inst.items():
        counts[f"{task.value}_train"] = len(tr)
        counts[f"{task.value}_test"] = len(te)
    return Benchmark(episodes, manifest, inst, report)


def write_benchmark(bench: Benchmark, specs: Sequence[VariableSpec], root) -> None:
    root = Path(root)
    (root / "episodes").mkdir(parents=True, exist_ok=True)
    with open(root / "stays.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STAYS_HEADER)
        for e in sorted(bench.episodes, key=lambda e: e.stay_id):
            w.writerow([e.stay_id, e.patient_id, e.admission_id, e.intime, e.outtime,
                        "" if e.los_hours is None else _fmt(e.los_hours), _fmt(e.age_years),
                        int(e.mortality_inhospital), "" if e.dod_hours is None else _fmt(e.dod_hours),
                        ";".join(sorted(e.diagnoses))])
            write_episode(e, specs, root / "episodes" / f"{e.stay_id}.csv")
    (root / "split.json").write_text(bench.manifest.to_json())
    (root / "cohort_report.txt").write_text(bench.report.to_text())
    for task, (tr, te) in bench.instances.items():
        d = root / TASK_DIRS[task]
        d.mkdir(exist_ok=True)
        write_listfile(d / "train_listfile.csv", task, tr)
        write_listfile(d / "test_listfile.csv", task, te)


def read_benchmark(root, specs: Sequence[VariableSpec]) -> Benchmark:
    root = Path(root)
    if not (root / "stays.csv").exists():
        raise FileNotFoundError(f"{root} holds no built benchmark (stays.csv missing)")
    meta = pd.read_csv(root / "stays.csv", dtype=str, keep_default_na=False)
    episodes = [read_episode(m, specs, root / "episodes" / f"{m['stay']}.csv") for m in meta.to_dict("records")]
    manifest = SplitManifest.from_json((root / "split.json").read_text())
    inst = {}
    for task, name in TASK_DIRS.items():
        d = root / name
        inst[task] = (read_listfile(d / "train_listfile.csv", task), read_listfile(d / "test_listfile.csv", task))
    return Benchmark(episodes, manifest, inst, CohortReport())
