"""Domain types and configuration tables shared across the package."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

N_VARIABLES = 17
N_VALUE_DIMS = 59
N_INPUT_DIMS = N_VALUE_DIMS + N_VARIABLES
N_PHENOTYPES = 25
N_LOS_BUCKETS = 10

# Left-closed, right-open day intervals: <1, [1,2), ..., [7,8), [8,14), >=14.
LOS_BUCKET_BOUNDARIES_DAYS = (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 14.0)


class ConfigError(ValueError):
    """Malformed configuration file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None, path: str | None = None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class Task(str, enum.Enum):
    IHM = "ihm"
    DECOMP = "decomp"
    LOS = "los"
    PHENO = "pheno"


class VariableKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class VariableSpec:
    id: int
    name: str
    kind: VariableKind
    categories: tuple[str, ...] = ()
    normal_value: str | float = 0.0
    valid_range: tuple[float, float] | None = None
    unit: str = ""
    itemids: tuple[int, ...] = ()
    category_values: tuple[float, ...] = ()

    @property
    def is_categorical(self) -> bool:
        return self.kind is VariableKind.CATEGORICAL

    @property
    def width(self) -> int:
        """Number of value dimensions this variable occupies in the input vector."""
        return len(self.categories) if self.is_categorical else 1

    def category_index(self, value: str) -> int | None:
        try:
            return self.categories.index(value)
        except ValueError:
            return None

    def normal_code(self) -> float:
        """Normal value as stored in a timeline: category index or the real value."""
        if self.is_categorical:
            return float(self.categories.index(str(self.normal_value)))
        return float(self.normal_value)

    def numeric_values(self) -> np.ndarray:
        """Per-category numeric stand-ins used by summary statistics."""
        if self.category_values:
            return np.asarray(self.category_values, dtype=float)
        return np.arange(len(self.categories), dtype=float)


def value_dims(specs: Sequence[VariableSpec]) -> int:
    return sum(s.width for s in specs)


@dataclass(frozen=True)
class PhenotypeSpec:
    id: int
    name: str
    type: str
    codes: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class EpisodeTimeline:
    """One ICU stay: irregular events re-timed to hours since ICU admission.

    ``values`` holds the parsed value per event: the real measurement for
    continuous variables, the category index for categorical ones.
    """

    stay_id: int
    patient_id: int
    admission_id: int
    intime: str
    outtime: str
    los_hours: float | None
    age_years: float
    mortality_inhospital: bool
    dod_hours: float | None
    diagnoses: frozenset[str]
    times: np.ndarray
    variables: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.mortality_inhospital != (self.dod_hours is not None):
            raise ValueError(f"stay {self.stay_id}: dod_hours must be set iff mortality flag is set")
        if len(self.times) and np.any(np.diff(self.times) < 0):
            raise ValueError(f"stay {self.stay_id}: events not sorted by time")
        if len(self.times) and self.times[0] < 0:
            raise ValueError(f"stay {self.stay_id}: negative event time")

    @property
    def n_events(self) -> int:
        return len(self.times)

    def window(self, end_hours: float) -> "EpisodeTimeline":
        """Events strictly before ``end_hours``."""
        k = int(np.searchsorted(self.times, end_hours, side="left"))
        return _replace_events(self, self.times[:k], self.variables[:k], self.values[:k])

    def end_hours(self) -> float | None:
        """Hour the prediction grid stops at: discharge or death, whichever is first."""
        ends = [x for x in (self.los_hours, self.dod_hours) if x is not None]
        return min(ends) if ends else None


def _replace_events(ep: EpisodeTimeline, times, variables, values) -> EpisodeTimeline:
    return EpisodeTimeline(
        stay_id=ep.stay_id,
        patient_id=ep.patient_id,
        admission_id=ep.admission_id,
        intime=ep.intime,
        outtime=ep.outtime,
        los_hours=ep.los_hours,
        age_years=ep.age_years,
        mortality_inhospital=ep.mortality_inhospital,
        dod_hours=ep.dod_hours,
        diagnoses=ep.diagnoses,
        times=times,
        variables=variables,
        values=values,
    )


@dataclass(frozen=True)
class TaskInstance:
    stay_id: int
    task: Task
    window_end_hours: float
    target: object
    los_bucket: int | None = None

    @property
    def period_length(self) -> float:
        return self.window_end_hours


@dataclass
class MultitaskTargets:
    """Per-stay grouped targets over T hourly steps.

    Step index ``t`` (0-based) carries the label of the instance whose window
    ends at hour ``t + 1``.
    """

    decomp: np.ndarray
    decomp_mask: np.ndarray
    los: np.ndarray
    los_bucket: np.ndarray
    los_mask: np.ndarray
    ihm: float = 0.0
    ihm_present: bool = False
    pheno: np.ndarray = field(default_factory=lambda: np.zeros(N_PHENOTYPES))
    pheno_present: bool = True

    def __post_init__(self):
        n = len(self.decomp)
        if not (len(self.decomp_mask) == len(self.los) == len(self.los_bucket) == len(self.los_mask) == n):
            raise ValueError("multitask target arrays must share one length")

    @property
    def length(self) -> int:
        return len(self.decomp)


def bucketize(days: float) -> int:
    """Map remaining length of stay in days to its ordinal bucket 0..9."""
    days = float(days)
    if not math.isfinite(days) or days < 0:
        raise ValueError(f"length of stay must be finite and non-negative, got {days!r}")
    return int(np.searchsorted(LOS_BUCKET_BOUNDARIES_DAYS, days, side="right"))


def bucketize_hours(hours: np.ndarray | float) -> np.ndarray:
    """Vectorized ``bucketize`` for remaining LOS expressed in hours."""
    hours = np.asarray(hours, dtype=float)
    if np.any(~np.isfinite(hours)) or np.any(hours < 0):
        raise ValueError("length of stay must be finite and non-negative")
    return np.searchsorted(LOS_BUCKET_BOUNDARIES_DAYS, hours / 24.0, side="right")


# --- configuration files -------------------------------------------------

_VARIABLE_KEYS = {
    "name", "kind", "categories", "category_values", "normal_value",
    "valid_lo", "valid_hi", "unit", "itemids",
}


def _parse_records(text: str, path: str | None) -> list[tuple[int, dict[str, tuple[int, str]]]]:
    """Split ``key: value`` text into records separated by ``---`` lines."""
    records = []
    current: dict[str, tuple[int, str]] = {}
    start = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "---":
            if current:
                records.append((start, current))
            current, start = {}, None
            continue
        if ":" not in line:
            raise ConfigError(f"expected 'key: value', got {line!r}", lineno, path)
        key, value = line.split(":", 1)
        key = key.strip()
        if key in current:
            raise ConfigError(f"duplicate key {key!r}", lineno, path)
        if start is None:
            start = lineno
        current[key] = (lineno, value.strip())
    if current:
        records.append((start, current))
    return records


def _split_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _read_config_text(path) -> tuple[str, str]:
    if path is None:
        return resources.files("icubench.data").joinpath("variables.conf").read_text(), "variables.conf"
    p = Path(path)
    return p.read_text(), str(p)


def parse_variable_config(text: str, path: str | None = None) -> list[VariableSpec]:
    specs: list[VariableSpec] = []
    names: set[str] = set()
    for start, rec in _parse_records(text, path):
        unknown = set(rec) - _VARIABLE_KEYS
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown key {key!r}", rec[key][0], path)
        for key in ("name", "kind", "normal_value"):
            if key not in rec:
                raise ConfigError(f"record missing {key!r}", start, path)
        name = rec["name"][1]
        if name in names:
            raise ConfigError(f"duplicate variable name {name!r}", rec["name"][0], path)
        names.add(name)
        try:
            kind = VariableKind(rec["kind"][1])
        except ValueError:
            raise ConfigError(f"unknown kind {rec['kind'][1]!r}", rec["kind"][0], path) from None
        itemids = ()
        if "itemids" in rec:
            try:
                itemids = tuple(int(v) for v in _split_list(rec["itemids"][1]))
            except ValueError:
                raise ConfigError("itemids must be integers", rec["itemids"][0], path) from None
        unit = rec.get("unit", (0, ""))[1]
        normal_line, normal_raw = rec["normal_value"]

        if kind is VariableKind.CATEGORICAL:
            if "categories" not in rec:
                raise ConfigError("categorical variable needs 'categories'", start, path)
            categories = tuple(_split_list(rec["categories"][1]))
            if len(categories) < 2 or len(set(categories)) != len(categories):
                raise ConfigError("categories must be >= 2 distinct entries", rec["categories"][0], path)
            if "valid_lo" in rec or "valid_hi" in rec:
                raise ConfigError("valid range only applies to continuous variables", start, path)
            category_values: tuple[float, ...] = ()
            if "category_values" in rec:
                line = rec["category_values"][0]
                try:
                    category_values = tuple(float(v) for v in _split_list(rec["category_values"][1]))
                except ValueError:
                    raise ConfigError("category_values must be numbers", line, path) from None
                if len(category_values) != len(categories):
                    raise ConfigError("category_values length differs from categories", line, path)
            if normal_raw not in categories:
                raise ConfigError(f"normal_value {normal_raw!r} is not a category", normal_line, path)
            spec = VariableSpec(
                id=len(specs), name=name, kind=kind, categories=categories,
                normal_value=normal_raw, valid_range=None, unit=unit,
                itemids=itemids, category_values=category_values,
            )
        else:
            if "categories" in rec or "category_values" in rec:
                raise ConfigError("continuous variable cannot list categories", start, path)
            try:
                lo = float(rec["valid_lo"][1])
                hi = float(rec["valid_hi"][1])
            except KeyError:
                raise ConfigError("continuous variable needs valid_lo and valid_hi", start, path) from None
            except ValueError:
                raise ConfigError("valid range bounds must be numbers", start, path) from None
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"bad valid range [{lo}, {hi}]", rec["valid_lo"][0], path)
            try:
                normal = float(normal_raw)
            except ValueError:
                raise ConfigError("normal_value must be a number", normal_line, path) from None
            if not lo <= normal <= hi:
                raise ConfigError(f"normal_value {normal} outside valid range [{lo}, {hi}]", normal_line, path)
            spec = VariableSpec(
                id=len(specs), name=name, kind=kind, normal_value=normal,
                valid_range=(lo, hi), unit=unit, itemids=itemids,
            )
        specs.append(spec)

    if len(specs) != N_VARIABLES:
        raise ConfigError(f"expected {N_VARIABLES} variables, found {len(specs)}", None, path)
    dims = value_dims(specs)
    if dims != N_VALUE_DIMS:
        raise ConfigError(f"value dimensions sum to {dims}, expected {N_VALUE_DIMS}", None, path)
    seen: dict[int, str] = {}
    for s in specs:
        for item in s.itemids:
            if item in seen:
                raise ConfigError(f"itemid {item} claimed by {seen[item]} and {s.name}", None, path)
            seen[item] = s.name
    return specs


def load_variable_config(path=None) -> list[VariableSpec]:
    """Load the variable table; ``None`` loads the shipped default."""
    text, where = _read_config_text(path)
    return parse_variable_config(text, where)


def _fmt_number(x: float) -> str:
    return repr(float(x))


def dump_variable_config(specs: Iterable[VariableSpec]) -> str:
    blocks = []
    for s in specs:
        lines = [f"name: {s.name}", f"kind: {s.kind.value}"]
        if s.is_categorical:
            lines.append("categories: " + ",".join(s.categories))
            if s.category_values:
                lines.append("category_values: " + ",".join(_fmt_number(v) for v in s.category_values))
            lines.append(f"normal_value: {s.normal_value}")
        else:
            lines.append(f"normal_value: {_fmt_number(s.normal_value)}")
            lines.append(f"valid_lo: {_fmt_number(s.valid_range[0])}")
            lines.append(f"valid_hi: {_fmt_number(s.valid_range[1])}")
        lines.append(f"unit: {s.unit}")
        if s.itemids:
            lines.append("itemids: " + ",".join(str(i) for i in s.itemids))
        blocks.append("\n".join(lines))
    return "\n---\n".join(blocks) + "\n"


def load_phenotype_config(path=None) -> list[PhenotypeSpec]:
    if path is None:
        text = resources.files("icubench.data").joinpath("ccs_phenotypes.conf").read_text()
        where = "ccs_phenotypes.conf"
    else:
        text, where = Path(path).read_text(), str(path)
    out: list[PhenotypeSpec] = []
    owner: dict[str, int] = {}
    for start, rec in _parse_records(text, where):
        for key in ("id", "name", "codes"):
            if key not in rec:
                raise ConfigError(f"record missing {key!r}", start, where)
        try:
            idx = int(rec["id"][1])
        except ValueError:
            raise ConfigError("id must be an integer", rec["id"][0], where) from None
        if idx != len(out):
            raise ConfigError(f"ids must run 0..{N_PHENOTYPES - 1} in order", rec["id"][0], where)
        codes = tuple(_split_list(rec["codes"][1]))
        for c in codes:
            if c in owner:
                raise ConfigError(f"code {c} mapped to both {owner[c]} and {idx}", rec["codes"][0], where)
            owner[c] = idx
        out.append(PhenotypeSpec(idx, rec["name"][1], rec.get("type", (0, ""))[1], codes))
    if len(out) != N_PHENOTYPES:
        raise ConfigError(f"expected {N_PHENOTYPES} phenotypes, found {len(out)}", None, where)
    return out


def ccs_map(phenotypes: Sequence[PhenotypeSpec]) -> dict[str, int]:
    """ICD-9 code -> phenotype index."""
    return {code: p.id for p in phenotypes for code in p.codes}
