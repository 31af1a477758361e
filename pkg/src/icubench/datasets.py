"""Model-ready examples for each task, built from a benchmark's episodes and instances.

Each stay is discretized once over the longest window any of its instances
needs; a window ending at hour ``tau`` is then the ``tau``-step prefix of
that sequence.  Per-step targets sit at index ``tau - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import N_PHENOTYPES, EpisodeTimeline, Task, TaskInstance, VariableSpec, bucketize_hours
from .discretizer import DiscretizedSeq, Standardizer, discretize, fit_standardizer
from .featlin import extract_features
from .pipeline import (
    IHM_WINDOW_HOURS,
    Benchmark,
    decomp_labels,
    ihm_eligible,
    pheno_labels,
    prediction_grid,
    remaining_los,
    stay_window,
)


@dataclass
class Example:
    """One training unit: the first ``length`` steps of sequence ``seq`` plus its targets."""

    seq: int
    length: int
    targets: dict


@dataclass
class TaskData:
    task: Task | None
    grouped: bool
    stays: list[int]
    patients: list[int]
    seqs: list[DiscretizedSeq]
    examples: list[Example]
    standardizer: Standardizer | None = None

    def subset(self, keep_patients: set[int]) -> "TaskData":
        """Examples whose stay belongs to one of ``keep_patients`` (sequences are shared)."""
        ex = [e for e in self.examples if self.patients[e.seq] in keep_patients]
        return TaskData(self.task, self.grouped, self.stays, self.patients, self.seqs, ex, self.standardizer)

    def standardized(self, st: Standardizer) -> "TaskData":
        seqs = [st.apply(s) for s in self.seqs]
        return TaskData(self.task, self.grouped, self.stays, self.patients, seqs, self.examples, st)

    @property
    def example_patients(self) -> set[int]:
        return {self.patients[e.seq] for e in self.examples}


def _window_for(task: Task | None, grouped: bool, ep: EpisodeTimeline) -> float:
    if task is Task.IHM:
        return IHM_WINDOW_HOURS
    if task is Task.PHENO or task is None:
        return max(stay_window(ep), 1e-6)
    grid = prediction_grid(ep)
    return float(grid[-1]) if len(grid) else 0.0


def _step_targets(ep: EpisodeTimeline, T: int) -> dict:
    """Per-step decomp and LOS targets over ``T`` steps, masked where no instance exists."""
    grid = prediction_grid(ep)
    grid = grid[grid <= T]
    decomp = np.zeros(T)
    dmask = np.zeros(T)
    los = np.zeros(T)
    bucket = np.zeros(T, dtype=int)
    lmask = np.zeros(T)
    if len(grid):
        decomp[grid - 1] = decomp_labels(ep, grid)
        dmask[grid - 1] = 1.0
        if ep.los_hours is not None:
            rem = remaining_los(ep, grid)
            los[grid - 1] = rem
            bucket[grid - 1] = bucketize_hours(rem)
            lmask[grid - 1] = 1.0
    return {"decomp": decomp, "decomp_mask": dmask, "los": los, "los_bucket": bucket, "los_mask": lmask}


def build_task_data(episodes: Sequence[EpisodeTimeline], instances: Sequence[TaskInstance],
                    specs: Sequence[VariableSpec], task: Task | None, grouped: bool = False,
                    ccs: Mapping[str, int] | None = None, step: float = 1.0) -> TaskData:
    """Examples for ``task`` (``None`` = multitask over every stay in ``episodes``).

    Single-task examples come from ``instances``; grouped decomp/LOS and the
    multitask set collect all of a stay's per-step targets into one example.
    """
    by_id = {e.stay_id: e for e in episodes}
    if task is None:
        stay_ids = sorted(by_id)
    else:
        stay_ids = sorted({i.stay_id for i in instances})
    stays, patients, seqs, examples = [], [], [], []
    index = {}
    for sid in stay_ids:
        ep = by_id[sid]
        window = _window_for(task, grouped, ep)
        if window <= 0:
            continue
        index[sid] = len(seqs)
        stays.append(sid)
        patients.append(ep.patient_id)
        seqs.append(discretize(ep, window, specs, step))

    if task is None:
        for sid in stays:
            ep = by_id[sid]
            k = index[sid]
            T = seqs[k].T
            tg = _step_targets(ep, T)
            tg["ihm"] = float(ep.mortality_inhospital)
            tg["ihm_present"] = bool(ihm_eligible(ep)) and T >= int(IHM_WINDOW_HOURS)
            tg["pheno"] = pheno_labels(ep, ccs or {})[0].astype(float)
            tg["pheno_present"] = True
            examples.append(Example(k, T, tg))
    elif grouped and task in (Task.DECOMP, Task.LOS):
        for sid in stays:
            k = index[sid]
            tg = _step_targets(by_id[sid], seqs[k].T)
            examples.append(Example(k, seqs[k].T, tg))
    else:
        for inst in instances:
            if inst.stay_id not in index:
                continue
            k = index[inst.stay_id]
            if task is Task.IHM:
                examples.append(Example(k, int(IHM_WINDOW_HOURS), {"y": float(inst.target)}))
            elif task is Task.PHENO:
                examples.append(Example(k, seqs[k].T, {"y": np.asarray(inst.target, dtype=float)}))
            elif task is Task.DECOMP:
                examples.append(Example(k, int(inst.window_end_hours), {"y": float(inst.target)}))
            else:
                examples.append(Example(k, int(inst.window_end_hours),
                                        {"y": float(inst.target), "bucket": int(inst.los_bucket)}))
    return TaskData(task, grouped or task is None, stays, patients, seqs, examples)


def benchmark_task_data(bench: Benchmark, specs, task: Task | None, side: str = "train", grouped: bool = False,
                        ccs=None) -> TaskData:
    if side not in ("train", "test"):
        raise ValueError("side must be 'train' or 'test'")
    k = 0 if side == "train" else 1
    if task is None:
        eps = [e for e in bench.episodes if bench.manifest.is_test(e.patient_id) == (side == "test")]
        return build_task_data(eps, [], specs, None, True, ccs)
    return build_task_data(bench.episodes, bench.instances[task][k], specs, task, grouped, ccs)


def validation_split(patients: Sequence[int], fraction: float = 0.15, seed: int = 0) -> tuple[set[int], set[int]]:
    """Patient-level (train, validation) partition; ``round(fraction*N)`` validation patients."""
    ids = sorted(set(int(p) for p in patients))
    n_val = int(math.floor(fraction * len(ids) + 0.5))
    order = np.random.default_rng(seed).permutation(len(ids))
    val = {ids[i] for i in order[:n_val]}
    return set(ids) - val, val


def fit_on(data: TaskData, train_patients: set[int], specs) -> Standardizer:
    seqs = [s for s, p in zip(data.seqs, data.patients) if p in train_patients]
    return fit_standardizer(seqs, specs)


@dataclass
class Batch:
    x: np.ndarray
    lengths: list[int]
    targets: dict = field(default_factory=dict)


def collate(data: TaskData, examples: Sequence[Example], dtype=np.float32) -> Batch:
    """Pad to the longest example; per-step target arrays become ``T x B`` with zero masks on padding."""
    T = max(e.length for e in examples)
    B = len(examples)
    x = np.zeros((T, B, data.seqs[examples[0].seq].x.shape[1]), dtype=dtype)
    for b, e in enumerate(examples):
        x[: e.length, b] = data.seqs[e.seq].x[: e.length]
    lengths = [e.length for e in examples]
    tg: dict = {}
    first = examples[0].targets
    for key, val in first.items():
        if isinstance(val, np.ndarray) and key in ("decomp", "decomp_mask", "los", "los_bucket", "los_mask"):
            arr = np.zeros((T, B), dtype=val.dtype)
            for b, e in enumerate(examples):
                v = e.targets[key][: e.length]
                arr[: len(v), b] = v
            tg[key] = arr
        else:
            tg[key] = np.asarray([e.targets[key] for e in examples])
    return Batch(x, lengths, tg)


def feature_matrix(episodes: Sequence[EpisodeTimeline], instances: Sequence[TaskInstance],
                   specs: Sequence[VariableSpec]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """714 features per instance (window ``[0, period_length)``), labels, and stay ids."""
    by_id = {e.stay_id: e for e in episodes}
    X = np.zeros((len(instances), len(specs) * 42))
    ys = []
    for r, inst in enumerate(instances):
        X[r] = extract_features(by_id[inst.stay_id], inst.window_end_hours, specs)
        if inst.task is Task.LOS:
            ys.append(inst.los_bucket)
        elif inst.task is Task.PHENO:
            ys.append(np.asarray(inst.target))
        else:
            ys.append(inst.target)
    y = np.asarray(ys)
    if len(instances) and instances[0].task is Task.PHENO:
        y = y.reshape(len(instances), N_PHENOTYPES)
    return X, y, np.asarray([i.stay_id for i in instances])

