"""Hourly resampling with forward-fill imputation, observation masks and standardization."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EpisodeTimeline, VariableSpec


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelLayout:
    """Column meaning of the discretized input: value blocks in variable order, then masks."""

    specs: tuple[VariableSpec, ...]

    @property
    def offsets(self) -> list[int]:
        out, start = [], 0
        for s in self.specs:
            out.append(start)
            start += s.width
        return out

    @property
    def n_values(self) -> int:
        return sum(s.width for s in self.specs)

    @property
    def width(self) -> int:
        return self.n_values + len(self.specs)

    @property
    def continuous_columns(self) -> np.ndarray:
        return np.asarray([o for o, s in zip(self.offsets, self.specs) if not s.is_categorical], dtype=int)

    @property
    def channel_widths(self) -> tuple[int, ...]:
        return tuple(s.width for s in self.specs)

    def column_names(self) -> list[str]:
        names = []
        for s in self.specs:
            if s.is_categorical:
                names.extend(f"{s.name}->{c}" for c in s.categories)
            else:
                names.append(s.name)
        names.extend(f"mask->{s.name}" for s in self.specs)
        return names

    def manifest(self) -> str:
        """Text manifest, one ``index<TAB>kind<TAB>variable<TAB>category`` line per column."""
        lines = ["index\tkind\tvariable\tcategory"]
        col = 0
        for s in self.specs:
            if s.is_categorical:
                for c in s.categories:
                    lines.append(f"{col}\tonehot\t{s.name}\t{c}")
                    col += 1
            else:
                lines.append(f"{col}\tvalue\t{s.name}\t")
                col += 1
        for s in self.specs:
            lines.append(f"{col}\tmask\t{s.name}\t")
            col += 1
        return "\n".join(lines) + "\n"


@dataclass
class DiscretizedSeq:
    values: np.ndarray
    masks: np.ndarray
    standardized_by: str | None = None

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.values, self.masks], axis=1)

    def prefix(self, steps: int) -> "DiscretizedSeq":
        return DiscretizedSeq(self.values[:steps], self.masks[:steps], self.standardized_by)


def discretize(episode: EpisodeTimeline, window_end: float, specs: Sequence[VariableSpec],
               step: float = 1.0) -> DiscretizedSeq:
    """Resample events in ``[0, window_end)`` onto bins ``[t*step, (t+1)*step)``.

    The last event in a bin wins; empty bins carry the previous bin's value
    forward, or the variable's normal value before the first observation.
    The final bin of a fractional window is truncated at ``window_end``.
    """
    if not window_end > 0:
        raise DomainError(f"window must be positive, got {window_end}")
    if step <= 0:
        raise DomainError("step must be positive")
    layout = ChannelLayout(tuple(specs))
    T = math.ceil(window_end / step - 1e-9)
    if T == 0:
        raise DomainError("empty window")
    n_var = len(specs)
    times, variables, codes = episode.times, episode.variables, episode.values
    keep = times < window_end
    times, variables, codes = times[keep], variables[keep], codes[keep]
    bins = np.minimum((times / step).astype(int), T - 1)

    # last observation per (bin, variable); events are time-sorted
    observed = np.full((T, n_var), np.nan)
    key = bins * n_var + variables
    rev_key = key[::-1]
    _, first_in_rev = np.unique(rev_key, return_index=True)
    last = len(key) - 1 - first_in_rev
    observed[bins[last], variables[last]] = codes[last]
    masks = (~np.isnan(observed)).astype(float)

    filled = observed.copy()
    for i, s in enumerate(specs):
        col = filled[:, i]
        idx = np.where(~np.isnan(col), np.arange(T), -1)
        np.maximum.accumulate(idx, out=idx)
        col = np.where(idx >= 0, col[np.maximum(idx, 0)], s.normal_code())
        filled[:, i] = col

    values = np.zeros((T, layout.n_values))
    for off, (i, s) in zip(layout.offsets, enumerate(specs)):
        if s.is_categorical:
            values[np.arange(T), off + filled[:, i].astype(int)] = 1.0
        else:
            values[:, off] = filled[:, i]
    return DiscretizedSeq(values, masks)


@dataclass(frozen=True)
class Standardizer:
    """Z-scoring of the continuous value columns; one-hot and mask columns pass through."""

    columns: tuple[int, ...]
    mean: tuple[float, ...]
    std: tuple[float, ...]

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256(repr((self.columns, self.mean, self.std)).encode())
        return h.hexdigest()[:16]

    def apply(self, seq: DiscretizedSeq) -> DiscretizedSeq:
        if seq.standardized_by is not None:
            raise DomainError(f"sequence already standardized (by {seq.standardized_by})")
        values = seq.values.copy()
        cols = list(self.columns)
        values[:, cols] = (values[:, cols] - np.asarray(self.mean)) / np.asarray(self.std)
        return DiscretizedSeq(values, seq.masks, self.fingerprint)


def fit_standardizer(seqs: Sequence[DiscretizedSeq], specs: Sequence[VariableSpec]) -> Standardizer:
    """Per-column mean and standard deviation over every time step of the training pool.

    Statistics include imputed steps; a zero deviation is replaced by 1.
    """
    if not seqs:
        raise DomainError("cannot fit a standardizer on an empty training set")
    cols = ChannelLayout(tuple(specs)).continuous_columns
    pool = np.concatenate([s.values[:, cols] for s in seqs], axis=0)
    mean = pool.mean(axis=0)
    std = pool.std(axis=0)
    # rounding leaves a constant column with a tiny nonzero spread; pin it exactly
    const = np.ptp(pool, axis=0) == 0
    mean = np.where(const, pool[0], mean)
    std = np.where(const | (std == 0), 1.0, std)
    return Standardizer(tuple(int(c) for c in cols), tuple(float(v) for v in mean), tuple(float(v) for v in std))


def apply(standardizer: Standardizer, seq: DiscretizedSeq) -> DiscretizedSeq:
    return standardizer.apply(seq)
