"""Hand-engineered summary features and regularized linear baselines."""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, log_softmax, softmax

from .core import EpisodeTimeline, VariableSpec

# (name, kind, fraction): "first" keeps t < start + f*D, "last" keeps t >= end - f*D
SUBSEQUENCES = (
    ("full", "all", 1.0),
    ("first10", "first", 0.10),
    ("first25", "first", 0.25),
    ("first50", "first", 0.50),
    ("last50", "last", 0.50),
    ("last25", "last", 0.25),
    ("last10", "last", 0.10),
)
STATISTICS = ("min", "max", "mean", "std", "skew", "count")
FEATURE_FORMAT_VERSION = 1


def feature_names(specs: Sequence[VariableSpec]) -> list[str]:
    """Variable-major, subsequence-middle, statistic-minor order."""
    return [f"{s.name}:{sub}:{stat}" for s in specs for sub, _, _ in SUBSEQUENCES for stat in STATISTICS]


def layout_hash(specs: Sequence[VariableSpec]) -> str:
    return hashlib.sha256("\n".join(feature_names(specs)).encode()).hexdigest()[:16]


def summary_stats(x: np.ndarray) -> np.ndarray:
    """min, max, mean, sample std, skew, count; zeros for an empty sample.

    std uses the n-1 denominator (0 when n < 2); skew is the mean cubed
    deviation over the cubed sample std (0 when n < 3 or std is 0).
    """
    n = x.size
    if n == 0:
        return np.zeros(6)
    mean = x.mean()
    std = x.std(ddof=1) if n >= 2 else 0.0
    if n >= 3 and std > 0:
        skew = np.mean((x - mean) ** 3) / std ** 3
    else:
        skew = 0.0
    return np.array([x.min(), x.max(), mean, std, skew, float(n)])


def extract_features(episode: EpisodeTimeline, window_end: float, specs: Sequence[VariableSpec],
                     window_start: float = 0.0) -> np.ndarray:
    """714 summary features of raw events in ``[window_start, window_end)``.

    Subsequence boundaries are placed on elapsed time of the window, not on
    sample index.  Categorical values enter through their numeric stand-ins.
    """
    duration = window_end - window_start
    if not duration > 0:
        raise ValueError(f"feature window must have positive duration, got {duration}")
    t = episode.times
    keep = (t >= window_start) & (t < window_end)
    t, var, val = t[keep], episode.variables[keep], episode.values[keep]
    out = np.zeros((len(specs), len(SUBSEQUENCES), len(STATISTICS)))
    for i, s in enumerate(specs):
        sel = var == i
        ti, vi = t[sel], val[sel]
        if s.is_categorical:
            vi = s.numeric_values()[vi.astype(int)]
        for j, (_, kind, frac) in enumerate(SUBSEQUENCES):
            if kind == "all":
                sub = vi
            elif kind == "first":
                sub = vi[ti < window_start + frac * duration]
            else:
                sub = vi[ti >= window_end - frac * duration]
            out[i, j] = summary_stats(sub)
    return out.reshape(-1)


@dataclass(frozen=True)
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def fit_feature_scaler(X: np.ndarray) -> FeatureScaler:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    return FeatureScaler(mean, np.where(std > 0, std, 1.0))


class NonFiniteError(ValueError):
    pass


@dataclass
class LinearModel:
    """Weights ``d x k`` and bias ``k``; kind is binary, multiclass or multilabel."""

    weights: np.ndarray
    bias: np.ndarray
    kind: str
    reg: str
    C: float
    seed: int = 0
    iterations: list[int] = field(default_factory=list)

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]


def _check_finite(X: np.ndarray) -> None:
    bad = ~np.isfinite(X)
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise NonFiniteError(f"non-finite feature at row {r}, column {c}")


def smooth_objective(W: np.ndarray, b: np.ndarray, X: np.ndarray, y: np.ndarray, kind: str,
                     reg: str, C: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus the smooth part of the penalty, and its gradient.

    ``W`` is ``d x k``.  Binary uses k=1 and labels in {0,1}; multiclass uses
    softmax over k classes with integer labels.  The L2 penalty is
    ``(1/C) * 0.5 * ||W||^2``; the L1 penalty is handled by the proximal step
    and does not appear here.  The bias is not penalized.
    """
    n = X.shape[0]
    Z = X @ W + b
    if kind == "binary":
        z = Z[:, 0]
        # log(1 + e^z) - y z, computed stably
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        r = (expit(z) - y)[:, None] / n
    elif kind == "multiclass":
        logp = log_softmax(Z, axis=1)
        loss = float(-np.mean(logp[np.arange(n), y]))
        r = np.exp(logp)
        r[np.arange(n), y] -= 1.0
        r /= n
    else:
        raise ValueError(f"unknown kind {kind!r}")
    gW = X.T @ r
    gb = r.sum(axis=0)
    if reg == "l2":
        loss += 0.5 / C * float(np.sum(W * W))
        gW = gW + W / C
    return loss, gW, gb


def objective(W, b, X, y, kind, reg, C) -> float:
    f, _, _ = smooth_objective(W, b, X, y, kind, reg, C)
    if reg == "l1":
        f += float(np.sum(np.abs(W))) / C
    return f


def _soft_threshold(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _best_bias(Z: np.ndarray, y: np.ndarray, kind: str, b0: np.ndarray) -> np.ndarray:
    """Exact minimizer of the data term over the (unpenalized) bias for fixed logits ``Z``."""
    n = Z.shape[0]

    def f(b):
        Zb = Z + b
        if kind == "binary":
            z = Zb[:, 0]
            return float(np.mean(np.logaddexp(0.0, z) - y * z)), np.array([np.mean(expit(z) - y)])
        logp = log_softmax(Zb, axis=1)
        r = np.exp(logp)
        r[np.arange(n), y] -= 1.0
        return float(-np.mean(logp[np.arange(n), y])), r.mean(axis=0)

    res = minimize(f, b0, jac=True, method="BFGS", options={"gtol": 1e-10})
    return res.x if f(res.x)[0] <= f(b0)[0] else b0


def _fit_one(X, y, kind, reg, C, k, tol, max_iter) -> tuple[np.ndarray, np.ndarray, int]:
    d = X.shape[1]
    W = np.zeros((d, k))
    b = _best_bias(np.zeros((X.shape[0], k)), y, kind, np.zeros(k))
    step = 1.0
    f, gW, gb = smooth_objective(W, b, X, y, kind, reg, C)
    it = 0
    for it in range(1, max_iter + 1):
        # backtracking on the (proximal) gradient step
        while True:
            W_new = W - step * gW
            b_new = b - step * gb
            if reg == "l1":
                W_new = _soft_threshold(W_new, step / C)
            f_new, gW_new, gb_new = smooth_objective(W_new, b_new, X, y, kind, reg, C)
            dW, db = W_new - W, b_new - b
            bound = f + np.sum(gW * dW) + np.sum(gb * db) + (np.sum(dW * dW) + np.sum(db * db)) / (2 * step)
            if f_new <= bound + 1e-15 or step < 1e-12:
                break
            step *= 0.5
        # gradient mapping norm doubles as the stopping criterion for both penalties
        gmap = np.sqrt(np.sum(dW * dW) + np.sum(db * db)) / step
        # the bias is unpenalized, so its curvature is far below the weights' when C is small;
        # solving for it exactly keeps it from crawling at the weights' step size
        b_new = _best_bias(X @ W_new, y, kind, b_new)
        f_new, gW_new, gb_new = smooth_objective(W_new, b_new, X, y, kind, reg, C)
        # with tiny C, roundoff in W times 1/C keeps the gradient mapping above tol
        stalled = abs(f - f_new) <= 1e-15 * max(1.0, abs(f))
        W, b, f, gW, gb = W_new, b_new, f_new, gW_new, gb_new
        if gmap < tol or stalled:
            break
        step *= 2.0
    return W, b, it


def train_linear(X: np.ndarray, y: np.ndarray, reg: str = "l2", C: float = 1.0, task_kind: str = "binary",
                 tol: float = 1e-6, max_iter: int = 5000, seed: int = 0) -> LinearModel:
    """Full-batch proximal gradient descent with backtracking.

    ``task_kind``: ``binary`` (y in {0,1}), ``multiclass`` (y integer class,
    10 classes unless more are present) or ``multilabel`` (y is n x K; one
    independent binary model per column).
    """
    X = np.asarray(X, dtype=float)
    _check_finite(X)
    if reg not in ("l1", "l2"):
        raise ValueError("reg must be 'l1' or 'l2'")
    if not C > 0:
        raise ValueError("C must be positive")
    y = np.asarray(y)
    if task_kind == "binary":
        W, b, it = _fit_one(X, y.astype(float).ravel(), "binary", reg, C, 1, tol, max_iter)
        return LinearModel(W, b, "binary", reg, C, seed, [it])
    if task_kind == "multiclass":
        k = max(10, int(y.max()) + 1)
        W, b, it = _fit_one(X, y.astype(int).ravel(), "multiclass", reg, C, k, tol, max_iter)
        return LinearModel(W, b, "multiclass", reg, C, seed, [it])
    if task_kind == "multilabel":
        Ws, bs, its = [], [], []
        for j in range(y.shape[1]):
            W, b, it = _fit_one(X, y[:, j].astype(float), "binary", reg, C, 1, tol, max_iter)
            Ws.append(W)
            bs.append(b)
            its.append(it)
        return LinearModel(np.hstack(Ws), np.concatenate(bs), "multilabel", reg, C, seed, its)
    raise ValueError(f"unknown task kind {task_kind!r}")


def predict_linear(model: LinearModel, X: np.ndarray) -> np.ndarray:
    """Sigmoid probabilities (binary: shape n; multilabel: n x K) or softmax rows (multiclass)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got shape {X.shape}")
    Z = X @ model.weights + model.bias
    if model.kind == "multiclass":
        return softmax(Z, axis=1)
    P = expit(Z)
    return P[:, 0] if model.kind == "binary" else P


def save_linear(model: LinearModel, path) -> None:
    """JSON header line + little-endian float64 payload (weights then bias)."""
    header = {
        "format": "icubench-linear",
        "version": FEATURE_FORMAT_VERSION,
        "dims": list(model.weights.shape),
        "kind": model.kind,
        "reg": model.reg,
        "C": model.C,
        "seed": model.seed,
        "iterations": model.iterations,
    }
    payload = np.concatenate([model.weights.ravel(), model.bias]).astype("<f8").tobytes()
    Path(path).write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + payload)


def load_linear(path) -> LinearModel:
    line, _, payload = Path(path).read_bytes().partition(b"\n")
    header = json.loads(line)
    if header.get("format") != "icubench-linear" or header.get("version") != FEATURE_FORMAT_VERSION:
        raise ValueError(f"{path}: not a linear model file of version {FEATURE_FORMAT_VERSION}")
    d, k = header["dims"]
    flat = np.frombuffer(payload, dtype="<f8").astype(float)
    if flat.size != d * k + k:
        raise ValueError(f"{path}: payload size does not match dims")
    return LinearModel(flat[: d * k].reshape(d, k), flat[d * k:], header["kind"], header["reg"], header["C"],
                       header["seed"], header["iterations"])


def write_feature_csv(path, stays: Sequence[int], periods: Sequence[float], X: np.ndarray,
                      specs: Sequence[VariableSpec]) -> None:
    """CSV with a layout comment line, then ``stay,period_length,<714 feature columns>``."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# layout={layout_hash(specs)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stay", "period_length"] + feature_names(specs))
        for s, p, row in zip(stays, periods, X):
            w.writerow([s, repr(float(p))] + [repr(float(v)) for v in row])
