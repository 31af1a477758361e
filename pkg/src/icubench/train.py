"""Losses, ADAM, training with per-task best-epoch selection, and grid search."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from . import ndiff as nd
from .core import N_LOS_BUCKETS, Task, bucketize_hours
from .datasets import Batch, TaskData, collate, fit_on, validation_split
from .metrics import UndefinedMetricError, auc_roc, linear_kappa, multilabel_auc
from .ndiff import Tensor
from .rnn import LSTMModel, ModelSpec, save_checkpoint

PROB_EPS = 1e-7
MULTITASK_LAMBDAS = (
    (1.0, 1.0, 1.0, 1.0),
    (4.0, 2.5, 0.3, 1.0),
    (1.0, 0.4, 3.0, 1.0),
    (1.0, 0.2, 1.5, 1.0),
    (0.1, 0.1, 0.5, 1.0),
)


class DivergenceError(RuntimeError):
    def __init__(self, message: str, history: list | None = None):
        super().__init__(message)
        self.history = history or []


@dataclass(frozen=True)
class LossSpec:
    """``lambdas`` are (decomp, ihm, los, pheno) weights of the multitask sum."""

    task: Task | None = Task.IHM
    deep_supervision: bool = False
    alpha: float = 0.5
    lambdas: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    los_mode: str = "buckets"

    def __post_init__(self):
        if self.task is not None:
            object.__setattr__(self, "task", Task(self.task))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if len(self.lambdas) != 4 or any(v < 0 for v in self.lambdas):
            raise ValueError("lambdas must be four non-negative weights")
        if self.los_mode not in ("buckets", "raw"):
            raise ValueError("los_mode must be 'buckets' or 'raw'")


# --- elementwise losses --------------------------------------------------------
def _clip(p) -> Tensor:
    return nd.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def ce(p, y) -> Tensor:
    """Binary cross-entropy per element, ``-(y ln p + (1-y) ln(1-p))``."""
    p = _clip(p)
    y = np.asarray(y, dtype=nd.default_dtype())
    return nd.neg(nd.add(nd.mul(y, nd.log(p)), nd.mul(1.0 - y, nd.log(nd.sub(1.0, p)))))


def mce(probs, y) -> Tensor:
    """Categorical cross-entropy per row of ``probs`` (last axis = classes) for integer labels."""
    probs = nd.as_tensor(probs)
    y = np.asarray(y, dtype=int)
    onehot = np.zeros(probs.shape, dtype=nd.default_dtype())
    np.put_along_axis(onehot, y[..., None], 1.0, axis=-1)
    return nd.neg(nd.sum(nd.mul(onehot, nd.log(_clip(probs))), axis=-1))


def sq(pred, y) -> Tensor:
    return nd.square(nd.sub(pred, np.asarray(y, dtype=nd.default_dtype())))


def weighted_sum(values: Tensor, weights: np.ndarray) -> Tensor:
    return nd.sum(nd.mul(values, np.asarray(weights, dtype=nd.default_dtype())))


def _stay_weights(mask: np.ndarray) -> np.ndarray:
    """Per-step weights averaging present steps within a stay, then over stays with any target.

    ``mask`` is ``T x B``; a stay without targets gets zero weight and does
    not enter the denominator.
    """
    mask = np.asarray(mask, dtype=float)
    per = mask.sum(axis=0)
    n = int((per > 0).sum())
    if n == 0:
        return np.zeros_like(mask)
    return np.where(per > 0, mask / np.maximum(per, 1.0), 0.0) / n


def _row_weights(present: np.ndarray) -> np.ndarray:
    present = np.asarray(present, dtype=float)
    n = present.sum()
    return present / n if n > 0 else np.zeros_like(present)


def _length_mask(lengths: Sequence[int], T: int, cap: int | None = None) -> np.ndarray:
    steps = np.arange(T)[:, None]
    lens = np.asarray(lengths)[None, :]
    if cap is not None:
        lens = np.minimum(lens, cap)
    return (steps < lens).astype(float)


# --- task losses ----------------------------------------------------------------
def binary_final_loss(p_final: Tensor, y, present=None) -> Tensor:
    """Mean CE over stays (``p_final`` is B x 1)."""
    y = np.asarray(y, dtype=float)
    present = np.ones_like(y) if present is None else np.asarray(present, dtype=float)
    return weighted_sum(ce(p_final, y[:, None]), _row_weights(present)[:, None])


def replicated_binary_loss(p_final: Tensor, p_steps: Tensor, y, lengths, alpha: float, present=None,
                           cap: int | None = None) -> Tensor:
    """``(1-a) CE(y, p_T) + a * 1/T sum_t CE(y, p_t)`` averaged over present stays."""
    y = np.asarray(y, dtype=float)
    present = np.ones_like(y) if present is None else np.asarray(present, dtype=float)
    T = p_steps.shape[0]
    mask = _length_mask(lengths, T, cap) * present[None, :]
    final = weighted_sum(ce(p_final, y[:, None]), ((1.0 - alpha) * _row_weights(present))[:, None])
    steps = weighted_sum(ce(p_steps, np.broadcast_to(y[None, :, None], p_steps.shape)),
                         (alpha * _stay_weights(mask))[:, :, None])
    return nd.add(final, steps)


def step_binary_loss(p_steps: Tensor, y, mask) -> Tensor:
    """Grouped decompensation: ``1/T sum_t CE`` over present steps, averaged over stays."""
    return weighted_sum(ce(p_steps, np.asarray(y, dtype=float)[:, :, None]), _stay_weights(mask)[:, :, None])


def step_bucket_loss(probs: Tensor, buckets, mask) -> Tensor:
    return weighted_sum(mce(probs, buckets), _stay_weights(mask))


def step_raw_los_loss(pred: Tensor, hours, mask) -> Tensor:
    return weighted_sum(sq(pred, np.asarray(hours, dtype=float)[:, :, None]), _stay_weights(mask)[:, :, None])


def pheno_final_loss(p_final: Tensor, y, present=None) -> Tensor:
    """``1/K sum_k CE(p_k, p_hat_k)`` averaged over stays."""
    y = np.asarray(y, dtype=float)
    present = np.ones(len(y)) if present is None else np.asarray(present, dtype=float)
    K = y.shape[1]
    return weighted_sum(ce(p_final, y), (_row_weights(present) / K)[:, None] * np.ones((1, K)))


def replicated_pheno_loss(p_final: Tensor, p_steps: Tensor, y, lengths, alpha: float, present=None) -> Tensor:
    y = np.asarray(y, dtype=float)
    present = np.ones(len(y)) if present is None else np.asarray(present, dtype=float)
    T, _, K = p_steps.shape
    mask = _length_mask(lengths, T) * present[None, :]
    final = weighted_sum(ce(p_final, y), ((1.0 - alpha) * _row_weights(present) / K)[:, None] * np.ones((1, K)))
    w = (alpha * _stay_weights(mask) / K)[:, :, None] * np.ones((1, 1, K))
    steps = weighted_sum(ce(p_steps, np.broadcast_to(y[None], p_steps.shape)), w)
    return nd.add(final, steps)


def task_loss(task: Task, preds: dict, targets: dict, lengths, spec: LossSpec) -> Tensor:
    """Loss of one task given model outputs and batch targets (single-task models)."""
    ds = spec.deep_supervision
    if task is Task.IHM:
        if ds:
            return replicated_binary_loss(preds["final"], preds["steps"], targets["y"], lengths, spec.alpha)
        return binary_final_loss(preds["final"], targets["y"])
    if task is Task.PHENO:
        if ds:
            return replicated_pheno_loss(preds["final"], preds["steps"], targets["y"], lengths, spec.alpha)
        return pheno_final_loss(preds["final"], targets["y"])
    if task is Task.DECOMP:
        if ds:
            return step_binary_loss(preds["steps"], targets["decomp"], targets["decomp_mask"])
        return binary_final_loss(preds["final"], targets["y"])
    if ds:
        if spec.los_mode == "raw":
            return step_raw_los_loss(preds["steps"], targets["los"], targets["los_mask"])
        return step_bucket_loss(preds["steps"], targets["los_bucket"], targets["los_mask"])
    if spec.los_mode == "raw":
        return weighted_sum(sq(preds["final"], np.asarray(targets["y"])[:, None]),
                            _row_weights(np.ones(len(targets["y"])))[:, None])
    return weighted_sum(mce(preds["final"], targets["bucket"]), _row_weights(np.ones(len(targets["bucket"]))))


def multitask_parts(preds: dict, targets: dict, lengths, spec: LossSpec, ihm_step: int = 48) -> dict[str, Tensor]:
    """Per-task losses of the multitask model (target replication when ``deep_supervision``)."""
    parts = {"decomp": step_binary_loss(preds["decomp"], targets["decomp"], targets["decomp_mask"])}
    if spec.los_mode == "raw":
        parts["los"] = step_raw_los_loss(preds["los"], targets["los"], targets["los_mask"])
    else:
        parts["los"] = step_bucket_loss(preds["los"], targets["los_bucket"], targets["los_mask"])
    present = np.asarray([i >= 0 for i in preds["ihm_index"]], dtype=float)
    if preds["ihm"] is None:
        parts["ihm"] = Tensor(np.zeros((), dtype=nd.default_dtype()))
    elif spec.deep_supervision:
        parts["ihm"] = replicated_binary_loss(preds["ihm"], preds["ihm_steps"], targets["ihm"], lengths, spec.alpha,
                                              present, cap=ihm_step)
    else:
        parts["ihm"] = binary_final_loss(preds["ihm"], targets["ihm"], present)
    pp = np.asarray(targets["pheno_present"], dtype=float)
    if spec.deep_supervision:
        parts["pheno"] = replicated_pheno_loss(preds["pheno"], preds["pheno_steps"], targets["pheno"], lengths,
                                               spec.alpha, pp)
    else:
        parts["pheno"] = pheno_final_loss(preds["pheno"], targets["pheno"], pp)
    return parts


def multitask_loss(parts: dict[str, Tensor], lambdas) -> Tensor:
    ld, lm, ll, lp = lambdas
    return nd.add(nd.add(nd.mul(parts["decomp"], ld), nd.mul(parts["ihm"], lm)),
                  nd.add(nd.mul(parts["los"], ll), nd.mul(parts["pheno"], lp)))


def loss(task: Task | None, predictions: dict, targets: dict, spec: LossSpec, lengths=None,
         ihm_step: int = 48) -> Tensor:
    """Scalar training loss; ``task=None`` is the weighted multitask sum."""
    if task is None:
        return multitask_loss(multitask_parts(predictions, targets, lengths, spec, ihm_step), spec.lambdas)
    return task_loss(Task(task), predictions, targets, lengths, spec)


# --- optimizer -----------------------------------------------------------------
@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One bias-corrected ADAM update; returns new parameter arrays (inputs untouched)."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name}")
    state.step += 1
    t = state.step
    out = {}
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=p.dtype)
        if g.shape != p.shape:
            raise nd.ShapeError(f"gradient shape {g.shape} does not match parameter {name} {p.shape}")
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        m_hat = m / (1 - state.beta1 ** t)
        v_hat = v / (1 - state.beta2 ** t)
        out[name] = (p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype)
    return out


# --- training ------------------------------------------------------------------
@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int | None = None
    lr: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.15
    patience: int | None = None
    max_batches: int | None = None


@dataclass
class TrainResult:
    model: LSTMModel
    history: list[dict]
    best_epoch: dict[str, int]
    best_params: dict[str, np.ndarray]
    val_scores: dict[str, float]
    standardizer: object
    train_patients: set
    val_patients: set

    def history_csv(self) -> str:
        if not self.history:
            return ""
        buf = io.StringIO()
        keys = list(self.history[0].keys())
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(keys)
        for row in self.history:
            w.writerow([_fmt(row[k]) for k in keys])
        return buf.getvalue()


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _forward(model: LSTMModel, batch: Batch, spec: LossSpec, train: bool, rng):
    if model.spec.multitask:
        return model.multitask_forward(batch.x, batch.lengths, batch.targets["ihm_present"], train, rng,
                                       replicate=spec.deep_supervision)
    return model.forward(batch.x, batch.lengths, train, rng)


@dataclass
class Predictions:
    """Scores per prediction point with labels, stay ids and window ends (hours)."""

    scores: np.ndarray
    labels: np.ndarray
    stays: np.ndarray
    periods: np.ndarray
    hours: np.ndarray | None = None


def predict(model: LSTMModel, data: TaskData, spec: LossSpec, batch_size: int = 64) -> dict[str, Predictions]:
    """Scores and labels per task over every example of ``data`` (evaluation mode).

    LOS labels are buckets (remaining hours in ``hours``) unless ``spec.los_mode`` is raw.
    """
    out: dict[str, list] = {}

    def add(task, scores, labels, stays, periods, hours=None):
        out.setdefault(task, []).append((scores, labels, stays, periods, hours))

    def steps(task, scores, tg, mask_key, label_key, stay, hours_key=None):
        sel = tg[mask_key] > 0
        T, B = sel.shape
        st = np.broadcast_to(stay[None, :], (T, B))[sel]
        per = np.broadcast_to(np.arange(1, T + 1, dtype=float)[:, None], (T, B))[sel]
        add(task, scores[sel], tg[label_key][sel], st, per, tg[hours_key][sel] if hours_key else None)

    def los_steps(pred, tg, stay):
        if spec.los_mode == "raw":
            steps("los", pred[..., 0], tg, "los_mask", "los", stay, "los")
        else:
            steps("los", pred, tg, "los_mask", "los_bucket", stay, "los")

    exs = data.examples
    for start in range(0, len(exs), batch_size):
        chunk = exs[start:start + batch_size]
        batch = collate(data, chunk)
        stay = np.asarray([data.stays[e.seq] for e in chunk])
        lengths = np.asarray([e.length for e in chunk], dtype=float)
        with nd.Tape():
            pr = _forward(model, batch, spec, False, None)
        tg = batch.targets
        if model.spec.multitask:
            steps("decomp", pr["decomp"].data[..., 0], tg, "decomp_mask", "decomp", stay)
            los_steps(pr["los"].data, tg, stay)
            keep = np.asarray([i >= 0 for i in pr["ihm_index"]])
            if pr["ihm"] is not None and keep.any():
                add("ihm", pr["ihm"].data[keep, 0], tg["ihm"][keep], stay[keep],
                    np.full(int(keep.sum()), float(model.spec.ihm_step)))
            add("pheno", pr["pheno"].data, tg["pheno"], stay, lengths)
            continue
        task = model.spec.task
        if spec.deep_supervision and task is Task.DECOMP:
            steps("decomp", pr["steps"].data[..., 0], tg, "decomp_mask", "decomp", stay)
        elif spec.deep_supervision and task is Task.LOS:
            los_steps(pr["steps"].data, tg, stay)
        elif task is Task.LOS:
            if spec.los_mode == "raw":
                add("los", pr["final"].data[:, 0], tg["y"], stay, lengths, tg["y"])
            else:
                add("los", pr["final"].data, tg["bucket"], stay, lengths, tg["y"])
        elif task is Task.PHENO:
            add("pheno", pr["final"].data, tg["y"], stay, lengths)
        else:
            add(task.value, pr["final"].data[:, 0], tg["y"], stay, lengths)
    result = {}
    for task, parts in out.items():
        cols = list(zip(*parts))
        hours = None if cols[4][0] is None else np.concatenate(cols[4])
        result[task] = Predictions(*(np.concatenate(c) for c in cols[:4]), hours)
    return result


def task_score(task: str, scores: np.ndarray, labels: np.ndarray, los_mode: str = "buckets") -> float:
    """Main validation score: AUC-ROC (ihm, decomp), kappa (los), macro AUC-ROC (pheno)."""
    try:
        if task in ("ihm", "decomp"):
            return auc_roc(scores, labels)
        if task == "los":
            if los_mode == "raw":
                return linear_kappa(bucketize_hours(np.maximum(scores, 0.0)), bucketize_hours(labels), N_LOS_BUCKETS)
            return linear_kappa(np.argmax(scores, axis=1), labels, N_LOS_BUCKETS)
        return multilabel_auc(scores, labels).macro
    except UndefinedMetricError:
        return float("nan")


def evaluate_scores(preds: dict[str, Predictions], los_mode: str = "buckets") -> dict[str, float]:
    return {task: task_score(task, p.scores, p.labels, los_mode) for task, p in sorted(preds.items())}


def _default_batch(spec: ModelSpec) -> int:
    return 8 if spec.grouped else 64


def train_model(spec: ModelSpec, data: TaskData, loss_spec: LossSpec, cfg: TrainConfig = TrainConfig(),
                specs=None) -> TrainResult:
    """Minibatch ADAM on an 85/15 patient split of ``data`` with per-task best-epoch retention.

    ``data`` holds unstandardized sequences; the standardizer is fitted on
    the training patients only.  ``specs`` defaults to the packaged variables.
    """
    from .core import load_variable_config

    specs = specs if specs is not None else load_variable_config()
    if loss_spec.task != spec.task:
        raise ValueError("loss task and model task differ")
    train_p, val_p = validation_split(sorted(set(data.patients)), cfg.val_fraction, cfg.seed)
    st = fit_on(data, train_p, specs)
    data = data.standardized(st)
    tr, va = data.subset(train_p), data.subset(val_p)
    if not tr.examples:
        raise ValueError("no training examples")

    model = LSTMModel(spec)
    state = AdamState(lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    bs = cfg.batch_size or _default_batch(spec)
    history: list[dict] = []
    snapshots: list[np.ndarray] = []
    best_epoch: dict[str, int] = {}
    best_score: dict[str, float] = {}
    stale = 0
    names = model.params.names()
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(tr.examples))
        total, n_batches = 0.0, 0
        for start in range(0, len(order), bs):
            if cfg.max_batches is not None and n_batches >= cfg.max_batches:
                break
            batch = collate(tr, [tr.examples[i] for i in order[start:start + bs]])
            with nd.Tape() as tape:
                pr = _forward(model, batch, loss_spec, True, rng)
                value = loss(spec.task, pr, batch.targets, loss_spec, batch.lengths, spec.ihm_step)
                if not np.isfinite(value.data):
                    raise DivergenceError(f"loss became {value.item()} at epoch {epoch}", history)
                tape.backward(value, model.params.tensors())
            new = adam_step(state, {n: t.data for n, t in model.params.items()},
                            {n: t.grad for n, t in model.params.items()})
            bad = [n for n in names if not np.all(np.isfinite(new[n]))]
            if bad:
                raise DivergenceError(f"parameter {bad[0]} became non-finite at epoch {epoch}", history)
            for n in names:
                model.params[n].data = new[n]
            total += float(value.data)
            n_batches += 1
        snapshots.append(model.params.flat().copy())
        row = {"epoch": epoch, "train_loss": total / max(n_batches, 1)}
        scores = evaluate_scores(predict(model, va, loss_spec), loss_spec.los_mode) if va.examples else {}
        improved = False
        for task, score in scores.items():
            row[f"val_{task}"] = score
            if task not in best_epoch or (np.isfinite(score) and score > best_score[task]):
                best_score[task] = score if np.isfinite(score) else -math.inf
                best_epoch[task] = epoch
                improved = True
        history.append(row)
        stale = 0 if improved else stale + 1
        if cfg.patience is not None and stale >= cfg.patience:
            break

    # single-task: the task's best epoch; multitask: the epoch with the best mean
    # validation score, with each task's own best epoch kept alongside
    if spec.multitask:
        keys = [k for k in history[0] if k.startswith("val_")]
        means = [np.nanmean([r[k] for k in keys]) if keys else -r["train_loss"] for r in history]
        means = [m if np.isfinite(m) else -math.inf for m in means]
        best_epoch["overall"] = int(np.argmax(means)) + 1
        chosen = best_epoch["overall"]
    elif spec.task.value in best_epoch:
        chosen = best_epoch[spec.task.value]
    else:
        chosen = len(snapshots)
    best_params = {task: snapshots[e - 1] for task, e in best_epoch.items()}
    model.params.set_flat(snapshots[chosen - 1])
    return TrainResult(model, history, best_epoch, best_params, dict(best_score), st, train_p, val_p)


def save_result(result: TrainResult, path) -> None:
    st = result.standardizer
    extra = {
        "standardizer": {"columns": list(st.columns), "mean": list(st.mean), "std": list(st.std)},
        "best_epoch": result.best_epoch,
    }
    save_checkpoint(path, result.model.spec.to_dict(), result.model.params, extra)


# --- grid search ----------------------------------------------------------------
@dataclass
class GridEntry:
    index: int
    config: dict
    score: float
    val_scores: dict


def _expand_config(base_spec: ModelSpec, base_loss: LossSpec, cfg: dict) -> tuple[ModelSpec, LossSpec]:
    model_keys = set(asdict(base_spec))
    loss_keys = {"alpha", "lambdas"}
    unknown = set(cfg) - model_keys - loss_keys
    if unknown:
        raise ValueError(f"unknown grid keys {sorted(unknown)}")
    spec = replace(base_spec, **{k: v for k, v in cfg.items() if k in model_keys})
    ls = replace(base_loss, **{k: tuple(v) if k == "lambdas" else v for k, v in cfg.items() if k in loss_keys})
    return spec, ls


def _run_grid_entry(args):
    index, base_spec, base_loss, cfg, data, tcfg, specs = args
    spec, ls = _expand_config(base_spec, base_loss, cfg)
    res = train_model(spec, data, ls, tcfg, specs)
    if spec.multitask:
        vals = [v for v in res.val_scores.values() if np.isfinite(v)]
        score = float(np.mean(vals)) if vals else -math.inf
    else:
        score = res.val_scores.get(spec.task.value, -math.inf)
    return GridEntry(index, cfg, score, res.val_scores), res


def multitask_grid(base: dict | None = None) -> list[dict]:
    """The five loss-weight tuples crossed with ``base`` architecture settings."""
    base = base or {}
    return [dict(base, lambdas=lam) for lam in MULTITASK_LAMBDAS]


def grid_search(grid: Sequence[dict], base_spec: ModelSpec, base_loss: LossSpec, data: TaskData,
                tcfg: TrainConfig = TrainConfig(), specs=None, jobs: int = 1) -> tuple[list[GridEntry], TrainResult]:
    """Train every config, rank by validation score (ties: grid order); returns ranking and best run."""
    if not grid:
        raise ValueError("empty grid")
    if base_spec.multitask:
        allowed = {tuple(float(x) for x in lam) for lam in MULTITASK_LAMBDAS}
        for cfg in grid:
            lam = tuple(float(x) for x in cfg.get("lambdas", base_loss.lambdas))
            if lam not in allowed:
                raise ValueError(f"multitask grid restricted to the five published weight tuples, got {lam}")
    jobs_args = [(i, base_spec, base_loss, dict(cfg), data, tcfg, specs) for i, cfg in enumerate(grid)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_grid_entry, jobs_args))
    else:
        results = [_run_grid_entry(a) for a in jobs_args]
    ranked = sorted(results, key=lambda r: (-r[0].score if np.isfinite(r[0].score) else math.inf, r[0].index))
    return [r[0] for r in ranked], ranked[0][1]


def grid_csv(entries: Sequence[GridEntry]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rank", "index", "score", "config"])
    for rank, e in enumerate(entries, 1):
        w.writerow([rank, e.index, _fmt(e.score), ";".join(f"{k}={e.config[k]}" for k in sorted(e.config))])
    return buf.getvalue()
