"""LSTM-family models: standard, channel-wise, deep supervision and multitask."""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import ndiff as nd
from .core import N_LOS_BUCKETS, N_PHENOTYPES, N_VARIABLES, Task
from .ndiff import Tensor

CHECKPOINT_VERSION = 1


class Arch(str, enum.Enum):
    STANDARD = "standard"
    CHANNELWISE = "channelwise"


class ContractError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Architecture and head configuration.

    ``task`` is ``None`` for the multitask model.  ``channel_widths`` lists the
    value-block width of each variable (the channel-wise input is mask + block).
    """

    arch: Arch = Arch.STANDARD
    task: Task | None = Task.IHM
    layers: int = 1
    units: int = 16
    channel_units: int = 4
    dropout: float = 0.0
    deep_supervision: bool = False
    bidirectional: bool = False
    los_mode: str = "buckets"
    gate_bias: bool = False
    input_dim: int = 76
    channel_widths: tuple[int, ...] = ()
    ihm_step: int = 48
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "arch", Arch(self.arch))
        if self.task is not None:
            object.__setattr__(self, "task", Task(self.task))
        if self.layers not in (1, 2):
            raise ContractError("layers must be 1 or 2")
        if not 0.0 <= self.dropout <= 1.0:
            raise ContractError("dropout must lie in [0, 1]")
        if self.los_mode not in ("buckets", "raw"):
            raise ContractError("los_mode must be 'buckets' or 'raw'")
        if self.bidirectional and self.grouped:
            raise ContractError("bidirectional layers are not allowed when a stay's instances are grouped")
        if self.arch is Arch.CHANNELWISE and self.channel_widths and len(self.channel_widths) != N_VARIABLES:
            raise ContractError(f"channel-wise model needs {N_VARIABLES} channel widths")

    @property
    def multitask(self) -> bool:
        return self.task is None

    @property
    def grouped(self) -> bool:
        """True when all instances of a stay are predicted in one left-to-right pass."""
        return self.multitask or (self.deep_supervision and self.task in (Task.DECOMP, Task.LOS))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.value
        d["task"] = self.task.value if self.task is not None else None
        d["channel_widths"] = list(self.channel_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["channel_widths"] = tuple(d.get("channel_widths", ()))
        return cls(**d)


class ParamStore:
    """Ordered named parameter tensors with a flat-vector view."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.array(value, dtype=nd.default_dtype()), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def tensors(self) -> list[Tensor]:
        return list(self._params.values())

    def items(self):
        return self._params.items()

    def size(self) -> int:
        return int(sum(t.data.size for t in self._params.values()))

    def slices(self) -> dict[str, slice]:
        out, start = {}, 0
        for name, t in self._params.items():
            out[name] = slice(start, start + t.data.size)
            start += t.data.size
        return out

    def flat(self) -> np.ndarray:
        if not self._params:
            return np.zeros(0)
        return np.concatenate([t.data.reshape(-1) for t in self._params.values()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec)
        if vec.size != self.size():
            raise ValueError(f"expected {self.size()} values, got {vec.size}")
        for name, sl in self.slices().items():
            t = self._params[name]
            t.data = vec[sl].reshape(t.shape).astype(t.data.dtype)

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def fill(self, value: float) -> None:
        for t in self._params.values():
            t.data[...] = value


def _uniform(rng: np.random.Generator, shape, scale: float) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


class LSTMLayer:
    """One LSTM layer following

        i_t = sigma(x_t W_xi + h_{t-1} W_hi)
        f_t = sigma(x_t W_xf + h_{t-1} W_hf)
        c_t = f_t * c_{t-1} + i_t * tanh(x_t W_xc + h_{t-1} W_hc + b_c)
        o_t = sigma(x_t W_xo + h_{t-1} W_ho + b_o)
        h_t = o_t * tanh(c_t)

    The input and forget gates carry no bias unless ``gate_bias`` is set.
    """

    GATE_PARAMS = ("W_xi", "W_hi", "W_xf", "W_hf", "W_xc", "W_hc", "b_c", "W_xo", "W_ho", "b_o")

    def __init__(self, store: ParamStore, prefix: str, input_dim: int, hidden: int,
                 rng: np.random.Generator, gate_bias: bool = False):
        self.input_dim = input_dim
        self.hidden = hidden
        self.prefix = prefix
        self.gate_bias = gate_bias
        scale = 1.0 / np.sqrt(hidden)
        p = {}
        for name in self.GATE_PARAMS:
            if name.startswith("b_"):
                shape = (hidden,)
            elif name.startswith("W_x"):
                shape = (input_dim, hidden)
            else:
                shape = (hidden, hidden)
            p[name] = store.add(f"{prefix}.{name}", _uniform(rng, shape, scale))
        if gate_bias:
            p["b_i"] = store.add(f"{prefix}.b_i", _uniform(rng, (hidden,), scale))
            p["b_f"] = store.add(f"{prefix}.b_f", _uniform(rng, (hidden,), scale))
        self.p = p

    def cell(self, x_t: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        p = self.p
        i_pre = x_t @ p["W_xi"] + h @ p["W_hi"]
        f_pre = x_t @ p["W_xf"] + h @ p["W_hf"]
        if self.gate_bias:
            i_pre = i_pre + p["b_i"]
            f_pre = f_pre + p["b_f"]
        i = nd.sigmoid(i_pre)
        f = nd.sigmoid(f_pre)
        g = nd.tanh(x_t @ p["W_xc"] + h @ p["W_hc"] + p["b_c"])
        c = f * c + i * g
        o = nd.sigmoid(x_t @ p["W_xo"] + h @ p["W_ho"] + p["b_o"])
        h = o * nd.tanh(c)
        return h, c

    def forward(self, x: Tensor, h0: Tensor | None = None, c0: Tensor | None = None) -> Tensor:
        """Run over a T x B x D input; returns T x B x H hidden states."""
        x = nd.as_tensor(x)
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise nd.ShapeError(f"{self.prefix}: expected T x B x {self.input_dim} input, got {x.shape}")
        T, B = x.shape[0], x.shape[1]
        h = h0 if h0 is not None else Tensor(np.zeros((B, self.hidden)))
        c = c0 if c0 is not None else Tensor(np.zeros((B, self.hidden)))
        if h.shape != (B, self.hidden) or c.shape != (B, self.hidden):
            raise nd.ShapeError(f"{self.prefix}: initial state shape {h.shape}/{c.shape} != {(B, self.hidden)}")
        hs = []
        for t in range(T):
            h, c = self.cell(nd.slice_time(x, t), h, c)
            hs.append(h)
        return nd.stack(hs)


def lstm_forward(layer: LSTMLayer, x, h0=None, c0=None) -> Tensor:
    return layer.forward(x, h0, c0)


def bilstm_forward(fwd: LSTMLayer, bwd: LSTMLayer, x, lengths: Sequence[int] | None = None) -> Tensor:
    """Bidirectional layer: the backward layer reads each sequence reversed
    within its own length; its outputs are re-reversed and concatenated so
    step t pairs the forward state with the backward state of the same step.
    """
    x = nd.as_tensor(x)
    h_fwd = fwd.forward(x)
    h_bwd = nd.reverse_time(bwd.forward(nd.reverse_time(x, lengths)), lengths)
    return nd.concat([h_fwd, h_bwd], axis=-1)


def _head(store: ParamStore, name: str, hidden: int, out: int, rng: np.random.Generator) -> tuple[Tensor, Tensor]:
    scale = 1.0 / np.sqrt(hidden)
    return store.add(f"head.{name}.W", _uniform(rng, (hidden, out), scale)), store.add(
        f"head.{name}.b", np.zeros(out)
    )


def select_steps(h: Tensor, steps: Sequence[int]) -> Tensor:
    """Pick ``h[steps[b], b, :]`` for each batch column (B x H).

    Columns with a negative step yield zeros.
    """
    T, B = h.shape[0], h.shape[1]
    w = np.zeros((T, B, 1))
    for b, s in enumerate(steps):
        if s >= 0:
            w[s, b, 0] = 1.0
    return nd.sum(h * Tensor(w), axis=0)


class LSTMModel:
    """Standard or channel-wise LSTM with task head(s).

    ``forward`` takes a padded T x B x 76 numpy array laid out as
    [value blocks..., masks...] and the true length of every column.
    """

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        self.params = ParamStore()
        self.channel_fwd: list[LSTMLayer] = []
        self.channel_bwd: list[LSTMLayer] = []
        self.layers: list[tuple[LSTMLayer, LSTMLayer | None]] = []
        H = spec.units
        if spec.arch is Arch.CHANNELWISE:
            widths = spec.channel_widths
            if len(widths) != N_VARIABLES:
                raise ContractError(f"channel-wise model needs {N_VARIABLES} channel widths")
            if sum(widths) + N_VARIABLES != spec.input_dim:
                raise ContractError("channel widths do not add up to the input width")
            for i, w in enumerate(widths):
                self.channel_fwd.append(LSTMLayer(self.params, f"chan{i}.fwd", w + 1, spec.channel_units, rng,
                                                  spec.gate_bias))
                if self.channel_bidirectional:
                    self.channel_bwd.append(LSTMLayer(self.params, f"chan{i}.bwd", w + 1, spec.channel_units,
                                                      rng, spec.gate_bias))
            in_dim = self.channel_output_width
        else:
            in_dim = spec.input_dim
        for k in range(spec.layers):
            last = k == spec.layers - 1
            bi = spec.bidirectional and spec.arch is Arch.STANDARD and not last
            fwd = LSTMLayer(self.params, f"lstm{k}.fwd", in_dim, H, rng, spec.gate_bias)
            bwd = LSTMLayer(self.params, f"lstm{k}.bwd", in_dim, H, rng, spec.gate_bias) if bi else None
            self.layers.append((fwd, bwd))
            in_dim = 2 * H if bi else H
        self.heads: dict[str, tuple[Tensor, Tensor]] = {}
        tasks = [spec.task] if not spec.multitask else [Task.DECOMP, Task.IHM, Task.LOS, Task.PHENO]
        for task in tasks:
            if task is Task.LOS:
                out = N_LOS_BUCKETS if spec.los_mode == "buckets" else 1
            elif task is Task.PHENO:
                out = N_PHENOTYPES
            else:
                out = 1
            self.heads[task.value] = _head(self.params, task.value, H, out, rng)

    @property
    def channel_bidirectional(self) -> bool:
        # per-variable layers read both directions unless every step is a prediction point
        return not self.spec.grouped

    @property
    def channel_output_width(self) -> int:
        per = 2 if self.channel_bidirectional else 1
        return N_VARIABLES * per * self.spec.channel_units

    # --- encoders ---

    def channel_streams(self, x: np.ndarray) -> list[np.ndarray]:
        """Split a T x B x 76 array into per-variable [mask; value-block] streams."""
        streams = []
        start = 0
        n_val = sum(self.spec.channel_widths)
        for i, w in enumerate(self.spec.channel_widths):
            mask = x[..., n_val + i: n_val + i + 1]
            streams.append(np.concatenate([mask, x[..., start:start + w]], axis=-1))
            start += w
        return streams

    def channelwise_forward(self, streams: Sequence, lengths: Sequence[int] | None = None) -> Tensor:
        """Per-variable bi-LSTMs (one direction when grouped) concatenated in variable order."""
        if len(streams) != N_VARIABLES:
            raise ContractError(f"expected {N_VARIABLES} channel streams, got {len(streams)}")
        outs = []
        for i, s in enumerate(streams):
            s = nd.as_tensor(s)
            if self.channel_bidirectional:
                outs.append(bilstm_forward(self.channel_fwd[i], self.channel_bwd[i], s, lengths))
            else:
                outs.append(self.channel_fwd[i].forward(s))
        return nd.concat(outs, axis=-1)

    def encode(self, x: np.ndarray, lengths: Sequence[int], train: bool = False, rng=None,
               trace: dict | None = None) -> Tensor:
        """Hidden states of the top layer, T x B x H."""
        x = np.asarray(x)
        if x.ndim != 3 or x.shape[2] != self.spec.input_dim:
            raise nd.ShapeError(f"expected T x B x {self.spec.input_dim} input, got {x.shape}")
        rng = rng if rng is not None else np.random.default_rng(self.spec.seed)
        if self.spec.arch is Arch.CHANNELWISE:
            u = self.channelwise_forward(self.channel_streams(x), lengths)
        else:
            u = Tensor(x)
        for k, (fwd, bwd) in enumerate(self.layers):
            if k > 0:
                u = nd.dropout(u, self.spec.dropout, rng, train)
            if trace is not None:
                trace[f"layer{k}_input"] = u
            u = bilstm_forward(fwd, bwd, u, lengths) if bwd is not None else fwd.forward(u)
            if trace is not None:
                trace[f"layer{k}_output"] = u
        return nd.dropout(u, self.spec.dropout, rng, train)

    # --- heads ---

    def apply_head(self, task: Task, h: Tensor) -> Tensor:
        W, b = self.heads[Task(task).value]
        z = h @ W + b
        if task is Task.LOS:
            return nd.softmax(z) if self.spec.los_mode == "buckets" else nd.relu(z)
        return nd.sigmoid(z)

    def heads_forward(self, h: Tensor) -> dict[str, Tensor]:
        """Every head applied to ``h`` (B x H or T x B x H)."""
        return {name: self.apply_head(Task(name), h) for name in self.heads}

    def forward(self, x: np.ndarray, lengths: Sequence[int], train: bool = False, rng=None) -> dict[str, Tensor]:
        """Single-task predictions.

        Returns ``{"final": B x k}`` and, when per-step outputs are needed
        (deep supervision), ``{"steps": T x B x k}``.
        """
        if self.spec.multitask:
            raise ContractError("use multitask_forward for the multitask model")
        h = self.encode(x, lengths, train, rng)
        task = self.spec.task
        last = [int(n) - 1 for n in lengths]
        if self.spec.deep_supervision:
            steps = self.apply_head(task, h)
            return {"steps": steps, "final": select_steps(steps, last)}
        return {"final": self.apply_head(task, select_steps(h, last))}

    def multitask_forward(self, x: np.ndarray, lengths: Sequence[int], ihm_present: Sequence[bool],
                          train: bool = False, rng=None, replicate: bool = False) -> dict[str, Tensor | None]:
        """Joint predictions for grouped stays.

        decomp/los: per step (T x B x k); ihm: from h at step ``ihm_step``
        for stays that qualify (B x 1, ``None`` when no stay qualifies);
        pheno: at each stay's last step (B x 25).  With ``replicate`` the
        ihm and pheno heads are also emitted per step for target replication.
        """
        if not self.spec.multitask:
            raise ContractError("multitask_forward needs a multitask spec (task=None)")
        if self.spec.bidirectional:
            raise ContractError("multitask model must be left-to-right")
        h = self.encode(x, lengths, train, rng)
        out: dict[str, Tensor | None] = {
            "decomp": self.apply_head(Task.DECOMP, h),
            "los": self.apply_head(Task.LOS, h),
        }
        m_step = self.spec.ihm_step - 1
        ihm_steps = [m_step if (p and n > m_step) else -1 for p, n in zip(ihm_present, lengths)]
        if any(s >= 0 for s in ihm_steps):
            out["ihm"] = self.apply_head(Task.IHM, select_steps(h, ihm_steps))
        else:
            out["ihm"] = None
        last = [int(n) - 1 for n in lengths]
        if replicate:
            out["ihm_steps"] = self.apply_head(Task.IHM, h)
            out["pheno_steps"] = self.apply_head(Task.PHENO, h)
            out["pheno"] = select_steps(out["pheno_steps"], last)
        else:
            out["pheno"] = self.apply_head(Task.PHENO, select_steps(h, last))
        out["ihm_index"] = ihm_steps
        return out

    # --- persistence ---

    def save(self, path) -> None:
        save_checkpoint(path, self.spec.to_dict(), self.params)

    @classmethod
    def load(cls, path) -> "LSTMModel":
        header, payload = read_checkpoint(path)
        model = cls(ModelSpec.from_dict(header["spec"]))
        if header["params"] != [[n, list(t.shape)] for n, t in model.params.items()]:
            raise ValueError(f"{path}: parameter layout does not match its ModelSpec")
        model.params.set_flat(payload)
        return model


def save_checkpoint(path, spec: dict, params: ParamStore, extra: dict | None = None) -> None:
    """Text header (JSON, one line) + newline + little-endian float64 payload in declared order."""
    header = {
        "format": "icubench-checkpoint",
        "version": CHECKPOINT_VERSION,
        "spec": spec,
        "params": [[n, list(t.shape)] for n, t in params.items()],
    }
    if extra:
        header.update(extra)
    payload = params.flat().astype("<f8").tobytes()
    header["sha256"] = hashlib.sha256(payload).hexdigest()
    Path(path).write_bytes(json.dumps(header, sort_keys=True).encode() + b"\n" + payload)


def read_checkpoint(path) -> tuple[dict, np.ndarray]:
    raw = Path(path).read_bytes()
    line, _, payload = raw.partition(b"\n")
    header = json.loads(line)
    if header.get("format") != "icubench-checkpoint":
        raise ValueError(f"{path}: not a checkpoint file")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ValueError(f"{path}: payload checksum mismatch")
    return header, np.frombuffer(payload, dtype="<f8").astype(np.float64)
