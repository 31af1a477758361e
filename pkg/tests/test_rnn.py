import numpy as np
import pytest

from icubench import ndiff as nd
from icubench.core import N_INPUT_DIMS, N_LOS_BUCKETS, N_PHENOTYPES, Task, load_variable_config
from icubench.discretizer import ChannelLayout
from icubench.ndiff import Tensor, gradcheck, precision
from icubench.rnn import Arch, ContractError, LSTMLayer, LSTMModel, ModelSpec, ParamStore, bilstm_forward
from icubench.train import LossSpec, loss

WIDTHS = ChannelLayout(tuple(load_variable_config())).channel_widths


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def _layer(D, H, seed=0, gate_bias=False):
    store = ParamStore()
    return store, LSTMLayer(store, "l", D, H, np.random.default_rng(seed), gate_bias)


def test_zero_parameters_give_zero_state():
    with precision(np.float64):
        store, layer = _layer(3, 4)
        store.fill(0.0)
        h = layer.forward(Tensor(np.random.default_rng(0).normal(size=(5, 2, 3)))).data
    assert np.all(h == 0.0)


def test_single_step_matches_hand_cell():
    with precision(np.float64):
        store, layer = _layer(2, 2)
        vals = {
            "W_xi": [[0.1, 0.2], [0.3, 0.4]], "W_xf": [[0.5, -0.1], [0.0, 0.2]],
            "W_xc": [[-0.3, 0.6], [0.2, 0.1]], "W_xo": [[0.4, 0.4], [-0.2, 0.3]],
            "b_c": [0.1, -0.1], "b_o": [0.0, 0.2],
        }
        for name, t in store.items():
            short = name.split(".")[1]
            t.data = np.array(vals.get(short, np.zeros(t.shape)), dtype=float)
        x = np.array([[1.0, -1.0]])
        h = layer.forward(Tensor(x[None])).data[0]
    i = _sigmoid(x @ np.array(vals["W_xi"]))
    g = np.tanh(x @ np.array(vals["W_xc"]) + vals["b_c"])
    o = _sigmoid(x @ np.array(vals["W_xo"]) + vals["b_o"])
    # c_0 = 0 so the forget gate drops out of the first step
    expected = o * np.tanh(i * g)
    assert np.allclose(h, expected, atol=1e-15)


def test_lstm_layer_gradients():
    rng = np.random.default_rng(1)
    with precision(np.float64):
        store, layer = _layer(3, 4, seed=1)
        x = Tensor(rng.normal(size=(3, 2, 3)))
        w = Tensor(rng.normal(size=(3, 2, 4)))
        errors = gradcheck(lambda: nd.sum(nd.mul(layer.forward(x), w)), store.tensors())
    assert len(errors) == 10
    assert max(errors.values()) < 1e-5, errors


def test_gate_bias_option_adds_two_tensors():
    store, _ = _layer(3, 4, gate_bias=True)
    assert len(store) == 12
    assert "l.b_i" in store and "l.b_f" in store


def test_bidirectional_palindrome_symmetry():
    rng = np.random.default_rng(2)
    with precision(np.float64):
        store = ParamStore()
        fwd = LSTMLayer(store, "f", 3, 4, rng)
        bwd = LSTMLayer(ParamStore(), "b", 3, 4, rng)
        bwd.p = fwd.p
        half = rng.normal(size=(2, 1, 3))
        x = np.concatenate([half, half[::-1]])
        out = bilstm_forward(fwd, bwd, Tensor(x)).data
    assert np.allclose(out[:, :, :4], out[::-1, :, 4:], atol=1e-14)


def test_bidirectional_single_step():
    rng = np.random.default_rng(3)
    with precision(np.float64):
        s = ParamStore()
        fwd, bwd = LSTMLayer(s, "f", 3, 2, rng), LSTMLayer(s, "b", 3, 2, rng)
        x = Tensor(rng.normal(size=(1, 2, 3)))
        out = bilstm_forward(fwd, bwd, x).data
        assert np.allclose(out, np.concatenate([fwd.forward(x).data, bwd.forward(x).data], axis=-1))


def test_bidirectional_gradients_with_padding():
    rng = np.random.default_rng(4)
    with precision(np.float64):
        s = ParamStore()
        fwd, bwd = LSTMLayer(s, "f", 2, 3, rng), LSTMLayer(s, "b", 2, 3, rng)
        x = Tensor(rng.normal(size=(4, 2, 2)))
        w = Tensor(rng.normal(size=(4, 2, 6)))
        errors = gradcheck(lambda: nd.sum(nd.mul(bilstm_forward(fwd, bwd, x, [4, 2]), w)), s.tensors())
    assert max(errors.values()) < 1e-5, errors


def _x(rng, T, B):
    x = rng.normal(size=(T, B, N_INPUT_DIMS))
    x[..., 59:] = rng.random((T, B, 17)) < 0.5
    return x


def test_channel_output_width():
    m = LSTMModel(ModelSpec(arch=Arch.CHANNELWISE, channel_units=2, units=3, channel_widths=WIDTHS))
    assert m.channel_output_width == 68
    u = m.channelwise_forward(m.channel_streams(_x(np.random.default_rng(0), 2, 1)))
    assert u.shape == (2, 1, 68)
    # grouped models keep every layer causal, so each variable gets one direction
    causal = LSTMModel(ModelSpec(arch=Arch.CHANNELWISE, channel_units=2, units=3, channel_widths=WIDTHS,
                                 task=Task.DECOMP, deep_supervision=True))
    assert causal.channel_output_width == 34


def test_channel_streams_put_mask_first():
    m = LSTMModel(ModelSpec(arch=Arch.CHANNELWISE, channel_units=1, units=2, channel_widths=WIDTHS))
    x = _x(np.random.default_rng(5), 3, 2)
    streams = m.channel_streams(x)
    assert [s.shape[-1] for s in streams] == [w + 1 for w in WIDTHS]
    assert np.array_equal(streams[4][..., 0], x[..., 59 + 4])
    assert np.array_equal(streams[0][..., 1:], x[..., :WIDTHS[0]])


def test_zero_channel_params_equal_top_lstm_on_zero_input():
    with precision(np.float64):
        m = LSTMModel(ModelSpec(arch=Arch.CHANNELWISE, channel_units=2, units=3, channel_widths=WIDTHS, task=Task.IHM))
        for name, t in m.params.items():
            if name.startswith("chan"):
                t.data[...] = 0.0
        x = _x(np.random.default_rng(6), 4, 2)
        h = m.encode(x, [4, 4]).data
        top = m.layers[0][0].forward(Tensor(np.zeros((4, 2, 68)))).data
    assert np.allclose(h, top)


def _joint_slope(fn, params, directions, h):
    """Central difference of ``fn`` along one direction spanning several tensors."""
    orig = [p.data.copy() for p in params]
    out = []
    for sign in (1.0, -1.0):
        for p, o, v in zip(params, orig, directions):
            p.data = o + sign * h * v
        out.append(float(fn().data))
    for p, o in zip(params, orig):
        p.data = o
    return (out[0] - out[1]) / (2 * h)


def test_channelwise_gradients():
    rng = np.random.default_rng(7)
    with precision(np.float64):
        m = LSTMModel(ModelSpec(arch=Arch.CHANNELWISE, channel_units=1, units=2, channel_widths=WIDTHS,
                                task=Task.IHM, seed=3))
        x = _x(rng, 3, 2)
        fn = lambda: nd.sum(m.forward(x, [3, 2])["final"])  # noqa: E731
        # every entry of the shared layers and of three channels; one random direction for the rest
        full = [t for n, t in m.params.items() if not n.startswith("chan") or n.split(".")[0] in
                ("chan0", "chan4", "chan16")]
        rest = [t for t in m.params.tensors() if all(t is not f for f in full)]
        errors = gradcheck(fn, full)
        grads = [t.grad.copy() for t in rest]
        for k in range(3):
            vs = [np.random.default_rng(k).normal(size=t.shape) for t in rest]
            norm = np.sqrt(sum(np.sum(v * v) for v in vs))
            vs = [v / norm for v in vs]
            slope = _joint_slope(fn, rest, vs, 1e-5)
            errors[f"joint{k}"] = nd.relative_error(sum(np.sum(g * v) for g, v in zip(grads, vs)), slope)
    assert max(errors.values()) < 1e-5


def test_standard_model_gradients_two_layers_bidirectional():
    rng = np.random.default_rng(8)
    with precision(np.float64):
        m = LSTMModel(ModelSpec(task=Task.PHENO, units=3, layers=2, bidirectional=True, seed=2))
        x = _x(rng, 3, 2)
        w = Tensor(rng.normal(size=(2, N_PHENOTYPES)))
        errors = gradcheck(lambda: nd.sum(nd.mul(m.forward(x, [3, 2])["final"], w)), m.params.tensors(),
                           directional=True)
    assert max(errors.values()) < 1e-5


def test_zero_head_weights():
    for task, check in [(Task.IHM, lambda p: np.allclose(p, 0.5)),
                        (Task.LOS, lambda p: np.allclose(p, 1 / N_LOS_BUCKETS)),
                        (Task.PHENO, lambda p: p.shape[-1] == N_PHENOTYPES and np.allclose(p, 0.5))]:
        m = LSTMModel(ModelSpec(task=task, units=4))
        for name, t in m.params.items():
            if name.startswith("head"):
                t.data[...] = 0.0
        p = m.forward(_x(np.random.default_rng(0), 3, 2), [3, 3])["final"].data
        assert check(p), task
    raw = LSTMModel(ModelSpec(task=Task.LOS, units=4, los_mode="raw"))
    for name, t in raw.params.items():
        if name.startswith("head"):
            t.data[...] = 0.0
    assert np.all(raw.forward(_x(np.random.default_rng(0), 3, 2), [3, 3])["final"].data == 0.0)


def test_deep_supervision_outputs_every_step():
    m = LSTMModel(ModelSpec(task=Task.DECOMP, units=4, deep_supervision=True))
    out = m.forward(_x(np.random.default_rng(0), 5, 3), [5, 2, 4])
    assert out["steps"].shape == (5, 3, 1)
    assert np.allclose(out["final"].data[:, 0], out["steps"].data[[4, 1, 3], [0, 1, 2], 0])


def test_final_prediction_uses_own_length():
    m = LSTMModel(ModelSpec(task=Task.IHM, units=4))
    x = _x(np.random.default_rng(1), 6, 2)
    short = m.forward(x[:3, :1], [3])["final"].data
    padded = m.forward(x, [6, 3])["final"].data
    x2 = x.copy()
    x2[:3, 1] = x[:3, 0]
    assert np.allclose(m.forward(x2, [6, 3])["final"].data[1], short[0], atol=1e-6)
    assert padded.shape == (2, 1)


def test_multitask_short_stay_has_no_ihm():
    m = LSTMModel(ModelSpec(task=None, units=4))
    out = m.multitask_forward(_x(np.random.default_rng(0), 30, 1), [30], [True])
    assert out["ihm"] is None
    assert out["decomp"].shape == (30, 1, 1)
    assert out["los"].shape == (30, 1, N_LOS_BUCKETS)
    assert out["pheno"].shape == (1, N_PHENOTYPES)


def test_multitask_all_zero_params():
    m = LSTMModel(ModelSpec(task=None, units=4, ihm_step=3))
    m.params.fill(0.0)
    out = m.multitask_forward(_x(np.random.default_rng(0), 5, 2), [5, 4], [True, False])
    assert np.allclose(out["decomp"].data, 0.5)
    assert np.allclose(out["pheno"].data, 0.5)
    assert np.allclose(out["los"].data, 0.1)
    assert out["ihm"].shape == (2, 1)
    assert out["ihm_index"] == [2, -1]


def _mt_batch(rng, T=6, B=2):
    decomp_mask = np.ones((T, B))
    decomp_mask[:2] = 0
    decomp_mask[4:, 1] = 0
    return {
        "decomp": (rng.random((T, B)) < 0.3).astype(float), "decomp_mask": decomp_mask,
        "los": rng.uniform(0, 100, (T, B)), "los_bucket": rng.integers(0, 10, (T, B)), "los_mask": decomp_mask.copy(),
        "ihm": np.array([1.0, 0.0]), "ihm_present": np.array([True, True]),
        "pheno": (rng.random((B, N_PHENOTYPES)) < 0.2).astype(float), "pheno_present": np.array([True, True]),
    }


@pytest.mark.parametrize("deep", [False, True])
def test_multitask_gradients(deep):
    rng = np.random.default_rng(9)
    with precision(np.float64):
        m = LSTMModel(ModelSpec(task=None, units=3, ihm_step=4, seed=1))
        x = _x(rng, 6, 2)
        tg = _mt_batch(rng)
        ls = LossSpec(task=None, deep_supervision=deep, lambdas=(1.0, 0.4, 3.0, 1.0))

        def fn():
            pr = m.multitask_forward(x, [6, 5], tg["ihm_present"], replicate=deep)
            return loss(None, pr, tg, ls, [6, 5], 4)

        errors = gradcheck(fn, m.params.tensors())
    assert max(errors.values()) < 1e-5


def test_masked_steps_contribute_no_gradient():
    rng = np.random.default_rng(10)
    with precision(np.float64):
        m = LSTMModel(ModelSpec(task=None, units=3, ihm_step=4))
        x = _x(rng, 6, 2)
        tg = _mt_batch(rng)
        ls = LossSpec(task=None)

        def grads(targets):
            m.params.zero_grad()
            with nd.Tape() as tape:
                pr = m.multitask_forward(x, [6, 5], targets["ihm_present"])
                value = loss(None, pr, targets, ls, [6, 5], 4)
            tape.backward(value, m.params.tensors())
            return {n: t.grad.copy() for n, t in m.params.items()}

        before = grads(tg)
        flipped = dict(tg)
        flipped["decomp"] = np.where(tg["decomp_mask"] > 0, tg["decomp"], 1.0 - tg["decomp"])
        flipped["los_bucket"] = np.where(tg["los_mask"] > 0, tg["los_bucket"], 9 - tg["los_bucket"])
        after = grads(flipped)
    for n in before:
        assert np.array_equal(before[n], after[n]), n


def test_contract_errors():
    with pytest.raises(ContractError):
        ModelSpec(layers=3)
    with pytest.raises(ContractError):
        ModelSpec(task=None, bidirectional=True)
    with pytest.raises(ContractError):
        ModelSpec(task=Task.DECOMP, deep_supervision=True, bidirectional=True)
    with pytest.raises(ContractError):
        LSTMModel(ModelSpec(arch=Arch.CHANNELWISE))
    m = LSTMModel(ModelSpec(task=Task.IHM))
    with pytest.raises(ContractError):
        m.multitask_forward(np.zeros((2, 1, 76)), [2], [False])
    with pytest.raises(nd.ShapeError):
        m.forward(np.zeros((2, 1, 75)), [2])


def test_checkpoint_round_trip(tmp_path):
    m = LSTMModel(ModelSpec(task=Task.LOS, units=5, seed=4))
    m.save(tmp_path / "m.bin")
    again = LSTMModel.load(tmp_path / "m.bin")
    assert again.spec == m.spec
    assert np.array_equal(again.params.flat(), m.params.flat())
    x = _x(np.random.default_rng(0), 3, 2)
    assert np.array_equal(again.forward(x, [3, 3])["final"].data, m.forward(x, [3, 3])["final"].data)
    m.save(tmp_path / "n.bin")
    assert (tmp_path / "m.bin").read_bytes() == (tmp_path / "n.bin").read_bytes()


def test_corrupted_checkpoint_rejected(tmp_path):
    m = LSTMModel(ModelSpec(task=Task.IHM, units=2))
    m.save(tmp_path / "m.bin")
    raw = bytearray((tmp_path / "m.bin").read_bytes())
    raw[-1] ^= 0xFF
    (tmp_path / "m.bin").write_bytes(bytes(raw))
    with pytest.raises(ValueError, match="checksum"):
        LSTMModel.load(tmp_path / "m.bin")


def test_same_seed_same_init():
    a = LSTMModel(ModelSpec(task=Task.IHM, seed=11)).params.flat()
    b = LSTMModel(ModelSpec(task=Task.IHM, seed=11)).params.flat()
    c = LSTMModel(ModelSpec(task=Task.IHM, seed=12)).params.flat()
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
