import numpy as np
import pytest

from icubench.featlin import (
    NonFiniteError,
    extract_features,
    feature_names,
    fit_feature_scaler,
    load_linear,
    objective,
    predict_linear,
    save_linear,
    smooth_objective,
    summary_stats,
    train_linear,
    LinearModel,
)

from conftest import make_episode, random_episode


def test_summary_stats_hand_case():
    assert summary_stats(np.array([1.0, 2.0, 3.0])).tolist() == [1, 3, 2, 1, 0, 3]


def test_summary_stats_degenerate():
    assert summary_stats(np.array([4.5])).tolist() == [4.5, 4.5, 4.5, 0, 0, 1]
    assert summary_stats(np.array([])).tolist() == [0] * 6
    assert summary_stats(np.array([2.0, 2.0, 2.0]))[4] == 0.0


def test_skew_sign():
    assert summary_stats(np.array([0.0, 0.0, 0.0, 10.0]))[4] > 0


def test_feature_count_and_names(specs):
    rng = np.random.default_rng(0)
    x = extract_features(random_episode(rng, specs, n_events=200), 30.0, specs)
    assert x.shape == (714,)
    names = feature_names(specs)
    assert len(names) == len(set(names)) == 714
    assert names[0] == f"{specs[0].name}:full:min"


def test_full_window_hand_case(specs):
    hr = next(s.id for s in specs if s.name == "heart_rate")
    ep = make_episode([0.0, 1.0, 2.0], [hr] * 3, [1.0, 2.0, 3.0], los=3)
    x = extract_features(ep, 3.0, specs).reshape(17, 7, 6)
    assert x[hr, 0].tolist() == [1, 3, 2, 1, 0, 3]
    # first 10% of a 3h window is [0, 0.3): only the first value
    assert x[hr, 1].tolist() == [1, 1, 1, 0, 0, 1]
    # last 50% is [1.5, 3): only the last value
    assert x[hr, 4].tolist() == [3, 3, 3, 0, 0, 1]
    others = [i for i in range(17) if i != hr]
    assert np.all(x[others] == 0)


def test_window_excludes_later_events(specs):
    ep = random_episode(np.random.default_rng(1), specs, n_events=100, horizon=40.0)
    assert np.array_equal(extract_features(ep, 20.0, specs), extract_features(ep.window(20.0), 20.0, specs))


def test_objective_gradient_matches_finite_differences():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 5))
    for kind, y, k in [("binary", rng.integers(0, 2, 30).astype(float), 1),
                       ("multiclass", rng.integers(0, 4, 30), 4)]:
        W, b = rng.normal(size=(5, k)), rng.normal(size=k)
        _, gW, gb = smooth_objective(W, b, X, y, kind, "l2", 0.7)
        num = np.zeros_like(W)
        h = 1e-6
        for idx in np.ndindex(W.shape):
            Wp, Wm = W.copy(), W.copy()
            Wp[idx] += h
            Wm[idx] -= h
            num[idx] = (smooth_objective(Wp, b, X, y, kind, "l2", 0.7)[0]
                        - smooth_objective(Wm, b, X, y, kind, "l2", 0.7)[0]) / (2 * h)
        assert np.max(np.abs(gW - num) / np.maximum(np.abs(num), 1e-4)) < 1e-6
        numb = np.array([(smooth_objective(W, b + h * e, X, y, kind, "l2", 0.7)[0]
                          - smooth_objective(W, b - h * e, X, y, kind, "l2", 0.7)[0]) / (2 * h) for e in np.eye(k)])
        assert np.max(np.abs(gb - numb)) < 1e-7


def _separable(rng, n=60):
    """Two clusters either side of x0 + x1 = 0 with a gap of at least 2."""
    y = (np.arange(n) % 2).astype(float)
    along = (1.0 + rng.exponential(1.0, n)) * np.where(y == 1, 1.0, -1.0)
    across = rng.normal(size=n)
    X = np.column_stack([along + across, along - across]) / np.sqrt(2)
    return X, y


@pytest.mark.parametrize("reg, C", [("l2", 1.0), ("l1", 10.0)])
def test_separable_toy_set(reg, C):
    X, y = _separable(np.random.default_rng(3))
    m = train_linear(X, y, reg, C)
    assert np.mean((predict_linear(m, X) > 0.5) == y) == 1.0


def test_strong_penalty_gives_base_rate():
    X, y = _separable(np.random.default_rng(4), 80)
    y[:10] = 1
    m = train_linear(X, y, "l2", 1e-6)
    assert np.max(np.abs(m.weights)) < 1e-4
    assert np.allclose(predict_linear(m, X), y.mean(), atol=1e-3)
    sparse = train_linear(X, y, "l1", 1e-3)
    assert np.all(sparse.weights == 0)


def test_l1_solution_is_optimal_along_coordinates():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(100, 6))
    y = (X[:, 0] - 0.5 * X[:, 2] + rng.normal(size=100) > 0).astype(float)
    m = train_linear(X, y, "l1", 0.5, tol=1e-9)
    f0 = objective(m.weights, m.bias, X, y, "binary", "l1", 0.5)
    for idx in np.ndindex(m.weights.shape):
        for d in (1e-4, -1e-4):
            W = m.weights.copy()
            W[idx] += d
            assert objective(W, m.bias, X, y, "binary", "l1", 0.5) >= f0 - 1e-10


def test_multiclass_and_multilabel():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(120, 3))
    yc = np.digitize(X[:, 0], [-1, 0, 1])
    m = train_linear(X, yc, "l2", 1000.0, "multiclass")
    P = predict_linear(m, X)
    assert P.shape == (120, 10)
    assert np.allclose(P.sum(axis=1), 1)
    assert np.mean(P.argmax(axis=1) == yc) > 0.9
    Y = np.column_stack([X[:, 0] > 0, X[:, 1] > 0]).astype(float)
    ml = train_linear(X, Y, "l2", 1.0, "multilabel")
    assert predict_linear(ml, X).shape == (120, 2)


def test_zero_model_predictions():
    binary = LinearModel(np.zeros((4, 1)), np.zeros(1), "binary", "l2", 1.0)
    assert np.all(predict_linear(binary, np.ones((3, 4))) == 0.5)
    multi = LinearModel(np.zeros((4, 10)), np.zeros(10), "multiclass", "l2", 1.0)
    assert np.allclose(predict_linear(multi, np.ones((3, 4))), 0.1)


def test_monotone_in_positive_weight():
    m = LinearModel(np.array([[0.5], [-1.0]]), np.zeros(1), "binary", "l2", 1.0)
    lo, hi = predict_linear(m, np.array([[0.0, 1.0], [2.0, 1.0]]))
    assert hi > lo


def test_non_finite_features_rejected():
    X = np.ones((3, 2))
    X[1, 1] = np.nan
    with pytest.raises(NonFiniteError, match="row 1, column 1"):
        train_linear(X, np.array([0, 1, 0]))


def test_bad_arguments():
    X, y = _separable(np.random.default_rng(7))
    with pytest.raises(ValueError):
        train_linear(X, y, "l3")
    with pytest.raises(ValueError):
        train_linear(X, y, C=0)
    m = train_linear(X, y)
    with pytest.raises(ValueError):
        predict_linear(m, np.ones((2, 3)))


def test_linear_model_round_trip(tmp_path):
    X, y = _separable(np.random.default_rng(8))
    m = train_linear(X, y, "l1", 2.0)
    save_linear(m, tmp_path / "m.bin")
    again = load_linear(tmp_path / "m.bin")
    assert np.array_equal(again.weights, m.weights) and np.array_equal(again.bias, m.bias)
    assert (again.kind, again.reg, again.C) == ("binary", "l1", 2.0)


def test_training_is_deterministic():
    X, y = _separable(np.random.default_rng(9))
    a, b = train_linear(X, y), train_linear(X, y)
    assert np.array_equal(a.weights, b.weights)


def test_feature_scaler_constant_column():
    X = np.column_stack([np.arange(5.0), np.full(5, 3.0)])
    sc = fit_feature_scaler(X)
    Z = sc.apply(X)
    assert np.allclose(Z[:, 0].mean(), 0) and np.allclose(Z[:, 0].std(), 1)
    assert np.all(Z[:, 1] == 0)
