import numpy as np
import pytest

from cagru.data import Windows
from cagru.errors import DataError, ParseError
from cagru.forecaster import ForecastModel, ModelConfig
from cagru.metrics import auc_score
from cagru.training import Adam, fit, load_checkpoint, save_checkpoint


def _windows(n, L=5, seed=0):
    """Toy task: the label is the sign of the last day's first feature."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, L, 2))
    y = (X[:, -1, 0] > 0).astype(np.int64)
    return Windows(X, y, np.array([f"c{i}" for i in range(n)]), np.full(n, L - 1))


CFG = ModelConfig(d=4, w=6, L=5, batch_size=16, max_epochs=50, patience=5, learning_rate=1e-2, seed=2)


def test_adam_first_step_is_signed_lr():
    params = {"a": np.array([1.0, -2.0, 0.5])}
    opt = Adam(params, lr=0.1)
    opt.step(params, {"a": np.array([0.3, -4.0, 0.0])})
    # bias-corrected m/sqrt(v) is g/|g| on the first step
    np.testing.assert_allclose(params["a"], [0.9, -1.9, 0.5], atol=1e-7)


def test_adam_two_steps_hand_computed():
    params = {"a": np.array([0.0])}
    opt = Adam(params, lr=1.0, eps=0.0)
    opt.step(params, {"a": np.array([1.0])})
    opt.step(params, {"a": np.array([3.0])})
    m = 0.9 * 0.1 * 1.0 + 0.1 * 3.0
    v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0
    step2 = (m / (1 - 0.9 ** 2)) / np.sqrt(v / (1 - 0.999 ** 2))
    assert params["a"][0] == pytest.approx(-1.0 - step2, abs=1e-12)


def test_separable_toy_task_learns():
    train, val = _windows(400, seed=0), _windows(200, seed=1)
    model, trace = fit(train, val, CFG)
    assert auc_score(train.labels, model.forward(train.inputs)) > 0.95
    assert len(trace.epochs) <= 50
    assert 1 <= trace.best_epoch <= len(trace.epochs)


def test_patience_zero_runs_one_epoch():
    from dataclasses import replace
    _, trace = fit(_windows(64), _windows(32, seed=5), replace(CFG, patience=0))
    assert len(trace.epochs) == 1


def test_same_seed_same_parameters():
    from dataclasses import replace
    cfg = replace(CFG, max_epochs=3)
    a, _ = fit(_windows(80), _windows(40, seed=3), cfg)
    b, _ = fit(_windows(80), _windows(40, seed=3), cfg)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k], b.params[k])


def test_returns_best_epoch_parameters():
    from dataclasses import replace
    val = _windows(60, seed=9)
    model, trace = fit(_windows(120), val, replace(CFG, max_epochs=8, patience=8))
    best = max(e["val_score"] for e in trace.epochs)
    assert auc_score(val.labels, model.forward(val.inputs)) == pytest.approx(best, abs=1e-12)


def test_without_validation_runs_every_epoch():
    from dataclasses import replace
    _, trace = fit(_windows(40), None, replace(CFG, max_epochs=4))
    assert len(trace.epochs) == 4 and trace.best_epoch == 4


def test_empty_training_set():
    empty = _windows(10).subset(np.zeros(10, bool))
    with pytest.raises(DataError):
        fit(empty, None, CFG)


def test_checkpoint_round_trip_bit_exact(tmp_path, rng):
    model = ForecastModel(ModelConfig(d=4, w=3, L=5, value_projection=True), 2)
    for v in model.params.values():
        v[...] = rng.normal(size=v.shape) * 1e-3 + np.pi
    save_checkpoint(model, tmp_path / "m.npz")
    loaded = load_checkpoint(tmp_path / "m.npz")
    assert loaded.config == model.config
    for k, v in model.params.items():
        assert loaded.params[k].tobytes() == v.tobytes()
    X = rng.normal(size=(3, 5, 2))
    assert loaded.forward(X).tobytes() == model.forward(X).tobytes()


def test_checkpoint_rejects_foreign_file(tmp_path):
    np.savez(tmp_path / "x.npz", header=np.array('{"format": "other"}'))
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "x.npz")
