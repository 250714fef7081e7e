"""Recurrent localizer: forward recurrence, gradients, training loop and
checkpoint format."""

import math

import numpy as np
import pytest

from passivewifi import rnn
from passivewifi.rnn import (LstmConfig, LstmModel, TrainingDivergedError,
                             TrainingSet, fingerprint_window, grad_check,
                             load_model, loss, loss_and_grad, normalize_rssi,
                             save_model, train)


def tiny_config(**kw):
    base = dict(memory_length=3, hidden_layers=1, neurons_per_layer=4,
                dropout=0.0)
    base.update(kw)
    return LstmConfig(**base)


def reference_forward(model, window):
    """Scalar-ordered re-derivation of the stacked recurrence: z = Wx+Uh+b,
    gates (i, f, g, o) stacked in that row order, c = f*c + i*g, h = o*tanh(c),
    linear head shared across steps."""
    cfg = model.config
    hd = cfg.neurons_per_layer
    seq = [np.asarray(r, dtype=float) for r in window]
    for layer in range(cfg.hidden_layers):
        w = model.params[f"lstm{layer}.W"]
        u = model.params[f"lstm{layer}.U"]
        b = model.params[f"lstm{layer}.b"]
        h = np.zeros(hd)
        c = np.zeros(hd)
        outs = []
        for x in seq:
            z = w @ x + u @ h + b
            i = 1.0 / (1.0 + np.exp(-z[:hd]))
            f = 1.0 / (1.0 + np.exp(-z[hd:2 * hd]))
            g = np.tanh(z[2 * hd:3 * hd])
            o = 1.0 / (1.0 + np.exp(-z[3 * hd:]))
            c = f * c + i * g
            h = o * np.tanh(c)
            outs.append(h)
        seq = outs
    wo, bo = model.params["out.W"], model.params["out.b"]
    return np.stack([wo @ h + bo for h in seq])


def random_set(rng, n_seq=6, t=3, n=4):
    seqs = tuple((rng.uniform(0, 1, (t, n)), rng.uniform(0, 10, (t, 2)))
                 for _ in range(n_seq))
    return TrainingSet(seqs)


# --- config / set validation -------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        tiny_config(dropout=1.0)
    with pytest.raises(ValueError):
        tiny_config(dropout=-0.1)
    with pytest.raises(ValueError):
        tiny_config(hidden_layers=0)
    with pytest.raises(ValueError):
        tiny_config(optimizer="sgd")
    with pytest.raises(ValueError):
        tiny_config(loss="mae")
    with pytest.raises(ValueError):
        tiny_config(learning_rate=0.0)


def test_training_set_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        TrainingSet(())
    x = rng.uniform(size=(3, 4))
    with pytest.raises(ValueError):
        TrainingSet(((x, rng.uniform(size=(2, 2))),))  # T mismatch
    with pytest.raises(ValueError):
        TrainingSet(((x, rng.uniform(size=(3, 3))),))  # not (x, y) pairs
    data = random_set(rng)
    assert data.window_length == 3
    assert data.input_size == 4
    xs, ys = data.stacked()
    assert xs.shape == (6, 3, 4) and ys.shape == (6, 3, 2)


# --- input encoding ----------------------------------------------------------

def test_normalize_rssi():
    assert normalize_rssi(None) == 0.0
    assert normalize_rssi(-100.0) == 0.0
    assert normalize_rssi(0.0) == 1.0
    assert normalize_rssi(-50.0) == 0.5
    assert normalize_rssi(-130.0) == 0.0  # clamped
    assert normalize_rssi(5.0) == 1.0


def test_fingerprint_window_layout():
    obs = [{"ap1": -40.0, "ap2": -80.0},
           {"ap2": -60.0},
           {}]
    win = fingerprint_window(obs, ["ap1", "ap2"])
    np.testing.assert_allclose(win, [[0.6, 0.2], [0.0, 0.4], [0.0, 0.0]],
                               rtol=0, atol=1e-15)


# --- forward -----------------------------------------------------------------

def test_forward_matches_recurrence_oracle():
    rng = np.random.default_rng(1)
    for layers in (1, 2, 3):
        cfg = tiny_config(hidden_layers=layers, neurons_per_layer=5,
                          memory_length=4)
        model = LstmModel.initialized(cfg, 3, seed=int(rng.integers(1000)))
        for trial in range(10):
            window = rng.uniform(-1, 1, (4, 3))
            got = model.forward(window)
            want = reference_forward(model, window)
            assert got.shape == (4, 2)
            np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_forward_validation():
    model = LstmModel.initialized(tiny_config(), 3, seed=0)
    with pytest.raises(ValueError):
        model.forward(np.zeros((3, 5)))  # wrong feature count
    with pytest.raises(ValueError):
        model.forward(np.zeros(3))


def test_initialized_structure():
    cfg = tiny_config(hidden_layers=2, neurons_per_layer=6)
    model = LstmModel.initialized(cfg, 5, seed=3, target_mean=(2.5, 7.0))
    assert model.parameter_count() == rnn.closed_form_parameter_count(cfg, 5)
    for layer in (0, 1):
        b = model.params[f"lstm{layer}.b"]
        assert (b[6:12] == 1.0).all()  # forget gates start open
        assert (b[:6] == 0.0).all() and (b[12:] == 0.0).all()
    np.testing.assert_array_equal(model.params["out.b"], [2.5, 7.0])
    assert model.params["lstm0.W"].shape == (24, 5)
    assert model.params["lstm1.W"].shape == (24, 6)
    assert model.params["lstm1.U"].shape == (24, 6)


def test_parameter_count_closed_form():
    # 4H(N + H + 1) per layer plus the 2(H + 1) head
    cfg = tiny_config(hidden_layers=2, neurons_per_layer=7)
    want = 4 * 7 * (3 + 7 + 1) + 4 * 7 * (7 + 7 + 1) + 2 * (7 + 1)
    assert rnn.closed_form_parameter_count(cfg, 3) == want
    assert LstmModel.initialized(cfg, 3).parameter_count() == want


# --- loss --------------------------------------------------------------------

def test_loss_closed_form_and_validation():
    pred = np.array([[1.0, 0.0], [0.0, 0.0]])
    target = np.zeros((2, 2))
    assert abs(loss(pred, target) - math.sqrt(0.25)) < 1e-15
    assert loss(target, target) == 0.0
    with pytest.raises(ValueError):
        loss(np.zeros((2, 2)), np.zeros((3, 2)))


def test_loss_grad_finite_difference():
    rng = np.random.default_rng(2)
    pred = rng.normal(size=(2, 3, 2))
    target = rng.normal(size=(2, 3, 2))
    value, grad = loss_and_grad(pred, target)
    step = 1e-6
    for idx in np.ndindex(pred.shape):
        p = pred.copy()
        p[idx] += step
        up, _ = loss_and_grad(p, target)
        p[idx] -= 2 * step
        down, _ = loss_and_grad(p, target)
        fd = (up - down) / (2 * step)
        assert abs(grad[idx] - fd) < 1e-8
    v0, g0 = loss_and_grad(target, target)
    assert v0 == 0.0 and (g0 == 0.0).all()


def test_batched_loss_matches_per_window_forward():
    rng = np.random.default_rng(3)
    cfg = tiny_config(hidden_layers=2, neurons_per_layer=5)
    model = LstmModel.initialized(cfg, 4, seed=9)
    xs = rng.uniform(0, 1, (6, 3, 4))
    ys = rng.uniform(0, 10, (6, 3, 2))
    value, _ = model.loss_and_gradients(xs, ys)
    preds = np.stack([model.forward(x) for x in xs])
    assert abs(value - loss(preds, ys)) < 1e-12


# --- gradient checks ---------------------------------------------------------

def grad_instance(seed, layers):
    cfg = LstmConfig(memory_length=3, hidden_layers=layers,
                     neurons_per_layer=4, dropout=0.0)
    rng = np.random.default_rng(seed + 1000)
    window = rng.uniform(0.0, 1.0, size=(3, 3))
    target = rng.uniform(0.0, 10.0, size=(3, rnn.OUTPUT_DIM))
    model = LstmModel.initialized(cfg, 3, seed=seed)
    return model, window, target


def test_grad_check_one_layer():
    model, window, target = grad_instance(5, 1)
    worst, name = grad_check(model, window, target, step=1e-5)
    assert worst < 1e-4, f"worst {worst:.3e} at {name}"


def test_grad_check_two_layer():
    model, window, target = grad_instance(7, 2)
    worst, name = grad_check(model, window, target, step=1e-5)
    assert worst < 1e-4, f"worst {worst:.3e} at {name}"


def test_grad_check_step_sweep():
    # truncation error shrinks with the step until float cancellation
    # takes over; a correct analytic gradient tracks that whole curve
    model, window, target = grad_instance(7, 2)
    errs = [grad_check(model, window, target, step=s)[0]
            for s in (1e-2, 1e-3)]
    assert errs[1] < errs[0]
    assert errs[1] < 1e-4


def test_grad_check_catches_broken_gradient():
    # sanity on the checker itself: a corrupted analytic gradient must
    # show up as a large relative error, not slip under the threshold
    class Corrupted(LstmModel):
        def loss_and_gradients(self, xs, ys, masks=None):
            value, grads = super().loss_and_gradients(xs, ys, masks)
            grads["out.W"] = grads["out.W"] * 1.5
            return value, grads

    model, window, target = grad_instance(5, 1)
    broken = Corrupted(model.config, model.input_size,
                       {k: v.copy() for k, v in model.params.items()})
    worst, name = grad_check(broken, window, target, step=1e-5)
    assert worst > 0.1
    assert name.startswith("out.W")


# --- training ----------------------------------------------------------------

def test_training_memorizes_small_set():
    rng = np.random.default_rng(4)
    targets = [np.tile([2.0, 3.0], (3, 1)), np.tile([8.0, 1.0], (3, 1)),
               np.tile([5.0, 9.0], (3, 1))]
    seqs = tuple((np.tile(rng.uniform(0, 1, 4), (3, 1)), y)
                 for y in targets)
    data = TrainingSet(seqs)
    cfg = tiny_config(neurons_per_layer=16, learning_rate=0.02)
    model, trace = train(cfg, data, epochs=400, seed=1)
    assert trace[-1] < 0.25 * trace[0]
    for (x, y) in seqs:
        pred = model.forward(x)[-1]
        assert np.hypot(*(pred - y[-1])) < 1.0


def test_training_trace_reproducible():
    rng = np.random.default_rng(5)
    data = random_set(rng, n_seq=8)
    cfg = tiny_config(hidden_layers=2, neurons_per_layer=6, dropout=0.2)
    model_a, trace_a = train(cfg, data, epochs=5, seed=11, batch_size=4)
    model_b, trace_b = train(cfg, data, epochs=5, seed=11, batch_size=4)
    np.testing.assert_array_equal(np.asarray(trace_a), np.asarray(trace_b))
    for k in model_a.params:
        np.testing.assert_array_equal(model_a.params[k], model_b.params[k])
    _, trace_c = train(cfg, data, epochs=5, seed=12, batch_size=4)
    assert not np.array_equal(np.asarray(trace_a), np.asarray(trace_c))


def test_training_validation_and_divergence():
    rng = np.random.default_rng(6)
    data = random_set(rng)
    with pytest.raises(ValueError):
        train(tiny_config(), data, epochs=0)
    with pytest.raises(ValueError):
        train(tiny_config(memory_length=5), data, epochs=1)
    bad = TrainingSet(((np.full((3, 4), np.nan), np.zeros((3, 2))),))
    with pytest.raises(TrainingDivergedError):
        train(tiny_config(), bad, epochs=1)


def test_training_loss_decreases_on_random_regression():
    rng = np.random.default_rng(7)
    data = random_set(rng, n_seq=16)
    cfg = tiny_config(neurons_per_layer=8, learning_rate=0.01)
    _, trace = train(cfg, data, epochs=60, seed=2, batch_size=8)
    assert trace[-1] < trace[0]


# --- checkpoints -------------------------------------------------------------

def test_checkpoint_round_trip_exact(tmp_path):
    rng = np.random.default_rng(8)
    data = random_set(rng)
    cfg = tiny_config(hidden_layers=2, neurons_per_layer=5, dropout=0.2)
    model, _ = train(cfg, data, epochs=2, seed=3)
    path = tmp_path / "model.txt"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.config == model.config
    assert loaded.input_size == model.input_size
    assert sorted(loaded.params) == sorted(model.params)
    for k in model.params:
        np.testing.assert_array_equal(loaded.params[k], model.params[k])
    window = rng.uniform(0, 1, (3, 4))
    np.testing.assert_array_equal(loaded.forward(window),
                                  model.forward(window))
    save_model(loaded, tmp_path / "again.txt")
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_unknown_format(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("format = something-else\n")
    with pytest.raises(ValueError):
        load_model(path)
