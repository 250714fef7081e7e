"""Recurrent trajectory localizer.

A stacked LSTM consumes a window of T consecutive fingerprint vectors
and emits a location estimate at every step.  Forward, backward
(through time) and the Adam step are written out in numpy so the
gradients can be checked against central finite differences, which is
the module's correctness gate.  Dropout sits between stacked layers
only; inference never drops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import RSSI_MIN_DBM

OUTPUT_DIM = 2  # (x, y) meters


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; usually the learning rate is too high."""


@dataclass(frozen=True)
class LstmConfig:
    memory_length: int = 10
    hidden_layers: int = 2
    neurons_per_layer: int = 100
    dropout: float = 0.2
    optimizer: str = "adam"
    learning_rate: float = 0.001
    loss: str = "rmse"

    def __post_init__(self):
        if self.memory_length < 1 or self.hidden_layers < 1 \
                or self.neurons_per_layer < 1:
            raise ValueError("counts must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.optimizer != "adam":
            raise ValueError("only the adam optimizer is implemented")
        if self.loss != "rmse":
            raise ValueError("only the rmse loss is implemented")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


# desk-scale default: small enough to train in a test run
DESK_CONFIG = LstmConfig(neurons_per_layer=32)


@dataclass(frozen=True)
class TrainingSet:
    """Pairs of (T x N fingerprint window, T x 2 target track)."""

    sequences: tuple  # ((X, Y), ...)

    def __post_init__(self):
        if not self.sequences:
            raise ValueError("training set is empty")
        t, n = self.sequences[0][0].shape
        for x, y in self.sequences:
            if x.shape != (t, n) or y.shape != (t, OUTPUT_DIM):
                raise ValueError("inconsistent sequence shapes")

    @property
    def window_length(self) -> int:
        return self.sequences[0][0].shape[0]

    @property
    def input_size(self) -> int:
        return self.sequences[0][0].shape[1]

    def stacked(self):
        xs = np.stack([x for x, _ in self.sequences])
        ys = np.stack([y for _, y in self.sequences])
        return xs, ys


def normalize_rssi(value) -> float:
    """Map dBm in [-100, 0] to [0, 1]; missing (None) maps to 0."""
    if value is None:
        return 0.0
    return min(max((float(value) - RSSI_MIN_DBM) / -RSSI_MIN_DBM, 0.0), 1.0)


def fingerprint_window(observations, ap_ids) -> np.ndarray:
    """Stack per-window observation dicts (ap_id -> dBm) into the
    normalized T x N input matrix."""
    out = np.zeros((len(observations), len(ap_ids)))
    for t, obs in enumerate(observations):
        for j, ap in enumerate(ap_ids):
            out[t, j] = normalize_rssi(obs.get(ap))
    return out


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LstmModel:
    """Stacked LSTM with a linear head shared across time steps.

    Parameters live in a flat dict: per layer l, ``lstm{l}.W`` (4H x N_in),
    ``lstm{l}.U`` (4H x H) and ``lstm{l}.b`` (4H) with gate row order
    input, forget, cell, output; plus ``out.W`` (2 x H) and ``out.b`` (2).
    """

    def __init__(self, config: LstmConfig, input_size: int, params: dict):
        self.config = config
        self.input_size = input_size
        self.params = params

    # -- construction ---------------------------------------------------

    @classmethod
    def initialized(cls, config: LstmConfig, input_size: int, seed: int = 0,
                    target_mean=None) -> "LstmModel":
        rng = np.random.default_rng(seed)
        h = config.neurons_per_layer
        params = {}
        n_in = input_size
        for layer in range(config.hidden_layers):
            sw = 1.0 / math.sqrt(n_in)
            su = 1.0 / math.sqrt(h)
            params[f"lstm{layer}.W"] = rng.uniform(-sw, sw, (4 * h, n_in))
            params[f"lstm{layer}.U"] = rng.uniform(-su, su, (4 * h, h))
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0  # open forget gates at the start of training
            params[f"lstm{layer}.b"] = b
            n_in = h
        params["out.W"] = rng.uniform(-1.0 / math.sqrt(h), 1.0 / math.sqrt(h),
                                      (OUTPUT_DIM, h))
        params["out.b"] = (np.zeros(OUTPUT_DIM) if target_mean is None
                           else np.asarray(target_mean, dtype=float).copy())
        return cls(config, input_size, params)

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    # -- forward ---------------------------------------------------------

    def _forward(self, xs: np.ndarray, masks=None):
        """xs is (B, T, N); masks is the per-boundary dropout list or None.
        Returns (outputs (B, T, 2), cache for backward)."""
        cfg = self.config
        b_sz, t_len, n_in = xs.shape
        if n_in != self.input_size:
            raise ValueError(f"window has {n_in} features, model expects "
                             f"{self.input_size}")
        h_dim = cfg.neurons_per_layer
        layer_in = xs
        cache = {"xs": xs, "layers": [], "masks": masks}
        for layer in range(cfg.hidden_layers):
            w = self.params[f"lstm{layer}.W"]
            u = self.params[f"lstm{layer}.U"]
            bias = self.params[f"lstm{layer}.b"]
            h = np.zeros((b_sz, h_dim))
            c = np.zeros((b_sz, h_dim))
            steps = []
            hs = np.empty((b_sz, t_len, h_dim))
            for t in range(t_len):
                x_t = layer_in[:, t, :]
                z = x_t @ w.T + h @ u.T + bias
                i = _sigmoid(z[:, :h_dim])
                f = _sigmoid(z[:, h_dim:2 * h_dim])
                g = np.tanh(z[:, 2 * h_dim:3 * h_dim])
                o = _sigmoid(z[:, 3 * h_dim:])
                c_prev = c
                c = f * c_prev + i * g
                tc = np.tanh(c)
                h = o * tc
                hs[:, t, :] = h
                steps.append((x_t, i, f, g, o, c_prev, c, tc))
            cache["layers"].append({"in": layer_in, "steps": steps, "hs": hs})
            layer_in = hs
            if masks is not None and layer < cfg.hidden_layers - 1:
                layer_in = layer_in * masks[layer][:, None, :]
                cache["layers"][-1]["dropped"] = layer_in
        w_out = self.params["out.W"]
        outputs = layer_in @ w_out.T + self.params["out.b"]
        cache["head_in"] = layer_in
        return outputs, cache

    def forward(self, window: np.ndarray) -> np.ndarray:
        """Inference on one T x N window; deterministic, dropout off."""
        window = np.asarray(window, dtype=np.float64)
        if window.ndim != 2:
            raise ValueError("window must be a T x N matrix")
        out, _ = self._forward(window[None, :, :])
        return out[0]

    # -- loss and gradients ----------------------------------------------

    def loss_and_gradients(self, xs, ys, masks=None):
        """Pooled RMSE over every coordinate of every sequence in the
        batch, and d(loss)/d(param) via backpropagation through time."""
        outputs, cache = self._forward(xs, masks)
        value, d_out = loss_and_grad(outputs, ys)
        grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        cfg = self.config
        h_dim = cfg.neurons_per_layer
        b_sz, t_len, _ = xs.shape

        head_in = cache["head_in"]
        grads["out.W"] += np.einsum("btk,bth->kh", d_out, head_in)
        grads["out.b"] += d_out.sum(axis=(0, 1))
        d_layer_out = np.einsum("btk,kh->bth", d_out, self.params["out.W"])

        for layer in range(cfg.hidden_layers - 1, -1, -1):
            if masks is not None and layer < cfg.hidden_layers - 1:
                d_layer_out = d_layer_out * cache["masks"][layer][:, None, :]
            lc = cache["layers"][layer]
            w = self.params[f"lstm{layer}.W"]
            u = self.params[f"lstm{layer}.U"]
            d_w = grads[f"lstm{layer}.W"]
            d_u = grads[f"lstm{layer}.U"]
            d_b = grads[f"lstm{layer}.b"]
            d_in = np.zeros_like(lc["in"])
            d_h_next = np.zeros((b_sz, h_dim))
            d_c_next = np.zeros((b_sz, h_dim))
            for t in range(t_len - 1, -1, -1):
                x_t, i, f, g, o, c_prev, c, tc = lc["steps"][t]
                d_h = d_layer_out[:, t, :] + d_h_next
                d_o = d_h * tc
                d_c = d_h * o * (1.0 - tc * tc) + d_c_next
                d_i = d_c * g
                d_f = d_c * c_prev
                d_g = d_c * i
                d_c_next = d_c * f
                d_z = np.concatenate([
                    d_i * i * (1.0 - i),
                    d_f * f * (1.0 - f),
                    d_g * (1.0 - g * g),
                    d_o * o * (1.0 - o),
                ], axis=1)
                d_w += d_z.T @ x_t
                h_prev = lc["hs"][:, t - 1, :] if t > 0 \
                    else np.zeros((b_sz, h_dim))
                d_u += d_z.T @ h_prev
                d_b += d_z.sum(axis=0)
                d_in[:, t, :] = d_z @ w
                d_h_next = d_z @ u
            d_layer_out = d_in
        return value, grads


def loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Root mean squared error over every coordinate, meters."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError("prediction and target shapes differ")
    return float(np.sqrt(np.mean((pred - target) ** 2)))


def loss_and_grad(pred: np.ndarray, target: np.ndarray):
    """RMSE and its derivative with respect to pred."""
    diff = pred - target
    value = float(np.sqrt(np.mean(diff ** 2)))
    if value == 0.0:
        return 0.0, np.zeros_like(diff)
    return value, diff / (diff.size * value)


def train(config: LstmConfig, data: TrainingSet, epochs: int, seed: int = 0,
          batch_size: int = 32):
    """Adam training; returns (model, per-epoch mean loss trace).

    The whole run is a pure function of (config, data, seed): batch
    order, dropout masks and the parameter init all come from one
    seeded generator.
    """
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    xs, ys = data.stacked()
    if data.window_length != config.memory_length:
        raise ValueError(
            f"sequences have length {data.window_length}, config wants "
            f"{config.memory_length}")
    rng = np.random.default_rng(seed)
    model = LstmModel.initialized(config, data.input_size,
                                  seed=int(rng.integers(2 ** 31)),
                                  target_mean=ys.mean(axis=(0, 1)))
    adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    n = len(data.sequences)
    trace = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for lo in range(0, n, batch_size):
            idx = order[lo:lo + batch_size]
            bx, by = xs[idx], ys[idx]
            masks = None
            if config.dropout > 0.0 and config.hidden_layers > 1:
                keep = 1.0 - config.dropout
                masks = [
                    (rng.random((len(idx), config.neurons_per_layer)) < keep)
                    / keep
                    for _ in range(config.hidden_layers - 1)]
            value, grads = model.loss_and_gradients(bx, by, masks)
            if not math.isfinite(value):
                raise TrainingDivergedError(
                    f"loss became non-finite in epoch {epoch}; reduce "
                    f"learning_rate (currently {config.learning_rate})")
            total += value * len(idx)
            step += 1
            for k, p in model.params.items():
                g = grads[k]
                adam_m[k] = beta1 * adam_m[k] + (1 - beta1) * g
                adam_v[k] = beta2 * adam_v[k] + (1 - beta2) * g * g
                m_hat = adam_m[k] / (1 - beta1 ** step)
                v_hat = adam_v[k] / (1 - beta2 ** step)
                p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
        trace.append(total / n)
    return model, trace


def grad_check(model: LstmModel, window: np.ndarray, target: np.ndarray,
               step: float = 1e-5):
    """Max relative disagreement between analytic gradients and central
    finite differences over every parameter entry.

    Returns (max_relative_error, worst_parameter_name).
    """
    xs = np.asarray(window, dtype=np.float64)[None, :, :]
    ys = np.asarray(target, dtype=np.float64)[None, :, :]
    _, grads = model.loss_and_gradients(xs, ys)
    worst = 0.0
    worst_name = ""
    for name, p in model.params.items():
        flat = p.reshape(-1)
        g_flat = grads[name].reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            up, _ = loss_and_grad(model._forward(xs)[0], ys)
            flat[j] = keep - step
            down, _ = loss_and_grad(model._forward(xs)[0], ys)
            flat[j] = keep
            fd = (up - down) / (2.0 * step)
            rel = abs(g_flat[j] - fd) / (abs(g_flat[j]) + abs(fd) + 1e-12)
            if rel > worst:
                worst = rel
                worst_name = f"{name}[{j}]"
    return worst, worst_name


def closed_form_parameter_count(config: LstmConfig, input_size: int) -> int:
    h = config.neurons_per_layer
    total = 0
    n_in = input_size
    for _ in range(config.hidden_layers):
        total += 4 * h * (n_in + h + 1)
        n_in = h
    return total + OUTPUT_DIM * (h + 1)


# -- checkpoints ----------------------------------------------------------

_CHECKPOINT_FORMAT = "lstm-checkpoint-1"


def save_model(model: LstmModel, path) -> None:
    """Flat text checkpoint; floats carry 17 significant digits so the
    round-trip is exact."""
    cfg = model.config
    lines = [
        f"format = {_CHECKPOINT_FORMAT}",
        f"memory_length = {cfg.memory_length}",
        f"hidden_layers = {cfg.hidden_layers}",
        f"neurons_per_layer = {cfg.neurons_per_layer}",
        f"dropout = {format(cfg.dropout, '.17g')}",
        f"optimizer = {cfg.optimizer}",
        f"learning_rate = {format(cfg.learning_rate, '.17g')}",
        f"loss = {cfg.loss}",
        f"input_size = {model.input_size}",
    ]
    for name in sorted(model.params):
        p = model.params[name]
        shape = " ".join(str(s) for s in p.shape)
        lines.append(f"param {name} {shape}")
        for row in p.reshape(p.shape[0], -1):
            lines.append(" ".join(format(v, ".17g") for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path) -> LstmModel:
    lines = Path(path).read_text().splitlines()
    header = {}
    i = 0
    while i < len(lines) and not lines[i].startswith("param "):
        key, _, value = lines[i].partition("=")
        header[key.strip()] = value.strip()
        i += 1
    if header.get("format") != _CHECKPOINT_FORMAT:
        raise ValueError(f"unsupported checkpoint format "
                         f"{header.get('format')!r}")
    config = LstmConfig(
        memory_length=int(header["memory_length"]),
        hidden_layers=int(header["hidden_layers"]),
        neurons_per_layer=int(header["neurons_per_layer"]),
        dropout=float(header["dropout"]),
        optimizer=header["optimizer"],
        learning_rate=float(header["learning_rate"]),
        loss=header["loss"],
    )
    params = {}
    while i < len(lines):
        _, name, *shape_s = lines[i].split()
        shape = tuple(int(s) for s in shape_s)
        i += 1
        rows = []
        for _ in range(shape[0]):
            rows.append([float(v) for v in lines[i].split()])
            i += 1
        params[name] = np.asarray(rows).reshape(shape)
    return LstmModel(config, int(header["input_size"]), params)
