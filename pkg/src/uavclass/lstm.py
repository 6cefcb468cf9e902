"""Single-layer many-to-one LSTM with a linear classifier head.

Pure numpy, double precision. The recurrence, backpropagation through time,
and Adam are implemented directly so gradients can be validated against
finite differences. Gate order in the stacked weight matrices is
(input, forget, cell-candidate, output).
"""

from __future__ import annotations

import io
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

N_CLASSES = 3
CHECKPOINT_MAGIC = b"UAVLSTM1"


class ModelError(Exception):
    pass


class ShapeMismatch(ModelError):
    pass


class InvalidLabel(ModelError):
    pass


class EmptySplit(ModelError):
    pass


class DivergedLoss(ModelError):
    pass


def sigmoid(x):
    # split by sign for stability at large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmParams:
    """All trainable tensors. w_x: [4H, F], w_h: [4H, H], bias: [4H]."""

    w_x: np.ndarray
    w_h: np.ndarray
    bias: np.ndarray
    w_out: np.ndarray  # [3, H]
    b_out: np.ndarray  # [3]

    @property
    def hidden(self) -> int:
        return self.w_h.shape[1]

    @property
    def n_features(self) -> int:
        return self.w_x.shape[1]

    def tensors(self):
        return [self.w_x, self.w_h, self.bias, self.w_out, self.b_out]

    def copy(self) -> "LstmParams":
        return LstmParams(*[t.copy() for t in self.tensors()])


def init_params(n_features: int, hidden: int = 128, seed: int = 0) -> LstmParams:
    """Uniform +-1/sqrt(H) weights, zero biases except forget gate bias = 1."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden)
    params = LstmParams(
        w_x=rng.uniform(-bound, bound, (4 * hidden, n_features)),
        w_h=rng.uniform(-bound, bound, (4 * hidden, hidden)),
        bias=np.zeros(4 * hidden),
        w_out=rng.uniform(-bound, bound, (N_CLASSES, hidden)),
        b_out=np.zeros(N_CLASSES),
    )
    params.bias[hidden : 2 * hidden] = 1.0  # forget gate open at start
    return params


def forward_batch(params: LstmParams, x):
    """Run the recurrence on x of shape [B, T, F]; returns (logits [B, 3], cache)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != params.n_features:
        raise ShapeMismatch(f"expected [B, T, {params.n_features}], got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ModelError("non-finite input")
    batch, steps, _ = x.shape
    hidden = params.hidden

    # x @ w_x^T for all steps at once
    xz = x.reshape(batch * steps, -1) @ params.w_x.T
    xz = xz.reshape(batch, steps, 4 * hidden) + params.bias

    h = np.zeros((batch, hidden))
    c = np.zeros((batch, hidden))
    gates = np.empty((steps, batch, 4 * hidden))
    cells = np.empty((steps, batch, hidden))
    cell_tanh = np.empty((steps, batch, hidden))
    hiddens = np.empty((steps + 1, batch, hidden))
    hiddens[0] = h
    for t in range(steps):
        z = xz[:, t, :] + h @ params.w_h.T
        i = sigmoid(z[:, :hidden])
        f = sigmoid(z[:, hidden : 2 * hidden])
        g = np.tanh(z[:, 2 * hidden : 3 * hidden])
        o = sigmoid(z[:, 3 * hidden :])
        c = f * c + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[t] = np.concatenate([i, f, g, o], axis=1)
        cells[t] = c
        cell_tanh[t] = tc
        hiddens[t + 1] = h

    logits = h @ params.w_out.T + params.b_out
    cache = (x, gates, cells, cell_tanh, hiddens)
    return logits, cache


def forward(params: LstmParams, instance):
    """Single-instance forward: instance [T, F] -> (logits [3], cache)."""
    logits, cache = forward_batch(params, np.asarray(instance)[np.newaxis])
    return logits[0], cache


def softmax(logits):
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss(logits, label):
    """Stable softmax cross-entropy; returns (loss, dLoss/dLogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    if not (0 <= label < logits.shape[-1]):
        raise InvalidLabel(f"label {label} out of range")
    z = logits - logits.max()
    log_probs = z - np.log(np.exp(z).sum())
    grad = np.exp(log_probs)
    grad[label] -= 1.0
    return -log_probs[label], grad


def loss_batch(logits, labels):
    """Mean cross-entropy over a batch; gradient already divided by batch size."""
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(labels)
    total = -log_probs[np.arange(n), labels].sum() / n
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return total, grad / n


def backward(params: LstmParams, cache, d_logits):
    """Exact BPTT gradients for every parameter given dLoss/dLogits [B, 3]."""
    x, gates, cells, cell_tanh, hiddens = cache
    batch, steps, _ = x.shape
    hidden = params.hidden
    d_logits = np.asarray(d_logits, dtype=np.float64)
    if d_logits.ndim == 1:
        d_logits = d_logits[np.newaxis]
    if d_logits.shape != (batch, N_CLASSES):
        raise ShapeMismatch("upstream gradient does not match cached batch")

    g_w_out = d_logits.T @ hiddens[steps]
    g_b_out = d_logits.sum(axis=0)
    dh = d_logits @ params.w_out
    dc = np.zeros((batch, hidden))

    g_w_x = np.zeros_like(params.w_x)
    g_w_h = np.zeros_like(params.w_h)
    g_bias = np.zeros_like(params.bias)
    dz = np.empty((batch, 4 * hidden))
    for t in range(steps - 1, -1, -1):
        i = gates[t][:, :hidden]
        f = gates[t][:, hidden : 2 * hidden]
        g = gates[t][:, 2 * hidden : 3 * hidden]
        o = gates[t][:, 3 * hidden :]
        tc = cell_tanh[t]
        c_prev = cells[t - 1] if t > 0 else np.zeros((batch, hidden))

        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev

        dz[:, :hidden] = di * i * (1.0 - i)
        dz[:, hidden : 2 * hidden] = df * f * (1.0 - f)
        dz[:, 2 * hidden : 3 * hidden] = dg * (1.0 - g * g)
        dz[:, 3 * hidden :] = do * o * (1.0 - o)

        g_w_x += dz.T @ x[:, t, :]
        g_w_h += dz.T @ hiddens[t]
        g_bias += dz.sum(axis=0)

        dh = dz @ params.w_h
        dc = dc * f

    return [g_w_x, g_w_h, g_bias, g_w_out, g_b_out]


@dataclass
class AdamState:
    """Bias-corrected Adam with the canonical constants."""

    m: list
    v: list
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: LstmParams, lr: float = 0.001) -> "AdamState":
        return cls(
            m=[np.zeros_like(t) for t in params.tensors()],
            v=[np.zeros_like(t) for t in params.tensors()],
            lr=lr,
        )


def adam_step(params: LstmParams, grads, state: AdamState) -> LstmParams:
    """One in-place Adam update; returns params for convenience."""
    tensors = params.tensors()
    if len(grads) != len(tensors):
        raise ShapeMismatch("gradient list does not match parameter list")
    state.step += 1
    t = state.step
    for p, g, m, v in zip(tensors, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} vs parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 64
    seed: int = 0
    shuffle: bool = True
    hidden: int = 128
    learning_rate: float = 0.001
    grad_clip: float | None = None  # global-norm cap, useful for long sequences

    def __post_init__(self):
        if self.epochs < 1:
            raise ModelError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")


def _clip_grads(grads, cap):
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if total > cap > 0:
        scale = cap / total
        grads = [g * scale for g in grads]
    return grads


def train(X, labels, config: TrainConfig, params: LstmParams | None = None):
    """Mini-batch Adam training on X [N, T, F]; returns (params, epoch losses)."""
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels)
    if len(X) == 0:
        raise EmptySplit("training split is empty")
    if params is None:
        params = init_params(X.shape[2], config.hidden, seed=config.seed)
    state = AdamState.for_params(params, lr=config.learning_rate)
    rng = np.random.default_rng(config.seed)

    history = []
    n = len(X)
    for _ in range(config.epochs):
        order = rng.permutation(n) if config.shuffle else np.arange(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            logits, cache = forward_batch(params, X[idx])
            batch_loss, d_logits = loss_batch(logits, labels[idx])
            if not np.isfinite(batch_loss):
                raise DivergedLoss(f"non-finite loss at step {state.step}")
            grads = backward(params, cache, d_logits)
            if config.grad_clip is not None:
                grads = _clip_grads(grads, config.grad_clip)
            adam_step(params, grads, state)
            epoch_loss += batch_loss * len(idx)
        history.append(epoch_loss / n)
    return params, history


def predict(params: LstmParams, instance):
    """Most likely class and probabilities; ties break to the lowest index."""
    logits, _ = forward(params, instance)
    probs = softmax(logits)
    return int(np.argmax(probs)), probs


def predict_batch(params: LstmParams, X):
    logits, _ = forward_batch(params, X)
    return np.argmax(logits, axis=1)


def save_checkpoint(params: LstmParams, path):
    buf = io.BytesIO()
    buf.write(struct.pack("<II", params.hidden, params.n_features))
    for t in params.tensors():
        buf.write(np.ascontiguousarray(t, dtype="<f8").tobytes())
    payload = buf.getvalue()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(payload)))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))


def load_checkpoint(path) -> LstmParams:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise ModelError("not a uavclass checkpoint")
    (length,) = struct.unpack_from("<Q", raw, 8)
    payload = raw[16 : 16 + length]
    (crc,) = struct.unpack_from("<I", raw, 16 + length)
    if zlib.crc32(payload) != crc:
        raise ModelError("checkpoint checksum mismatch")
    hidden, n_features = struct.unpack_from("<II", payload, 0)
    shapes = [
        (4 * hidden, n_features),
        (4 * hidden, hidden),
        (4 * hidden,),
        (N_CLASSES, hidden),
        (N_CLASSES,),
    ]
    offset = 8
    tensors = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).copy()
        tensors.append(arr.reshape(shape))
        offset += count * 8
    return LstmParams(*tensors)
