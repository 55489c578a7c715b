"""Feed-forward score networks: swish hidden layers, affine output,
hand-rolled backprop, Adam, and bit-exact binary checkpoints."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import RngStream

CHECKPOINT_MAGIC = b"MSBTMN01"

# Param gradients mirror the layer structure: [(dW, db), ...].
Grads = list


def sigmoid(z: np.ndarray) -> np.ndarray:
    # exp(-z) overflowing to inf still yields the correct 0.0 limit
    out = np.negative(z)
    with np.errstate(over="ignore"):
        np.exp(out, out=out)
    out += 1.0
    np.reciprocal(out, out=out)
    return out


def swish(z: np.ndarray) -> np.ndarray:
    return z * sigmoid(z)


def swish_prime(z: np.ndarray) -> np.ndarray:
    return _swish_prime_from_sig(z, sigmoid(z))


def _swish_prime_from_sig(z: np.ndarray, sig: np.ndarray) -> np.ndarray:
    # sig (1 + z (1 - sig)), built in place on one temporary
    out = 1.0 - sig
    out *= z
    out += 1.0
    out *= sig
    return out


@dataclass
class ScoreNet:
    """MLP mapping states to score vectors.

    weights[l] has shape (out_l, in_l); hidden activations are swish, the
    output layer is affine (scores are unbounded). Output width is either
    the input width (full score) or 1 (scalar score restricted to the
    noisy coordinate).
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if not self.weights or len(self.weights) != len(self.biases):
            raise ValueError("weights and biases must be non-empty and aligned")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[0],):
                raise ValueError(f"layer {l}: bad shapes {W.shape}, {b.shape}")
            if l > 0 and W.shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l}: width mismatch")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise ValueError(f"layer {l}: non-finite parameters")
        if self.d_out not in (self.d_in, 1):
            raise ValueError(
                f"output width {self.d_out} must be input width {self.d_in} or 1")

    @property
    def d_in(self) -> int:
        return self.weights[0].shape[1]

    @property
    def d_out(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.d_in,) + tuple(W.shape[0] for W in self.weights)

    def copy(self) -> "ScoreNet":
        return ScoreNet([W.copy() for W in self.weights],
                        [b.copy() for b in self.biases])


def init_scorenet(widths, rng: RngStream) -> ScoreNet:
    """Uniform(+-sqrt(6/(fan_in+fan_out))) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return ScoreNet(weights, biases)


def forward_cached(net: ScoreNet, X: np.ndarray):
    """Batch forward pass keeping pre-activations (and their sigmoids)
    for backprop.

    X: (B, d_in). Returns (Y, cache) with Y of shape (B, d_out).
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.d_in:
        raise ValueError(f"expected (B, {net.d_in}) input, got {X.shape}")
    L = len(net.weights)
    acts = [X]
    pre = []
    sigs = []
    for l, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ W.T
        z += b
        pre.append(z)
        if l < L - 1:
            sig = sigmoid(z)
            sigs.append(sig)
            acts.append(z * sig)
        else:
            acts.append(z)
    return acts[-1], (acts, pre, sigs)


def forward_batch(net: ScoreNet, X: np.ndarray) -> np.ndarray:
    return forward_cached(net, X)[0]


def forward(net: ScoreNet, x: np.ndarray) -> np.ndarray:
    """Single-state evaluation; x has length d_in."""
    x = np.asarray(x, dtype=float)
    if x.shape != (net.d_in,):
        raise ValueError(f"expected input of length {net.d_in}, got {x.shape}")
    return forward_batch(net, x[None, :])[0]


def backward_cached(net: ScoreNet, cache, upstream: np.ndarray):
    """Gradients of sum_b upstream_b . output_b from a forward cache.

    Returns ([(dW, db), ...], input_grads) with input_grads of shape (B, d_in).
    """
    acts, pre, sigs = cache
    L = len(net.weights)
    if upstream.shape != (acts[0].shape[0], net.d_out):
        raise ValueError(
            f"upstream shape {upstream.shape} does not match output "
            f"({acts[0].shape[0]}, {net.d_out})")
    grads: Grads = [None] * L
    delta = upstream
    for l in range(L - 1, -1, -1):
        grads[l] = (delta.T @ acts[l], delta.sum(axis=0))
        delta = delta @ net.weights[l]
        if l > 0:
            delta *= _swish_prime_from_sig(pre[l - 1], sigs[l - 1])
    return grads, delta


def backward_batch(net: ScoreNet, X: np.ndarray, upstream: np.ndarray):
    _, cache = forward_cached(net, X)
    return backward_cached(net, cache, upstream)


def backward(net: ScoreNet, x: np.ndarray, upstream: np.ndarray):
    """Per-state gradients of upstream . forward(net, x).

    Returns ([(dW, db), ...], input_grad) with input_grad of length d_in.
    """
    x = np.asarray(x, dtype=float)
    upstream = np.asarray(upstream, dtype=float)
    if x.shape != (net.d_in,):
        raise ValueError(f"expected input of length {net.d_in}, got {x.shape}")
    if upstream.shape != (net.d_out,):
        raise ValueError(f"expected upstream of length {net.d_out}, got {upstream.shape}")
    grads, input_grads = backward_batch(net, x[None, :], upstream[None, :])
    return grads, input_grads[0]


def zero_grads(net: ScoreNet) -> Grads:
    return [(np.zeros_like(W), np.zeros_like(b))
            for W, b in zip(net.weights, net.biases)]


def grad_norm(grads: Grads) -> float:
    total = 0.0
    for dW, db in grads:
        total += float(np.sum(dW * dW)) + float(np.sum(db * db))
    return float(np.sqrt(total))


@dataclass
class AdamState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Grads = field(default_factory=list)
    v: Grads = field(default_factory=list)


def adam_init(net: ScoreNet, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                     m=zero_grads(net), v=zero_grads(net))


def adam_step(state: AdamState, net: ScoreNet, grads: Grads) -> None:
    """One Adam update with bias correction; mutates net and state in place."""
    for dW, db in grads:
        if not (np.all(np.isfinite(dW)) and np.all(np.isfinite(db))):
            raise ValueError("non-finite gradient: training diverged")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for l, (dW, db) in enumerate(grads):
        for (mom, sq, g, p) in (
                (state.m[l][0], state.v[l][0], dW, net.weights[l]),
                (state.m[l][1], state.v[l][1], db, net.biases[l])):
            mom *= b1
            mom += (1.0 - b1) * g
            sq *= b2
            sq += (1.0 - b2) * g * g
            p -= state.lr * (mom / c1) / (np.sqrt(sq / c2) + state.eps)


def save_net(net: ScoreNet, path) -> None:
    """Binary checkpoint: magic, widths, then raw little-endian float64 params."""
    widths = net.widths
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(net.weights)))
        f.write(struct.pack(f"<{len(widths)}I", *widths))
        for W, b in zip(net.weights, net.biases):
            f.write(np.ascontiguousarray(W, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_net(path) -> ScoreNet:
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a score-net checkpoint")
        (n_layers,) = struct.unpack("<I", f.read(4))
        widths = struct.unpack(f"<{n_layers + 1}I", f.read(4 * (n_layers + 1)))
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            W = np.frombuffer(f.read(8 * fan_out * fan_in), dtype="<f8")
            weights.append(W.reshape(fan_out, fan_in).astype(float))
            b = np.frombuffer(f.read(8 * fan_out), dtype="<f8")
            biases.append(b.astype(float))
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes in checkpoint")
    return ScoreNet(weights, biases)
