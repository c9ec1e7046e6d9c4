"""Feed-forward generator with hand-rolled reverse-mode gradients and Adam.

Latent Gaussian noise -> affine + leaky-ReLU chain -> data space (identity
output). The backward pass is exact, so finite differences are only used in
tests. Checkpoints round-trip bit-exactly through a small binary format.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

_CKPT_MAGIC = b"DPSGEN1\n"
_CKPT_VERSION = 1

DEFAULT_HIDDEN = (128, 128)
DEFAULT_LATENT = 16
DEFAULT_LEAKY_SLOPE = 0.2


@dataclass
class GeneratorModel:
    layer_dims: tuple[int, ...]
    weights: list[np.ndarray]  # weights[i]: (layer_dims[i], layer_dims[i+1])
    biases: list[np.ndarray]
    leaky_slope: float = DEFAULT_LEAKY_SLOPE

    @property
    def latent_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def output_dim(self) -> int:
        return self.layer_dims[-1]

    def parameters(self) -> list[np.ndarray]:
        return self.weights + self.biases

    def copy(self) -> "GeneratorModel":
        return GeneratorModel(
            layer_dims=self.layer_dims,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            leaky_slope=self.leaky_slope,
        )

    def save(self, path) -> None:
        header = json.dumps({
            "version": _CKPT_VERSION,
            "layer_dims": list(self.layer_dims),
            "leaky_slope": self.leaky_slope,
        }).encode()
        with open(path, "wb") as fh:
            fh.write(_CKPT_MAGIC)
            fh.write(struct.pack("<I", len(header)))
            fh.write(header)
            for arr in self.parameters():
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @staticmethod
    def load(path) -> "GeneratorModel":
        with open(path, "rb") as fh:
            if fh.read(len(_CKPT_MAGIC)) != _CKPT_MAGIC:
                raise ValueError(f"not a generator checkpoint: {path}")
            (hlen,) = struct.unpack("<I", fh.read(4))
            h = json.loads(fh.read(hlen))
            if h["version"] != _CKPT_VERSION:
                raise ValueError(f"unsupported checkpoint version {h['version']}")
            dims = tuple(h["layer_dims"])
            weights, biases = [], []
            for i in range(len(dims) - 1):
                n = dims[i] * dims[i + 1]
                weights.append(
                    np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(dims[i], dims[i + 1]).copy()
                )
            for i in range(len(dims) - 1):
                biases.append(np.frombuffer(fh.read(8 * dims[i + 1]), dtype="<f8").copy())
        return GeneratorModel(layer_dims=dims, weights=weights, biases=biases,
                              leaky_slope=h["leaky_slope"])


def init(
    layer_dims, seed: int, leaky_slope: float = DEFAULT_LEAKY_SLOPE
) -> GeneratorModel:
    """He initialization: weights ~ N(0, 2 / fan_in), zero biases."""
    layer_dims = tuple(int(d) for d in layer_dims)
    if len(layer_dims) < 2 or any(d < 1 for d in layer_dims):
        raise ValueError(f"invalid layer dims {layer_dims}")
    rng = np.random.default_rng(seed)
    weights = [
        rng.normal(0.0, np.sqrt(2.0 / layer_dims[i]), size=(layer_dims[i], layer_dims[i + 1]))
        for i in range(len(layer_dims) - 1)
    ]
    biases = [np.zeros(layer_dims[i + 1]) for i in range(len(layer_dims) - 1)]
    return GeneratorModel(layer_dims=layer_dims, weights=weights, biases=biases,
                          leaky_slope=leaky_slope)


def forward(model: GeneratorModel, z_batch: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass; the returned tape holds the per-layer inputs and
    pre-activations needed for an exact backward pass."""
    z_batch = np.atleast_2d(np.asarray(z_batch, dtype=float))
    if z_batch.shape[1] != model.latent_dim:
        raise ValueError(
            f"latent width {z_batch.shape[1]} != model latent dim {model.latent_dim}"
        )
    a = z_batch
    tape = []
    last = len(model.weights) - 1
    for i, (W, bias) in enumerate(zip(model.weights, model.biases)):
        pre = a @ W + bias
        tape.append((a, pre))
        if i < last:
            a = np.where(pre > 0, pre, model.leaky_slope * pre)
        else:
            a = pre  # identity output
    return a, tape


def backward(
    model: GeneratorModel, tape: list, grad_x: np.ndarray
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact gradients of sum_batch <grad_x, forward(z)> w.r.t. all parameters.

    Returns (grad_weights, grad_biases) shaped like the model's parameters.
    """
    if len(tape) != len(model.weights):
        raise ValueError("tape does not match model (stale or truncated)")
    grad = np.atleast_2d(np.asarray(grad_x, dtype=float))
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    last = len(model.weights) - 1
    for i in range(last, -1, -1):
        a, pre = tape[i]
        if i < last:
            grad = grad * np.where(pre > 0, 1.0, model.leaky_slope)
        grad_w[i] = a.T @ grad
        grad_b[i] = grad.sum(axis=0)
        grad = grad @ model.weights[i].T
    return grad_w, grad_b


@dataclass
class OptimizerState:
    """Adam accumulators, one pair per parameter array."""

    learning_rate: float = 2e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @staticmethod
    def for_model(model: GeneratorModel, learning_rate: float = 2e-5) -> "OptimizerState":
        params = model.parameters()
        return OptimizerState(
            learning_rate=learning_rate,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(
    model: GeneratorModel,
    state: OptimizerState,
    grad_weights: list[np.ndarray],
    grad_biases: list[np.ndarray],
) -> None:
    """One bias-corrected Adam update, in place."""
    grads = grad_weights + grad_biases
    params = model.parameters()
    if len(grads) != len(params):
        raise ValueError("gradient count does not match parameter count")
    state.step += 1
    t = state.step
    lr_t = state.learning_rate * np.sqrt(1.0 - state.beta2 ** t) / (1.0 - state.beta1 ** t)
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr_t * m / (np.sqrt(v) + state.eps)
