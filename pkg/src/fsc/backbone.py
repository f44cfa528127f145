"""Minimal MLP feature extractor with exact reverse-mode gradients, plus SGD
with momentum, weight decay, and a cosine learning-rate schedule.

The backbone is intentionally small: dense layers, relu or identity
activations, float64 throughout. Forward passes cache activations so the
matching backward pass can run without recomputation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .numerics import RandomStream, check_finite, require
from .subcenter import kaiming_uniform_bound

ACTIVATIONS = ("relu", "identity")


@dataclass
class Layer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)
    activation: str

    def __post_init__(self):
        require(self.weight.ndim == 2, "layer weight must be 2-D")
        require(self.bias.shape == (self.weight.shape[1],), "bias must match fan_out")
        require(self.activation in ACTIVATIONS, f"unknown activation {self.activation!r}")


class MlpBackbone:
    """Chain of affine layers with activations; the last layer's width is the
    feature dimension consumed by the classification head."""

    def __init__(self, layers: list[Layer]):
        require(len(layers) >= 1, "backbone needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            require(
                prev.weight.shape[1] == nxt.weight.shape[0],
                f"layer widths do not chain: {prev.weight.shape} then {nxt.weight.shape}",
            )
        self.layers = layers
        self._cache = None

    @classmethod
    def build(cls, dims: list[int], stream: RandomStream) -> "MlpBackbone":
        """dims = [input, hidden..., feature]; hidden layers relu, final layer
        identity. Weights kaiming-uniform over fan_in, biases zero."""
        require(len(dims) >= 2, "need at least input and output dims")
        layers = []
        for li, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
            bound = kaiming_uniform_bound(fan_in)
            weight = stream.split(li).uniform(-bound, bound, fan_in * fan_out).reshape(
                fan_in, fan_out
            )
            act = "identity" if li == len(dims) - 2 else "relu"
            layers.append(Layer(weight=weight, bias=np.zeros(fan_out), activation=act))
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        require(x.ndim == 2, "backbone input must be n x d")
        require(
            x.shape[1] == self.in_dim,
            f"input width {x.shape[1]} does not match first layer fan_in {self.in_dim}",
        )
        check_finite(x, "backbone input")
        inputs = []
        pre = []
        a = x
        for layer in self.layers:
            inputs.append(a)
            z = a @ layer.weight + layer.bias
            pre.append(z)
            a = np.maximum(z, 0.0) if layer.activation == "relu" else z
        if cache:
            self._cache = (inputs, pre)
        return a

    def backward(self, grad_output: np.ndarray) -> list[np.ndarray]:
        """Gradients for every parameter in params() order, from the cached
        forward pass. Also consumes the cache."""
        require(self._cache is not None, "backward called without a cached forward pass")
        inputs, pre = self._cache
        self._cache = None
        g = np.asarray(grad_output, dtype=np.float64)
        require(
            g.shape == (inputs[0].shape[0], self.feature_dim),
            f"grad_output shape {g.shape} does not match cached batch "
            f"({inputs[0].shape[0]}, {self.feature_dim})",
        )
        grads: list[np.ndarray] = []
        for layer, a_in, z in zip(reversed(self.layers), reversed(inputs), reversed(pre)):
            dz = g * (z > 0.0) if layer.activation == "relu" else g
            grads.append(dz.sum(axis=0))  # bias
            grads.append(a_in.T @ dz)  # weight
            g = dz @ layer.weight.T
        grads.reverse()
        return grads

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weight)
            out.append(layer.bias)
        return out


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


def cosine_lr(lr0: float, step: int, total: int) -> float:
    """0.5 * lr0 * (1 + cos(pi * step / total)); monotone from lr0 down to 0."""
    require(total >= 1, f"total steps must be >= 1, got {total}")
    require(0 <= step <= total, f"step {step} outside [0, {total}]")
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * step / total))


@dataclass
class OptimizerState:
    """SGD with momentum: velocity buffers mirror the parameter list."""

    lr0: float
    momentum: float
    weight_decay: float
    total_steps: int
    current_step: int = 0
    velocities: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(
        cls,
        params: list[np.ndarray],
        lr0: float,
        momentum: float,
        weight_decay: float,
        total_steps: int,
    ) -> "OptimizerState":
        require(lr0 >= 0 and momentum >= 0 and weight_decay >= 0, "rates must be >= 0")
        require(total_steps >= 1, f"total_steps must be >= 1, got {total_steps}")
        return cls(
            lr0=lr0,
            momentum=momentum,
            weight_decay=weight_decay,
            total_steps=total_steps,
            velocities=[np.zeros_like(p) for p in params],
        )


def sgd_step(state: OptimizerState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """In-place update: g <- grad + wd*p; v <- momentum*v + g; p <- p - lr_t*v.

    lr_t comes from the cosine schedule at the state's current step. Frozen
    tensors must simply not be passed here.
    """
    require(
        state.current_step < state.total_steps,
        f"optimizer exhausted: step {state.current_step} of {state.total_steps}",
    )
    require(
        len(params) == len(grads) == len(state.velocities),
        f"got {len(params)} params, {len(grads)} grads, {len(state.velocities)} velocities",
    )
    lr = cosine_lr(state.lr0, state.current_step, state.total_steps)
    for p, g, v in zip(params, grads, state.velocities):
        require(
            p.shape == g.shape == v.shape,
            f"shape mismatch in update: param {p.shape}, grad {g.shape}, velocity {v.shape}",
        )
        g_eff = g + state.weight_decay * p
        v *= state.momentum
        v += g_eff
        p -= lr * v
    state.current_step += 1
