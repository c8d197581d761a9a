"""Fully connected networks: parameters, initialization and forward evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Jet, linear, tanh

__all__ = ["NetworkParams", "init_fcn", "fcn_forward", "fcn_jet", "param_count"]


def param_count(layer_sizes) -> int:
    sizes = list(layer_sizes)
    return sum(o * i + o for i, o in zip(sizes[:-1], sizes[1:]))


@dataclass
class NetworkParams:
    """Weights ``W_i`` of shape ``(d_i, d_{i-1})`` and biases ``b_i`` of shape ``(d_i,)``.

    Hidden layers use tanh, the final layer is the identity.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias per weight matrix and at least one layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {i}: weight {w.shape} and bias {b.shape} do not match")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise ValueError(f"layer {i} input size {w.shape[1]} != previous output {self.weights[i - 1].shape[0]}")
        n = len(self.weights)
        if not self.activations:
            self.activations = ("tanh",) * (n - 1) + ("identity",)
        if len(self.activations) != n or self.activations[-1] != "identity":
            raise ValueError("final layer activation must be identity")
        if any(a != "tanh" for a in self.activations[:-1]):
            raise ValueError("hidden activations must be tanh")

    @property
    def layer_sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_params(self) -> int:
        return param_count(self.layer_sizes)

    def flatten(self) -> np.ndarray:
        """Flat parameter array, layer by layer, weight (row-major) then bias."""
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, layer_sizes, flat) -> "NetworkParams":
        sizes = list(layer_sizes)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != param_count(sizes):
            raise ValueError(f"expected {param_count(sizes)} parameters, got {flat.size}")
        weights, biases, k = [], [], 0
        for i, o in zip(sizes[:-1], sizes[1:]):
            weights.append(flat[k : k + o * i].reshape(o, i).copy())
            k += o * i
            biases.append(flat[k : k + o].copy())
            k += o
        return cls(weights, biases)


def _check_sizes(layer_sizes) -> list[int]:
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("layer_sizes needs at least an input and an output size")
    if any(s <= 0 for s in sizes):
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    return sizes


def init_fcn(layer_sizes, seed: int | None = None, rng: np.random.Generator | None = None) -> NetworkParams:
    """Glorot-uniform weights, zero biases.

    Either ``seed`` or an existing ``rng`` may be given; passing ``rng`` lets
    many networks be drawn from one stream.
    """
    sizes = _check_sizes(layer_sizes)
    if rng is None:
        rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return NetworkParams(weights, biases)


def fcn_forward(params: NetworkParams, x) -> float | np.ndarray:
    """Evaluate the network at a point ``(d_0,)`` or a batch ``(n, d_0)``."""
    x = np.asarray(x, dtype=np.float64)
    d0 = params.weights[0].shape[1]
    if x.shape[-1:] != (d0,):
        raise ValueError(f"input has shape {x.shape}, network expects last dimension {d0}")
    h = x
    n = len(params.weights)
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w.T + b
        if i < n - 1:
            h = np.tanh(h)
    out = h[..., 0] if h.shape[-1] == 1 else h
    return float(out) if out.ndim == 0 else out


def fcn_jet(weights, biases, x: Jet) -> Jet:
    """Propagate an input jet through the network.

    ``weights[i]`` has shape ``(d_i, d_{i-1})`` or, for a stack of ``J``
    networks, ``(J, d_i, d_{i-1})`` with inputs ``(J, P, d_0)``; biases
    match with the last axis dropped.  Entries may be arrays or tape
    variables.  Stacked networks go through :func:`autodiff.linear`, whose
    results do not depend on the batch layout.
    """
    h = x
    n = len(weights)
    for i, (w, b) in enumerate(zip(weights, biases)):
        if np.ndim(w.value if hasattr(w, "value") else w) == 3:
            h = Jet(
                linear(h.value, w, b),
                None if h.d1 is None else linear(h.d1, w),
                None if h.d2 is None else linear(h.d2, w),
            )
        else:
            h = (h @ w.swapaxes(-1, -2)) + b
        if i < n - 1:
            h = tanh(h)
    return h
