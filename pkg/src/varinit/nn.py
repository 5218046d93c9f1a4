"""Dense MLP with an explicit forward trace and hand-written backprop.

Batches are row-major ``(B, width)``. Layer ``i`` computes
``z_i = x_i @ W_i.T + b_i`` with ``W_i`` of shape ``(M_{i+1}, M_i)``, and
``x_{i+1} = f(z_i)`` for every layer but the last; the network output is
``z_n``. Reductions over the batch are plain matmuls in a fixed order, so
results are reproducible for a given BLAS build.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from .activations import KINDS, ActivationSpec
from .initialization import InitPlan, NetworkShape
from .sampling import weight_rng

MAGIC = b"VINRCKPT"
VERSION = 1


@dataclass
class Mlp:
    shape: NetworkShape
    activation: ActivationSpec
    weights: List[np.ndarray]
    biases: List[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != self.shape.n_layers or len(self.biases) != self.shape.n_layers:
            raise ValueError("number of parameter arrays does not match the shape")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            fan_in, fan_out = self.shape.fans(i)
            if w.shape != (fan_out, fan_in) or b.shape != (fan_out,):
                raise ValueError(f"layer {i}: expected W {(fan_out, fan_in)} and b {(fan_out,)}, got {w.shape} and {b.shape}")

    @property
    def n_layers(self) -> int:
        return self.shape.n_layers

    @property
    def dtype(self):
        return self.weights[0].dtype

    def parameters(self) -> List[np.ndarray]:
        return list(self.weights) + list(self.biases)

    def copy(self) -> "Mlp":
        return Mlp(self.shape, self.activation, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def __call__(self, batch):
        return forward(self, batch)[0]


@dataclass
class ForwardTrace:
    """``x[i]`` is the input of layer ``i`` and ``z[i]`` its pre-activation."""

    x: List[np.ndarray]
    z: List[np.ndarray]


@dataclass
class Gradients:
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input: np.ndarray
    z: List[np.ndarray]

    def parameters(self) -> List[np.ndarray]:
        return list(self.weights) + list(self.biases)


def initialize(plan: InitPlan, seed: int = 0, dtype=np.float64, shape: NetworkShape = None) -> Mlp:
    """Draw parameters layer by layer from ``plan`` with a seeded generator."""
    shape = shape or plan.shape
    if shape != plan.shape or len(plan) != shape.n_layers:
        raise ValueError(f"plan is for {plan.shape.widths}, network is {shape.widths}")
    rng = weight_rng(seed)
    weights, biases = [], []
    for layer in plan:
        weights.append(layer.sample(rng, (layer.fan_out, layer.fan_in), dtype))
        if layer.bias_policy == "same_as_weights":
            biases.append(layer.sample(rng, (layer.fan_out,), dtype))
        else:
            biases.append(np.zeros(layer.fan_out, dtype=dtype))
    return Mlp(shape, plan.activation, weights, biases)


def forward(mlp: Mlp, batch):
    batch = np.asarray(batch, dtype=mlp.dtype)
    if batch.ndim != 2 or batch.shape[1] != mlp.shape.input_dim:
        raise ValueError(f"expected batch of shape (B, {mlp.shape.input_dim}), got {batch.shape}")
    xs, zs = [batch], []
    x = batch
    last = mlp.n_layers - 1
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        z = x @ w.T
        z += b
        zs.append(z)
        if i < last:
            x = mlp.activation(z)
            xs.append(x)
    return zs[-1], ForwardTrace(xs, zs)


def backward(mlp: Mlp, trace: ForwardTrace, output_grad) -> Gradients:
    """Reverse-mode gradients given ``dL/dz_n``.

    ``dL/dz_{i-1} = (dL/dz_i @ W_i) * f'(z_{i-1})``; weight gradients are
    ``dL/dz_i.T @ x_i`` and bias gradients the batch sum of ``dL/dz_i``.
    """
    g = np.asarray(output_grad, dtype=mlp.dtype)
    if g.shape != trace.z[-1].shape:
        raise ValueError(f"output gradient shape {g.shape} does not match output {trace.z[-1].shape}")
    n = mlp.n_layers
    dws, dbs, dzs = [None] * n, [None] * n, [None] * n
    for i in range(n - 1, -1, -1):
        dzs[i] = g
        dws[i] = g.T @ trace.x[i]
        dbs[i] = g.sum(axis=0)
        gx = g @ mlp.weights[i]
        if i > 0:
            g = gx * mlp.activation.derivative(trace.z[i - 1], trace.x[i])
    return Gradients(dws, dbs, gx, dzs)


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


# checkpoint layout (little endian):
#   8s magic, u32 version, u32 kind index, f64 param, u32 n_widths, u32 widths..., f64 W_0.. (row-major), f64 b_0..
def save_checkpoint(mlp: Mlp, path) -> Path:
    path = Path(path)
    widths = mlp.shape.widths
    head = struct.pack(
        f"<8sIIdI{len(widths)}I", MAGIC, VERSION, KINDS.index(mlp.activation.kind), mlp.activation.param, len(widths), *widths
    )
    with open(path, "wb") as fh:
        fh.write(head)
        for arr in mlp.weights + mlp.biases:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_checkpoint(path) -> Mlp:
    data = Path(path).read_bytes()
    fixed = struct.calcsize("<8sIIdI")
    magic, version, kind, param, n_widths = struct.unpack_from("<8sIIdI", data, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    if version != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    widths = struct.unpack_from(f"<{n_widths}I", data, fixed)
    offset = fixed + 4 * n_widths
    shape = NetworkShape(widths)
    arrays = []
    sizes = [(shape.widths[i + 1], shape.widths[i]) for i in range(shape.n_layers)]
    sizes += [(shape.widths[i + 1],) for i in range(shape.n_layers)]
    for dims in sizes:
        count = int(np.prod(dims))
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(dims).astype(np.float64))
        offset += 8 * count
    if offset != len(data):
        raise ValueError(f"{path}: {len(data) - offset} trailing bytes")
    n = shape.n_layers
    activation = ActivationSpec(KINDS[kind], param)
    return Mlp(shape, activation, arrays[:n], arrays[n:])
