"""Minimal trainable CNN on numpy, with exact reverse-mode gradients.

Everything is float64.  Layers: Conv2D (im2col + BLAS matmul), MaxPool,
ReLU, Flatten, Dense.  The loss is softmax cross-entropy over 10 classes with
optional soft targets, i.e. per-item label pairs (y_a, y_b, lam) whose loss is
lam * ce(y_a) + (1 - lam) * ce(y_b).  Two optimizers: SGD with momentum and
Adam, both with an additive L2 weight-decay term on the gradient.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class SpecError(ValueError):
    """Layer stack is inconsistent (e.g. Dense before Flatten)."""


class ShapeError(ValueError):
    """Input does not match what a layer expects."""

    def __init__(self, layer: str, message: str):
        super().__init__(f"{layer}: {message}")
        self.layer = layer


class NonFiniteLossError(FloatingPointError):
    """Loss became NaN/inf; carries the in-batch index of the offending item."""

    def __init__(self, sample_index: int):
        super().__init__(f"non-finite loss at batch item {sample_index}")
        self.sample_index = sample_index


# ---------------------------------------------------------------------------
# layer specs

@dataclass(frozen=True)
class Conv2D:
    out_channels: int
    kernel: int
    stride: int = 1


@dataclass(frozen=True)
class MaxPool:
    size: int = 2


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    out_features: int


LayerSpec = Union[Conv2D, MaxPool, ReLU, Flatten, Dense]


def default_digit_net(in_channels: int = 3) -> tuple[LayerSpec, ...]:
    """LeNet-class stack for 28x28 inputs and 10 classes."""
    del in_channels  # shape is supplied at init time; kept for call-site clarity
    return (
        Conv2D(32, 5),
        ReLU(),
        MaxPool(2),
        Conv2D(64, 5),
        ReLU(),
        MaxPool(2),
        Flatten(),
        Dense(128),
        ReLU(),
        Dense(10),
    )


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd"  # "sgd" | "adam"
    learning_rate: float = 0.01
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"optimizer kind must be sgd or adam, got {self.kind!r}")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1/beta2 must be in (0, 1)")
        if self.weight_decay < 0.0:
            raise ValueError("weight_decay must be >= 0")


@dataclass
class Network:
    specs: tuple[LayerSpec, ...]
    input_shape: tuple[int, int, int]  # (C, H, W)
    params: list[dict[str, np.ndarray]]
    moments: list[dict[str, np.ndarray]] = field(default_factory=list)
    step: int = 0

    def num_params(self) -> int:
        return sum(int(a.size) for layer in self.params for a in layer.values())

    def param_arrays(self):
        """(layer_index, name, array) triples in a fixed order."""
        for i, layer in enumerate(self.params):
            for name in sorted(layer):
                yield i, name, layer[name]


def trace_shapes(specs: Sequence[LayerSpec], input_shape: tuple[int, int, int]):
    """Shape after every layer; raises SpecError on an inconsistent stack."""
    shape: tuple = tuple(input_shape)
    shapes = [shape]
    for i, spec in enumerate(specs):
        name = f"layer {i} ({type(spec).__name__})"
        if isinstance(spec, Conv2D):
            if len(shape) != 3:
                raise SpecError(f"{name}: needs a C,H,W input, has {shape}")
            c, h, w = shape
            if spec.kernel > h or spec.kernel > w:
                raise SpecError(f"{name}: kernel {spec.kernel} larger than input {h}x{w}")
            if spec.stride < 1:
                raise SpecError(f"{name}: stride must be >= 1")
            oh = (h - spec.kernel) // spec.stride + 1
            ow = (w - spec.kernel) // spec.stride + 1
            shape = (spec.out_channels, oh, ow)
        elif isinstance(spec, MaxPool):
            if len(shape) != 3:
                raise SpecError(f"{name}: needs a C,H,W input, has {shape}")
            c, h, w = shape
            if spec.size < 1 or h < spec.size or w < spec.size:
                raise SpecError(f"{name}: pool size {spec.size} does not fit {h}x{w}")
            shape = (c, h // spec.size, w // spec.size)
        elif isinstance(spec, ReLU):
            pass
        elif isinstance(spec, Flatten):
            if len(shape) != 3:
                raise SpecError(f"{name}: input already flat")
            shape = (int(np.prod(shape)),)
        elif isinstance(spec, Dense):
            if len(shape) != 1:
                raise SpecError(f"{name}: needs a flat input; add Flatten first")
            shape = (spec.out_features,)
        else:
            raise SpecError(f"{name}: unknown layer spec")
        shapes.append(shape)
    return shapes


def init_network(
    specs: Sequence[LayerSpec],
    input_shape: tuple[int, int, int] = (3, 28, 28),
    seed: int = 0,
) -> Network:
    """Fan-in-scaled normal weights (std = sqrt(2 / fan_in)), zero biases."""
    shapes = trace_shapes(specs, input_shape)
    rng = np.random.default_rng(seed)
    params: list[dict[str, np.ndarray]] = []
    for spec, in_shape in zip(specs, shapes[:-1]):
        if isinstance(spec, Conv2D):
            c = in_shape[0]
            fan_in = c * spec.kernel * spec.kernel
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(spec.out_channels, c, spec.kernel, spec.kernel))
            params.append({"b": np.zeros(spec.out_channels), "w": w})
        elif isinstance(spec, Dense):
            fan_in = in_shape[0]
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(spec.out_features, fan_in))
            params.append({"b": np.zeros(spec.out_features), "w": w})
        else:
            params.append({})
    return Network(specs=tuple(specs), input_shape=tuple(input_shape), params=params)


# ---------------------------------------------------------------------------
# layer arithmetic
#
# Spatial activations live in channel-major layout (C, N, H, W) internally:
# im2col then reduces to k*k contiguous block copies and the convolution
# matmuls need no transposes at all, which is what keeps the per-batch cost
# BLAS-bound instead of gather-bound.  The big intermediates (patch matrices,
# conv outputs, input gradients) are recycled through a shape-keyed scratch
# pool; training is single-threaded, so reuse is safe, and every buffer is
# fully overwritten before use.

_SCRATCH: dict = {}


def _scratch(tag, shape) -> np.ndarray:
    key = (tag, shape)
    buf = _SCRATCH.get(key)
    if buf is None:
        if len(_SCRATCH) >= 24:  # bound residency across many batch shapes
            _SCRATCH.clear()
        buf = np.empty(shape)
        _SCRATCH[key] = buf
    return buf


def _im2col(x: np.ndarray, k: int, stride: int, layer: int):
    """(C,N,H,W) -> patch matrix (C*k*k, N*OH*OW) plus the output extent."""
    c, n, h, w = x.shape
    oh = (h - k) // stride + 1
    ow = (w - k) // stride + 1
    cols = _scratch(("cols", layer), (c, k, k, n, oh, ow))
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(c * k * k, n * oh * ow), oh, ow


def _col2im(dcols: np.ndarray, x_shape, k: int, stride: int, oh: int, ow: int, layer: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back onto the image."""
    c, n, h, w = x_shape
    dx = _scratch(("dx", layer), x_shape)
    dx.fill(0.0)
    d = dcols.reshape(c, k, k, n, oh, ow)
    for i in range(k):
        for j in range(k):
            dx[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += d[:, i, j]
    return dx


def _conv_forward(x, w, b, stride, layer):
    oc, c, k, _ = w.shape
    cols, oh, ow = _im2col(x, k, stride, layer)
    out = _scratch(("convout", layer), (oc, cols.shape[1]))
    np.matmul(w.reshape(oc, -1), cols, out=out)
    out += b[:, None]
    return out.reshape(oc, x.shape[1], oh, ow), (cols, x.shape, oh, ow)


def _conv_backward(dout, w, cache, stride, layer, need_dx):
    cols, x_shape, oh, ow = cache
    oc, c, k, _ = w.shape
    dout_mat = dout.reshape(oc, -1)
    dw = (dout_mat @ cols.T).reshape(w.shape)
    db = dout_mat.sum(axis=1)
    if not need_dx:
        return None, dw, db
    dcols = _scratch(("dcols", layer), (c * k * k, dout_mat.shape[1]))
    np.matmul(w.reshape(oc, -1).T, dout_mat, out=dcols)
    return _col2im(dcols, x_shape, k, stride, oh, ow, layer), dw, db


def _pool_forward(x, size):
    c, n, h, w = x.shape
    oh, ow = h // size, w // size
    he, we = oh * size, ow * size
    out = x[:, :, 0:he:size, 0:we:size].copy()
    for i in range(size):
        for j in range(size):
            if i or j:
                np.maximum(out, x[:, :, i:he:size, j:we:size], out=out)
    return out, (x, out)


def _pool_backward(dout, cache, size):
    # Route each window's gradient to its first maximal entry (row-major
    # scan), mirroring an argmax tie-break.
    x, out = cache
    oh, ow = out.shape[2], out.shape[3]
    he, we = oh * size, ow * size
    dx = np.zeros(x.shape)
    remaining = dout.copy()
    for i in range(size):
        for j in range(size):
            view = x[:, :, i:he:size, j:we:size]
            take = np.where(view == out, remaining, 0.0)
            dx[:, :, i:he:size, j:we:size] = take
            remaining -= take
    return dx


def _as_batch(batch) -> np.ndarray:
    x = np.asarray(batch, dtype=np.float64) if not isinstance(batch, np.ndarray) else batch.astype(np.float64, copy=False)
    if x.ndim == 3:
        x = x[None]
    return x


def _run_forward(net: Network, x: np.ndarray, keep_caches: bool):
    if x.ndim != 4 or x.shape[1:] != net.input_shape:
        raise ShapeError("input", f"expected batch of {net.input_shape} images, got {x.shape}")
    caches = []
    out = np.ascontiguousarray(x.transpose(1, 0, 2, 3))  # to channel-major
    flat = False
    for i, spec in enumerate(net.specs):
        name = f"layer {i} ({type(spec).__name__})"
        p = net.params[i]
        if isinstance(spec, Conv2D):
            if flat or out.shape[0] != p["w"].shape[1]:
                raise ShapeError(name, f"expected {p['w'].shape[1]} channels, got shape {out.shape}")
            out, cache = _conv_forward(out, p["w"], p["b"], spec.stride, i)
        elif isinstance(spec, MaxPool):
            out, cache = _pool_forward(out, spec.size)
        elif isinstance(spec, ReLU):
            cache = out > 0
            out = np.maximum(out, 0.0)
        elif isinstance(spec, Flatten):
            cache = out.shape
            n = out.shape[1]
            out = np.ascontiguousarray(out.transpose(1, 0, 2, 3)).reshape(n, -1)
            flat = True
        elif isinstance(spec, Dense):
            if not flat or out.shape[1] != p["w"].shape[1]:
                raise ShapeError(name, f"expected {p['w'].shape[1]} features, got shape {out.shape}")
            cache = out
            out = out @ p["w"].T + p["b"]
        if keep_caches:
            caches.append(cache)
    return out, caches


def forward(net: Network, batch) -> np.ndarray:
    """Logits for a batch; no parameter mutation, deterministic."""
    x = _as_batch(batch)
    logits, _ = _run_forward(net, x, keep_caches=False)
    return logits


def _run_backward(net: Network, dlogits: np.ndarray, caches) -> list[dict[str, np.ndarray]]:
    grads: list[dict[str, np.ndarray]] = [dict() for _ in net.specs]
    d = dlogits
    for i in range(len(net.specs) - 1, -1, -1):
        spec = net.specs[i]
        p = net.params[i]
        cache = caches[i]
        if isinstance(spec, Conv2D):
            d, dw, db = _conv_backward(d, p["w"], cache, spec.stride, i, need_dx=i > 0)
            grads[i] = {"b": db, "w": dw}
        elif isinstance(spec, MaxPool):
            d = _pool_backward(d, cache, spec.size) if i > 0 else None
        elif isinstance(spec, ReLU):
            d = d * cache if i > 0 else None
        elif isinstance(spec, Flatten):
            c, n, h, w = cache
            d = np.ascontiguousarray(d.reshape(n, c, h, w).transpose(1, 0, 2, 3)) if i > 0 else None
        elif isinstance(spec, Dense):
            grads[i] = {"b": d.sum(axis=0), "w": d.T @ cache}
            d = d @ p["w"] if i > 0 else None
    return grads


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _target_distribution(targets, n: int, num_classes: int) -> np.ndarray:
    """Rows of class-probability mass; hard labels or (y_a, y_b, lam) triples."""
    dist = np.zeros((n, num_classes))
    if isinstance(targets, tuple) and len(targets) == 3:
        y_a = np.asarray(targets[0], dtype=np.int64)
        y_b = np.asarray(targets[1], dtype=np.int64)
        lam = np.broadcast_to(np.asarray(targets[2], dtype=np.float64), (n,))
        if y_a.shape != (n,) or y_b.shape != (n,):
            raise ValueError(f"target length mismatch: batch {n}, labels {y_a.shape}/{y_b.shape}")
        np.add.at(dist, (np.arange(n), y_a), lam)
        np.add.at(dist, (np.arange(n), y_b), 1.0 - lam)
    else:
        y = np.asarray(targets, dtype=np.int64)
        if y.shape != (n,):
            raise ValueError(f"target length mismatch: batch {n}, labels {y.shape}")
        dist[np.arange(n), y] = 1.0
    return dist


def loss_and_grads(net: Network, batch, targets):
    """Mean softmax cross-entropy and gradients for every parameter.

    ``targets`` is either an int array of class indices or a
    ``(y_a, y_b, lam)`` triple for lam-weighted label pairs.
    """
    x = _as_batch(batch)
    n = x.shape[0]
    logits, caches = _run_forward(net, x, keep_caches=True)
    dist = _target_distribution(targets, n, logits.shape[1])

    zmax = logits.max(axis=1, keepdims=True)
    lse = (zmax[:, 0] + np.log(np.exp(logits - zmax).sum(axis=1)))
    per_item = lse - (dist * logits).sum(axis=1)
    finite = np.isfinite(per_item)
    if not finite.all():
        raise NonFiniteLossError(int(np.argmin(finite)))
    loss = float(per_item.mean())

    dlogits = (softmax(logits) - dist) / n
    grads = _run_backward(net, dlogits, caches)
    return loss, grads


def optimizer_step(net: Network, grads, cfg: OptimizerConfig) -> Network:
    """Apply one update in place and return the network."""
    if not net.moments:
        net.moments = [{k: np.zeros_like(v) for k, v in layer.items()} for layer in net.params]
        if cfg.kind == "adam":
            for layer in net.moments:
                for k in list(layer):
                    layer["v_" + k] = np.zeros_like(layer[k])
    net.step += 1
    for i, layer in enumerate(net.params):
        for name, p in layer.items():
            g = grads[i][name]
            if g.shape != p.shape:
                raise ShapeError(f"layer {i}", f"gradient shape {g.shape} != param shape {p.shape}")
            if cfg.weight_decay:
                g = g + cfg.weight_decay * p
            m = net.moments[i][name]
            if cfg.kind == "sgd":
                m *= cfg.momentum
                m += g
                p -= cfg.learning_rate * m
            else:
                v = net.moments[i]["v_" + name]
                m *= cfg.beta1
                m += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                mhat = m / (1.0 - cfg.beta1**net.step)
                vhat = v / (1.0 - cfg.beta2**net.step)
                p -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.epsilon)
    return net


# ---------------------------------------------------------------------------
# persistence

_SPEC_NAMES = {"Conv2D": Conv2D, "MaxPool": MaxPool, "ReLU": ReLU, "Flatten": Flatten, "Dense": Dense}


def save_network(net: Network, path) -> None:
    meta = {
        "input_shape": list(net.input_shape),
        "specs": [[type(s).__name__] + [getattr(s, f.name) for f in s.__dataclass_fields__.values()] for s in net.specs],
    }
    arrays = {}
    for i, name, arr in net.param_arrays():
        arrays[f"p{i}_{name}"] = arr
    buf = io.BytesIO()
    np.savez(buf, meta=json.dumps(meta), **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_network(path) -> Network:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        specs = tuple(_SPEC_NAMES[entry[0]](*entry[1:]) for entry in meta["specs"])
        net = init_network(specs, tuple(meta["input_shape"]), seed=0)
        for i, name, _ in net.param_arrays():
            net.params[i][name] = data[f"p{i}_{name}"].astype(np.float64)
    return net
