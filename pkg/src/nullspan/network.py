"""Minimal deterministic feed-forward inference with per-layer taps.

Supported layers: conv, fc (via layers.py specs), relu, average pooling,
and flatten. No training, no batch norm, no skip connections. Forward
passes record every intermediate activation so perturbations can be
injected at any depth and their downstream effect measured.

Layer indexing convention: `net.layers[i]` consumes activation z_i and
produces z_{i+1}, with z_0 the network input. forward_from_layer(net, l,
z) treats z as z_l and applies layers l, l+1, ... to the end, so
forward_from_layer(net, 0, x) reproduces the full forward pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensorio
from .layers import (
    ConvLayerSpec,
    FcLayerSpec,
    conv_forward,
    fc_forward,
    layer_from_json_dict,
    layer_to_json_dict,
)

__all__ = [
    "Relu",
    "AvgPool",
    "Flatten",
    "NetworkSpec",
    "Network",
    "FeatureTrace",
    "RmseReport",
    "init_network",
    "forward",
    "forward_from_layer",
    "rmse_report",
    "shape_after",
    "network_spec_to_json_dict",
    "network_spec_from_json_dict",
    "save_network_spec",
    "load_network_spec",
    "save_weights",
    "load_weights",
]


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class AvgPool:
    window: int
    stride: int


@dataclass(frozen=True)
class Flatten:
    pass


def shape_after(layer, shape: tuple[int, ...]) -> tuple[int, ...]:
    """Output shape of one layer given its input shape; raises on mismatch."""
    if isinstance(layer, ConvLayerSpec):
        if shape != layer.input_shape:
            raise ValueError(f"conv expects input shape {layer.input_shape}, got {shape}")
        return layer.output_shape
    if isinstance(layer, FcLayerSpec):
        flat = int(np.prod(shape))
        if flat != layer.in_features:
            raise ValueError(f"fc expects {layer.in_features} features, got {flat} (shape {shape})")
        return layer.output_shape
    if isinstance(layer, Relu):
        return shape
    if isinstance(layer, AvgPool):
        if len(shape) != 3:
            raise ValueError(f"avgpool expects a (C, H, W) input, got shape {shape}")
        c, h, w = shape
        if h < layer.window or w < layer.window:
            raise ValueError(f"avgpool window {layer.window} exceeds input {h}x{w}")
        return (c,
                (h - layer.window) // layer.stride + 1,
                (w - layer.window) // layer.stride + 1)
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    raise TypeError(f"unknown layer type {type(layer).__name__}")


@dataclass(frozen=True)
class NetworkSpec:
    """Ordered layer list plus the input shape. Linear layers may be
    geometry-only (kernels/weight None) until init_network fills them."""

    input_shape: tuple[int, ...]
    layers: tuple

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(s) for s in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if not any(isinstance(l, (ConvLayerSpec, FcLayerSpec)) for l in self.layers):
            raise ValueError("network needs at least one linear layer")
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            try:
                shape = shape_after(layer, shape)
            except ValueError as exc:
                raise ValueError(f"layer {i}: {exc}") from exc

    @property
    def output_shape(self) -> tuple[int, ...]:
        shape = self.input_shape
        for layer in self.layers:
            shape = shape_after(layer, shape)
        return shape

    def activation_shapes(self) -> list[tuple[int, ...]]:
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(shape_after(layer, shapes[-1]))
        return shapes

    def linear_layer_indices(self) -> list[int]:
        return [i for i, l in enumerate(self.layers)
                if isinstance(l, (ConvLayerSpec, FcLayerSpec))]


@dataclass(frozen=True)
class Network:
    """A NetworkSpec whose linear layers carry concrete parameters."""

    spec: NetworkSpec

    @property
    def layers(self) -> tuple:
        return self.spec.layers

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.spec.input_shape

    @property
    def n_out(self) -> int:
        return int(np.prod(self.spec.output_shape))


@dataclass(frozen=True)
class FeatureTrace:
    """Per-layer activations z_0 .. z_L; logits is z_L flattened."""

    activations: tuple

    @property
    def logits(self) -> np.ndarray:
        return np.ravel(self.activations[-1])


@dataclass(frozen=True)
class RmseReport:
    """RMSE between perturbed and clean logits, keyed by (kind, scale).

    RMSE = mean over inputs of ||perturbed_logits - clean_logits||_2
    divided by sqrt(n_out).
    """

    rows: dict


def init_network(spec: NetworkSpec, seed: int, with_bias: bool = True) -> Network:
    """Draw parameters for every linear layer: each weight entry is a
    seeded standard normal scaled by 1/sqrt(fan_in), bias likewise when
    with_bias. Bit-reproducible for a given seed; existing parameter
    values in the spec are ignored and redrawn.
    """
    rng = np.random.default_rng(seed)
    filled = []
    for layer in spec.layers:
        if isinstance(layer, ConvLayerSpec):
            fan_in = layer.in_channels * layer.kernel_h * layer.kernel_w
            shape = (layer.out_channels, layer.in_channels, layer.kernel_h, layer.kernel_w)
            kernels = rng.standard_normal(shape) / np.sqrt(fan_in)
            bias = rng.standard_normal(layer.out_channels) / np.sqrt(fan_in) if with_bias else None
            filled.append(replace(layer, kernels=kernels, bias=bias))
        elif isinstance(layer, FcLayerSpec):
            fan_in = layer.in_features
            weight = rng.standard_normal((layer.in_features, layer.out_features)) / np.sqrt(fan_in)
            bias = rng.standard_normal(layer.out_features) / np.sqrt(fan_in) if with_bias else None
            filled.append(replace(layer, weight=weight, bias=bias))
        else:
            filled.append(layer)
    return Network(spec=NetworkSpec(input_shape=spec.input_shape, layers=tuple(filled)))


def apply_layer(layer, z: np.ndarray) -> np.ndarray:
    if isinstance(layer, ConvLayerSpec):
        return conv_forward(layer, z)
    if isinstance(layer, FcLayerSpec):
        return fc_forward(layer, np.ravel(z))
    if isinstance(layer, Relu):
        return np.maximum(z, 0.0)
    if isinstance(layer, AvgPool):
        win = sliding_window_view(z, (layer.window, layer.window), axis=(1, 2))
        return win[:, ::layer.stride, ::layer.stride].mean(axis=(-1, -2))
    if isinstance(layer, Flatten):
        return np.ravel(z)
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def forward(net: Network, x: np.ndarray) -> FeatureTrace:
    """Run the network, recording every activation."""
    z = np.asarray(x, dtype=np.float64)
    if z.shape != net.input_shape:
        raise ValueError(f"input shape {z.shape} != {net.input_shape}")
    acts = [z]
    for layer in net.layers:
        z = apply_layer(layer, z)
        acts.append(z)
    return FeatureTrace(activations=tuple(acts))


def forward_from_layer(net: Network, layer_index: int, z: np.ndarray) -> np.ndarray:
    """Logits from feeding z in as the activation entering net.layers[layer_index]."""
    if not 0 <= layer_index <= len(net.layers):
        raise IndexError(f"layer index {layer_index} out of range 0..{len(net.layers)}")
    want = net.spec.activation_shapes()[layer_index]
    z = np.asarray(z, dtype=np.float64)
    if z.shape != want:
        raise ValueError(f"feature shape {z.shape} != {want} at layer {layer_index}")
    for layer in net.layers[layer_index:]:
        z = apply_layer(layer, z)
    return np.ravel(z)


def rmse_report(net: Network, inputs, delta: np.ndarray, scales,
                inject_layer: int = 0, kind: str = "perturbation") -> RmseReport:
    """RMSE of the logit change caused by adding scale*delta to the
    activation entering net.layers[inject_layer], for each scale,
    averaged over the batch in input order."""
    delta = np.asarray(delta, dtype=np.float64)
    want = net.spec.activation_shapes()[inject_layer]
    if delta.shape != want:
        raise ValueError(f"delta shape {delta.shape} != {want} at layer {inject_layer}")
    clean = []
    feats = []
    for x in inputs:
        trace = forward(net, x)
        clean.append(trace.logits)
        feats.append(trace.activations[inject_layer])
    sqrt_n = np.sqrt(net.n_out)
    rows = {}
    for s in scales:
        total = 0.0
        for z, y in zip(feats, clean):
            y_hat = forward_from_layer(net, inject_layer, z + s * delta)
            total += np.linalg.norm(y_hat - y) / sqrt_n
        rows[(kind, float(s))] = total / len(clean)
    return RmseReport(rows=rows)


# --- serialization ------------------------------------------------------

def _layer_json(layer) -> dict:
    if isinstance(layer, (ConvLayerSpec, FcLayerSpec)):
        return layer_to_json_dict(layer)
    if isinstance(layer, Relu):
        return {"kind": "relu"}
    if isinstance(layer, AvgPool):
        return {"kind": "avgpool", "window": layer.window, "stride": layer.stride}
    if isinstance(layer, Flatten):
        return {"kind": "flatten"}
    raise TypeError(f"unknown layer type {type(layer).__name__}")


def _layer_from_json(doc: dict):
    kind = doc.get("kind")
    if kind in ("conv", "fc"):
        return layer_from_json_dict(doc)
    if kind == "relu":
        return Relu()
    if kind == "avgpool":
        return AvgPool(window=doc["window"], stride=doc["stride"])
    if kind == "flatten":
        return Flatten()
    raise ValueError(f"unknown layer kind {kind!r}")


def network_spec_to_json_dict(spec: NetworkSpec) -> dict:
    return {
        "input_shape": list(spec.input_shape),
        "layers": [_layer_json(l) for l in spec.layers],
    }


def network_spec_from_json_dict(doc: dict) -> NetworkSpec:
    return NetworkSpec(
        input_shape=tuple(doc["input_shape"]),
        layers=tuple(_layer_from_json(l) for l in doc["layers"]),
    )


def save_network_spec(spec: NetworkSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_spec_to_json_dict(spec), fh)
        fh.write("\n")


def load_network_spec(path) -> NetworkSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return network_spec_from_json_dict(json.load(fh))


def save_weights(net: Network, path) -> None:
    """Write all layer parameters to one tensor-container file.

    Tensor names are layer{i}.kernels / layer{i}.bias for conv layers
    and layer{i}.weight / layer{i}.bias for fc layers.
    """
    tensors: dict[str, np.ndarray] = {}
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ConvLayerSpec):
            tensors[f"layer{i}.kernels"] = layer.kernels
            if layer.bias is not None:
                tensors[f"layer{i}.bias"] = layer.bias
        elif isinstance(layer, FcLayerSpec):
            tensors[f"layer{i}.weight"] = layer.weight
            if layer.bias is not None:
                tensors[f"layer{i}.bias"] = layer.bias
    tensorio.write_tensors(path, tensors)


def load_weights(spec: NetworkSpec, path) -> Network:
    """Attach parameters from a tensor-container file to a geometry spec."""
    tensors = tensorio.read_tensors(path)
    filled = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, ConvLayerSpec):
            filled.append(replace(layer,
                                  kernels=tensors[f"layer{i}.kernels"],
                                  bias=tensors.get(f"layer{i}.bias")))
        elif isinstance(layer, FcLayerSpec):
            filled.append(replace(layer,
                                  weight=tensors[f"layer{i}.weight"],
                                  bias=tensors.get(f"layer{i}.bias")))
        else:
            filled.append(layer)
    return Network(spec=NetworkSpec(input_shape=spec.input_shape, layers=tuple(filled)))
