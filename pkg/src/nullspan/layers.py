"""Lowering of convolutional and fully-connected layers to a single matrix.

A linear layer z_out = layer(z_in) is represented by the sparse matrix A
with A @ vec(z_in) = vec(z_out), where vec() flattens channel-major
(CHW order, i.e. numpy C-order on a (C, H, W) array). Bias terms are
excluded from A on purpose: an input perturbation delta changes the
layer output by exactly A @ delta whether or not the layer carries a
bias, so the matrix captures everything perturbation analysis needs.

Convolution here means what neural network libraries compute: sliding
cross-correlation with the kernel, stride S, and symmetric zero padding
O. Padded positions multiply a constant zero and therefore contribute
no matrix entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "ConvLayerSpec",
    "FcLayerSpec",
    "EquivalentMatrix",
    "DimPrediction",
    "build_conv_equivalent",
    "build_fc_equivalent",
    "build_equivalent",
    "conv_forward",
    "fc_forward",
    "verify_equivalence",
    "predict_nullspace_dim",
    "layer_to_json_dict",
    "layer_from_json_dict",
    "save_layer_json",
    "load_layer_json",
]


def _check_positive(name, value):
    if int(value) != value or value < 1:
        raise ValueError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


@dataclass
class ConvLayerSpec:
    """Geometry and (optionally) parameters of a 2-d convolutional layer.

    kernels has shape (out_channels, in_channels, kernel_h, kernel_w);
    bias has shape (out_channels,). Both may be None for a geometry-only
    spec (e.g. before network initialization draws weights).
    """

    in_channels: int
    in_height: int
    in_width: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    zero_padding: int = 0
    kernels: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        for name in ("in_channels", "in_height", "in_width", "out_channels",
                     "kernel_h", "kernel_w", "stride"):
            setattr(self, name, _check_positive(name, getattr(self, name)))
        if int(self.zero_padding) != self.zero_padding or self.zero_padding < 0:
            raise ValueError(f"zero_padding must be a non-negative integer, got {self.zero_padding!r}")
        self.zero_padding = int(self.zero_padding)
        if self.out_height < 1:
            raise ValueError(
                f"out_height = {self.out_height} < 1 "
                f"(in_height={self.in_height}, kernel_h={self.kernel_h}, "
                f"stride={self.stride}, zero_padding={self.zero_padding})"
            )
        if self.out_width < 1:
            raise ValueError(
                f"out_width = {self.out_width} < 1 "
                f"(in_width={self.in_width}, kernel_w={self.kernel_w}, "
                f"stride={self.stride}, zero_padding={self.zero_padding})"
            )
        if self.kernels is not None:
            self.kernels = np.asarray(self.kernels, dtype=np.float64)
            want = (self.out_channels, self.in_channels, self.kernel_h, self.kernel_w)
            if self.kernels.shape != want:
                raise ValueError(f"kernels shape {self.kernels.shape} != {want}")
            if not np.all(np.isfinite(self.kernels)):
                raise ValueError("kernels contain non-finite values")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.out_channels,):
                raise ValueError(f"bias shape {self.bias.shape} != ({self.out_channels},)")
            if not np.all(np.isfinite(self.bias)):
                raise ValueError("bias contains non-finite values")

    @property
    def out_height(self) -> int:
        return (self.in_height - self.kernel_h + 2 * self.zero_padding) // self.stride + 1

    @property
    def out_width(self) -> int:
        return (self.in_width - self.kernel_w + 2 * self.zero_padding) // self.stride + 1

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.in_channels, self.in_height, self.in_width)

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return (self.out_channels, self.out_height, self.out_width)

    @property
    def input_dim(self) -> int:
        return self.in_channels * self.in_height * self.in_width

    @property
    def output_dim(self) -> int:
        return self.out_channels * self.out_height * self.out_width


@dataclass
class FcLayerSpec:
    """Fully-connected layer mapping z to weight.T @ z (+ bias).

    weight has shape (in_features, out_features); bias has shape
    (out_features,). Both may be None for a geometry-only spec.
    """

    in_features: int
    out_features: int
    weight: np.ndarray | None = None
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.in_features = _check_positive("in_features", self.in_features)
        self.out_features = _check_positive("out_features", self.out_features)
        if self.weight is not None:
            self.weight = np.asarray(self.weight, dtype=np.float64)
            want = (self.in_features, self.out_features)
            if self.weight.shape != want:
                raise ValueError(f"weight shape {self.weight.shape} != {want}")
            if not np.all(np.isfinite(self.weight)):
                raise ValueError("weight contains non-finite values")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.out_features,):
                raise ValueError(f"bias shape {self.bias.shape} != ({self.out_features},)")
            if not np.all(np.isfinite(self.bias)):
                raise ValueError("bias contains non-finite values")

    @property
    def input_shape(self) -> tuple[int]:
        return (self.in_features,)

    @property
    def output_shape(self) -> tuple[int]:
        return (self.out_features,)

    @property
    def input_dim(self) -> int:
        return self.in_features

    @property
    def output_dim(self) -> int:
        return self.out_features


@dataclass
class EquivalentMatrix:
    """Sparse matrix A with A @ vec(z_in) = vec(layer(z_in)), bias excluded."""

    matrix: sp.csr_matrix
    layer_kind: str
    input_shape: tuple[int, ...]
    output_shape: tuple[int, ...]

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


class DimPrediction(NamedTuple):
    """Geometric nullspace-dimension prediction.

    dim = max(0, input_dim - output_dim). `guaranteed` is True when the
    geometry provably yields an equivalent matrix of full (row or
    column) rank for generic weights, making the prediction exact.
    Fully-connected layers always qualify. Convolutions must satisfy all
    of:

      - kernel >= stride in both directions (no interior gaps), and
        either strictly greater or an exact unpadded tiling (otherwise
        boundary windows partition the input into under- or
        over-determined blocks);
      - every input unit covered by some window (padding < kernel and
        the last window reaching the final row/column);
      - out_channels <= in_channels * kernel_h * kernel_w (vectorized
        kernels can be linearly independent);
      - every window position reads at least out_channels real (non
        padding) input units, so no boundary position is locally
        overdetermined.

    Outside this regime the formula can undercount: uncovered inputs add
    nullspace directions, starved boundary windows create dependent
    equations, and overlapping windows whose kernel count sits within 1
    of the polyphase channel count in_channels * stride^2 admit
    common-root solutions (geometric patterns annihilated by every
    window) that defeat the formula even with no padding at all, or sit
    so close to that regime that the singular values decay below what
    64-bit arithmetic resolves. Callers must fall back to the
    numerically computed nullity whenever the flag is False.
    """

    dim: int
    guaranteed: bool


def _window_real_extent(length: int, kernel: int, stride: int, pad: int,
                        n_windows: int) -> tuple[int, int]:
    # Real (non-padding) units seen by the first and last window along one axis.
    first = min(length - 1, kernel - 1 - pad) - max(0, -pad) + 1
    last_start = stride * (n_windows - 1) - pad
    last = min(length - 1, last_start + kernel - 1) - max(0, last_start) + 1
    return first, last


def _conv_formula_guaranteed(spec: ConvLayerSpec) -> bool:
    k_min = min(spec.kernel_h, spec.kernel_w)
    if spec.stride > k_min or spec.zero_padding >= k_min:
        return False
    for length, kernel, n_win in (
        (spec.in_height, spec.kernel_h, spec.out_height),
        (spec.in_width, spec.kernel_w, spec.out_width),
    ):
        covered = spec.stride * (n_win - 1) - spec.zero_padding + kernel >= length
        if not covered:
            return False
        dim_tiling = spec.zero_padding == 0 and (length - kernel) % spec.stride == 0
        if kernel == spec.stride and not dim_tiling:
            return False
    if spec.out_channels > spec.in_channels * spec.kernel_h * spec.kernel_w:
        return False
    fr, lr = _window_real_extent(spec.in_height, spec.kernel_h, spec.stride,
                                 spec.zero_padding, spec.out_height)
    fc, lc = _window_real_extent(spec.in_width, spec.kernel_w, spec.stride,
                                 spec.zero_padding, spec.out_width)
    if spec.in_channels * min(fr, lr) * min(fc, lc) < spec.out_channels:
        return False
    # Band-level counting: all windows pinned to the first/last row (or
    # column) must jointly see at least as many real units as equations.
    if spec.out_channels * spec.out_width > spec.in_channels * min(fr, lr) * spec.in_width:
        return False
    if spec.out_channels * spec.out_height > spec.in_channels * spec.in_height * min(fc, lc):
        return False
    # A stride-S convolution is a stride-1 convolution on the S^2
    # polyphase components. With overlapping windows, kernel counts
    # within 1 of the polyphase channel count admit common-root
    # (geometric/boundary) nullvectors, or sit so close to that regime
    # that the spectrum decays below 64-bit resolution; require a gap of
    # at least 2. Non-overlapping windows (kernel == stride) decouple
    # positions and are exempt.
    overlapping = spec.kernel_h > spec.stride or spec.kernel_w > spec.stride
    polyphase_channels = spec.in_channels * spec.stride * spec.stride
    if overlapping and abs(spec.out_channels - polyphase_channels) < 2:
        return False
    return True


def build_conv_equivalent(spec: ConvLayerSpec) -> EquivalentMatrix:
    """Lower a convolutional layer to its sparse equivalent matrix.

    Row j*H_out*W_out + oy*W_out + ox holds the receptive field of
    kernel j at output position (oy, ox): entry value kernels[j,c,ky,kx]
    at flat input column c*H_in*W_in + iy*W_in + ix, where
    iy = oy*stride - padding + ky (and likewise ix), skipping positions
    that fall in the zero padding.
    """
    if spec.kernels is None:
        raise ValueError("spec.kernels is None; lowering needs concrete kernel values")
    c_out, h_out, w_out = spec.output_shape
    c_in, h_in, w_in = spec.input_shape

    oy, ox, c, ky, kx = np.meshgrid(
        np.arange(h_out), np.arange(w_out), np.arange(c_in),
        np.arange(spec.kernel_h), np.arange(spec.kernel_w),
        indexing="ij",
    )
    iy = oy * spec.stride - spec.zero_padding + ky
    ix = ox * spec.stride - spec.zero_padding + kx
    valid = (iy >= 0) & (iy < h_in) & (ix >= 0) & (ix < w_in)

    base_rows = (oy * w_out + ox)[valid]
    cols = (c * h_in * w_in + iy * w_in + ix)[valid]
    c_v, ky_v, kx_v = c[valid], ky[valid], kx[valid]

    plane = h_out * w_out
    row_parts, col_parts, val_parts = [], [], []
    for j in range(c_out):
        row_parts.append(base_rows + j * plane)
        col_parts.append(cols)
        val_parts.append(spec.kernels[j, c_v, ky_v, kx_v])
    coo = sp.coo_matrix(
        (np.concatenate(val_parts), (np.concatenate(row_parts), np.concatenate(col_parts))),
        shape=(spec.output_dim, spec.input_dim),
    )
    csr = coo.tocsr()
    csr.eliminate_zeros()
    csr.sort_indices()
    return EquivalentMatrix(csr, "conv", spec.input_shape, spec.output_shape)


def build_fc_equivalent(spec: FcLayerSpec) -> EquivalentMatrix:
    """Lower a fully-connected layer: A = weight.T, bias excluded."""
    if spec.weight is None:
        raise ValueError("spec.weight is None; lowering needs concrete weight values")
    csr = sp.csr_matrix(spec.weight.T)
    csr.eliminate_zeros()
    csr.sort_indices()
    return EquivalentMatrix(csr, "fc", spec.input_shape, spec.output_shape)


def build_equivalent(spec) -> EquivalentMatrix:
    if isinstance(spec, ConvLayerSpec):
        return build_conv_equivalent(spec)
    if isinstance(spec, FcLayerSpec):
        return build_fc_equivalent(spec)
    raise TypeError(f"not a linear layer spec: {type(spec).__name__}")


def conv_forward(spec: ConvLayerSpec, x: np.ndarray, include_bias: bool = True) -> np.ndarray:
    """Direct sliding-window evaluation of the convolution (no lowering)."""
    if x.shape != spec.input_shape:
        raise ValueError(f"input shape {x.shape} != {spec.input_shape}")
    if spec.kernels is None:
        raise ValueError("spec.kernels is None")
    o = spec.zero_padding
    xp = np.pad(x, ((0, 0), (o, o), (o, o))) if o else x
    win = sliding_window_view(xp, (spec.kernel_h, spec.kernel_w), axis=(1, 2))
    win = win[:, ::spec.stride, ::spec.stride]
    out = np.einsum("kchw,cyxhw->kyx", spec.kernels, win)
    if include_bias and spec.bias is not None:
        out = out + spec.bias[:, None, None]
    return out


def fc_forward(spec: FcLayerSpec, z: np.ndarray, include_bias: bool = True) -> np.ndarray:
    """Direct evaluation weight.T @ z (+ bias)."""
    z = np.asarray(z, dtype=np.float64).ravel()
    if z.shape != (spec.in_features,):
        raise ValueError(f"input length {z.size} != {spec.in_features}")
    if spec.weight is None:
        raise ValueError("spec.weight is None")
    out = spec.weight.T @ z
    if include_bias and spec.bias is not None:
        out = out + spec.bias
    return out


def verify_equivalence(eq: EquivalentMatrix, spec, samples: int = 100, seed: int = 0) -> float:
    """Max abs deviation between direct layer evaluation and eq.matrix
    matvec over `samples` seeded standard-normal inputs (bias suppressed).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        x = rng.standard_normal(eq.input_shape)
        if isinstance(spec, ConvLayerSpec):
            direct = conv_forward(spec, x, include_bias=False).ravel()
        else:
            direct = fc_forward(spec, x, include_bias=False)
        via = eq.matrix @ x.ravel()
        dev = float(np.max(np.abs(direct - via))) if direct.size else 0.0
        worst = max(worst, dev)
    return worst


def predict_nullspace_dim(spec) -> DimPrediction:
    """Predicted nullspace dimension max(0, input_dim - output_dim)."""
    dim = max(0, spec.input_dim - spec.output_dim)
    if isinstance(spec, ConvLayerSpec):
        guaranteed = _conv_formula_guaranteed(spec)
    else:
        guaranteed = True
    return DimPrediction(dim=dim, guaranteed=guaranteed)


# --- JSON serialization ------------------------------------------------

def layer_to_json_dict(spec) -> dict:
    """Plain-dict form of a layer spec; kernels/weight as nested lists."""
    if isinstance(spec, ConvLayerSpec):
        return {
            "kind": "conv",
            "in_channels": spec.in_channels,
            "in_height": spec.in_height,
            "in_width": spec.in_width,
            "out_channels": spec.out_channels,
            "kernel_h": spec.kernel_h,
            "kernel_w": spec.kernel_w,
            "stride": spec.stride,
            "zero_padding": spec.zero_padding,
            "kernels": spec.kernels.tolist() if spec.kernels is not None else None,
            "bias": spec.bias.tolist() if spec.bias is not None else None,
        }
    if isinstance(spec, FcLayerSpec):
        return {
            "kind": "fc",
            "in_features": spec.in_features,
            "out_features": spec.out_features,
            "weight": spec.weight.tolist() if spec.weight is not None else None,
            "bias": spec.bias.tolist() if spec.bias is not None else None,
        }
    raise TypeError(f"not a linear layer spec: {type(spec).__name__}")


def layer_from_json_dict(doc: dict):
    kind = doc.get("kind")
    if kind == "conv":
        return ConvLayerSpec(
            in_channels=doc["in_channels"],
            in_height=doc["in_height"],
            in_width=doc["in_width"],
            out_channels=doc["out_channels"],
            kernel_h=doc["kernel_h"],
            kernel_w=doc["kernel_w"],
            stride=doc.get("stride", 1),
            zero_padding=doc.get("zero_padding", 0),
            kernels=None if doc.get("kernels") is None else np.asarray(doc["kernels"]),
            bias=None if doc.get("bias") is None else np.asarray(doc["bias"]),
        )
    if kind == "fc":
        return FcLayerSpec(
            in_features=doc["in_features"],
            out_features=doc["out_features"],
            weight=None if doc.get("weight") is None else np.asarray(doc["weight"]),
            bias=None if doc.get("bias") is None else np.asarray(doc["bias"]),
        )
    raise ValueError(f"unknown layer kind {kind!r}")


def save_layer_json(spec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(layer_to_json_dict(spec), fh)
        fh.write("\n")


def load_layer_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return layer_from_json_dict(json.load(fh))
