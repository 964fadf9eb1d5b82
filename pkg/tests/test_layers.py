import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullspan.layers import (
    ConvLayerSpec,
    FcLayerSpec,
    build_conv_equivalent,
    build_equivalent,
    build_fc_equivalent,
    conv_forward,
    fc_forward,
    layer_from_json_dict,
    layer_to_json_dict,
    load_layer_json,
    predict_nullspace_dim,
    save_layer_json,
    verify_equivalence,
)
from nullspan.linalg import numerical_rank, singular_values, svd
from nullspan.verification import numerical_nullity


def gf_rank(a_int, p=2147483647):
    """Exact rank of an integer matrix over GF(p); independent of any
    floating-point tolerance."""
    m = np.array(a_int % p, dtype=np.int64)
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        piv = next((i for i in range(r, rows) if m[i, c] % p), None)
        if piv is None:
            continue
        m[[r, piv]] = m[[piv, r]]
        m[r] = (m[r] * pow(int(m[r, c]), p - 2, p)) % p
        col = m[r + 1:, c].copy()
        nz = col != 0
        if nz.any():
            m[r + 1:][nz] = (m[r + 1:][nz] - col[nz, None] * m[r][None, :]) % p
        r += 1
        if r == rows:
            break
    return r


class TestConvLowering:
    def test_identity_1x1(self):
        spec = ConvLayerSpec(1, 4, 4, 1, 1, 1, kernels=np.ones((1, 1, 1, 1)))
        eq = build_conv_equivalent(spec)
        np.testing.assert_array_equal(eq.dense(), np.eye(16))

    def test_hand_computed_2x2(self):
        spec = ConvLayerSpec(1, 3, 3, 1, 2, 2,
                             kernels=np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        eq = build_conv_equivalent(spec)
        x = np.arange(1.0, 10.0).reshape(1, 3, 3)
        np.testing.assert_allclose(eq.matrix @ x.ravel(), [37.0, 47.0, 67.0, 77.0],
                                   rtol=0, atol=0)

    def test_cifar_first_layer_shape_and_nullity(self, first_layer_eq, first_layer_basis):
        assert (first_layer_eq.rows, first_layer_eq.cols) == (2560, 3072)
        assert first_layer_basis.dim == 512

    def test_row_nnz_bound(self):
        rng = np.random.default_rng(8)
        spec = ConvLayerSpec(3, 10, 10, 4, 3, 3, stride=2, zero_padding=1,
                             kernels=rng.standard_normal((4, 3, 3, 3)))
        eq = build_conv_equivalent(spec)
        assert eq.rows == spec.output_dim
        assert np.max(np.diff(eq.matrix.indptr)) <= 3 * 3 * 3

    def test_output_channel_major_order(self):
        kernels = np.array([[[[1.0]]], [[[2.0]]]])  # two 1x1 kernels on 1 channel
        spec = ConvLayerSpec(1, 2, 2, 2, 1, 1, kernels=kernels)
        dense = build_conv_equivalent(spec).dense()
        np.testing.assert_array_equal(dense[:4], np.eye(4))
        np.testing.assert_array_equal(dense[4:], 2.0 * np.eye(4))

    def test_input_channel_major_order(self):
        kernels = np.array([[[[5.0]], [[7.0]]]])  # one 1x1 kernel on 2 channels
        spec = ConvLayerSpec(2, 2, 2, 1, 1, 1, kernels=kernels)
        dense = build_conv_equivalent(spec).dense()
        np.testing.assert_array_equal(dense, np.hstack([5.0 * np.eye(4), 7.0 * np.eye(4)]))

    def test_geometry_error_names_dimension(self):
        with pytest.raises(ValueError, match="out_height"):
            ConvLayerSpec(1, 2, 8, 1, 3, 3, stride=2, zero_padding=0)

    def test_missing_kernels_rejected(self):
        with pytest.raises(ValueError, match="kernels"):
            build_conv_equivalent(ConvLayerSpec(1, 4, 4, 1, 3, 3, zero_padding=1))

    def test_kernel_shape_validated(self):
        with pytest.raises(ValueError, match="kernels shape"):
            ConvLayerSpec(1, 4, 4, 2, 3, 3, kernels=np.ones((1, 1, 3, 3)))


class TestFcLowering:
    def test_identity(self):
        eq = build_fc_equivalent(FcLayerSpec(3, 3, weight=np.eye(3)))
        np.testing.assert_array_equal(eq.dense(), np.eye(3))

    def test_square_784(self):
        rng = np.random.default_rng(12)
        eq = build_fc_equivalent(FcLayerSpec(784, 784, weight=rng.standard_normal((784, 784))))
        assert numerical_nullity(eq) == 0

    def test_seeded_20_to_12(self):
        rng = np.random.default_rng(4)
        spec = FcLayerSpec(20, 12, weight=rng.standard_normal((20, 12)))
        eq = build_fc_equivalent(spec)
        assert (eq.rows, eq.cols) == (12, 20)
        res = svd(eq.dense())
        assert eq.cols - numerical_rank(res.singular_values, eq.rows, eq.cols) == 8

    def test_transpose_convention(self):
        w = np.arange(6.0).reshape(3, 2)
        eq = build_fc_equivalent(FcLayerSpec(3, 2, weight=w))
        np.testing.assert_array_equal(eq.dense(), w.T)


class TestVerifyEquivalence:
    def test_identity_exact(self):
        spec = ConvLayerSpec(1, 4, 4, 1, 1, 1, kernels=np.ones((1, 1, 1, 1)))
        assert verify_equivalence(build_conv_equivalent(spec), spec, samples=5, seed=0) == 0.0

    def test_hand_example(self):
        spec = ConvLayerSpec(1, 3, 3, 1, 2, 2,
                             kernels=np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        assert verify_equivalence(build_conv_equivalent(spec), spec, samples=20, seed=1) <= 1e-12

    def test_strided_padded_cifar_shape(self, default_net, first_layer_eq):
        residual = verify_equivalence(first_layer_eq, default_net.layers[0],
                                      samples=100, seed=3)
        assert residual <= 1e-12

    def test_fc(self):
        rng = np.random.default_rng(14)
        spec = FcLayerSpec(30, 12, weight=rng.standard_normal((30, 12)))
        assert verify_equivalence(build_fc_equivalent(spec), spec, samples=50, seed=2) <= 1e-12


@settings(max_examples=20, deadline=None)
@given(
    c_in=st.integers(1, 3),
    h_in=st.integers(4, 9),
    w_in=st.integers(4, 9),
    kernel=st.integers(1, 3),
    stride=st.integers(1, 3),
    pad=st.integers(0, 2),
    c_out=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_lowering_matches_direct_convolution(c_in, h_in, w_in, kernel, stride, pad,
                                             c_out, seed):
    if h_in - kernel + 2 * pad < 0 or w_in - kernel + 2 * pad < 0:
        return
    rng = np.random.default_rng(seed)
    spec = ConvLayerSpec(c_in, h_in, w_in, c_out, kernel, kernel, stride=stride,
                         zero_padding=pad,
                         kernels=rng.standard_normal((c_out, c_in, kernel, kernel)))
    eq = build_conv_equivalent(spec)
    assert verify_equivalence(eq, spec, samples=10, seed=seed) <= 1e-12


class TestBiasHandling:
    def test_conv_bias_excluded_from_matrix_but_cancels(self):
        rng = np.random.default_rng(33)
        spec = ConvLayerSpec(2, 6, 6, 3, 3, 3, stride=1, zero_padding=1,
                             kernels=rng.standard_normal((3, 2, 3, 3)),
                             bias=rng.standard_normal(3))
        eq = build_conv_equivalent(spec)
        x = rng.standard_normal((2, 6, 6))
        delta = rng.standard_normal((2, 6, 6))
        change = conv_forward(spec, x + delta) - conv_forward(spec, x)
        np.testing.assert_allclose(change.ravel(), eq.matrix @ delta.ravel(), atol=1e-12)

    def test_fc_bias_cancels(self):
        rng = np.random.default_rng(34)
        spec = FcLayerSpec(10, 4, weight=rng.standard_normal((10, 4)),
                           bias=rng.standard_normal(4))
        eq = build_fc_equivalent(spec)
        z = rng.standard_normal(10)
        delta = rng.standard_normal(10)
        change = fc_forward(spec, z + delta) - fc_forward(spec, z)
        np.testing.assert_allclose(change, eq.matrix @ delta, atol=1e-12)


class TestDimPrediction:
    def test_cited_conv_values(self):
        big = ConvLayerSpec(3, 32, 32, 10, 7, 7, stride=2, zero_padding=3)
        assert predict_nullspace_dim(big) == (512, True)
        same = ConvLayerSpec(3, 32, 32, 12, 3, 3, stride=2, zero_padding=1)
        # kernel count equals the polyphase channel count 3 * 2^2, so the
        # formula value holds only for well-conditioned kernels
        assert predict_nullspace_dim(same) == (0, False)
        interior = ConvLayerSpec(64, 8, 8, 128, 3, 3, stride=2, zero_padding=1)
        assert predict_nullspace_dim(interior).dim == 2048

    def test_fc_values(self):
        assert predict_nullspace_dim(FcLayerSpec(3072, 3072)) == (0, True)
        assert predict_nullspace_dim(FcLayerSpec(784, 98)).dim == 686

    def test_kernel_smaller_than_stride_unguaranteed(self):
        spec = ConvLayerSpec(1, 8, 8, 1, 1, 1, stride=2)
        pred = predict_nullspace_dim(spec)
        assert pred.dim == max(0, 64 - 16)
        assert not pred.guaranteed

    def test_uncovered_inputs_unguaranteed_and_detected(self):
        # (H - k) % stride != 0 with no padding leaves trailing columns unread
        rng = np.random.default_rng(44)
        spec = ConvLayerSpec(4, 9, 10, 23, 2, 4, stride=2, zero_padding=0,
                             kernels=rng.standard_normal((23, 4, 2, 4)))
        pred = predict_nullspace_dim(spec)
        assert not pred.guaranteed
        assert numerical_nullity(build_conv_equivalent(spec)) > pred.dim

    def test_starved_boundary_unguaranteed_and_detected(self):
        # padding-dominated corner windows read fewer real units than kernels
        rng = np.random.default_rng(45)
        spec = ConvLayerSpec(4, 6, 7, 5, 3, 3, stride=2, zero_padding=2,
                             kernels=rng.standard_normal((5, 4, 3, 3)))
        pred = predict_nullspace_dim(spec)
        assert not pred.guaranteed
        assert numerical_nullity(build_conv_equivalent(spec)) > pred.dim

    def test_near_equal_channels_common_roots_unguaranteed_and_structural(self):
        # One in-channel feeding two kernels admits geometric-pattern
        # nullvectors even with no padding: the formula says 0 but the
        # matrix is rank-deficient, confirmed in exact arithmetic.
        rng = np.random.default_rng(46)
        kernels = rng.integers(-9, 10, size=(2, 1, 3, 2)).astype(float)
        spec = ConvLayerSpec(1, 6, 9, 2, 3, 2, stride=1, zero_padding=0,
                             kernels=kernels)
        pred = predict_nullspace_dim(spec)
        assert pred.dim == 0
        assert not pred.guaranteed
        eq = build_conv_equivalent(spec)
        float_nullity = numerical_nullity(eq)
        exact_nullity = eq.cols - gf_rank(np.rint(eq.dense()).astype(np.int64))
        assert exact_nullity > 0
        assert float_nullity == exact_nullity

    def test_polyphase_square_geometry_numerically_deficient_despite_full_rank(self):
        # Stride-2 multi-channel geometry whose kernel count equals the
        # polyphase channel count: full rank in exact arithmetic, yet the
        # singular values decay exponentially, so 64-bit precision
        # reports extra nullity for generic kernels. The prediction flag
        # marks this regime unguaranteed; the numerical nullity is what
        # the layer effectively has at this precision.
        rng = np.random.default_rng(1603)
        kernels = rng.integers(-9, 10, size=(12, 3, 3, 3)).astype(float)
        spec = ConvLayerSpec(3, 16, 16, 12, 3, 3, stride=2, zero_padding=1,
                             kernels=kernels)
        pred = predict_nullspace_dim(spec)
        assert pred == (0, False)
        eq = build_conv_equivalent(spec)
        exact_nullity = eq.cols - gf_rank(np.rint(eq.dense()).astype(np.int64))
        assert exact_nullity == 0
        assert numerical_nullity(eq) > 0
        sv = singular_values(eq.matrix)
        assert sv[-1] <= 1e-13 * sv[0]


class TestLayerJson:
    def test_conv_roundtrip(self, tmp_path):
        rng = np.random.default_rng(55)
        spec = ConvLayerSpec(2, 5, 6, 3, 2, 3, stride=1, zero_padding=1,
                             kernels=rng.standard_normal((3, 2, 2, 3)),
                             bias=rng.standard_normal(3))
        path = tmp_path / "layer.json"
        save_layer_json(spec, path)
        back = load_layer_json(path)
        assert isinstance(back, ConvLayerSpec)
        np.testing.assert_array_equal(back.kernels, spec.kernels)
        np.testing.assert_array_equal(back.bias, spec.bias)
        assert back.stride == 1 and back.zero_padding == 1

    def test_fc_roundtrip_geometry_only(self):
        doc = layer_to_json_dict(FcLayerSpec(7, 3))
        assert doc == {"kind": "fc", "in_features": 7, "out_features": 3,
                       "weight": None, "bias": None}
        back = layer_from_json_dict(doc)
        assert back.in_features == 7 and back.weight is None

    def test_field_names_frozen(self, tmp_path):
        spec = ConvLayerSpec(1, 4, 4, 1, 2, 2, kernels=np.ones((1, 1, 2, 2)))
        path = tmp_path / "layer.json"
        save_layer_json(spec, path)
        doc = json.loads(path.read_text())
        assert set(doc) == {"kind", "in_channels", "in_height", "in_width",
                            "out_channels", "kernel_h", "kernel_w", "stride",
                            "zero_padding", "kernels", "bias"}

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown layer kind"):
            layer_from_json_dict({"kind": "pool"})
