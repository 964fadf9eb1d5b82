import numpy as np
import pytest

from nullspan.imaging import synthetic_image
from nullspan.layers import ConvLayerSpec, FcLayerSpec, build_equivalent
from nullspan.network import Flatten, NetworkSpec, Relu, forward, init_network
from nullspan.privacy import (
    DivergenceError,
    PrivacyConfig,
    maximize_dissimilarity,
    sample_reconstructions,
)
from nullspan.subspace import EmptySubspaceError, harmless_basis, orthogonal_decompose


@pytest.fixture(scope="module")
def small_net():
    spec = NetworkSpec(
        input_shape=(3, 8, 8),
        layers=(
            ConvLayerSpec(3, 8, 8, 2, 3, 3, stride=1, zero_padding=1),
            Relu(),
            Flatten(),
            FcLayerSpec(128, 6),
        ),
    )
    return init_network(spec, 77)


@pytest.fixture(scope="module")
def small_basis(small_net):
    return harmless_basis(build_equivalent(small_net.layers[0]))


@pytest.fixture(scope="module")
def image():
    return synthetic_image(50, (3, 8, 8))


class TestConfig:
    def test_defaults_positive(self):
        cfg = PrivacyConfig()
        assert cfg.max_iters >= 1 and cfg.step_size > 0 and cfg.penalty_weight >= 0

    def test_validation(self):
        with pytest.raises(ValueError, match="max_iters"):
            PrivacyConfig(max_iters=0)
        with pytest.raises(ValueError, match="step"):
            PrivacyConfig(step_size=-1.0)
        with pytest.raises(ValueError, match="penalty_weight"):
            PrivacyConfig(penalty_weight=-0.1)


class TestMaximizeDissimilarity:
    def test_zero_init_is_identity(self, small_net, small_basis, image):
        cfg = PrivacyConfig(max_iters=10, settle_iters=0, init_coeff_scale=0.0, seed=1)
        res = maximize_dissimilarity(image, small_basis, small_net, cfg)
        assert res.mse == 0.0
        assert res.image.tobytes() == image.tobytes()
        assert res.output_deviation == 0.0

    def test_objective_monotone_before_penalty(self, small_net, small_basis, image):
        # tiny init and few iterations: no pixel can reach a bound, so the
        # objective is the pure quadratic and ascent is non-decreasing
        cfg = PrivacyConfig(max_iters=50, step_size=0.1, settle_iters=0,
                            init_coeff_scale=0.005, seed=2)
        res = maximize_dissimilarity(image, small_basis, small_net, cfg)
        assert res.max_bound_violation == 0.0
        diffs = np.diff(res.objective_history)
        assert np.all(diffs >= -1e-18)
        assert res.mse > res.objective_history[1]

    def test_default_run_contract(self, small_net, small_basis, image):
        res = maximize_dissimilarity(image, small_basis, small_net,
                                     PrivacyConfig(seed=3))
        assert res.mse >= 0.05
        assert res.max_bound_violation <= 0.01
        assert res.output_deviation <= 1e-9
        # the perturbation never leaves the harmless subspace
        delta = (res.image - image).ravel()
        leak = orthogonal_decompose(small_basis, delta).orthogonal
        assert np.linalg.norm(leak) <= 1e-10 * np.linalg.norm(delta)

    def test_argmax_preserved_over_seeds(self, small_net, small_basis):
        for i in range(20):
            x = synthetic_image(900 + i, (3, 8, 8))
            res = maximize_dissimilarity(x, small_basis, small_net,
                                         PrivacyConfig(seed=i, max_iters=300,
                                                       settle_iters=100))
            clean = forward(small_net, x).logits
            scrambled = forward(small_net, res.image).logits
            assert int(np.argmax(clean)) == int(np.argmax(scrambled))
            assert res.output_deviation <= 1e-9

    def test_penalty_disabled_violations_grow(self, small_net, small_basis, image):
        def run(iters):
            cfg = PrivacyConfig(max_iters=iters, step_size=4.0, penalty_weight=0.0,
                                settle_iters=0, init_coeff_scale=0.8, seed=4)
            return maximize_dissimilarity(image, small_basis, small_net, cfg)

        early = run(200).max_bound_violation
        late = run(1500).max_bound_violation
        assert 0.0 < early < late

    def test_divergent_step_raises(self, small_net, small_basis, image):
        cfg = PrivacyConfig(max_iters=400, step_size=1e9, penalty_weight=0.0,
                            settle_iters=0, init_coeff_scale=0.1, seed=5)
        with pytest.raises(DivergenceError, match="smaller step"):
            maximize_dissimilarity(image, small_basis, small_net, cfg)

    def test_empty_subspace_rejected(self, image):
        spec = NetworkSpec(
            input_shape=(3, 8, 8),
            layers=(Flatten(), FcLayerSpec(192, 192)),
        )
        net = init_network(spec, 6)
        basis = harmless_basis(build_equivalent(net.layers[1]))
        with pytest.raises(EmptySubspaceError):
            maximize_dissimilarity(image, basis, net, PrivacyConfig(seed=0))

    def test_out_of_range_image_rejected(self, small_net, small_basis):
        bad = np.full((3, 8, 8), 1.5)
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            maximize_dissimilarity(bad, small_basis, small_net, PrivacyConfig(seed=0))

    def test_wrong_shape_rejected(self, small_net, small_basis):
        with pytest.raises(ValueError, match="image shape"):
            maximize_dissimilarity(np.zeros((3, 4, 4)), small_basis, small_net,
                                   PrivacyConfig(seed=0))


class TestSampleReconstructions:
    def test_known_coefficients_invert_exactly(self, small_net, small_basis, image):
        res = maximize_dissimilarity(image, small_basis, small_net,
                                     PrivacyConfig(seed=7))
        recovered = (res.image.ravel() - small_basis.basis @ res.coefficients)
        assert np.max(np.abs(recovered - image.ravel())) <= 1e-10

    def test_outputs_identical_and_distinct(self, small_net, small_basis, image):
        res = maximize_dissimilarity(image, small_basis, small_net,
                                     PrivacyConfig(seed=8))
        recons = sample_reconstructions(res.image, small_basis, 16, seed=9)
        assert len(recons) == 16
        ref = forward(small_net, res.image).logits
        for r in recons:
            assert np.max(np.abs(forward(small_net, r).logits - ref)) <= 1e-9
        for i in range(16):
            for j in range(i + 1, 16):
                assert np.linalg.norm(recons[i] - recons[j]) > 0.0

    def test_empty_subspace(self, image):
        from nullspan.subspace import NullspaceBasis
        empty = NullspaceBasis(basis=np.zeros((192, 0)))
        with pytest.raises(EmptySubspaceError):
            sample_reconstructions(image, empty, 4, seed=0)

    def test_ambient_mismatch(self, small_basis):
        with pytest.raises(ValueError, match="ambient"):
            sample_reconstructions(np.zeros((3, 4, 4)), small_basis, 2, seed=0)
