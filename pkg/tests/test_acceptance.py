"""Acceptance criteria, one test per criterion.

Each test prints a single PASS/FAIL line (visible with pytest -s) and
asserts the criterion at its stated tolerance. The same checks run from
the command line via `nullspan verify` (criteria 1-6) and
`nullspan privacy` (criterion 7) with the same root seed.
"""

import time

import numpy as np
import pytest

from nullspan.imaging import ssim, synthetic_image
from nullspan.verification import (
    RMSE_SCALES,
    build_contour,
    cited_geometries,
    contour_checks,
    decomposition_laws,
    dimension_agreement,
    least_harmful_minimality,
    lowering_residuals,
    privacy_battery,
    rmse_table,
    seeded_geometries,
)

from conftest import ROOT_SEED

GOLDEN_SSIM = -0.2792917758216363


def report(number, label, checks):
    failed = [c for c in checks if not c.passed]
    status = "PASS" if not failed else "FAIL"
    print(f"\nACCEPTANCE {number} ({label}): {status}", flush=True)
    for c in failed:
        print(f"  failed: {c.name} measured={c.measured!r} tolerance={c.tolerance!r} "
              f"{c.detail}", flush=True)
    assert not failed, f"criterion {number} violated: {[c.name for c in failed]}"


@pytest.fixture(scope="module")
def geometries():
    return cited_geometries(ROOT_SEED) + seeded_geometries(ROOT_SEED, 50)


@pytest.fixture(scope="module")
def sweep(geometries):
    t0 = time.monotonic()
    rows, check = dimension_agreement(geometries)
    elapsed = time.monotonic() - t0
    return rows, check, elapsed


def test_criterion_1_rank_nullity_sweep(sweep):
    rows, check, elapsed = sweep
    checks = [check]
    assert len(rows) >= 50
    cites = {(r["in_dim"], r["out_dim"]): r for r in rows[:3]}
    assert cites[(3072, 2560)]["predicted"] == 512
    assert cites[(3072, 2560)]["numerical"] == 512
    assert cites[(784, 784)]["numerical"] == 0
    assert cites[(3072, 3072)]["predicted"] == 0
    assert cites[(3072, 3072)]["numerical"] == 0
    assert elapsed <= 60.0, f"sweep took {elapsed:.1f}s, budget 60s"
    report(1, "rank-nullity dimension sweep", checks)


def test_criterion_2_lowering_oracle(geometries):
    check = lowering_residuals(geometries, ROOT_SEED, samples=100, tolerance=1e-12)
    report(2, "lowering equivalence <= 1e-12", [check])


def test_criterion_3_harmless_invariance(default_net, first_layer_basis):
    rows, checks = rmse_table(default_net, first_layer_basis, ROOT_SEED)
    for scale in RMSE_SCALES:
        assert rows[("harmless", scale)] <= 1e-10
    report(3, "harmless/gaussian/least-harmful logit RMSE", checks)


def test_criterion_4_least_harmful(root_seed):
    checks = least_harmful_minimality(root_seed, n_matrices=10, n_samples=10_000)
    report(4, "least harmful residual and minimality", checks)


def test_criterion_5_decomposition_laws(root_seed):
    checks = decomposition_laws(root_seed, trials=1000)
    report(5, "decomposition and family laws, 1000 trials each", checks)


def test_criterion_6_contour(first_layer_eq, first_layer_basis):
    grid = build_contour(first_layer_eq, first_layer_basis, ROOT_SEED)
    assert grid.values.shape == (21, 21)
    report(6, "contour row constancy and linearity", contour_checks(grid))


def test_criterion_7_privacy(default_net, first_layer_basis):
    battery = privacy_battery(default_net, first_layer_basis, ROOT_SEED,
                              n_images=20, n_recon=16)
    assert len(battery.rows) == 20
    report(7, "output-invariant scrambling on 20 images", battery.checks)


def test_criterion_8_ssim():
    x = synthetic_image(11, (3, 16, 16))
    y = synthetic_image(12, (3, 16, 16))
    ok_self = ssim(x, x) == 1.0
    ok_sym = abs(ssim(x, y) - ssim(y, x)) <= 1e-12
    ok_golden = abs(ssim(x, y) - GOLDEN_SSIM) <= 1e-12
    status = "PASS" if (ok_self and ok_sym and ok_golden) else "FAIL"
    print(f"\nACCEPTANCE 8 (ssim exactness, symmetry, golden value): {status}",
          flush=True)
    assert ok_self and ok_sym and ok_golden
