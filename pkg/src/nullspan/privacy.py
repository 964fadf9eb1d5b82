"""Output-invariant image scrambling.

Given the harmless basis U of a network's first linear layer, the image
x_hat = x + U @ c has exactly the same network output as x for every
coefficient vector c. Visual privacy comes from choosing c to maximize
the mean squared pixel difference (1/n) * ||U c||^2 while two soft
penalties keep pixels near [0, 1]: each out-of-bounds pixel contributes
|x_hat_i| to the penalty, weighted by penalty_weight in the objective.

The optimizer is plain gradient ascent on c with the closed-form
gradient (2/n) * c - penalty_weight * U.T @ g, where g_i is -1 for
x_hat_i < 0, +1 for x_hat_i > 1, and 0 otherwise (including exactly at
the bounds). A short settling phase with a much smaller step lets the
penalty park every pixel back inside the box before the run ends. The
iterate is never clamped: clamping would leave the harmless subspace
and break exact output invariance. Bound violations are reported, not
clipped away; 8-bit export quantizes for viewing only, and quantized
exports are not output-invariant.

Because x_hat - x stays in span(U) at every iteration, no projection or
correction step is ever needed and the network output matches to
floating-point accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, forward
from .subspace import EmptySubspaceError, NullspaceBasis

__all__ = [
    "DivergenceError",
    "PrivacyConfig",
    "PrivacyResult",
    "maximize_dissimilarity",
    "sample_reconstructions",
]


class DivergenceError(RuntimeError):
    """The ascent produced a non-finite objective."""


@dataclass(frozen=True)
class PrivacyConfig:
    """Optimizer settings.

    max_iters/step_size drive the growth phase; settle_iters and
    settle_step_size run afterwards with the same penalty weight so the
    final iterate sits inside the pixel box. init_coeff_scale scales the
    seeded Gaussian initialization of c (0 starts exactly at x).
    """

    max_iters: int = 2000
    step_size: float = 4.0
    penalty_weight: float = 0.15
    settle_iters: int = 300
    settle_step_size: float = 0.05
    init_coeff_scale: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.settle_iters < 0:
            raise ValueError(f"settle_iters must be >= 0, got {self.settle_iters}")
        if self.step_size <= 0 or self.settle_step_size <= 0:
            raise ValueError("step sizes must be positive")
        if self.penalty_weight < 0:
            raise ValueError(f"penalty_weight must be >= 0, got {self.penalty_weight}")
        if self.init_coeff_scale < 0:
            raise ValueError(f"init_coeff_scale must be >= 0, got {self.init_coeff_scale}")


@dataclass(frozen=True)
class PrivacyResult:
    """Scrambled image plus diagnostics.

    image is x + U @ coefficients (unclamped, CHW); mse is the mean
    squared pixel difference to the original; max_bound_violation is the
    largest distance any pixel sits outside [0, 1]; output_deviation is
    the max-abs logit difference against the original image.
    objective_history records the objective before every iteration.
    """

    image: np.ndarray
    coefficients: np.ndarray
    mse: float
    max_bound_violation: float
    output_deviation: float
    objective_history: np.ndarray


def _objective_and_gradient(c, u, x_flat, n, penalty_weight):
    # overflow here is caught by the caller's finiteness check
    with np.errstate(over="ignore", invalid="ignore"):
        x_hat = x_flat + u @ c
        g = np.zeros(n)
        g[x_hat < 0.0] = -1.0
        g[x_hat > 1.0] = 1.0
        penalty = float(np.abs(x_hat[x_hat < 0.0]).sum() + np.abs(x_hat[x_hat > 1.0]).sum())
        uc = x_hat - x_flat
        objective = float(uc @ uc) / n - penalty_weight * penalty
        gradient = (2.0 / n) * c - penalty_weight * (u.T @ g)
    return objective, gradient


def maximize_dissimilarity(x: np.ndarray, basis: NullspaceBasis, net: Network,
                           cfg: PrivacyConfig) -> PrivacyResult:
    """Scramble x inside the harmless subspace of net's first linear layer.

    `basis` must be that layer's harmless basis; x must match the
    network input shape with values in [0, 1].
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != net.input_shape:
        raise ValueError(f"image shape {x.shape} != network input {net.input_shape}")
    n = x.size
    if basis.ambient_dim != n:
        raise ValueError(f"basis ambient dim {basis.ambient_dim} != image size {n}")
    if basis.dim == 0:
        raise EmptySubspaceError("harmless subspace is {0}; cannot scramble")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")

    u = basis.basis
    x_flat = x.ravel()
    rng = np.random.default_rng(cfg.seed)
    c = cfg.init_coeff_scale * rng.standard_normal(basis.dim)

    history = []
    for step, iters in ((cfg.step_size, cfg.max_iters),
                        (cfg.settle_step_size, cfg.settle_iters)):
        for _ in range(iters):
            objective, gradient = _objective_and_gradient(c, u, x_flat, n, cfg.penalty_weight)
            if not np.isfinite(objective):
                raise DivergenceError(
                    "objective became non-finite; try a smaller step_size"
                )
            history.append(objective)
            c = c + step * gradient

    delta = u @ c
    x_hat = x_flat + delta
    mse = float(delta @ delta) / n
    violation = max(0.0, float(-x_hat.min()), float(x_hat.max() - 1.0))
    clean = forward(net, x).logits
    scrambled = forward(net, x_hat.reshape(x.shape)).logits
    deviation = float(np.max(np.abs(scrambled - clean)))
    return PrivacyResult(
        image=x_hat.reshape(x.shape),
        coefficients=c,
        mse=mse,
        max_bound_violation=violation,
        output_deviation=deviation,
        objective_history=np.asarray(history),
    )


def sample_reconstructions(x_hat: np.ndarray, basis: NullspaceBasis, k: int,
                           seed: int) -> list[np.ndarray]:
    """k candidate originals x_hat - U @ c_j with seeded Gaussian c_j.

    Every candidate has the same network output as x_hat (their
    differences lie in the harmless subspace), which is exactly why the
    true original cannot be singled out from outputs alone once the
    subspace has dimension >= 2.
    """
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if basis.dim == 0:
        raise EmptySubspaceError("harmless subspace is {0}; nothing to sample")
    if basis.ambient_dim != x_hat.size:
        raise ValueError(f"basis ambient dim {basis.ambient_dim} != image size {x_hat.size}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(k):
        c = rng.standard_normal(basis.dim)
        out.append((x_hat.ravel() - basis.basis @ c).reshape(x_hat.shape))
    return out
