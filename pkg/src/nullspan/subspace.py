"""Harmless-perturbation subspaces of lowered layers.

The nullspace N(A) of a layer's equivalent matrix contains exactly the
input perturbations the layer cannot see: A @ (z + delta) = A @ z. This
module computes an orthonormal basis U of that subspace, decomposes
arbitrary perturbations into their invisible (parallel) and effective
(orthogonal) parts, solves for the least harmful direction when the
subspace is trivial, and classifies perturbation pairs by whether they
produce identical, proportional, or different layer outputs.

Projections use U @ (U.T @ v); with orthonormal columns this equals the
textbook projector U (U.T U)^-1 U.T without materializing an n x n
matrix.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .layers import EquivalentMatrix
from .linalg import orthonormal_nullspace, smallest_eigenpair_gram

__all__ = [
    "EmptySubspaceError",
    "NullspaceBasis",
    "Decomposition",
    "LeastHarmful",
    "PairVerdict",
    "IDENTICAL_OUTPUT",
    "PROPORTIONAL",
    "DIFFERENT_OUTPUT",
    "harmless_basis",
    "orthogonal_decompose",
    "projection_matrix",
    "sample_harmless",
    "least_harmful",
    "classify_pair",
    "save_basis",
    "load_basis",
]

IDENTICAL_OUTPUT = "identical-output"
PROPORTIONAL = "proportional"
DIFFERENT_OUTPUT = "different-output"

#: Relative tolerance for all output-equivalence verdicts, one order of
#: magnitude above the worst factorization residual seen at desk scale.
VERDICT_RTOL = 1e-9


class EmptySubspaceError(ValueError):
    """The harmless subspace is {0}; the requested operation needs d >= 1."""


@dataclass(frozen=True)
class NullspaceBasis:
    """Orthonormal basis (columns of `basis`) of a harmless subspace."""

    basis: np.ndarray
    source: str = ""

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass(frozen=True)
class Decomposition:
    """Split delta = parallel + orthogonal with parallel in span(U)."""

    parallel: np.ndarray
    orthogonal: np.ndarray


@dataclass(frozen=True)
class LeastHarmful:
    """Unit direction minimizing ||A @ v||, with residual = ||A v||^2.

    in_nullspace flags the degenerate case where the matrix turned out
    to have a nontrivial nullspace after all, so the direction is
    outright harmless rather than least harmful.
    """

    direction: np.ndarray
    residual: float
    in_nullspace: bool


@dataclass(frozen=True)
class PairVerdict:
    kind: str
    alpha: float | None = None


def harmless_basis(eq: EquivalentMatrix) -> NullspaceBasis:
    """Orthonormal nullspace basis of a lowered layer."""
    u = orthonormal_nullspace(eq.matrix)
    source = f"{eq.layer_kind} {eq.input_shape}->{eq.output_shape}"
    return NullspaceBasis(basis=u, source=source)


def orthogonal_decompose(basis: NullspaceBasis, delta: np.ndarray) -> Decomposition:
    """Unique split of delta into its component inside span(U) and the
    remainder orthogonal to it. The orthogonal part alone determines the
    layer output; it does not depend on which orthonormal basis spans
    the subspace.
    """
    delta = np.asarray(delta, dtype=np.float64).ravel()
    if delta.size != basis.ambient_dim:
        raise ValueError(f"vector length {delta.size} != ambient dim {basis.ambient_dim}")
    parallel = basis.basis @ (basis.basis.T @ delta)
    return Decomposition(parallel=parallel, orthogonal=delta - parallel)


def projection_matrix(basis: NullspaceBasis, max_dim: int = 512) -> np.ndarray:
    """Materialized projector U @ U.T, for inspection at small sizes only."""
    if basis.ambient_dim > max_dim:
        raise ValueError(
            f"refusing to materialize a {basis.ambient_dim}x{basis.ambient_dim} projector "
            f"(limit {max_dim}); use orthogonal_decompose instead"
        )
    return basis.basis @ basis.basis.T


def sample_harmless(basis: NullspaceBasis, seed: int, target_norm: float,
                    norm_kind: str = "l2") -> np.ndarray:
    """Seeded random direction inside the harmless subspace, rescaled so
    its l2 or linf norm equals target_norm."""
    if basis.dim == 0:
        raise EmptySubspaceError("harmless subspace is {0}; nothing to sample")
    if target_norm <= 0:
        raise ValueError(f"target_norm must be positive, got {target_norm}")
    if norm_kind not in ("l2", "linf"):
        raise ValueError(f"norm_kind must be 'l2' or 'linf', got {norm_kind!r}")
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(basis.dim)
    delta = basis.basis @ c
    cur = np.linalg.norm(delta) if norm_kind == "l2" else np.max(np.abs(delta))
    return delta * (target_norm / cur)


def _sigma_max_bound(matrix: sp.csr_matrix) -> float:
    # Schur bound: sigma_max^2 <= ||A||_1 * ||A||_inf, computable in O(nnz).
    a = abs(matrix)
    col_sums = np.asarray(a.sum(axis=0)).ravel()
    row_sums = np.asarray(a.sum(axis=1)).ravel()
    if col_sums.size == 0 or row_sums.size == 0:
        return 0.0
    return float(np.sqrt(col_sums.max() * row_sums.max()))


def least_harmful(eq: EquivalentMatrix) -> LeastHarmful:
    """Unit perturbation with the smallest layer-output energy.

    Meaningful when the layer has no harmless subspace (full column
    rank); if it does have one, the returned direction is harmless
    (residual ~ 0) and in_nullspace is set. Wide matrices are padded
    with zero rows before the eigenpair call, which leaves the Gram
    matrix unchanged.
    """
    m = eq.matrix
    if m.shape[1] > m.shape[0]:
        m = sp.vstack([m, sp.csr_matrix((m.shape[1] - m.shape[0], m.shape[1]))]).tocsr()
    v, lam = smallest_eigenpair_gram(m)
    bound = _sigma_max_bound(eq.matrix)
    tol = bound * max(eq.rows, eq.cols) * np.finfo(np.float64).eps
    return LeastHarmful(direction=v, residual=lam, in_nullspace=lam <= tol * tol)


def classify_pair(basis: NullspaceBasis, eq: EquivalentMatrix,
                  delta: np.ndarray, delta_hat: np.ndarray) -> PairVerdict:
    """Relate the layer outputs of two perturbations via their orthogonal
    components.

    Returns identical-output when the orthogonal components coincide,
    proportional(alpha) when they are parallel with ratio alpha (so the
    outputs satisfy A delta = alpha * A delta_hat), and different-output
    otherwise. Comparisons use VERDICT_RTOL relative to the component
    norms. Two outright-harmless perturbations (both components zero)
    count as identical-output: both outputs are zero.
    """
    d = orthogonal_decompose(basis, delta).orthogonal
    dh = orthogonal_decompose(basis, delta_hat).orthogonal
    nd, ndh = np.linalg.norm(d), np.linalg.norm(dh)
    tol = VERDICT_RTOL * max(nd, ndh, 1.0)
    if np.linalg.norm(d - dh) <= tol:
        return PairVerdict(IDENTICAL_OUTPUT)
    if ndh <= tol:
        return PairVerdict(DIFFERENT_OUTPUT)
    alpha = float(d @ dh) / float(dh @ dh)
    if np.linalg.norm(d - alpha * dh) <= tol:
        return PairVerdict(PROPORTIONAL, alpha=alpha)
    return PairVerdict(DIFFERENT_OUTPUT)


# --- binary serialization ----------------------------------------------
#
# Frozen layout: magic "NSPB", then little-endian u32 version (currently
# 1), u32 n, u32 d, then n*d float64 little-endian, column-major.

_MAGIC = b"NSPB"
_VERSION = 1


def save_basis(basis: NullspaceBasis, path) -> None:
    n, d = basis.ambient_dim, basis.dim
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, n, d))
        fh.write(np.asfortranarray(basis.basis, dtype="<f8").tobytes(order="F"))


def load_basis(path) -> NullspaceBasis:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"not a basis file: bad magic {magic!r}")
        version, n, d = struct.unpack("<III", fh.read(12))
        if version != _VERSION:
            raise ValueError(f"unsupported basis file version {version}")
        data = fh.read(8 * n * d)
        if len(data) != 8 * n * d:
            raise ValueError("truncated basis file")
        u = np.frombuffer(data, dtype="<f8").reshape((n, d), order="F")
    return NullspaceBasis(basis=np.ascontiguousarray(u), source=f"file:{path}")
