"""Symmetric-matrix helpers shared by the samplers and the update step."""
from __future__ import annotations

import numpy as np

__all__ = ["psd_factor", "floored_inverse_apply", "sym_eig"]


def sym_eig(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of the symmetrized input."""
    a = np.asarray(a, dtype=float)
    return np.linalg.eigh(0.5 * (a + a.T))


def psd_factor(cov: np.ndarray, neg_tol: float = 1e-8) -> np.ndarray:
    """Symmetric square-root factor L with L @ L.T == cov.

    Negative eigenvalues are clipped to zero, which tolerates the nearly
    singular covariances produced by smooth spatial kernels. Eigenvalues below
    -neg_tol * max_eig indicate a genuinely indefinite matrix and are rejected.
    """
    vals, vecs = sym_eig(cov)
    scale = max(vals[-1], 0.0)
    if vals[0] < -neg_tol * max(scale, 1e-300):
        raise ValueError(
            f"matrix is not positive semi-definite: min eigenvalue {vals[0]:.3e} "
            f"(max {scale:.3e})"
        )
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def floored_inverse_apply(a: np.ndarray, b: np.ndarray, floor: float) -> np.ndarray:
    """Solve a @ x = b for symmetric `a` with eigenvalues clamped to `floor`.

    Returns the same result as an explicit inverse built from the clamped
    spectrum; `floor` must be positive.
    """
    if floor <= 0.0:
        raise ValueError("eigenvalue floor must be positive")
    vals, vecs = sym_eig(a)
    vals = np.maximum(vals, floor)
    return vecs @ ((vecs.T @ b) / vals[:, None])
