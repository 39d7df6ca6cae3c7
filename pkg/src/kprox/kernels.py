"""Pairwise cost and Gibbs-kernel construction.

The N x N cost matrix is a weighted squared Euclidean distance between
two feature clouds (position-like and velocity-like blocks, pre-scaled
by the inverse drift weights), and the Gibbs kernel is its row-shifted
elementwise exponential. Row shifting subtracts each row's minimum cost
before exponentiating; the fixed-point output is exactly invariant
under that row scaling, and it keeps the kernel from underflowing to an
all-zero row when costs are large relative to the entropic weight.

Two interchangeable lanes compute the N^2 inner loop: a compiled
extension (built from _speedups.pyx) and a numpy/scipy reference.
Import picks the extension when present; KPROX_NO_SPEEDUPS=1 forces
the reference lane. Both lanes must agree to near machine precision
(tested), so everything downstream is lane-agnostic.
"""

from __future__ import annotations

import os

import numpy as np
from scipy.spatial.distance import cdist

try:  # pragma: no cover - exercised via the lane-equivalence tests
    from . import _speedups as _ext
except ImportError:  # pragma: no cover
    _ext = None

if os.environ.get("KPROX_NO_SPEEDUPS"):
    _ext = None


def backend() -> str:
    """Which lane computes the N^2 kernels: 'compiled' or 'numpy'."""
    return "compiled" if _ext is not None else "numpy"


def cost_matrix_numpy(feat_prev: np.ndarray, feat_next: np.ndarray) -> np.ndarray:
    """Reference lane: C[i, j] = ||feat_prev[i] - feat_next[j]||^2."""
    return cdist(feat_prev, feat_next, metric="sqeuclidean")


def gibbs_rowshift_numpy(feat_prev, feat_next, two_eps):
    cost = cost_matrix_numpy(feat_prev, feat_next)
    row_min = cost.min(axis=1)
    kernel = np.exp(-(cost - row_min[:, None]) / two_eps)
    return kernel, row_min


def gibbs_rowshift(feat_prev: np.ndarray, feat_next: np.ndarray, two_eps: float):
    """Row-shifted Gibbs kernel of the pairwise squared distances.

    Returns (kernel, row_min) where
    kernel[i, j] = exp(-(C[i, j] - row_min[i]) / two_eps), so every row
    has maximum entry 1.
    """
    feat_prev = np.ascontiguousarray(feat_prev, dtype=np.float64)
    feat_next = np.ascontiguousarray(feat_next, dtype=np.float64)
    if feat_prev.ndim != 2 or feat_next.ndim != 2 or feat_prev.shape[1] != feat_next.shape[1]:
        raise ValueError("feature clouds must be 2-D with equal width")
    if two_eps <= 0.0:
        raise ValueError("two_eps must be positive")
    if _ext is not None:
        kernel = np.empty((feat_prev.shape[0], feat_next.shape[0]))
        row_min = np.empty(feat_prev.shape[0])
        _ext.cost_gibbs(feat_prev, feat_next, float(two_eps), kernel, row_min)
        return kernel, row_min
    return gibbs_rowshift_numpy(feat_prev, feat_next, two_eps)
