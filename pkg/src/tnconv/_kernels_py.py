"""Pure numpy implementations of the hot kernels (used when the compiled core is absent)."""

from __future__ import annotations

import numpy as np


def quad_max_affine(
    points: np.ndarray, grads: np.ndarray, offsets: np.ndarray, nodes: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Σ_q w_q max_k (⟨g_k, z_p − y_q⟩ + o_k) and its gradient (the weighted active slopes)."""
    points = np.ascontiguousarray(points, dtype=float)
    P = points.shape[0]
    vals = np.empty(P)
    out_g = np.empty_like(points)
    base_nodes = nodes @ grads.T  # Q×K
    for p in range(P):
        lv = points[p] @ grads.T + offsets  # K
        pieces = lv[None, :] - base_nodes  # Q×K
        arg = np.argmax(pieces, axis=1)
        vals[p] = float(weights @ pieces[np.arange(len(arg)), arg])
        out_g[p] = weights @ grads[arg]
    return vals, out_g


def min_dist_to_set(A: np.ndarray, targets: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each row a_p: (min_k ‖a_p − t_k‖, argmin k)."""
    A = np.ascontiguousarray(A, dtype=float)
    d2 = ((A[:, None, :] - targets[None, :, :]) ** 2).sum(axis=2)
    arg = np.argmin(d2, axis=1)
    return np.sqrt(d2[np.arange(len(arg)), arg]), arg.astype(np.int64)
