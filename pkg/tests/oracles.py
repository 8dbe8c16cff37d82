"""Independent reference implementations the test suite checks against.

Each oracle recomputes a quantity through a deliberately different route
than the library (pixel enumeration instead of closed-form geometry,
exhaustive search instead of optimized assignment, memoized recursion
instead of an iterative table, numpy array ops instead of symbolic group
composition), so agreement is evidence of correctness rather than a
shared bug.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np


# --- box overlap by counting pixels -----------------------------------------


def modf1_by_pixel_count(
    pred: tuple[int, int, int, int],
    gt: tuple[int, int, int, int],
    grid: int = 64,
    w_fp: float = 0.1,
    w_fn: float = 1.0,
) -> float:
    """Weighted F1 of two integer half-open boxes by rasterizing them onto a
    grid and counting member cells."""
    pmask = np.zeros((grid, grid), dtype=bool)
    gmask = np.zeros((grid, grid), dtype=bool)
    pmask[pred[1] : pred[3], pred[0] : pred[2]] = True
    gmask[gt[1] : gt[3], gt[0] : gt[2]] = True
    tp = int((pmask & gmask).sum())
    fp = int((pmask & ~gmask).sum())
    fn = int((~pmask & gmask).sum())
    if tp == 0:
        return 0.0
    return 2.0 * tp / (2.0 * tp + w_fp * fp + w_fn * fn)


# --- assignment by exhaustive permutation ------------------------------------


def best_assignment_total(sim: np.ndarray) -> float:
    """Maximum total similarity over all one-to-one assignments, by trying
    every injection from the smaller side into the larger."""
    n, m = sim.shape
    if n == 0 or m == 0:
        return 0.0
    if n > m:
        return best_assignment_total(sim.T)
    return max(
        sum(sim[i, j] for i, j in enumerate(perm))
        for perm in itertools.permutations(range(m), n)
    )


# --- edit distance by memoized recursion --------------------------------------


def levenshtein_recursive(a: str, b: str) -> int:
    @lru_cache(maxsize=None)
    def rec(i: int, j: int) -> int:
        if i == 0:
            return j
        if j == 0:
            return i
        return min(
            rec(i - 1, j) + 1,
            rec(i, j - 1) + 1,
            rec(i - 1, j - 1) + (a[i - 1] != b[j - 1]),
        )

    return rec(len(a), len(b))


def anls_reference(pred: str, refs: list[str], threshold: float = 0.5) -> float:
    p = pred.lower().strip()
    best = 0.0
    for r in refs:
        g = r.lower().strip()
        longest = max(len(p), len(g))
        sim = 1.0 if longest == 0 else 1.0 - levenshtein_recursive(p, g) / longest
        best = max(best, sim)
    return best if best >= threshold else 0.0


# --- quarter-turn / mirror group on arrays ------------------------------------


def d4_transform(arr: np.ndarray, quarter_turns: int, mirrored: bool) -> np.ndarray:
    """Mirror (left-right) first, then rotate clockwise by quarter turns."""
    out = np.fliplr(arr) if mirrored else arr
    return np.rot90(out, -(quarter_turns % 4))


# --- numeric gradients ---------------------------------------------------------


def central_difference(f, theta: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of scalar f over array theta."""
    grad = np.zeros_like(theta, dtype=np.float64)
    it = np.nditer(theta, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        up = theta.copy()
        dn = theta.copy()
        up[idx] += eps
        dn[idx] -= eps
        grad[idx] = (f(up) - f(dn)) / (2.0 * eps)
        it.iternext()
    return grad
