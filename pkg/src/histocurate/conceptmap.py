"""Concept maps: positional mean subtraction, PCA, and positive-part
heatmap rendering of principal-component scores over a tile grid."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def positional_mean_subtract(positions, vectors: np.ndarray) -> np.ndarray:
    """Subtract, at each grid position, the mean of all vectors sharing it."""
    x = np.asarray(vectors, dtype=np.float64)
    pos = [tuple(int(v) for v in p) for p in positions]
    if len(pos) != x.shape[0]:
        raise DataError(f"{len(pos)} positions but {x.shape[0]} vectors")
    groups: dict[tuple, list[int]] = {}
    for i, p in enumerate(pos):
        groups.setdefault(p, []).append(i)
    out = x.copy()
    for rows in groups.values():
        out[rows] -= x[rows].mean(axis=0)
    return out


def _jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors-as-columns), unsorted.
    """
    a = np.array(matrix, dtype=np.float64)
    d = a.shape[0]
    v = np.eye(d)
    scale = max(np.sqrt((a * a).sum()), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(max((a * a).sum() - (np.diag(a) ** 2).sum(), 0.0))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:  # theta**2 would overflow
                    t = 1.0 / (2.0 * theta)
                elif theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                vec_p, vec_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
    return np.diag(a).copy(), v


def _power_iteration_eigh(matrix: np.ndarray, n: int, tol: float = 1e-9, max_iter: int = 1000):
    """Top-n eigenpairs by power iteration with deflation."""
    b = np.array(matrix, dtype=np.float64)
    d = b.shape[0]
    values = np.empty(n)
    vectors = np.empty((d, n))
    for i in range(n):
        vec = np.ones(d) / np.sqrt(d)
        vec[i % d] += 0.5  # breaks symmetry deterministically
        vec /= np.linalg.norm(vec)
        for _ in range(max_iter):
            nxt = b @ vec
            norm = np.linalg.norm(nxt)
            if norm == 0:
                break
            nxt /= norm
            if np.linalg.norm(nxt - vec) < tol:
                vec = nxt
                break
            vec = nxt
        lam = float(vec @ (matrix @ vec))
        values[i] = lam
        vectors[:, i] = vec
        b -= lam * np.outer(vec, vec)
    return values, vectors


def pca_fit(matrix: np.ndarray, n_components: int) -> tuple[np.ndarray, np.ndarray]:
    """Principal components of already-centered data.

    Returns (components (n, D) with orthonormal rows, eigenvalues (n,)
    non-increasing). Sign is fixed so each component's largest-magnitude
    coordinate is positive. Covariance uses the 1/N normalization.
    """
    x = np.asarray(matrix, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError(f"need an N x D matrix with N >= 2, got shape {x.shape}")
    n, d = x.shape
    if n_components > min(n, d) or n_components < 1:
        raise DataError(f"n_components must be in [1, {min(n, d)}], got {n_components}")

    cov = (x.T @ x) / n
    if d <= 512:
        values, vectors = _jacobi_eigh(cov)
    else:
        values, vectors = _power_iteration_eigh(cov, n_components)

    order = np.argsort(values)[::-1][:n_components]
    eigenvalues = np.maximum(values[order], 0.0)
    components = vectors[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return components, eigenvalues


def project(matrix: np.ndarray, components: np.ndarray) -> np.ndarray:
    """Component scores of (centered) data rows."""
    return np.asarray(matrix, dtype=np.float64) @ np.asarray(components, dtype=np.float64).T


def component_heatmap(scores: np.ndarray, positive_only: bool = True) -> np.ndarray:
    """Min-max normalize a score grid to an 8-bit grayscale image.

    With positive_only, negative scores are clamped to 0 first. A constant
    grid renders as all zeros.
    """
    grid = np.asarray(scores, dtype=np.float64)
    if grid.size == 0:
        raise DataError("empty score grid")
    if positive_only:
        grid = np.maximum(grid, 0.0)
    lo, hi = grid.min(), grid.max()
    if hi <= lo:
        return np.zeros(grid.shape, dtype=np.uint8)
    return np.rint((grid - lo) / (hi - lo) * 255.0).astype(np.uint8)
