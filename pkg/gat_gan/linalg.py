""" Symmetric eigen-decomposition by cyclic Jacobi rotations, and the PSD matrix square root built on it """
import logging

import numpy as np

from .errors import DimensionError

logger = logging.getLogger(__name__)


def jacobi_eigh(matrix, tol=1e-15, max_sweeps=100):
    """
    * Eigen-decomposition of a real symmetric matrix.
    *
    * Each sweep visits every off-diagonal pair (p, q) once and applies the
    * rotation that zeroes a[p, q]. Iteration stops when the off-diagonal
    * Frobenius norm falls below tol times the matrix norm.
    * @param {np.ndarray} matrix Symmetric [n, n]
    * @param {float} tol Relative off-diagonal tolerance
    * @param {int} max_sweeps Upper bound on sweeps
    * @returns {tuple} (eigenvalues [n], eigenvectors as columns [n, n])
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f'jacobi_eigh needs a square matrix, got {list(a.shape)}')
    n = a.shape[0]
    vectors = np.eye(n)
    scale = np.linalg.norm(a)
    for sweep in range(max_sweeps):
        off = np.sqrt(max(np.sum(a ** 2) - np.sum(np.diag(a) ** 2), 0.0))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                col_p, col_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q
                row_p, row_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vec_p, vec_q = vectors[:, p].copy(), vectors[:, q].copy()
                vectors[:, p] = c * vec_p - s * vec_q
                vectors[:, q] = s * vec_p + c * vec_q
    else:
        logger.warning('jacobi_eigh did not converge in %d sweeps', max_sweeps)
    logger.debug('jacobi_eigh converged after %d sweeps for n=%d', sweep, n)
    return np.diag(a).copy(), vectors


def sqrtm_psd(matrix):
    """ Square root of a symmetric PSD matrix; negative eigenvalues from rounding are clamped to 0 """
    values, vectors = jacobi_eigh(matrix)
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ vectors.T


def trace_sqrt_product(a, b):
    """ Tr(sqrt(a b)) through the symmetric form sqrt(sqrt(a) b sqrt(a)) """
    root = sqrtm_psd(a)
    inner = root @ b @ root
    values, _ = jacobi_eigh((inner + inner.T) / 2.0)
    return float(np.sum(np.sqrt(np.clip(values, 0.0, None))))
