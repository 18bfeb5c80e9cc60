"""Small dense linear algebra for matrices of size up to a few dozen.

Everything here works on plain ``numpy`` arrays and is written out by hand:
a cyclic two-sided Jacobi eigensolver, a one-sided (Hestenes) Jacobi SVD
used for rank and kernel detection, LU with partial pivoting for
determinants and linear solves, and Gram-Schmidt orthonormalization.

The functions are pure; none of them keep state between calls.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularMatrixError

EPS = np.finfo(float).eps

DEFAULT_RANK_TOL = 1e-8


@dataclass(frozen=True)
class SymSpectrum:
    """Eigen-decomposition of a symmetric matrix, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def _as_matrix(A, name="matrix"):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def _check_symmetric(A, rtol=1e-12):
    if A.shape[0] != A.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if A.size and np.max(np.abs(A - A.T)) > rtol * scale:
        raise InvalidInputError("matrix is not symmetric")


def sym_eig(A, tol=1e-14, max_sweeps=100):
    """Full spectrum of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all off-diagonal pairs until the off-diagonal Frobenius
    norm drops below ``tol * ||A||_F``.

    Returns
    -------
    SymSpectrum
        Eigenvalues in ascending order with orthonormal eigenvectors.
    """
    A = _as_matrix(A)
    _check_symmetric(A)
    n = A.shape[0]
    a = 0.5 * (A + A.T)
    V = np.eye(n)
    scale = np.linalg.norm(a)
    if n == 0 or scale == 0.0:
        return SymSpectrum(np.zeros(n), V)

    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise SingularMatrixError("Jacobi eigensolver did not converge")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return SymSpectrum(w[order], V[:, order])


def sym_eigvals(A):
    return sym_eig(A).eigenvalues


def _hestenes(M, max_sweeps=100):
    """One-sided Jacobi: returns (singular values, right vectors), descending."""
    W = M.copy()
    n = W.shape[1]
    V = np.eye(n)
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                wp = W[:, p]
                wq = W[:, q]
                alpha = wp @ wp
                beta = wq @ wq
                gamma = wp @ wq
                if gamma == 0.0 or abs(gamma) <= EPS * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                if zeta >= 0:
                    t = 1.0 / (zeta + np.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                W[:, p], W[:, q] = c * wp - s * wq, s * wp + c * wq
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
        if not rotated:
            break
    sv = np.sqrt(np.sum(W * W, axis=0))
    order = np.argsort(-sv, kind="stable")
    return sv[order], V[:, order]


def singular_values(M):
    """Singular values of ``M`` in descending order."""
    M = _as_matrix(M)
    if M.shape[1] == 0:
        return np.zeros(0)
    return _hestenes(M)[0]


def rank_kernel(M, tol=DEFAULT_RANK_TOL, scale=None):
    """Numerical rank and an orthonormal kernel basis of ``M``.

    A singular value counts toward the rank when it exceeds
    ``tol`` times the largest one. ``scale`` puts a floor under that
    reference value, for blocks cut from a matrix of known norm.

    Returns
    -------
    rank : int
    kernel : ndarray, shape (cols, cols - rank)
    """
    if not 0.0 < tol < 1.0:
        raise InvalidInputError("rank tolerance must lie in (0, 1)")
    M = _as_matrix(M)
    cols = M.shape[1]
    if cols == 0:
        return 0, np.zeros((0, 0))
    sv, V = _hestenes(M)
    smax = max(sv[0], 0.0 if scale is None else float(scale))
    if smax == 0.0:
        return 0, np.eye(cols)
    keep = sv > tol * smax
    rank = int(np.count_nonzero(keep))
    return rank, V[:, rank:].copy()


def _lu(A):
    """In-place style LU with partial pivoting. Returns (LU, perm, sign)."""
    LU = A.copy()
    n = LU.shape[0]
    perm = np.arange(n)
    sign = 1
    for k in range(n):
        p = k + int(np.argmax(np.abs(LU[k:, k])))
        if p != k:
            LU[[k, p]] = LU[[p, k]]
            perm[[k, p]] = perm[[p, k]]
            sign = -sign
        pivot = LU[k, k]
        if pivot == 0:
            continue
        LU[k + 1:, k] /= pivot
        LU[k + 1:, k + 1:] -= np.outer(LU[k + 1:, k], LU[k, k + 1:])
    return LU, perm, sign


def _lu_solve(LU, perm, B):
    n = LU.shape[0]
    X = B[perm].astype(LU.dtype if np.iscomplexobj(LU) else float, copy=True)
    for k in range(n):
        X[k + 1:] -= np.outer(LU[k + 1:, k], X[k])
    for k in range(n - 1, -1, -1):
        X[k] /= LU[k, k]
        X[:k] -= np.outer(LU[:k, k], X[k])
    return X


def complex_det(M):
    """Determinant of a square complex matrix via pivoted elimination."""
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] == 0:
        return 1.0 + 0.0j
    LU, _, sign = _lu(M)
    return complex(sign * np.prod(np.diag(LU)))


def real_det(M):
    M = _as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"expected a square matrix, got shape {M.shape}")
    if M.shape[0] == 0:
        return 1.0
    LU, _, sign = _lu(M)
    return float(sign * np.prod(np.diag(LU)))


def solve_linear(A, B):
    """Solve ``A X = B`` for square, well-conditioned ``A``.

    Raises SingularMatrixError when a pivot vanishes or the 1-norm
    condition number exceeds ``1 / (100 eps)``.
    """
    A = _as_matrix(A, "A")
    B = np.asarray(B, dtype=float)
    vector = B.ndim == 1
    if vector:
        B = B[:, None]
    n = A.shape[0]
    if A.shape[1] != n or B.shape[0] != n:
        raise InvalidInputError(f"incompatible shapes {A.shape} and {B.shape}")
    if n == 0:
        return B.copy()
    LU, perm, _ = _lu(A)
    if np.any(np.diag(LU) == 0.0):
        raise SingularMatrixError("matrix is exactly singular")
    inv = _lu_solve(LU, perm, np.eye(n))
    cond = np.max(np.sum(np.abs(A), axis=0)) * np.max(np.sum(np.abs(inv), axis=0))
    if not np.isfinite(cond) or cond > 1.0 / (100.0 * EPS):
        raise SingularMatrixError(f"matrix is singular to working precision (cond ~ {cond:.3g})")
    X = _lu_solve(LU, perm, B)
    return X[:, 0] if vector else X


def orthonormal_columns(M):
    """Orthonormal basis of the column space of a full-rank ``M``.

    Modified Gram-Schmidt followed by a second re-orthogonalization pass,
    which keeps the basis orthonormal to roundoff.
    """
    Q = np.array(M, dtype=float, copy=True)
    m = Q.shape[1]
    for _ in range(2):
        for j in range(m):
            for i in range(j):
                Q[:, j] -= (Q[:, i] @ Q[:, j]) * Q[:, i]
            nrm = np.sqrt(Q[:, j] @ Q[:, j])
            if nrm == 0.0:
                raise SingularMatrixError("columns are linearly dependent")
            Q[:, j] /= nrm
    return Q


def pivoted_columns(M, k):
    """Indices of ``k`` columns of ``M`` chosen by column-pivoted Gram-Schmidt.

    At each stage the column with the largest remaining norm is taken;
    ties go to the lowest index. Returned indices are sorted.
    """
    W = np.array(M, dtype=float, copy=True)
    chosen = []
    for _ in range(k):
        norms = np.sum(W * W, axis=0)
        norms[chosen] = -1.0
        j = int(np.argmax(norms))  # argmax returns the first maximum
        chosen.append(j)
        nrm = np.sqrt(max(norms[j], 0.0))
        if nrm == 0.0:
            continue
        u = W[:, j] / nrm
        W -= np.outer(u, u @ W)
    return tuple(sorted(chosen))
