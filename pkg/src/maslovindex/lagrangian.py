"""Lagrangian subspaces of R^{2n}, their charts, and the Det^2 map.

Coordinates are ordered ``(q^1..q^n, p^1..p^n)`` and identified with
``q + i p`` in C^n. The reference Lagrangian is ``sigma = {0} x R^n``.
Index sets ``K`` are 0-based tuples of sorted integers.

A chart ``K`` parametrizes the Lagrangians transversal to
``sigma_K = J_K sigma`` by symmetric matrices ``S`` through
``S -> J_K graph(S)``, where ``J_K`` multiplies the ``K`` coordinates by i.
"""

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from . import numkernel as nk
from .errors import ChartDomainError, InvalidInputError, SingularMatrixError

LAGRANGIAN_TOL = 1e-10


def symplectic_matrix(n):
    """The complex structure ``J: (q, p) -> (-p, q)`` as a 2n x 2n matrix."""
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = -np.eye(n)
    J[n:, :n] = np.eye(n)
    return J


def omega(u, v):
    """Symplectic pairing ``-<q_u, p_v> + <p_u, q_v>``."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    n = u.shape[0] // 2
    return float(-u[:n] @ v[n:] + u[n:] @ v[:n])


@dataclass(frozen=True)
class LagrangianFrame:
    """A 2n x n matrix whose columns span a Lagrangian subspace.

    The basis is arbitrary; two frames describe the same Lagrangian when
    their column spaces agree (see :meth:`same_subspace`).
    """

    M: np.ndarray = field(repr=False)

    def __post_init__(self):
        M = np.array(self.M, dtype=float)
        if M.ndim != 2 or M.shape[0] != 2 * M.shape[1] or M.shape[1] < 1:
            raise InvalidInputError(f"frame must have shape (2n, n), got {M.shape}")
        if not np.all(np.isfinite(M)):
            raise InvalidInputError("frame has non-finite entries")
        M.setflags(write=False)
        object.__setattr__(self, "M", M)

    @property
    def n(self):
        return self.M.shape[1]

    @property
    def q(self):
        return self.M[: self.n]

    @property
    def p(self):
        return self.M[self.n:]

    def orthonormal(self):
        return LagrangianFrame(nk.orthonormal_columns(self.M))

    def isotropy_residual(self):
        Q = nk.orthonormal_columns(self.M)
        return float(np.max(np.abs(Q.T @ symplectic_matrix(self.n) @ Q)))

    def gap(self, other):
        """Spectral-norm distance between the orthogonal projectors."""
        A = nk.orthonormal_columns(self.M)
        B = nk.orthonormal_columns(as_frame(other).M)
        D = A @ A.T - B @ B.T
        return float(np.max(np.abs(nk.sym_eigvals(D)))) if D.size else 0.0

    def same_subspace(self, other, tol=1e-8):
        other = as_frame(other)
        if other.n != self.n:
            return False
        big = np.hstack([self.M, other.M])
        rank, _ = nk.rank_kernel(big, tol)
        return rank == self.n


def as_frame(obj):
    return obj if isinstance(obj, LagrangianFrame) else LagrangianFrame(obj)


@dataclass(frozen=True)
class ChartCoords:
    """Chart index set ``K`` and symmetric coordinates ``S``.

    ``asymmetry`` records ``max|S - S^T|`` before symmetrization when the
    coordinates were extracted from a frame.
    """

    K: tuple
    S: np.ndarray = field(repr=False)
    asymmetry: float = 0.0

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        n = S.shape[0]
        if S.ndim != 2 or S.shape[1] != n:
            raise InvalidInputError("chart coordinates must be square")
        K = tuple(sorted(int(k) for k in self.K))
        if len(set(K)) != len(K) or any(k < 0 or k >= n for k in K):
            raise InvalidInputError(f"invalid index set {self.K} for n={n}")
        if np.max(np.abs(S - S.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(S), initial=0.0)):
            raise InvalidInputError("chart coordinates must be symmetric")
        S.setflags(write=False)
        object.__setattr__(self, "S", S)
        object.__setattr__(self, "K", K)

    @property
    def n(self):
        return self.S.shape[0]

    @property
    def S1(self):
        """The K x K block, whose kernel is the intersection with sigma."""
        K = list(self.K)
        return self.S[np.ix_(K, K)]


def canonical_sigma(n):
    if n < 1:
        raise InvalidInputError("dimension must be at least 1")
    return LagrangianFrame(np.vstack([np.zeros((n, n)), np.eye(n)]))


def horizontal(n):
    """The Lagrangian R^n x {0}."""
    return LagrangianFrame(np.vstack([np.eye(n), np.zeros((n, n))]))


def graph_frame(S):
    S = np.asarray(S, dtype=float)
    return LagrangianFrame(np.vstack([np.eye(S.shape[0]), S]))


def is_lagrangian(M, tol=LAGRANGIAN_TOL):
    """True iff ``M`` has full column rank n and ``M^T J M`` vanishes."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != 2 * M.shape[1]:
        raise InvalidInputError(f"expected shape (2n, n), got {M.shape}")
    n = M.shape[1]
    rank, _ = nk.rank_kernel(M)
    if rank < n:
        return False
    W = M.T @ symplectic_matrix(n) @ M
    return float(np.max(np.abs(W))) <= tol * max(1.0, float(np.linalg.norm(M, 2)) ** 2)


def intersection_dim(lam, tol=nk.DEFAULT_RANK_TOL):
    """``dim(lam ∩ sigma)`` read off as the corank of the q-block.

    The q-block is cut from an orthonormal frame, so its singular values
    are measured against 1 rather than against each other.
    """
    lam = as_frame(lam)
    Q = nk.orthonormal_columns(lam.M)[: lam.n]
    rank, _ = nk.rank_kernel(Q, tol, scale=1.0)
    return lam.n - rank


def q_singular_values(lam):
    """Singular values of the q-block of an orthonormalized frame, descending.

    They lie in [0, 1]; the smallest measures the distance to the train
    ``{lam : lam ∩ sigma != 0}``.
    """
    lam = as_frame(lam)
    Q = nk.orthonormal_columns(lam.M)[: lam.n]
    return nk.singular_values(Q)


def _chart_from_directions(P_dirs):
    k = P_dirs.shape[1]
    if k == 0:
        return ()
    return nk.pivoted_columns(P_dirs.T, k)


def select_chart(lam, tol=nk.DEFAULT_RANK_TOL, k=None):
    """Index set ``K`` with ``|K| = dim(lam ∩ sigma)`` and lam transversal to sigma_K.

    The p-components of a basis of ``lam ∩ sigma`` are completed to a
    basis of R^n by canonical vectors; ``K`` is the complement of the
    completing indices. Pivoting picks the most independent rows and
    resolves ties toward the lowest index.

    Passing ``k`` forces the use of the ``k`` smallest singular directions
    of the q-block (a near-intersection), which is what crossing
    detection needs away from exact contact.
    """
    lam = as_frame(lam)
    n = lam.n
    F = nk.orthonormal_columns(lam.M)
    Q, P = F[:n], F[n:]
    if k is None:
        _, C = nk.rank_kernel(Q, tol, scale=1.0)
    else:
        if not 0 <= k <= n:
            raise InvalidInputError(f"k must lie in [0, {n}]")
        _, V = nk._hestenes(Q)
        C = V[:, n - k:]
    return _chart_from_directions(P @ C)


def _apply_JK(M, K, inverse=False):
    n = M.shape[0] // 2
    out = np.array(M, dtype=float, copy=True)
    for i in K:
        q = M[i].copy()
        p = M[n + i].copy()
        if inverse:
            out[i], out[n + i] = p, -q
        else:
            out[i], out[n + i] = -p, q
    return out


def chart_top_bottom(lam, K):
    """Blocks ``(top, bottom)`` of ``J_K^{-1}`` applied to an orthonormal frame."""
    lam = as_frame(lam)
    F = _apply_JK(nk.orthonormal_columns(lam.M), K, inverse=True)
    return F[: lam.n], F[lam.n:]


def chart_validity(lam, K):
    """Smallest singular value of the chart denominator (0 = outside the chart)."""
    top, _ = chart_top_bottom(lam, K)
    return float(nk.singular_values(top)[-1])


def to_chart(lam, K):
    """Coordinates ``S`` of ``lam`` in chart ``K``; raises ChartDomainError off-chart."""
    lam = as_frame(lam)
    K = tuple(sorted(K))
    top, bottom = chart_top_bottom(lam, K)
    try:
        # S top = bottom  <=>  top^T S^T = bottom^T
        S = nk.solve_linear(top.T, bottom.T).T
    except SingularMatrixError as exc:
        raise ChartDomainError(f"Lagrangian is not transversal to sigma_K for K={K}") from exc
    asym = float(np.max(np.abs(S - S.T), initial=0.0))
    return ChartCoords(K, 0.5 * (S + S.T), asymmetry=asym)


def from_chart(c):
    """Frame ``J_K [I; S]``; for K = first k indices this is the block layout
    ``[[-S1, -S2], [0, I], [I, 0], [S3, S4]]``."""
    n = c.n
    return LagrangianFrame(_apply_JK(np.vstack([np.eye(n), c.S]), c.K))


def unitary_of(lam):
    """The unitary ``U = Q + iP`` built from an orthonormalized frame."""
    lam = as_frame(lam)
    F = nk.orthonormal_columns(lam.M)
    return F[: lam.n] + 1j * F[lam.n:]


def det2(lam):
    """``det(U)^2`` for any unitary U carrying R^n onto lam; a unit complex number."""
    d = nk.complex_det(unitary_of(lam))
    return d * d


def det2_graph_formula(S):
    """``det((I + iS)(I - iS)^{-1})`` for symmetric S."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    return nk.complex_det(np.eye(n) + 1j * S) / nk.complex_det(np.eye(n) - 1j * S)


def rotate(lam, K, t):
    """Rotate the (q^i, p^i) planes, i in K, by angle t (multiplication by e^{it})."""
    lam = as_frame(lam)
    n = lam.n
    M = np.array(lam.M, copy=True)
    c, s = np.cos(t), np.sin(t)
    for i in K:
        q = lam.M[i]
        p = lam.M[n + i]
        M[i] = c * q - s * p
        M[n + i] = s * q + c * p
    return LagrangianFrame(M)


def full_index_set(n):
    return tuple(range(n))


def chart_flow_formula(S0, t):
    """Chart coordinates of ``e^{it} graph(S0)``:
    ``(sin t I + cos t S0)(cos t I - sin t S0)^{-1}``."""
    S0 = np.asarray(S0, dtype=float)
    n = S0.shape[0]
    num = np.sin(t) * np.eye(n) + np.cos(t) * S0
    den = np.cos(t) * np.eye(n) - np.sin(t) * S0
    try:
        X = nk.solve_linear(den.T, num.T).T
    except SingularMatrixError as exc:
        raise ChartDomainError("rotated subspace left the graph chart") from exc
    return 0.5 * (X + X.T)


def best_chart(frames, candidates=None):
    """Among ``candidates`` (default: all subsets), the chart maximizing the
    worst validity over ``frames``. Returns ``(K, validity)``."""
    Ms = np.array([nk.orthonormal_columns(as_frame(f).M) for f in frames])
    n = Ms.shape[2]
    if candidates is None:
        candidates = [K for k in range(n + 1) for K in combinations(range(n), k)]
    candidates = [tuple(K) for K in candidates]
    mask = np.zeros((len(candidates), n), dtype=bool)
    for c, K in enumerate(candidates):
        mask[c, list(K)] = True
    tops = np.where(mask[:, None, :, None], Ms[None, :, n:, :], Ms[None, :, :n, :])
    # screening over many small blocks at once: LAPACK's batched SVD
    vals = np.linalg.svd(tops, compute_uv=False)[..., -1].min(axis=1)
    best = int(np.argmax(vals))
    return candidates[best], float(vals[best])
