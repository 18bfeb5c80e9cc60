"""Curvature profiles and the lam-Jacobi flow of Lagrangian frames.

The Jacobi equation in a parallel orthonormal frame reads ``X'' = (R(t) - lam) X``
(equivalently ``-X'' + R X = lam X``), written as the first-order system
``Y' = A(t, lam) Y`` with ``Y = (X, X')`` and

    A(t, lam) = [[0, I], [R(t) - lam I, 0]].

Sign convention: conjugate points occur where ``R`` is negative. The unit
round sphere corresponds to ``R = -I`` here, not ``+I``.
"""

from dataclasses import dataclass, field
from functools import cached_property
import math

import numpy as np

from . import _flowkernel as fk
from . import lagrangian as lg
from .errors import DomainError, InvalidInputError, NumericalFailure

KINDS = (
    "constant",
    "diagonal-constant",
    "piecewise-constant",
    "polynomial-entries",
    "sampled-linear-interp",
    "trigonometric",
)

_SYM_TOL = 1e-12


def _sym_matrix(M, n=None, what="matrix"):
    M = np.array(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InvalidInputError(f"{what} must be square, got shape {M.shape}")
    if n is not None and M.shape[0] != n:
        raise InvalidInputError(f"{what} must be {n}x{n}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{what} has non-finite entries")
    if np.max(np.abs(M - M.T), initial=0.0) > _SYM_TOL * max(1.0, np.max(np.abs(M), initial=0.0)):
        raise InvalidInputError(f"{what} is not symmetric")
    return 0.5 * (M + M.T)


def _sym_stack(Ms, n, what):
    return np.array([_sym_matrix(M, n, what) for M in Ms]).reshape(-1, n, n)


@dataclass(frozen=True, eq=False)
class CurvatureProfile:
    """An immutable curve ``t -> R(t)`` of symmetric n x n matrices on [a, b].

    Build one with the ``from_*``/kind constructors below rather than
    directly; ``payload`` holds numpy arrays specific to ``kind``.
    """

    kind: str
    n: int
    a: float
    b: float
    payload: dict = field(repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown profile kind {self.kind!r}")
        if self.n < 1:
            raise InvalidInputError("dimension must be at least 1")
        if not (math.isfinite(self.a) and math.isfinite(self.b) and self.a < self.b):
            raise InvalidInputError(f"invalid interval [{self.a}, {self.b}]")

    # constructors -------------------------------------------------------

    @classmethod
    def constant(cls, matrix, a, b):
        M = _sym_matrix(matrix)
        return cls("constant", M.shape[0], float(a), float(b), {"matrix": M})

    @classmethod
    def diagonal(cls, diagonal, a, b):
        d = np.array(diagonal, dtype=float).reshape(-1)
        if d.size == 0 or not np.all(np.isfinite(d)):
            raise InvalidInputError("diagonal must be a non-empty finite vector")
        return cls("diagonal-constant", d.size, float(a), float(b), {"diagonal": d})

    @classmethod
    def piecewise_constant(cls, breakpoints, matrices, a, b):
        bp = np.array(breakpoints, dtype=float).reshape(-1)
        Ms = list(matrices)
        if len(Ms) != bp.size + 1:
            raise InvalidInputError("piecewise-constant needs one more matrix than breakpoints")
        n = np.asarray(Ms[0]).shape[0]
        if bp.size and (np.any(np.diff(bp) <= 0) or bp[0] <= a or bp[-1] >= b):
            raise InvalidInputError("breakpoints must increase strictly inside (a, b)")
        return cls("piecewise-constant", n, float(a), float(b),
                   {"breakpoints": bp, "matrices": _sym_stack(Ms, n, "piece")})

    @classmethod
    def polynomial(cls, coefficients, a, b):
        """``R(t) = sum_j C_j t^j`` with symmetric coefficient matrices."""
        Cs = list(coefficients)
        if not Cs:
            raise InvalidInputError("polynomial profile needs at least one coefficient")
        n = np.asarray(Cs[0]).shape[0]
        return cls("polynomial-entries", n, float(a), float(b),
                   {"coefficients": _sym_stack(Cs, n, "coefficient")})

    @classmethod
    def sampled(cls, times, matrices):
        """Linear interpolation between samples; the domain is [times[0], times[-1]]."""
        ts = np.array(times, dtype=float).reshape(-1)
        Ms = list(matrices)
        if ts.size < 2 or len(Ms) != ts.size or np.any(np.diff(ts) <= 0):
            raise InvalidInputError("need >= 2 strictly increasing sample times, one matrix each")
        n = np.asarray(Ms[0]).shape[0]
        return cls("sampled-linear-interp", n, float(ts[0]), float(ts[-1]),
                   {"times": ts, "matrices": _sym_stack(Ms, n, "sample")})

    @classmethod
    def trigonometric(cls, constant, cos, sin, omega, a, b):
        """``R(t) = C + sum_k (A_k cos(k omega t) + B_k sin(k omega t))``."""
        C = _sym_matrix(constant)
        n = C.shape[0]
        A = _sym_stack(cos, n, "cosine coefficient") if len(cos) else np.zeros((0, n, n))
        B = _sym_stack(sin, n, "sine coefficient") if len(sin) else np.zeros((0, n, n))
        if A.shape[0] != B.shape[0]:
            raise InvalidInputError("cos and sin coefficient lists must have equal length")
        return cls("trigonometric", n, float(a), float(b),
                   {"constant": C, "cos": A, "sin": B, "omega": float(omega)})

    # evaluation ---------------------------------------------------------

    @cached_property
    def breakpoints(self):
        """Interior times where R is not smooth; integration steps align to them."""
        if self.kind == "piecewise-constant":
            return self.payload["breakpoints"].copy()
        if self.kind == "sampled-linear-interp":
            return self.payload["times"][1:-1].copy()
        return np.zeros(0)

    def evaluate(self, ts, where=None):
        """R at each time in ``ts``, shape (len(ts), n, n).

        ``where`` (same shape as ``ts``) picks the piece of a piecewise
        profile; it lets a step evaluate its own piece at both ends.
        """
        ts = np.asarray(ts, dtype=float).reshape(-1)
        n = self.n
        p = self.payload
        kind = self.kind
        if kind == "constant":
            return np.broadcast_to(p["matrix"], (ts.size, n, n)).copy()
        if kind == "diagonal-constant":
            return np.broadcast_to(np.diag(p["diagonal"]), (ts.size, n, n)).copy()
        if kind == "piecewise-constant":
            sel = ts if where is None else np.asarray(where, dtype=float).reshape(-1)
            idx = np.searchsorted(p["breakpoints"], sel, side="right")
            return p["matrices"][idx].copy()
        if kind == "polynomial-entries":
            out = np.zeros((ts.size, n, n))
            for C in p["coefficients"][::-1]:
                out = out * ts[:, None, None] + C
            return out
        if kind == "sampled-linear-interp":
            times, Ms = p["times"], p["matrices"]
            j = np.clip(np.searchsorted(times, ts, side="right") - 1, 0, times.size - 2)
            w = ((ts - times[j]) / (times[j + 1] - times[j]))[:, None, None]
            return (1.0 - w) * Ms[j] + w * Ms[j + 1]
        # trigonometric
        out = np.broadcast_to(p["constant"], (ts.size, n, n)).copy()
        for k in range(p["cos"].shape[0]):
            arg = (k + 1) * p["omega"] * ts
            out += np.cos(arg)[:, None, None] * p["cos"][k] + np.sin(arg)[:, None, None] * p["sin"][k]
        return out

    def __call__(self, t):
        t = float(t)
        if not self.a <= t <= self.b:
            raise DomainError(f"t={t} outside [{self.a}, {self.b}]")
        return self.evaluate([t])[0]

    def to_dict(self):
        """JSON-ready payload (``kind`` plus kind-specific keys)."""
        p = self.payload
        d = {"kind": self.kind}
        if self.kind == "constant":
            d["matrix"] = p["matrix"].tolist()
        elif self.kind == "diagonal-constant":
            d["diagonal"] = p["diagonal"].tolist()
        elif self.kind == "piecewise-constant":
            d["breakpoints"] = p["breakpoints"].tolist()
            d["matrices"] = p["matrices"].tolist()
        elif self.kind == "polynomial-entries":
            d["coefficients"] = p["coefficients"].tolist()
        elif self.kind == "sampled-linear-interp":
            d["times"] = p["times"].tolist()
            d["matrices"] = p["matrices"].tolist()
        else:
            d["constant"] = p["constant"].tolist()
            d["cos"] = p["cos"].tolist()
            d["sin"] = p["sin"].tolist()
            d["omega"] = p["omega"]
        return d

    def with_interval(self, a, b):
        """Same payload restricted or extended to [a, b] (not for sampled data)."""
        if self.kind == "sampled-linear-interp":
            raise InvalidInputError("sampled profiles carry their own domain")
        if self.kind == "piecewise-constant":
            bp = self.payload["breakpoints"]
            Ms = self.payload["matrices"]
            lo = np.searchsorted(bp, a, side="right")
            hi = np.searchsorted(bp, b, side="left")
            return CurvatureProfile.piecewise_constant(bp[lo:hi], Ms[lo:hi + 1], a, b)
        return CurvatureProfile(self.kind, self.n, float(a), float(b), self.payload)


@dataclass(frozen=True)
class FlowSettings:
    steps: int = 4096
    renormalize_every: int = 64
    drift_tol: float = 1e-6

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 16:
            raise InvalidInputError("steps must be an integer >= 16")
        if int(self.renormalize_every) != self.renormalize_every or self.renormalize_every < 1:
            raise InvalidInputError("renormalize_every must be a positive integer")
        if not self.drift_tol > 0:
            raise InvalidInputError("drift_tol must be positive")


@dataclass(frozen=True)
class FundamentalSolution:
    Phi: np.ndarray
    t0: float
    t: float


def coefficient(profile, t, lam):
    """The 2n x 2n matrix A(t, lam)."""
    R = profile(t)
    n = profile.n
    A = np.zeros((2 * n, 2 * n))
    A[:n, n:] = np.eye(n)
    A[n:, :n] = R - lam * np.eye(n)
    return A


def time_grid(profile, steps):
    """Nodes of the fixed-step grid on [a, b], aligned to breakpoints."""
    cuts = np.concatenate([[profile.a], profile.breakpoints, [profile.b]])
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        k = max(1, int(math.ceil((hi - lo) * steps - 1e-9)))
        pieces.append(np.linspace(lo, hi, k + 1)[:-1])
    pieces.append([profile.b])
    return np.concatenate(pieces)


def _stage_values(profile, left, right):
    """R at the left end, midpoint and right end of each step, shape (3, N, n, n)."""
    mid = 0.5 * (left + right)
    return np.ascontiguousarray(np.stack([profile.evaluate(left, where=mid),
                                          profile.evaluate(mid, where=mid),
                                          profile.evaluate(right, where=mid)]))


def _segment_stages(profile, t0, t1, steps):
    """Stage arrays for integrating from t0 to t1 (either direction) on the grid."""
    nodes = time_grid(profile, steps)
    lo, hi = min(t0, t1), max(t0, t1)
    inner = nodes[(nodes > lo) & (nodes < hi)]
    pts = np.concatenate([[t0], inner if t1 > t0 else inner[::-1], [t1]])
    left, right = pts[:-1], pts[1:]
    return _stage_values(profile, left, right), right - left


def _check_time(profile, t):
    if not profile.a - 1e-12 <= t <= profile.b + 1e-12:
        raise DomainError(f"t={t} outside [{profile.a}, {profile.b}]")


def _raise_on_drift(drift, t, tol):
    if drift > tol:
        raise NumericalFailure(f"symplectic drift {drift:.3g} exceeds {tol:.3g}", at=float(t))


def integrate_frame(profile, lam, frame, t0, t1, settings=None):
    """Advance a Lagrangian frame from t0 to t1 under Y' = A(t, lam) Y.

    Fixed-step classical RK4 on the grid of :func:`time_grid` (partial steps
    at the ends); columns are re-orthonormalized every
    ``settings.renormalize_every`` steps, which leaves the span unchanged.
    """
    settings = settings or FlowSettings()
    frame = lg.as_frame(frame)
    if frame.n != profile.n:
        raise InvalidInputError("frame dimension does not match the profile")
    _check_time(profile, t0)
    _check_time(profile, t1)
    if t0 == t1:
        return frame.orthonormal()
    Rs, hs = _segment_stages(profile, t0, t1, settings.steps)
    tail = np.zeros((3, 1, profile.n, profile.n))
    out, drift, at = fk.flow_final(Rs, hs, hs.size, tail, 0.0,
                                   np.array([float(lam)]), np.ascontiguousarray(frame.M),
                                   settings.renormalize_every)
    t_bad = t0 + np.sum(hs[: at[0]])
    _raise_on_drift(drift[0], t_bad, settings.drift_tol)
    return lg.LagrangianFrame(out[0])


def fundamental_solution(profile, lam, t0, t1, settings=None):
    """Phi with Phi' = A Phi, Phi(t0) = I, evaluated at t1 (no renormalization)."""
    settings = settings or FlowSettings()
    _check_time(profile, t0)
    _check_time(profile, t1)
    n = profile.n
    if t0 == t1:
        return FundamentalSolution(np.eye(2 * n), t0, t1)
    Rs, hs = _segment_stages(profile, t0, t1, settings.steps)
    tail = np.zeros((3, 1, n, n))
    out, _, _ = fk.flow_final(Rs, hs, hs.size, tail, 0.0,
                              np.array([float(lam)]), np.eye(2 * n), 0)
    return FundamentalSolution(out[0], float(t0), float(t1))


def symplectic_residual(fs):
    """max-abs entry of ``Phi^T J Phi - J``."""
    Phi = fs.Phi if isinstance(fs, FundamentalSolution) else np.asarray(fs, dtype=float)
    J = lg.symplectic_matrix(Phi.shape[0] // 2)
    return float(np.max(np.abs(Phi.T @ J @ Phi - J)))


def sigma_lambda(profile, lam, t, settings=None):
    """The flowed reference Lagrangian sigma_lam(t) (Dirichlet condition at a)."""
    return FlowContext(profile, settings).sigma(lam, t)


def lambda_lower_bound(profile, margin, steps=4096):
    """``min_t lambda_min(R(t)) - margin``.

    Below this value ``R - lam`` is positive definite on [a, b], so no
    lam-Jacobi field can vanish at a and at a later time.
    Piecewise-constant and linearly interpolated profiles are handled
    exactly (the minimum eigenvalue is concave along linear segments);
    smooth profiles are sampled at 16x the integration step density.
    """
    if not margin > 0:
        raise InvalidInputError("margin must be positive")
    kind = profile.kind
    p = profile.payload
    if kind == "constant":
        mats = p["matrix"][None]
    elif kind == "diagonal-constant":
        return float(np.min(p["diagonal"])) - margin
    elif kind in ("piecewise-constant", "sampled-linear-interp"):
        mats = p["matrices"]
    else:
        memo = profile.__dict__.setdefault("_sampled_min_eig", {})
        if steps not in memo:
            count = int(math.ceil((profile.b - profile.a) * steps * 16)) + 1
            mats = profile.evaluate(np.linspace(profile.a, profile.b, count))
            memo[steps] = float(np.min(np.linalg.eigvalsh(mats)[:, 0]))
        return memo[steps] - margin
    # bulk sampling: LAPACK's batched solver, not the hand-written kernel
    return float(np.min(np.linalg.eigvalsh(mats)[:, 0])) - margin


class FlowTrack:
    """sigma_lam(t) for one lam, stored at every grid node on [a, b].

    ``frame_at(u)`` takes one partial RK4 step from the node at or below u,
    which reproduces a direct integration to u exactly.
    """

    def __init__(self, ctx, lam):
        self.ctx = ctx
        self.lam = float(lam)
        c = ctx
        Y0 = lg.canonical_sigma(c.profile.n).M.copy()
        frames, drift, at = fk.flow_track(c.Rs, c.hs, self.lam, Y0,
                                          c.settings.renormalize_every)
        _raise_on_drift(drift, c.nodes[at], c.settings.drift_tol)
        self.frames = frames
        self.max_drift = float(drift)

    def frame_at(self, u):
        c = self.ctx
        _check_time(c.profile, u)
        u = min(max(float(u), c.profile.a), c.profile.b)
        k = int(np.searchsorted(c.nodes, u, side="right")) - 1
        k = min(k, c.nodes.size - 1)
        h = u - c.nodes[k]
        tail_R, tail_h = c.tail(c.nodes[k], u) if h != 0.0 else (c.zero_tail, 0.0)
        out, drift, _ = fk.flow_final(c.Rs, c.hs, 0, tail_R, tail_h,
                                      np.array([self.lam]), self.frames[k],
                                      c.settings.renormalize_every)
        _raise_on_drift(drift[0], u, c.settings.drift_tol)
        self.max_drift = max(self.max_drift, float(drift[0]))
        return out[0]

    def frames_at(self, us):
        return np.array([self.frame_at(u) for u in np.atleast_1d(us)])


class FlowContext:
    """Per-profile cache of the time grid, stage matrices and flow tracks."""

    def __init__(self, profile, settings=None):
        self.profile = profile
        self.settings = settings or FlowSettings()
        self.nodes = time_grid(profile, self.settings.steps)
        left, right = self.nodes[:-1], self.nodes[1:]
        self.Rs = _stage_values(profile, left, right)
        self.hs = right - left
        self.zero_tail = np.zeros((3, 1, profile.n, profile.n))
        self._tracks = {}
        self.max_drift = 0.0

    def tail(self, t0, t1):
        return _stage_values(self.profile, np.array([t0]), np.array([t1])), float(t1 - t0)

    def track(self, lam):
        key = float(lam)
        tr = self._tracks.get(key)
        if tr is None:
            tr = FlowTrack(self, key)
            self._tracks[key] = tr
            self.max_drift = max(self.max_drift, tr.max_drift)
        return tr

    def speed_bound(self, lam_max):
        """Upper bound on ||A(t, lam)|| over the grid for |lam| <= lam_max."""
        if not hasattr(self, "_rnorm"):
            self._rnorm = float(np.max(np.sqrt(np.sum(self.Rs**2, axis=(2, 3))), initial=0.0))
        return 1.0 + self._rnorm + abs(lam_max)

    def sigma_batch(self, lams, t, with_phase=False):
        """Orthonormal frames of sigma_lam(t) for every lam, shape (B, 2n, n).

        With ``with_phase`` also return the phase of Det^2 unwrapped along
        t from a to t. That lift is continuous in (t, lam) jointly, so
        differences between nearby lams cannot alias.
        """
        _check_time(self.profile, t)
        t = min(max(float(t), self.profile.a), self.profile.b)
        k = int(np.searchsorted(self.nodes, t, side="right")) - 1
        k = min(k, self.nodes.size - 1)
        h = t - self.nodes[k]
        tail_R, tail_h = self.tail(self.nodes[k], t) if h != 0.0 else (self.zero_tail, 0.0)
        Y0 = lg.canonical_sigma(self.profile.n).M.copy()
        lams = np.ascontiguousarray(np.atleast_1d(np.asarray(lams, dtype=float)))
        renorm = self.settings.renormalize_every
        phases = None
        if with_phase:
            # Det^2 turns at most 2 n ||A|| radians per unit time
            rate = 2.0 * self.profile.n * self.speed_bound(np.max(np.abs(lams), initial=0.0))
            every = max(1, int(0.5 / (rate * float(np.max(np.abs(self.hs))))))
            out, drift, at, phases = fk.flow_batch(self.Rs, self.hs, k, tail_R, tail_h, lams, Y0,
                                                   renorm, every)
        elif lams.size >= 4:
            out, drift, at, _ = fk.flow_batch(self.Rs, self.hs, k, tail_R, tail_h, lams, Y0, renorm, 0)
        else:
            out, drift, at = fk.flow_final(self.Rs, self.hs, k, tail_R, tail_h, lams, Y0, renorm)
        worst = int(np.argmax(drift)) if drift.size else 0
        if drift.size:
            _raise_on_drift(drift[worst], self.nodes[min(at[worst], self.nodes.size - 1)],
                            self.settings.drift_tol)
            self.max_drift = max(self.max_drift, float(drift[worst]))
        return (out, phases) if with_phase else out

    def sigma(self, lam, t):
        return lg.LagrangianFrame(self.sigma_batch([lam], t)[0])
