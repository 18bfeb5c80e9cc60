"""Winding of Det^2 and signed intersections with the train of sigma.

A path is a continuous curve of Lagrangians ``u -> lam(u)`` on [u0, u1].
Intersections with ``{lam : lam ∩ sigma != 0}`` are found by tracking the
inertia of the K x K block S1 of the chart coordinates: S1 is singular
exactly on the train, so each eigenvalue of S1 passing through zero is a
crossing. A downward passage counts +1 and an upward one -1.

With this orientation the Jacobi flow in t crosses positively (S1' is
negative definite there) and the signed count of a closed loop equals
minus the degree of Det^2 along it.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import lagrangian as lg
from . import numkernel as nk
from .errors import EndpointDegenerateError, InvalidInputError, InvalidLoopError, NumericalFailure

DEFAULT_GRID = 512
MIN_VALIDITY = 0.1
MERGE_TOL = 1e-9
LOOP_GAP_TOL = 1e-6
INTEGER_TOL = 0.05


class LagrangianPath:
    """A sampled curve of Lagrangians on [u0, u1].

    ``sampler`` maps a 1-D array of parameters to an array of frames of
    shape (len(u), 2n, n). The optional ``lifted`` sampler returns a pair
    ``(frames, phases)`` where ``phases`` is a continuous lift of arg Det^2
    along the path; it is only called where phases are needed. Samples
    are cached, so detection and winding on the same path share work.

    ``speed`` bounds how fast the subspace turns (radians per unit u); the
    sampling grid is refined so no cell turns more than a quarter radian.
    Phase lifts, when given, refine cells whose phase moves by more than
    pi/4, which catches turns that happen between samples.
    """

    def __init__(self, sampler, u0, u1, label="path", meta=None, speed=None, lifted=None):
        u0, u1 = float(u0), float(u1)
        if not (math.isfinite(u0) and math.isfinite(u1) and u0 < u1):
            raise InvalidInputError(f"path needs u0 < u1, got [{u0}, {u1}]")
        self._sampler = sampler
        self._lifted = lifted
        self.u0, self.u1 = u0, u1
        self.label = label
        self.meta = dict(meta or {})
        self.speed = speed
        self._cache = {}
        self._phase = {}
        self._grids = {}
        self._base = None
        self._events = {}

    @classmethod
    def from_function(cls, fn, u0, u1, label="path", meta=None, speed=None):
        """Path from a function returning one frame per parameter."""
        def sampler(us):
            return np.array([lg.as_frame(fn(u)).M for u in us])
        return cls(sampler, u0, u1, label, meta, speed)

    def _fill(self, us, with_phase=False):
        store = self._phase if with_phase and self._lifted is not None else self._cache
        missing = [u for u in dict.fromkeys(us.tolist()) if u not in store]
        if missing:
            got = (self._lifted if store is self._phase else self._sampler)(np.array(missing))
            phases = None
            if isinstance(got, tuple):
                got, phases = got
            got = np.asarray(got, dtype=float)
            for j, (u, M) in enumerate(zip(missing, got)):
                if u not in self._cache:
                    self._cache[u] = nk.orthonormal_columns(M)
                if phases is not None:
                    self._phase[u] = float(phases[j])

    def frames(self, us):
        """Orthonormal frames at ``us``, shape (len(us), 2n, n)."""
        us = np.atleast_1d(np.asarray(us, dtype=float))
        if self._base is not None:
            return self._base.frames(self.u0 + self.u1 - us)
        self._fill(us)
        return np.array([self._cache[u] for u in us.tolist()])

    def phase_lift(self, us):
        """Lifted Det^2 phases at ``us`` or None when the sampler has none."""
        us = np.atleast_1d(np.asarray(us, dtype=float))
        if self._base is not None:
            return self._base.phase_lift(self.u0 + self.u1 - us)
        self._fill(us, with_phase=True)
        if not self._phase:
            return None
        return np.array([self._phase[u] for u in us.tolist()])

    def grid(self, samples):
        """Sampling parameters: ``samples`` uniform cells, refined as described above."""
        if self._base is not None:
            return (self.u0 + self.u1 - self._base.grid(samples))[::-1]
        if samples in self._grids:
            return self._grids[samples]
        span = self.u1 - self.u0
        cells = samples
        if self.speed is not None:
            cells = max(cells, int(math.ceil(span * self.speed / 0.25)))
        us = np.linspace(self.u0, self.u1, cells + 1)
        ph = self.phase_lift(us)
        if ph is not None:
            min_width = 1e-13 * max(1.0, abs(self.u0), abs(self.u1))
            for _ in range(60):
                bad = (np.abs(np.diff(ph)) > 0.25 * math.pi) & (np.diff(us) > min_width)
                if not bad.any():
                    break
                mids = 0.5 * (us[:-1][bad] + us[1:][bad])
                us = np.sort(np.concatenate([us, mids]))
                ph = self.phase_lift(us)
        self._grids[samples] = us
        return us

    def frame(self, u):
        return lg.LagrangianFrame(self.frames([u])[0])

    def start(self):
        return self.frame(self.u0)

    def end(self):
        return self.frame(self.u1)

    def reversed(self):
        """The same curve traversed from u1 back to u0 (parameter u0 + u1 - u)."""
        if self._base is not None:
            return self._base
        rev = LagrangianPath(None, self.u0, self.u1, label=f"{self.label} (reversed)",
                             meta=self.meta, speed=self.speed)
        rev._base = self
        return rev

    @property
    def is_reversed(self):
        return self._base is not None

    @property
    def n(self):
        return self.frames([self.u0]).shape[2]


@dataclass(frozen=True)
class CrossingEvent:
    """An isolated intersection of a path with the train.

    ``contribution`` is the signed count (+1 per S1 eigenvalue passing
    zero downward, -1 upward); ``slopes`` are the derivatives of the
    crossing eigenvalues of S1 in chart ``K`` (0-based indices).
    """

    u_star: float
    multiplicity: int
    contribution: int
    K: tuple
    slopes: tuple
    edge: str = ""
    kernel_dim: int = -1

    def __post_init__(self):
        if self.multiplicity < 1:
            raise InvalidInputError("a crossing has multiplicity >= 1")
        if abs(self.contribution) > self.multiplicity:
            raise InvalidInputError("signed contribution exceeds multiplicity")

    @property
    def sign(self):
        return int(np.sign(self.contribution))

    def flipped(self, u0, u1, edge):
        return CrossingEvent(u0 + u1 - self.u_star, self.multiplicity, -self.contribution,
                             self.K, tuple(-s for s in self.slopes[::-1]), edge, self.kernel_dim)

    def to_dict(self):
        return {
            "edge": self.edge,
            "u_star": self.u_star,
            "multiplicity": self.multiplicity,
            "contribution": self.contribution,
            "sign": self.sign,
            "chart": list(self.K),
            "slopes": list(self.slopes),
        }


@dataclass
class WindingAccumulator:
    total_phase: float = 0.0
    samples: int = 0
    max_step_phase: float = 0.0

    def add(self, increment):
        self.total_phase += increment
        self.samples += 1
        self.max_step_phase = max(self.max_step_phase, abs(increment))

    @property
    def turns(self):
        return self.total_phase / (2.0 * math.pi)


def _det2_batch(frames):
    return np.array([lg.det2(F) for F in frames])


def winding_trace(path, samples=DEFAULT_GRID, max_depth=20):
    """Unwrapped phase of Det^2 along ``path``.

    Steps whose phase increment exceeds pi/2 are bisected (up to
    ``max_depth`` levels). Returns ``(us, phases, accumulator)`` with the
    phase measured from the start of the path.
    """
    if samples < 1:
        raise InvalidInputError("need at least one sampling interval")
    us = path.grid(samples)
    zs = _det2_batch(path.frames(us))
    acc = WindingAccumulator()
    out_u, out_phase = [us[0]], [0.0]

    def refine(ua, za, ub, zb, depth):
        d = float(np.angle(zb / za))
        if abs(d) <= 0.5 * math.pi:
            acc.add(d)
            out_u.append(ub)
            out_phase.append(out_phase[-1] + d)
            return
        if depth >= max_depth:
            raise NumericalFailure("Det^2 phase does not resolve under bisection", at=ua)
        um = 0.5 * (ua + ub)
        zm = lg.det2(path.frames([um])[0])
        refine(ua, za, um, zm, depth + 1)
        refine(um, zm, ub, zb, depth + 1)

    for i in range(us.size - 1):
        refine(us[i], zs[i], us[i + 1], zs[i + 1], 0)
    return np.array(out_u), np.array(out_phase), acc


def winding_det2(path, samples=DEFAULT_GRID):
    """Total phase of Det^2 along ``path`` divided by 2 pi."""
    return winding_trace(path, samples)[2].turns


# crossing detection ------------------------------------------------------

def _q_smin(frames):
    n = frames.shape[2]
    # batched screening only; ranks that matter go through rank_kernel
    return np.linalg.svd(frames[:, :n, :], compute_uv=False)[:, -1]


def _step_gaps(frames):
    """sin of the largest principal angle between consecutive frames."""
    G = np.einsum("kri,krj->kij", frames[:-1], frames[1:])
    c = np.linalg.svd(G, compute_uv=False)[:, -1]
    return np.sqrt(np.clip(1.0 - c * c, 0.0, None))


def _candidate_charts(frames):
    n = frames[0].shape[1]
    if n <= 6:
        return None
    cands = {()}
    for F in frames:
        for k in range(1, n + 1):
            cands.add(lg.select_chart(F, k=k))
    return sorted(cands)


def _s1(F, K):
    return lg.to_chart(F, K).S1


def _neg_count(F, K):
    if not K:
        return 0
    return int(np.count_nonzero(nk.sym_eigvals(_s1(F, K)) < 0.0))


class _Detector:
    def __init__(self, path, grid, tol, xtol, pair_scan):
        self.path = path
        self.grid = grid
        self.tol = tol
        self.xtol = xtol
        self.pair_scan = pair_scan
        self.span = path.u1 - path.u0
        self.brackets = []

    def F(self, u):
        return path_frame(self.path, u)

    def chart_for(self, us):
        frames = self.path.frames(us)
        K, val = lg.best_chart(frames, _candidate_charts(frames))
        return K, val

    def _probe(self, u, K):
        ev = np.sort(nk.sym_eigvals(_s1(self.F(u), K)))
        return int(np.count_nonzero(ev < 0.0)), ev

    def locate(self, K, lo, hi, c_lo, c_hi):
        """Shrink [lo, hi] around the inertia change until it is below xtol.

        Trial points come from regula falsi (Illinois variant) on the S1
        eigenvalue that changes sign, with bisection as a fallback; the
        bracket is only ever updated from inertia counts.
        """
        idx = min(c_lo, c_hi)
        f_lo = self._probe(lo, K)[1][idx]
        f_hi = self._probe(hi, K)[1][idx]
        side = 0
        stalls = 0
        while True:
            width = hi - lo
            eps = 0.5 * self.xtol * max(1.0, abs(lo), abs(hi))
            if width <= 2.0 * eps:
                break
            x = 0.5 * (lo + hi)
            if stalls < 2 and f_lo != f_hi and np.sign(f_lo) != np.sign(f_hi):
                x = hi - f_hi * (hi - lo) / (f_hi - f_lo)
                x = min(max(x, lo + 1e-3 * width), hi - 1e-3 * width)
            if x <= lo or x >= hi:
                break
            c_x, ev = self._probe(x, K)
            f_x = ev[min(idx, ev.size - 1)]
            if c_x != c_lo and c_x != c_hi:
                self.locate(K, lo, x, c_lo, c_x)
                self.locate(K, x, hi, c_x, c_hi)
                return
            if c_x == c_lo:
                lo, f_lo = x, f_x
                if side == -1:
                    f_hi *= 0.5
                side = -1
            else:
                hi, f_hi = x, f_x
                if side == 1:
                    f_lo *= 0.5
                side = 1
            stalls = stalls + 1 if hi - lo > 0.5 * width else 0
            if stalls > 2:
                stalls = 0
            # a trial next to the root: one probe on the far side may close the bracket
            slope = abs(f_hi - f_lo) / (hi - lo)
            if hi - lo > 2.0 * eps and abs(f_x) <= eps * slope:
                y = x + 2.0 * eps if lo == x else x - 2.0 * eps
                if lo < y < hi:
                    c_y = self._probe(y, K)[0]
                    if c_y == c_hi and lo == x or c_y == c_lo and hi == x:
                        lo, hi = min(x, y), max(x, y)
                    elif c_y == c_lo:
                        lo = y
                    elif c_y == c_hi:
                        hi = y
        self.brackets.append((lo, hi, c_lo, c_hi, K))

    def cell(self, lo, hi, depth=0):
        K, val = self.chart_for([lo, hi])
        gap = lg.LagrangianFrame(self.path.frames([lo])[0]).gap(self.path.frames([hi])[0])
        if val < MIN_VALIDITY or gap > 0.5 * val:
            if depth >= 30:
                raise NumericalFailure("no chart covers a cell of the path", at=lo)
            mid = 0.5 * (lo + hi)
            self.cell(lo, mid, depth + 1)
            self.cell(mid, hi, depth + 1)
            return
        pts = [lo, hi]
        if self.pair_scan:
            pts = list(np.linspace(lo, hi, self.pair_scan + 2))
        counts = [_neg_count(self.F(u), K) for u in pts]
        for a, b, ca, cb in zip(pts[:-1], pts[1:], counts[:-1], counts[1:]):
            if ca != cb:
                self.locate(K, a, b, ca, cb)


def path_frame(path, u):
    return lg.LagrangianFrame(path.frames([u])[0])


def _slopes(path, u, K, m, delta):
    """Derivatives of the m smallest-|.| eigenvalues of S1 at u, in chart K."""
    lo = max(path.u0, u - delta)
    hi = min(path.u1, u + delta)
    S0 = _s1(path_frame(path, u), K)
    D = (_s1(path_frame(path, hi), K) - _s1(path_frame(path, lo), K)) / (hi - lo)
    spec = nk.sym_eig(S0)
    order = np.argsort(np.abs(spec.eigenvalues), kind="stable")[:m]
    V = spec.eigenvectors[:, order]
    return tuple(float(x) for x in nk.sym_eigvals(V.T @ (0.5 * (D + D.T)) @ V))


def detect_crossings(path, grid=DEFAULT_GRID, tol=nk.DEFAULT_RANK_TOL, xtol=1e-12, pair_scan=0):
    """Crossings of ``path`` with the train, sorted by parameter.

    The coarse grid flags cells where the smallest singular value of the
    q-block comes close to zero (relative to how far the path moves across
    the cell) or where det(q-block) changes sign. Each flagged cell gets a
    chart valid at both ends, and the number of negative eigenvalues of S1
    is compared at the ends and bisected down to width ``xtol``.
    ``pair_scan`` adds interior samples per flagged cell to catch crossing
    pairs whose contributions cancel.
    """
    if path.is_reversed:
        return [e.flipped(path.u0, path.u1, path.label)
                for e in reversed(detect_crossings(path._base, grid, tol, xtol, pair_scan))]
    key = (grid, tol, xtol, pair_scan)
    if key in path._events:
        return list(path._events[key])
    if grid < 2:
        raise InvalidInputError("grid needs at least two cells")

    thr = math.sqrt(tol)
    us = path.grid(grid)
    frames = path.frames(us)
    smin = _q_smin(frames)
    if smin[0] < thr:
        raise EndpointDegenerateError("path starts on the train", at=path.u0)
    if smin[-1] < thr:
        raise EndpointDegenerateError("path ends on the train", at=path.u1)
    # keep interior grid points off the train so inertia at cell ends is clean
    near = np.where(smin[1:-1] < 1e-6)[0] + 1
    if near.size:
        us = us.copy()
        us[near] += 0.25 * np.diff(us)[near]
        frames = path.frames(us)
        smin = _q_smin(frames)

    n = frames.shape[2]
    dets = np.linalg.det(frames[:, :n, :])
    gaps = _step_gaps(frames)
    flagged = (np.minimum(smin[:-1], smin[1:]) < 3.0 * gaps + thr) | (np.sign(dets[:-1]) != np.sign(dets[1:]))

    det = _Detector(path, grid, tol, xtol, pair_scan)
    for i in np.flatnonzero(flagged):
        det.cell(us[i], us[i + 1])

    events = _assemble(path, det.brackets, tol)
    path._events[key] = events
    return list(events)


def _assemble(path, brackets, tol):
    brackets.sort(key=lambda b: b[0])
    groups = []
    for br in brackets:
        if groups and br[0] - groups[-1][-1][1] <= MERGE_TOL * max(1.0, abs(br[0])):
            groups[-1].append(br)
        else:
            groups.append([br])
    delta = max(1e-6 * (path.u1 - path.u0), 1e-8)
    events = []
    for i, g in enumerate(groups):
        lo, hi = g[0][0], g[-1][1]
        u_star = 0.5 * (lo + hi)
        contrib = sum(b[3] - b[2] for b in g)
        changed = sum(abs(b[2] - b[3]) for b in g)
        if changed == 0:
            continue
        K = g[0][4]
        kdim = lg.intersection_dim(path_frame(path, u_star), tol)
        # neighbouring events limit the finite-difference stencil
        room = [u_star - path.u0, path.u1 - u_star]
        if i > 0:
            room.append(u_star - groups[i - 1][-1][1])
        if i + 1 < len(groups):
            room.append(groups[i + 1][0][0] - u_star)
        d = min(delta, 0.25 * min(room))
        mult = max(kdim, changed)
        if len({b[4] for b in g}) > 1 and kdim < changed:
            raise NumericalFailure("distinct crossings closer than the merge tolerance", at=u_star)
        slopes = _slopes(path, u_star, K, min(mult, len(K)), d) if K else ()
        events.append(CrossingEvent(float(u_star), int(mult), int(contrib), tuple(K),
                                    slopes, path.label, int(kdim)))
    return events


def crossing_slope_check(event, path=None, slack=0.1):
    """True iff every crossing slope is <= -1 + slack.

    With ``path`` the slopes are re-estimated from the path with a fresh
    finite difference rather than taken from the event.
    """
    slopes = event.slopes
    if path is not None and event.K:
        d = max(1e-6 * (path.u1 - path.u0), 1e-8)
        slopes = _slopes(path, event.u_star, event.K, min(event.multiplicity, len(event.K)), d)
    return bool(slopes) and all(s <= -1.0 + slack for s in slopes)


def path_index(path, grid=DEFAULT_GRID, tol=nk.DEFAULT_RANK_TOL):
    """Signed count of crossings of ``path`` with the train."""
    return int(sum(e.contribution for e in detect_crossings(path, grid, tol)))


@dataclass
class LoopAnalysis:
    index: int
    winding: float
    edge_indices: list
    events: list
    max_gap: float
    traces: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "index": self.index,
            "winding": self.winding,
            "edge_indices": self.edge_indices,
            "max_endpoint_gap": self.max_gap,
            "events": [e.to_dict() for e in self.events],
        }


def analyze_loop(edges, grid=DEFAULT_GRID, tol=nk.DEFAULT_RANK_TOL, gap_tol=LOOP_GAP_TOL):
    """Signed crossing count and Det^2 winding of a closed chain of paths.

    The two are independent measurements of the same integer (up to the
    orientation sign): the count must equal minus the rounded winding.
    """
    edges = list(edges)
    if not edges:
        raise InvalidLoopError("a loop needs at least one edge")
    max_gap = 0.0
    for i, e in enumerate(edges):
        nxt = edges[(i + 1) % len(edges)]
        g = e.end().gap(nxt.start())
        max_gap = max(max_gap, g)
        if g > gap_tol:
            raise InvalidLoopError(f"edge {e.label!r} does not join {nxt.label!r} (gap {g:.3g})")
    edge_idx, events, traces = [], [], []
    total = 0.0
    for e in edges:
        evs = detect_crossings(e, grid, tol)
        events.extend(evs)
        edge_idx.append(int(sum(ev.contribution for ev in evs)))
        us, ph, acc = winding_trace(e, grid)
        traces.append((e.label, us, ph))
        total += acc.total_phase
    # the loop closes up to gap_tol, so the residual phase is tiny
    winding = total / (2.0 * math.pi)
    index = int(sum(edge_idx))
    if abs(winding - round(winding)) >= INTEGER_TOL:
        raise NumericalFailure(f"loop winding {winding:.4f} is not close to an integer")
    if index != -int(round(winding)):
        raise NumericalFailure(f"crossing count {index} disagrees with Det^2 degree {winding:.4f}")
    return LoopAnalysis(index, winding, edge_idx, events, max_gap, traces)


def loop_index(edges, grid=DEFAULT_GRID, tol=nk.DEFAULT_RANK_TOL):
    """Sum of path indices over a closed chain of paths (checked against the winding)."""
    return analyze_loop(edges, grid, tol).index


def rotation_path(S, t_max=math.pi, K=None):
    """``u -> e^{iu} graph(S)`` (rotation of the K planes) on [0, t_max]."""
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    K = lg.full_index_set(n) if K is None else tuple(K)
    base = lg.graph_frame(S)

    def sampler(us):
        return np.array([lg.rotate(base, K, u).M for u in us])
    return LagrangianPath(sampler, 0.0, t_max, label="rotation", meta={"S": S.tolist()})
