"""Morse index of the index form three ways, and the rectangle certificate.

For ``H_b(X, Y) = int_a^b <X', Y'> + <R X, Y> dt`` on fields vanishing at
both ends, the index is computed as

* the number of conjugate values in (a, b) with multiplicity, from the
  crossings of ``t -> sigma_0(t)`` with the train of sigma;
* the number of negative Dirichlet eigenvalues of ``-X'' + R X``, from the
  crossings of ``lam -> sigma_lam(b)``;
* the number of negative eigenvalues of a piecewise-linear Galerkin matrix
  of ``H_b``.

The first two are tied together by a closed loop in the (t, lam)
rectangle whose total intersection count must vanish.
"""

from dataclasses import dataclass, field, asdict
import logging
import math

import numpy as np
from scipy.linalg import eigvals_banded

from . import jacobiflow as jf
from . import lagrangian as lg
from . import maslov as ms
from .errors import CertificationFailure, InvalidInputError, InvalidSpecError, NumericalFailure

LAMBDA_SAMPLES = 33

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    steps: int = 4096
    renormalize_every: int = 64
    drift_tol: float = 1e-6
    rank_tol: float = 1e-8
    mesh: int = 512
    lambda_margin: float = 1.0
    grid: int = 512
    slope_slack: float = 0.1
    fd_mesh: int = 2048
    seed: int = 0

    def __post_init__(self):
        self.flow  # validates the integrator fields
        if not 0.0 < self.rank_tol < 1.0:
            raise InvalidInputError("rank_tol must lie in (0, 1)")
        if self.mesh < 8 or self.fd_mesh < 8:
            raise InvalidInputError("meshes must be at least 8")
        if not self.lambda_margin > 0:
            raise InvalidInputError("lambda_margin must be positive")
        if self.grid < 2:
            raise InvalidInputError("grid must be at least 2")
        if not self.slope_slack >= 0:
            raise InvalidInputError("slope_slack must be non-negative")

    @property
    def flow(self):
        return jf.FlowSettings(self.steps, self.renormalize_every, self.drift_tol)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class RectangleSpec:
    """Corners of the rectangle loop in the (t, lam) plane.

    ``lam_top`` is where the lam-edge at t = b stops: 0 when b is not a
    conjugate value, ``lam_prime`` otherwise (then the loop turns the
    corner through (b', 0) -> (b', lam') -> (b, lam')).
    """

    profile: jf.CurvatureProfile
    lam0: float
    a_prime: float
    b_prime: float
    lam_prime: float
    nullity_at_b: int = 0

    def __post_init__(self):
        p = self.profile
        if not p.a < self.a_prime < self.b_prime <= p.b:
            raise InvalidSpecError("need a < a' < b' <= b")
        if not self.lam0 < self.lam_prime < 0.0:
            raise InvalidSpecError("need lam0 < lam' < 0")
        bound = jf.lambda_lower_bound(p, 1e-12)
        if self.lam0 > bound:
            raise InvalidSpecError(f"lam0 = {self.lam0} is above the lower bound {bound}")

    @property
    def a(self):
        return self.profile.a

    @property
    def b(self):
        return self.profile.b

    @property
    def shifted(self):
        return self.b_prime < self.b

    @property
    def lam_top(self):
        return self.lam_prime if self.shifted else 0.0

    def to_dict(self):
        return {
            "a": self.a, "b": self.b, "lambda0": self.lam0,
            "a_prime": self.a_prime, "b_prime": self.b_prime,
            "lambda_prime": self.lam_prime, "nullity_at_b": self.nullity_at_b,
        }


def _t_path(ctx, lam, t0, t1, label):
    tr = ctx.track(lam)
    return ms.LagrangianPath(lambda us: np.array([tr.frame_at(u) for u in us]), t0, t1,
                             label=label, meta={"lambda": lam}, speed=ctx.speed_bound(lam))


def _lam_path(ctx, t, l0, l1, label):
    # no useful speed bound in lam: rely on the phase lift along t
    return ms.LagrangianPath(lambda us: ctx.sigma_batch(us, t), l0, l1, label=label,
                             meta={"t": t}, lifted=lambda us: ctx.sigma_batch(us, t, with_phase=True))


class Rectangle:
    """The loop edges of a RectangleSpec, sharing one flow cache."""

    def __init__(self, spec, settings=None, ctx=None):
        self.spec = spec
        self.settings = settings or Settings()
        self.ctx = ctx or jf.FlowContext(spec.profile, self.settings.flow)
        s, c = spec, self.ctx
        self.t_edge = _t_path(c, 0.0, s.a_prime, s.b_prime, "t-edge")
        self.lam_edge = _lam_path(c, s.b, s.lam0, s.lam_top, "lambda-edge")
        self.bottom = _t_path(c, s.lam0, s.a_prime, s.b, "bottom-edge")
        self.left = _lam_path(c, s.a_prime, s.lam0, 0.0, "left-edge")
        self.corner = []
        if s.shifted:
            self.corner = [_lam_path(c, s.b_prime, s.lam_prime, 0.0, "corner-vertical").reversed(),
                           _t_path(c, s.lam_prime, s.b_prime, s.b, "corner-horizontal")]
        self._loop = None

    def events(self, path):
        st = self.settings
        return ms.detect_crossings(path, st.grid, st.rank_tol)

    def loop_edges(self):
        return [self.t_edge, *self.corner, self.lam_edge.reversed(), self.bottom.reversed(), self.left]

    def loop(self):
        if self._loop is None:
            st = self.settings
            self._loop = ms.analyze_loop(self.loop_edges(), st.grid, st.rank_tol)
        return self._loop


def _rectangle(spec, settings):
    rect = spec.__dict__.get("_rect")
    if rect is None or (settings is not None and rect.settings != settings):
        rect = Rectangle(spec, settings)
        object.__setattr__(spec, "_rect", rect)
    return rect


def _q_smin(frames):
    return np.linalg.svd(frames[:, : frames.shape[2], :], compute_uv=False)[:, -1]


def _choose_a_prime(ctx, lam0, thr):
    lams = np.linspace(lam0, 0.0, LAMBDA_SAMPLES)
    half = 0.5 * (ctx.profile.a + ctx.profile.b)
    for t in ctx.nodes[1:]:
        if t > half:
            break
        if np.all(_q_smin(ctx.sigma_batch(lams, t)) > thr):
            return float(t)
    raise NumericalFailure("no start time a' keeps sigma_lam(a') off the train", at=float(half))


def build_rectangle(profile, settings=None):
    """Choose lam0, a', b', lam' for ``profile`` and return the RectangleSpec.

    lam0 sits ``lambda_margin`` below the smallest curvature eigenvalue
    (and at most -lambda_margin). a' is the first grid time at which every
    sampled sigma_lam(a') is off the train. When b is itself a conjugate
    value the corner is cut at b' = b - delta, lam' = -eta.
    """
    settings = settings or Settings()
    ctx = jf.FlowContext(profile, settings.flow)
    thr = math.sqrt(settings.rank_tol)
    lam0 = min(jf.lambda_lower_bound(profile, settings.lambda_margin, settings.steps),
               -settings.lambda_margin)
    a_prime = _choose_a_prime(ctx, lam0, thr)
    Fb = lg.LagrangianFrame(ctx.track(0.0).frame_at(profile.b))
    nullity = lg.intersection_dim(Fb, settings.rank_tol)
    at_b = _q_smin(Fb.M[None])[0] < thr

    if not at_b:
        probe = Rectangle(RectangleSpec(profile, lam0, a_prime, profile.b, 0.5 * lam0), settings, ctx)
        evs = probe.events(probe.lam_edge)
        lam_prime = -0.5 * min(abs(e.u_star) for e in evs) if evs else 0.5 * lam0
        spec = RectangleSpec(profile, lam0, a_prime, profile.b, lam_prime, nullity)
        log.debug("rectangle %s", spec.to_dict())
        rect = Rectangle(spec, settings, ctx)
        rect.lam_edge = probe.lam_edge
        object.__setattr__(spec, "_rect", rect)
        return spec

    length = profile.b - profile.a
    delta, eta = 1e-3 * length, min(1e-3, 0.25 * abs(lam0))
    for _ in range(12):
        b_prime = profile.b - delta
        off_b = _q_smin(ctx.sigma_batch([0.0, -eta], b_prime))
        off_l = _q_smin(ctx.sigma_batch([-eta], profile.b))
        if b_prime > a_prime and np.all(off_b > thr) and off_l[0] > thr:
            spec = RectangleSpec(profile, lam0, a_prime, b_prime, -eta, nullity)
            rect = Rectangle(spec, settings, ctx)
            if not any(rect.events(p) for p in rect.corner):
                log.debug("rectangle with cut corner %s", spec.to_dict())
                object.__setattr__(spec, "_rect", rect)
                return spec
        delta *= 0.5
        eta *= 0.5
    raise NumericalFailure("could not cut a crossing-free corner at b", at=profile.b)


def conjugate_points(profile, settings=None, spec=None):
    """Conjugate values in (a, b) with multiplicity: ``(events, total)``."""
    spec = spec or build_rectangle(profile, settings)
    rect = _rectangle(spec, settings)
    events = rect.events(rect.t_edge)
    return events, int(sum(e.multiplicity for e in events))


def spectral_events(spec, settings=None):
    rect = _rectangle(spec, settings)
    return rect.events(rect.lam_edge)


def spectral_count(spec, settings=None):
    """Negative Dirichlet eigenvalues with multiplicity, from the lam-edge at t = b."""
    return int(sum(e.multiplicity for e in spectral_events(spec, settings)))


def rectangle_check(spec, settings=None):
    """Signed crossing count of the closed rectangle loop (0 when the chain holds).

    Raises NumericalFailure if the bottom edge or the left closure meets
    the train, since then lam0 or a' was chosen badly.
    """
    rect = _rectangle(spec, settings)
    for p in (rect.bottom, rect.left):
        evs = rect.events(p)
        if evs:
            raise NumericalFailure(f"{p.label} meets the train", at=evs[0].u_star)
    return rect.loop().index


# discretizations ---------------------------------------------------------

def _nodes(profile, m):
    if int(m) != m or m < 8:
        raise InvalidInputError("mesh must be an integer >= 8")
    return np.linspace(profile.a, profile.b, int(m) + 1)


def _band_from_blocks(diag_blocks, off_blocks):
    """Lower band storage of a symmetric block-tridiagonal matrix.

    ``diag_blocks[i]`` sits at block (i, i) and ``off_blocks[i]`` at
    block (i + 1, i).
    """
    N, n = diag_blocks.shape[0], diag_blocks.shape[1]
    size = N * n
    band = np.zeros((2 * n, size))
    for i in range(N):
        for r in range(n):
            for c in range(r + 1):
                band[r - c, i * n + c] = diag_blocks[i, r, c]
        if i + 1 < N:
            for r in range(n):
                for c in range(n):
                    band[n + r - c, i * n + c] = off_blocks[i, r, c]
    return band


def sl_eigs_fd(profile, m, upper=None):
    """Eigenvalues of the three-point discretization of ``-X'' + R X`` with
    Dirichlet ends on ``m`` cells, ascending.

    With ``upper`` only the eigenvalues <= upper are returned.
    """
    t = _nodes(profile, m)
    h = t[1] - t[0]
    n = profile.n
    inner = t[1:-1]
    D = profile.evaluate(inner) + (2.0 / h**2) * np.eye(n)
    O = np.broadcast_to(-(1.0 / h**2) * np.eye(n), (inner.size - 1, n, n))
    band = _band_from_blocks(D, O)
    if upper is None:
        return eigvals_banded(band, lower=True)
    return eigvals_banded(band, lower=True, select="v", select_range=(-np.inf, upper))


def hessian_matrix_band(profile, m):
    """Band storage of the Galerkin matrix of H_b on hat functions.

    Stiffness ``<X', Y'>`` is exact for linear elements; the curvature
    term uses R at each element midpoint with the consistent mass weights.
    """
    t = _nodes(profile, m)
    h = t[1] - t[0]
    n = profile.n
    mids = 0.5 * (t[:-1] + t[1:])
    Re = profile.evaluate(mids, where=mids)
    I = np.eye(n)
    # element e couples nodes e and e + 1; keep interior nodes 1..m-1
    D = 2.0 / h * I + (h / 3.0) * (Re[:-1] + Re[1:])
    O = -1.0 / h * I + (h / 6.0) * Re[1:-1]
    return _band_from_blocks(D, O)


def hessian_index_fd(profile, m):
    """Number of negative eigenvalues of the Galerkin matrix of H_b."""
    band = hessian_matrix_band(profile, m)
    neg = eigvals_banded(band, lower=True, select="v", select_range=(-np.inf, 0.0))
    return int(np.count_nonzero(neg < 0.0))


# report --------------------------------------------------------------------

@dataclass
class IndexReport:
    conjugate_events: list
    conjugate_total: int
    spectral_total: int
    hessian_index: int
    hessian_mesh: int
    rectangle_residual: int
    nullity_at_b: int
    spectral_events: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    certified: bool = False
    loop: object = field(default=None, repr=False)

    def to_dict(self):
        return {
            "certified": self.certified,
            "conjugate_total": self.conjugate_total,
            "spectral_total": self.spectral_total,
            "hessian_index": self.hessian_index,
            "hessian_mesh": self.hessian_mesh,
            "rectangle_residual": self.rectangle_residual,
            "nullity_at_b": self.nullity_at_b,
            "conjugate_events": [e.to_dict() for e in self.conjugate_events],
            "spectral_events": [e.to_dict() for e in self.spectral_events],
            "diagnostics": self.diagnostics,
        }


def fd_negative_count(profile, m, nullity_at_b=0):
    """Negative FD eigenvalues, excluding the ones that discretize a zero
    eigenvalue when b is a conjugate value (the scheme pushes those
    slightly below zero)."""
    neg = sl_eigs_fd(profile, m, upper=0.0)
    neg = neg[neg < 0.0]
    if nullity_at_b:
        L = profile.b - profile.a
        tol = 10.0 * (L / m) ** 2 * (1.0 + float(np.max(np.abs(profile.evaluate([profile.a, profile.b])))))
        near = np.sort(neg[neg > -tol])[::-1][:nullity_at_b]
        return int(neg.size - near.size), neg
    return int(neg.size), neg


def morse_report(profile, settings=None):
    """All three counts, the rectangle residual and diagnostics.

    Raises CertificationFailure (carrying the report) unless the three
    counts agree, the residual is 0 and every t-edge crossing has slope
    at most -1 + slope_slack.
    """
    settings = settings or Settings()
    spec = build_rectangle(profile, settings)
    rect = _rectangle(spec, settings)
    events, conj_total = conjugate_points(profile, settings, spec)
    lam_events = spectral_events(spec, settings)
    spec_total = int(sum(e.multiplicity for e in lam_events))
    residual = rectangle_check(spec, settings)
    loop = rect.loop()
    h1 = hessian_index_fd(profile, settings.mesh)
    h2 = hessian_index_fd(profile, 2 * settings.mesh)
    fd_count, fd_neg = fd_negative_count(profile, settings.fd_mesh, spec.nullity_at_b)
    slopes_ok = [ms.crossing_slope_check(e, slack=settings.slope_slack) for e in events]
    lam_signs = sorted({e.sign for e in lam_events})

    diagnostics = {
        "rectangle": spec.to_dict(),
        "max_symplectic_drift": rect.ctx.max_drift,
        "slope_checks": slopes_ok,
        "max_t_edge_slope": max((max(e.slopes) for e in events if e.slopes), default=None),
        "lambda_edge_signs": lam_signs,
        "loop_winding": loop.winding,
        "loop_edge_indices": dict(zip([p.label for p in rect.loop_edges()], loop.edge_indices)),
        "loop_max_gap": loop.max_gap,
        "hessian_index_refined": h2,
        "hessian_mesh_refined": 2 * settings.mesh,
        "fd_mesh": settings.fd_mesh,
        "fd_negative_count": fd_count,
        "fd_negative_eigenvalues": [float(x) for x in fd_neg],
    }
    report = IndexReport(events, conj_total, spec_total, h1, settings.mesh, residual,
                         spec.nullity_at_b, lam_events, diagnostics, loop=loop)
    problems = []
    if not conj_total == spec_total == h1:
        problems.append(f"counts disagree: conjugate {conj_total}, spectral {spec_total}, hessian {h1}")
    if h2 != h1:
        problems.append(f"hessian index not stable under refinement ({h1} vs {h2})")
    if fd_count != spec_total:
        problems.append(f"finite-difference count {fd_count} differs from spectral count {spec_total}")
    if residual != 0:
        problems.append(f"rectangle residual {residual}")
    if not all(slopes_ok):
        problems.append("a conjugate crossing has slope above -1 + slack")
    if any(s < 0 for s in lam_signs):
        problems.append("negative crossing on the lambda-edge")
    log.debug("counts: conjugate %d, spectral %d, hessian %d/%d, fd %d, residual %d",
              conj_total, spec_total, h1, h2, fd_count, residual)
    report.certified = not problems
    diagnostics["problems"] = problems
    if problems:
        raise CertificationFailure("; ".join(problems), report=report)
    return report
