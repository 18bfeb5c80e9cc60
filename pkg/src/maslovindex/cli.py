"""Command line front end: JSON config in, JSON or CSV report out.

    maslovindex <subcommand> --config <path|-> [--output json|csv] [--out <path>]

Exit codes: 0 success, 1 certification mismatch, 2 invalid config,
3 numerical failure. ``MASLOV_LOG=debug|info`` turns on diagnostics on
stderr.

CSV output is two tables separated by one blank line. The first is the
crossing table with header ``edge,u_star,multiplicity,sign,slope`` where
``slope`` is the largest crossing eigenvalue slope of the event (empty
when the event has none). The second is the Det^2 phase trace with
header ``edge,u,phase``; the phase is unwrapped and accumulated along
the edges in loop order.
"""

import argparse
import csv
from dataclasses import dataclass, field
import io
import json
import logging
import math
import os
import sys

import numpy as np

from . import maslov as ms
from . import morse
from .errors import CertificationFailure, InvalidInputError, MaslovError
from .jacobiflow import CurvatureProfile
from .presets import PRESETS

log = logging.getLogger("maslovindex")

SUBCOMMANDS = ("conjugate", "spectrum", "hessian", "rectangle", "index", "maslov-loop")
TOP_KEYS = {"n", "interval", "profile", "preset", "settings", "subcommand-params"}
PROFILE_KEYS = {
    "constant": {"matrix"},
    "diagonal-constant": {"diagonal"},
    "piecewise-constant": {"breakpoints", "matrices"},
    "polynomial-entries": {"coefficients"},
    "sampled-linear-interp": {"times", "matrices"},
    "trigonometric": {"constant", "cos", "sin", "omega"},
}
SETTING_TYPES = {
    "steps": int, "renormalize_every": int, "drift_tol": float, "rank_tol": float,
    "mesh": int, "fd_mesh": int, "grid": int, "lambda_margin": float,
    "slope_slack": float, "seed": int,
}
PARAM_KEYS = {
    "conjugate": set(),
    "spectrum": {"fd_mesh"},
    "hessian": {"mesh"},
    "rectangle": set(),
    "index": set(),
    "maslov-loop": {"S", "random"},
}
EVENT_COLUMNS = ["edge", "u_star", "multiplicity", "sign", "slope"]
TRACE_COLUMNS = ["edge", "u", "phase"]

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


class ConfigError(InvalidInputError):
    """Invalid configuration; ``where`` names the offending field or line."""

    def __init__(self, message, where=""):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


@dataclass
class RunConfig:
    profile: CurvatureProfile = None
    settings: morse.Settings = field(default_factory=morse.Settings)
    params: dict = field(default_factory=dict)
    n: int = None

    def to_dict(self):
        d = {"settings": self.settings.to_dict(), "subcommand-params": _plain(self.params)}
        if self.profile is not None:
            d["n"] = self.profile.n
            d["interval"] = [self.profile.a, self.profile.b]
            d["profile"] = self.profile.to_dict()
        elif self.n is not None:
            d["n"] = self.n
        return d


def _plain(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def _number(x, where):
    if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
        raise ConfigError("expected a finite number", where)
    return float(x)


def _integer(x, where):
    if isinstance(x, bool) or not isinstance(x, int):
        if isinstance(x, float) and x.is_integer():
            return int(x)
        raise ConfigError("expected an integer", where)
    return x


def _array(x, ndim, where):
    try:
        arr = np.array(x, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a {ndim}-d numeric array", where) from None
    if arr.ndim != ndim and not (arr.size == 0 and ndim > 1):
        raise ConfigError(f"expected a {ndim}-d numeric array", where)
    if not np.all(np.isfinite(arr)):
        raise ConfigError("entries must be finite", where)
    return arr


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError("expected an object", where)
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) {', '.join(map(repr, extra))}", where)


def _require(obj, keys, where):
    missing = sorted(k for k in keys if k not in obj)
    if missing:
        raise ConfigError(f"missing key(s) {', '.join(map(repr, missing))}", where)


def _build_profile(spec, interval):
    _check_keys(spec, {"kind"} | set().union(*PROFILE_KEYS.values()), "profile")
    kind = spec.get("kind")
    if kind not in PROFILE_KEYS:
        raise ConfigError(f"kind must be one of {', '.join(PROFILE_KEYS)}", "profile.kind")
    _check_keys(spec, {"kind"} | PROFILE_KEYS[kind], "profile")
    _require(spec, PROFILE_KEYS[kind], "profile")
    a, b = interval
    at = lambda k: f"profile.{k}"
    if kind == "constant":
        return CurvatureProfile.constant(_array(spec["matrix"], 2, at("matrix")), a, b)
    if kind == "diagonal-constant":
        return CurvatureProfile.diagonal(_array(spec["diagonal"], 1, at("diagonal")), a, b)
    if kind == "piecewise-constant":
        return CurvatureProfile.piecewise_constant(_array(spec["breakpoints"], 1, at("breakpoints")),
                                                   _array(spec["matrices"], 3, at("matrices")), a, b)
    if kind == "polynomial-entries":
        return CurvatureProfile.polynomial(_array(spec["coefficients"], 3, at("coefficients")), a, b)
    if kind == "sampled-linear-interp":
        prof = CurvatureProfile.sampled(_array(spec["times"], 1, at("times")),
                                        _array(spec["matrices"], 3, at("matrices")))
        if (prof.a, prof.b) != (a, b):
            raise ConfigError("sample times must start at a and end at b", "interval")
        return prof
    return CurvatureProfile.trigonometric(_array(spec["constant"], 2, at("constant")),
                                          _array(spec["cos"], 3, at("cos")),
                                          _array(spec["sin"], 3, at("sin")),
                                          _number(spec["omega"], at("omega")), a, b)


def _parse_settings(obj):
    _check_keys(obj, SETTING_TYPES, "settings")
    values = {}
    for k, v in obj.items():
        where = f"settings.{k}"
        values[k] = _integer(v, where) if SETTING_TYPES[k] is int else _number(v, where)
    bad = [k for k in ("steps", "mesh", "fd_mesh", "grid", "drift_tol", "rank_tol", "lambda_margin")
           if k in values and not values[k] > 0]
    if bad:
        raise ConfigError("must be positive", f"settings.{bad[0]}")
    if values.get("renormalize_every", 0) < 0 or values.get("seed", 0) < 0:
        key = "renormalize_every" if values.get("renormalize_every", 0) < 0 else "seed"
        raise ConfigError("must be non-negative", f"settings.{key}")
    try:
        return morse.Settings(**values)
    except InvalidInputError as exc:
        raise ConfigError(str(exc), "settings") from None


def _parse_params(obj, subcommand, n):
    _check_keys(obj, set().union(*PARAM_KEYS.values()), "subcommand-params")
    if subcommand is not None:
        _check_keys(obj, PARAM_KEYS[subcommand], f"subcommand-params ({subcommand})")
    out = {}
    for k in ("fd_mesh", "mesh"):
        if k in obj:
            out[k] = _integer(obj[k], f"subcommand-params.{k}")
            if out[k] < 8:
                raise ConfigError("must be at least 8", f"subcommand-params.{k}")
    if "random" in obj:
        if not isinstance(obj["random"], bool):
            raise ConfigError("expected true or false", "subcommand-params.random")
        out["random"] = obj["random"]
    if "S" in obj:
        S = _array(obj["S"], 2, "subcommand-params.S")
        if S.shape[0] != S.shape[1] or not np.allclose(S, S.T, atol=1e-12):
            raise ConfigError("S must be a symmetric square matrix", "subcommand-params.S")
        if n is not None and S.shape[0] != n:
            raise ConfigError(f"S is {S.shape[0]} x {S.shape[0]} but n = {n}", "subcommand-params.S")
        out["S"] = S.tolist()
    return out


def parse_config(text, subcommand=None):
    """Strict parse of a JSON config into a RunConfig.

    Unknown keys are rejected and omitted settings take their defaults.
    With ``subcommand`` the subcommand parameters are checked against it
    and a profile is required unless the subcommand is ``maslov-loop``.
    """
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(exc.msg, f"line {exc.lineno}, column {exc.colno}") from None
    _check_keys(raw, TOP_KEYS, "config")

    n = None
    if "n" in raw:
        n = _integer(raw["n"], "n")
        if n < 1:
            raise ConfigError("must be at least 1", "n")
    interval = None
    if "interval" in raw:
        iv = raw["interval"]
        if not isinstance(iv, list) or len(iv) != 2:
            raise ConfigError("expected [a, b]", "interval")
        interval = (_number(iv[0], "interval[0]"), _number(iv[1], "interval[1]"))
        if not interval[0] < interval[1]:
            raise ConfigError("need a < b", "interval")

    profile = None
    if "preset" in raw:
        if "profile" in raw:
            raise ConfigError("give either a preset or a profile, not both", "preset")
        name = raw["preset"]
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}", "preset")
        profile = PRESETS[name].profile
        if interval is not None:
            profile = profile.with_interval(*interval)
    elif "profile" in raw:
        if interval is None:
            raise ConfigError("a profile needs an interval", "interval")
        try:
            profile = _build_profile(raw["profile"], interval)
        except ConfigError:
            raise
        except InvalidInputError as exc:
            raise ConfigError(str(exc), "profile") from None
    if profile is not None and n is not None and profile.n != n:
        raise ConfigError(f"profile has dimension {profile.n} but n = {n}", "n")
    if profile is None and subcommand is not None and subcommand != "maslov-loop":
        raise ConfigError(f"{subcommand!r} needs a profile or a preset", "profile")

    settings = _parse_settings(raw.get("settings", {}))
    params = _parse_params(raw.get("subcommand-params", {}), subcommand, n if profile is None else profile.n)
    return RunConfig(profile, settings, params, n if profile is None else profile.n)


# running -------------------------------------------------------------------

@dataclass
class Outcome:
    result: dict
    events: list = field(default_factory=list)
    traces: list = field(default_factory=list)
    ok: bool = True


def _loop_traces(loop):
    return [(label, us, ph) for label, us, ph in loop.traces]


def _run_conjugate(cfg):
    spec = morse.build_rectangle(cfg.profile, cfg.settings)
    events, total = morse.conjugate_points(cfg.profile, cfg.settings, spec)
    rect = morse._rectangle(spec, cfg.settings)
    us, ph, _ = ms.winding_trace(rect.t_edge, cfg.settings.grid)
    res = {"conjugate_total": total, "nullity_at_b": spec.nullity_at_b,
           "events": [e.to_dict() for e in events], "rectangle": spec.to_dict()}
    return Outcome(res, events, [(rect.t_edge.label, us, ph)])


def _run_spectrum(cfg):
    spec = morse.build_rectangle(cfg.profile, cfg.settings)
    rect = morse._rectangle(spec, cfg.settings)
    events = morse.spectral_events(spec, cfg.settings)
    total = int(sum(e.multiplicity for e in events))
    m = cfg.params.get("fd_mesh", cfg.settings.fd_mesh)
    fd_count, fd_neg = morse.fd_negative_count(cfg.profile, m, spec.nullity_at_b)
    us, ph, _ = ms.winding_trace(rect.lam_edge, cfg.settings.grid)
    res = {"spectral_total": total, "fd_mesh": m, "fd_negative_count": fd_count,
           "fd_negative_eigenvalues": [float(x) for x in fd_neg],
           "nullity_at_b": spec.nullity_at_b, "events": [e.to_dict() for e in events],
           "consistent": fd_count == total}
    return Outcome(res, events, [(rect.lam_edge.label, us, ph)], ok=fd_count == total)


def _run_hessian(cfg):
    m = cfg.params.get("mesh", cfg.settings.mesh)
    h1 = morse.hessian_index_fd(cfg.profile, m)
    h2 = morse.hessian_index_fd(cfg.profile, 2 * m)
    res = {"mesh": m, "hessian_index": h1, "refined_mesh": 2 * m, "refined_index": h2,
           "stable": h1 == h2}
    return Outcome(res, ok=h1 == h2)


def _run_rectangle(cfg):
    spec = morse.build_rectangle(cfg.profile, cfg.settings)
    residual = morse.rectangle_check(spec, cfg.settings)
    rect = morse._rectangle(spec, cfg.settings)
    loop = rect.loop()
    res = {"residual": residual, "rectangle": spec.to_dict(), **loop.to_dict()}
    res["edge_indices"] = dict(zip([p.label for p in rect.loop_edges()], loop.edge_indices))
    return Outcome(res, loop.events, _loop_traces(loop), ok=residual == 0)


def _run_index(cfg):
    try:
        report = morse.morse_report(cfg.profile, cfg.settings)
        ok = True
    except CertificationFailure as exc:
        report, ok = exc.report, False
        if report is None:
            raise
    events = report.conjugate_events + report.spectral_events
    return Outcome(report.to_dict(), events, _loop_traces(report.loop), ok=ok)


def _run_maslov_loop(cfg):
    p = cfg.params
    if "S" in p:
        S = np.array(p["S"], dtype=float)
    elif p.get("random"):
        if cfg.n is None:
            raise ConfigError("a random S needs n", "n")
        G = np.random.default_rng(cfg.settings.seed).normal(size=(cfg.n, cfg.n))
        S = 0.5 * (G + G.T)
    elif cfg.n is not None:
        S = np.diag(np.arange(1.0, cfg.n + 1.0))
    else:
        raise ConfigError("maslov-loop needs n or subcommand-params.S", "subcommand-params")
    path = ms.rotation_path(S)
    loop = ms.analyze_loop([path], cfg.settings.grid, cfg.settings.rank_tol)
    res = {"n": int(S.shape[0]), "S": S.tolist(), "winding": loop.winding,
           "winding_rounded": int(round(loop.winding)), "index": loop.index,
           "events": [e.to_dict() for e in loop.events]}
    return Outcome(res, loop.events, _loop_traces(loop))


RUNNERS = {
    "conjugate": _run_conjugate,
    "spectrum": _run_spectrum,
    "hessian": _run_hessian,
    "rectangle": _run_rectangle,
    "index": _run_index,
    "maslov-loop": _run_maslov_loop,
}


def run(cfg, subcommand):
    """Execute ``subcommand`` on a parsed config. Returns an Outcome."""
    if subcommand not in RUNNERS:
        raise ConfigError(f"unknown subcommand {subcommand!r}", "subcommand")
    log.info("running %s", subcommand)
    out = RUNNERS[subcommand](cfg)
    log.info("%s finished, ok=%s", subcommand, out.ok)
    return out


def _finite(x):
    """JSON has no inf/nan: map them to strings."""
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    return x


def render_json(cfg, subcommand, outcome):
    doc = {"subcommand": subcommand, "ok": outcome.ok, "config": cfg.to_dict(),
           "result": _plain(outcome.result)}
    return json.dumps(_finite(doc), sort_keys=True, indent=2, allow_nan=False) + "\n"


def render_csv(outcome):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(EVENT_COLUMNS)
    for e in outcome.events:
        w.writerow([e.edge, repr(e.u_star), e.multiplicity, e.sign,
                    repr(max(e.slopes)) if e.slopes else ""])
    buf.write("\n")
    w.writerow(TRACE_COLUMNS)
    offset = 0.0
    for label, us, ph in outcome.traces:
        for u, p in zip(us, ph):
            w.writerow([label, repr(float(u)), repr(float(offset + p))])
        if len(ph):
            offset += float(ph[-1])
    return buf.getvalue()


def _setup_logging(stderr):
    level = os.environ.get("MASLOV_LOG", "").strip().lower()
    levels = {"debug": logging.DEBUG, "info": logging.INFO}
    for h in [h for h in log.handlers if getattr(h, "_maslov_cli", False)]:
        log.removeHandler(h)
    if not level:
        return
    handler = logging.StreamHandler(stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    handler._maslov_cli = True
    log.addHandler(handler)
    if level in levels:
        log.setLevel(levels[level])
    else:
        log.setLevel(logging.WARNING)
        log.warning("ignoring MASLOV_LOG=%r (use debug or info)", level)


def _read_config(path, stdin):
    if path == "-":
        return stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(exc.strerror or str(exc), path) from None
    except UnicodeDecodeError:
        raise ConfigError("config is not valid UTF-8", path) from None


def build_parser():
    ap = argparse.ArgumentParser(prog="maslovindex",
                                 description="Morse index of a geodesic from its curvature profile.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="JSON config file, or - for stdin")
    ap.add_argument("--output", choices=("json", "csv"), default="json")
    ap.add_argument("--out", help="write the report here instead of stdout")
    return ap


def main(argv=None, stdin=None, stdout=None, stderr=None):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    _setup_logging(stderr)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = parse_config(_read_config(args.config, stdin), args.subcommand)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=stderr)
        return EXIT_CONFIG
    try:
        outcome = run(cfg, args.subcommand)
    except InvalidInputError as exc:
        print(f"invalid config: {exc}", file=stderr)
        return EXIT_CONFIG
    except CertificationFailure as exc:
        print(f"certification failed: {exc}", file=stderr)
        return EXIT_MISMATCH
    except MaslovError as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERICAL
    text = render_json(cfg, args.subcommand, outcome) if args.output == "json" else render_csv(outcome)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        try:
            stdout.write(text)
            stdout.flush()
        except BrokenPipeError:
            # reader went away (e.g. piped into head); silence the exit flush
            if stdout is sys.stdout:
                os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    if not outcome.ok:
        print("certification failed: see report", file=stderr)
        return EXIT_MISMATCH
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
