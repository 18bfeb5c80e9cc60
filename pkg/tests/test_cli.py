import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from maslovindex import cli

SPHERE = {"n": 1, "interval": [0.0, 10.0], "profile": {"kind": "constant", "matrix": [[-1.0]]}}


def invoke(sub, config, *extra, env=None, monkeypatch=None):
    text = config if isinstance(config, str) else json.dumps(config)
    out, err = io.StringIO(), io.StringIO()
    code = cli.main([sub, "--config", "-", *extra], stdin=io.StringIO(text), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


# parsing ------------------------------------------------------------------------

def test_minimal_config_gets_defaults():
    cfg = cli.parse_config('{"n": 1, "interval": [0, 1], "profile": {"kind": "constant", "matrix": [[0]]}}')
    assert cfg.profile.n == 1 and (cfg.profile.a, cfg.profile.b) == (0.0, 1.0)
    d = cfg.settings.to_dict()
    assert d["steps"] == 4096 and d["drift_tol"] == 1e-6 and d["rank_tol"] == 1e-8
    assert d["mesh"] == 512 and d["lambda_margin"] == 1.0 and d["seed"] == 0


@pytest.mark.parametrize("settings,field", [
    ({"steps": -4}, "settings.steps"),
    ({"rank_tol": 0}, "settings.rank_tol"),
    ({"drift_tol": -1e-6}, "settings.drift_tol"),
    ({"mesh": 2.5}, "settings.mesh"),
    ({"steps": "many"}, "settings.steps"),
    ({"seed": -1}, "settings.seed"),
    ({"colour": 1}, "settings"),
])
def test_bad_settings_rejected(settings, field):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(json.dumps({**SPHERE, "settings": settings}))
    assert info.value.where == field


def test_preset_expands():
    cfg = cli.parse_config('{"preset": "sphere-like-n2"}')
    d = cfg.to_dict()
    assert d["profile"] == {"kind": "constant", "matrix": [[-1.0, 0.0], [0.0, -1.0]]}
    assert d["n"] == 2 and d["interval"] == [0.0, 4.0]


@pytest.mark.parametrize("text,where", [
    ('{"n": 1,', "line 1, column 9"),
    ('{"n": 1, "extra": 2}', "config"),
    ('{"preset": "nope"}', "preset"),
    ('{"preset": "flat", "profile": {"kind": "constant", "matrix": [[0]]}}', "preset"),
    ('{"n": 2, "preset": "flat"}', "n"),
    ('{"n": 1, "profile": {"kind": "constant", "matrix": [[0]]}}', "interval"),
    ('{"n": 1, "interval": [1, 0], "profile": {"kind": "constant", "matrix": [[0]]}}', "interval"),
    ('{"n": 1, "interval": [0, 1], "profile": {"kind": "cubic"}}', "profile.kind"),
    ('{"n": 1, "interval": [0, 1], "profile": {"kind": "constant"}}', "profile"),
    ('{"n": 1, "interval": [0, 1], "profile": {"kind": "constant", "matrix": [[0]], "x": 1}}', "profile"),
    ('{"n": 1, "interval": [0, 1], "profile": {"kind": "constant", "matrix": [["a"]]}}', "profile.matrix"),
    ('{"n": 2, "interval": [0, 1], "profile": {"kind": "constant", "matrix": [[0, 1], [2, 0]]}}', "profile"),
    ('{"preset": "flat", "subcommand-params": {"mesh": 4}}', "subcommand-params.mesh"),
])
def test_bad_configs_name_the_field(text, where):
    with pytest.raises(cli.ConfigError) as info:
        cli.parse_config(text)
    assert info.value.where == where


def test_subcommand_params_checked_per_subcommand():
    cli.parse_config('{"preset": "flat", "subcommand-params": {"mesh": 64}}', "hessian")
    with pytest.raises(cli.ConfigError):
        cli.parse_config('{"preset": "flat", "subcommand-params": {"mesh": 64}}', "conjugate")
    with pytest.raises(cli.ConfigError):
        cli.parse_config('{"n": 2}', "index")


def test_every_profile_kind_parses():
    kinds = [
        {"kind": "constant", "matrix": [[1.0]]},
        {"kind": "diagonal-constant", "diagonal": [1.0]},
        {"kind": "piecewise-constant", "breakpoints": [0.5], "matrices": [[[1.0]], [[2.0]]]},
        {"kind": "polynomial-entries", "coefficients": [[[1.0]], [[-1.0]]]},
        {"kind": "sampled-linear-interp", "times": [0.0, 0.5, 1.0], "matrices": [[[1.0]], [[0.0]], [[1.0]]]},
        {"kind": "trigonometric", "constant": [[1.0]], "cos": [[[0.5]]], "sin": [[[0.25]]], "omega": 3.0},
    ]
    for prof in kinds:
        cfg = cli.parse_config(json.dumps({"n": 1, "interval": [0.0, 1.0], "profile": prof}))
        assert cfg.profile.kind == prof["kind"]
        assert cfg.profile.to_dict() == {k: (np.array(v, dtype=float).tolist() if k != "kind" else v)
                                         for k, v in prof.items()}


def random_config(rng):
    n = int(rng.integers(1, 4))
    G = rng.normal(size=(n, n))
    kind = rng.choice(["constant", "trigonometric", "piecewise"])
    a, b = sorted(rng.uniform(-2, 5, size=2))
    b += 0.5
    if kind == "constant":
        prof = {"kind": "constant", "matrix": (G + G.T).tolist()}
    elif kind == "piecewise":
        prof = {"kind": "piecewise-constant", "breakpoints": [0.5 * (a + b)],
                "matrices": [(G + G.T).tolist(), (G @ G.T).tolist()]}
    else:
        prof = {"kind": "trigonometric", "constant": (G + G.T).tolist(), "cos": [(G @ G.T).tolist()],
                "sin": [np.eye(n).tolist()], "omega": float(rng.uniform(0.5, 3))}
    settings = {"steps": int(rng.integers(16, 9000)), "rank_tol": float(rng.uniform(1e-10, 1e-6)),
                "mesh": int(rng.integers(8, 600)), "lambda_margin": float(rng.uniform(0.1, 3)),
                "seed": int(rng.integers(0, 1000))}
    return {"n": n, "interval": [float(a), float(b)], "profile": prof, "settings": settings}


@given(st.integers(0, 2**32 - 1))
def test_config_round_trip(seed):
    raw = random_config(np.random.default_rng(seed))
    first = cli.parse_config(json.dumps(raw)).to_dict()
    second = cli.parse_config(json.dumps(first)).to_dict()
    assert first == second


# running ---------------------------------------------------------------------------

def test_index_flat_preset():
    code, out, _ = invoke("index", {"preset": "flat"})
    assert code == 0
    res = json.loads(out)["result"]
    assert res["certified"]
    assert res["conjugate_total"] == res["spectral_total"] == res["hessian_index"] == 0


def test_index_sphere():
    code, out, _ = invoke("index", SPHERE)
    assert code == 0
    doc = json.loads(out)
    res = doc["result"]
    assert doc["ok"] and doc["subcommand"] == "index"
    assert (res["conjugate_total"], res["spectral_total"], res["hessian_index"]) == (3, 3, 3)
    assert res["rectangle_residual"] == 0


def test_json_is_deterministic():
    first = invoke("index", SPHERE)[1]
    second = invoke("index", SPHERE)[1]
    assert first == second


@pytest.mark.parametrize("sub", ["conjugate", "spectrum", "hessian", "rectangle"])
def test_other_subcommands(sub):
    code, out, _ = invoke(sub, {"preset": "diag-1-4"})
    assert code == 0
    res = json.loads(out)["result"]
    key = {"conjugate": "conjugate_total", "spectrum": "spectral_total",
           "hessian": "hessian_index", "rectangle": "residual"}[sub]
    assert res[key] == (0 if sub == "rectangle" else 3)


def test_maslov_loop():
    code, out, _ = invoke("maslov-loop", {"n": 2, "subcommand-params": {"S": [[1, 0], [0, 2]]}})
    assert code == 0
    res = json.loads(out)["result"]
    assert res["winding_rounded"] == 2 and abs(res["winding"] - 2) < 0.05
    assert res["index"] == -2


def test_maslov_loop_defaults_and_random():
    res = json.loads(invoke("maslov-loop", {"n": 3})[1])["result"]
    assert res["S"] == np.diag([1.0, 2.0, 3.0]).tolist() and res["winding_rounded"] == 3
    cfg = {"n": 2, "settings": {"seed": 5}, "subcommand-params": {"random": True}}
    a, b = invoke("maslov-loop", cfg)[1], invoke("maslov-loop", cfg)[1]
    assert a == b and json.loads(a)["result"]["winding_rounded"] == 2


def test_csv_output():
    code, out, _ = invoke("conjugate", {"preset": "diag-1-4"}, "--output", "csv")
    assert code == 0
    events, trace = out.split("\n\n")
    rows = list(csv.reader(io.StringIO(events)))
    assert rows[0] == cli.EVENT_COLUMNS
    assert [(r[0], int(r[2]), int(r[3])) for r in rows[1:]] == [("t-edge", 1, 1), ("t-edge", 2, 1)]
    assert abs(float(rows[2][1]) - np.pi) < 1e-8 and float(rows[2][4]) <= -0.9
    trows = list(csv.reader(io.StringIO(trace)))
    assert trows[0] == cli.TRACE_COLUMNS
    us = [float(r[1]) for r in trows[1:]]
    assert us == sorted(us) and len(us) > 100


def test_csv_loop_trace_is_accumulated():
    code, out, _ = invoke("maslov-loop", {"n": 2}, "--output", "csv")
    trace = list(csv.reader(io.StringIO(out.split("\n\n")[1])))
    assert abs(float(trace[-1][2]) - 4 * np.pi) < 1e-6


def test_out_file(tmp_path):
    target = tmp_path / "report.json"
    code, out, _ = invoke("hessian", {"preset": "sphere-like-n1"}, "--out", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["result"]["hessian_index"] == 3


def test_config_file(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"preset": "positive"}))
    out = io.StringIO()
    assert cli.main(["index", "--config", str(path)], stdout=out, stderr=io.StringIO()) == 0
    assert json.loads(out.getvalue())["result"]["certified"]


# exit codes -----------------------------------------------------------------------

def test_exit_invalid_config():
    code, out, err = invoke("index", {**SPHERE, "settings": {"steps": -4}})
    assert code == 2 and out == "" and "settings.steps" in err
    assert invoke("index", "{oops")[0] == 2
    assert cli.main(["index", "--config", "/nonexistent/cfg.json"], stderr=io.StringIO()) == 2
    assert cli.main(["frobnicate", "--config", "-"], stderr=io.StringIO()) == 2


def test_exit_mismatch():
    # eight elements push the one negative mode on [0, 3.15] above zero
    cfg = {"n": 1, "interval": [0.0, 3.15], "profile": {"kind": "constant", "matrix": [[-1.0]]},
           "subcommand-params": {"mesh": 8}}
    code, out, err = invoke("hessian", cfg)
    assert code == 1
    res = json.loads(out)["result"]
    assert (res["hessian_index"], res["refined_index"]) == (0, 1)


def test_exit_numerical_failure():
    cfg = {"n": 2, "interval": [0.0, 2.0],
           "profile": {"kind": "trigonometric", "constant": [[-3.0, 1.0], [1.0, -2.0]],
                       "cos": [[[1.0, 0.5], [0.5, 0.0]]], "sin": [[[0.0, 1.0], [1.0, 1.0]]], "omega": 2.0},
           "settings": {"drift_tol": 1e-300}}
    code, out, err = invoke("conjugate", cfg)
    assert code == 3 and "numerical failure" in err


def test_log_levels(monkeypatch):
    monkeypatch.setenv("MASLOV_LOG", "debug")
    code, _, err = invoke("index", {"preset": "flat"})
    assert code == 0 and "running index" in err and "counts:" in err
    monkeypatch.setenv("MASLOV_LOG", "info")
    _, _, err = invoke("hessian", {"preset": "flat"})
    assert "running hessian" in err and "counts:" not in err
    monkeypatch.delenv("MASLOV_LOG")
    assert invoke("hessian", {"preset": "flat"})[2] == ""
