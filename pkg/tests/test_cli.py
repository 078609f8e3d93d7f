import json
import os
import subprocess
import sys

import pytest

from translator_lab.cli import config_schema, run
from translator_lab.grid import read_field


def _run(tmp_path, *args, name="out"):
    out = tmp_path / name
    return run([*args, "--out", str(out)]), out


def test_exact_outputs_and_determinism(tmp_path):
    code, a = _run(tmp_path, "exact", "--kind", "grim", "--nx", "33", "--ny", "8", name="a")
    code2, b = _run(tmp_path, "exact", "--kind", "grim", "--nx", "33", "--ny", "8", name="b")
    assert code == code2 == 0
    for f in ("exact.field", "residual.csv", "report.json", "config.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    meta = json.loads((a / "metadata.json").read_text())
    assert {"started", "finished", "elapsed_seconds"} <= meta.keys()
    assert "started" not in (a / "report.json").read_text()
    assert read_field(a / "exact.field").domain.periodic_y


def test_solve_writes_field(tmp_path):
    code, out = _run(tmp_path, "solve", "--kind", "bowl", "--nx", "17", "--ny", "17")
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] is True
    assert (out / "residual_history.csv").read_text().startswith("iteration")
    assert read_field(out / "solution.field").domain.nx == 17


def test_solve_from_field(tmp_path):
    _, a = _run(tmp_path, "exact", "--kind", "bowl", "--nx", "17", "--ny", "17", name="a")
    code, _ = _run(tmp_path, "solve", "--field", str(a / "exact.field"), name="b")
    assert code == 0


def test_plane_stability_fails(tmp_path):
    code, out = _run(tmp_path, "stability", "--kind", "plane", "--nx", "17", "--ny", "17")
    assert code == 1
    assert json.loads((out / "report.json").read_text())["passed"] is False


def test_asymptote_plane_not_applicable(tmp_path):
    code, out = _run(tmp_path, "asymptote", "--kind", "plane")
    assert code == 0
    assert json.loads((out / "report.json").read_text())["verdict"] == "not applicable"


def test_selftest(tmp_path, capsys):
    code, out = _run(tmp_path, "selftest")
    assert code == 0
    assert "FAIL" not in capsys.readouterr().out
    assert (out / "selftest.csv").exists()


def test_metric_check(tmp_path):
    code, out = _run(tmp_path, "metric-check", "--kind", "grim", "--nx", "41", "--ny", "16")
    assert code == 0
    assert (out / "sandwich.csv").exists() and (out / "curvature.csv").exists()


@pytest.mark.parametrize("args", [
    ["exact", "--kind", "grim", "--nx", "2"],
    ["solve", "--kind", "grim", "--tol", "-1"],
    ["exact", "--field", "/nonexistent/file.field"],
])
def test_usage_errors(tmp_path, args):
    code, _ = _run(tmp_path, *args)
    assert code == 2


def test_unknown_config_key(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"kind": "grim", "colour": "red"}))
    code, _ = _run(tmp_path, "exact", "--config", str(cfg))
    assert code == 2
    cfg.write_text(json.dumps({"kind": "grim", "field": "x.field"}))
    assert _run(tmp_path, "exact", "--config", str(cfg))[0] == 2


def test_schema_rejects_extra_keys():
    for sub in ("solve", "gallery", "blowup-scan", "selftest"):
        s = config_schema(sub)
        assert s["additionalProperties"] is False
        assert "seed" in s["properties"]


def test_print_schema(capsys):
    assert run(["solve", "--print-schema"]) == 0
    assert json.loads(capsys.readouterr().out)["additionalProperties"] is False


def test_unknown_subcommand_via_console():
    out = subprocess.run([sys.executable, "-m", "translator_lab.cli", "bogus"], capture_output=True, text=True)
    assert out.returncode == 2
    assert "usage" in out.stderr


def test_thread_env_recorded(tmp_path):
    env = dict(os.environ, TRANSLATOR_LAB_THREADS="1")
    out = tmp_path / "o"
    subprocess.run([sys.executable, "-m", "translator_lab.cli", "exact", "--kind", "plane", "--out", str(out)],
                   env=env, check=True, capture_output=True)
    assert json.loads((out / "metadata.json").read_text())["threads"] == 1
