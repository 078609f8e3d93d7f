import json
import math

import numpy as np
import pytest

from translator_lab import experiments as ex
from translator_lab.exact import bowl, grim_reaper, plane, tilted_grim_reaper
from translator_lab.grid import ScalarField, make_domain
from translator_lab.solver import newton_solve


def test_report_json_and_csv(tmp_path):
    rep = ex.ExperimentReport("t", {"a": np.float64(1.5)}, [{"x": 1.0, "ok": True, "v": math.nan}], True,
                              tables={"extra": [{"k": 2}]})
    js = rep.to_json()
    assert js["metrics"][0]["v"] is None and js["inputs"]["a"] == 1.5
    json.dumps(js, allow_nan=False)
    assert rep.csv(tmp_path / "m.csv") == "x,ok,v\n1,true,nan\n"
    assert (tmp_path / "m.csv").read_text() == "x,ok,v\n1,true,nan\n"
    assert rep.csv(table="extra") == "k\n2\n"
    assert rep.passed
    assert not ex.ExperimentReport("t", {}, [], ex.INCONCLUSIVE).passed


def test_residual_order_is_two():
    a = math.pi / 2 - 0.2
    d = make_domain("SLAB", x=(-a, a), period=1.0, nx=65, ny=8)
    r = ex.residual_order(grim_reaper(), d)
    assert 3.2 <= r["ratio"] <= 4.8 and r["order"] == pytest.approx(math.log2(r["ratio"]))


def test_asymptote_plane_not_applicable():
    rep = ex.asymptote_check(plane(0.3, 0.2, 0.0))
    assert rep.verdict == ex.NOT_APPLICABLE and rep.metrics == []


def test_asymptote_exact_grim():
    rep = ex.asymptote_check(grim_reaper())
    assert rep.verdict is True
    for row in rep.metrics:
        assert row["max_tilt"] == pytest.approx(math.sin(row["offset"]), rel=1e-12)


def test_asymptote_tilted_uses_width():
    sol = tilted_grim_reaper(1.0)
    rep = ex.asymptote_check(sol)
    assert rep.inputs["width"] == pytest.approx(sol.width)
    assert rep.verdict is True


def test_asymptote_bad_offsets():
    with pytest.raises(ValueError):
        ex.asymptote_check(grim_reaper(), offsets=(0.1, -0.1))
    a = math.pi / 2 - 0.2
    d = make_domain("SLAB", x=(-a, a), period=1.0, nx=33, ny=8)
    f = grim_reaper().sample(d)
    with pytest.raises(ValueError, match="outside the domain"):
        ex.asymptote_check(f, wall=-math.pi / 2, width=math.pi, offsets=(0.1,))


def test_asymptote_field_without_wall():
    d = make_domain("RECT", x=(-1, 1), y=(-1, 1), nx=9, ny=9)
    rep = ex.asymptote_check(bowl().sample(d))
    assert rep.verdict == ex.NOT_APPLICABLE
    with pytest.raises(TypeError):
        ex.asymptote_check("grim")


def test_asymptote_field_grim():
    a = math.pi / 2 - 0.1
    d = make_domain("SLAB", x=(-a, a), period=1.0, nx=129, ny=8)
    u = newton_solve(d, grim_reaper().sample(d)).u
    rep = ex.asymptote_check(u, wall=-math.pi / 2, width=math.pi, offsets=(0.2, 0.3, 0.5))
    assert rep.verdict is True
    for row in rep.metrics:
        assert row["max_tilt"] == pytest.approx(math.sin(row["offset"]), abs=5e-3)


def test_blowup_zero_data_without_drift():
    rep = ex.blowup_scan("SLAB", (0,), h=1 / 16, C=0.0)
    (row,) = rep.metrics
    assert row["converged"] and row["iterations"] == 0
    assert row["min_collar_tilt"] == 1.0 and row["sup_grad"] == 0.0
    assert rep.verdict is True


def test_blowup_small_disk_data_resolved():
    rep = ex.blowup_scan("DISK", (0.25, 0.5), h=1 / 16)
    assert all(r["resolved"] for r in rep.metrics)
    assert rep.metrics[0]["min_collar_tilt"] > rep.metrics[1]["min_collar_tilt"]
    assert rep.verdict is True
    assert rep.notes[-1].startswith("consistent with")


def test_blowup_argument_errors():
    with pytest.raises(ValueError, match="increasing"):
        ex.blowup_scan("SLAB", (2, 1))
    with pytest.raises(ValueError):
        ex.blowup_scan("RECT", (1,))
    with pytest.raises(ValueError, match="r_in"):
        ex.blowup_scan("DISK", (1,), r_in=1.5)
