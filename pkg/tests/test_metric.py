import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from translator_lab import metric as mt
from translator_lab._accel import HAVE_NUMBA
from translator_lab.exact import grim_reaper
from translator_lab.geometry import compute_geometry
from translator_lab.grid import ScalarField, make_domain


def sphere_metric(x):
    # round unit sphere in stereographic coordinates
    return 4.0 / (1 + np.dot(x, x)) ** 2 * np.eye(3)


def hyperbolic_metric(x):
    return np.eye(3) / x[2] ** 2


@settings(max_examples=15, deadline=None)
@given(hst.tuples(hst.floats(-0.5, 0.5), hst.floats(-0.5, 0.5), hst.floats(-0.5, 0.5)),
       hst.sampled_from([(1, 2), (1, 3), (2, 3)]))
def test_space_forms(x, plane):
    assert mt.sectional_curvature(x, plane, sphere_metric) == pytest.approx(1.0, abs=1e-4)
    y = (x[0], x[1], 1.0 + x[2])
    assert mt.sectional_curvature(y, plane, hyperbolic_metric) == pytest.approx(-1.0, abs=1e-4)


def test_euclidean_christoffel_vanish():
    assert np.all(mt.christoffel(lambda x: np.eye(3), np.zeros(3)) == 0)


def test_conformal_christoffel():
    # g = exp(x3) I: Gamma^3_11 = -1/2, Gamma^1_13 = 1/2
    G = mt.christoffel(mt.ConformalMetric(), np.array([0.3, -0.2, 0.4]))
    assert G[2, 0, 0] == pytest.approx(-0.5, abs=1e-6)
    assert G[0, 0, 2] == pytest.approx(0.5, abs=1e-6)


def test_flat_lattice_distance():
    d = make_domain("RECT", x=(0, 1), y=(0, 1), nx=11, ny=11)
    g = compute_geometry(ScalarField(d, np.zeros((11, 11))))
    assert mt.intrinsic_distance(g, (2, 2), (5, 3)) == pytest.approx(0.1 * (2 + math.sqrt(2)), rel=1e-14)


def test_conformal_equals_intrinsic_at_constant_height():
    d = make_domain("RECT", x=(0, 1), y=(0, 1), nx=11, ny=11)
    g = compute_geometry(ScalarField(d, np.full((11, 11), 0.7)))
    dp = mt.distance_pair(g, (2, 2), (6, 5), restrict=False)
    assert dp.d_tilde == pytest.approx(dp.d, rel=1e-14)


def test_grim_arclength():
    # along y = const the graph is the curve x -> log sec x, of length log(sec t + tan t) on [0, t]
    n = 801
    a = 1.2
    d = make_domain("SLAB", x=(-a, a), period=0.5, nx=n, ny=8)
    g = compute_geometry(grim_reaper().sample(d))
    i0 = (n - 1) // 2
    i1 = i0 + int(round(1.0 / d.hx))
    x1 = d.x[i1] - d.x[i0]
    ref = math.log(1 / math.cos(x1) + math.tan(x1))
    assert mt.intrinsic_distance(g, (i0, 3), (i1, 3)) == pytest.approx(ref, rel=1e-4)


def test_bad_nodes():
    d = make_domain("DISK", radius=1.0, h=0.25)
    g = compute_geometry(ScalarField(d, np.zeros((d.nx, d.ny))))
    with pytest.raises(mt.DistanceError):
        mt.distances_from(g, (0, 0))
    only_p = np.zeros((d.nx, d.ny), bool)
    only_p[4, 4] = True
    with pytest.raises(mt.DistanceError, match="not connected"):
        mt.intrinsic_distance(g, (4, 4), (4, 5), mask=only_p)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_heap_matches_scipy():
    d = make_domain("SLAB", x=(-1.2, 1.2), period=1.0, nx=25, ny=10)
    g = compute_geometry(grim_reaper().sample(d))
    nbr, wts = mt.lattice_graph(g, conformal=True, p3=0.3)
    for src in (30, 101):
        a = mt._dijkstra_heap(nbr, wts, src, -1)
        b = mt._dijkstra_scipy(nbr, wts, src)
        assert np.allclose(a, b, rtol=1e-13)


def test_sandwich_on_plane():
    d = make_domain("RECT", x=(-1, 1), y=(-1, 1), nx=21, ny=21)
    X, Y = d.coords()
    g = compute_geometry(ScalarField(d, 0.5 * X))
    res = mt.sandwich_check(g, n_pairs=10, seed=1)
    assert res["passed"] and len(res["rows"]) == 10


def test_graph_radius():
    d = make_domain("RECT", x=(-1, 1), y=(-1, 1), nx=21, ny=21)
    flat = compute_geometry(ScalarField(d, np.zeros((21, 21))))
    # no curvature: the bound is the distance to the farthest interior node
    assert mt.graph_radius_bound(flat, (10, 10)) == pytest.approx(0.9 * math.sqrt(2), rel=1e-12)
    d = make_domain("RECT", x=(-1.2, 1.2), y=(-1, 1), nx=97, ny=81)
    grim = compute_geometry(grim_reaper().sample(d))
    # |A| = cos x is about 1 near the axis, so the bound is about theta
    assert mt.graph_radius_bound(grim, (48, 40), theta=0.5) == pytest.approx(0.5, abs=0.03)


def test_curvature_scan_plane_and_errors(tmp_path):
    d = make_domain("RECT", x=(-2, 2), y=(-2, 2), nx=41, ny=41)
    g = compute_geometry(ScalarField(d, np.zeros((41, 41))))
    scan = mt.curvature_scan(g, (0.0, 0.0), 1.0, [0.25, 0.5])
    assert scan["C_emp"] == 0.0
    text = mt.scan_csv(scan, tmp_path / "s.csv")
    assert text.splitlines()[0] == "sigma,sup_A2,product"
    with pytest.raises(ValueError):
        mt.curvature_scan(g, (0.0, 0.0), 1.0, [1.5])
    with pytest.raises(mt.DistanceError, match="leaves the interior"):
        mt.curvature_scan(g, (0.0, 0.0), 3.0, [0.5])
