"""Quick closed-form checks of every module (flat planes, counting, exact values)."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

from .exact import grim_reaper, plane, tilted_grim_reaper
from .experiments import NOT_APPLICABLE, asymptote_check, blowup_scan
from .geometry import compute_geometry, translator_residual, weighted_area_element
from .grid import (FieldFormatError, ScalarField, format_field, make_domain, norms, parse_field,
                   refine)
from .metric import (curvature_scan, distance_pair, distances_from, graph_radius_bound,
                     sectional_curvature)
from .solver import LinearSolveError, SolverConfig, assemble_jacobian, evolve, linear_solve, newton_solve
from .stability import (apply_L, first_variation, kernel_check, perturbed_F, quadratic_form,
                        stability_report, variation_field, weighted_area)

__all__ = ["CHECKS", "run_selftest"]


def _grid():
    d = make_domain("RECT", x=(-1, 1), y=(-1, 1), nx=5, ny=5)
    yield "grid: 5x5 counts", int(d.interior.sum()) == 9 and int(d.boundary.sum()) == 16, \
        f"{int(d.interior.sum())} interior, {int(d.boundary.sum())} boundary"
    disk = make_domain("DISK", radius=1.0, h=0.5)
    yield "grid: disk mask symmetric", bool(np.array_equal(disk.node_class, disk.node_class[::-1])), ""
    slab = make_domain("SLAB", x=(-math.pi / 2, math.pi / 2), period=1.0, nx=9, ny=6)
    yield "grid: slab wraps in y", all(len(slab.neighbors(i, j)) == 4 for i in range(1, 8) for j in range(6)), ""
    r = refine(d)
    yield "grid: refine 5x5", (r.nx, r.ny) == (9, 9), f"{r.nx}x{r.ny}"
    rd = refine(disk)
    yield "grid: refined disk keeps interior", bool(np.all(rd.interior[::2, ::2][disk.interior])), ""
    yield "grid: refine keeps periodicity", refine(slab).periodic_y, ""
    sq = make_domain("RECT", x=(0, 1), y=(0, 1), nx=3, ny=3)
    yield "grid: norms of constant 2", norms(ScalarField(sq, np.full((3, 3), 2.0)))[0] == 2.0, ""
    yield "grid: norms of zero", norms(ScalarField(sq, np.zeros((3, 3)))) == (0.0, 0.0), ""
    g = grim_reaper().sample(make_domain("SLAB", x=(-1.2, 1.2), period=1.0, nx=9, ny=6))
    back = parse_field(format_field(g))
    yield "grid: field roundtrip", bool(np.array_equal(back.values, g.values)), ""
    text = format_field(g).splitlines()
    bad_nan = "\n".join(text[:2] + [text[2].rsplit(" ", 1)[0] + " nan"] + text[3:])
    bad_cnt = "\n".join(text[:-1])
    rejected = 0
    for t in (bad_nan, bad_cnt):
        try:
            parse_field(t)
        except FieldFormatError:
            rejected += 1
    yield "grid: malformed files rejected", rejected == 2, f"{rejected}/2"


def _geometry():
    d = make_domain("RECT", x=(0, 1), y=(0, 1), nx=9, ny=9)
    m = d.interior
    g0 = compute_geometry(ScalarField(d, np.zeros((9, 9))))
    ok = (np.all(g0.W[m] == 1) and np.all(g0.nu[m] == [0, 0, 1]) and np.all(g0.H_var[m] == 0)
          and np.all(g0.normA2[m] == 0))
    yield "geometry: flat plane", bool(ok), ""
    X, _ = d.coords()
    g1 = compute_geometry(ScalarField(d, X.copy()))
    ok = np.allclose(g1.W[m], math.sqrt(2)) and np.allclose(g1.tilt[m], 1 / math.sqrt(2)) \
        and np.max(np.abs(g1.H_var[m])) < 1e-12
    yield "geometry: tilted plane", bool(ok), ""
    R = translator_residual(ScalarField(d, np.zeros((9, 9))), 1.0).values[m]
    yield "geometry: residual of 0 is -1", bool(np.all(R == -1.0)), ""
    e0 = weighted_area_element(g0).values[m]
    g2 = compute_geometry(ScalarField(d, np.full((9, 9), 0.7)))
    e2 = weighted_area_element(g2).values[m]
    yield "geometry: area element of constants", bool(np.all(e0 == 1) and np.allclose(e2, math.exp(0.7))), ""


def _exact():
    gr = grim_reaper()
    yield "exact: grim reaper values", float(gr(0.0, 0.3)) == 0.0 and \
        abs(float(gr(math.pi / 4, 0.0)) - 0.5 * math.log(2)) < 1e-15, ""
    t0 = tilted_grim_reaper(0.0)
    xs = np.linspace(-1, 1, 7)
    yield "exact: b=0 is the grim reaper", bool(np.array_equal(t0(xs, xs), gr(xs, xs))), ""
    t1 = tilted_grim_reaper(1.0)
    yield "exact: tilted y-slope", bool(np.all(t1.gradient(xs, xs)[1] == 1.0)), ""


def _solver():
    d = make_domain("RECT", x=(0, 1), y=(0, 1), nx=5, ny=5)
    J = assemble_jacobian(ScalarField(d, np.zeros((5, 5))), 1.0, all_columns=True)
    w = np.random.default_rng(0).standard_normal(25)
    W = w.reshape(5, 5)
    lap = ((np.roll(W, 1, 0) + np.roll(W, -1, 0) + np.roll(W, 1, 1) + np.roll(W, -1, 1) - 4 * W)
           / d.hx**2)[d.interior]
    yield "solver: flat Jacobian is the Laplacian", bool(np.allclose(J @ w, lap, atol=1e-10)), ""
    disk = make_domain("DISK", radius=1.0, h=0.25)
    rep = newton_solve(disk, np.zeros((disk.nx, disk.ny)), SolverConfig(C=0.0))
    yield "solver: zero data, C=0", rep.converged and not np.any(rep.u.values), ""
    u = evolve(ScalarField(disk, np.zeros((disk.nx, disk.ny))), 0.1, C=0.0)
    yield "solver: flow of 0 stays 0", not np.any(u.values), ""
    rhs = np.arange(1.0, 6.0)
    yield "solver: identity solve", bool(np.allclose(linear_solve(sp.identity(5, format="csr"), rhs), rhs)), ""
    n = 6
    L = sp.diags([np.r_[1, 2 * np.ones(n - 2), 1], -np.ones(n - 1), -np.ones(n - 1)], [0, 1, -1], format="csr")
    try:
        linear_solve(L, np.ones(n), passes=3)
        ok = False
    except LinearSolveError:
        ok = True
    yield "solver: singular system flagged", ok, ""


def _stability():
    d = make_domain("RECT", x=(0, 1), y=(0, 1), nx=17, ny=17)
    zero = ScalarField(d, np.zeros((17, 17)))
    g = compute_geometry(zero)
    yield "stability: F(0) over the unit square", abs(weighted_area(g, rule="trapezoid") - 1) < 1e-14, ""
    gl = compute_geometry(ScalarField(d, np.full((17, 17), math.log(2))))
    yield "stability: F(ln 2)", abs(weighted_area(gl, rule="trapezoid") - 2) < 1e-14, ""
    X, Y = d.coords()
    eta = variation_field(d, np.sin(math.pi * X) * np.sin(math.pi * Y), truncate=True)
    fv = first_variation(g, eta)
    ref = float(np.sum(eta.values) * d.hx * d.hy)
    yield "stability: first variation of 0 is int eta", abs(fv - ref) <= 1e-12 * ref, f"{fv:.6g}"
    Lf = apply_L(g, eta, C=0.0).values
    V = eta.values
    lap = (np.roll(V, 1, 0) + np.roll(V, -1, 0) + np.roll(V, 1, 1) + np.roll(V, -1, 1) - 4 * V) / d.hx**2
    sel = eta.support & d.interior & ~d.collar(3)
    yield "stability: flat L is the Laplacian", bool(np.allclose(Lf[sel], lap[sel], atol=1e-8)), ""
    q = quadratic_form(g, eta, C=0.0)[0]
    yield "stability: flat Q negative", q < 0, f"{q:.4g}"
    slab = make_domain("SLAB", x=(-1.2, 1.2), period=1.0, nx=25, ny=10)
    gg = compute_geometry(grim_reaper().sample(slab))
    yield "stability: e2 kernel on the grim reaper", kernel_check(gg, (0, 1, 0)) == 0.0, ""
    F0 = perturbed_F(g, eta, 0.0)
    yield "stability: zero perturbation", abs(F0 - weighted_area(g, d.interior, rule="trapezoid")) < 1e-12, ""
    rep = stability_report(zero, 1.0, n_random=2)
    yield "stability: flat plane is not a translator", not rep.translator and not rep.verdict, ""


def _metric():
    yield "metric: K12 at x3=0", abs(sectional_curvature((0, 0, 0)) + 0.25) < 1e-6, ""
    d = make_domain("RECT", x=(0, 1), y=(0, 1), nx=9, ny=9)
    g = compute_geometry(ScalarField(d, np.zeros((9, 9))))
    dist = distances_from(g, (4, 4))
    yield "metric: flat lattice edge is h", abs(dist[5, 4] - d.hx) < 1e-15, ""
    dp = distance_pair(g, (4, 4), (6, 7))
    yield "metric: unit weight at p3", dp.d == dp.d_tilde, ""
    scan = curvature_scan(g, (4, 4), 0.3, [0.1, 0.2])
    yield "metric: flat scan is 0", scan["C_emp"] == 0.0, ""
    rho = graph_radius_bound(g, (4, 4))
    yield "metric: flat radius hits the cap", rho > 0.3, f"{rho:.4g}"


def _experiments():
    yield "experiments: plane has no wall", asymptote_check(plane()).verdict == NOT_APPLICABLE, ""
    rep = blowup_scan("SLAB", [0.0], h=1 / 8, config=SolverConfig(C=0.0))
    r = rep.metrics[0]
    yield "experiments: M=0 slab is flat", r["converged"] and r["min_collar_tilt"] == 1.0, ""


CHECKS = (_grid, _geometry, _exact, _solver, _stability, _metric, _experiments)


def run_selftest(seed: int = 42) -> list[tuple[str, bool, str]]:
    """Run every check; returns ``(name, passed, detail)`` triples."""
    np.random.default_rng(seed)
    out = []
    for group in CHECKS:
        try:
            for name, ok, detail in group():
                out.append((name, bool(ok), detail))
        except Exception as exc:  # a crash fails the group, it does not abort the run
            out.append((f"{group.__name__.strip('_')}: crashed", False, repr(exc)))
    return out
