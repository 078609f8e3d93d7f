"""The conformal metric exp(x3) delta: curvatures, lattice geodesics, curvature scans."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _cs_dijkstra

from . import kernels
from ._accel import njit
from .geometry import GraphGeometry
from .grid import atomic_write_text

__all__ = [
    "ConformalMetric",
    "DistancePair",
    "DistanceError",
    "christoffel",
    "riemann",
    "sectional_curvature",
    "lattice_graph",
    "distances_from",
    "intrinsic_distance",
    "conformal_distance",
    "distance_pair",
    "ball_mask",
    "sandwich_check",
    "curvature_scan",
    "scan_csv",
    "graph_radius_bound",
]


class DistanceError(ValueError):
    pass


@dataclass(frozen=True)
class ConformalMetric:
    """``g(x) = exp(x3 - p3) I``; the shift makes ``g = I`` at height ``p3``."""

    p3: float = 0.0

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return math.exp(x[2] - self.p3) * np.eye(3)

    def factor(self, x3):
        return np.exp(np.asarray(x3, dtype=float) - self.p3)


# -- curvature from the metric alone -------------------------------------------


def christoffel(metric, x, step: float = 1e-3) -> np.ndarray:
    """``Gamma[k, i, j]`` from central differences of ``metric``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    dg = np.empty((n, n, n))  # dg[l, i, j] = d_l g_ij
    for l in range(n):
        e = np.zeros(n)
        e[l] = step
        dg[l] = (metric(x + e) - metric(x - e)) / (2 * step)
    ginv = np.linalg.inv(metric(x))
    # Gamma^k_ij = 1/2 g^kl (d_i g_jl + d_j g_il - d_l g_ij)
    t = np.einsum("ijl->ijl", dg) + np.einsum("jil->ijl", dg) - np.einsum("lij->ijl", dg)
    return 0.5 * np.einsum("kl,ijl->kij", ginv, t)


def riemann(metric, x, step: float = 1e-3) -> np.ndarray:
    """``R[l, i, j, k]`` with ``R(d_i, d_j) d_k = R^l_ijk d_l``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    G = christoffel(metric, x, step)
    dG = np.empty((n, n, n, n))  # dG[m, k, i, j] = d_m Gamma^k_ij
    for m in range(n):
        e = np.zeros(n)
        e[m] = step
        dG[m] = (christoffel(metric, x + e, step) - christoffel(metric, x - e, step)) / (2 * step)
    R = (np.einsum("iljk->lijk", dG) - np.einsum("jlik->lijk", dG)
         + np.einsum("lim,mjk->lijk", G, G) - np.einsum("ljm,mik->lijk", G, G))
    return R


def sectional_curvature(point, plane=(1, 2), metric=None, step: float = 1e-3) -> float:
    """Sectional curvature of the coordinate plane ``(i, j)`` (1-based) at ``point``.

    Computed from the metric by finite differences, not from a formula.
    """
    i, j = plane
    if i == j or not (1 <= i <= 3 and 1 <= j <= 3):
        raise ValueError(f"invalid coordinate plane {plane!r}")
    g = metric if metric is not None else ConformalMetric()
    x = np.asarray(point, dtype=float)
    R = riemann(g, x, step)
    G = g(x)
    a, b = i - 1, j - 1
    num = np.einsum("l,l->", G[a], R[:, a, b, b])
    den = G[a, a] * G[b, b] - G[a, b] ** 2
    return float(num / den)


# -- lattice graph and shortest paths --------------------------------------------

_OFFS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


def lattice_graph(geom: GraphGeometry, mask=None, conformal: bool = False, p3: float = 0.0):
    """8-neighbour graph on ``mask`` (default: active nodes) with chord lengths.

    Returns ``(nbr, wts)`` of shape (N, 8); missing edges have ``nbr = -1``.
    With ``conformal`` each edge is scaled by ``exp((z_mid - p3) / 2)``.
    """
    d = geom.domain
    m = d.active if mask is None else (np.asarray(mask, dtype=bool) & d.active)
    X, Y = d.coords()
    Z = np.where(d.active, geom.u, 0.0)
    N = d.nx * d.ny
    ii, jj = np.divmod(np.arange(N), d.ny)
    nbr = np.full((N, 8), -1, dtype=np.int64)
    wts = np.zeros((N, 8))
    mf = m.ravel()
    for k, (di, dj) in enumerate(_OFFS):
        a = ii + di
        b = jj + dj
        if d.periodic_y:
            b = b % d.ny
        ok = (a >= 0) & (a < d.nx) & (b >= 0) & (b < d.ny) & mf
        idx = np.where(ok, a * d.ny + np.where(ok, b, 0), 0)
        ok &= mf[idx]
        dx = di * d.hx
        dy = dj * d.hy
        dz = Z.ravel()[idx] - Z.ravel()
        L = np.sqrt(dx * dx + dy * dy + dz * dz)
        if conformal:
            zmid = 0.5 * (Z.ravel()[idx] + Z.ravel())
            L = L * np.exp(0.5 * (zmid - p3))
        nbr[:, k] = np.where(ok, idx, -1)
        wts[:, k] = np.where(ok, L, 0.0)
    return nbr, wts


@njit(cache=True)
def _dijkstra_heap(nbr, wts, src, target):
    N = nbr.shape[0]
    dist = np.full(N, np.inf)
    done = np.zeros(N, dtype=np.bool_)
    cap = 8 * N + 1
    hd = np.empty(cap)
    hn = np.empty(cap, dtype=np.int64)
    size = 0
    dist[src] = 0.0
    hd[0] = 0.0
    hn[0] = src
    size = 1
    while size > 0:
        d0 = hd[0]
        n0 = hn[0]
        size -= 1
        if size > 0:
            # move last to root and sift down; order by (dist, node)
            hd[0] = hd[size]
            hn[0] = hn[size]
            i = 0
            while True:
                l = 2 * i + 1
                if l >= size:
                    break
                c = l
                r = l + 1
                if r < size and (hd[r] < hd[l] or (hd[r] == hd[l] and hn[r] < hn[l])):
                    c = r
                if hd[c] < hd[i] or (hd[c] == hd[i] and hn[c] < hn[i]):
                    td = hd[c]
                    tn = hn[c]
                    hd[c] = hd[i]
                    hn[c] = hn[i]
                    hd[i] = td
                    hn[i] = tn
                    i = c
                else:
                    break
        if done[n0]:
            continue
        done[n0] = True
        if n0 == target:
            break
        for k in range(nbr.shape[1]):
            m = nbr[n0, k]
            if m < 0 or done[m]:
                continue
            nd = d0 + wts[n0, k]
            if nd < dist[m]:
                dist[m] = nd
                i = size
                hd[i] = nd
                hn[i] = m
                size += 1
                while i > 0:
                    par = (i - 1) // 2
                    if hd[i] < hd[par] or (hd[i] == hd[par] and hn[i] < hn[par]):
                        td = hd[par]
                        tn = hn[par]
                        hd[par] = hd[i]
                        hn[par] = hn[i]
                        hd[i] = td
                        hn[i] = tn
                        i = par
                    else:
                        break
    return dist


def _dijkstra_scipy(nbr, wts, src):
    N = nbr.shape[0]
    rows = np.repeat(np.arange(N), nbr.shape[1])
    cols = nbr.ravel()
    ok = cols >= 0
    G = csr_matrix((wts.ravel()[ok], (rows[ok], cols[ok])), shape=(N, N))
    return _cs_dijkstra(G, directed=True, indices=int(src))


def _node(geom: GraphGeometry, p) -> int:
    d = geom.domain
    if isinstance(p, (int, np.integer)):
        return int(p)
    if len(p) == 2 and all(isinstance(v, (int, np.integer)) for v in p):
        i, j = p
    else:
        i = int(round((p[0] - d.origin[0]) / d.hx))
        j = int(round((p[1] - d.origin[1]) / d.hy))
        if d.periodic_y:
            j %= d.ny
    if not (0 <= i < d.nx and 0 <= j < d.ny) or not d.active[i, j]:
        raise DistanceError(f"node {(i, j)} is not an active lattice node")
    return i * d.ny + j


def distances_from(geom: GraphGeometry, p, conformal: bool = False, p3: float | None = None,
                   mask=None, target: int = -1) -> np.ndarray:
    """Shortest-path distances from node ``p`` (index, (i, j) or (x, y)) as an (nx, ny) array."""
    d = geom.domain
    src = _node(geom, p)
    if p3 is None:
        p3 = float(geom.u.ravel()[src])
    nbr, wts = lattice_graph(geom, mask, conformal, p3)
    if kernels.USE_NUMBA:
        dist = _dijkstra_heap(nbr, wts, src, target)
    else:
        dist = _dijkstra_scipy(nbr, wts, src)
    return dist.reshape(d.nx, d.ny)


def _pair(geom, p, q, conformal, mask=None):
    d = geom.domain
    t = _node(geom, q)
    dist = distances_from(geom, p, conformal, mask=mask, target=t)
    val = float(dist.ravel()[t])
    if not math.isfinite(val):
        raise DistanceError(f"node {divmod(t, d.ny)} is not connected to {divmod(_node(geom, p), d.ny)}")
    return val


def intrinsic_distance(geom: GraphGeometry, p, q, mask=None) -> float:
    return _pair(geom, p, q, False, mask)


def conformal_distance(geom: GraphGeometry, p, q, mask=None) -> float:
    return _pair(geom, p, q, True, mask)


@dataclass(frozen=True)
class DistancePair:
    d: float
    d_tilde: float


def ball_mask(geom: GraphGeometry, p, radius: float = 1.0) -> np.ndarray:
    """Active nodes whose lifted point lies in the open Euclidean ball ``B_radius(p)`` in R^3."""
    d = geom.domain
    src = _node(geom, p)
    X, Y = d.coords()
    Z = np.where(d.active, geom.u, 0.0)
    i, j = divmod(src, d.ny)
    dx = X - X[i, j]
    dy = Y - Y[i, j]
    if d.periodic_y:
        per = d.params["period"]
        dy = (dy + per / 2) % per - per / 2
    r2 = dx * dx + dy * dy + (Z - Z[i, j]) ** 2
    return d.active & (r2 < radius * radius)


def distance_pair(geom: GraphGeometry, p, q, restrict: bool = True) -> DistancePair:
    """``(d, d_tilde)`` between two nodes, with paths kept in ``Sigma ∩ B_1(p)`` when ``restrict``."""
    mask = ball_mask(geom, p) if restrict else None
    return DistancePair(_pair(geom, p, q, False, mask), _pair(geom, p, q, True, mask))


def sandwich_check(geom: GraphGeometry, n_pairs: int = 100, seed: int = 42,
                   slack: float = 0.02) -> dict:
    """``e^(-1/2) d <= d_tilde <= e^(1/2) d`` (with ``slack``) on random pairs.

    ``p`` is drawn from the interior nodes off a 2-cell collar and ``q`` from
    the interior nodes of ``Sigma ∩ B_1(p)``; paths stay in that ball.
    """
    d = geom.domain
    rng = np.random.default_rng(seed)
    lo, hi = math.exp(-0.5) * (1 - slack), math.exp(0.5) * (1 + slack)
    inner = np.argwhere(d.interior & ~d.collar(2))
    if len(inner) == 0:
        raise DistanceError("no interior nodes off the collar")
    rows = []
    while len(rows) < n_pairs:
        p = tuple(int(v) for v in inner[rng.integers(len(inner))])
        cand = np.argwhere(ball_mask(geom, p) & d.interior)
        q = tuple(int(v) for v in cand[rng.integers(len(cand))])
        if q == p:
            continue
        dp = distance_pair(geom, p, q)
        ratio = dp.d_tilde / dp.d
        rows.append({"p_i": p[0], "p_j": p[1], "q_i": q[0], "q_j": q[1], "d": dp.d,
                     "d_tilde": dp.d_tilde, "ratio": ratio, "ok": bool(lo <= ratio <= hi)})
    ratios = [r["ratio"] for r in rows]
    return {"rows": rows, "min_ratio": min(ratios), "max_ratio": max(ratios),
            "lower": lo, "upper": hi, "passed": all(r["ok"] for r in rows)}


# -- curvature scans --------------------------------------------------------------


def _ball_nodes(geom: GraphGeometry, p, r0: float):
    d = geom.domain
    dist = distances_from(geom, p)
    inside = dist <= r0
    bad = inside & ~d.interior
    if bad.any():
        cand = np.flatnonzero(bad.ravel())
        first = cand[np.lexsort((cand, dist.ravel()[cand]))[0]]
        raise DistanceError(f"intrinsic ball of radius {r0:g} leaves the interior at node "
                            f"{divmod(int(first), d.ny)}")
    return dist


def curvature_scan(geom: GraphGeometry, p, r0: float, sigmas) -> dict:
    """Rows ``(sigma, sup_{B_(r0 - sigma)} |A|^2, product)`` and ``C_emp`` = max product."""
    dist = _ball_nodes(geom, p, r0)
    A2 = np.nan_to_num(geom.normA2)
    rows = []
    for s in sigmas:
        s = float(s)
        if not 0 < s <= r0:
            raise ValueError("sigmas must lie in (0, r0]")
        inside = dist <= r0 - s
        sup = float(np.max(A2[inside], initial=0.0))
        rows.append((s, sup, sup * s * s))
    return {"rows": rows, "C_emp": max((r[2] for r in rows), default=0.0)}


def scan_csv(scan: dict, path=None) -> str:
    buf = io.StringIO()
    buf.write("sigma,sup_A2,product\n")
    for s, sup, prod in scan["rows"]:
        buf.write(f"{s:.17g},{sup:.17g},{prod:.17g}\n")
    text = buf.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text


def graph_radius_bound(geom: GraphGeometry, p, theta: float = 0.5, iters: int = 60) -> float:
    """Largest ``rho`` with ``sup_{B_rho(p)} |A| * rho <= theta`` (bisection over rho).

    Only interior nodes count; the result is capped at the largest distance
    to an interior node.
    """
    d = geom.domain
    dist = distances_from(geom, p, mask=d.interior)
    reach = d.interior & np.isfinite(dist)
    dv = dist[reach]
    A = np.nan_to_num(geom.normA)[reach]
    order = np.argsort(dv, kind="stable")
    ds = dv[order]
    runmax = np.maximum.accumulate(A[order])
    cap = float(ds[-1])

    def ok(rho):
        k = np.searchsorted(ds, rho, side="right")
        return k == 0 or runmax[k - 1] * rho <= theta

    if ok(cap):
        return cap
    lo, hi = 0.0, cap
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
