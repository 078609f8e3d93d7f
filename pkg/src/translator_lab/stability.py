"""Weighted area, its first and second variations, and the stability operator L.

Everything is built on the quadrature ``F_h`` of ``F(u) = int exp(C u) W dx``
used by the variational scheme (see :mod:`translator_lab.kernels`).  Its
Hessian ``H`` in the vertical direction gives the second variation; writing
the vertical displacement as ``W phi`` turns it into the normal one, and

    L phi = -(1 / M) W H (W phi) - (C R W + <grad u, grad R> / W) phi,

with ``M = exp(C u) W hx hy`` the node weight and ``R`` the variational
residual.  The last term vanishes on translators; with it, ``L`` is a
consistent discretization of ``Delta phi + C <e3, grad phi> + |A|^2 phi`` for
every graph, and it is symmetric for ``<a, b>_w = sum a b M`` by
construction.  On a discrete critical point ``L (1 / W) = 0`` up to the
solver residual, which is what makes the stability identity sharp.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from . import kernels
from ._accel import njit
from .geometry import GraphGeometry, compute_geometry
from .grid import GridDomain, ScalarField
from .solver import SolverConfig, SolveReport, newton_solve

__all__ = [
    "VariationField",
    "variation_field",
    "bump",
    "StabilityReport",
    "EigenEstimate",
    "EigenConvergenceError",
    "JacobiOperator",
    "jacobi_operator",
    "critical_point",
    "weighted_area",
    "first_variation",
    "apply_L",
    "kernel_check",
    "quadratic_form",
    "stability_identity",
    "top_eigenvalue",
    "perturbed_F",
    "stability_report",
]

logger = logging.getLogger(__name__)

E1 = (1.0, 0.0, 0.0)
E2 = (0.0, 1.0, 0.0)
E3 = (0.0, 0.0, 1.0)
BASIS = {"e1": E1, "e2": E2, "e3": E3}


class EigenConvergenceError(RuntimeError):
    def __init__(self, message: str, rayleigh: float, residual: float):
        super().__init__(f"{message} (last Rayleigh quotient {rayleigh:.6e}, residual {residual:.3e})")
        self.rayleigh = rayleigh
        self.residual = residual


# -- variation fields ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VariationField:
    """A compactly supported ``eta``: zero on BOUNDARY nodes and on a collar of interior nodes."""

    eta: ScalarField
    support: np.ndarray
    collar: int = 2

    def __post_init__(self):
        if self.collar < 2:
            raise ValueError("the zero collar must be at least 2 cells wide")
        outside = self.eta.values[~self.support & self.eta.domain.active]
        if np.any(outside != 0.0):
            raise ValueError("variation field is nonzero outside its support")

    @property
    def domain(self) -> GridDomain:
        return self.eta.domain

    @property
    def values(self) -> np.ndarray:
        return self.eta.values


def free_mask(domain: GridDomain, collar: int = 2) -> np.ndarray:
    return domain.interior & ~domain.collar(collar)


def variation_field(domain: GridDomain, values, collar: int = 2, truncate: bool = False) -> VariationField:
    """Wrap ``values`` as a VariationField; with ``truncate`` the collar is zeroed first."""
    mask = free_mask(domain, collar)
    vals = np.array(values, dtype=float)
    if truncate:
        vals = np.where(mask, vals, 0.0)
    vals = np.where(domain.active, vals, 0.0)
    return VariationField(ScalarField(domain, vals), mask, collar)


def bump(domain: GridDomain, center=(0.0, 0.0), radius: float = 1.0, collar: int = 2) -> VariationField:
    """``cos^2(pi r / 2 radius)`` inside the disk, truncated to the free nodes."""
    X, Y = domain.coords()
    r = np.hypot(X - center[0], Y - center[1]) / radius
    vals = np.where(r < 1, np.cos(0.5 * np.pi * np.minimum(r, 1)) ** 2, 0.0)
    return variation_field(domain, vals, collar, truncate=True)


def _values(f) -> np.ndarray:
    if isinstance(f, VariationField):
        return f.values
    if isinstance(f, ScalarField):
        return f.values
    return np.asarray(f, dtype=float)


# -- the operator --------------------------------------------------------------


def _centred(a: np.ndarray, d: GridDomain):
    ax = (d.shift(a, 1, 0) - d.shift(a, -1, 0)) / (2 * d.hx)
    ay = (d.shift(a, 0, 1) - d.shift(a, 0, -1)) / (2 * d.hy)
    return ax, ay


class JacobiOperator:
    """Discrete ``L`` for the graph of ``u`` with speed ``C``.

    ``rows`` are the interior nodes at least two steps from the boundary
    (where every quantity in the stencil is defined); ``free`` the nodes
    where variation fields may be nonzero.  ``potential`` replaces the
    zero-order part (the discrete ``|A|^2``) when given.
    """

    def __init__(self, u: ScalarField, C: float = 1.0, potential=None, collar: int = 2):
        d = u.domain
        self.field = u
        self.domain = d
        self.C = float(C)
        self.collar_width = collar
        uu = u.values
        N = d.nx * d.ny
        interior = d.interior
        core = interior & ~d.collar(1)
        self.core_mask = core
        self.free_mask = free_mask(d, collar)
        self.rows = np.flatnonzero(core)
        self.free = np.flatnonzero(self.free_mask)

        st_int = d.stencil_index()
        R_int, _ = kernels.variational_residual(uu.ravel()[st_int], d.hx, d.hy, self.C)
        R = np.zeros(N)
        R[np.flatnonzero(interior)] = R_int
        self.R = R.reshape(d.nx, d.ny)
        ux, uy = _centred(uu, d)
        W = np.sqrt(1 + ux * ux + uy * uy)
        self.W = np.where(interior, W, np.nan)
        Rx, Ry = _centred(self.R, d)
        with np.errstate(invalid="ignore"):
            corr = self.C * self.R * W + (ux * Rx + uy * Ry) / W
        self.correction = np.where(core, corr, 0.0)
        # node weight exp(C u) W hx hy
        self.mass = np.where(interior, np.exp(self.C * uu) * W * d.hx * d.hy, 0.0)

        st = d.stencil_index(self.rows)
        self.stencil = st
        _, Hrel = kernels.variational(uu.ravel()[st], d.hx, d.hy, self.C, True)
        Wf = np.where(interior, W, 0.0).ravel()
        vals = -Hrel * Wf[st]
        vals[:, 4] -= self.correction.ravel()[self.rows]
        m = self.rows.size
        ri = np.repeat(np.arange(m), 9)
        Lfull = sp.csr_matrix((vals.ravel(), (ri, st.ravel())), shape=(m, N))
        Lfull.sum_duplicates()
        V = np.asarray(Lfull.sum(axis=1)).ravel()
        self.natural_potential = np.zeros(N)
        self.natural_potential[self.rows] = V
        if potential is not None:
            newV = np.broadcast_to(np.asarray(potential, dtype=float), (d.nx, d.ny)).ravel()[self.rows]
            Lfull = Lfull + sp.csr_matrix((newV - V, (np.arange(m), self.rows)), shape=(m, N))
            self.potential = np.zeros(N)
            self.potential[self.rows] = newV
            self.overridden = True
        else:
            self.potential = self.natural_potential.copy()
            self.overridden = False
        self.potential = self.potential.reshape(d.nx, d.ny)
        self.natural_potential = self.natural_potential.reshape(d.nx, d.ny)
        self.matrix = Lfull.tocsr()

    # ``phi`` arguments are full (nx, ny) arrays, fields or VariationFields

    def apply(self, phi) -> ScalarField:
        """``L phi`` on the rows (zero elsewhere); ``phi`` is read on the rows' stencils."""
        d = self.domain
        v = np.where(d.active, _values(phi), 0.0).ravel()
        out = np.zeros(d.nx * d.ny)
        out[self.rows] = self.matrix @ v
        return ScalarField(d, out.reshape(d.nx, d.ny))

    def free_matrix(self) -> sp.csr_matrix:
        pos = np.searchsorted(self.rows, self.free)
        return self.matrix[pos][:, self.free].tocsr()

    def _check_support(self, phi) -> np.ndarray:
        v = _values(phi)
        if np.any(v[~self.free_mask & self.domain.active] != 0.0):
            raise ValueError("phi must vanish on the collar and the boundary")
        return v

    def quadratic_form(self, phi) -> float:
        """``Q(phi) = <phi, L phi>_w`` through the assembled operator."""
        v = self._check_support(phi)
        Lv = self.apply(v).values
        return float(np.sum((self.mass * v * Lv)[self.free_mask]))

    def quadratic_form_sum(self, phi) -> float:
        """``Q(phi)`` summed quadrant by quadrant, as minus the second variation of F_h."""
        v = self._check_support(phi)
        d = self.domain
        Wz = np.where(d.interior, self.W, 0.0)
        w = (Wz * v).ravel()
        hess = _quadrant_sum(self.field.values.ravel(), w, self.rows, self.stencil, d.hx, d.hy,
                             self.C, mode=0)
        pot = self.potential - self.natural_potential
        zero_order = np.sum((self.mass * (self.correction - pot) * v * v)[self.free_mask])
        return float(-hess - zero_order)

    def gradient_energy(self, eta) -> float:
        """Discrete ``int xi^2 |grad eta|^2 exp(C x3) dmu`` with ``xi = 1/W``.

        Quadrant quadrature of ``exp(C u) g^ij d_i eta d_j eta / W`` plus the
        one-sided correction terms of F_h, which are O(h^2) on smooth ``eta``.
        """
        v = self._check_support(eta)
        d = self.domain
        return float(_quadrant_sum(self.field.values.ravel(), v.ravel(), self.rows, self.stencil,
                                   d.hx, d.hy, self.C, mode=1))

    def eigen_matrix(self):
        """Symmetric ``B = M^(1/2) L M^(-1/2)`` on the free nodes."""
        Lf = self.free_matrix().tocoo()
        uu = self.field.values.ravel()
        Wf = self.W.ravel()
        a, b = self.free[Lf.row], self.free[Lf.col]
        scale = np.sqrt(np.exp(self.C * (uu[a] - uu[b])) * Wf[a] / Wf[b])
        B = sp.csr_matrix((Lf.data * scale, (Lf.row, Lf.col)), shape=Lf.shape)
        return ((B + B.T) * 0.5).tocsr()


def _quadrant_sum(u, w, rows, stencil, hx, hy, C, mode):
    """Sum over the four quadrants of every row node.

    mode 0: ``w^T H w`` (H the Hessian of F_h); mode 1: the gradient energy.
    """
    total = 0.0
    U = u[stencil]
    Wv = w[stencil]
    for sx in (-1, 1):
        for sy in (-1, 1):
            k1 = 3 * (sx + 1) + 1
            k2 = 3 + (sy + 1)
            ax, ay = 1.0 / (sx * hx), 1.0 / (sy * hy)
            p = (U[:, k1] - U[:, 4]) * ax
            q = (U[:, k2] - U[:, 4]) * ay
            W2 = 1 + p * p + q * q
            W = np.sqrt(W2)
            wt = 0.25 * hx * hy * np.exp(C * (U[:, 4] + U[:, k1] + U[:, k2]) / 3)
            kxx = (1 - p * p / W2) / W
            kxy = -p * q / W2 / W
            kyy = (1 - q * q / W2) / W
            e0, e1, e2 = Wv[:, 4], Wv[:, k1], Wv[:, k2]
            gx = (e1 - e0) * ax
            gy = (e2 - e0) * ay
            dirichlet = kxx * gx * gx + 2 * kxy * gx * gy + kyy * gy * gy
            v0 = -(p * ax + q * ay) / W
            v1 = p * ax / W
            v2 = q * ay / W
            if mode == 0:
                s = e0 + e1 + e2
                lin = v0 * e0 + v1 * e1 + v2 * e2
                term = C * C * W / 9 * s * s + 2 * C / 3 * s * lin + dirichlet
            else:
                pairs = ((e0, e1, v0, v1), (e0, e2, v0, v2), (e1, e2, v1, v2))
                corr = 0.0
                for ea, eb, va, vb in pairs:
                    corr = corr + (C * C * W / 9 + C * (va + vb) / 3) * (ea - eb) ** 2
                term = dirichlet - corr
            total += float(np.sum(wt * term))
    return total


def jacobi_operator(u, C: float = 1.0, potential=None, collar: int = 2) -> JacobiOperator:
    if isinstance(u, GraphGeometry):
        u = u.field
    return JacobiOperator(u, C, potential, collar)


def _op(geom, C, potential=None) -> JacobiOperator:
    if isinstance(geom, JacobiOperator):
        return geom
    return jacobi_operator(geom, C, potential)


def critical_point(u: ScalarField, C: float = 1.0, config: SolverConfig | None = None) -> SolveReport:
    """Newton polish of ``u`` to a critical point of F_h with the same boundary values."""
    base = config or SolverConfig(C=C)
    cfg = SolverConfig(**{**asdict(base), "C": float(C), "scheme": "variational"})
    return newton_solve(u.domain, u, cfg, initial=u.values)


# -- operations on geometries ------------------------------------------------------


def _full_W(geom: GraphGeometry) -> np.ndarray:
    d = geom.domain
    u = np.where(d.active, geom.u, 0.0)
    ux = np.gradient(u, d.hx, axis=0, edge_order=2)
    uy = np.gradient(u, d.hy, axis=1, edge_order=2)
    return np.sqrt(1 + ux * ux + uy * uy)


def weighted_area(geom: GraphGeometry, region=None, C: float = 1.0, rule: str = "node") -> float:
    """``F = sum exp(C u) W hx hy`` over the region's interior nodes.

    ``rule="trapezoid"`` weights each node by the fraction of its four cells
    lying in the region (default: all active nodes), so the sum is the
    trapezoid rule over those cells.  Off the interior, ``W`` comes from
    one-sided second-order differences.
    """
    d = geom.domain
    if rule == "trapezoid":
        mask = d.active if region is None else (np.asarray(region, dtype=bool) & d.active)
        W = np.where(d.interior, geom.W, _full_W(geom))
    else:
        mask = d.interior if region is None else (np.asarray(region, dtype=bool) & d.interior)
        W = geom.W
    dens = np.where(mask, np.exp(C * geom.u) * W, 0.0)
    if rule == "node":
        wts = mask.astype(float)
    elif rule == "trapezoid":
        cells = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
        wts = np.zeros(mask.shape)
        wts[:-1, :-1] += cells
        wts[1:, :-1] += cells
        wts[:-1, 1:] += cells
        wts[1:, 1:] += cells
        wts /= 4
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return float(np.sum(dens * wts) * d.hx * d.hy)


def first_variation(geom, eta, C: float = 1.0) -> float:
    """``int eta (H_var + C tilt) exp(C u) W dx`` with the bracket ``-R`` of the variational scheme."""
    op = _op(geom, C)
    v = np.where(op.domain.interior, _values(eta), 0.0)
    return float(-np.sum(v * op.R * op.mass))


def apply_L(geom, eta, C: float = 1.0, potential=None) -> ScalarField:
    return _op(geom, C, potential).apply(eta)


def normal_component(op: JacobiOperator, v) -> np.ndarray:
    """``<v, nu>`` at interior nodes (zero elsewhere), nu from centred differences."""
    d = op.domain
    ux, uy = _centred(op.field.values, d)
    W = np.sqrt(1 + ux * ux + uy * uy)
    vx, vy, vz = (float(c) for c in v)
    return np.where(d.interior, (-vx * ux - vy * uy + vz) / W, 0.0)


def kernel_check(geom, v, C: float = 1.0) -> float:
    """``sup |L <v, nu>|`` over the free nodes."""
    op = _op(geom, C)
    Lf = op.apply(normal_component(op, v)).values
    sel = Lf[op.free_mask]
    return float(np.max(np.abs(sel))) if sel.size else 0.0


def quadratic_form(geom, phi, C: float = 1.0, potential=None) -> tuple[float, float]:
    """``Q(phi)`` from the operator and from the quadrant sum."""
    op = _op(geom, C, potential)
    return op.quadratic_form(phi), op.quadratic_form_sum(phi)


def stability_identity(geom, eta, C: float = 1.0) -> dict:
    """``Q(eta xi)`` against ``-int xi^2 |grad eta|^2 exp(C x3)`` for ``xi = 1/W``."""
    op = _op(geom, C)
    v = op._check_support(eta)
    xi = np.where(op.domain.interior, 1.0 / np.where(op.domain.interior, op.W, 1.0), 0.0)
    Q = op.quadratic_form(v * xi)
    E = op.gradient_energy(v)
    gap = abs(Q + E) / abs(E) if E != 0 else abs(Q)
    return {"Q": Q, "gradient_energy": E, "identity_gap": gap}


@dataclass
class EigenEstimate:
    value: float
    residual: float
    iterations: int
    shift: float

    def to_json(self) -> dict:
        return asdict(self)


@njit(cache=True)
def _power_loop(indptr, indices, data, shift, x, tol, max_iter, check):
    n = x.size
    y = np.empty(n)
    Bx = np.empty(n)
    rho = 0.0
    res = np.inf
    it = 0
    while it < max_iter:
        for _ in range(check):
            for i in range(n):
                s = 0.0
                for k in range(indptr[i], indptr[i + 1]):
                    s += data[k] * x[indices[k]]
                y[i] = s + shift * x[i]
            nrm = 0.0
            for i in range(n):
                nrm += y[i] * y[i]
            nrm = np.sqrt(nrm)
            for i in range(n):
                x[i] = y[i] / nrm
            it += 1
        for i in range(n):
            s = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                s += data[k] * x[indices[k]]
            Bx[i] = s
        rho = 0.0
        for i in range(n):
            rho += x[i] * Bx[i]
        res = 0.0
        for i in range(n):
            r = Bx[i] - rho * x[i]
            res += r * r
        res = np.sqrt(res)
        if res <= tol:
            break
    return rho, res, it


def _power_np(B, shift, x, tol, max_iter, check):
    rho, res, it = 0.0, math.inf, 0
    while it < max_iter:
        for _ in range(check):
            y = B @ x + shift * x
            x = y / np.linalg.norm(y)
            it += 1
        Bx = B @ x
        rho = float(x @ Bx)
        res = float(np.linalg.norm(Bx - rho * x))
        if res <= tol:
            break
    return rho, res, it


def top_eigenvalue(geom, tol: float = 1e-6, C: float = 1.0, potential=None, seed: int = 42,
                   max_iter: int = 5_000_000) -> EigenEstimate:
    """Largest eigenvalue of L on the free nodes by shifted power iteration.

    Iterates ``B + s I`` with ``B`` the symmetrized operator and ``s`` the
    Gershgorin bound on its spectral radius, from a seeded positive start
    vector, until the Rayleigh residual ``|B x - rho x|`` is below ``tol``.
    """
    op = _op(geom, C, potential)
    B = op.eigen_matrix()
    n = B.shape[0]
    if n == 0:
        raise ValueError("no free nodes: the domain is too small for a 2-cell collar")
    shift = float(np.max(np.asarray(abs(B).sum(axis=1)).ravel()))
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 1.5, n)
    x /= np.linalg.norm(x)
    check = 16
    if kernels.USE_NUMBA:
        rho, res, it = _power_loop(B.indptr.astype(np.int64), B.indices.astype(np.int64), B.data,
                                   shift, x, tol, max_iter, check)
    else:
        rho, res, it = _power_np(B, shift, x, tol, max_iter, check)
    if not res <= tol:
        raise EigenConvergenceError(f"power iteration did not converge in {it} steps", rho, res)
    return EigenEstimate(float(rho), float(res), int(it), shift)


def _tri_area_weight(P, C):
    a, b, c = P
    cr = np.cross(b - a, c - a)
    area = 0.5 * np.linalg.norm(cr, axis=-1)
    z = (a[..., 2] + b[..., 2] + c[..., 2]) / 3
    return area, np.exp(C * z)


def perturbed_F(geom: GraphGeometry, eta, s: float, C: float = 1.0, region=None,
                check_embedded: bool = True) -> float:
    """Weighted area of the triangulated surface ``X + s eta nu``.

    Cells with all four corners in ``region`` (default: interior nodes) are
    split into two triangles; each contributes ``area * exp(C z_centroid)``.
    """
    d = geom.domain
    mask = d.interior if region is None else (np.asarray(region, dtype=bool) & d.interior)
    ev = np.where(mask, _values(eta), 0.0)
    nu = np.where(mask[..., None], np.nan_to_num(geom.nu), 0.0)
    if check_embedded:
        A = np.nan_to_num(geom.normA)
        if abs(s) * np.max(np.abs(ev)) * np.max(A[mask], initial=0.0) > 0.1:
            raise ValueError("perturbation too large: |s| sup|eta| sup|A| must be <= 0.1")
    X, Y = d.coords()
    P = np.stack([X, Y, np.where(mask, geom.u, 0.0)], axis=-1) + s * ev[..., None] * nu
    cells = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    i, j = np.nonzero(cells)
    p00, p10, p11, p01 = P[i, j], P[i + 1, j], P[i + 1, j + 1], P[i, j + 1]
    total = 0.0
    for tri in ((p00, p10, p11), (p00, p11, p01)):
        area, wt = _tri_area_weight(tri, C)
        if area.size and np.min(area) < 1e-16:
            raise ValueError("degenerate triangle in the perturbed surface")
        total += float(np.sum(area * wt))
    return total


# -- report -------------------------------------------------------------------


@dataclass
class StabilityReport:
    Q_values: list = field(default_factory=list)
    kernel_residuals: dict = field(default_factory=dict)
    top_eigenvalue: dict = field(default_factory=dict)
    identity_gap: float = math.nan
    first_variation: float = math.nan
    translator: bool = False
    polished: bool = False
    verdict: bool = False

    def to_json(self) -> dict:
        return {
            "Q_values": [[lab, float(q)] for lab, q in self.Q_values],
            "kernel_residuals": {k: float(v) for k, v in self.kernel_residuals.items()},
            "top_eigenvalue": self.top_eigenvalue,
            "identity_gap": float(self.identity_gap),
            "first_variation": float(self.first_variation),
            "translator": self.translator,
            "polished": self.polished,
            "verdict": self.verdict,
        }


def stability_report(u: ScalarField, C: float = 1.0, eta: VariationField | None = None,
                     n_random: int = 20, seed: int = 42, eig_tol: float = 1e-6,
                     translator_tol: float = 1e-2, polish: bool = True,
                     polish_change: float | None = None) -> StabilityReport:
    """Run the stability checks on ``u``.

    The input counts as a translator when its relative first variation
    ``|dF(eta)| / int |eta| exp(C u) W`` is below ``translator_tol``.  It is
    then polished to a critical point of F_h (unless ``polish`` is off) and
    every check runs on the polished field.
    """
    d = u.domain
    rep = StabilityReport()
    if eta is None:
        X, Y = d.coords()
        fm = free_mask(d)
        if not fm.any():
            raise ValueError("domain too small for a 2-cell collar")
        xs, ys = X[fm], Y[fm]
        cx, cy = 0.5 * (xs.min() + xs.max()), 0.5 * (ys.min() + ys.max())
        rad = 0.5 * min(xs.max() - xs.min(), ys.max() - ys.min()) + min(d.hx, d.hy)
        eta = bump(d, (cx, cy), rad)
    geom = compute_geometry(u)
    op = jacobi_operator(u, C)
    fv = first_variation(op, eta)
    scale = float(np.sum(np.abs(eta.values) * op.mass))
    rel = abs(fv) / scale if scale > 0 else abs(fv)
    rep.first_variation = fv
    rep.translator = bool(rel <= translator_tol)
    if rep.translator and polish:
        sol = critical_point(u, C)
        change = float(np.max(np.abs(sol.u.values - u.values)[d.active]))
        limit = polish_change if polish_change is not None else math.inf
        if sol.converged and change <= limit:
            u = sol.u
            geom = compute_geometry(u)
            op = jacobi_operator(u, C)
            rep.polished = True
            rep.first_variation = first_variation(op, eta)
        else:
            logger.info("polish failed or moved the field too far (%.3e)", change)
    rep.kernel_residuals = {k: kernel_check(op, v) for k, v in BASIS.items()}
    rng = np.random.default_rng(seed)
    q_op, q_sum = op.quadratic_form(eta), op.quadratic_form_sum(eta)
    rep.Q_values.append(("eta", q_op))
    rep.Q_values.append(("eta_summation", q_sum))
    worst = -math.inf
    fm = op.free_mask
    for k in range(n_random):
        phi = np.zeros((d.nx, d.ny))
        phi[fm] = rng.standard_normal(int(fm.sum()))
        q = op.quadratic_form(phi)
        rep.Q_values.append((f"random_{k}", q))
        worst = max(worst, q / float(np.sum(op.mass * phi * phi)))
    ident = stability_identity(op, eta)
    rep.identity_gap = ident["identity_gap"]
    try:
        est = top_eigenvalue(op, eig_tol, seed=seed)
        rep.top_eigenvalue = est.to_json()
        lam = est.value
    except EigenConvergenceError as exc:
        rep.top_eigenvalue = {"value": exc.rayleigh, "residual": exc.residual, "iterations": -1,
                              "shift": math.nan}
        lam = math.inf
    rep.verdict = bool(rep.translator and lam <= 1e-8 and worst <= 1e-8
                       and rep.identity_gap <= 1e-6)
    del geom
    return rep
