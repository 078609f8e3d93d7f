"""Dirichlet problem for the translator equation: damped Newton plus flow fallback."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .grid import GridDomain, ScalarField

__all__ = [
    "SolverConfig",
    "SolveReport",
    "LinearSolveError",
    "assemble_jacobian",
    "linear_solve",
    "laplace_extension",
    "newton_solve",
    "parabolic_continuation",
    "ContinuationResult",
    "evolve",
]

logger = logging.getLogger(__name__)

# "flux": conservative face-flux residual.  "variational": the residual is the
# gradient of the quadrature F_h of the weighted area (see kernels), so its
# Jacobian is a symmetric Hessian up to the row weights.
SCHEMES = ("flux", "variational")


# a stalled solve is accepted at the rounding floor only if that floor is small
# (a singular system inflates |x| and with it the floor)
_FLOOR_CAP = 1e-8


class LinearSolveError(RuntimeError):
    def __init__(self, message: str, achieved: float, iteration: int | None = None):
        prefix = f"Newton iteration {iteration}: " if iteration is not None else ""
        super().__init__(f"{prefix}{message} (achieved relative residual {achieved:.3e})")
        self.achieved = achieved
        self.iteration = iteration


@dataclass
class SolverConfig:
    C: float = 1.0
    newton_tol: float = 1e-10
    max_newton: int = 30
    damping: float = 0.5
    min_step: float = 2.0**-10
    linear_tol: float = 1e-12
    continuation: bool = True
    evolve_dt_safety: float = 0.2
    continuation_tol: float = 1e-2
    continuation_max_steps: int = 200_000
    scheme: str = "flux"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not (self.newton_tol > 0 and self.linear_tol > 0 and self.evolve_dt_safety > 0):
            raise ValueError("tolerances must be positive")
        if self.max_newton < 1:
            raise ValueError("max_newton must be >= 1")
        if not 0 < self.damping < 1 or not 0 < self.min_step <= 1:
            raise ValueError("damping factor and min step must lie in (0, 1)")


@dataclass
class SolveReport:
    converged: bool
    iterations: int
    residual_history: list[float]
    u: ScalarField = field(repr=False)
    damping_events: int = 0
    used_continuation: bool = False
    message: str = ""

    def to_json(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residual_history": [float(r) for r in self.residual_history],
            "damping_events": self.damping_events,
            "used_continuation": self.used_continuation,
            "message": self.message,
            "final_residual": float(self.residual_history[-1]) if self.residual_history else None,
        }


@dataclass
class ContinuationResult:
    field: ScalarField
    flagged: bool
    residual_before: float
    residual_after: float
    steps: int


class _System:
    """Index bookkeeping shared by residual and Jacobian assembly."""

    def __init__(self, domain: GridDomain, scheme: str = "flux"):
        self.domain = domain
        if scheme == "flux":
            self._res, self._jac = kernels.residual, kernels.jacobian
        else:
            self._res, self._jac = kernels.variational_residual, kernels.variational_jacobian
        self.rows = np.flatnonzero(domain.interior)
        self.stencil = domain.stencil_index(self.rows)
        n = domain.nx * domain.ny
        self.col_of = np.full(n, -1, dtype=np.int64)
        self.col_of[self.rows] = np.arange(self.rows.size)

    def residual(self, u: np.ndarray, C: float) -> np.ndarray:
        d = self.domain
        R, _ = self._res(u.ravel()[self.stencil], d.hx, d.hy, C)
        return R

    def jacobian(self, u: np.ndarray, C: float, all_columns: bool = False) -> sp.csr_matrix:
        d = self.domain
        vals = self._jac(u.ravel()[self.stencil], d.hx, d.hy, C)
        m = self.rows.size
        ri = np.repeat(np.arange(m), 9)
        cj = self.stencil.ravel()
        v = vals.ravel()
        if all_columns:
            return sp.csr_matrix((v, (ri, cj)), shape=(m, d.nx * d.ny))
        cols = self.col_of[cj]
        keep = cols >= 0
        return sp.csr_matrix((v[keep], (ri[keep], cols[keep])), shape=(m, m))


def assemble_jacobian(u: ScalarField, C: float = 1.0, all_columns: bool = False,
                      scheme: str = "flux") -> sp.csr_matrix:
    """Jacobian of the flux-form residual with respect to interior values.

    With ``all_columns`` the columns run over every lattice node (flat C
    order), so boundary couplings are kept.
    """
    return _System(u.domain, scheme).jacobian(u.values, float(C), all_columns)


def linear_solve(A, rhs: np.ndarray, tol: float = 1e-12, restart: int = 100,
                 iteration: int | None = None, passes: int = 30,
                 preconditioner: str = "ilu") -> np.ndarray:
    """Preconditioned restarted GMRES (incomplete LU, or Jacobi with ``"jacobi"``).

    Runs up to ``passes`` restart cycles, checking the true relative residual
    ``|b - A x| / |b|`` after each.  It must reach ``tol``; once progress
    stalls, the rounding floor ``64 eps |A| |x| / |b|`` (capped at 1e-8) is
    accepted instead.
    Anything else raises :class:`LinearSolveError`.
    """
    rhs = np.asarray(rhs, dtype=float)
    bnorm = float(np.linalg.norm(rhs))
    if bnorm == 0.0:
        return np.zeros_like(rhs)
    A = sp.csc_matrix(A) if sp.issparse(A) else A
    M = _preconditioner(A, rhs.size, preconditioner)
    anorm = spla.norm(A, 1) if sp.issparse(A) else 1.0
    x = None
    achieved = math.inf
    for _ in range(passes):
        x_new, _info = spla.gmres(A, rhs, x0=x, rtol=tol, atol=0.0, restart=restart,
                                  maxiter=1, M=M)
        if not np.all(np.isfinite(x_new)):
            break
        r = float(np.linalg.norm(rhs - A @ x_new)) / bnorm
        stalled = r > 0.5 * achieved
        if r < achieved:
            x, achieved = x_new, r
        if achieved <= tol:
            return x
        # rounding floor: the residual cannot drop much below eps |A| |x| / |b|
        floor = 64 * np.finfo(float).eps * anorm * float(np.linalg.norm(x)) / bnorm
        if stalled and achieved <= min(floor, _FLOOR_CAP):
            return x
    raise LinearSolveError("Krylov iteration stagnated", achieved, iteration)


def _preconditioner(A, n: int, kind: str):
    if kind == "ilu" and sp.issparse(A):
        try:
            ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=20)
            return spla.LinearOperator(A.shape, matvec=ilu.solve, dtype=float)
        except RuntimeError:  # exactly singular factor: fall back to Jacobi
            logger.debug("ILU failed; using Jacobi")
    elif kind not in ("ilu", "jacobi"):
        raise ValueError(f"unknown preconditioner {kind!r}")
    diag = A.diagonal() if hasattr(A, "diagonal") else np.ones(n)
    diag = np.where(np.abs(diag) > 0, diag, 1.0)
    return spla.LinearOperator(A.shape, matvec=lambda x: x / diag, dtype=float)


def laplace_extension(domain: GridDomain, boundary: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Discrete harmonic extension of the boundary values (5-point Laplacian)."""
    sysm = _System(domain)
    flat = np.zeros(domain.nx * domain.ny)
    flat[:] = boundary.ravel()
    flat[domain.interior.ravel()] = 0.0
    A = sysm.jacobian(np.zeros_like(flat), 0.0, all_columns=True)
    rhs = -(A @ flat)
    A_ii = A[:, sysm.rows]
    x = linear_solve(A_ii, rhs, tol)
    flat[sysm.rows] = x
    return flat.reshape(domain.nx, domain.ny)


def _boundary_array(domain: GridDomain, boundary_data) -> np.ndarray:
    if isinstance(boundary_data, ScalarField):
        vals = boundary_data.values.copy()
    elif callable(boundary_data):
        vals = ScalarField.from_function(domain, boundary_data).values
    else:
        vals = np.array(boundary_data, dtype=float)
    if vals.shape != (domain.nx, domain.ny):
        raise ValueError("boundary data has the wrong shape")
    if not np.all(np.isfinite(vals[domain.boundary])):
        raise ValueError("boundary data must be finite on BOUNDARY nodes")
    return np.where(domain.active, vals, 0.0)


def newton_solve(domain: GridDomain, boundary_data, config: SolverConfig | None = None,
                 initial: np.ndarray | None = None) -> SolveReport:
    """Damped Newton for ``R(u) = 0`` with ``u`` fixed on BOUNDARY nodes.

    The start is the harmonic extension of the boundary data unless ``initial``
    is given (interior values are taken from it).  The problem is solved for
    ``u - m`` with ``m`` the mean boundary value, since the equation only
    sees differences of ``u``.
    """
    cfg = config or SolverConfig()
    bvals = _boundary_array(domain, boundary_data)
    bmask = domain.boundary
    shift = float(np.mean(bvals[bmask])) if bmask.any() else 0.0
    b0 = np.where(domain.active, bvals - shift, 0.0)
    if initial is None:
        u = laplace_extension(domain, b0, cfg.linear_tol)
    else:
        u = np.where(domain.interior, np.asarray(initial, dtype=float) - shift, b0)
    report = _newton(domain, u, cfg)
    if not report.converged and cfg.continuation:
        logger.info("Newton failed (%s); trying parabolic continuation", report.message)
        warm = parabolic_continuation(domain, ScalarField(domain, report.u.values), cfg, _shifted=True)
        second = _newton(domain, warm.field.values.copy(), cfg)
        second.used_continuation = True
        second.iterations += report.iterations
        second.residual_history = report.residual_history + second.residual_history
        second.damping_events += report.damping_events
        if second.converged or second.residual_history[-1] < report.residual_history[-1]:
            report = second
        else:
            report.used_continuation = True
    vals = report.u.values + shift
    vals[bmask] = bvals[bmask]
    report.u = ScalarField(domain, np.where(domain.active, vals, 0.0))
    return report


def _newton(domain: GridDomain, u: np.ndarray, cfg: SolverConfig) -> SolveReport:
    sysm = _System(domain, cfg.scheme)
    flat = u.ravel().copy()
    R = sysm.residual(flat, cfg.C)
    rnorm = float(np.max(np.abs(R))) if R.size else 0.0
    history = [rnorm]
    damping_events = 0
    it = 0
    message = ""
    while rnorm > cfg.newton_tol and it < cfg.max_newton:
        it += 1
        J = sysm.jacobian(flat, cfg.C)
        du = linear_solve(J, -R, cfg.linear_tol, iteration=it)
        step = 1.0
        accepted = False
        while step >= cfg.min_step:
            trial = flat.copy()
            trial[sysm.rows] += step * du
            Rt = sysm.residual(trial, cfg.C)
            rt = float(np.max(np.abs(Rt)))
            if np.isfinite(rt) and rt < rnorm:
                accepted = True
                break
            step *= cfg.damping
        if not accepted:
            message = f"no decrease down to step {cfg.min_step:g} at iteration {it}"
            break
        if step < 1.0:
            damping_events += 1
        flat, R, rnorm = trial, Rt, rt
        history.append(rnorm)
    converged = rnorm <= cfg.newton_tol
    if not converged and not message:
        message = f"max_newton={cfg.max_newton} reached with |R| = {rnorm:.3e}"
    return SolveReport(converged, it, history, ScalarField(domain, flat.reshape(domain.nx, domain.ny)),
                       damping_events, False, message or "converged")


def parabolic_continuation(domain: GridDomain, boundary_data, config: SolverConfig | None = None,
                           initial: np.ndarray | None = None, _shifted: bool = False) -> "ContinuationResult":
    """Relax ``u_t = W div(grad u / W) - C`` toward a translator.

    Explicit steps ``dt = safety h^2 / (4 sup W^2)``.  Stops once ``|R|`` is
    below ``continuation_tol / 10``, stops decreasing over a window of steps,
    or the step cap is hit; ``flagged`` is set unless the target was met.
    """
    cfg = config or SolverConfig()
    if _shifted:
        u = boundary_data.values.copy()
    else:
        bvals = _boundary_array(domain, boundary_data)
        if initial is None:
            u = laplace_extension(domain, bvals, cfg.linear_tol)
        else:
            u = np.where(domain.interior, np.asarray(initial, dtype=float), bvals)
    sysm = _System(domain)
    flat = u.ravel().copy()
    nodes = sysm.rows
    empty = np.zeros(0, dtype=np.int64)
    r0 = float(np.max(np.abs(sysm.residual(flat, cfg.C))))
    best, best_r = flat.copy(), r0
    target = cfg.continuation_tol / 10
    chunk = 500
    steps = 0
    window = []
    flagged = True
    while steps < cfg.continuation_max_steps:
        n = min(chunk, cfg.continuation_max_steps - steps)
        flat, _, done = kernels.flow_steps(flat, nodes, sysm.stencil, domain.hx, domain.hy,
                                           float(cfg.C), 0.0, cfg.evolve_dt_safety,
                                           math.inf, 0.0, empty, n)
        steps += done
        r = float(np.max(np.abs(sysm.residual(flat, cfg.C))))
        if not np.isfinite(r):
            break
        if r < best_r:
            best, best_r = flat.copy(), r
        if r <= target:
            flagged = False
            break
        window.append(r)
        if len(window) >= 10 and window[-1] > 0.999 * window[-10]:
            break
    return ContinuationResult(ScalarField(domain, best.reshape(domain.nx, domain.ny)),
                              flagged, r0, best_r, steps)


def evolve(u0: ScalarField, T: float, C: float = 1.0, dt_safety: float = 0.2,
           moving_boundary: bool = True, max_steps: int = 10_000_000) -> ScalarField:
    """Graph mean curvature flow ``u_t = W div(grad u / W)`` up to time ``T``.

    Boundary values are translated with speed ``C`` when ``moving_boundary``,
    which is the boundary motion of a translator.  ``C`` only enters through
    the boundary motion here.
    """
    d = u0.domain
    sysm = _System(d)
    flat = u0.values.ravel().copy()
    bnodes = np.flatnonzero(d.boundary)
    rate = float(C) if moving_boundary else 0.0
    flat, t, steps = kernels.flow_steps(flat, sysm.rows, sysm.stencil, d.hx, d.hy, 0.0, 0.0,
                                        float(dt_safety), float(T), rate, bnodes, int(max_steps))
    return ScalarField(d, np.where(d.active, flat.reshape(d.nx, d.ny), 0.0))


def config_dict(cfg: SolverConfig) -> dict:
    return asdict(cfg)
