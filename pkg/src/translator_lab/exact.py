"""Reference translators: grim reaper, tilted grim reaper, bowl, and flat planes."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from .grid import GridDomain, ScalarField

__all__ = [
    "ExactSolution",
    "BowlProfile",
    "BowlIntegrationError",
    "OutOfDomainError",
    "grim_reaper",
    "tilted_grim_reaper",
    "bowl",
    "bowl_profile",
    "plane",
]

GRIM_REAPER = "GRIM_REAPER"
TILTED_GRIM_REAPER = "TILTED_GRIM_REAPER"
BOWL = "BOWL"
PLANE_LIMIT = "PLANE_LIMIT"


class OutOfDomainError(ValueError):
    pass


class BowlIntegrationError(RuntimeError):
    def __init__(self, message: str, last_r: float):
        super().__init__(f"{message} (last good r = {last_r:.6g})")
        self.last_r = last_r


@dataclass(frozen=True)
class ExactSolution:
    """A closed-form or tabulated translator ``u(x, y)``.

    ``half_width`` is the half width of the slab ``|x - x_center| < half_width``
    for slab solutions and ``inf`` for entire ones.
    """

    kind: str
    C: float
    half_width: float
    _u: Callable = field(repr=False)
    _grad: Callable = field(repr=False)
    b: float = 0.0
    x_center: float = 0.0
    profile: "BowlProfile | None" = field(default=None, repr=False)

    @property
    def width(self) -> float:
        return 2 * self.half_width

    @property
    def walls(self) -> tuple[float, ...]:
        if math.isinf(self.half_width):
            return ()
        return (self.x_center - self.half_width, self.x_center + self.half_width)

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if not math.isinf(self.half_width) and np.any(np.abs(x - self.x_center) >= self.half_width):
            raise OutOfDomainError(
                f"{self.kind}: evaluation outside the slab |x| < {self.half_width:.6g}")
        return x

    def __call__(self, x, y):
        x = self._check(x)
        return self._u(x, np.asarray(y, dtype=float))

    def gradient(self, x, y):
        x = self._check(x)
        return self._grad(x, np.asarray(y, dtype=float))

    def tilt(self, x, y):
        """``<e3, nu> = 1 / W`` from the closed-form gradient."""
        gx, gy = self.gradient(x, y)
        return 1.0 / np.sqrt(1 + gx * gx + gy * gy)

    def sample(self, domain: GridDomain) -> ScalarField:
        return ScalarField.from_function(domain, self)


def grim_reaper(C: float = 1.0) -> ExactSolution:
    """``u = -log(cos(C x)) / C`` on ``|x| < pi / (2C)``."""
    if not C > 0:
        raise ValueError("grim reaper needs C > 0")

    def u(x, y):
        return -np.log(np.cos(C * x)) / C + 0.0 * y

    def grad(x, y):
        return np.tan(C * x), np.zeros_like(y + 0.0 * x)

    return ExactSolution(GRIM_REAPER, C, math.pi / (2 * C), u, grad)


def tilted_grim_reaper(b: float, C: float = 1.0) -> ExactSolution:
    """``u = -(mu^2 / C) log cos(C x / mu) + b y`` with ``mu = sqrt(1 + b^2)``."""
    if not C > 0:
        raise ValueError("tilted grim reaper needs C > 0")
    mu = math.sqrt(1 + b * b)

    def u(x, y):
        return -(mu * mu / C) * np.log(np.cos(C * x / mu)) + b * y

    def grad(x, y):
        return mu * np.tan(C * x / mu), np.full(np.broadcast(x, y).shape, float(b))

    kind = GRIM_REAPER if b == 0 else TILTED_GRIM_REAPER
    return ExactSolution(kind, C, mu * math.pi / (2 * C), u, grad, b=float(b))


def plane(a: float = 0.0, b: float = 0.0, c: float = 0.0) -> ExactSolution:
    """Affine control field ``a x + b y + c`` (a translator only for speed 0)."""

    def u(x, y):
        return a * x + b * y + c + 0.0 * (x + y)

    def grad(x, y):
        shp = np.broadcast(x, y).shape
        return np.full(shp, float(a)), np.full(shp, float(b))

    return ExactSolution(PLANE_LIMIT, 0.0, math.inf, u, grad)


@dataclass(frozen=True)
class BowlProfile:
    """Radial profile ``v(r)`` of the bowl, tabulated with its slope."""

    C: float
    r: np.ndarray
    v: np.ndarray
    dv: np.ndarray
    tol: float
    _spline: CubicHermiteSpline = field(repr=False)

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def __call__(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        if np.any(r > self.r_max * (1 + 1e-12)):
            raise OutOfDomainError(f"bowl table ends at r = {self.r_max:.6g}")
        return self._spline(r)

    def slope(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        return self._spline.derivative()(r)

    def second_derivative(self, r):
        """``v''`` from the ODE itself, exact at the tabulated slopes."""
        r = np.abs(np.asarray(r, dtype=float))
        phi = self.slope(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (1 + phi * phi) * (self.C - phi / r)
        return np.where(r > 0, out, self.C / 2)


def _series(C, r):
    return C * r**2 / 4 + C**3 * r**4 / 128, C * r / 2 + C**3 * r**3 / 32


def bowl_profile(C: float = 1.0, r_max: float = 4.0, tol: float = 1e-11,
                 r0: float = 1e-3, table_step: float = 2e-3) -> BowlProfile:
    """Integrate ``(1/r)(r v'/W)' = C/W`` from the axis.

    In slope form ``phi' = (1 + phi^2)(C - phi/r)``.  The axis is handled by
    the series ``v = C r^2/4 + C^3 r^4/128`` on ``[0, r0]``.
    """
    if not r_max > 0 or not tol > 0:
        raise ValueError("r_max and tol must be positive")
    v0, p0 = _series(C, r0)

    def rhs(r, y):
        phi = y[1]
        return [phi, (1 + phi * phi) * (C - phi / r)]

    n = max(int(math.ceil((r_max - r0) / table_step)), 8)
    r_eval = np.linspace(r0, r_max, n + 1)
    sol = solve_ivp(rhs, (r0, r_max), [v0, p0], method="DOP853", rtol=tol, atol=tol * 1e-2,
                    t_eval=r_eval)
    if sol.status != 0:
        last = float(sol.t[-1]) if sol.t.size else r0
        raise BowlIntegrationError(f"bowl integration failed: {sol.message}", last)
    r_head = np.linspace(0.0, r0, 5)[:-1]
    vh, ph = _series(C, r_head)
    r_tab = np.concatenate([r_head, sol.t])
    v_tab = np.concatenate([vh, sol.y[0]])
    d_tab = np.concatenate([ph, sol.y[1]])
    spline = CubicHermiteSpline(r_tab, v_tab, d_tab)
    return BowlProfile(float(C), r_tab, v_tab, d_tab, tol, spline)


def bowl(C: float = 1.0, r_max: float = 4.0, tol: float = 1e-11, center=(0.0, 0.0)) -> ExactSolution:
    """Rotationally symmetric entire translator ``u = v(|x - center|)``."""
    prof = bowl_profile(C, r_max, tol)
    cx, cy = center

    def u(x, y):
        return prof(np.hypot(x - cx, y - cy))

    def grad(x, y):
        dx, dy = x - cx, y - cy
        r = np.hypot(dx, dy)
        s = prof.slope(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            gx = np.where(r > 0, s * dx / r, 0.0)
            gy = np.where(r > 0, s * dy / r, 0.0)
        return gx, gy

    return ExactSolution(BOWL, float(C), math.inf, u, grad, profile=prof)
