"""Geometry of the graph of ``u``: normal, metric, second fundamental form.

Conventions used throughout the package:

* upward unit normal ``nu = (-grad u, 1) / W`` with ``W = sqrt(1 + |grad u|^2)``;
* second fundamental form ``a_ij = -u_ij / W``;
* mean curvature ``H = g^ij a_ij``, which equals ``-div(grad u / W)``;
* translator equation ``div(grad u / W) = C / W`` (``C = 1``: the upward
  grim reaper ``-log cos x``).  For ``C = 1`` it reads ``H + <e3, nu> = 0``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import ScalarField, atomic_write_text

__all__ = [
    "GraphGeometry",
    "compute_geometry",
    "translator_residual",
    "flux_divergence",
    "weighted_area_element",
    "geometry_csv",
]


@dataclass(eq=False)
class GraphGeometry:
    """Per-node geometric quantities; NaN off the interior nodes."""

    field: ScalarField
    ux: np.ndarray
    uy: np.ndarray
    uxx: np.ndarray
    uxy: np.ndarray
    uyy: np.ndarray
    W: np.ndarray
    nu: np.ndarray  # (nx, ny, 3)
    g: np.ndarray  # (nx, ny, 2, 2)
    g_inv: np.ndarray
    a: np.ndarray
    H_var: np.ndarray
    normA2: np.ndarray

    @property
    def domain(self):
        return self.field.domain

    @property
    def u(self) -> np.ndarray:
        return self.field.values

    @property
    def tilt(self) -> np.ndarray:
        return 1.0 / self.W

    @property
    def area_weight(self) -> np.ndarray:
        return self.W

    @property
    def normA(self) -> np.ndarray:
        return np.sqrt(self.normA2)

    def normal_component(self, v) -> np.ndarray:
        """``<v, nu>`` for a constant 3-vector ``v``."""
        return self.nu @ np.asarray(v, dtype=float)


def _derivatives(f: ScalarField):
    d = f.domain
    u = f.values
    hx, hy = d.hx, d.hy
    sh = lambda di, dj: d.shift(u, di, dj)  # noqa: E731
    e, w, n, s = sh(1, 0), sh(-1, 0), sh(0, 1), sh(0, -1)
    ux = (e - w) / (2 * hx)
    uy = (n - s) / (2 * hy)
    uxx = (e - 2 * u + w) / hx**2
    uyy = (n - 2 * u + s) / hy**2
    uxy = (sh(1, 1) - sh(1, -1) - sh(-1, 1) + sh(-1, -1)) / (4 * hx * hy)
    return ux, uy, uxx, uxy, uyy


def compute_geometry(u: ScalarField) -> GraphGeometry:
    """Centred second-order differences at interior nodes.

    Interior nodes always have their whole 3x3 neighbourhood active, so no
    one-sided stencils are needed.
    """
    d = u.domain
    mask = d.interior
    ux, uy, uxx, uxy, uyy = _derivatives(u)
    nan = np.where(mask, 1.0, np.nan)
    ux, uy, uxx, uxy, uyy = (arr * nan for arr in (ux, uy, uxx, uxy, uyy))
    W2 = 1 + ux * ux + uy * uy
    W = np.sqrt(W2)
    nu = np.stack([-ux / W, -uy / W, 1 / W], axis=-1)
    g = np.empty(d.node_class.shape + (2, 2))
    g[..., 0, 0] = 1 + ux * ux
    g[..., 0, 1] = g[..., 1, 0] = ux * uy
    g[..., 1, 1] = 1 + uy * uy
    g_inv = np.empty_like(g)
    g_inv[..., 0, 0] = 1 - ux * ux / W2
    g_inv[..., 0, 1] = g_inv[..., 1, 0] = -ux * uy / W2
    g_inv[..., 1, 1] = 1 - uy * uy / W2
    a = np.empty_like(g)
    a[..., 0, 0] = -uxx / W
    a[..., 0, 1] = a[..., 1, 0] = -uxy / W
    a[..., 1, 1] = -uyy / W
    H = np.einsum("...ij,...ij->...", g_inv, a)
    S = g_inv @ a  # shape operator
    normA2 = np.einsum("...ij,...ji->...", S, S)
    return GraphGeometry(u, ux, uy, uxx, uxy, uyy, W, nu, g, g_inv, a, H, normA2)


def _interior_values(values: np.ndarray, domain) -> ScalarField:
    out = np.zeros((domain.nx, domain.ny))
    out[domain.interior] = values
    return ScalarField(domain, out)


def translator_residual(u: ScalarField, C: float = 1.0) -> ScalarField:
    """``R(u) = div(grad u / W) - C / W`` in flux form at interior nodes (0 elsewhere)."""
    d = u.domain
    st = d.stencil_index()
    R, _ = kernels.residual(u.values.ravel()[st], d.hx, d.hy, float(C))
    return _interior_values(R, d)


def flux_divergence(u: ScalarField) -> ScalarField:
    """``div(grad u / W)`` in flux form; equals ``-H`` to second order."""
    d = u.domain
    st = d.stencil_index()
    R, _ = kernels.residual(u.values.ravel()[st], d.hx, d.hy, 0.0)
    return _interior_values(R, d)


def weighted_area_element(geom: GraphGeometry) -> ScalarField:
    """``e^u W`` at interior nodes: the integrand of the weighted area in graph coordinates."""
    d = geom.domain
    vals = np.where(d.interior, np.exp(geom.u) * geom.W, 0.0)
    return ScalarField(d, vals)


def geometry_csv(geom: GraphGeometry, path=None) -> str:
    """CSV with columns ``i,j,x,y,u,W,tilt,H_var,normA2`` over interior nodes."""
    d = geom.domain
    X, Y = d.coords()
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["i", "j", "x", "y", "u", "W", "tilt", "H_var", "normA2"])
    fmt = lambda v: format(float(v), ".17g")  # noqa: E731
    for i, j in zip(*np.nonzero(d.interior)):
        wr.writerow([i, j, fmt(X[i, j]), fmt(Y[i, j]), fmt(geom.u[i, j]), fmt(geom.W[i, j]),
                     fmt(1 / geom.W[i, j]), fmt(geom.H_var[i, j]), fmt(geom.normA2[i, j])])
    text = buf.getvalue()
    if path is not None:
        atomic_write_text(path, text)
    return text
