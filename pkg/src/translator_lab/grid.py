"""Masked rectangular lattices, node fields, norms and the text field format."""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

__all__ = [
    "NodeClass",
    "Shape",
    "GridDomain",
    "ScalarField",
    "DomainError",
    "FieldFormatError",
    "make_domain",
    "refine",
    "norms",
    "write_field",
    "read_field",
    "io_roundtrip",
    "STENCIL_OFFSETS",
]


class NodeClass(IntEnum):
    INTERIOR = 0
    BOUNDARY = 1
    EXTERIOR = 2


class Shape:
    RECT = "RECT"
    SLAB = "SLAB"
    DISK = "DISK"
    ANNULUS = "ANNULUS"
    ALL = ("RECT", "SLAB", "DISK", "ANNULUS")


class DomainError(ValueError):
    pass


class FieldFormatError(ValueError):
    pass


# Order of the 3x3 stencil columns: k = 3*(di+1) + (dj+1).
STENCIL_OFFSETS = tuple((di, dj) for di in (-1, 0, 1) for dj in (-1, 0, 1))


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Lattice ``x = x0 + i*hx``, ``y = y0 + j*hy`` with a node classification.

    ``node_class`` has shape ``(nx, ny)``. For SLAB domains the lattice is
    periodic in ``y`` with period ``ny*hy``.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    origin: tuple[float, float]
    node_class: np.ndarray
    shape: str
    params: dict = field(default_factory=dict)

    @property
    def periodic_y(self) -> bool:
        return self.shape == Shape.SLAB

    @property
    def x(self) -> np.ndarray:
        return self.origin[0] + self.hx * np.arange(self.nx)

    @property
    def y(self) -> np.ndarray:
        return self.origin[1] + self.hy * np.arange(self.ny)

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @property
    def interior(self) -> np.ndarray:
        return self.node_class == NodeClass.INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.node_class == NodeClass.BOUNDARY

    @property
    def active(self) -> np.ndarray:
        return self.node_class != NodeClass.EXTERIOR

    @property
    def h(self) -> float:
        return min(self.hx, self.hy)

    def shift(self, mask: np.ndarray, di: int, dj: int) -> np.ndarray:
        """Return ``out[i, j] = mask[i + di, j + dj]`` (zero off the lattice)."""
        return shift_array(mask, di, dj, self.periodic_y)

    def neighbors(self, i: int, j: int, diagonal: bool = False) -> list[tuple[int, int]]:
        offs = [(1, 0), (-1, 0), (0, 1), (0, -1)]
        if diagonal:
            offs += [(1, 1), (1, -1), (-1, 1), (-1, -1)]
        out = []
        for di, dj in offs:
            a, b = i + di, j + dj
            if self.periodic_y:
                b %= self.ny
            if 0 <= a < self.nx and 0 <= b < self.ny:
                out.append((a, b))
        return out

    def stencil_index(self, nodes: np.ndarray | None = None) -> np.ndarray:
        """Flat indices of the 3x3 neighbourhood of each node in ``nodes``.

        ``nodes`` defaults to the interior nodes (flat indices, C order).
        Every interior node has its full neighbourhood on the lattice.
        """
        if nodes is None:
            nodes = np.flatnonzero(self.interior)
        i, j = np.divmod(nodes, self.ny)
        out = np.empty((nodes.size, 9), dtype=np.int64)
        for k, (di, dj) in enumerate(STENCIL_OFFSETS):
            a = i + di
            b = j + dj
            if self.periodic_y:
                b = b % self.ny
            if np.any((a < 0) | (a >= self.nx) | (b < 0) | (b >= self.ny)):
                raise DomainError("stencil leaves the lattice")
            out[:, k] = a * self.ny + b
        return out

    def collar(self, width: int) -> np.ndarray:
        """Interior nodes within ``width`` 8-neighbour steps of a non-interior node."""
        near = ~self.interior
        for _ in range(width):
            grown = near.copy()
            for di, dj in STENCIL_OFFSETS:
                grown |= self.shift(near, di, dj)
            near = grown
        return near & self.interior

    def same_lattice(self, other: "GridDomain") -> bool:
        return (
            self.nx == other.nx
            and self.ny == other.ny
            and self.hx == other.hx
            and self.hy == other.hy
            and self.shape == other.shape
            and np.array_equal(self.node_class, other.node_class)
        )


@dataclass(eq=False)
class ScalarField:
    """Values on the lattice of ``domain``; only non-EXTERIOR entries are meaningful."""

    domain: GridDomain
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        d = self.domain
        if self.values.shape != (d.nx, d.ny):
            raise ValueError(f"field shape {self.values.shape} != ({d.nx}, {d.ny})")
        if not np.all(np.isfinite(self.values[d.active])):
            raise ValueError("field has non-finite values on active nodes")

    def copy(self) -> "ScalarField":
        return ScalarField(self.domain, self.values.copy())

    @classmethod
    def from_function(cls, domain: GridDomain, fn) -> "ScalarField":
        X, Y = domain.coords()
        vals = np.zeros((domain.nx, domain.ny))
        act = domain.active
        vals[act] = fn(X[act], Y[act])
        return cls(domain, vals)


def shift_array(a: np.ndarray, di: int, dj: int, periodic_y: bool = False) -> np.ndarray:
    """``out[i, j] = a[i + di, j + dj]``; zero-filled, optionally periodic in j."""
    if periodic_y and dj:
        a = np.roll(a, -dj, axis=1)
        dj = 0
    out = np.zeros_like(a)
    nx, ny = a.shape
    si = slice(max(di, 0), nx + min(di, 0))
    sj = slice(max(dj, 0), ny + min(dj, 0))
    ti = slice(max(-di, 0), nx + min(-di, 0))
    tj = slice(max(-dj, 0), ny + min(-dj, 0))
    out[ti, tj] = a[si, sj]
    return out


def _classify(inside: np.ndarray, periodic: bool) -> np.ndarray:
    nx, ny = inside.shape
    interior = inside.copy()
    interior[0, :] = False
    interior[-1, :] = False
    if not periodic:
        interior[:, 0] = False
        interior[:, -1] = False
    near = np.zeros_like(interior)
    for di, dj in STENCIL_OFFSETS:
        near |= shift_array(interior, di, dj, periodic)
    cls = np.full((nx, ny), NodeClass.EXTERIOR, dtype=np.int8)
    cls[near] = NodeClass.BOUNDARY
    cls[interior] = NodeClass.INTERIOR
    return cls


def make_domain(shape: str, *, x=None, y=None, period=None, radius=None,
                r_in=None, r_out=None, center=(0.0, 0.0), nx=None, ny=None,
                h=None) -> GridDomain:
    """Build a masked lattice.

    RECT: ``x=(a, b)``, ``y=(c, d)``, node counts ``nx, ny`` (walls included).
    SLAB: ``x=(a, b)``, ``period``; ``ny`` nodes per period, no duplicate node.
    DISK / ANNULUS: centred square lattice of spacing ``h`` (or ``nx`` nodes
    across the outer diameter) padded by one cell; interior nodes are those
    strictly inside the region, boundary nodes the remaining nodes
    8-adjacent to an interior node.
    """
    shape = shape.upper()
    if shape not in Shape.ALL:
        raise DomainError(f"unknown shape {shape!r}")
    if shape in (Shape.RECT, Shape.SLAB):
        if x is None:
            raise DomainError(f"{shape} needs x extents")
        a, b = map(float, x)
        if not b - a > 0:
            raise DomainError(f"degenerate x extent [{a}, {b}]: zero or negative width")
        if nx is None or nx < 3:
            raise DomainError("nx must be >= 3")
        hx = (b - a) / (nx - 1)
        if shape == Shape.RECT:
            if y is None:
                raise DomainError("RECT needs y extents")
            c, d = map(float, y)
            if not d - c > 0:
                raise DomainError(f"degenerate y extent [{c}, {d}]: zero or negative width")
            if ny is None or ny < 3:
                raise DomainError("ny must be >= 3")
            hy = (d - c) / (ny - 1)
            origin = (a, c)
            params = {"x": [a, b], "y": [c, d]}
        else:
            if period is None or not period > 0:
                raise DomainError("SLAB needs a positive period")
            if ny is None or ny < 3:
                raise DomainError("ny must be >= 3")
            hy = float(period) / ny
            c = 0.0 if y is None else float(y[0])
            origin = (a, c)
            params = {"x": [a, b], "period": float(period)}
        inside = np.ones((nx, ny), dtype=bool)
        cls = _classify(inside, shape == Shape.SLAB)
        return GridDomain(nx, ny, hx, hy, origin, cls, shape, params)

    if shape == Shape.DISK:
        if radius is None or not radius > 0:
            raise DomainError("DISK needs a positive radius")
        outer, inner = float(radius), 0.0
        params = {"radius": outer}
    else:
        if r_in is None or r_out is None:
            raise DomainError("ANNULUS needs r_in and r_out")
        if not 0 <= r_in < r_out:
            raise DomainError(f"ANNULUS needs 0 <= r_in < r_out, got r_in={r_in}, r_out={r_out}")
        outer, inner = float(r_out), float(r_in)
        params = {"r_in": inner, "r_out": outer}
    if h is None:
        if nx is None or nx < 3:
            raise DomainError("give h or nx >= 3")
        h = 2 * outer / (nx - 1)
    h = float(h)
    if not h > 0:
        raise DomainError("h must be positive")
    half = int(math.ceil(outer / h - 1e-12)) + 1
    n = 2 * half + 1
    cx, cy = map(float, center)
    origin = (cx - half * h, cy - half * h)
    params["center"] = [cx, cy]
    return _radial_domain(shape, n, h, origin, inner, outer, params)


def _radial_domain(shape, n, h, origin, inner, outer, params) -> GridDomain:
    cx, cy = params["center"]
    # symmetric integer offsets keep the mask exactly symmetric
    k = np.arange(n) - (n - 1) / 2
    X, Y = np.meshgrid(k * h, k * h, indexing="ij")
    r = np.hypot(X, Y)
    inside = r < outer
    if shape == Shape.ANNULUS:
        inside &= r > inner
    cls = _classify(inside, False)
    return GridDomain(n, n, h, h, origin, cls, shape, params)


def refine(domain: GridDomain) -> GridDomain:
    """Halve both spacings on the same lattice extent; coarse nodes stay lattice nodes."""
    d = domain
    if d.shape == Shape.RECT:
        return make_domain(Shape.RECT, x=d.params["x"], y=d.params["y"],
                           nx=2 * d.nx - 1, ny=2 * d.ny - 1)
    if d.shape == Shape.SLAB:
        out = make_domain(Shape.SLAB, x=d.params["x"], period=d.params["period"],
                          nx=2 * d.nx - 1, ny=2 * d.ny, y=(d.origin[1],))
        return out
    h = d.hx / 2
    n = 2 * d.nx - 1
    inner = d.params.get("r_in", 0.0)
    outer = d.params.get("r_out", d.params.get("radius"))
    return _radial_domain(d.shape, n, h, d.origin, inner, outer, dict(d.params))


def norms(f: ScalarField) -> tuple[float, float]:
    """(sup over active nodes, sqrt(sum v^2 hx hy) over interior nodes)."""
    d = f.domain
    act = f.values[d.active]
    sup = float(np.max(np.abs(act))) if act.size else 0.0
    inner = f.values[d.interior]
    l2 = math.sqrt(float(np.sum(inner * inner)) * d.hx * d.hy)
    return sup, l2


# -- text format -------------------------------------------------------------

_MAGIC = "# translator-field v1"
_CLASS_NAMES = {c: c.name for c in NodeClass}


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _header(d: GridDomain) -> str:
    parts = [_MAGIC, f"nx={d.nx}", f"ny={d.ny}", f"hx={_fmt(d.hx)}", f"hy={_fmt(d.hy)}",
             f"shape={d.shape}", f"x0={_fmt(d.origin[0])}", f"y0={_fmt(d.origin[1])}"]
    for key in ("radius", "r_in", "r_out", "period"):
        if key in d.params:
            parts.append(f"{key}={_fmt(d.params[key])}")
    return " ".join(parts)


def format_field(f: ScalarField) -> str:
    d = f.domain
    lines = [_header(d)]
    cls = d.node_class
    vals = np.where(d.active, f.values, 0.0)
    for i in range(d.nx):
        for j in range(d.ny):
            lines.append(f"{i} {j} {_CLASS_NAMES[NodeClass(cls[i, j])]} {_fmt(vals[i, j])}")
    return "\n".join(lines) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field(f: ScalarField, path) -> None:
    atomic_write_text(path, format_field(f))


def _parse_header(line: str) -> dict:
    if not line.startswith(_MAGIC):
        raise FieldFormatError(f"line 1: expected header starting with {_MAGIC!r}")
    kv = {}
    for tok in line[len(_MAGIC):].split():
        if "=" not in tok:
            raise FieldFormatError(f"line 1: malformed header token {tok!r}")
        k, v = tok.split("=", 1)
        kv[k] = v
    for key in ("nx", "ny", "hx", "hy", "shape"):
        if key not in kv:
            raise FieldFormatError(f"line 1: header missing {key}")
    try:
        out = {"nx": int(kv["nx"]), "ny": int(kv["ny"]), "hx": float(kv["hx"]),
               "hy": float(kv["hy"]), "shape": kv["shape"],
               "x0": float(kv.get("x0", 0.0)), "y0": float(kv.get("y0", 0.0))}
        for key in ("radius", "r_in", "r_out", "period"):
            if key in kv:
                out[key] = float(kv[key])
    except ValueError as exc:
        raise FieldFormatError(f"line 1: {exc}") from None
    if out["shape"] not in Shape.ALL:
        raise FieldFormatError(f"line 1: unknown shape {out['shape']!r}")
    return out


def parse_field(text: str) -> ScalarField:
    lines = text.splitlines()
    if not lines:
        raise FieldFormatError("line 1: empty file")
    hd = _parse_header(lines[0])
    nx, ny = hd["nx"], hd["ny"]
    body = lines[1:]
    while body and not body[-1].strip():
        body.pop()
    if len(body) != nx * ny:
        raise FieldFormatError(
            f"line {len(body) + 2}: header declares {nx * ny} nodes, file has {len(body)}")
    cls = np.empty((nx, ny), dtype=np.int8)
    vals = np.zeros((nx, ny))
    names = {n.name: n.value for n in NodeClass}
    for k, line in enumerate(body):
        lineno = k + 2
        parts = line.split()
        if len(parts) != 4:
            raise FieldFormatError(f"line {lineno}: expected 'i j class value', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            v = float(parts[3])
        except ValueError:
            raise FieldFormatError(f"line {lineno}: unparsable entry {line!r}") from None
        if (i, j) != divmod(k, ny):
            raise FieldFormatError(f"line {lineno}: expected node {divmod(k, ny)}, got {(i, j)}")
        if parts[2] not in names:
            raise FieldFormatError(f"line {lineno}: unknown node class {parts[2]!r}")
        if not math.isfinite(v):
            raise FieldFormatError(f"line {lineno}: non-finite value {parts[3]!r}")
        cls[i, j] = names[parts[2]]
        vals[i, j] = v
    params = {}
    shape = hd["shape"]
    x0, y0 = hd["x0"], hd["y0"]
    if shape == Shape.RECT:
        params = {"x": [x0, x0 + (nx - 1) * hd["hx"]], "y": [y0, y0 + (ny - 1) * hd["hy"]]}
    elif shape == Shape.SLAB:
        params = {"x": [x0, x0 + (nx - 1) * hd["hx"]], "period": hd.get("period", ny * hd["hy"])}
    else:
        half = (nx - 1) / 2
        params["center"] = [x0 + half * hd["hx"], y0 + half * hd["hy"]]
        for key in ("radius", "r_in", "r_out"):
            if key in hd:
                params[key] = hd[key]
    dom = GridDomain(nx, ny, hd["hx"], hd["hy"], (x0, y0), cls, shape, params)
    return ScalarField(dom, vals)


def read_field(path) -> ScalarField:
    return parse_field(Path(path).read_text(encoding="utf-8"))


def io_roundtrip(f: ScalarField, path) -> ScalarField:
    write_field(f, path)
    return read_field(path)
