"""Stencil kernels for the translator operator ``div(grad u / W) - C / W``.

Every kernel works on a gathered ``(n, 9)`` array of node values, column
``k = 3*(di+1) + (dj+1)`` holding ``u[i+di, j+dj]``.  Each function exists
twice: an ``@njit`` loop (``*_loop``) and a vectorised numpy version
(``*_np``).  The public names dispatch on :data:`USE_NUMBA`.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# stencil column ids
_C = 4
_W, _E = 1, 7
_Sx, _N = 3, 5
_SWc, _NWc, _SEc, _NEc = 0, 2, 6, 8


def _faces(U, hx, hy):
    """Face slopes (normal, tangential) for the four faces of each node."""
    c = U[..., _C]
    e = U[..., _E]
    w = U[..., _W]
    n = U[..., _N]
    s = U[..., _Sx]
    ne = U[..., _NEc]
    nw = U[..., _NWc]
    se = U[..., _SEc]
    sw = U[..., _SWc]
    pe = (e - c) / hx
    qe = (n + ne - s - se) / (4 * hy)
    pw = (c - w) / hx
    qw = (nw + n - sw - s) / (4 * hy)
    qn = (n - c) / hy
    pn = (e + ne - w - nw) / (4 * hx)
    qs = (c - s) / hy
    ps = (se + e - sw - w) / (4 * hx)
    ux = (e - w) / (2 * hx)
    uy = (n - s) / (2 * hy)
    return pe, qe, pw, qw, qn, pn, qs, ps, ux, uy


def residual_np(U, hx, hy, C):
    """Return (R, W_node) for gathered values ``U`` of shape (n, 9)."""
    pe, qe, pw, qw, qn, pn, qs, ps, ux, uy = _faces(U, hx, hy)
    fe = pe / np.sqrt(1 + pe * pe + qe * qe)
    fw = pw / np.sqrt(1 + pw * pw + qw * qw)
    gn = qn / np.sqrt(1 + pn * pn + qn * qn)
    gs = qs / np.sqrt(1 + ps * ps + qs * qs)
    W = np.sqrt(1 + ux * ux + uy * uy)
    div = (fe - fw) / hx + (gn - gs) / hy
    return div - C / W, W


@njit(cache=True)
def residual_loop(U, hx, hy, C):
    n = U.shape[0]
    R = np.empty(n)
    Wn = np.empty(n)
    for k in range(n):
        c = U[k, 4]
        e = U[k, 7]
        w = U[k, 1]
        nn = U[k, 5]
        s = U[k, 3]
        ne = U[k, 8]
        nw = U[k, 2]
        se = U[k, 6]
        sw = U[k, 0]
        pe = (e - c) / hx
        qe = (nn + ne - s - se) / (4 * hy)
        pw = (c - w) / hx
        qw = (nw + nn - sw - s) / (4 * hy)
        qn = (nn - c) / hy
        pn = (e + ne - w - nw) / (4 * hx)
        qs = (c - s) / hy
        ps = (se + e - sw - w) / (4 * hx)
        fe = pe / np.sqrt(1 + pe * pe + qe * qe)
        fw = pw / np.sqrt(1 + pw * pw + qw * qw)
        gn = qn / np.sqrt(1 + pn * pn + qn * qn)
        gs = qs / np.sqrt(1 + ps * ps + qs * qs)
        ux = (e - w) / (2 * hx)
        uy = (nn - s) / (2 * hy)
        W = np.sqrt(1 + ux * ux + uy * uy)
        R[k] = (fe - fw) / hx + (gn - gs) / hy - C / W
        Wn[k] = W
    return R, Wn


def jacobian_np(U, hx, hy, C):
    """d R_k / d U[k, m] for the 9 stencil columns m; shape (n, 9)."""
    pe, qe, pw, qw, qn, pn, qs, ps, ux, uy = _faces(U, hx, hy)
    J = np.zeros(U.shape)

    def face(p, q):
        W3 = (1 + p * p + q * q) ** 1.5
        return (1 + q * q) / W3, -p * q / W3

    # east face, +1/hx
    dp, dq = face(pe, qe)
    a = 1 / hx
    J[:, _E] += a * dp / hx
    J[:, _C] -= a * dp / hx
    t = a * dq / (4 * hy)
    J[:, _N] += t
    J[:, _NEc] += t
    J[:, _Sx] -= t
    J[:, _SEc] -= t
    # west face, -1/hx
    dp, dq = face(pw, qw)
    J[:, _C] -= a * dp / hx
    J[:, _W] += a * dp / hx
    t = a * dq / (4 * hy)
    J[:, _NWc] -= t
    J[:, _N] -= t
    J[:, _SWc] += t
    J[:, _Sx] += t
    # north face, +1/hy; normal slope q, tangential p
    dq_, dp_ = face(qn, pn)
    b = 1 / hy
    J[:, _N] += b * dq_ / hy
    J[:, _C] -= b * dq_ / hy
    t = b * dp_ / (4 * hx)
    J[:, _E] += t
    J[:, _NEc] += t
    J[:, _W] -= t
    J[:, _NWc] -= t
    # south face, -1/hy
    dq_, dp_ = face(qs, ps)
    J[:, _C] -= b * dq_ / hy
    J[:, _Sx] += b * dq_ / hy
    t = b * dp_ / (4 * hx)
    J[:, _SEc] -= t
    J[:, _E] -= t
    J[:, _SWc] += t
    J[:, _W] += t
    # -C/W at the node
    W3 = (1 + ux * ux + uy * uy) ** 1.5
    gx = C * ux / W3 / (2 * hx)
    gy = C * uy / W3 / (2 * hy)
    J[:, _E] += gx
    J[:, _W] -= gx
    J[:, _N] += gy
    J[:, _Sx] -= gy
    return J


@njit(cache=True)
def jacobian_loop(U, hx, hy, C):
    n = U.shape[0]
    J = np.zeros((n, 9))
    for k in range(n):
        c = U[k, 4]
        e = U[k, 7]
        w = U[k, 1]
        nn = U[k, 5]
        s = U[k, 3]
        ne = U[k, 8]
        nw = U[k, 2]
        se = U[k, 6]
        sw = U[k, 0]
        a = 1.0 / hx
        b = 1.0 / hy
        # east
        p = (e - c) / hx
        q = (nn + ne - s - se) / (4 * hy)
        W3 = (1 + p * p + q * q) ** 1.5
        fp = (1 + q * q) / W3
        fq = -p * q / W3
        J[k, 7] += a * fp / hx
        J[k, 4] -= a * fp / hx
        t = a * fq / (4 * hy)
        J[k, 5] += t
        J[k, 8] += t
        J[k, 3] -= t
        J[k, 6] -= t
        # west
        p = (c - w) / hx
        q = (nw + nn - sw - s) / (4 * hy)
        W3 = (1 + p * p + q * q) ** 1.5
        fp = (1 + q * q) / W3
        fq = -p * q / W3
        J[k, 4] -= a * fp / hx
        J[k, 1] += a * fp / hx
        t = a * fq / (4 * hy)
        J[k, 2] -= t
        J[k, 5] -= t
        J[k, 0] += t
        J[k, 3] += t
        # north
        q = (nn - c) / hy
        p = (e + ne - w - nw) / (4 * hx)
        W3 = (1 + p * p + q * q) ** 1.5
        gq = (1 + p * p) / W3
        gp = -p * q / W3
        J[k, 5] += b * gq / hy
        J[k, 4] -= b * gq / hy
        t = b * gp / (4 * hx)
        J[k, 7] += t
        J[k, 8] += t
        J[k, 1] -= t
        J[k, 2] -= t
        # south
        q = (c - s) / hy
        p = (se + e - sw - w) / (4 * hx)
        W3 = (1 + p * p + q * q) ** 1.5
        gq = (1 + p * p) / W3
        gp = -p * q / W3
        J[k, 4] -= b * gq / hy
        J[k, 3] += b * gq / hy
        t = b * gp / (4 * hx)
        J[k, 6] -= t
        J[k, 7] -= t
        J[k, 0] += t
        J[k, 1] += t
        # node term
        ux = (e - w) / (2 * hx)
        uy = (nn - s) / (2 * hy)
        W3 = (1 + ux * ux + uy * uy) ** 1.5
        gx = C * ux / W3 / (2 * hx)
        gy = C * uy / W3 / (2 * hy)
        J[k, 7] += gx
        J[k, 1] -= gx
        J[k, 5] += gy
        J[k, 3] -= gy
    return J


@njit(cache=True)
def flow_steps_loop(u, nodes, stencil, hx, hy, C, drift, dt_safety, t_end, boundary_rate,
                    bnodes, max_steps):
    """Explicit Euler for ``u_t = W R(u) + drift`` until ``t_end``.

    Boundary nodes ``bnodes`` move at ``boundary_rate``.  Returns (u, t, steps).
    """
    h = min(hx, hy)
    t = 0.0
    steps = 0
    n = nodes.size
    U = np.empty((n, 9))
    while t < t_end and steps < max_steps:
        for k in range(n):
            for m in range(9):
                U[k, m] = u[stencil[k, m]]
        R, Wn = residual_loop(U, hx, hy, C)
        wmax = 1.0
        for k in range(n):
            if Wn[k] > wmax:
                wmax = Wn[k]
        dt = dt_safety * h * h / (4.0 * wmax * wmax)
        if t + dt > t_end:
            dt = t_end - t
        for k in range(n):
            u[nodes[k]] += dt * (Wn[k] * R[k] + drift)
        for k in range(bnodes.size):
            u[bnodes[k]] += dt * boundary_rate
        t += dt
        steps += 1
    return u, t, steps


def flow_steps_np(u, nodes, stencil, hx, hy, C, drift, dt_safety, t_end, boundary_rate,
                  bnodes, max_steps):
    h = min(hx, hy)
    t = 0.0
    steps = 0
    while t < t_end and steps < max_steps:
        R, Wn = residual_np(u[stencil], hx, hy, C)
        wmax = max(1.0, float(Wn.max()))
        dt = dt_safety * h * h / (4.0 * wmax * wmax)
        if t + dt > t_end:
            dt = t_end - t
        u[nodes] += dt * (Wn * R + drift)
        u[bnodes] += dt * boundary_rate
        t += dt
        steps += 1
    return u, t, steps


# -- variational scheme -------------------------------------------------------
#
# F_h(u) = sum over nodes n and quadrants (sx, sy) of
#     (hx hy / 4) exp(C m) W(D),   D = ((u[n+sx] - u[n]) / (sx hx), (u[n+sy] - u[n]) / (sy hy)),
# with m the mean of u over the three nodes (n, n+sx, n+sy).  Each quadrant
# is a P1 triangle and every cell is covered by both diagonal splittings at
# half weight.  The residual is R = -grad F_h / (exp(C u) hx hy), which is
# div(grad u / W) - C / W to second order, and R(u + c) = R(u) exactly.
# Row a only sees the 12 quadrants that contain it; weights are taken
# relative to exp(C u_a) so nothing overflows.


def _quad_table():
    def col(di, dj):
        return 3 * (di + 1) + (dj + 1)

    rows = []
    for sx in (-1, 1):
        for sy in (-1, 1):
            rows.append((col(0, 0), col(sx, 0), col(0, sy), sx, sy, 0))
            rows.append((col(-sx, 0), col(0, 0), col(-sx, sy), sx, sy, 1))
            rows.append((col(0, -sy), col(sx, -sy), col(0, 0), sx, sy, 2))
    return np.array(rows, dtype=np.int64)


QUADS = _quad_table()


def variational_np(U, hx, hy, C, hessian=True):
    """Return (R, Hrel) with ``Hrel[a, k] = H_ab / (exp(C u_a) hx hy)``, H the Hessian of F_h."""
    n = U.shape[0]
    R = np.zeros(n)
    H = np.zeros((n, 9)) if hessian else None
    uc = U[:, _C]
    for kn, k1, k2, sx, sy, pos in QUADS:
        ax, ay = 1.0 / (sx * hx), 1.0 / (sy * hy)
        p = (U[:, k1] - U[:, kn]) * ax
        q = (U[:, k2] - U[:, kn]) * ay
        W2 = 1 + p * p + q * q
        W = np.sqrt(W2)
        om = 0.25 * np.exp(C * ((U[:, kn] + U[:, k1] + U[:, k2]) / 3 - uc))
        dD = ((-ax, -ay), (ax, 0.0), (0.0, ay))
        v = [(p * dx + q * dy) / W for dx, dy in dD]
        R -= om * (C * W / 3 + v[pos])
        if hessian:
            kxx = (1 - p * p / W2) / W
            kxy = -p * q / W2 / W
            kyy = (1 - q * q / W2) / W
            ax_, ay_ = dD[pos]
            for j, kj in enumerate((kn, k1, k2)):
                bx, by = dD[j]
                P = ax_ * (kxx * bx + kxy * by) + ay_ * (kxy * bx + kyy * by)
                H[:, kj] += om * (C * C * W / 9 + C / 3 * (v[pos] + v[j]) + P)
    return R, H


@njit(cache=True)
def variational_loop(U, hx, hy, C, hessian=True):
    n = U.shape[0]
    R = np.zeros(n)
    H = np.zeros((n, 9))
    t = np.empty(3, dtype=np.int64)
    dx = np.empty(3)
    dy = np.empty(3)
    v = np.empty(3)
    for a in range(n):
        uc = U[a, 4]
        for r in range(QUADS.shape[0]):
            kn = QUADS[r, 0]
            k1 = QUADS[r, 1]
            k2 = QUADS[r, 2]
            sx = QUADS[r, 3]
            sy = QUADS[r, 4]
            pos = QUADS[r, 5]
            ax = 1.0 / (sx * hx)
            ay = 1.0 / (sy * hy)
            p = (U[a, k1] - U[a, kn]) * ax
            q = (U[a, k2] - U[a, kn]) * ay
            W2 = 1 + p * p + q * q
            W = np.sqrt(W2)
            om = 0.25 * np.exp(C * ((U[a, kn] + U[a, k1] + U[a, k2]) / 3 - uc))
            t[0] = kn
            t[1] = k1
            t[2] = k2
            dx[0] = -ax
            dy[0] = -ay
            dx[1] = ax
            dy[1] = 0.0
            dx[2] = 0.0
            dy[2] = ay
            for j in range(3):
                v[j] = (p * dx[j] + q * dy[j]) / W
            R[a] -= om * (C * W / 3 + v[pos])
            if hessian:
                kxx = (1 - p * p / W2) / W
                kxy = -p * q / W2 / W
                kyy = (1 - q * q / W2) / W
                for j in range(3):
                    P = dx[pos] * (kxx * dx[j] + kxy * dy[j]) + dy[pos] * (kxy * dx[j] + kyy * dy[j])
                    H[a, t[j]] += om * (C * C * W / 9 + C / 3 * (v[pos] + v[j]) + P)
    return R, H


def _variational_jacobian(var):
    def jac(U, hx, hy, C):
        R, H = var(U, hx, hy, C, True)
        J = -H
        J[:, _C] -= C * R
        return J

    return jac


def _variational_residual(var):
    def res(U, hx, hy, C):
        R, _ = var(U, hx, hy, C, False)
        ux = (U[:, _E] - U[:, _W]) / (2 * hx)
        uy = (U[:, _N] - U[:, _Sx]) / (2 * hy)
        return R, np.sqrt(1 + ux * ux + uy * uy)

    return res


if USE_NUMBA:
    residual = residual_loop
    jacobian = jacobian_loop
    flow_steps = flow_steps_loop
    variational = variational_loop
else:
    residual = residual_np
    jacobian = jacobian_np
    flow_steps = flow_steps_np
    variational = variational_np

variational_residual = _variational_residual(variational)
variational_jacobian = _variational_jacobian(variational)
