"""The numba loops and the numpy kernels compute the same thing."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from translator_lab import kernels
from translator_lab._accel import HAVE_NUMBA

from .conftest import run_python


def _stencils(seed, n=40, scale=1.0):
    return np.random.default_rng(seed).standard_normal((n, 9)) * scale


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
@settings(max_examples=20, deadline=None)
@given(hst.integers(0, 10_000), hst.floats(0.05, 2.0), hst.floats(0.0, 2.0))
def test_residual_loop_matches_numpy(seed, h, C):
    U = _stencils(seed)
    a = kernels.residual_loop(U, h, 0.7 * h, C)
    b = kernels.residual_np(U, h, 0.7 * h, C)
    for x, y in zip(a, b):
        assert np.allclose(x, y, rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
@settings(max_examples=20, deadline=None)
@given(hst.integers(0, 10_000), hst.floats(0.05, 2.0))
def test_jacobian_loop_matches_numpy(seed, h):
    U = _stencils(seed)
    assert np.allclose(kernels.jacobian_loop(U, h, h, 1.0), kernels.jacobian_np(U, h, h, 1.0),
                       rtol=1e-12, atol=1e-10)


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
@settings(max_examples=15, deadline=None)
@given(hst.integers(0, 10_000), hst.floats(0.0, 1.5))
def test_variational_loop_matches_numpy(seed, C):
    U = _stencils(seed, scale=0.3)
    R1, H1 = kernels.variational_loop(U, 0.1, 0.1, C, True)
    R2, H2 = kernels.variational_np(U, 0.1, 0.1, C, True)
    assert np.allclose(R1, R2, rtol=1e-12, atol=1e-12)
    assert np.allclose(H1, H2, rtol=1e-12, atol=1e-10)


@settings(max_examples=20, deadline=None)
@given(hst.integers(0, 10_000), hst.floats(-50, 50))
def test_variational_residual_shift_invariant(seed, c):
    U = _stencils(seed, scale=0.3)
    R0, _ = kernels.variational_residual(U, 0.1, 0.1, 1.0)
    R1, _ = kernels.variational_residual(U + c, 0.1, 0.1, 1.0)
    assert np.allclose(R0, R1, rtol=1e-10, atol=1e-10)


def test_variational_jacobian_fd():
    U = _stencils(7, n=5, scale=0.3)
    J = kernels.variational_jacobian(U, 0.1, 0.1, 1.0)
    R0, _ = kernels.variational_residual(U, 0.1, 0.1, 1.0)
    eps = 1e-7
    for k in range(9):
        V = U.copy()
        V[:, k] += eps
        R1, _ = kernels.variational_residual(V, 0.1, 0.1, 1.0)
        assert np.allclose(J[:, k], (R1 - R0) / eps, rtol=1e-4, atol=1e-3)
    assert np.allclose(J.sum(axis=1), 0, atol=1e-8)


_SCRIPT = """
import json, numpy as np
from translator_lab import kernels, exact, stability
from translator_lab.grid import make_domain
from translator_lab.solver import newton_solve
from translator_lab.metric import distances_from
from translator_lab.geometry import compute_geometry
d = make_domain('RECT', x=(-1, 1), y=(-1, 1), nx=17, ny=17)
rep = newton_solve(d, exact.bowl().sample(d))
op = stability.jacobi_operator(rep.u)
lam = stability.top_eigenvalue(op, 1e-8).value
dist = distances_from(compute_geometry(rep.u), (8, 8))
print(json.dumps({'numba': kernels.USE_NUMBA, 'u': rep.u.values.tolist(), 'it': rep.iterations,
                  'lam': lam, 'dist': np.where(np.isfinite(dist), dist, -1).tolist()}))
"""


@pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")
def test_both_paths_agree_end_to_end():
    a = json.loads(run_python(_SCRIPT, numba=True))
    b = json.loads(run_python(_SCRIPT, numba=False))
    assert a["numba"] is True and b["numba"] is False
    assert a["it"] == b["it"]
    assert np.allclose(a["u"], b["u"], atol=1e-12)
    assert a["lam"] == pytest.approx(b["lam"], abs=1e-7)
    assert np.allclose(a["dist"], b["dist"], atol=1e-12)
