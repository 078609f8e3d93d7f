"""Time the numba kernels against the numpy fallback.

Each path runs in its own interpreter (the choice is fixed at import by
TRANSLATOR_LAB_NUMBA).  Usage: ``python3 benchmarks/bench_kernels.py [--n 129]``.
"""

import argparse
import json
import os
import subprocess
import sys

_CHILD = r"""
import json, sys, timeit
import numpy as np
from translator_lab import kernels, exact, stability
from translator_lab.grid import make_domain
from translator_lab.solver import newton_solve
from translator_lab.geometry import compute_geometry
from translator_lab.metric import distances_from

n, repeat = int(sys.argv[1]), int(sys.argv[2])
d = make_domain("RECT", x=(-1, 1), y=(-1, 1), nx=n, ny=n)
u = exact.bowl().sample(d)
U = u.values.ravel()[d.stencil_index()]
h = d.hx
geom = compute_geometry(u)
mid = (n // 2, n // 2)
cases = {
    "residual": lambda: kernels.residual(U, h, h, 1.0),
    "jacobian": lambda: kernels.jacobian(U, h, h, 1.0),
    "variational": lambda: kernels.variational_residual(U, h, h, 1.0),
    "newton_solve": lambda: newton_solve(d, u),
    "dijkstra": lambda: distances_from(geom, mid),
    "top_eigenvalue": lambda: stability.top_eigenvalue(stability.jacobi_operator(u), 1e-6),
}
out = {}
for name, fn in cases.items():
    fn()  # warm up (compilation for the numba path)
    out[name] = min(timeit.repeat(fn, number=1, repeat=repeat))
print(json.dumps({"numba": kernels.USE_NUMBA, "times": out}))
"""


def _time(flag: str, n: int, repeat: int) -> dict:
    env = dict(os.environ, TRANSLATOR_LAB_NUMBA=flag)
    res = subprocess.run([sys.executable, "-c", _CHILD, str(n), str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=129, help="nodes per side")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    fast = _time("1", args.n, args.repeat)
    slow = _time("0", args.n, args.repeat)
    if not fast["numba"]:
        print("numba unavailable: both runs used numpy", file=sys.stderr)
    print(f"{'kernel':<16}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for k, t_np in slow["times"].items():
        t_nb = fast["times"][k]
        print(f"{k:<16}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}")


if __name__ == "__main__":
    main()
