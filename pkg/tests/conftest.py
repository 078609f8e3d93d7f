import os
import subprocess
import sys

import pytest

ACCEPTANCE: list[tuple[int, bool, str]] = []


@pytest.fixture
def record():
    """Record one acceptance line: ``record(n, passed, detail)``."""

    def _rec(n: int, passed: bool, detail: str) -> None:
        ACCEPTANCE.append((n, bool(passed), detail))

    return _rec


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def run_python(code: str, numba: bool = True, timeout: int = 600) -> str:
    """Run ``code`` in a fresh interpreter, optionally with the numpy kernels."""
    env = dict(os.environ)
    env["TRANSLATOR_LAB_NUMBA"] = "1" if numba else "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         timeout=timeout, check=True)
    return out.stdout
