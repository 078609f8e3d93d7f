# Use numba when it is importable and not disabled; otherwise fall back to the
# vectorised numpy kernels.  TRANSLATOR_LAB_NUMBA=0 forces the numpy path.

import logging
import os
import warnings

logger = logging.getLogger(__name__)

_flag = os.environ.get("TRANSLATOR_LAB_NUMBA", "1").strip().lower()
_wanted = _flag not in ("0", "false", "no", "off")

try:
    import numba

    njit = numba.njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(func):
            return func

        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return wrap

USE_NUMBA = HAVE_NUMBA and _wanted


def set_threads_from_env() -> int:
    """Apply TRANSLATOR_LAB_THREADS (0 = leave numba's default). Returns the width used."""
    raw = os.environ.get("TRANSLATOR_LAB_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        logger.warning("ignoring TRANSLATOR_LAB_THREADS=%r", raw)
        n = 0
    if not HAVE_NUMBA:
        return 1
    if n <= 0:
        return numba.config.NUMBA_NUM_THREADS
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    with warnings.catch_warnings():
        # picking a threading layer may warn about an old TBB; the fallback layer is fine
        warnings.simplefilter("ignore", numba.NumbaWarning)
        numba.set_num_threads(n)
    return n
