"""Hot loops with a compiled backend and a pure-Python fallback.

The compiled module is used when it imports; set ``POSESIM_PURE=1`` to force
the fallback.  ``BACKEND`` names the one in use.
"""

import os

from . import _fallback

if os.environ.get("POSESIM_PURE") == "1":
    _impl = _fallback
    BACKEND = "python"
else:
    try:
        from . import _native as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _fallback
        BACKEND = "python"

crash_trials = _impl.crash_trials

_I64 = (-(1 << 63), (1 << 63) - 1)


def quicksort_steps(values, seed: int):
    """Randomized quicksort; returns ``(sorted list, comparisons)``.

    The compiled path only handles 64-bit ints, anything else goes to the fallback.
    """
    values = list(values)
    if _impl is not _fallback and all(
            type(v) is int and _I64[0] <= v <= _I64[1] for v in values):
        return _impl.quicksort_steps(values, seed)
    return _fallback.quicksort_steps(values, seed)

SplitMix64 = _fallback.SplitMix64

__all__ = ["BACKEND", "crash_trials", "quicksort_steps", "SplitMix64"]
