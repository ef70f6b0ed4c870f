"""Kernel-lane selection: compiled extension when available, numpy otherwise.

The environment variable WZSR_BACKEND forces a lane ("ext" or "python");
``use()`` switches at runtime, which the backend tests and benchmarks rely
on.  Both lanes are bit-identical by construction, so the choice affects
speed only.
"""

import os

from wzsr import kernels_py

try:
    from wzsr import _kernels  # compiled lane

    HAVE_EXT = True
except ImportError:
    _kernels = None
    HAVE_EXT = False

_LANES = {"python": kernels_py}
if HAVE_EXT:
    _LANES["ext"] = _kernels


def _initial():
    forced = os.environ.get("WZSR_BACKEND")
    if forced is not None:
        if forced not in _LANES:
            raise ImportError(
                f"WZSR_BACKEND={forced!r} unavailable; lanes: {sorted(_LANES)}"
            )
        return _LANES[forced]
    return _LANES["ext"] if HAVE_EXT else _LANES["python"]


_active = _initial()


def use(name):
    """Select a kernel lane by name ('ext' or 'python')."""
    global _active
    if name not in _LANES:
        raise ValueError(f"unknown backend {name!r}; available: {sorted(_LANES)}")
    _active = _LANES[name]


def active_name():
    return _active.NAME


def available():
    return sorted(_LANES)


def leaky_fwd(x, slope):
    return _active.leaky_fwd(x, slope)


def leaky_bwd(g, x, slope):
    return _active.leaky_bwd(g, x, slope)


def cell_fwd(xw, hw, b, slope):
    return _active.cell_fwd(xw, hw, b, slope)


def adam_step(p, g, m, v, c1, c2, lr, b1, b2, eps):
    return _active.adam_step(p, g, m, v, c1, c2, lr, b1, b2, eps)
