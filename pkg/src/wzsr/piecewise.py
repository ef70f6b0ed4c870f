"""Locating the code transitions of piecewise-constant quantizer maps.

Trained encoders map x to integer codes that are constant on finitely many
intervals.  A uniform scan finds the cells where a code changes; bisection
then pins each boundary to the requested tolerance.  Bisections for all
candidate cells run in lockstep, so the map is evaluated on small batches
rather than point by point.
"""

import numpy as np

from wzsr.errors import ContractError


def scan_codes(code_fn, lo, hi, resolution):
    """Evaluate codes on a uniform grid; returns (x_grid, codes)."""
    if resolution < 2:
        raise ContractError(f"resolution must be >= 2; got {resolution}")
    xs = np.linspace(lo, hi, resolution)
    codes = np.asarray(code_fn(xs))
    return xs, codes


def refine_transitions(code_fn, lo_pts, hi_pts, tol=1e-8, max_iter=200):
    """Bisect each (lo, hi) cell with differing end codes to width <= tol.

    Returns the boundary positions (midpoints of the final brackets).  The
    code at each returned point's left side equals code_fn(lo).
    """
    lo_pts = np.asarray(lo_pts, dtype=np.float64).copy()
    hi_pts = np.asarray(hi_pts, dtype=np.float64).copy()
    if lo_pts.size == 0:
        return lo_pts
    lo_codes = np.asarray(code_fn(lo_pts))
    for _ in range(max_iter):
        if np.all(hi_pts - lo_pts <= tol):
            break
        mid = 0.5 * (lo_pts + hi_pts)
        mid_codes = np.asarray(code_fn(mid))
        take_left = mid_codes == lo_codes
        lo_pts = np.where(take_left, mid, lo_pts)
        hi_pts = np.where(take_left, hi_pts, mid)
    return 0.5 * (lo_pts + hi_pts)


def stage_transitions(code_fn, lo, hi, resolution, tol=1e-8):
    """All code boundaries of a scalar integer-valued map on [lo, hi]."""
    xs, codes = scan_codes(code_fn, lo, hi, resolution)
    idx = np.nonzero(np.diff(codes) != 0)[0]
    return refine_transitions(code_fn, xs[idx], xs[idx + 1], tol=tol)
