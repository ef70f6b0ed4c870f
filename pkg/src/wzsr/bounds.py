"""Closed-form rate-distortion references and slow numerical oracles.

For the additive-noise pair y ~ N(0,1), x = y + n with n ~ N(0, s2), the
side-information rate-distortion function is the quadratic-Gaussian form
max(0, 0.5 log2(s2 / D)); without side information the source variance is
1 + s2 and the same form applies with that variance.

Two independent oracles validate and extend the closed forms:

* A discretized Blahut-Arimoto iteration computes the rate-distortion
  function of a Gaussian source on a quantized alphabet.  Conditioned on
  y, the source is N(y, s2), and the conditional rate-distortion problem is
  shift-invariant, so min I(X;U|Y) under an MSE constraint reduces to the
  rate-distortion function of the noise N(0, s2); the no-side-information
  curve is the same computation at variance 1 + s2.

* ``oracle_conditional_entropy`` integrates the exact conditional code
  entropies H(M_k | M_1^{k-1}, Y) of a frozen deterministic encoder.  The
  encoder is piecewise constant, and conditioned on Y = y the source is
  Gaussian, so each piece's probability is an exact difference of normal
  CDFs; the outer average over y uses composite Gauss-Legendre panels with
  a refinement-based error estimate.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from wzsr import piecewise
from wzsr.errors import AccuracyError, ContractError, DomainError


def wz_rate(distortion, noise_variance):
    """Side-information bound: max(0, 0.5*log2(noise_variance/D)) bits."""
    if np.any(np.asarray(distortion) <= 0) or noise_variance <= 0:
        raise DomainError("distortion and noise variance must be positive")
    r = 0.5 * np.log2(noise_variance / np.asarray(distortion, dtype=np.float64))
    out = np.maximum(r, 0.0)
    return float(out) if out.ndim == 0 else out


def rate_no_side_info(distortion, noise_variance):
    """No-side-information bound with Var(X) = 1 + noise_variance."""
    if np.any(np.asarray(distortion) <= 0) or noise_variance <= 0:
        raise DomainError("distortion and noise variance must be positive")
    r = 0.5 * np.log2((1.0 + noise_variance) / np.asarray(distortion, dtype=np.float64))
    out = np.maximum(r, 0.0)
    return float(out) if out.ndim == 0 else out


def wz_distortion(rate_bits, noise_variance):
    """Inverse of wz_rate on its strictly decreasing branch."""
    return noise_variance * 2.0 ** (-2.0 * np.asarray(rate_bits, dtype=np.float64))


# ---------------------------------------------------------------------------
# Blahut-Arimoto oracle


def _gaussian_cell_pmf(variance, grid_points, span_sigmas):
    """Cell-mass discretization of N(0, variance) on a uniform grid."""
    sigma = math.sqrt(variance)
    edges = np.linspace(-span_sigmas * sigma, span_sigmas * sigma, grid_points + 1)
    cdf = ndtr(edges / sigma)
    pmf = np.diff(cdf)
    pmf /= pmf.sum()
    centers = 0.5 * (edges[:-1] + edges[1:])
    return centers, pmf


def blahut_arimoto_point(variance, beta, grid_points=257, span_sigmas=6.0,
                         tol=1e-11, max_iter=5000):
    """One (rate, distortion) point of the discretized Gaussian RD curve.

    beta is the Lagrangian slope; at the quadratic-Gaussian optimum
    beta = 1/(2D), which callers use to aim for a target distortion.
    """
    x, p_x = _gaussian_cell_pmf(variance, grid_points, span_sigmas)
    d = (x[:, None] - x[None, :]) ** 2
    expd = np.exp(-beta * d)
    q = np.full(grid_points, 1.0 / grid_points)
    prev_obj = np.inf
    for _ in range(max_iter):
        cond = expd * q[None, :]
        z = cond.sum(axis=1)
        cond /= z[:, None]
        q = p_x @ cond
        # Lagrangian objective decreases monotonically; stop when stable.
        obj = -(p_x * np.log(z)).sum()
        if abs(prev_obj - obj) < tol:
            break
        prev_obj = obj
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(cond > 0, cond / q[None, :], 1.0)
        rate_nats = (p_x[:, None] * cond * np.log(ratio)).sum()
    rate_bits = max(rate_nats / math.log(2.0), 0.0)
    distortion = float((p_x[:, None] * cond * d).sum())
    return rate_bits, distortion


def blahut_arimoto_curve(variance, distortion_targets, grid_points=257, span_sigmas=6.0):
    """(rates, distortions) near the requested distortion targets."""
    rates, dists = [], []
    for d_target in np.asarray(distortion_targets, dtype=np.float64):
        r, d = blahut_arimoto_point(variance, beta=1.0 / (2.0 * d_target),
                                    grid_points=grid_points, span_sigmas=span_sigmas)
        rates.append(r)
        dists.append(d)
    return np.array(rates), np.array(dists)


# ---------------------------------------------------------------------------
# exact conditional entropy of a frozen deterministic encoder


@dataclass
class GridSpec:
    """Integration controls for the conditional-entropy oracle."""

    y_span_sigmas: float = 6.0
    x_span_sigmas: float = 8.0
    scan_points: int = 8192
    panels: int = 96
    nodes_per_panel: int = 8
    boundary_tol: float = 1e-10
    refine_tol_bits: float = 1e-3


def _entropy_bits(p, axis=-1):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=axis)


def _gauss_legendre_grid(lo, hi, panels, nodes):
    base_x, base_w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    ys = (mid[:, None] + half[:, None] * base_x[None, :]).ravel()
    ws = (half[:, None] * base_w[None, :]).ravel()
    return ys, ws


def _prefix_entropy_curve(boundaries, piece_prefix_ids, n_prefixes, sigma_n, ys):
    """H(M_1^k | Y=y) for each y node, from piece masses."""
    lo = np.concatenate([[-np.inf], boundaries])
    hi = np.concatenate([boundaries, [np.inf]])
    # ndtr(+-inf) is exact, so tail pieces integrate to the full tail mass.
    masses = ndtr((hi[None, :] - ys[:, None]) / sigma_n) - ndtr((lo[None, :] - ys[:, None]) / sigma_n)
    group = np.zeros((len(piece_prefix_ids), n_prefixes))
    group[np.arange(len(piece_prefix_ids)), piece_prefix_ids] = 1.0
    probs = masses @ group
    return _entropy_bits(probs, axis=1)


def _avg_over_y(curve_fn, y_span, panels, nodes):
    ys, ws = _gauss_legendre_grid(-y_span, y_span, panels, nodes)
    phi = np.exp(-0.5 * ys * ys) / math.sqrt(2.0 * math.pi)
    return float((ws * phi * curve_fn(ys)).sum())


def oracle_conditional_entropy(encoder_map, stage, noise_variance, grid=None,
                               return_detail=False):
    """H(M_stage | M_1^{stage-1}, Y) in bits for a deterministic encoder.

    encoder_map(xs) must return integer codes of shape (n, K).  The stage is
    1-based.  Raises AccuracyError if halving the y-panel width moves the
    result by more than grid.refine_tol_bits.
    """
    grid = grid or GridSpec()
    if grid.y_span_sigmas < 6.0 or grid.x_span_sigmas < 6.0:
        raise ContractError("integration grid must cover at least +-6 standard deviations")
    if noise_variance <= 0:
        raise DomainError("noise variance must be positive for the oracle")
    sigma_n = math.sqrt(noise_variance)
    sigma_x = math.sqrt(1.0 + noise_variance)
    probe = np.asarray(encoder_map(np.zeros(1)))
    if probe.ndim != 2:
        raise ContractError("encoder_map must return codes of shape (n, K)")
    K = probe.shape[1]
    if not 1 <= stage <= K:
        raise ContractError(f"stage {stage} outside 1..{K}")

    span = grid.x_span_sigmas * sigma_x

    def boundaries_and_prefixes(k):
        """Pieces of the length-k prefix map and each piece's prefix id."""
        xs = np.linspace(-span, span, grid.scan_points)
        codes = np.asarray(encoder_map(xs))[:, :k]
        # Radix from the scanned codes keeps prefix ids stable across calls.
        radix = int(codes.max()) + 1

        def ids_fn(pts):
            c = np.asarray(encoder_map(pts))[:, :k]
            ids = np.zeros(len(pts), dtype=np.int64)
            for j in range(k):
                ids = ids * radix + c[:, j]
            return ids

        grid_ids = np.zeros(grid.scan_points, dtype=np.int64)
        for j in range(k):
            grid_ids = grid_ids * radix + codes[:, j]
        change = np.nonzero(np.diff(grid_ids) != 0)[0]
        bnds = piecewise.refine_transitions(ids_fn, xs[change], xs[change + 1],
                                            tol=grid.boundary_tol)
        piece_ids = np.concatenate([grid_ids[change], grid_ids[-1:]])
        uniq, piece_prefix = np.unique(piece_ids, return_inverse=True)
        return bnds, piece_prefix, len(uniq)

    def cond_entropy_prefix(k, panels):
        if k == 0:
            return 0.0
        bnds, piece_prefix, n_pref = boundaries_and_prefixes(k)
        return _avg_over_y(
            lambda ys: _prefix_entropy_curve(bnds, piece_prefix, n_pref, sigma_n, ys),
            grid.y_span_sigmas, panels, grid.nodes_per_panel,
        )

    def stage_entropy(panels):
        return cond_entropy_prefix(stage, panels) - cond_entropy_prefix(stage - 1, panels)

    coarse = stage_entropy(grid.panels)
    fine = stage_entropy(2 * grid.panels)
    delta = abs(fine - coarse)
    if delta > grid.refine_tol_bits:
        raise AccuracyError(
            f"y-quadrature not converged: refinement moved the result by {delta:.3e} bits"
        )
    # Mass of y outside the integration range bounds the truncation error.
    truncation = 2.0 * ndtr(-grid.y_span_sigmas) * stage * math.log2(max(probe.max() + 1, 2))
    if return_detail:
        return fine, {"refine_delta_bits": delta, "truncation_bound_bits": truncation}
    return fine
