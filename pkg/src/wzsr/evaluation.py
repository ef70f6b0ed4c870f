"""Inference-mode measurement and structure export.

``evaluate`` runs the deterministic (argmax) encoder over freshly sampled
pairs and reports per-stage coding rates, distortions, and Monte-Carlo
standard errors.  Samples are processed in fixed-size shards with
per-shard sub-streams and reduced in shard order, so the result is
bit-identical for a given (checkpoint, seed, n_samples) regardless of how
shards would be distributed.

Rate conventions per prior kind:

* conditional models: rate_conditional_bits is the learned-prior
  cross-entropy (ideal Slepian-Wolf rate); rate_marginal_bits is the
  plug-in empirical estimate of H(M_k | M_1^{k-1}) (no marginal model was
  trained); the sum-rate column accumulates the conditional rate.
* marginal models: rate_marginal_bits is the learned-prior cross-entropy
  (ideal entropy-coder rate); rate_conditional_bits is NaN; the sum-rate
  accumulates the marginal rate.
"""

import math
from dataclasses import dataclass

import numpy as np

from wzsr import checkpoint as ckpt_mod
from wzsr import model as mdl
from wzsr import objective, piecewise, sampling
from wzsr.errors import ContractError

SHARD_SIZE = 50_000
DEFAULT_BINNING_SPAN_SIGMAS = 4.0
BINNING_REFINE_TOL = 1e-8


@dataclass
class StageReport:
    stage: int
    rate_marginal_bits: float
    rate_conditional_bits: float
    distortion_mse: float
    distortion_db: float
    sum_rate_bits: float
    stderr_rate: float
    stderr_mse: float
    n_samples: int

    @property
    def rate_bits(self):
        """The operative per-stage rate (the prior the model was trained with)."""
        if math.isnan(self.rate_conditional_bits):
            return self.rate_marginal_bits
        return self.rate_conditional_bits


def evaluate(model, n_samples, seed, noise_variance=None):
    """Per-stage StageReports over n_samples freshly drawn pairs."""
    if n_samples < 10_000:
        raise ContractError(f"evaluation needs at least 10^4 samples; got {n_samples}")
    cfg = model.config
    if noise_variance is None:
        raise ContractError("noise_variance required (take it from the checkpoint config)")
    K = cfg.K
    conditional = cfg.prior_kind == mdl.CONDITIONAL

    rate_sum = np.zeros(K)
    rate_sq = np.zeros(K)
    mse_sum = np.zeros(K)
    mse_sq = np.zeros(K)
    counter = objective.PrefixCounter(K, cfg.M)

    done = 0
    shard = 0
    while done < n_samples:
        n = min(SHARD_SIZE, n_samples - done)
        rng = sampling.make_stream(seed, sampling.DOMAIN_EVAL, shard)
        batch = sampling.sample_pair_batch(n, noise_variance, rng)
        codes = mdl.encode_hard(model, batch.x)
        counter.update(codes)
        msgs = mdl.MessageSet(hard=codes)
        if conditional:
            q = mdl.prior_forward(model, batch.y, msgs)
        else:
            q = mdl.prior_forward(model, None, msgs)
        xhat = mdl.decode(model, batch.y, msgs)
        for k in range(K):
            bits = objective._selected_bits(q[k], codes[:, k])
            rate_sum[k] += bits.sum()
            rate_sq[k] += (bits * bits).sum()
            err = (batch.x - xhat[:, k]) ** 2
            mse_sum[k] += err.sum()
            mse_sq[k] += (err * err).sum()
        done += n
        shard += 1

    n_total = float(n_samples)
    prior_rates = rate_sum / n_total
    prior_rate_var = np.maximum(rate_sq / n_total - prior_rates**2, 0.0)
    mses = mse_sum / n_total
    mse_var = np.maximum(mse_sq / n_total - mses**2, 0.0)
    emp_rates, emp_var = counter.rates_bits()

    if conditional:
        marginal, marginal_var = emp_rates, emp_var
        cond = prior_rates
        operative_var = prior_rate_var
    else:
        marginal, marginal_var = prior_rates, prior_rate_var
        cond = np.full(K, math.nan)
        operative_var = prior_rate_var

    reports = []
    running = 0.0
    for k in range(K):
        operative = cond[k] if conditional else marginal[k]
        running += operative
        reports.append(StageReport(
            stage=k + 1,
            rate_marginal_bits=float(marginal[k]),
            rate_conditional_bits=float(cond[k]),
            distortion_mse=float(mses[k]),
            distortion_db=10.0 * math.log10(mses[k]) if mses[k] > 0 else -math.inf,
            sum_rate_bits=float(running),
            stderr_rate=float(np.sqrt(operative_var[k] / n_total)),
            stderr_mse=float(np.sqrt(mse_var[k] / n_total)),
            n_samples=n_samples,
        ))
    return reports


def evaluate_checkpoint(path, n_samples=None, seed=None):
    ck = ckpt_mod.load(path)
    cfg = ck.run_config
    model = ck.build_model()
    return evaluate(
        model,
        n_samples if n_samples is not None else cfg.eval_samples,
        seed if seed is not None else cfg.eval_seed,
        noise_variance=cfg.noise_variance,
    ), ck


# ---------------------------------------------------------------------------
# binning / reconstruction export


@dataclass
class BinningMap:
    x_grid: np.ndarray
    codes: np.ndarray  # (resolution, K)
    transitions: list  # per stage: refined boundary positions
    complete: np.ndarray  # (resolution,) mixed-radix complete message

    @property
    def stages(self):
        return self.codes.shape[1]


def export_binning(model, x_range=None, resolution=4096, noise_variance=None):
    """Grid scan of inference codes with bisection-refined bin boundaries.

    The default range covers +-4 standard deviations of the source; x
    beyond that carries negligible probability mass (recorded in the map's
    range rather than asserted).
    """
    if resolution < 1000:
        raise ContractError(f"binning export needs resolution >= 10^3; got {resolution}")
    if x_range is None:
        if noise_variance is None:
            raise ContractError("give x_range or noise_variance for the default range")
        sigma_x = math.sqrt(1.0 + noise_variance)
        x_range = (-DEFAULT_BINNING_SPAN_SIGMAS * sigma_x, DEFAULT_BINNING_SPAN_SIGMAS * sigma_x)
    lo, hi = x_range
    xs = np.linspace(lo, hi, resolution)
    codes = mdl.encode_hard(model, xs)
    K = codes.shape[1]
    M = model.config.M

    transitions = []
    for k in range(K):
        def stage_code(pts, _k=k):
            return mdl.encode_hard(model, pts)[:, _k]

        idx = np.nonzero(np.diff(codes[:, k]) != 0)[0]
        transitions.append(piecewise.refine_transitions(
            stage_code, xs[idx], xs[idx + 1], tol=BINNING_REFINE_TOL))

    complete = np.zeros(resolution, dtype=np.int64)
    for k in range(K):
        complete = complete * M + codes[:, k]
    return BinningMap(x_grid=xs, codes=codes, transitions=transitions, complete=complete)


@dataclass
class ReconstructionMap:
    prefix: tuple
    total_stages: int
    y_grid: np.ndarray
    x_hat: np.ndarray  # stage len(prefix) output per y

    @property
    def prefix_label(self):
        """E.g. (0,) with K=3 -> '0XX': stage-1 output with m_1 = 0."""
        return "".join(str(s) for s in self.prefix) + "X" * (self.total_stages - len(self.prefix))


def export_reconstruction(model, y_range, resolution, prefixes):
    """Decoder output over a y grid for fixed hard message prefixes.

    Each prefix of length k yields the stage-k reconstruction map only.
    """
    cfg = model.config
    lo, hi = y_range
    ys = np.linspace(lo, hi, resolution)
    maps = []
    for prefix in prefixes:
        prefix = tuple(int(s) for s in prefix)
        if not 1 <= len(prefix) <= cfg.K:
            raise ContractError(f"prefix length must be 1..{cfg.K}; got {prefix}")
        if any(not 0 <= s < cfg.M for s in prefix):
            raise ContractError(f"prefix symbols must be in 0..{cfg.M - 1}; got {prefix}")
        k = len(prefix)
        codes = np.tile(np.array(prefix + (0,) * (cfg.K - k)), (resolution, 1))
        xhat = mdl.decode(model, ys, mdl.MessageSet(hard=codes))
        maps.append(ReconstructionMap(prefix=prefix, total_stages=cfg.K,
                                      y_grid=ys, x_hat=xhat[:, k - 1]))
    return maps


def rd_sweep(template, lambdas, train_missing=True, checkpoint_dir=None, progress=None):
    """Train (or load cached) models for each lambda and emit RD rows.

    Returns (model_rows, bound_rows, checkpoint_paths).  Checkpoints are
    cached by a hash of the training-relevant configuration; with
    train_missing=False a missing checkpoint is an error.
    """
    import hashlib
    import os

    from wzsr import checkpoint as ck
    from wzsr import training

    if not lambdas:
        raise ContractError("rd_sweep needs a non-empty lambda list")
    checkpoint_dir = checkpoint_dir or template.out_dir
    os.makedirs(checkpoint_dir, exist_ok=True)
    model_rows = []
    paths = []
    for lam in lambdas:
        cfg_d = template.to_dict()
        cfg_d["lambda"] = float(lam)
        from wzsr.config import RunConfig

        cfg = RunConfig.from_dict(cfg_d)
        key_src = {k: v for k, v in cfg.to_dict().items()
                   if k not in ("out_dir", "eval_samples", "eval_seed")}
        key = hashlib.sha256(repr(sorted(key_src.items())).encode()).hexdigest()[:16]
        path = os.path.join(checkpoint_dir, f"ckpt_{key}.wz")
        if os.path.exists(path):
            reports, _ = evaluate_checkpoint(path, cfg.eval_samples, cfg.eval_seed)
        elif train_missing:
            result = training.train_run(cfg.train_config(), progress=progress)
            ck.from_model(result.model, cfg, epochs_completed=result.epochs_completed,
                          final_tau=result.final_tau).save(path)
            reports = evaluate(result.model, cfg.eval_samples, cfg.eval_seed,
                               noise_variance=cfg.noise_variance)
        else:
            raise ContractError(f"no checkpoint for lambda={lam} at {path} and training disabled")
        paths.append(path)
        model_rows.extend(rd_rows_from_reports(cfg.scenario, cfg.prior_kind, lam, reports))

    max_rate = template.model_config().max_total_rate_bits
    bound_rates = np.linspace(0.0, max(max_rate, 1.0), 25)
    bound_rows = rd_bound_rows(template.scenario, template.noise_variance, bound_rates)
    return model_rows, bound_rows, paths


def prefix_probability_curve(model, prefix, ys, noise_variance,
                             span_sigmas=8.0, scan_points=8192):
    """p(prefix | y) over a y grid for the deterministic encoder.

    Used to pick the y-interval on which a reconstruction map is actually
    exercised (where its prefix has non-negligible probability).
    """
    k = len(prefix)
    sigma_n = math.sqrt(noise_variance)
    sigma_x = math.sqrt(1.0 + noise_variance)
    span = span_sigmas * sigma_x
    xs = np.linspace(-span, span, scan_points)
    codes = mdl.encode_hard(model, xs)[:, :k]
    match = np.all(codes == np.asarray(prefix)[None, :], axis=1)
    change = np.nonzero(np.diff(match.astype(np.int8)) != 0)[0]

    def match_code(pts):
        c = mdl.encode_hard(model, pts)[:, :k]
        return np.all(c == np.asarray(prefix)[None, :], axis=1).astype(np.int64)

    bnds = piecewise.refine_transitions(match_code, xs[change], xs[change + 1],
                                        tol=BINNING_REFINE_TOL)
    from scipy.special import ndtr

    lo = np.concatenate([[-np.inf], bnds])
    hi = np.concatenate([bnds, [np.inf]])
    starts_inside = bool(match[0])
    inside = np.arange(len(lo)) % 2 == (0 if starts_inside else 1)
    ys = np.asarray(ys, dtype=np.float64)
    masses = ndtr((hi[None, :] - ys[:, None]) / sigma_n) - ndtr((lo[None, :] - ys[:, None]) / sigma_n)
    return masses[:, inside].sum(axis=1)


# ---------------------------------------------------------------------------
# CSV serialization (schema shared with the CLI)


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return str(v)


def stage_report_csv(reports, header_comment=None):
    fields = ("stage", "rate_marginal_bits", "rate_conditional_bits", "distortion_mse",
              "distortion_db", "sum_rate_bits", "stderr_rate", "stderr_mse", "n_samples")
    lines = []
    if header_comment:
        lines.append("# " + header_comment)
    lines.append(",".join(fields))
    for r in reports:
        lines.append(",".join(_fmt(getattr(r, f)) for f in fields))
    return "\n".join(lines) + "\n"


RD_FIELDS = ("scenario", "prior_kind", "lambda", "stage", "rate_bits", "sum_rate_bits",
             "mse", "db", "stderr_rate", "stderr_mse")


def rd_rows_from_reports(scenario, prior_kind, lam, reports):
    rows = []
    for r in reports:
        rows.append({
            "scenario": scenario, "prior_kind": prior_kind, "lambda": lam,
            "stage": r.stage, "rate_bits": r.rate_bits, "sum_rate_bits": r.sum_rate_bits,
            "mse": r.distortion_mse, "db": r.distortion_db,
            "stderr_rate": r.stderr_rate, "stderr_mse": r.stderr_mse,
        })
    return rows


def rd_bound_rows(scenario, noise_variance, rates):
    """Analytic overlay rows for the two closed-form curves."""
    from wzsr import bounds

    rows = []
    for label, fn in (("wz_bound", bounds.wz_rate), ("no_side_info", bounds.rate_no_side_info)):
        var = noise_variance if label == "wz_bound" else 1.0 + noise_variance
        for r in np.asarray(rates, dtype=np.float64):
            d = var * 2.0 ** (-2.0 * r)
            rows.append({
                "scenario": scenario, "prior_kind": label, "lambda": "",
                "stage": "", "rate_bits": float(r), "sum_rate_bits": float(r),
                "mse": d, "db": 10.0 * math.log10(d),
                "stderr_rate": "", "stderr_mse": "",
            })
    return rows


def rd_csv(rows, header_comment=None):
    lines = []
    if header_comment:
        lines.append("# " + header_comment)
    lines.append(",".join(RD_FIELDS))
    for row in rows:
        lines.append(",".join(_fmt(row[f]) for f in RD_FIELDS))
    return "\n".join(lines) + "\n"


def binning_csv(binning, header_comment=None):
    """Per-stage rows only (resolution x K); the complete message map is a
    separate file so row counting stays simple."""
    lines = []
    if header_comment:
        lines.append("# " + header_comment)
    lines.append("x,stage,code")
    for k in range(binning.stages):
        for x, c in zip(binning.x_grid, binning.codes[:, k]):
            lines.append(f"{x!r},{k + 1},{c}")
    return "\n".join(lines) + "\n"


def complete_message_csv(binning, header_comment=None):
    lines = []
    if header_comment:
        lines.append("# " + header_comment)
    lines.append("x,m")
    for x, m in zip(binning.x_grid, binning.complete):
        lines.append(f"{x!r},{m}")
    return "\n".join(lines) + "\n"


def reconstruction_csv(maps, header_comment=None):
    lines = []
    if header_comment:
        lines.append("# " + header_comment)
    lines.append("prefix,y,x_hat")
    for m in maps:
        for y, xh in zip(m.y_grid, m.x_hat):
            lines.append(f"{m.prefix_label},{y!r},{xh!r}")
    return "\n".join(lines) + "\n"
