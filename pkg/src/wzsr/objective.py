"""Variational training losses and inference-time rate estimators.

The per-stage training loss is  rate_k + lambda * distortion_k, where the
rate term is the exact expectation over the stage-k categories of
log2 p(m_k|.,x) - log2 q(m_k|...), conditioned on the sampled message path
of the earlier stages, and the distortion is the batch MSE.  Taking the
exact expectation over m_k (a sum over M categories) instead of plugging in
the sampled code gives a lower-variance estimator at no cost for small M.

At inference the encoder is deterministic (argmax codes) and the coding
rates are cross-entropies of the realized codes under the prior models:
marginal prior -> ideal entropy coder rate, conditional prior -> ideal
Slepian-Wolf rate.  Prior probabilities are clamped to >= PROB_CLAMP before
any log, so unvisited codes cost at most -log2(PROB_CLAMP) bits.
"""

import math
from dataclasses import dataclass

import numpy as np

from wzsr import autodiff as ad
from wzsr import model as mdl
from wzsr.errors import ContractError
from wzsr.sampling import sample_gumbel

LN2 = math.log(2.0)
PROB_CLAMP = 1e-9


def stage_rate_term(enc_probs, prior_probs):
    """Exact per-sample rate in bits: sum_m p[m] (log2 p[m] - log2 q[m]).

    Accepts single probability vectors or matching (n, M) row batches; prior
    entries are clamped to PROB_CLAMP, and 0*log 0 := 0 on the encoder side.
    """
    p = np.asarray(enc_probs, dtype=np.float64)
    q = np.asarray(prior_probs, dtype=np.float64)
    if p.shape != q.shape:
        raise ContractError(f"probability shapes disagree: {p.shape} vs {q.shape}")
    q = np.maximum(q, PROB_CLAMP)
    logp = np.where(p > 0.0, np.log2(np.maximum(p, PROB_CLAMP)), 0.0)
    terms = p * (logp - np.log2(q))
    out = terms.sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def distortion_mse(x, x_hat):
    """Mean of (x_i - x_hat_i)^2."""
    x = np.asarray(x, dtype=np.float64).ravel()
    x_hat = np.asarray(x_hat, dtype=np.float64).ravel()
    if x.size == 0:
        raise ContractError("distortion of an empty batch")
    if x.shape != x_hat.shape:
        raise ContractError(f"batch lengths disagree: {x.shape} vs {x_hat.shape}")
    d = x - x_hat
    return float(np.mean(d * d))


@dataclass
class StageLoss:
    rate_term_bits: float
    distortion: float
    combined: float


@dataclass
class LossBreakdown:
    stages: list
    lam: float
    total: float


def rate_term_node(enc_logits, prior_logits):
    """Graph node (1, 1): batch-mean bits of the exact stage rate term."""
    p = ad.softmax(enc_logits)
    lp = ad.log_softmax(enc_logits)
    lq = ad.log_softmax(prior_logits)
    per_row = ad.sum_cols(ad.mul(p, ad.sub(lp, lq)))
    return ad.scale(ad.mean_all(per_row), 1.0 / LN2)


def distortion_node(x, x_hat):
    """Graph node (1, 1): batch MSE."""
    d = ad.sub(x, x_hat)
    return ad.mean_all(ad.mul(d, d))


def total_loss(rate_nodes, distortion_nodes, lam):
    """Sum over stages of rate + lambda * distortion, plus the breakdown."""
    if not rate_nodes or len(rate_nodes) != len(distortion_nodes):
        raise ContractError("need one rate and one distortion node per stage")
    stages = []
    total = None
    for r, d in zip(rate_nodes, distortion_nodes):
        combined = ad.add(r, ad.scale(d, lam))
        total = combined if total is None else ad.add(total, combined)
        stages.append(StageLoss(r.item(), d.item(), combined.item()))
    return total, LossBreakdown(stages=stages, lam=float(lam), total=total.item())


def training_loss(model, batch, tau, lam, noise_rng):
    """Assemble the end-to-end loss graph for one batch.

    Encoder logits -> Gumbel-softmax soft messages at temperature tau ->
    decoder on the soft messages, prior on stop_gradient of them -> summed
    stage losses.  Gumbel noise is drawn from noise_rng stage by stage.
    """
    cfg = model.config
    n = batch.n
    x = ad.tensor(batch.x.reshape(n, 1))
    y = ad.tensor(batch.y.reshape(n, 1))

    enc_logits = model.encoder.forward_logits(x)
    messages = []
    for logits in enc_logits:
        g = ad.tensor(sample_gumbel((n, cfg.M), noise_rng))
        messages.append(ad.softmax(ad.scale(ad.add(logits, g), 1.0 / tau)))

    x_hats = model.decoder.forward(y, messages)

    blocked = [ad.stop_gradient(m) for m in messages]
    zeros = ad.tensor(np.zeros((n, cfg.M)))
    prior_y = y if cfg.prior_kind == mdl.CONDITIONAL else None
    prior_logits = model.prior.forward_logits(prior_y, [zeros] + blocked[:-1])

    rate_nodes = [rate_term_node(el, pl) for el, pl in zip(enc_logits, prior_logits)]
    dist_nodes = [distortion_node(x, xh) for xh in x_hats]
    return total_loss(rate_nodes, dist_nodes, lam)


def training_rate_bits_hard(model, batch):
    """Exact-expectation stage rates with hard (indicator) message inputs.

    The tau -> 0 limit of the training rate term on a frozen model; used to
    check consistency with the inference estimators.
    """
    cfg = model.config
    codes = mdl.encode_hard(model, batch.x)
    probs = mdl.encode(model, batch.x)
    msgs = mdl.MessageSet(hard=codes)
    prior_y = batch.y if cfg.prior_kind == mdl.CONDITIONAL else None
    q = mdl.prior_forward(model, prior_y, msgs)
    return [float(np.mean(stage_rate_term(probs[k], q[k]))) for k in range(cfg.K)]


# ---------------------------------------------------------------------------
# inference-time rate estimators


def _selected_bits(q_rows, codes_k):
    """-log2 q[realized code] per sample, clamped."""
    sel = q_rows[np.arange(q_rows.shape[0]), codes_k]
    return -np.log2(np.maximum(sel, PROB_CLAMP))


def estimate_rate_marginal(model, batches):
    """Eq.-style cross-entropy rate per stage under the marginal prior model."""
    if model.config.prior_kind != mdl.MARGINAL:
        raise ContractError("model has no marginal prior")
    return _estimate_rates(model, batches, use_y=False)


def estimate_rate_conditional(model, batches):
    """Cross-entropy rate per stage under the conditional prior model."""
    if model.config.prior_kind != mdl.CONDITIONAL:
        raise ContractError("model has no conditional prior")
    return _estimate_rates(model, batches, use_y=True)


def _estimate_rates(model, batches, use_y):
    K = model.config.K
    sums = np.zeros(K)
    count = 0
    for batch in batches:
        codes = mdl.encode_hard(model, batch.x)
        q = mdl.prior_forward(model, batch.y if use_y else None, mdl.MessageSet(hard=codes))
        for k in range(K):
            sums[k] += _selected_bits(q[k], codes[:, k]).sum()
        count += batch.n
    return sums / count


class PrefixCounter:
    """Joint counts of (stage-prefix, code) for the plug-in marginal rate.

    The empirical estimate of the ideal entropy-coder rate H(M_k | M_1^{k-1})
    for models trained with a conditional prior, which have no learned
    marginal model.
    """

    def __init__(self, K, M):
        self.K = K
        self.M = M
        self.counts = [np.zeros((M**k, M), dtype=np.int64) for k in range(K)]

    def update(self, codes):
        n, K = codes.shape
        prefix = np.zeros(n, dtype=np.int64)
        for k in range(K):
            np.add.at(self.counts[k], (prefix, codes[:, k]), 1)
            prefix = prefix * self.M + codes[:, k]

    def rates_bits(self):
        """Per-stage plug-in rate and the per-sample variance of -log2 p_hat."""
        rates = np.zeros(self.K)
        variances = np.zeros(self.K)
        for k, joint in enumerate(self.counts):
            total = joint.sum()
            prefix_tot = joint.sum(axis=1, keepdims=True)
            with np.errstate(divide="ignore", invalid="ignore"):
                cond = np.where(prefix_tot > 0, joint / np.maximum(prefix_tot, 1), 0.0)
                bits = -np.log2(np.maximum(cond, PROB_CLAMP))
            w = joint / total
            mean = float((w * np.where(joint > 0, bits, 0.0)).sum())
            second = float((w * np.where(joint > 0, bits * bits, 0.0)).sum())
            rates[k] = mean
            variances[k] = max(second - mean * mean, 0.0)
        return rates, variances
