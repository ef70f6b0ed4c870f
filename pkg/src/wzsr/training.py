"""End-to-end training loop: Adam, staged learning-rate decay, temperature
annealing, fresh samples every epoch.

Determinism contract: given (config, seed) the run is bit-exact, including
the training log.  Data and Gumbel noise come from per-epoch sub-streams of
the root seed, parameter initialization from its own stream, and every
reduction happens in a fixed order.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from wzsr import autodiff as ad
from wzsr import model as mdl
from wzsr import objective, sampling
from wzsr.errors import ConfigError, TrainingDiverged

log = logging.getLogger("wzsr.training")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    model: mdl.ModelConfig
    lam: float
    noise_variance: float
    seed: int = 0
    epochs: int = 180
    samples_per_epoch: int = 200_000
    batch_size: int = 1000
    lr_initial: float = 1e-3
    lr_decay_factor: float = 0.3
    lr_decay_every: int | None = None  # None -> 80 marginal / 40 conditional
    tau_start: float = 1.0
    tau_end: float = 0.2
    grad_clip: float | None = None

    def __post_init__(self):
        if self.lr_decay_every is None:
            self.lr_decay_every = 40 if self.model.prior_kind == mdl.CONDITIONAL else 80
        if self.samples_per_epoch % self.batch_size != 0:
            raise ConfigError(
                f"batch_size {self.batch_size} must divide samples_per_epoch "
                f"{self.samples_per_epoch}"
            )
        if not 0.0 < self.tau_end <= self.tau_start:
            raise ConfigError(f"need 0 < tau_end <= tau_start; got {self.tau_end}, {self.tau_start}")
        if self.epochs < 1 or self.lam < 0 or self.noise_variance < 0:
            raise ConfigError("epochs >= 1, lambda >= 0, noise_variance >= 0 required")


def lr_at(epoch, config):
    """lr_initial * decay_factor^floor(epoch / decay_every)."""
    return config.lr_initial * config.lr_decay_factor ** (epoch // config.lr_decay_every)


def tau_at(epoch, config):
    """Geometric interpolation from tau_start (epoch 0) to tau_end (last epoch)."""
    if config.epochs == 1:
        return config.tau_start
    frac = epoch / (config.epochs - 1)
    return config.tau_start * (config.tau_end / config.tau_start) ** frac


class Adam:
    """Standard Adam with bias correction over a fixed parameter list."""

    def __init__(self, params, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.params = list(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.values) for p in self.params]
        self.v = [np.zeros_like(p.values) for p in self.params]

    def step(self, lr):
        from wzsr import backend

        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            backend.adam_step(p.values, p.grad, m, v, c1, c2, lr, self.beta1, self.beta2, self.eps)


def clip_gradients(params, max_norm):
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = 0.0
    for p in params:
        total += float((p.grad * p.grad).sum())
    norm = math.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for p in params:
            p.grad *= factor
        return norm
    return None


@dataclass
class TrainResult:
    model: mdl.RefineModel
    log_rows: list = field(default_factory=list)
    final_tau: float = 0.0
    epochs_completed: int = 0


def _snapshot(params):
    return [p.values.copy() for p in params]


def _restore(params, snap):
    for p, s in zip(params, snap):
        p.values[...] = s


def train_run(config, progress=None):
    """Train a fresh model under the given config.

    Returns a TrainResult with one log row per (epoch, stage):
    (epoch, tau, lr, stage, rate_term_bits, mse, total_loss), all values
    epoch averages.  On non-finite loss or gradients the run aborts with
    TrainingDiverged carrying the parameters of the last completed epoch.
    """
    cfg = config
    model = mdl.init_params(cfg.model, sampling.make_stream(cfg.seed, sampling.DOMAIN_INIT))
    params = list(model.parameters())
    opt = Adam(params)
    n_batches = cfg.samples_per_epoch // cfg.batch_size
    K = cfg.model.K
    rows = []
    last_good = _snapshot(params)

    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        tau = tau_at(epoch, cfg)
        data_rng = sampling.make_stream(cfg.seed, sampling.DOMAIN_DATA, epoch)
        noise_rng = sampling.make_stream(cfg.seed, sampling.DOMAIN_GUMBEL, epoch)
        rate_sum = np.zeros(K)
        mse_sum = np.zeros(K)
        loss_sum = 0.0

        for _ in range(n_batches):
            batch = sampling.sample_pair_batch(cfg.batch_size, cfg.noise_variance, data_rng)
            loss, breakdown = objective.training_loss(model, batch, tau, cfg.lam, noise_rng)
            if not math.isfinite(breakdown.total):
                _restore(params, last_good)
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}", epoch=epoch, model=model, log_rows=rows
                )
            ad.zero_grads(params)
            ad.backward(loss)
            for p in params:
                if not np.all(np.isfinite(p.grad)):
                    _restore(params, last_good)
                    raise TrainingDiverged(
                        f"non-finite gradient in {p.name!r} at epoch {epoch}",
                        epoch=epoch, model=model, log_rows=rows,
                    )
            if cfg.grad_clip is not None:
                clipped = clip_gradients(params, cfg.grad_clip)
                if clipped is not None:
                    log.info("epoch %d: clipped gradient norm %.3g -> %.3g", epoch, clipped, cfg.grad_clip)
            opt.step(lr)
            for k, st in enumerate(breakdown.stages):
                rate_sum[k] += st.rate_term_bits
                mse_sum[k] += st.distortion
            loss_sum += breakdown.total

        for k in range(K):
            rows.append({
                "epoch": epoch,
                "tau": tau,
                "lr": lr,
                "stage": k + 1,
                "rate_term_bits": rate_sum[k] / n_batches,
                "mse": mse_sum[k] / n_batches,
                "total_loss": loss_sum / n_batches,
            })
        last_good = _snapshot(params)
        if progress is not None:
            progress(epoch, rows[-K:])

    return TrainResult(
        model=model,
        log_rows=rows,
        final_tau=tau_at(cfg.epochs - 1, cfg),
        epochs_completed=cfg.epochs,
    )


TRAIN_LOG_FIELDS = ("epoch", "tau", "lr", "stage", "rate_term_bits", "mse", "total_loss")


def format_train_log(rows, header_comment=None):
    """Training log CSV text with an optional leading comment line."""
    lines = []
    if header_comment:
        lines.append("# " + header_comment)
    lines.append(",".join(TRAIN_LOG_FIELDS))
    for r in rows:
        lines.append(",".join(repr(r[f]) if isinstance(r[f], float) else str(r[f])
                              for f in TRAIN_LOG_FIELDS))
    return "\n".join(lines) + "\n"
