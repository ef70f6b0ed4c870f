"""Deterministic, seedable sampling: correlated Gaussian pairs and Gumbel noise.

All randomness flows through counter-based Philox generators keyed by
``SeedSequence((root_seed, domain, *path))``, so any (seed, call sequence)
pair reproduces bit-identically, and independent sub-streams (per epoch, per
evaluation shard) can be derived without coordination.

Gaussians are produced by a frozen transform: the inverse standard-normal
CDF (scipy.special.ndtri) applied to Philox uniforms.  Uniform draws are
clamped to [2**-53, 1 - 2**-53] before any log or inverse-CDF call, so no
transform ever sees 0 or 1.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from wzsr.errors import DomainError

U_EPS = 2.0**-53

# Stream domain tags; part of the reproducibility contract.
DOMAIN_INIT = 0
DOMAIN_DATA = 1
DOMAIN_GUMBEL = 2
DOMAIN_EVAL = 3


def make_stream(seed, *path):
    """Philox generator for (seed, *path); identical arguments, identical stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed),) + tuple(int(p) for p in path))))


def uniform_open(rng, shape):
    """Uniforms on the open interval, clamped away from {0, 1}."""
    u = rng.random(shape, dtype=np.float64)
    return np.clip(u, U_EPS, 1.0 - U_EPS)


def standard_normal(rng, shape):
    """N(0,1) draws via inverse-CDF of clamped uniforms."""
    return ndtri(uniform_open(rng, shape))


@dataclass
class SampleBatch:
    """Paired source/side-information realizations with x = y + n."""

    x: np.ndarray
    y: np.ndarray
    noise_variance: float

    @property
    def n(self):
        return self.x.shape[0]


def sample_pair_batch(n, noise_variance, rng):
    """Draw n pairs with y ~ N(0,1) and x = y + N(0, noise_variance)."""
    if n < 1:
        raise DomainError(f"batch size must be >= 1; got {n}")
    if noise_variance < 0:
        raise DomainError(f"noise variance must be >= 0; got {noise_variance}")
    y = standard_normal(rng, n)
    noise = standard_normal(rng, n) * np.sqrt(noise_variance)
    return SampleBatch(x=y + noise, y=y, noise_variance=float(noise_variance))


def sample_gumbel(shape, rng):
    """Standard Gumbel draws: g = -log(-log(u)) on clamped uniforms."""
    u = uniform_open(rng, shape)
    return -np.log(-np.log(u))


def _softmax_rows(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def gumbel_softmax(logits, tau, rng):
    """One draw of softmax((logits + gumbel)/tau); rows are probability vectors."""
    if tau <= 0:
        raise DomainError(f"gumbel_softmax temperature must be > 0; got {tau}")
    logits = np.asarray(logits, dtype=np.float64)
    g = sample_gumbel(logits.shape, rng)
    return _softmax_rows((logits + g) / tau)


def hard_argmax(probs_or_logits):
    """Index of the maximum entry; ties break toward the lowest index.

    1-D input gives an int; 2-D input gives one index per row.
    """
    a = np.asarray(probs_or_logits)
    if a.ndim == 1:
        return int(np.argmax(a))
    return np.argmax(a, axis=-1)
