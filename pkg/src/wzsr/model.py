"""Stacked-RNN coder networks: encoder, decoder, and prior models.

All three families share one recurrence, an Elman cell per layer

    h_k = leaky_relu(in_k @ W_in + h_{k-1} @ W_hh + b),

iterated once per refinement stage with a zero initial hidden state.  The
encoder feeds the source value x at every stage and emits stage logits
through one linear head shared across stages; the decoder feeds (y, message)
and emits a scalar reconstruction; the prior feeds the previous stage's
message (plus y for the conditional variant) and emits stage logits through
per-stage heads.

Forward passes build autodiff graphs; wrap calls in ``autodiff.no_grad()``
for plain-array inference.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from wzsr import autodiff as ad
from wzsr.errors import ContractError, DomainError
from wzsr.sampling import hard_argmax

MARGINAL = "marginal"
CONDITIONAL = "conditional"


@dataclass
class ModelConfig:
    """Architecture knobs: stage count K, alphabet M, stack depth and width."""

    K: int
    M: int
    L: int = 2
    hidden: int = 100
    leaky_slope: float = 0.01
    prior_kind: str = CONDITIONAL

    def __post_init__(self):
        if self.K < 1 or self.M < 2 or self.L < 1 or self.hidden < 1:
            raise DomainError(
                f"need K>=1, M>=2, L>=1, hidden>=1; got K={self.K} M={self.M} "
                f"L={self.L} hidden={self.hidden}"
            )
        if not 0.0 < self.leaky_slope < 1.0:
            raise DomainError(f"leaky_slope must be in (0,1); got {self.leaky_slope}")
        if self.prior_kind not in (MARGINAL, CONDITIONAL):
            raise DomainError(f"prior_kind must be marginal|conditional; got {self.prior_kind!r}")

    @property
    def max_total_rate_bits(self):
        return self.K * math.log2(self.M)


@dataclass
class MessageSet:
    """Per-stage categorical codes, soft (probability rows) or hard (indices)."""

    soft: list | None = None  # K arrays of shape (n, M)
    hard: np.ndarray | None = None  # (n, K) integer codes

    @property
    def is_soft(self):
        return self.soft is not None

    @property
    def stages(self):
        return len(self.soft) if self.is_soft else self.hard.shape[1]

    def validate(self, M):
        if (self.soft is None) == (self.hard is None):
            raise ContractError("MessageSet needs exactly one of soft/hard")
        if self.is_soft:
            for k, s in enumerate(self.soft):
                if s.shape[1] != M:
                    raise ContractError(f"stage {k + 1} message width {s.shape[1]} != M={M}")
                if np.abs(s.sum(axis=1) - 1.0).max() > 1e-9:
                    raise ContractError(f"stage {k + 1} soft messages do not sum to 1")
        else:
            if self.hard.min() < 0 or self.hard.max() >= M:
                raise ContractError(f"hard codes outside 0..{M - 1}")

    def stage_arrays(self, M):
        """Message rows per stage as float arrays (indicators for hard codes)."""
        if self.is_soft:
            return [np.asarray(s, dtype=np.float64) for s in self.soft]
        eye = np.eye(M)
        return [eye[self.hard[:, k]] for k in range(self.stages)]


def _init_linear(rng, fan_in, fan_out):
    a = 1.0 / math.sqrt(fan_in)
    u = rng.random((fan_in, fan_out), dtype=np.float64)
    return (2.0 * u - 1.0) * a


class RnnStack:
    """L Elman layers; layer l feeds layer l+1 at the same stage."""

    def __init__(self, name, in_dim, hidden, L, slope, rng):
        self.in_dim = in_dim
        self.hidden = hidden
        self.L = L
        self.slope = slope
        self.layers = []
        for layer in range(L):
            d = in_dim if layer == 0 else hidden
            w_in = ad.parameter(_init_linear(rng, d, hidden), name=f"{name}.l{layer}.w_in")
            w_hh = ad.parameter(_init_linear(rng, hidden, hidden), name=f"{name}.l{layer}.w_hh")
            b = ad.parameter(np.zeros((1, hidden)), name=f"{name}.l{layer}.b")
            self.layers.append((w_in, w_hh, b))

    def step(self, x_t, hs):
        """One stage: returns the new per-layer hidden states."""
        new_hs = []
        inp = x_t
        for layer, (w_in, w_hh, b) in enumerate(self.layers):
            xw = ad.matmul(inp, w_in)
            hw = None if hs is None else ad.matmul(hs[layer], w_hh)
            h = ad.rnn_cell_act(xw, hw, b, self.slope)
            new_hs.append(h)
            inp = h
        return new_hs

    def parameters(self):
        for w_in, w_hh, b in self.layers:
            yield w_in
            yield w_hh
            yield b


class EncoderNet:
    """Stack over repeated x input, one shared logit head for all stages."""

    def __init__(self, config, rng):
        self.stack = RnnStack("encoder", 1, config.hidden, config.L, config.leaky_slope, rng)
        self.head_w = ad.parameter(_init_linear(rng, config.hidden, config.M), name="encoder.head.w")
        self.head_b = ad.parameter(np.zeros((1, config.M)), name="encoder.head.b")
        self.K = config.K

    def forward_logits(self, x):
        """K stage-logit tensors for a column of source values x (n, 1)."""
        hs = None
        logits = []
        for _ in range(self.K):
            hs = self.stack.step(x, hs)
            logits.append(ad.add(ad.matmul(hs[-1], self.head_w), self.head_b))
        return logits

    def parameters(self):
        yield from self.stack.parameters()
        yield self.head_w
        yield self.head_b


class DecoderNet:
    """Stack over (y, message_k) input, one shared scalar head."""

    def __init__(self, config, rng):
        self.stack = RnnStack("decoder", 1 + config.M, config.hidden, config.L, config.leaky_slope, rng)
        self.head_w = ad.parameter(_init_linear(rng, config.hidden, 1), name="decoder.head.w")
        self.head_b = ad.parameter(np.zeros((1, 1)), name="decoder.head.b")

    def forward(self, y, messages):
        """Reconstruction tensors x_hat_1..x_hat_K; messages are (n, M) tensors."""
        hs = None
        outs = []
        for msg in messages:
            hs = self.stack.step(ad.concat_cols(y, msg), hs)
            outs.append(ad.add(ad.matmul(hs[-1], self.head_w), self.head_b))
        return outs

    def parameters(self):
        yield from self.stack.parameters()
        yield self.head_w
        yield self.head_b


class PriorNet:
    """Stack over the previous stage's message (and y when conditional).

    Stage 1 consumes an all-zero message slot: zeros lie outside the
    indicator-vector vertices, so the start of the recurrence is unambiguous.
    Heads are per-stage linear maps.
    """

    def __init__(self, config, rng):
        self.kind = config.prior_kind
        in_dim = config.M + (1 if self.kind == CONDITIONAL else 0)
        self.stack = RnnStack("prior", in_dim, config.hidden, config.L, config.leaky_slope, rng)
        self.heads = []
        for k in range(config.K):
            w = ad.parameter(_init_linear(rng, config.hidden, config.M), name=f"prior.head{k + 1}.w")
            b = ad.parameter(np.zeros((1, config.M)), name=f"prior.head{k + 1}.b")
            self.heads.append((w, b))
        self.M = config.M

    def forward_logits(self, y, prev_messages):
        """K stage-logit tensors.

        prev_messages[k] is the input consumed at stage k+1, i.e. the stage-k
        message (index 0 is the zero start slot).  y must be given exactly
        for the conditional kind.
        """
        if self.kind == CONDITIONAL and y is None:
            raise ContractError("conditional prior needs side information y")
        if self.kind == MARGINAL and y is not None:
            raise ContractError("marginal prior takes no side information")
        if len(prev_messages) != len(self.heads):
            raise ContractError(
                f"prior got {len(prev_messages)} stage inputs, expected {len(self.heads)}"
            )
        hs = None
        logits = []
        for (w, b), msg in zip(self.heads, prev_messages):
            inp = msg if y is None else ad.concat_cols(y, msg)
            hs = self.stack.step(inp, hs)
            logits.append(ad.add(ad.matmul(hs[-1], w), b))
        return logits

    def parameters(self):
        yield from self.stack.parameters()
        for w, b in self.heads:
            yield w
            yield b


@dataclass
class RefineModel:
    config: ModelConfig
    encoder: EncoderNet
    decoder: DecoderNet
    prior: PriorNet
    extras: dict = field(default_factory=dict)

    def parameters(self):
        yield from self.encoder.parameters()
        yield from self.decoder.parameters()
        yield from self.prior.parameters()

    def named_parameters(self):
        for p in self.parameters():
            yield p.name, p


def init_params(config, rng):
    """Fresh model; weights uniform on +-1/sqrt(fan_in), biases zero.

    Draw order is fixed (encoder, decoder, prior; per layer W_in, W_hh; then
    heads), so a given stream yields bit-identical parameters.
    """
    enc = EncoderNet(config, rng)
    dec = DecoderNet(config, rng)
    prior = PriorNet(config, rng)
    return RefineModel(config=config, encoder=enc, decoder=dec, prior=prior)


# ---------------------------------------------------------------------------
# array-level inference wrappers


def _as_column(x):
    arr = np.asarray(x, dtype=np.float64).reshape(-1, 1)
    if not np.all(np.isfinite(arr)):
        raise ContractError("non-finite inputs")
    return arr


def encode(model, x):
    """Stage probability rows p(m_k | ., x) for a batch of source values."""
    with ad.no_grad():
        logits = model.encoder.forward_logits(ad.tensor(_as_column(x)))
        return [ad.softmax(l).values for l in logits]


def encode_hard(model, x):
    """Deterministic codes argmax_m p(m_k | ., x); shape (n, K)."""
    with ad.no_grad():
        logits = model.encoder.forward_logits(ad.tensor(_as_column(x)))
        return np.stack([hard_argmax(l.values) for l in logits], axis=1)


def decode(model, y, messages):
    """Reconstructions x_hat_k(y, m_1^k); shape (n, K).

    Hard messages are embedded as indicator rows before entering the stack,
    so soft messages equal to indicators decode identically.
    """
    M = model.config.M
    messages.validate(M)
    if messages.stages != model.config.K:
        raise ContractError(f"expected {model.config.K} message stages, got {messages.stages}")
    with ad.no_grad():
        msg_ts = [ad.tensor(a) for a in messages.stage_arrays(M)]
        outs = model.decoder.forward(ad.tensor(_as_column(y)), msg_ts)
        return np.concatenate([o.values for o in outs], axis=1)


def prior_inputs_from_messages(stage_arrays, M, n):
    """Shift messages one stage: prior stage k consumes message k-1."""
    zeros = np.zeros((n, M))
    return [zeros] + list(stage_arrays[:-1])


def prior_forward(model, y, messages):
    """Stage probability rows q(m_k | m_1^{k-1}[, y]) for given messages."""
    M = model.config.M
    messages.validate(M)
    if messages.stages != model.config.K:
        raise ContractError(f"expected {model.config.K} message stages, got {messages.stages}")
    arrays = messages.stage_arrays(M)
    n = arrays[0].shape[0]
    with ad.no_grad():
        prev = [ad.tensor(a) for a in prior_inputs_from_messages(arrays, M, n)]
        y_t = None if y is None else ad.tensor(_as_column(y))
        logits = model.prior.forward_logits(y_t, prev)
        return [ad.softmax(l).values for l in logits]
