"""Pure-numpy implementations of the hot elementwise kernels.

This is the fallback lane used when the compiled extension is absent.  The
compiled lane in ``_kernels.pyx`` performs the *same* floating-point
operations in the *same* order (and is built with -ffp-contract=off), so the
two lanes produce bit-identical results; ``tests/test_backends.py`` asserts
exact equality.  Reductions over the batch axis and all matrix products stay
in numpy in both lanes.
"""

import numpy as np

NAME = "python"


def leaky_fwd(x, slope):
    """Elementwise max(x, slope*x) == x if x > 0 else slope*x (slope in (0,1))."""
    return np.maximum(x, slope * x)


def leaky_bwd(g, ref, slope):
    """Gradient of the leaky activation: g where ref > 0 else slope*g.

    ``ref`` may be the activation input or its output: the slope is
    positive, so both have the same sign (and the convention at exactly 0
    is the slope either way).
    """
    return np.where(ref > 0.0, g, slope * g)


def cell_fwd(xw, hw, b, slope):
    """Fused RNN-cell activation: leaky((xw + hw) + b).

    hw may be None for the first step, where the previous hidden state is
    the zero vector.  The backward mask is recovered from the sign of the
    output, so no pre-activation needs to be stored.
    """
    if hw is None:
        z = xw + b
    else:
        z = (xw + hw) + b
    return np.maximum(z, slope * z)


def adam_step(p, g, m, v, c1, c2, lr, b1, b2, eps):
    """One fused Adam update, in place on p, m, v.

    c1 = 1 - b1**t and c2 = 1 - b2**t are the bias corrections, computed by
    the caller.  Per element:

        m = b1*m + (1-b1)*g
        v = b2*v + (1-b2)*(g*g)
        p -= (lr * (m/c1)) / (sqrt(v/c2) + eps)
    """
    m *= b1
    m += (1.0 - b1) * g
    v *= b2
    v += (1.0 - b2) * (g * g)
    den = np.sqrt(v / c2)
    den += eps
    upd = lr * (m / c1)
    upd /= den
    p -= upd
