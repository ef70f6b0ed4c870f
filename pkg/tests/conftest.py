import numpy as np
import pytest

from wzsr import autodiff as ad


def central_diff_grad(f, x, step=1e-6):
    """Central finite differences of a scalar function of a flat array."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = f(x)
        flat[i] = orig - step
        fm = f(x)
        flat[i] = orig
        g.ravel()[i] = (fp - fm) / (2.0 * step)
    return g


def assert_grad_matches(analytic, numeric, rel_tol=1e-5):
    """max |a - n| relative to the gradient scale, floored at 1."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    scale = max(1.0, float(np.max(np.abs(numeric))), float(np.max(np.abs(analytic))))
    err = float(np.max(np.abs(analytic - numeric))) / scale
    assert err < rel_tol, f"gradient mismatch: relative error {err:.3e}"


def check_op_gradient(build_loss, leaves, rel_tol=1e-5, step=1e-6):
    """Compare tape gradients of loss = build_loss(*leaf tensors) with FD.

    ``leaves`` are numpy arrays; every one is treated as a parameter.
    """
    params = [ad.parameter(a) for a in leaves]
    loss = build_loss(*params)
    ad.zero_grads(params)
    ad.backward(loss)
    for idx, p in enumerate(params):
        def f(x, idx=idx):
            vals = [q.values if j != idx else x for j, q in enumerate(params)]
            ps = [ad.tensor(v) for v in vals]
            return build_loss(*ps).item()

        numeric = central_diff_grad(f, p.values.copy(), step=step)
        assert_grad_matches(p.grad, numeric, rel_tol=rel_tol)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
