"""Tape engine: op semantics, backward rules against finite differences."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_grad_matches, central_diff_grad, check_op_gradient
from wzsr import autodiff as ad
from wzsr.errors import ContractError, DomainError, NumericError, ShapeError


def naive_matmul(a, b):
    """Triple-loop oracle."""
    m, k = a.shape
    k2, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


class TestMatmul:
    def test_identity(self):
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        out = ad.matmul(ad.tensor(np.eye(2)), ad.tensor(b))
        np.testing.assert_array_equal(out.values, b)

    def test_zero_annihilator(self):
        out = ad.matmul(ad.tensor(np.zeros((2, 2))), ad.tensor([[1.0, 2.0], [3.0, 4.0]]))
        np.testing.assert_array_equal(out.values, np.zeros((2, 2)))

    def test_against_naive_oracle(self, rng):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_allclose(ad.matmul(ad.tensor(a), ad.tensor(b)).values, naive_matmul(a, b))
        np.testing.assert_array_equal(naive_matmul(a, b), [[19.0, 22.0], [43.0, 50.0]])
        for _ in range(20):
            a = rng.standard_normal((rng.integers(1, 5), rng.integers(1, 5)))
            b = rng.standard_normal((a.shape[1], rng.integers(1, 5)))
            np.testing.assert_allclose(
                ad.matmul(ad.tensor(a), ad.tensor(b)).values, naive_matmul(a, b), atol=1e-12
            )

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            ad.matmul(ad.tensor(np.zeros((2, 3))), ad.tensor(np.zeros((2, 2))))


class TestLeakyRelu:
    def test_values(self):
        x = ad.tensor([[1.0, -1.0, 0.0]])
        out = ad.leaky_relu(x, 0.01)
        np.testing.assert_allclose(out.values, [[1.0, -0.01, 0.0]])

    def test_gradient_at_zero_is_slope(self):
        x = ad.parameter([[0.0]])
        ad.backward(ad.sum_all(ad.leaky_relu(x, 0.01)))
        assert x.grad[0, 0] == 0.01

    def test_slope_domain(self):
        with pytest.raises(DomainError):
            ad.leaky_relu(ad.tensor([[1.0]]), 1.5)


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        for m in (2, 3, 7):
            p = ad.softmax(ad.tensor(np.full((1, m), 3.25))).values
            np.testing.assert_allclose(p, np.full((1, m), 1.0 / m), atol=1e-15)

    def test_shift_invariance(self, rng):
        l = rng.standard_normal((4, 5))
        p1 = ad.softmax(ad.tensor(l)).values
        p2 = ad.softmax(ad.tensor(l + 123.456)).values
        np.testing.assert_allclose(p1, p2, atol=1e-12)

    def test_direct_evaluation(self):
        p = ad.softmax(ad.tensor([[0.0, math.log(3.0)]])).values
        np.testing.assert_allclose(p, [[0.25, 0.75]], atol=1e-15)

    def test_nonfinite_rejected(self):
        with pytest.raises(NumericError):
            ad.softmax(ad.tensor([[1.0, np.inf]]))

    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=8))
    @settings(max_examples=200, deadline=None)
    def test_valid_probability_vector(self, logits):
        p = ad.softmax(ad.tensor([logits])).values
        assert np.all(p > 0)
        assert abs(p.sum() - 1.0) <= 1e-12


class TestLogSoftmax:
    def test_uniform(self):
        out = ad.log_softmax(ad.tensor([[2.0, 2.0]])).values
        np.testing.assert_allclose(out, [[-math.log(2.0)] * 2, ], atol=1e-15)

    def test_exp_normalizes(self, rng):
        l = rng.standard_normal((6, 4)) * 10
        out = ad.log_softmax(ad.tensor(l)).values
        np.testing.assert_allclose(np.exp(out).sum(axis=1), 1.0, atol=1e-12)

    def test_direct_evaluation(self):
        out = ad.log_softmax(ad.tensor([[0.0, math.log(3.0)]])).values
        np.testing.assert_allclose(out, [[math.log(0.25), math.log(0.75)]], atol=1e-12)

    def test_matches_log_of_softmax(self, rng):
        l = rng.standard_normal((5, 6)) * 30
        direct = ad.log_softmax(ad.tensor(l)).values
        ratio = np.log(ad.softmax(ad.tensor(l)).values)
        np.testing.assert_allclose(direct, ratio, atol=1e-12)


class TestStopGradient:
    def test_forward_identity(self):
        t = ad.tensor([[1.0, 2.0, 3.0]])
        np.testing.assert_array_equal(ad.stop_gradient(t).values, t.values)

    def test_product_rule_blocked(self):
        x = ad.parameter([[1.0, 2.0, 3.0]])
        loss = ad.sum_all(ad.mul(ad.stop_gradient(x), x))
        ad.backward(loss)
        np.testing.assert_allclose(x.grad, x.values)  # not 2x

    def test_pure_stopgrad_loss_has_zero_grad(self):
        x = ad.parameter([[1.0, 2.0, 3.0]])
        ad.backward(ad.sum_all(ad.stop_gradient(x)))
        np.testing.assert_array_equal(x.grad, np.zeros_like(x.values))

    def test_never_changes_forward_anywhere(self, rng):
        a = rng.standard_normal((3, 4))
        w = rng.standard_normal((4, 2))
        plain = ad.matmul(ad.tensor(a), ad.tensor(w)).values
        stopped = ad.matmul(ad.stop_gradient(ad.parameter(a)), ad.tensor(w)).values
        np.testing.assert_array_equal(plain, stopped)


class TestBackward:
    def test_square(self):
        x = ad.parameter([[3.0]])
        ad.backward(ad.mul(x, x))
        assert x.grad[0, 0] == pytest.approx(6.0)

    def test_scalar_contract(self):
        x = ad.parameter([[1.0, 2.0]])
        with pytest.raises(ContractError):
            ad.backward(ad.mul(x, x))

    def test_softmax_cross_entropy_grad_formula(self, rng):
        # loss = -log_softmax(l)[target]; gradient is softmax(l) - onehot.
        for _ in range(10):
            l = rng.standard_normal((1, 5))
            target = int(rng.integers(0, 5))
            onehot = np.zeros((1, 5))
            onehot[0, target] = 1.0
            lt = ad.parameter(l)
            loss = ad.scale(ad.sum_all(ad.mul(ad.log_softmax(lt), ad.tensor(onehot))), -1.0)
            ad.backward(loss)
            expected = ad.softmax(ad.tensor(l)).values - onehot
            assert_grad_matches(lt.grad, expected, rel_tol=1e-12)

            numeric = central_diff_grad(
                lambda x: -float(ad.log_softmax(ad.tensor(x)).values[0, target]), l.copy()
            )
            assert_grad_matches(lt.grad, numeric)

    def test_gradient_accumulation_over_two_uses(self):
        x = ad.parameter([[1.0, 2.0]])
        y1 = ad.sum_all(ad.mul(x, x))
        y2 = ad.sum_all(x)
        ad.backward(ad.add(y1, y2))
        np.testing.assert_allclose(x.grad, 2 * x.values + 1.0)

    def test_grad_accumulates_across_backward_calls(self):
        x = ad.parameter([[2.0]])
        ad.backward(ad.mul(x, x))
        ad.backward(ad.mul(x, x))
        assert x.grad[0, 0] == pytest.approx(8.0)
        ad.zero_grads([x])
        np.testing.assert_array_equal(x.grad, [[0.0]])


def random_composite_cases(rng, n_cases):
    """Small random graphs touching every differentiable op.

    stop_gradient is deliberately absent: finite differences see through it
    (that is its point), so graphs containing it are checked definitionally
    in TestStopGradient instead.
    """
    cases = []
    for _ in range(n_cases):
        m = int(rng.integers(1, 4))
        k = int(rng.integers(2, 5))
        n = int(rng.integers(2, 5))
        a = rng.standard_normal((m, k))
        w = rng.standard_normal((k, n))
        b = rng.standard_normal((1, n))
        c = rng.standard_normal((m, n))

        def build(at, wt, bt, ct):
            h = ad.rnn_cell_act(ad.matmul(at, wt), None, bt, 0.01)
            s = ad.softmax(h)
            ls = ad.log_softmax(ad.add(h, ct))
            mixed = ad.mul(s, ad.sub(ls, ct))
            cat = ad.concat_cols(mixed, ad.leaky_relu(ct, 0.05))
            sl = ad.slice_cols(cat, 0, cat.shape[1] - 1)
            return ad.add(ad.mean_all(sl), ad.scale(ad.sum_all(ad.sum_cols(ad.mul(ct, ct))), 0.25))

        cases.append((build, [a, w, b, c]))
    return cases


class TestFiniteDifferenceSweep:
    def test_per_op_gradients(self, rng):
        for _ in range(25):
            m, k, n = (int(rng.integers(1, 5)) for _ in range(3))
            a = rng.standard_normal((m, k))
            b = rng.standard_normal((k, n))
            check_op_gradient(lambda x, y: ad.sum_all(ad.matmul(x, y)), [a, b])
            s = rng.standard_normal((m, k))
            check_op_gradient(lambda x, y: ad.mean_all(ad.mul(x, y)), [s.copy(), rng.standard_normal((m, k))])
            check_op_gradient(lambda x: ad.sum_all(ad.leaky_relu(x, 0.01)), [s.copy() + 0.01])
            logits = rng.standard_normal((m, max(k, 2)))
            check_op_gradient(lambda x: ad.mean_all(ad.mul(ad.softmax(x), x)), [logits])
            check_op_gradient(lambda x: ad.mean_all(ad.log_softmax(x)), [logits])
            bias = rng.standard_normal((1, k))
            check_op_gradient(lambda x, y: ad.sum_all(ad.add(x, y)), [s.copy(), bias])

    def test_random_composites(self, rng):
        for build, leaves in random_composite_cases(rng, 30):
            check_op_gradient(build, leaves)
