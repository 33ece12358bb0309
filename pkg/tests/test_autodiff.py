import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kernelcal import autodiff as ad
from kernelcal.autodiff import Dual, constant, dual_arith, dual_unary, grad_check, lift_param
from kernelcal.exceptions import DomainError

finite = st.floats(-50, 50, allow_nan=False)
positive = st.floats(0.05, 50)


def scalar(v, g):
    return Dual(np.asarray(float(v)), np.asarray(g, dtype=float))


def fd(f, x, h=1e-6):
    return (f(x + h) - f(x - h)) / (2 * h)


class TestLift:
    def test_one_dim(self):
        d = lift_param((1.2,))
        np.testing.assert_array_equal(d.value, [1.2])
        np.testing.assert_array_equal(d.grad, [[1.0]])

    def test_two_dim(self):
        d = lift_param((2.5, 1.0))
        np.testing.assert_array_equal(d[0].grad, [1.0, 0.0])
        np.testing.assert_array_equal(d[1].grad, [0.0, 1.0])

    def test_empty(self):
        d = lift_param(())
        assert d.value.shape == (0,)
        assert len(d) == 0


class TestArithmetic:
    def test_product_rule(self):
        r = dual_arith(scalar(3, [1]), scalar(2, [0]), "mul")
        assert float(r.value) == 6 and r.grad.tolist() == [2.0]

    def test_quotient_rule(self):
        r = dual_arith(scalar(4, [1]), scalar(2, [0]), "div")
        assert float(r.value) == 2 and r.grad.tolist() == [0.5]

    def test_self_cancellation(self):
        x = scalar(1.7, [1])
        r = dual_arith(x, x, "sub")
        assert float(r.value) == 0 and r.grad.tolist() == [0.0]

    def test_division_by_zero(self):
        with pytest.raises(DomainError):
            dual_arith(scalar(1, [1]), scalar(0, [1]), "div")
        with pytest.raises(DomainError):
            scalar(1, [1]) / 0.0
        with pytest.raises(DomainError):
            2.0 / scalar(0, [1])

    def test_unknown_op(self):
        with pytest.raises(ValueError):
            dual_arith(scalar(1, [1]), scalar(1, [1]), "pow")

    def test_broadcast_constant(self):
        x = lift_param((2.0,))
        y = x + np.array([1.0, 2.0, 3.0])
        assert y.value.shape == (3,) and y.grad.shape == (3, 1)
        np.testing.assert_array_equal(y.grad, np.ones((3, 1)))

    def test_numpy_on_left_defers(self):
        x = lift_param((2.0,))
        y = np.array([1.0, 2.0]) * x
        assert isinstance(y, Dual)
        np.testing.assert_array_equal(y.grad[:, 0], [1.0, 2.0])

    @given(finite, finite, finite, finite)
    def test_binary_matches_fd(self, a, b, ga, gb):
        x, y = scalar(a, [ga]), scalar(b, [gb])
        for op, f in [("add", np.add), ("sub", np.subtract), ("mul", np.multiply)]:
            r = dual_arith(x, y, op)
            assert float(r.value) == pytest.approx(f(a, b))
            expected = fd(lambda t: f(a + ga * t, b + gb * t), 0.0)
            assert r.grad[0] == pytest.approx(expected, rel=1e-5, abs=1e-5)

    @given(finite, positive)
    def test_division_matches_fd(self, a, b):
        r = dual_arith(scalar(a, [1.0]), scalar(b, [-0.5]), "div")
        expected = fd(lambda t: (a + t) / (b - 0.5 * t), 0.0, 1e-7)
        assert r.grad[0] == pytest.approx(expected, rel=1e-5, abs=1e-6)


class TestUnary:
    def test_relu(self):
        r = dual_unary(scalar(-1, [1]), "relu")
        assert float(r.value) == 0 and r.grad.tolist() == [0.0]
        r = dual_unary(scalar(2, [1]), "relu")
        assert float(r.value) == 2 and r.grad.tolist() == [1.0]

    def test_abs_smooth_zero_eps(self):
        r = dual_unary(scalar(3, [1]), "abs_smooth", 0.0)
        assert float(r.value) == 3 and r.grad.tolist() == [1.0]
        r = dual_unary(scalar(0, [1]), "abs_smooth", 0.0)
        assert float(r.value) == 0 and r.grad.tolist() == [0.0]

    @pytest.mark.parametrize("op, x", [("ln", 0.0), ("ln", -1.0), ("sqrt", -1.0)])
    def test_domain_errors(self, op, x):
        with pytest.raises(DomainError):
            dual_unary(scalar(x, [1]), op)

    def test_pow_const_domain(self):
        with pytest.raises(DomainError):
            dual_unary(scalar(-2, [1]), "pow_const", 0.5)
        r = dual_unary(scalar(-2, [1]), "pow_const", 3)
        assert float(r.value) == -8 and r.grad.tolist() == [12.0]

    def test_abs_smooth_negative_eps(self):
        with pytest.raises(DomainError):
            dual_unary(scalar(1, [1]), "abs_smooth", -1.0)

    @pytest.mark.parametrize(
        "op, arg, f",
        [
            ("neg", None, np.negative),
            ("exp", None, np.exp),
            ("ln", None, np.log),
            ("sqrt", None, np.sqrt),
            ("abs_smooth", 0.3, lambda x: np.sqrt(x * x + 0.3)),
            ("pow_const", 1.7, lambda x: x**1.7),
        ],
    )
    @settings(max_examples=40)
    @given(x=st.floats(0.1, 3.0))
    def test_chain_rule_matches_fd(self, op, arg, f, x):
        r = dual_unary(scalar(x, [2.0]), op, arg)
        assert float(r.value) == pytest.approx(f(x), rel=1e-12)
        assert r.grad[0] == pytest.approx(2.0 * fd(f, x), rel=1e-6)


class TestReductions:
    def test_sum_and_mean(self):
        x = lift_param((1.0, 2.0))
        v = x * x
        s = v.sum()
        assert float(s.value) == 5.0
        np.testing.assert_array_equal(s.grad, [2.0, 4.0])
        np.testing.assert_array_equal(v.mean().grad, [1.0, 2.0])

    def test_reshape_keeps_grad(self):
        x = lift_param((1.0, 2.0)) + np.zeros((3, 2))
        r = x.reshape(6)
        assert r.grad.shape == (6, 2)


class TestGradCheck:
    def test_polynomial(self):
        assert grad_check(lambda t: (t * t)[0], 3.0, 1e-5) <= 1e-8

    def test_relu_smooth_region(self):
        assert grad_check(lambda t: ad.relu(t - 1.0)[0], 2.0, 1e-5) <= 1e-8

    def test_detects_wrong_gradient(self):
        def wrong(t):
            out = t * t
            return Dual(out.value[0], 3.0 * out.grad[0])

        assert grad_check(wrong, 1.0) > 0.1

    def test_propagates_errors(self):
        with pytest.raises(DomainError):
            grad_check(lambda t: ad.log(t - 5.0)[0], 1.0)

    def test_constant_has_zero_grad(self):
        c = constant([1.0, 2.0], 3)
        assert c.grad.shape == (2, 3) and not c.grad.any()
