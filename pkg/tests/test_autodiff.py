"""Tape ops, backward rules, the finite-difference oracle, and Adam."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stagnn import autodiff as ad
from stagnn.errors import NumericsError, ShapeError
from stagnn.optim import AdamState, adam_step


@pytest.fixture(autouse=True)
def finite_checks():
    ad.set_finite_checks(True)
    yield
    ad.set_finite_checks(False)


def rand_param(rng, shape, name=""):
    return ad.parameter(rng.normal(size=shape), name=name)


class TestForwardValues:
    def test_matmul_identity(self):
        out = ad.matmul(ad.constant([[1, 0], [0, 1]]), ad.constant([[2], [3]]))
        np.testing.assert_array_equal(out.value, [[2], [3]])

    def test_matmul_zeros(self):
        out = ad.matmul(ad.constant(np.zeros((2, 3))), ad.constant(np.ones((3, 4))))
        assert np.all(out.value == 0)

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError):
            ad.matmul(ad.constant(np.ones((2, 3))), ad.constant(np.ones((2, 3))))

    def test_row_softmax_uniform(self):
        out = ad.row_softmax(ad.constant([[0.0, 0.0]]))
        np.testing.assert_allclose(out.value, [[0.5, 0.5]])

    def test_relu(self):
        out = ad.relu(ad.constant([[-1.0, 2.0]]))
        np.testing.assert_array_equal(out.value, [[0.0, 2.0]])

    def test_elu_plus_one_values(self):
        out = ad.elu_plus_one(ad.constant([[0.0, 1.0, -1.0]]))
        np.testing.assert_allclose(out.value, [[1.0, 2.0, math.exp(-1.0)]])

    def test_dropout_p0_identity(self):
        x = ad.constant([[1.0, -2.0]])
        assert ad.dropout(x, 0.0, training=True, rng=np.random.default_rng(0)) is x

    def test_dropout_eval_identity(self):
        x = ad.constant([[1.0, -2.0]])
        assert ad.dropout(x, 0.5, training=False) is x

    def test_dropout_scales_survivors(self):
        rng = np.random.default_rng(3)
        x = ad.constant(np.ones((100, 100)))
        out = ad.dropout(x, 0.25, training=True, rng=rng)
        nonzero = out.value[out.value != 0]
        np.testing.assert_allclose(nonzero, 1.0 / 0.75)

    def test_dropout_rejects_bad_p(self):
        with pytest.raises(ShapeError):
            ad.dropout(ad.constant([[1.0]]), 1.0, training=True,
                       rng=np.random.default_rng(0))

    @given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_softmax_rows_sum_to_one(self, n, c, seed):
        rng = np.random.default_rng(seed)
        out = ad.row_softmax(ad.constant(rng.normal(size=(n, c)) * 5))
        np.testing.assert_allclose(out.value.sum(axis=1), 1.0, atol=1e-12)

    def test_finite_guard_trips(self):
        big = ad.constant(np.full((1, 1), 1e308))
        with np.errstate(over="ignore"), pytest.raises(NumericsError):
            ad.matmul(big, ad.constant([[1e308]]))


class TestCrossEntropy:
    def test_confident_correct(self):
        loss = ad.cross_entropy_loss(
            ad.constant([[10.0, -10.0]]), np.array([0]), np.array([0]))
        assert loss.value[0, 0] < 1e-4

    def test_even_logits(self):
        loss = ad.cross_entropy_loss(
            ad.constant([[0.0, 0.0]]), np.array([0]), np.array([0]))
        assert abs(loss.value[0, 0] - math.log(2)) < 1e-12

    @pytest.mark.parametrize("c", [2, 3, 7])
    def test_uniform_logits_log_c(self, c):
        logits = ad.constant(np.zeros((4, c)))
        loss = ad.cross_entropy_loss(
            logits, np.zeros(4, dtype=int), np.arange(4))
        assert abs(loss.value[0, 0] - math.log(c)) < 1e-12

    def test_empty_mask_rejected(self):
        with pytest.raises(ShapeError):
            ad.cross_entropy_loss(
                ad.constant([[0.0, 0.0]]), np.array([0]), np.array([], dtype=int))

    def test_bad_labels_rejected(self):
        with pytest.raises(ShapeError):
            ad.cross_entropy_loss(
                ad.constant([[0.0, 0.0]]), np.array([5]), np.array([0]))


class TestBackward:
    def test_identity_grad_one(self):
        x = ad.parameter([[3.0]])
        ad.backward(x)
        np.testing.assert_array_equal(x.grad, [[1.0]])

    def test_constant_gets_no_grad(self):
        x = ad.parameter([[2.0]])
        c = ad.constant([[5.0]])
        out = ad.matmul(x, c)
        ad.backward(out)
        np.testing.assert_array_equal(x.grad, [[5.0]])
        assert c.grad is None

    def test_matmul_hand_chain_rule(self):
        a = ad.parameter([[1.0, 2.0]])
        b = ad.parameter([[3.0], [4.0]])
        ad.backward(ad.sum_all(ad.matmul(a, b)))
        np.testing.assert_array_equal(a.grad, [[3.0, 4.0]])
        np.testing.assert_array_equal(b.grad, [[1.0], [2.0]])

    def test_reuse_accumulates(self):
        x = ad.parameter([[2.0]])
        out = ad.add(ad.mul_scalar(x, 3.0), ad.mul_scalar(x, 4.0))
        ad.backward(out)
        np.testing.assert_array_equal(x.grad, [[7.0]])

    def test_double_backward_is_error(self):
        x = ad.parameter([[1.0]])
        out = ad.mul_scalar(x, 2.0)
        ad.backward(out)
        with pytest.raises(NumericsError):
            ad.backward(out)

    def test_non_scalar_root_rejected(self):
        with pytest.raises(ShapeError):
            ad.backward(ad.parameter([[1.0, 2.0]]))

    def test_linear_exact(self):
        x = ad.parameter([[7.0]])
        ad.backward(ad.mul_scalar(x, 5.0))
        assert x.grad[0, 0] == 5.0

    def test_unreached_parameter_grad_stays_zero(self):
        theta = ad.parameter([[1.0, 2.0]])
        loss = ad.sum_all(ad.constant([[4.0]]))
        ad.backward(loss)
        np.testing.assert_array_equal(theta.grad, [[0.0, 0.0]])


class TestGradientCheck:
    """Central differences are the oracle for every op's backward rule."""

    def test_quadratic(self):
        theta = ad.parameter([[3.0]])

        def f():
            return ad.matmul(theta, theta)

        assert ad.gradient_check(f, [theta], h=1e-5) < 1e-8

    def test_linear_machine_precision(self):
        # power-of-two step: theta +- h and the scaled difference are all
        # exactly representable, so the central difference is exact
        theta = ad.parameter([[2.0]])

        def f():
            return ad.mul_scalar(theta, 5.0)

        assert ad.gradient_check(f, [theta], h=2.0 ** -17) < 1e-14

    @pytest.mark.parametrize(
        "op_name",
        ["matmul", "matmul_at", "transpose", "add", "add_bias", "scale",
         "mul_cols", "div", "div_bcast", "relu", "elu_plus_one", "row_softmax",
         "concat", "slice", "entry", "row_outer", "row_contract", "row_dot",
         "add_scalar", "mul_scalar"],
    )
    def test_each_op(self, op_name):
        rng = np.random.default_rng(hash(op_name) % 2**32)
        a = rand_param(rng, (4, 3), "a")
        w = ad.constant(rng.normal(size=(3, 2)))

        def scalarize(node):
            # weight by a fixed random matrix so softmax-like ops see
            # non-constant upstream gradients
            weights = ad.constant(
                np.random.default_rng(0).normal(size=node.shape))
            return ad.sum_all(ad.row_dot(node, weights)) if node.shape[1] > 1 \
                else ad.sum_all(ad.mul_cols(node, node))

        builders = {
            "matmul": lambda: ad.matmul(a, w),
            "matmul_at": lambda: ad.matmul_at(a, b4),
            "transpose": lambda: ad.transpose(a),
            "add": lambda: ad.add(a, ad.mul_scalar(a, 0.5)),
            "add_bias": lambda: ad.add_bias(a, b_bias),
            "scale": lambda: ad.scale(a, s11),
            "mul_cols": lambda: ad.mul_cols(a, col),
            "div": lambda: ad.elementwise_div(a, dpos, eps=1e-3),
            "div_bcast": lambda: ad.elementwise_div(a, colpos, eps=1e-3),
            "relu": lambda: ad.relu(a),
            "elu_plus_one": lambda: ad.elu_plus_one(a),
            "row_softmax": lambda: ad.row_softmax(a),
            "concat": lambda: ad.concat_cols([a, ad.mul_scalar(a, 2.0)]),
            "slice": lambda: ad.slice_cols(a, 1, 3),
            "entry": lambda: ad.scale(a, ad.entry(a, 2, 1)),
            "row_outer": lambda: ad.row_outer(a, b4),
            "row_contract": lambda: ad.row_contract(b4, stack),
            "row_dot": lambda: ad.row_dot(a, ad.mul_scalar(a, 0.3)),
            "add_scalar": lambda: ad.add_scalar(a, 1.5),
            "mul_scalar": lambda: ad.mul_scalar(a, -2.5),
        }
        b_bias = rand_param(rng, (1, 3), "bias")
        s11 = rand_param(rng, (1, 1), "s")
        col = rand_param(rng, (4, 1), "col")
        dpos = ad.parameter(rng.uniform(0.5, 2.0, size=(4, 3)), "dpos")
        colpos = ad.parameter(rng.uniform(0.5, 2.0, size=(4, 1)), "colpos")
        b4 = rand_param(rng, (4, 2), "b4")
        stack = rand_param(rng, (4, 6), "stack")

        params = {
            "matmul": [a], "matmul_at": [a, b4], "transpose": [a],
            "add": [a], "add_bias": [a, b_bias],
            "scale": [a, s11], "mul_cols": [a, col], "div": [a, dpos],
            "div_bcast": [a, colpos], "relu": [a], "elu_plus_one": [a],
            "row_softmax": [a], "concat": [a], "slice": [a], "entry": [a],
            "row_outer": [a, b4], "row_contract": [b4, stack],
            "row_dot": [a], "add_scalar": [a], "mul_scalar": [a],
        }[op_name]

        def f():
            return scalarize(builders[op_name]())

        assert ad.gradient_check(f, params, h=1e-5) < 1e-6

    def test_composite_through_softmax(self):
        rng = np.random.default_rng(11)
        x = rand_param(rng, (5, 4), "x")
        w = rand_param(rng, (4, 3), "w")
        labels = rng.integers(0, 3, size=5)
        mask = np.arange(5)

        def f():
            h = ad.relu(ad.matmul(x, w))
            sm = ad.row_softmax(h)
            logits = ad.matmul(sm, ad.constant(rng_fixed))
            return ad.cross_entropy_loss(logits, labels, mask)

        rng_fixed = np.random.default_rng(1).normal(size=(3, 3))
        assert ad.gradient_check(f, [x, w], h=1e-5) < 1e-5

    def test_random_composite_graph(self):
        rng = np.random.default_rng(42)
        a = rand_param(rng, (3, 3), "a")
        b = rand_param(rng, (3, 2), "b")

        def f():
            m = ad.matmul(ad.elu_plus_one(a), b)
            d = ad.elementwise_div(m, ad.row_dot(m, m), eps=1e-6)
            return ad.sum_all(ad.relu(d))

        assert ad.gradient_check(f, [a, b], h=1e-5) < 1e-6


class TestAdam:
    def test_zero_grad_no_motion(self):
        p = ad.parameter([[1.0, -2.0]])
        state = AdamState(lr=0.05)
        adam_step(state, {"p": p})
        np.testing.assert_array_equal(p.value, [[1.0, -2.0]])

    def test_first_step_magnitude(self):
        # scalar g=1, lr=0.01: bias correction makes m_hat = v_hat = 1, so the
        # step is lr / (1 + eps) which is 0.01 to within ~1e-10
        p = ad.parameter([[0.0]])
        p.grad[0, 0] = 1.0
        state = AdamState(lr=0.01)
        adam_step(state, {"p": p})
        assert abs(p.value[0, 0] + 0.01) < 1e-9

    def test_constant_gradient_steps_equal(self):
        # exact hand computation: with constant g, bias correction cancels the
        # moment growth, so the second step equals the first
        p = ad.parameter([[0.0]])
        state = AdamState(lr=0.01)
        p.grad[0, 0] = 1.0
        adam_step(state, {"p": p})
        first = p.value[0, 0]
        adam_step(state, {"p": p})
        second = p.value[0, 0] - first
        assert abs(second - first) < 1e-15

    def test_decay_only_named_params(self):
        w = ad.parameter([[2.0]])
        g0 = ad.parameter([[2.0]])
        state = AdamState(lr=0.1, weight_decay=0.5, decay_names=frozenset({"w"}))
        for p in (w, g0):
            p.grad[0, 0] = 0.0
        adam_step(state, {"w": w, "g0": g0})
        assert abs(w.value[0, 0] - 2.0 * (1 - 0.1 * 0.5)) < 1e-15
        assert g0.value[0, 0] == 2.0

    def test_sign_direction(self):
        rng = np.random.default_rng(0)
        p = ad.parameter(rng.normal(size=(3, 3)))
        p.grad = rng.normal(size=(3, 3))
        before = p.value.copy()
        adam_step(AdamState(lr=0.01), {"p": p})
        moved = p.value - before
        assert np.all(np.sign(moved) == -np.sign(p.grad))
