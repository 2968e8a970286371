"""Unit and property tests for the autodiff core."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import taskrel.tensor as T
from taskrel.tensor import (ContractError, NumericError, ShapeError, Tape,
                            Tensor, backward, check_gradients)


class TestMatmul:
    def test_identity(self):
        m = Tensor([[1.5, -2.0], [0.25, 7.0]])
        eye = Tensor(np.eye(2))
        np.testing.assert_array_equal(T.matmul(eye, m).data, m.data)

    def test_manual_dot_product(self):
        out = T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_allclose(out.data, [[11.0]])

    def test_zero_row(self):
        out = T.matmul(Tensor([[0.0, 0.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[0.0]])

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))

    def test_associativity(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a, b, c = (rng.normal(size=(4, 4)) for _ in range(3))
            left = T.matmul(T.matmul(Tensor(a), Tensor(b)), Tensor(c)).data
            right = T.matmul(Tensor(a), T.matmul(Tensor(b), Tensor(c))).data
            np.testing.assert_allclose(left, right, atol=1e-9)


class TestSoftmaxRows:
    def test_symmetric_row(self):
        out = T.softmax_rows(Tensor([[0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])

    def test_closed_form(self):
        out = T.softmax_rows(Tensor([[0.0, 1.0]]))
        np.testing.assert_allclose(out.data, [[0.26894, 0.73106]], atol=1e-5)

    def test_large_values_no_overflow(self):
        out = T.softmax_rows(Tensor([[1000.0, 1000.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]])
        assert np.all(np.isfinite(out.data))

    def test_non_finite_input_rejected(self):
        with pytest.raises(NumericError):
            T.softmax_rows(Tensor([[np.inf, 0.0]]))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_rows_sum_to_one_and_positive(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(scale=rng.uniform(0.1, 50.0), size=(n, n))
        y = T.softmax_rows(Tensor(x)).data
        np.testing.assert_allclose(y.sum(axis=1), np.ones(n), atol=1e-9)
        assert np.all(y > 0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(0, 2**32 - 1))
    def test_per_row_shift_invariance(self, n, seed):
        rng = np.random.default_rng(seed)
        x = rng.normal(size=(n, n))
        shifts = rng.uniform(-100, 100, size=(n, 1))
        base = T.softmax_rows(Tensor(x)).data
        shifted = T.softmax_rows(Tensor(x + shifts)).data
        np.testing.assert_allclose(base, shifted, atol=1e-9)


class TestAbs:
    def test_elementwise(self):
        np.testing.assert_array_equal(
            T.abs_(Tensor([-2.0, 0.0, 3.0])).data, [2.0, 0.0, 3.0])

    def test_identity_on_nonnegative(self):
        x = np.array([0.0, 1.0, 2.5])
        np.testing.assert_array_equal(T.abs_(Tensor(x)).data, x)

    def test_sign_gradient(self):
        x = Tensor([-2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            loss = T.sum_(T.abs_(x))
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads.of(x), [-1.0, 1.0])

    def test_subgradient_zero_at_zero(self):
        x = Tensor([0.0], requires_grad=True)
        with Tape() as tape:
            loss = T.sum_(T.abs_(x))
        np.testing.assert_array_equal(tape.backward(loss).of(x), [0.0])


class TestSigmoid:
    def test_zero_maps_to_half(self):
        assert T.sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_saturation_stays_in_open_interval(self):
        low = T.sigmoid(Tensor([-40.0])).data[0]
        assert 0.0 < low < 1e-6
        assert np.isfinite(T.sigmoid(Tensor([800.0])).data[0])

    def test_gradient_at_zero(self):
        x = Tensor([0.0], requires_grad=True)
        with Tape() as tape:
            loss = T.sum_(T.sigmoid(x))
        np.testing.assert_allclose(tape.backward(loss).of(x), [0.25])


class TestScaleRows:
    def test_all_ones_weights(self):
        v = np.random.default_rng(0).normal(size=(3, 4))
        out = T.scale_rows(Tensor(np.ones((3, 3))), Tensor(v))
        for i in range(3):
            np.testing.assert_array_equal(out.data[i], v)

    def test_zero_row_gives_zero_slices(self):
        a = np.ones((2, 2))
        a[0, :] = 0.0
        out = T.scale_rows(Tensor(a), Tensor(np.ones((2, 3))))
        np.testing.assert_array_equal(out.data[0], np.zeros((2, 3)))

    def test_manual_broadcast_product(self):
        a = Tensor([[0.25, 0.75], [0.5, 0.5]])
        v = Tensor([[2.0], [4.0]])
        expected = [[[0.5], [3.0]], [[1.0], [2.0]]]
        np.testing.assert_allclose(T.scale_rows(a, v).data, expected)

    def test_shape_contract(self):
        with pytest.raises(ShapeError):
            T.scale_rows(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 2))))
        with pytest.raises(ShapeError):
            T.scale_rows(Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2))))


class TestBackward:
    def test_sum_gives_all_ones(self):
        x = Tensor(np.random.default_rng(1).normal(size=(3, 5)), requires_grad=True)
        with Tape() as tape:
            loss = T.sum_(x)
        np.testing.assert_array_equal(tape.backward(loss).of(x), np.ones((3, 5)))

    def test_quadratic(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = T.sum_(T.mul(x, x))
        np.testing.assert_allclose(tape.backward(loss).of(x), [2.0, 4.0])

    def test_unused_parameter_reads_zero(self):
        x = Tensor([1.0], requires_grad=True)
        unused = Tensor([5.0, 6.0], requires_grad=True)
        with Tape() as tape:
            loss = T.sum_(x)
        grads = tape.backward(loss)
        np.testing.assert_array_equal(grads.of(unused), [0.0, 0.0])

    def test_fanout_accumulates(self):
        x = Tensor([3.0], requires_grad=True)
        with Tape() as tape:
            loss = T.sum_(T.add(x, x))
        np.testing.assert_array_equal(tape.backward(loss).of(x), [2.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = T.mul(x, x)
        with pytest.raises(ContractError):
            tape.backward(y)

    def test_off_tape_loss_rejected(self):
        x = Tensor([1.0], requires_grad=True)
        with pytest.raises(ContractError):
            backward(x)

    def test_module_level_backward_sets_grad(self):
        x = Tensor([2.0], requires_grad=True)
        with Tape():
            loss = T.sum_(T.mul(x, x))
        backward(loss)
        np.testing.assert_allclose(x.grad, [4.0])


class TestCheckGradients:
    def test_linear_is_exact(self):
        x = Tensor(np.random.default_rng(2).normal(size=(4,)), requires_grad=True)
        err = check_gradients(lambda ps: T.sum_(ps[0]), [x])
        assert err < 1e-10

    def test_composition_of_primitives(self):
        rng = np.random.default_rng(3)
        w = Tensor(rng.normal(size=(4, 3)), requires_grad=True)
        b = Tensor(rng.normal(size=(3,)), requires_grad=True)
        x = rng.normal(size=(5, 4))

        def f(params):
            weight, bias = params
            h = T.relu(T.add(T.matmul(Tensor(x), weight), bias))
            return T.mean(T.sigmoid(h))

        assert check_gradients(f, [w, b]) < 1e-4

    def test_softmax_and_scale_rows_composition(self):
        rng = np.random.default_rng(4)
        v = Tensor(rng.normal(size=(5, 3)), requires_grad=True)
        mix = rng.normal(size=(5, 5, 3))

        def f(params):
            (vv,) = params
            a = T.softmax_rows(T.matmul(vv, T.transpose(vv)))
            r = T.scale_rows(a, vv)
            return T.mean(T.mul(r, Tensor(mix)))

        assert check_gradients(f, [v]) < 1e-4

    def test_invalid_eps_rejected(self):
        x = Tensor([1.0], requires_grad=True)
        with pytest.raises(ValueError):
            check_gradients(lambda ps: T.sum_(ps[0]), [x], eps=0.0)


class TestElementwiseBits:
    def test_div_and_broadcast_backward(self):
        a = Tensor(np.array([[2.0, 4.0], [6.0, 8.0]]), requires_grad=True)
        d = Tensor(np.array([[2.0], [4.0]]), requires_grad=True)

        def f(params):
            return T.sum_(T.div(params[0], params[1]))

        assert check_gradients(f, [a, d]) < 1e-6

    def test_clip_passes_gradient_inside_interval(self):
        x = Tensor([0.5, 2.0, -1.0], requires_grad=True)
        with Tape() as tape:
            loss = T.sum_(T.clip(x, 0.0, 1.0))
        np.testing.assert_array_equal(tape.backward(loss).of(x), [1.0, 0.0, 0.0])

    def test_log_rejects_nonpositive(self):
        with pytest.raises(NumericError):
            T.log(Tensor([0.0]))

    def test_finite_outputs_on_finite_inputs(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.normal(scale=100.0, size=(6, 6)))
        for out in (T.sigmoid(x), T.relu(x), T.abs_(x), T.softmax_rows(x)):
            assert np.all(np.isfinite(out.data))

    def test_operator_sugar_matches_functions(self):
        a = Tensor([1.0, 2.0])
        b = Tensor([3.0, 4.0])
        np.testing.assert_array_equal((a + b).data, T.add(a, b).data)
        np.testing.assert_array_equal((a - b).data, T.sub(a, b).data)
        np.testing.assert_array_equal((a * b).data, T.mul(a, b).data)
        np.testing.assert_array_equal((a * 2.0).data, T.scalar_mul(a, 2.0).data)
        np.testing.assert_array_equal((-a).data, T.scalar_mul(a, -1.0).data)

    def test_inference_mode_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        y = T.sigmoid(x)
        assert y.tape_id is None

    def test_tensor_invariant_size_matches_shape(self):
        t = Tensor(np.zeros((3, 4)))
        assert t.size == 12 and t.shape == (3, 4)
