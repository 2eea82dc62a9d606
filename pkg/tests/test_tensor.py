import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cvtgad import tensor as T
from cvtgad.nn import MLP
from cvtgad.tensor import (Adam, DomainError, ShapeError, Tensor, adam_step, l1_normalize_cols,
                           layer_norm, matmul, relu, softmax_rows)

from _oracles import central_difference, max_relative_error


def _check_grad(build, arrays, h=1e-6, tol=1e-5):
    tensors = [Tensor(a, requires_grad=True) for a in arrays]
    build(*tensors).backward()
    analytic = [t.grad for t in tensors]

    def f():
        return build(*[Tensor(a) for a in arrays]).item()

    numeric = central_difference(f, arrays, h=h)
    assert max_relative_error(analytic, numeric) < tol


class TestMatmul:
    def test_identity(self):
        x = np.array([[1.0, 2], [3, 4]])
        np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), Tensor(x)).data, x)

    def test_permutation(self):
        p = np.array([[0.0, 1], [1, 0]])
        np.testing.assert_array_equal(matmul(Tensor(np.eye(2)), Tensor(p)).data, p)

    def test_gradient_against_finite_differences(self):
        a = np.array([[1.0, 2.0]])
        b = np.array([[3.0], [4.0]])
        ta = Tensor(a, requires_grad=True)
        matmul(ta, Tensor(b)).sum().backward()
        numeric = central_difference(lambda: float((a @ b).sum()), [a], h=1e-6)[0]
        np.testing.assert_allclose(numeric, [[3.0, 4.0]], atol=1e-8)
        np.testing.assert_allclose(ta.grad, numeric, atol=1e-8)

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


class TestElementwise:
    def test_relu(self):
        np.testing.assert_array_equal(relu(Tensor([-1.0, 0.0, 2.0])).data, [0, 0, 2])

    def test_exp_log_inverse(self):
        x = np.array([0.5, 2.0])
        np.testing.assert_allclose(T.exp(T.log(Tensor(x))).data, x, rtol=1e-15)

    def test_relu_derivative(self):
        x = Tensor([-1.0, 2.0], requires_grad=True)
        relu(x).sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])

    def test_log_domain(self):
        with pytest.raises(DomainError):
            T.log(Tensor([1.0, 0.0]))
        with pytest.raises(DomainError):
            T.log(Tensor([-2.0]))

    def test_div_by_zero(self):
        with pytest.raises(DomainError):
            Tensor([1.0]) / Tensor([0.0])

    @pytest.mark.parametrize("op", [
        lambda a, b: (a + b).sum(),
        lambda a, b: (a - b).sum(),
        lambda a, b: (a * b).sum(),
        lambda a, b: (a / (b * b + 1.0)).sum(),
        lambda a, b: T.exp(a * 0.3).sum() + T.log(b * b + 1.0).sum(),
        lambda a, b: T.scale(a, 2.5).sum() * 1.0 + relu(b).sum(),
    ])
    def test_gradients(self, op):
        rng = np.random.default_rng(1)
        _check_grad(op, [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))])

    def test_broadcast_gradient(self):
        rng = np.random.default_rng(7)
        _check_grad(lambda a, b: ((a + b) * (a - b)).sum(),
                    [rng.normal(size=(3, 4)), rng.normal(size=4)])


class TestSoftmax:
    def test_uniform_logits(self):
        np.testing.assert_allclose(softmax_rows(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3])

    def test_stabilised(self):
        out = softmax_rows(Tensor([[1000.0, 0.0]])).data
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-300)

    def test_jacobian(self):
        rng = np.random.default_rng(2)
        w = rng.normal(size=(3, 5))
        _check_grad(lambda a: (softmax_rows(a) * w).sum(), [rng.normal(size=(3, 5))], tol=1e-5)

    def test_mask_zeroes_entries(self):
        mask = np.array([[True, False], [True, True]])
        out = softmax_rows(Tensor([[5.0, 1.0], [0.0, 0.0]]), mask).data
        np.testing.assert_array_equal(out[0], [1.0, 0.0])

    def test_non_finite_rejected(self):
        with pytest.raises(DomainError):
            softmax_rows(Tensor([[np.nan, 0.0]]))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(-50, 50)))
    def test_rows_are_distributions(self, x):
        out = softmax_rows(Tensor(x)).data
        assert np.all((out >= 0) & (out <= 1))
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


class TestL1Cols:
    def test_already_normalised(self):
        np.testing.assert_array_equal(l1_normalize_cols(Tensor([[0.5], [0.5]])).data, [[0.5], [0.5]])

    def test_column(self):
        np.testing.assert_array_equal(l1_normalize_cols(Tensor([[2.0], [2.0]])).data, [[0.5], [0.5]])

    def test_zero_column_passes_through(self):
        out = l1_normalize_cols(Tensor([[0.0, 1.0], [0.0, 3.0]])).data
        np.testing.assert_array_equal(out[:, 0], [0.0, 0.0])
        np.testing.assert_allclose(out[:, 1], [0.25, 0.75])

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            l1_normalize_cols(Tensor([[-0.1], [1.0]]))

    def test_gradient(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(4, 3))
        _check_grad(lambda a: (l1_normalize_cols(a * a + 0.1) * w).sum(),
                    [rng.normal(size=(4, 3))])

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(1e-3, 1e3)))
    def test_columns_sum_to_one(self, x):
        np.testing.assert_allclose(l1_normalize_cols(Tensor(x)).data.sum(axis=0), 1.0, atol=1e-12)


class TestLayerNorm:
    def test_constant_row_gives_beta(self):
        beta = np.array([0.3, -0.2, 0.1])
        out = layer_norm(Tensor([[4.0, 4.0, 4.0]]), Tensor(np.ones(3)), Tensor(beta)).data
        np.testing.assert_array_equal(out[0], beta)

    def test_constant_row_zero(self):
        out = layer_norm(Tensor([[7.0, 7.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2))).data
        np.testing.assert_array_equal(out, [[0.0, 0.0]])

    def test_unit_variance_row(self):
        out = layer_norm(Tensor([[1.0, -1.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2))).data
        # mean 0 and variance 1 by hand, so only eps shrinks the row
        np.testing.assert_allclose(out, [[1.0, -1.0]], atol=1e-5)
        np.testing.assert_allclose(out, [[1.0, -1.0]] / np.sqrt(1 + T.LAYER_NORM_EPS), rtol=1e-15)

    def test_gradient(self):
        rng = np.random.default_rng(4)
        w = rng.normal(size=(3, 5))
        _check_grad(lambda a, g, b: (layer_norm(a, g, b) * w).sum(),
                    [rng.normal(size=(3, 5)), rng.normal(size=5), rng.normal(size=5)])


class TestBackward:
    def test_sum(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        loss = x.sum()
        loss.backward()
        np.testing.assert_array_equal(x.grad, [1, 1, 1])
        np.testing.assert_array_equal(loss.grad, 1.0)

    def test_square(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        (x * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [2.0, 4.0])

    def test_accumulates(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        (x * x).sum().backward()
        (x * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [4.0, 8.0])

    def test_non_scalar_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with pytest.raises(ShapeError):
            (x * 2.0).backward()

    def test_shared_subexpression(self):
        x = Tensor([3.0], requires_grad=True)
        y = x * x
        (y + y * x).sum().backward()  # 2x^2 ... d/dx (x^2 + x^3) = 2x + 3x^2
        np.testing.assert_allclose(x.grad, [2 * 3 + 3 * 9])

    def test_two_layer_mlp(self):
        rng = np.random.default_rng(5)
        mlp = MLP(4, 6, 3, 2, rng)
        x = rng.normal(size=(5, 4))
        target = rng.normal(size=(5, 3))

        def loss():
            d = mlp(Tensor(x)) - Tensor(target)
            return (d * d).sum()

        loss().backward()
        params = mlp.parameters()
        analytic = [p.grad.copy() for p in params]
        numeric = central_difference(lambda: loss().item(), [p.data for p in params], h=1e-5)
        assert max_relative_error(analytic, numeric) < 1e-4

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with T.no_grad():
            y = x * 2.0
        assert not y.requires_grad


class TestAdam:
    def test_zero_gradient_is_noop(self):
        p = Tensor([1.0, -2.0], requires_grad=True)
        adam_step([p], [np.zeros(2)], {}, lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_first_step_moves_by_lr(self):
        # Bias-corrected m/sqrt(v) = g/|g| = 1 on step one, so theta moves by lr/(1 + eps).
        p = Tensor([0.5], requires_grad=True)
        adam_step([p], [np.array([1.0])], {}, lr=0.1)
        np.testing.assert_allclose(p.data, [0.5 - 0.1 / (1 + 1e-8)], rtol=1e-15)

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        grads = [rng.normal(size=3) for _ in range(5)]
        outs = []
        for _ in range(2):
            p = Tensor(np.arange(3.0), requires_grad=True)
            opt = Adam([p], lr=0.01)
            for g in grads:
                p.grad = g
                opt.step()
            outs.append(p.data.tobytes())
        assert outs[0] == outs[1]

    def test_state_shape_mismatch(self):
        p = Tensor([1.0, 2.0], requires_grad=True)
        state = {"t": 0, "m": [np.zeros(3)], "v": [np.zeros(3)]}
        with pytest.raises(ShapeError):
            adam_step([p], [np.ones(2)], state)
