"Reverse-mode differentiation checked against finite differences; Adam and schedule."

import numpy as np
import pytest

import autodiff
import constants
from autodiff import Tensor
from utils import Error

INSTANCES = 10


def relative_error(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def leaf(generator, *shape):
    return Tensor(generator.normal(size=shape), requires_grad=True)


def check(build, inputs, generator):
    """Compare the gradients of a random projection of the output of
    build(*inputs) with central finite differences.
    """
    output = build(*inputs)
    weights = generator.normal(size=output.shape)

    def loss():
        return autodiff.total(autodiff.mul(build(*inputs), weights))

    loss().backward()
    for tensor in inputs:
        expected = autodiff.numerical_gradient(loss, tensor, step=1e-6)
        assert relative_error(tensor.grad, expected) < 1e-4
        tensor.zero_grad()


@pytest.mark.parametrize("seed", range(INSTANCES))
class TestGradients:
    def test_add_broadcast(self, seed):
        generator = np.random.default_rng(seed)
        check(autodiff.add, [leaf(generator, 3, 4), leaf(generator, 4)], generator)

    def test_mul_broadcast(self, seed):
        generator = np.random.default_rng(seed)
        check(autodiff.mul, [leaf(generator, 3, 4), leaf(generator, 1, 4)], generator)

    def test_matmul(self, seed):
        generator = np.random.default_rng(seed)
        check(autodiff.matmul, [leaf(generator, 2, 3), leaf(generator, 3, 5)], generator)
        check(autodiff.matmul, [leaf(generator, 3), leaf(generator, 3, 5)], generator)

    def test_linear(self, seed):
        generator = np.random.default_rng(seed)
        check(
            autodiff.linear,
            [leaf(generator, 4, 3), leaf(generator, 3, 2), leaf(generator, 2)],
            generator,
        )

    def test_activations(self, seed):
        generator = np.random.default_rng(seed)
        for function in (autodiff.sigmoid, autodiff.tanh, autodiff.relu):
            check(function, [leaf(generator, 3, 5)], generator)

    def test_split_concat(self, seed):
        generator = np.random.default_rng(seed)

        def build(x, y):
            a, b = autodiff.split(x, [2, 3])
            return autodiff.concat([b, y, a])

        check(build, [leaf(generator, 2, 5), leaf(generator, 2, 1)], generator)

    def test_softmax(self, seed):
        generator = np.random.default_rng(seed)
        check(lambda x: autodiff.softmax(x, [3, 1, 4]), [leaf(generator, 2, 8)], generator)

    def test_dropout(self, seed):
        generator = np.random.default_rng(seed)
        check(lambda x: autodiff.dropout(x, 0.3, True, seed), [leaf(generator, 4, 6)], generator)

    def test_bce(self, seed):
        generator = np.random.default_rng(seed)
        target = (generator.random((3, 4)) < 0.5).astype(float)
        mask = np.array([1.0, 0.0, 1.0])
        predicted = Tensor(generator.uniform(0.05, 0.95, (3, 4)), requires_grad=True)
        check(lambda p: autodiff.bce_loss(p, target, mask=mask), [predicted], generator)

    def test_recurrent_cell(self, seed):
        generator = np.random.default_rng(seed)
        hidden = 3
        params = dict(
            weight_ih=leaf(generator, 2, 4 * hidden),
            weight_hh=leaf(generator, hidden, 4 * hidden),
            bias_ih=leaf(generator, 4 * hidden),
            bias_hh=leaf(generator, 4 * hidden),
        )

        def build(x, h, c, *weights):
            cell = dict(zip(["weight_ih", "weight_hh", "bias_ih", "bias_hh"], weights))
            h, c = autodiff.recurrent_cell_step(x, h, c, cell)
            h, c = autodiff.recurrent_cell_step(x, h, c, cell)
            return autodiff.concat([h, c])

        inputs = [leaf(generator, 2, 2), leaf(generator, 2, hidden), leaf(generator, 2, hidden)]
        check(build, inputs + list(params.values()), generator)


class TestForward:
    def test_softmax_segments(self):
        x = Tensor(np.random.default_rng(1).normal(size=(3, 9)))
        y = autodiff.softmax(x, [2, 3, 4]).values
        for a, b in ((0, 2), (2, 5), (5, 9)):
            assert np.allclose(y[:, a:b].sum(axis=1), 1.0)

    def test_dropout_inference(self):
        x = Tensor(np.ones((4, 4)))
        assert autodiff.dropout(x, 0.5, False, 1) is x

    def test_dropout_scaling(self):
        x = Tensor(np.ones(10000))
        y = autodiff.dropout(x, 0.2, True, 2).values
        assert np.allclose(y[y != 0], 1.25)
        assert abs(y.mean() - 1.0) < 0.05

    def test_dropout_seeded(self):
        x = Tensor(np.ones(100))
        first = autodiff.dropout(x, 0.5, True, 3).values
        second = autodiff.dropout(x, 0.5, True, 3).values
        assert np.array_equal(first, second)

    def test_bce_clamped(self):
        loss = autodiff.bce_loss(Tensor(np.array([[0.0, 1.0]])), np.array([[1.0, 1.0]]))
        assert loss.item() == pytest.approx(-np.log(constants.BCE_EPS))

    def test_bce_saturated_float32(self):
        predicted = Tensor(np.array([[1.0, 0.0, 0.0]], dtype=np.float32), requires_grad=True)
        loss = autodiff.bce_loss(predicted, np.array([[0.0, 1.0, 0.0]], dtype=np.float32))
        assert np.isfinite(loss.item())
        assert loss.item() == pytest.approx(-2 * np.log(constants.BCE_EPS), rel=1e-4)
        loss.backward()
        assert predicted.grad.dtype == np.float32
        assert np.all(np.isfinite(predicted.grad))
        assert predicted.grad.tolist() == [[0.0, 0.0, 0.0]]

    def test_one_hot(self):
        assert autodiff.one_hot(2, 4).values.tolist() == [0, 0, 1, 0]
        assert autodiff.one_hot([0, 3], 4).values.shape == (2, 4)
        with pytest.raises(Error):
            autodiff.one_hot(4, 4)

    def test_reused_tensor(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        autodiff.total(autodiff.mul(x, x)).backward()
        assert x.grad.tolist() == [6.0]

    def test_long_chain(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        y = x
        for i in range(5000):
            y = autodiff.add(y, x)
        autodiff.total(y).backward()
        assert x.grad.tolist() == [5001.0]


class TestShapes:
    def test_linear(self):
        with pytest.raises(Error) as excinfo:
            autodiff.linear(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))
        assert excinfo.value.kind == constants.SHAPE_ERROR
        assert "linear" in str(excinfo.value)

    def test_add(self):
        with pytest.raises(Error) as excinfo:
            autodiff.add(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 4))))
        assert "add" in str(excinfo.value)

    def test_softmax(self):
        with pytest.raises(Error):
            autodiff.softmax(Tensor(np.ones((2, 5))), [2, 2])

    def test_cell(self):
        params = dict(
            weight_ih=Tensor(np.ones((2, 12))),
            weight_hh=Tensor(np.ones((3, 12))),
            bias_ih=Tensor(np.ones(12)),
            bias_hh=Tensor(np.ones(12)),
        )
        with pytest.raises(Error) as excinfo:
            autodiff.recurrent_cell_step(
                Tensor(np.ones((1, 2))), Tensor(np.ones((1, 4))), Tensor(np.ones((1, 3))), params
            )
        assert "recurrent_cell_step" in str(excinfo.value)

    def test_backward_nonscalar(self):
        with pytest.raises(Error):
            Tensor(np.ones(3), requires_grad=True).backward()


class TestSchedule:
    @pytest.mark.parametrize(
        "epoch,expected",
        [
            (1, 0.003),
            (100, 0.003),
            (101, 9e-4),
            (150, 9e-4),
            (201, 2.7e-4),
            (401, 8.1e-5),
            (801, 2.43e-5),
        ],
    )
    def test_learning_rate(self, epoch, expected):
        assert autodiff.learning_rate(epoch) == pytest.approx(expected)

    def test_formatted(self):
        values = [f"{autodiff.learning_rate(e):g}" for e in (100, 101, 201, 401, 801)]
        assert values == ["0.003", "0.0009", "0.00027", "8.1e-05", "2.43e-05"]


class TestAdam:
    def test_first_step(self):
        params = dict(x=Tensor(np.array([1.0, -2.0])))
        state = autodiff.AdamState(params, lr=0.1)
        autodiff.adam_step(params, dict(x=np.array([0.5, -4.0])), state)
        assert params["x"].values == pytest.approx([0.9, -1.9])

    def test_quadratic(self):
        params = dict(x=Tensor(np.array([5.0, -5.0]), requires_grad=True))
        state = autodiff.AdamState(params, lr=0.05, decay=0.1, milestones=(300, 600))
        for step in range(1, 2001):
            x = params["x"]
            x.zero_grad()
            difference = autodiff.add(x, np.array([-3.0, 1.0]))
            loss = autodiff.total(autodiff.mul(difference, difference))
            loss.backward()
            autodiff.adam_step(params, dict(x=x.grad), state, epoch=step)
        difference = params["x"].values - np.array([3.0, -1.0])
        assert float(np.sum(difference * difference)) <= 1e-6

    def test_shape_mismatch(self):
        params = dict(x=Tensor(np.zeros(2)))
        state = autodiff.AdamState(params)
        with pytest.raises(Error) as excinfo:
            autodiff.adam_step(params, dict(x=np.zeros(3)), state)
        assert excinfo.value.kind == constants.SHAPE_ERROR

    def test_float32_kept(self):
        params = dict(x=Tensor(np.zeros(2, dtype=np.float32)))
        state = autodiff.AdamState(params)
        autodiff.adam_step(params, dict(x=np.ones(2)), state)
        assert params["x"].dtype == np.float32
