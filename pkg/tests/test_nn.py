import numpy as np
import pytest

from mgtsd.nn import GRUWeights, gru_cell, init_gru_weights, init_linear, linear
from mgtsd.rng import rng_stream
from mgtsd.tensor import Tensor, grad, mean, tsum


def zero_gru(d_in: int, d_h: int) -> GRUWeights:
    w = init_gru_weights(rng_stream(0), d_in, d_h)
    for t in w.named("g").values():
        t.data[...] = 0.0
    return w


class TestGRUCell:
    def test_zero_weights_halve_hidden_state(self):
        # z = r = 0.5 and candidate 0, so h' = 0.5 h
        w = zero_gru(3, 4)
        h = Tensor(np.array([0.2, -0.4, 0.8, 1.0]))
        out = gru_cell(Tensor(np.ones(3)), h, w)
        assert np.allclose(out.data, h.data * 0.5)

    def test_output_shape(self):
        w = init_gru_weights(rng_stream(1), 5, 7)
        out = gru_cell(Tensor(np.ones(5)), Tensor(np.zeros(7)), w)
        assert out.shape == (7,)
        batched = gru_cell(Tensor(np.ones((4, 5))), Tensor(np.zeros((4, 7))), w)
        assert batched.shape == (4, 7)

    @pytest.mark.parametrize("seed", range(5))
    def test_output_bounded_when_hidden_bounded(self, seed):
        s = rng_stream(seed)
        w = init_gru_weights(s, 3, 6)
        h = Tensor(s.uniform(-0.999, 0.999, size=6))
        x = Tensor(s.standard_normal(3) * 5)
        out = gru_cell(x, h, w)
        assert np.all(out.data > -1.0) and np.all(out.data < 1.0)

    def test_dimension_mismatch_raises(self):
        w = init_gru_weights(rng_stream(2), 3, 4)
        with pytest.raises(ValueError, match="d_in"):
            gru_cell(Tensor(np.ones(5)), Tensor(np.zeros(4)), w)
        with pytest.raises(ValueError, match="d_h"):
            gru_cell(Tensor(np.ones(3)), Tensor(np.zeros(5)), w)

    def test_gradients_match_finite_differences(self, fd_check):
        s = rng_stream(12)
        w = init_gru_weights(s, 2, 3)
        params = w.named("gru")
        x = Tensor(s.standard_normal((4, 2)))
        h = Tensor(s.standard_normal((4, 3)))

        def f():
            out = gru_cell(x, h, w)
            return mean(out * out)

        fd_check(f, params, tol=1e-4)


class TestLinear:
    def test_zero_init(self):
        lw = init_linear(rng_stream(0), 3, 2, zero=True)
        out = linear(Tensor(np.ones((5, 3))), lw)
        assert np.array_equal(out.data, np.zeros((5, 2)))

    def test_gradient_flow(self):
        lw = init_linear(rng_stream(3), 3, 2)
        x = Tensor(np.ones((4, 3)))
        g = grad(tsum(linear(x, lw)), lw.named("lin"))
        assert np.array_equal(g["lin.b"].data, np.full(2, 4.0))
