import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from clpeft import ndgrad as nd
from clpeft.ndgrad import DimensionError


def _softmax_oracle(row):
    e = [math.exp(v) for v in row]
    s = sum(e)
    return [v / s for v in e]


class TestMatmul:
    def test_identity(self):
        x = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
        out = nd.matmul(nd.const(np.eye(2)), nd.const(x))
        np.testing.assert_array_equal(out.value, x)

    def test_hand_product(self):
        out = nd.matmul(nd.const([[1.0, 2.0], [3.0, 4.0]]), nd.const([[0.0], [1.0]]))
        np.testing.assert_array_equal(out.value, [[2.0], [4.0]])

    def test_zero_annihilates(self):
        x = np.random.default_rng(0).normal(size=(3, 4))
        out = nd.matmul(nd.const(np.zeros((2, 3))), nd.const(x))
        np.testing.assert_array_equal(out.value, np.zeros((2, 4)))

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            nd.matmul(nd.const(np.ones((2, 3))), nd.const(np.ones((2, 3))))

    def test_backward_matches_formula(self):
        rng = np.random.default_rng(1)
        a, b, dc = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(3, 2))
        pa, pb = nd.param(a), nd.param(b)
        nd.sum_all(nd.mul(nd.matmul(pa, pb), nd.const(dc))).backward()
        np.testing.assert_allclose(pa.grad, dc @ b.T, rtol=1e-12)
        np.testing.assert_allclose(pb.grad, a.T @ dc, rtol=1e-12)

    def test_associative_chain(self):
        rng = np.random.default_rng(2)
        a, b, c = (rng.normal(size=(8, 8)) for _ in range(3))
        left = (a @ b) @ c
        right = a @ (b @ c)
        assert np.max(np.abs(left - right)) <= 1e-10 * np.max(np.abs(left))


class TestSoftmax:
    def test_symmetric_row(self):
        np.testing.assert_allclose(nd.softmax_rows(nd.const([[0.0, 0.0]])).value, [[0.5, 0.5]])

    def test_no_overflow(self):
        out = nd.softmax_rows(nd.const([[1000.0, 0.0]])).value
        np.testing.assert_allclose(out, [[1.0, 0.0]], atol=1e-12)

    def test_log_weights(self):
        row = [math.log(1), math.log(2), math.log(3)]
        out = nd.softmax_rows(nd.const([row])).value[0]
        np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], rtol=1e-12)
        np.testing.assert_allclose(out, _softmax_oracle(row), rtol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.lists(st.floats(-50, 50), min_size=3, max_size=3), min_size=1, max_size=5))
    def test_rows_are_distributions(self, rows):
        out = nd.softmax_rows(nd.const(rows)).value
        assert np.all(np.abs(out.sum(axis=1) - 1.0) <= 1e-12)
        assert np.all((out >= 0) & (out <= 1))


class TestLayerNorm:
    ones, zeros = nd.const(np.ones(2)), nd.const(np.zeros(2))

    def test_constant_row(self):
        out = nd.layer_norm(nd.const([[3.0, 3.0]]), self.ones, self.zeros).value
        np.testing.assert_array_equal(out, [[0.0, 0.0]])

    def test_unit_variance_row(self):
        out = nd.layer_norm(nd.const([[1.0, -1.0]]), self.ones, self.zeros).value
        expected = 1.0 / math.sqrt(1.0 + 1e-5)
        np.testing.assert_allclose(out, [[expected, -expected]], rtol=1e-12)

    def test_zero_gamma_gives_beta(self):
        x = np.random.default_rng(3).normal(size=(4, 5))
        beta = np.arange(5.0)
        out = nd.layer_norm(nd.const(x), nd.const(np.zeros(5)), nd.const(beta)).value
        np.testing.assert_array_equal(out, np.tile(beta, (4, 1)))

    def test_needs_two_features(self):
        with pytest.raises(DimensionError):
            nd.layer_norm(nd.const([[1.0]]), nd.const([1.0]), nd.const([0.0]))


class TestGelu:
    def test_zero(self):
        assert nd.gelu(nd.const([0.0])).value[0] == 0.0

    def test_asymptote(self):
        assert nd.gelu(nd.const([20.0])).value[0] == pytest.approx(20.0, rel=1e-12)

    def test_at_one(self):
        c = math.sqrt(2 / math.pi)
        oracle = 0.5 * (1 + math.tanh(c * (1 + 0.044715)))
        val = nd.gelu(nd.const([1.0])).value[0]
        assert val == pytest.approx(oracle, rel=1e-14)
        assert val == pytest.approx(0.8412, abs=1e-4)


class TestCrossEntropy:
    def test_uniform(self):
        assert float(nd.cross_entropy(nd.const(np.zeros(4)), 1).value) == pytest.approx(math.log(4))

    def test_confident(self):
        assert float(nd.cross_entropy(nd.const([10.0, -10.0]), 0).value) == pytest.approx(0.0, abs=1e-8)

    def test_hand_value(self):
        oracle = -math.log(math.e / (math.e + math.e ** 2 + math.e ** 3))
        val = float(nd.cross_entropy(nd.const([1.0, 2.0, 3.0]), 0).value)
        assert val == pytest.approx(oracle, rel=1e-12)
        assert val == pytest.approx(2.4076, abs=1e-4)

    def test_gradient_is_softmax_minus_onehot(self):
        z = nd.param([1.0, 2.0, 3.0])
        nd.cross_entropy(z, 0).backward()
        expected = np.array(_softmax_oracle([1.0, 2.0, 3.0])) - np.array([1.0, 0.0, 0.0])
        np.testing.assert_allclose(z.grad, expected, rtol=1e-12)

    def test_label_out_of_range(self):
        with pytest.raises(IndexError):
            nd.cross_entropy(nd.const([0.0, 0.0]), 2)


class TestGradCheck:
    def test_quadratic(self):
        w = np.random.default_rng(4).normal(size=(5, 1))
        err = nd.grad_check(lambda p: nd.sum_all(nd.mul(p[0], p[0])), [w])
        assert err <= 1e-7

    def test_constant_function(self):
        w = np.ones(3)
        p = nd.param(w)
        out = nd.add(nd.scale(nd.sum_all(p), 0.0), nd.const(2.0))
        out.backward()
        np.testing.assert_array_equal(p.grad, np.zeros(3))
        assert nd.grad_check(lambda q: nd.add(nd.scale(nd.sum_all(q[0]), 0.0), nd.const(2.0)),
                             [w]) == 0.0

    @pytest.mark.parametrize("name", ["matmul", "softmax", "layer_norm", "gelu", "cross_entropy",
                                      "attention_heads", "column_norms", "div", "mean_rows"])
    def test_primitives_randomized(self, name):
        rng = np.random.default_rng(zlib.crc32(name.encode()))
        weights = rng.normal(size=(3, 4))

        def project(node):
            # random linear read-out keeps the scalar sensitive to every entry
            w = nd.const(rng_fixed[: node.value.size].reshape(node.shape))
            return nd.sum_all(nd.mul(node, w))

        rng_fixed = np.random.default_rng(99).normal(size=64)
        cases = {
            "matmul": ([rng.normal(size=(3, 4)), rng.normal(size=(4, 2))],
                       lambda p: project(nd.matmul(p[0], p[1]))),
            "softmax": ([rng.normal(size=(3, 4))], lambda p: project(nd.softmax_rows(p[0]))),
            "layer_norm": ([rng.normal(size=(3, 4)), rng.normal(size=4), rng.normal(size=4)],
                           lambda p: project(nd.layer_norm(p[0], p[1], p[2]))),
            "gelu": ([rng.normal(size=(3, 4))], lambda p: project(nd.gelu(p[0]))),
            "cross_entropy": ([rng.normal(size=4)], lambda p: nd.cross_entropy(p[0], 2)),
            "attention_heads": ([rng.normal(size=(3, 4))],
                                lambda p: project(nd.merge_heads(nd.split_heads(
                                    nd.gelu(p[0]), 2)))),
            "column_norms": ([rng.normal(size=(3, 4))], lambda p: project(nd.column_norms(p[0]))),
            "div": ([rng.normal(size=(3, 4)), rng.uniform(1, 2, size=4)],
                    lambda p: project(nd.div(p[0], p[1]))),
            "mean_rows": ([weights], lambda p: project(nd.mean_rows(p[0]))),
        }
        params, f = cases[name]
        assert nd.grad_check(f, params) <= 1e-4


def test_shared_node_gradients_accumulate():
    x = nd.param([3.0])
    nd.sum_all(nd.add(x, x)).backward()
    np.testing.assert_array_equal(x.grad, [2.0])


def test_diamond_graph_visits_once():
    x = nd.param([2.0])
    y = nd.mul(x, x)
    z = nd.sum_all(nd.add(y, y))
    z.backward()
    np.testing.assert_allclose(x.grad, [8.0])


def test_external_input_rejects_nan():
    with pytest.raises(ValueError):
        nd.as_tensor([1.0, float("nan")])
    with pytest.raises(DimensionError):
        nd.as_tensor(np.zeros((1, 1, 1, 1)))
