import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import dense_laplacian
from tdegnn.errors import ShapeError
from tdegnn.gradcheck import max_gradient_error
from tdegnn.graph import Graph, SparseOperator, normalized_laplacian, spmv
from tdegnn.tensor import Tensor, parameter, tsum

S = 1 / math.sqrt(2)


@st.composite
def graphs(draw, max_n=12):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True)) if pairs else []
    return n, chosen


class TestGraph:
    def test_dedup_both_directions(self):
        g = Graph(3, [(0, 1), (1, 0), (1, 2)])
        assert g.m == 2

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            Graph(2, [(1, 1)])

    @pytest.mark.parametrize("edge", [(0, 3), (-1, 0)])
    def test_out_of_range(self, edge):
        with pytest.raises(ValueError):
            Graph(3, [edge])

    def test_degrees(self):
        np.testing.assert_array_equal(Graph(3, [(0, 1), (1, 2)]).degrees(), [1, 2, 1])


class TestLaplacian:
    def test_single_edge(self):
        np.testing.assert_array_equal(normalized_laplacian(Graph(2, [(0, 1)])).dense(), [[1, -1], [-1, 1]])

    def test_triangle(self):
        lap = normalized_laplacian(Graph(3, [(0, 1), (1, 2), (0, 2)])).dense()
        np.testing.assert_allclose(lap, [[1, -0.5, -0.5], [-0.5, 1, -0.5], [-0.5, -0.5, 1]], atol=1e-15)

    def test_path(self):
        lap = normalized_laplacian(Graph(3, [(0, 1), (1, 2)])).dense()
        np.testing.assert_allclose(lap, [[1, -S, 0], [-S, 1, -S], [0, -S, 1]], atol=1e-15)

    def test_isolated_node_zero_row(self):
        lap = normalized_laplacian(Graph(3, [(0, 1)])).dense()
        np.testing.assert_array_equal(lap[2], 0.0)
        np.testing.assert_array_equal(lap[:, 2], 0.0)

    def test_csr_layout(self):
        op = normalized_laplacian(Graph(3, [(0, 1), (1, 2)]))
        assert op.indptr.tolist() == [0, 2, 5, 7]
        assert op.values.dtype == np.float64

    @settings(max_examples=60, deadline=None)
    @given(graphs())
    def test_matches_dense_oracle_and_symmetric(self, g):
        n, edges = g
        lap = normalized_laplacian(Graph(n, edges)).dense()
        np.testing.assert_allclose(lap, dense_laplacian(n, edges), atol=1e-15)
        np.testing.assert_array_equal(lap, lap.T)

    @settings(max_examples=60, deadline=None)
    @given(graphs(), st.integers(0, 2**31))
    def test_rayleigh_quotients_in_0_2(self, g, seed):
        n, edges = g
        op = normalized_laplacian(Graph(n, edges))
        x = np.random.default_rng(seed).normal(size=(n, 5))
        q = np.sum(x * op.apply(x), axis=0) / np.sum(x * x, axis=0)
        assert np.all(q >= -1e-12) and np.all(q <= 2 + 1e-12)

    @settings(max_examples=40, deadline=None)
    @given(graphs())
    def test_annihilates_sqrt_degree(self, g):
        n, edges = g
        graph = Graph(n, edges)
        op = normalized_laplacian(graph)
        v = np.sqrt(graph.degrees().astype(float))[:, None]
        np.testing.assert_allclose(op.apply(v), 0.0, atol=1e-12)


class TestSpmv:
    def test_constant_in_kernel_of_regular_graph(self):
        op = normalized_laplacian(Graph(3, [(0, 1), (1, 2), (0, 2)]))
        np.testing.assert_allclose(spmv(op, Tensor(np.full((3, 2), 4.0))).data, 0.0, atol=1e-15)

    def test_zero_operator(self, rng):
        out = spmv(SparseOperator.zeros(4), Tensor(rng.normal(size=(4, 3))))
        np.testing.assert_array_equal(out.data, 0.0)

    def test_path_one_hot(self):
        op = normalized_laplacian(Graph(3, [(0, 1), (1, 2)]))
        e1 = np.zeros((3, 1))
        e1[1] = 1.0
        np.testing.assert_allclose(spmv(op, Tensor(e1)).data[:, 0], [-S, 1, -S], atol=1e-15)

    def test_dimension_mismatch(self):
        op = normalized_laplacian(Graph(3, [(0, 1)]))
        with pytest.raises(ShapeError):
            spmv(op, Tensor(np.ones((4, 2))))

    def test_batched(self, rng):
        op = normalized_laplacian(Graph(4, [(0, 1), (1, 2), (2, 3)]))
        x = rng.normal(size=(5, 4, 3))
        expected = np.stack([op.dense() @ xi for xi in x])
        np.testing.assert_allclose(spmv(op, Tensor(x)).data, expected, atol=1e-14)

    @settings(max_examples=30, deadline=None)
    @given(graphs(max_n=50), st.integers(0, 2**31))
    def test_matches_dense_and_adjoint(self, g, seed):
        n, edges = g
        op = normalized_laplacian(Graph(n, edges))
        r = np.random.default_rng(seed)
        x, y = r.normal(size=(n, 3)), r.normal(size=(n, 3))
        lx = spmv(op, Tensor(x)).data
        np.testing.assert_allclose(lx, dense_laplacian(n, edges) @ x, rtol=0, atol=1e-12)
        assert abs(np.sum(lx * y) - np.sum(x * op.apply(y))) < 1e-12

    def test_gradient(self, rng):
        op = normalized_laplacian(Graph(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]))
        x = parameter(rng.uniform(-1, 1, size=(5, 3)))
        w = Tensor(rng.normal(size=(5, 3)))
        assert max_gradient_error(lambda: tsum(spmv(op, x) * w), [x]) < 1e-8
