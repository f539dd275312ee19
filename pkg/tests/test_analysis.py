import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import match_roots, stencil_roots
from tdegnn.analysis import (BASIS, basis_decomposition, characteristic_polynomial, characteristic_roots,
                             consistency_check, grid_points, parse_grid, recompose, root_condition,
                             stencil_residuals)
from tdegnn.errors import PreconditionError, ShapeError


@st.composite
def stencils(draw, min_order=1, max_order=6):
    o = draw(st.integers(min_order, max_order))
    head = draw(st.lists(st.floats(-2, 2, allow_nan=False), min_size=o - 1, max_size=o - 1))
    return np.array(head + [1.0 - sum(head)])


class TestRoots:
    def test_first_order(self):
        np.testing.assert_allclose(characteristic_roots([1.0]), [1.0])

    def test_second_order_double_root(self):
        np.testing.assert_allclose(np.abs(characteristic_roots([2.0, -1.0])), [1.0, 1.0], atol=1e-12)

    def test_third_order_table_row(self):
        np.testing.assert_allclose(np.abs(characteristic_roots([1.4, 0.2, -0.6])), [1.0, 1.0, 0.6], atol=1e-12)

    def test_polynomial_layout(self):
        np.testing.assert_array_equal(characteristic_polynomial([2.0, -1.0]), [1.0, -2.0, 1.0])

    def test_not_normalized(self):
        with pytest.raises(PreconditionError, match="sums to"):
            characteristic_roots([1.0, 1.0])

    def test_order_cap(self):
        c = np.zeros(33)
        c[0] = 1.0
        with pytest.raises(PreconditionError):
            characteristic_roots(c)

    @settings(max_examples=150, deadline=None)
    @given(stencils(max_order=4))
    def test_matches_laguerre_oracle(self, c):
        roots = characteristic_roots(c)
        assert roots.size == c.size
        expected = stencil_roots(c)
        scale = max(1.0, np.max(np.abs(expected)))
        # clustered roots are conditioned like sqrt(eps); compare relative to the spread
        assert match_roots(roots, expected) < 1e-8 * scale or _clustered(expected)

    @settings(max_examples=150, deadline=None)
    @given(stencils(max_order=10))
    def test_one_is_a_root_and_residuals_small(self, c):
        roots = characteristic_roots(c)
        assert np.min(np.abs(roots - 1.0)) < 1e-9
        a = characteristic_polynomial(c)
        assert abs(np.polyval(a, 1.0)) < 1e-12
        for z in roots:
            scale = np.sum(np.abs(a) * np.abs(z) ** np.arange(a.size - 1, -1, -1))
            assert abs(np.polyval(a, z)) < 1e-9 * max(1.0, scale)


def _clustered(roots, gap=1e-4):
    return any(abs(roots[i] - roots[j]) < gap for i in range(len(roots)) for j in range(i + 1, len(roots)))


class TestRootCondition:
    def test_second_order(self):
        rep = root_condition([2.0, -1.0])
        assert rep.stable and rep.weakly_stable_warning

    def test_forward_euler(self):
        rep = root_condition([1.0])
        assert rep.stable and not rep.weakly_stable_warning

    def test_fourth_order_row_rounding(self):
        rep = root_condition([0.975, 0.675, -0.25, -0.4])
        np.testing.assert_allclose(np.sort(rep.abs_roots), [0.629, 0.629, 1.0, 1.0103], atol=1e-3)
        assert not rep.stable
        assert root_condition([0.975, 0.675, -0.25, -0.4], tol=0.02).stable

    def test_fifth_order_row(self):
        rep = root_condition([-0.08, 1.68, 0.153, 0.006, -0.759])
        assert not rep.stable
        assert abs(rep.max_abs_root - 1.4) < 0.01

    def test_json_keys(self):
        doc = root_condition([2.0, -1.0]).to_json()
        assert set(doc) == {"order", "coefficients", "roots", "max_abs_root", "stable", "weakly_stable_warning"}
        assert set(doc["roots"][0]) == {"re", "im", "abs"}


class TestBasis:
    @pytest.mark.parametrize("i", [0, 1, 2])
    def test_basis_vectors(self, i):
        np.testing.assert_allclose(basis_decomposition(BASIS[i]), np.eye(3)[i], atol=1e-12)

    def test_learned_third_order(self):
        np.testing.assert_allclose(basis_decomposition([1.4, 0.2, -0.6]), [0.6, 1.0, -0.6], atol=1e-12)

    def test_wrong_length(self):
        with pytest.raises(ShapeError):
            basis_decomposition([2.0, -1.0])

    @given(stencils(min_order=3, max_order=3))
    def test_round_trip(self, c):
        alpha = basis_decomposition(c)
        assert abs(alpha.sum() - 1.0) < 1e-12
        np.testing.assert_allclose(recompose(alpha), c, atol=1e-12)


class TestConsistency:
    def test_second_difference(self):
        rep = consistency_check([2.0, -1.0], grid=(0.0, 1.0, 0.01))
        assert rep.r2 >= 0.9999 and rep.inferred_order == 2
        assert abs(rep.beta - 1e-4) < 0.02 * 1e-4

    def test_forward_euler_tracks_first_derivative(self):
        rep = consistency_check([1.0], grid=(0.0, 1.0, 0.01))
        assert rep.r2 < 0.5
        assert rep.inferred_order == 1

    def test_learned_third_order(self):
        assert consistency_check([1.4, 0.2, -0.6]).r2 >= 0.99

    def test_residual_length(self):
        rep = consistency_check([1.4, 0.2, -0.6], grid=(0.0, 1.0, 0.01))
        assert rep.residuals.size == 101 - 3

    def test_residuals_by_hand(self):
        y = np.array([0.0, 1.0, 4.0, 9.0])
        np.testing.assert_array_equal(stencil_residuals([2.0, -1.0], y), [2.0, 2.0])

    def test_second_order_convergence(self):
        errs, steps = [], [0.02, 0.01, 0.005, 0.0025]
        for h in steps:
            t = grid_points(0.0, 1.0, h)
            y = np.sin(2 * np.pi * t)
            r = stencil_residuals([2.0, -1.0], y)
            d2 = -4 * np.pi**2 * np.sin(2 * np.pi * t[1:-1])
            errs.append(np.max(np.abs(r / h**2 - d2)))
        slope = np.polyfit(np.log(steps), np.log(errs), 1)[0]
        assert abs(slope - 2.0) < 0.1

    def test_grid_parsing(self):
        assert parse_grid("0:1:0.01") == (0.0, 1.0, 0.01)
        assert grid_points(0.0, 1.0, 0.01).size == 101
        for bad in ("0:1", "a:b:c"):
            with pytest.raises(PreconditionError):
                parse_grid(bad)

    def test_degenerate_grid(self):
        with pytest.raises(PreconditionError):
            consistency_check([2.0, -1.0], grid=(0.0, 1.0, 0.0))
        with pytest.raises(PreconditionError):
            consistency_check([2.0, -1.0], grid=(0.0, 0.02, 0.01))

    def test_json_keys(self):
        assert set(consistency_check([2.0, -1.0]).to_json()) == {"grid_step", "beta", "r2", "inferred_order"}
