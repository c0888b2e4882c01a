import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedkan import diffcore as dc
from fedkan.diffcore import Tensor
from fedkan.errors import ConfigError, DimensionError
from fedkan.spline import basis_eval, basis_values, make_grid, spline_eval

from conftest import FD_TOL, central_difference, relative_error, scalar_bspline


def test_make_grid_examples():
    g = make_grid(1, 0, 0, 1)
    np.testing.assert_array_equal(g.knots, [0.0, 1.0])
    assert g.num_basis == 1

    g = make_grid(5, 3, -2, 2)
    assert g.knots.size == 12 and g.num_basis == 8
    np.testing.assert_allclose(g.knots, -4.4 + 0.8 * np.arange(12), atol=1e-12)
    np.testing.assert_allclose(np.diff(g.knots), 0.8, atol=1e-12)

    np.testing.assert_array_equal(make_grid(2, 1, 0, 2).knots, [-1.0, 0.0, 1.0, 2.0, 3.0])
    assert make_grid(2, 1, 0, 2).num_basis == 3


@pytest.mark.parametrize("args", [(0, 3, -1, 1), (5, 3, 1, 1), (5, 3, 2, -2), (5, -1, -1, 1)])
def test_make_grid_rejects_bad_config(args):
    with pytest.raises(ConfigError):
        make_grid(*args)


def test_degree_zero_indicator():
    np.testing.assert_array_equal(basis_values(make_grid(1, 0, 0, 1), 0.5), [1.0])


def test_cardinal_cubic_values():
    # On a unit knot interval with local coordinate u the four live cubic pieces are
    # u^3/6, (-3u^3 + 3u^2 + 3u + 1)/6, (3u^3 - 6u^2 + 4)/6 and (1 - u)^3/6;
    # at u = 0 they give 0, 1/6, 2/3, 1/6.
    g = make_grid(4, 3, 0.0, 4.0)
    values = basis_values(g, 1.0)  # basis 2 has support [-1, 3], centred on x = 1
    np.testing.assert_allclose(values[[1, 2, 3]], [1 / 6, 2 / 3, 1 / 6], atol=1e-12)
    np.testing.assert_allclose(np.delete(values, [1, 2, 3]), 0.0, atol=1e-12)


def test_basis_matches_scalar_recursion(np_rng):
    for G in (1, 3, 5):
        for k in range(5):
            g = make_grid(G, k, -1.3, 2.1)
            xs = np_rng.uniform(-1.3, 2.1, 20)
            fast = basis_values(g, xs)
            slow = np.array([[scalar_bspline(g.knots, i, k, x) for i in range(g.num_basis)] for x in xs])
            np.testing.assert_allclose(fast, slow, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(G=st.integers(1, 10), k=st.integers(0, 4), lo=st.floats(-5, 5), width=st.floats(0.1, 10), seed=st.integers(0, 2**16))
def test_partition_of_unity_and_nonnegativity(G, k, lo, width, seed):
    g = make_grid(G, k, lo, lo + width)
    xs = np.concatenate([np.random.default_rng(seed).uniform(g.lo, g.hi, 100), [g.lo, g.hi]])
    b = basis_values(g, xs)
    assert b.shape == (xs.size, G + k)
    np.testing.assert_allclose(b.sum(axis=1), 1.0, atol=1e-12)
    assert (b >= -1e-15).all()


def test_local_support(np_rng):
    g = make_grid(6, 3, -2, 2)
    xs = np_rng.uniform(-6, 6, 500)
    b = basis_values(g, xs)
    for i in range(g.num_basis):
        lo, hi = g.knots[i], g.knots[i + g.order + 1]
        outside = (xs < lo) | (xs > hi)
        assert np.all(b[outside, i] == 0.0)


def test_out_of_domain_uses_extended_knots():
    g = make_grid(5, 3, -2, 2)
    b = basis_values(g, np.array([-3.0, 2.5, 10.0]))
    assert b[0].sum() > 0 and b[1].sum() > 0
    assert b[2].sum() == 0.0


def test_spline_eval_examples(np_rng):
    g = make_grid(5, 3, -2, 2)
    xs = np_rng.uniform(-2, 2, 50)
    np.testing.assert_allclose(spline_eval(g, np.full(8, 1.7), xs).value, 1.7, atol=1e-12)
    np.testing.assert_array_equal(spline_eval(g, np.zeros(8), xs).value, np.zeros(50))
    coeffs = np_rng.normal(size=8)
    naive = [sum(c * scalar_bspline(g.knots, i, 3, x) for i, c in enumerate(coeffs)) for x in xs]
    np.testing.assert_allclose(spline_eval(g, coeffs, xs).value, naive, atol=1e-12)


def test_spline_eval_coefficient_length_mismatch():
    with pytest.raises(DimensionError):
        spline_eval(make_grid(5, 3), np.zeros(7), np.zeros(3))


@pytest.mark.parametrize("k", [2, 3, 4])
def test_spline_gradients_match_finite_differences(k):
    rng = np.random.default_rng(100 + k)
    for _ in range(50):
        G = int(rng.integers(1, 8))
        g = make_grid(G, k, -2, 2)
        coeffs = rng.normal(size=g.num_basis)
        xs = rng.uniform(-2, 2, 6)
        c_t, x_t = Tensor(coeffs, requires_grad=True), Tensor(xs, requires_grad=True)
        out = spline_eval(g, c_t, x_t)
        dc.sum(out * out).backward()

        def f_c(c):
            return float((spline_eval(g, c, xs).value ** 2).sum())

        def f_x(x):
            return float((spline_eval(g, coeffs, x).value ** 2).sum())

        assert relative_error(c_t.grad, central_difference(f_c, coeffs)) < FD_TOL
        assert relative_error(x_t.grad, central_difference(f_x, xs)) < FD_TOL


def test_basis_eval_is_differentiable_in_x():
    g = make_grid(5, 3, -2, 2)
    x = Tensor(np.array([0.3, -1.1]), requires_grad=True)
    w = np.random.default_rng(3).normal(size=(2, 8))
    dc.sum(dc.einsum("nb,nb->n", basis_eval(g, x), w)).backward()
    fd = central_difference(lambda v: float((basis_values(g, v) * w).sum()), x.value)
    assert relative_error(x.grad, fd) < FD_TOL
