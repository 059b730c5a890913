import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import dct_matrix, pyramid_haar
from tomoprior.core import ConfigError
from tomoprior.transforms import BasisKind, analyze, coeff_shape, synthesize

BASES = (BasisKind.DCT2, BasisKind.HAAR2)
shapes = st.tuples(st.integers(1, 12), st.integers(1, 12))


def images(shape):
    return arrays(np.float64, shape, elements=st.floats(-10, 10))


@pytest.mark.parametrize("basis", BASES)
def test_zero_in_zero_out(basis):
    assert not analyze(np.zeros((8, 8)), basis).any()
    assert not synthesize(np.zeros(coeff_shape(basis, 8, 8)), basis, 8, 8).any()


def test_constant_image_has_single_dc_coefficient():
    c, n = 0.7, 8
    theta = analyze(np.full((n, n), c), BasisKind.DCT2)
    assert theta[0, 0] == pytest.approx(c * n)
    theta[0, 0] = 0.0
    assert np.max(np.abs(theta)) < 1e-13


def test_dct_matches_definition(rng):
    x = rng.standard_normal((6, 9))
    ref = dct_matrix(6) @ x @ dct_matrix(9).T
    np.testing.assert_allclose(analyze(x, BasisKind.DCT2), ref, atol=1e-12)


def test_haar_matches_matrix_pyramid(rng):
    x = rng.standard_normal((16, 16))
    np.testing.assert_allclose(analyze(x, BasisKind.HAAR2), pyramid_haar(x), atol=1e-12)


def test_haar_pads_non_power_of_two():
    assert coeff_shape(BasisKind.HAAR2, 12, 5) == (16, 16)
    assert coeff_shape(BasisKind.DCT2, 12, 5) == (5, 12)
    with pytest.raises(ConfigError):
        synthesize(np.zeros((12, 12)), BasisKind.HAAR2, 12, 12)


@pytest.mark.parametrize("basis", BASES)
def test_parseval_8x8(basis, rng):
    x = rng.standard_normal((8, 8))
    assert np.linalg.norm(analyze(x, basis)) == pytest.approx(np.linalg.norm(x), rel=1e-12)


@pytest.mark.parametrize("basis", BASES)
def test_round_trip_16x16(basis, rng):
    x = rng.standard_normal((16, 16))
    assert np.max(np.abs(synthesize(analyze(x, basis), basis, 16, 16) - x)) <= 1e-10


@pytest.mark.parametrize("basis", BASES)
def test_unit_coefficient_gives_unit_norm_basis_image(basis):
    shape = coeff_shape(basis, 8, 8)
    for idx in [(0, 0), (3, 5), (7, 7)]:
        c = np.zeros(shape)
        c[idx] = 1.0
        img = synthesize(c, basis, 8, 8)
        assert np.linalg.norm(img) == pytest.approx(1.0, rel=1e-12)
        # and analysing it recovers the same unit coefficient
        np.testing.assert_allclose(analyze(img, basis), c, atol=1e-12)


@given(shapes.flatmap(lambda s: st.tuples(images(s), images(s))), st.sampled_from(BASES))
def test_inner_products_preserved(pair, basis):
    a, b = pair
    lhs = np.vdot(analyze(a, basis), analyze(b, basis))
    rhs = np.vdot(a, b)
    assert abs(lhs - rhs) <= 1e-10 * (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12)


@given(shapes.flatmap(images), st.sampled_from(BASES))
def test_perfect_reconstruction_any_shape(x, basis):
    h, w = x.shape
    back = synthesize(analyze(x, basis), basis, w, h)
    assert np.max(np.abs(back - x)) <= 1e-10 * (1 + np.max(np.abs(x)))


@given(shapes, st.sampled_from(BASES), st.integers(0, 10_000))
def test_coefficients_round_trip_on_dct_domain(shape, basis, seed):
    # synthesize then analyze is the identity when no padding is involved
    h, w = shape
    if basis is BasisKind.HAAR2 and coeff_shape(basis, w, h) != (h, w):
        return
    c = np.random.default_rng(seed).standard_normal(coeff_shape(basis, w, h))
    np.testing.assert_allclose(analyze(synthesize(c, basis, w, h), basis), c, atol=1e-10)


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 10_000), st.sampled_from(BASES))
def test_linearity(a, b, seed, basis):
    r = np.random.default_rng(seed)
    x1, x2 = r.standard_normal((8, 8)), r.standard_normal((8, 8))
    np.testing.assert_allclose(analyze(a * x1 + b * x2, basis),
                               a * analyze(x1, basis) + b * analyze(x2, basis), atol=1e-11)


def test_pixel_basis_is_identity(rng):
    x = rng.standard_normal((5, 3))
    np.testing.assert_array_equal(analyze(x, BasisKind.PIXEL), x)
    np.testing.assert_array_equal(synthesize(x, BasisKind.PIXEL, 3, 5), x)
