import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from harmonic_patchwork import AnalyticFamily, ComplexPolynomial, Window, antiderivative, evaluate, gradient, harmonic_part, make_family
from harmonic_patchwork.errors import FamilyError
from harmonic_patchwork.piecewise import cusp_family

real = st.floats(-5, 5, allow_subnormal=False)
coef = st.builds(complex, real, real)
polys = st.lists(coef, min_size=0, max_size=5).map(lambda c: ComplexPolynomial(tuple(c)))


def test_evaluate_examples():
    assert evaluate(ComplexPolynomial((4, 2)), 0) == 4
    assert evaluate(ComplexPolynomial(()), 3 + 4j) == 0
    assert evaluate(ComplexPolynomial((0, 0, 1)), 1 + 1j) == 2j


def test_evaluate_array_shape():
    z = np.linspace(-1, 1, 7) + 0.5j
    assert evaluate(ComplexPolynomial((1, 2)), z).shape == z.shape
    assert np.all(evaluate(ComplexPolynomial(()), z) == 0)


def test_zero_and_trailing_zeros():
    assert ComplexPolynomial((0, 0)) == ComplexPolynomial(())
    assert ComplexPolynomial((1, 2, 0)) == ComplexPolynomial((1, 2))
    assert ComplexPolynomial(()).degree == -1
    assert ComplexPolynomial((3, 0, 1j)).degree == 2


def test_antiderivative_examples():
    assert antiderivative(ComplexPolynomial((4, 2)), 0).coeffs == (0, 4, 1)
    assert antiderivative(ComplexPolynomial(()), 2 + 1j).is_zero()
    F = antiderivative(ComplexPolynomial((1,)), 1 + 1j)
    assert F.coeffs == (-(1 + 1j), 1)


@given(polys, coef)
def test_antiderivative_roundtrip(p, base):
    F = antiderivative(p, base)
    dp = F.derivative()
    assert dp.degree == p.degree
    np.testing.assert_allclose(dp.coeffs, p.coeffs, rtol=1e-14, atol=1e-300)
    assert abs(evaluate(F, base)) <= 1e-12 * (1 + sum(abs(c) for c in F.coeffs) * (1 + abs(base)) ** 6)


def test_harmonic_part_cusp_members():
    f = cusp_family()
    rng = np.random.default_rng(0)
    z = rng.uniform(-1, 1, 50) + 1j * rng.uniform(-1, 1, 50)
    x, y = z.real, z.imag
    np.testing.assert_allclose(harmonic_part(f, 2, z), 4 * x + x**2 - y**2, atol=1e-14)
    np.testing.assert_allclose(harmonic_part(f, 3, z), -x, atol=1e-14)
    np.testing.assert_array_equal(harmonic_part(f, 1, z), 0)
    for i in (1, 2, 3):
        assert harmonic_part(f, i, 0) == 0


def test_gradient_examples():
    f = cusp_family()
    assert gradient(f, 2, 0) == 4
    assert gradient(f, 2, 1j) == 4 - 2j
    g = make_family([1, 1j])
    assert gradient(g, 2, 0.3 + 0.1j) == -1j


def test_index_out_of_range():
    f = cusp_family()
    with pytest.raises(IndexError):
        harmonic_part(f, 0, 0)
    with pytest.raises(IndexError):
        gradient(f, 4, 0)


def random_family(rng, r=3, deg=3):
    members = [rng.normal(size=deg + 1) + 1j * rng.normal(size=deg + 1) for _ in range(r)]
    return make_family(members, complex(*rng.uniform(-0.5, 0.5, 2)))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    f = random_family(rng)
    step = 1e-5 * f.window.diagonal
    z = rng.uniform(-1, 1, 1000) + 1j * rng.uniform(-1, 1, 1000)
    for i in range(1, f.r + 1):
        gx = (harmonic_part(f, i, z + step) - harmonic_part(f, i, z - step)) / (2 * step)
        gy = (harmonic_part(f, i, z + 1j * step) - harmonic_part(f, i, z - 1j * step)) / (2 * step)
        g = gradient(f, i, z)
        rel = np.abs(gx + 1j * gy - g) / np.maximum(np.abs(g), 1)
        assert rel.max() <= 1e-6


def test_mean_value_property():
    rng = np.random.default_rng(2)
    f = random_family(rng, r=2, deg=4)
    t = np.exp(2j * np.pi * np.arange(720) / 720)
    for _ in range(20):
        c = complex(*rng.uniform(-0.5, 0.5, 2))
        rho = rng.uniform(0.05, 0.45)
        for i in (1, 2):
            avg = harmonic_part(f, i, c + rho * t).mean()
            val = harmonic_part(f, i, c)
            assert abs(avg - val) <= 1e-8 * max(abs(val), np.abs(harmonic_part(f, i, c + rho * t)).max(), 1e-12)


def test_family_invariants():
    with pytest.raises(FamilyError):
        make_family([1])
    with pytest.raises(FamilyError):
        make_family([[1, 2], [1, 2, 0]])
    with pytest.raises(FamilyError):
        make_family([1, 2], base_point=5)
    f = make_family([1, 2], window=Window(0, 0, 2, 1), base_point=0.5 + 0.5j)
    assert f.r == 2
    assert f.values(0).shape == (2,)


def test_family_is_immutable():
    f = make_family([1, 1j])
    with pytest.raises(Exception):
        f.base_point = 1
