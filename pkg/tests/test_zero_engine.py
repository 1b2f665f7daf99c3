import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plurizero.compact_weight import TestForm
from plurizero.errors import NonGenericSystemError, UnsupportedPairing
from plurizero.poly_core import Polynomial
from plurizero.zero_engine import (
    ZeroSample,
    backward_error,
    pairing_poincare_lelong,
    pairing_root_sum,
    resultant_y,
    roots_univariate,
    solve_system_2d,
)


def _sorted(z):
    z = np.asarray(z).ravel()
    return z[np.lexsort((np.round(z.imag, 8), np.round(z.real, 8)))]


def test_cube_roots():
    zs = roots_univariate([-1, 0, 0, 1])
    expected = np.exp(2j * np.pi * np.arange(3) / 3)
    np.testing.assert_allclose(_sorted(zs.points), _sorted(expected), atol=1e-12)
    assert list(zs.multiplicities) == [1, 1, 1]


def test_double_root():
    zs = roots_univariate([4, -4, 1])
    assert zs.points.shape == (1, 1)
    assert zs.points[0, 0] == pytest.approx(2.0, abs=1e-10)
    assert list(zs.multiplicities) == [2]


def test_random_degree_50_residual():
    rng = np.random.default_rng(0)
    c = rng.standard_normal(51) + 1j * rng.standard_normal(51)
    zs = roots_univariate(c)
    assert zs.total == 50
    vals = np.polyval(c[::-1], zs.points[:, 0])
    assert np.max(np.abs(vals)) / np.linalg.norm(c) <= 1e-8 * np.max(np.abs(zs.points)) ** 50
    assert zs.residual <= 1e-12


def test_counts_match_degree():
    rng = np.random.default_rng(1)
    for n in (1, 2, 7, 40, 150):
        c = rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1)
        assert roots_univariate(c).total == n


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 2**31 - 1))
def test_conjugation_equivariance(n, seed):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1)
    a = _sorted(roots_univariate(c).points)
    b = _sorted(np.conj(roots_univariate(np.conj(c)).points))
    np.testing.assert_allclose(a, b, atol=1e-10 * max(1, np.max(np.abs(a))))


@pytest.mark.parametrize("scale", [1e-6, 1e6])
def test_scale_invariance(scale):
    rng = np.random.default_rng(2)
    c = rng.standard_normal(21) + 1j * rng.standard_normal(21)
    a = _sorted(roots_univariate(c).points)
    b = _sorted(roots_univariate(scale * c).points)
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-12)


def test_backward_error_small():
    c = np.array([2.0, -3.0, 1.0])
    assert np.max(backward_error(c, np.array([1.0, 2.0]))) <= 1e-15


def test_zero_polynomial_rejected():
    with pytest.raises(ValueError):
        roots_univariate([0, 0, 0])


def _grid(entries, shape):
    C = np.zeros(shape, complex)
    for (i, j), v in entries.items():
        C[i, j] = v
    return C


def test_system_hyperbola_diagonal():
    P = _grid({(1, 1): 1, (0, 0): -1}, (2, 2))
    Q = _grid({(1, 0): 1, (0, 1): -1}, (2, 2))
    zs = solve_system_2d(P, Q)
    pts = sorted(map(tuple, np.round(zs.points.real, 10)))
    assert pts == [(-1.0, -1.0), (1.0, 1.0)]


def test_system_circle_axis():
    P = _grid({(2, 0): 1, (0, 2): 1, (0, 0): -1}, (3, 3))
    Q = _grid({(0, 1): 1}, (2, 2))
    zs = solve_system_2d(P, Q)
    np.testing.assert_allclose(np.sort(zs.points[:, 0].real), [-1, 1], atol=1e-12)
    np.testing.assert_allclose(zs.points[:, 1], 0, atol=1e-12)


def _curve(n, rng):
    C = np.zeros((n + 1, n + 1), complex)
    for i in range(n + 1):
        for j in range(n + 1 - i):
            C[i, j] = (rng.standard_normal() + 1j * rng.standard_normal()) / math.sqrt(2)
    return C


def test_bezout_random_cubics():
    rng = np.random.default_rng(3)
    for _ in range(20):
        zs = solve_system_2d(_curve(3, rng), _curve(3, rng))
        assert zs.total == 9
        assert zs.residual <= 1e-7


def test_bezout_rate_degree_8():
    rng = np.random.default_rng(4)
    counts = [solve_system_2d(_curve(8, rng), _curve(8, rng), expected=64).total for _ in range(30)]
    assert np.mean(np.array(counts) == 64) >= 0.99


def test_common_factor_is_nongeneric():
    P = _grid({(1, 0): 1, (0, 0): -1}, (2, 2))  # x - 1
    Q = _grid({(1, 1): 1, (0, 1): -1}, (2, 2))  # (x - 1) y
    with pytest.raises(NonGenericSystemError):
        solve_system_2d(P, Q)


def test_resultant_eliminates_y():
    P = _grid({(1, 1): 1, (0, 0): -1}, (2, 2))
    Q = _grid({(1, 0): 1, (0, 1): -1}, (2, 2))
    r = resultant_y(P, Q)
    vals = [abs(r(x)) for x in (1.0, -1.0)]
    assert max(vals) <= 1e-10
    assert abs(r(0.5)) > 1e-3


def test_root_sum_examples():
    zs = roots_univariate([-1, 0, 0, 1])
    # a radial form takes one value on the unit circle, so the mass n/n times that value
    big = TestForm(0, 100.0)
    assert pairing_root_sum(zs, big).value == pytest.approx(float(big(1.0)), abs=1e-14)
    assert pairing_root_sum(zs, TestForm(5.0, 0.5)).value == 0.0


def test_poincare_lelong_examples():
    phi = TestForm(0, 1.0)
    # quadrature budget of the dual-pairing identity, 1e-5 + 1e-4 c_phi / n
    tol = 1e-5 + 1e-4 * phi.c_phi
    assert pairing_poincare_lelong(Polynomial.from_dense([0, 1]), phi, 1).value == pytest.approx(float(phi(0.0)), abs=tol)
    f = Polynomial.from_dense(np.poly([0.2, -0.3 + 0.1j])[::-1])
    want = (float(phi(0.2)) + float(phi(-0.3 + 0.1j))) / 2
    assert pairing_poincare_lelong(f, phi, 2).value == pytest.approx(want, abs=tol / 2)
    # the log singularities converge slowly; 1e-6 needs a 512-division grid
    assert pairing_poincare_lelong(f, phi, 2, divisions=512).value == pytest.approx(want, abs=1e-6)
    with pytest.raises(ValueError):
        pairing_poincare_lelong(Polynomial.from_dense([3.0]), phi, 0)


def test_dual_method_degree_20():
    rng = np.random.default_rng(6)
    c = (rng.standard_normal(21) + 1j * rng.standard_normal(21)) / math.sqrt(2)
    phi = TestForm(0.1 + 0.2j, 0.9)
    a = pairing_root_sum(roots_univariate(c), phi).value
    b = pairing_poincare_lelong(Polynomial.from_dense(c), phi, 20).value
    assert a == pytest.approx(b, abs=1e-5)


def test_root_sum_needs_points():
    zs = ZeroSample(np.zeros((0, 2), complex), np.zeros(0, int), 1, 3, 0.0, "x")
    with pytest.raises(UnsupportedPairing):
        pairing_root_sum(zs, TestForm((0, 0), 1.0))


def test_to_csv():
    text = roots_univariate([-1, 0, 1]).to_csv()
    assert text.splitlines()[0].startswith("index") or "," in text.splitlines()[0]
    assert len(text.strip().splitlines()) == 3
