import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plurizero.compact_weight import make_compact
from plurizero.errors import SingularGramError, ZeroSetPoint
from plurizero.poly_core import (
    BasisFamily,
    Polynomial,
    Quadrature,
    bergman_gamma,
    build_orthonormal_basis,
    chebyshev_basis,
    eval_basis,
    log_decompose,
    monomial_basis,
    multi_indices,
    normalize_sup,
    space_dimension,
    unit_section,
    weighted_sup,
)


@pytest.mark.parametrize("m,n,d", [(1, 5, 6), (2, 3, 10), (3, 0, 1)])
def test_space_dimension(m, n, d):
    assert space_dimension(m, n) == d
    assert len(multi_indices(m, n)) == d


def test_multi_indices_grlex():
    assert multi_indices(2, 2) == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


def test_eval_monomials():
    np.testing.assert_allclose(eval_basis(monomial_basis(1, 2), 2.0), [1, 2, 4])


def test_first_member_constant():
    b = chebyshev_basis(6)
    vals = eval_basis(b, np.array([0.3 + 0.2j, -2.0, 5j]))
    np.testing.assert_allclose(vals[:, 0], 1.0)


def test_chebyshev_bounded_on_interval():
    x = np.linspace(-1, 1, 201)
    assert np.max(np.abs(eval_basis(chebyshev_basis(1), x))) <= 1 + 1e-12
    assert np.max(np.abs(eval_basis(chebyshev_basis(12), x))) <= 1 + 1e-9


@pytest.mark.parametrize("z,expected", [(1.0, 4.0), (1j, 4.0), (np.exp(0.7j), 4.0)])
def test_gamma_on_unit_circle(z, expected):
    assert bergman_gamma(monomial_basis(1, 3), z) == pytest.approx(expected, abs=1e-12)


def test_gamma_at_two():
    assert bergman_gamma(monomial_basis(1, 2), 2.0) == pytest.approx(21.0)


def test_gamma_circle_orthonormal_at_zero():
    kq = make_compact("circle")
    b = build_orthonormal_basis(kq.measure(), kq.weight, 8)
    assert bergman_gamma(b, 0.0) == pytest.approx(1.0, abs=1e-10)


def test_unit_section_examples():
    np.testing.assert_allclose(unit_section(monomial_basis(1, 1), 0.0), [1, 0])
    np.testing.assert_allclose(unit_section(monomial_basis(1, 1), 1.0), [1 / math.sqrt(2)] * 2)


@settings(max_examples=50, deadline=None)
@given(st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False), st.integers(1, 12))
def test_unit_section_norm(z, n):
    assert np.linalg.norm(unit_section(monomial_basis(1, n), z)) == pytest.approx(1.0, abs=1e-12)


def test_log_decompose_constant():
    a = np.array([1.0, 0.0])
    u, g = log_decompose(a, monomial_basis(1, 1), 0.0)
    assert u + g == pytest.approx(0.0, abs=1e-15)


def test_log_decompose_identity_random():
    rng = np.random.default_rng(3)
    for _ in range(1000):
        n = int(rng.integers(1, 15))
        b = monomial_basis(1, n)
        a = rng.standard_normal(n + 1) + 1j * rng.standard_normal(n + 1)
        z = complex(*rng.uniform(-2, 2, 2))
        u, g = log_decompose(a, b, z)
        direct = math.log(abs(b.polynomial(a)(z))) / n
        assert u + g == pytest.approx(direct, rel=1e-10, abs=1e-12)


def test_log_decompose_zero_set():
    b = monomial_basis(1, 1)
    with pytest.raises(ZeroSetPoint):
        log_decompose(np.array([-1.0, 1.0]), b, 1.0)


def test_circle_trapezoid_gives_monomials():
    N = 4 * 2 + 4
    z = np.exp(2j * np.pi * np.arange(N) / N)
    b = build_orthonormal_basis(Quadrature(z[:, None], np.full(N, 1 / N)), None, 2)
    np.testing.assert_allclose(np.abs(b.matrix), np.eye(3), atol=1e-12)


def test_gram_identity_and_chebyshev():
    kq = make_compact("interval")
    b = build_orthonormal_basis(kq.measure(), None, 1)
    x = np.linspace(-1, 1, 7)
    vals = eval_basis(b, x)
    np.testing.assert_allclose(np.abs(vals[:, 0]), 1, atol=1e-10)
    np.testing.assert_allclose(np.abs(vals[:, 1]), math.sqrt(2) * np.abs(x), atol=1e-10)
    Q = kq.measure()
    V = eval_basis(b, Q.nodes[:, 0])
    G = (V.conj().T * Q.weights) @ V
    np.testing.assert_allclose(G, np.eye(2), atol=1e-8)


def test_gram_2d():
    kq = make_compact("polydisk")
    b = build_orthonormal_basis(kq.measure(), kq.weight, 4)
    Q = kq.measure()
    V = b.evaluate(Q.nodes)
    G = (V.conj().T * Q.weights) @ V
    assert np.max(np.abs(G - np.eye(b.dim))) <= 1e-8


def test_singular_gram():
    with pytest.raises(SingularGramError):
        build_orthonormal_basis(Quadrature(np.array([[0.5 + 0j]]), np.array([1.0])), None, 1)


def test_normalize_sup_monomials_unchanged():
    kq = make_compact("unit_disk")
    b = normalize_sup(monomial_basis(1, 5), kq)
    np.testing.assert_allclose(b.matrix, np.eye(6), atol=1e-12)


def test_normalize_sup_scaling():
    kq = make_compact("unit_disk")
    raw = BasisFamily(1, 1, np.diag([1.0, 2.0]))
    b = normalize_sup(raw, kq)
    np.testing.assert_allclose(b.matrix, np.eye(2), atol=1e-12)


def test_normalize_sup_refinement():
    kq = make_compact("interval", resolution=128)
    b = normalize_sup(chebyshev_basis(10), kq)
    fine = kq.refined(2)
    pts = fine.sup_points()
    assert np.max(weighted_sup(b, pts, fine.weight_values(pts))) <= 1 + 5e-3


def test_gamma_floor_and_chain():
    kq = make_compact("unit_disk")
    rng = np.random.default_rng(0)
    z = rng.uniform(-3, 3, 300) + 1j * rng.uniform(-3, 3, 300)
    for n in (5, 20):
        b = normalize_sup(monomial_basis(1, n), kq)
        g = bergman_gamma(b, z)
        assert np.all(g >= 1 - 1e-12)
        V = np.log(np.maximum(np.abs(z), 1))
        assert np.all(np.log(g) / (2 * n) <= math.log(n + 1) / (2 * n) + V + 1e-12)


def test_polynomial_roundtrip_and_json():
    b = chebyshev_basis(4)
    again = BasisFamily.from_json(b.to_json())
    np.testing.assert_allclose(again.matrix, b.matrix)
    p = Polynomial.from_dense([1, 2, 3])
    assert p(2.0) == pytest.approx(17)
