import math

import numpy as np
import pytest
from scipy import stats

from plurizero.ensembles import (
    CertificateCache,
    CoefficientLaw,
    MomentCertificate,
    empirical_moment_check,
    moment_constant,
    random_unit_vectors,
    sample_batch,
    summability_audit,
)
from plurizero.rng import stream

GAUSS = CoefficientLaw("gaussian")
FS = CoefficientLaw("fubini_study")
HEAVY = CoefficientLaw("heavy_tail_iid", gamma=5.0)


def test_gaussian_unit_variance():
    a = sample_batch(GAUSS, 4, 100_000, stream(0, "t"))
    np.testing.assert_allclose(np.mean(np.abs(a) ** 2, axis=0), 1.0, rtol=0.02)


def test_fubini_study_pushforward():
    a = sample_batch(FS, 2, 20_000, stream(1, "t"))
    s = np.sum(np.abs(a) ** 2, axis=1)
    u = s / (1 + s)
    # for dim 2 the law of |a|^2/(1+|a|^2) is Beta(2, 1)
    assert stats.kstest(u, stats.beta(2, 1).cdf).pvalue > 0.01


def test_heavy_tail_parameters():
    assert HEAVY.density_bound == pytest.approx(0.46623, abs=1e-5)
    assert HEAVY.delta == pytest.approx(0.58588, abs=1e-5)
    r = np.linspace(0, 0.5, 101)
    assert np.max(HEAVY.planar_density(r)) <= HEAVY.density_bound + 1e-15


def test_heavy_tail_tail_bound():
    a = sample_batch(HEAVY, 1, 200_000, stream(2, "tail"))[:, 0]
    L = np.log(np.abs(a))
    for R in (2, 4):
        emp = np.mean(L > R)
        exact = HEAVY.tail_probability(R)
        assert exact <= HEAVY.delta / R**5
        assert abs(emp - exact) <= 4 * math.sqrt(exact / len(L))


@pytest.mark.parametrize("gamma,m", [(2.0, 1), (4.0, 2), (1.0, 1)])
def test_heavy_tail_rejects_small_gamma(gamma, m):
    with pytest.raises(ValueError, match="gamma must exceed 2m"):
        CoefficientLaw("heavy_tail_iid", gamma=gamma, m=m)


def test_heavy_tail_rejects_small_delta():
    with pytest.raises(ValueError):
        CoefficientLaw("heavy_tail_iid", gamma=5.0, delta=0.1)


def test_signed_moments():
    g = moment_constant(GAUSS, 1.0, signed=True)
    assert g.D == pytest.approx(-np.euler_gamma / 2, abs=1e-10)
    f = moment_constant(FS, 1.0, signed=True)
    assert abs(f.D) <= 1e-8


def test_moment_values_by_alpha():
    from scipy.integrate import quad
    for alpha in (1, 2, 3):
        c = moment_constant(GAUSS, alpha)
        direct = quad(lambda r: abs(math.log(r)) ** alpha * 2 * r * math.exp(-r * r), 0, 1)[0] + \
            quad(lambda r: abs(math.log(r)) ** alpha * 2 * r * math.exp(-r * r), 1, np.inf)[0]
        assert c.D == pytest.approx(direct, rel=1e-8)
    assert moment_constant(GAUSS, 2.0).D == pytest.approx(0.494528, abs=1e-6)


def test_invariance_ks():
    rng = stream(5, "ks")
    V = random_unit_vectors(8, 6, rng)
    A = sample_batch(GAUSS, 6, 100_000, rng)
    x = np.abs(A @ V.T)
    for j in range(1, 8):
        assert stats.ks_2samp(x[:, 0], x[:, j]).pvalue > 0.01 / 7


def test_empirical_checks():
    rep = empirical_moment_check(GAUSS, 8, 2.0, 20_000, seed=0)
    assert rep.pooled_passed
    a = empirical_moment_check(FS, 2, 2.0, 20_000, seed=0)
    b = empirical_moment_check(FS, 16, 2.0, 20_000, seed=0)
    assert abs(a.pooled_estimate - b.pooled_estimate) <= 3 * math.hypot(a.pooled_se, b.pooled_se)
    cert = moment_constant(HEAVY, 2.0, mc_trials=20_000)
    h = empirical_moment_check(HEAVY, 8, 2.0, 20_000, seed=1, certificate=cert)
    assert h.passed


def test_empirical_check_needs_trials():
    with pytest.raises(ValueError):
        empirical_moment_check(GAUSS, 2, 2.0, 100, seed=0)


def test_summability():
    g = summability_audit(GAUSS, 2.0, 1, 256)
    assert g.tail_exponent == pytest.approx(-2.0, abs=1e-9)
    assert g.partial_sums[-1] < g.limit_estimate
    assert g.partial_sums[-1] == pytest.approx(g.limit_estimate, rel=0.01)
    cert = MomentCertificate(2.0, 1.0, "monte_carlo_bound", growth=2 / 5)
    h = summability_audit(HEAVY, 2.0, 1, 512, certificate=cert)
    assert h.tail_exponent == pytest.approx(-1.6, abs=0.01)


def test_reproducible_streams():
    a = sample_batch(HEAVY, 5, 10, stream(9, "x", 3, 4))
    b = sample_batch(HEAVY, 5, 10, stream(9, "x", 3, 4))
    c = sample_batch(HEAVY, 5, 10, stream(9, "x", 3, 5))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_certificate_cache(tmp_path):
    cache = CertificateCache(tmp_path / "c.json")
    c1 = moment_constant(GAUSS, 2.0, cache=cache)
    again = CertificateCache(tmp_path / "c.json").get(GAUSS.key(2.0))
    assert again == c1


def test_custom_law_shape_check():
    law = CoefficientLaw("custom", sampler=lambda rng, shape: rng.standard_normal(shape), name="real")
    assert sample_batch(law, 3, 4, stream(0, "c")).shape == (4, 3)
    bad = CoefficientLaw("custom", sampler=lambda rng, shape: np.zeros(3), name="bad")
    with pytest.raises(ValueError):
        sample_batch(bad, 3, 4, stream(0, "c"))
