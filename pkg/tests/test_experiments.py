import math

import numpy as np
import pytest

from plurizero.compact_weight import TestForm, make_compact
from plurizero.ensembles import CoefficientLaw
from plurizero.errors import SingularGramError
from plurizero.experiments import (
    Setup,
    almost_sure_trajectory,
    basis_for,
    bm_constant,
    bm_experiment,
    collect_pairings,
    exact_expectation_check,
    expected_distribution_experiment,
    finite_n_target,
    mean_se,
    variance_jackknife,
)
from plurizero.poly_core import BasisFamily, Quadrature

GAUSS = CoefficientLaw("gaussian")
DISK = ("unit_disk", "0", None)


def test_inner_form_mean_vanishes():
    s = Setup("expected", GAUSS, DISK, degrees=(60,), trials=100, forms=(TestForm(0, 0.45),))
    rep = expected_distribution_experiment(s)
    row = rep.rows[0]
    assert abs(row["mean"]) <= max(0.01, 3 * row["se"])
    assert row["target"] == pytest.approx(0.0, abs=1e-12)


def test_se_scales_like_root_t():
    phi = (TestForm(0.8, 0.6),)
    ses = []
    for T in (50, 200, 800):
        s = Setup("expected", GAUSS, DISK, degrees=(20,), trials=T, forms=phi)
        ses.append(mean_se(collect_pairings(s, tag="clt")[0][20][:, 0])[1])
    ratio = ses[0] / ses[2]
    assert 4 * 0.8 <= ratio <= 4 * 1.2


def test_exact_expectation_fs():
    s = Setup("exact", CoefficientLaw("fubini_study"), DISK, degrees=(10,), trials=600, forms=(TestForm(0, 1.5),))
    rep = exact_expectation_check(s)
    assert rep.passed, rep.audits


def test_unitary_mixing_keeps_gamma():
    b = basis_for(DISK, "monomial", 6)
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((7, 7)) + 1j * rng.standard_normal((7, 7))
    U, _ = np.linalg.qr(Z)
    U[:, 0] = 0
    U[0, :] = 0
    U[0, 0] = 1
    U[1:, 1:], _ = np.linalg.qr(Z[1:, 1:])
    mixed = BasisFamily(1, 6, U @ b.matrix)
    phi = TestForm(0.5, 0.8)
    assert finite_n_target(mixed, phi) == pytest.approx(finite_n_target(b, phi), abs=1e-12)


def test_exact_rejects_heavy_tail():
    s = Setup("exact", CoefficientLaw("heavy_tail_iid", gamma=5.0), DISK, degrees=(10,), trials=10, forms=(TestForm(0, 1),))
    with pytest.raises(ValueError):
        exact_expectation_check(s)


def test_trajectory_two_seeds():
    forms = (TestForm(0, 1.5),)
    degs = tuple(range(20, 301, 40))
    last = []
    for seed in (0, 1):
        rep = almost_sure_trajectory(Setup("trajectory", GAUSS, DISK, degrees=degs, forms=forms, seed=seed))
        assert rep.passed
        last.append(rep.rows[-1]["pairing"])
    assert abs(last[0] - last[1]) <= 0.05


def test_bm_circle_and_singular():
    kq = make_compact("circle", resolution=1024)
    for n in (10, 50):
        assert bm_constant(kq, n).R_n == pytest.approx(math.sqrt(n + 1), abs=1e-9)
    point = Quadrature(np.array([[0.3 + 0j]]), np.array([1.0]))
    with pytest.raises(SingularGramError):
        bm_constant(kq, 1, measure=point)
    rep = bm_experiment(Setup("bm", GAUSS, ("circle", "0", 1024), degrees=(10, 50, 200)))
    assert rep.passed


def test_jackknife():
    x = np.random.default_rng(0).standard_normal(400)
    v, se = variance_jackknife(x)
    assert v == pytest.approx(np.var(x, ddof=1))
    assert 0.05 < se < 0.1


def test_report_json_is_strict():
    s = Setup("expected", GAUSS, DISK, degrees=(10, 20, 30), trials=20, forms=(TestForm(0.8, 0.6),), seed=3)
    text = expected_distribution_experiment(s).dumps()
    assert "NaN" not in text and "lem:expw" in text


def test_worker_count_invariance():
    forms = (TestForm(0.8, 0.6),)
    a = expected_distribution_experiment(Setup("expected", GAUSS, DISK, degrees=(15, 30), trials=40, forms=forms, workers=1))
    b = expected_distribution_experiment(Setup("expected", GAUSS, DISK, degrees=(15, 30), trials=40, forms=forms, workers=4))
    assert a.dumps() == b.dumps()


def test_polydisk_poincare_lelong_pairing():
    s = Setup("expected", GAUSS, ("polydisk", "0", None), degrees=(6,), trials=8, forms=(TestForm((0, 0), 1.5),))
    data, _ = collect_pairings(s)
    assert data[6].shape == (8, 1)
    assert np.all(np.isfinite(data[6]))
