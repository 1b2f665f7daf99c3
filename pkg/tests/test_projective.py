import math

import numpy as np
import pytest
from scipy import stats

from plurizero.ensembles import CoefficientLaw
from plurizero.errors import NonGenericSystemError
from plurizero.projective import (
    CAP_RADIUS,
    SectionSpace,
    SectionSystem,
    bergman_gamma_sections,
    cap_area,
    cap_centers,
    cap_masses,
    dimension_bounds,
    disk_extremal_sections,
    draw_system,
    fs_section_norm,
    gamma_constancy_residual,
    sup_normalized_sections,
    to_sphere,
    window_masses_points,
    window_targets,
    zero_locus_cp,
)

GAUSS = CoefficientLaw("gaussian")


def _affine_section(space, coeffs):
    """Section vector whose affine polynomial has the given dense coefficients."""
    return np.asarray(coeffs, complex) / space.weights


def test_section_norm_examples():
    S = SectionSpace(1, 2)
    one = _affine_section(S, [1, 0, 0])
    assert fs_section_norm(one, S, 0.0) == pytest.approx(1.0)
    r = np.array([1e2, 1e4])
    np.testing.assert_allclose(fs_section_norm(one, S, r) * r**2, 1.0, rtol=1e-3)


def test_chart_overlap():
    rng = np.random.default_rng(0)
    S = SectionSpace(1, 9)
    s = rng.standard_normal(10) + 1j * rng.standard_normal(10)
    z = np.exp(1j * rng.uniform(0, 2 * np.pi, 16))
    a = fs_section_norm(s, S, z)
    b = fs_section_norm(s, S, 1 / z, chart=1)
    np.testing.assert_allclose(a, b, rtol=1e-10)


def test_gamma_constant():
    S = SectionSpace(1, 3)
    z = np.array([0, 0.5, 2 + 1j, 1e3, -7j])
    np.testing.assert_allclose(bergman_gamma_sections(S, z), 4.0, rtol=1e-9)
    pts = np.random.default_rng(1).standard_normal((50, 2)) * 3 + 0j
    assert gamma_constancy_residual(SectionSpace(2, 6), pts) <= 1e-9


def test_fs_gamma_tends_to_zero_potential():
    vals = [math.log(bergman_gamma_sections(SectionSpace(1, n), 0.3) / n) / (2 * n) for n in (10, 100, 1000)]
    assert abs(vals[-1]) < abs(vals[0])


def test_disk_sections_target():
    S = SectionSpace(1, 100)
    r = np.linspace(0, 1, 60)
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    fam = sup_normalized_sections(S, (r[:, None] * np.exp(1j * th)[None]).ravel())
    got = math.log(bergman_gamma_sections(S, 2.0, fam)) / 200
    assert got == pytest.approx(float(disk_extremal_sections(2.0)), abs=0.05)


def test_dimension_bounds():
    for m in (1, 2):
        lo, hi, ok = dimension_bounds(m, 512)
        assert ok and lo >= 1 / math.factorial(m) and hi <= math.e**m


def test_roots_of_unity():
    S = SectionSpace(1, 6)
    c = np.zeros(7)
    c[0], c[6] = -1, 1
    zs = zero_locus_cp(SectionSystem(1, S, _affine_section(S, c)[None]), S)
    assert zs.total == 6 and zs.at_infinity == 0
    np.testing.assert_allclose(np.abs(zs.points[:, 0]), 1, atol=1e-12)


def test_zero_at_infinity():
    S = SectionSpace(1, 6)
    c = np.zeros(7)
    c[0], c[5] = -1, 1
    zs = zero_locus_cp(SectionSystem(1, S, _affine_section(S, c)[None]), S)
    assert zs.at_infinity == 1 and zs.total == 6
    assert np.allclose(to_sphere(zs.homogeneous[-1:]), [[0, 0, 1]])


def test_cp2_bezout_degree_4():
    S = SectionSpace(2, 4)
    counts = [zero_locus_cp(draw_system(S, GAUSS, 2, 0, t), S, seed=t).total for t in range(100)]
    assert np.mean(np.array(counts) == 16) >= 0.99


def test_cp2_identical_sections_nongeneric():
    S = SectionSpace(2, 2)
    s = draw_system(S, GAUSS, 1, 0, 0).sections[0]
    with pytest.raises(NonGenericSystemError):
        zero_locus_cp(SectionSystem(2, S, np.stack([s, 2 * s])), S)


def test_window_targets_sum_to_one():
    assert window_targets().sum() == pytest.approx(1.0, abs=1e-12)
    H = np.array([[1, 0, 0], [0, 1, 0], [0, 0, 1], [1, 1, 1]], complex)
    assert window_masses_points(H).sum() == pytest.approx(1.0)


def test_hemisphere_half():
    S = SectionSpace(1, 40)
    north = np.array([[0.0, 0.0, 1.0]])
    masses = []
    for t in range(200):
        zs = zero_locus_cp(draw_system(S, GAUSS, 1, 3, t), S)
        masses.append(cap_masses(to_sphere(zs.homogeneous), north, math.pi / 2)[0])
    m, se = np.mean(masses), np.std(masses, ddof=1) / math.sqrt(len(masses))
    assert abs(m - 0.5) <= 3 * se


def test_rotation_invariance():
    # per-trial counts in a cap and in its rotated copies have the same law
    S = SectionSpace(1, 30)
    clouds = [to_sphere(zero_locus_cp(draw_system(S, GAUSS, 1, 4, t), S).homogeneous) for t in range(300)]
    c0 = cap_centers()[5]
    rot = stats.special_ortho_group.rvs(3, size=3, random_state=5)
    centers = [c0] + [R @ c0 for R in rot]
    counts = np.array([[np.sum(p @ c >= math.cos(CAP_RADIUS)) for p in clouds] for c in centers])
    for a in range(4):
        for b in range(a + 1, 4):
            assert stats.ks_2samp(counts[a], counts[b]).pvalue > 0.01


def test_disjoint_section_streams():
    S = SectionSpace(2, 3)
    sys_ = draw_system(S, GAUSS, 2, 0, 0)
    assert not np.allclose(sys_.sections[0], sys_.sections[1])
    again = draw_system(S, GAUSS, 2, 0, 0)
    assert np.array_equal(sys_.sections, again.sections)
