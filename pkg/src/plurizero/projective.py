"""Random holomorphic sections of O(n) over CP^1 and CP^2 with the Fubini-Study metric.

A section is stored through its affine polynomial in the chart Z_0 = 1.  Its
pointwise norm is |S(Z)| / |Z|^n for the homogeneous lift S, which is what
both affine charts compute; evaluation always goes through the chart where
the homogeneous coordinate of largest modulus is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .ensembles import CoefficientLaw, sample_batch
from .errors import NonGenericSystemError
from .experiments import Audit, ExperimentReport, Setup, THEOREM_TAGS, mean_se, parallel_map
from .poly_core import BasisFamily, as_points, multi_indices, space_dimension
from .rng import stream
from .zero_engine import ZeroSample, conv2, roots_univariate, solve_system_2d

# 16 caps: 4 colatitudes x 4 longitudes, angular radius CAP_RADIUS
CAP_COLATITUDES = (math.pi / 5, 2 * math.pi / 5, 3 * math.pi / 5, 4 * math.pi / 5)
CAP_RADIUS = 0.45
WINDOW_EDGES = (0.0, 0.5, 2.0, math.inf)


@dataclass(frozen=True, eq=False)
class SectionSpace:
    """H^0(CP^m, O(n)) with the basis sqrt(d_n C(n, alpha)) z^alpha.

    With these coefficients the basis is orthonormal for the Fubini-Study
    probability volume, and the pointwise sum of squared section norms equals
    d_n everywhere.
    """

    m: int
    n: int

    def __post_init__(self):
        if self.m not in (1, 2):
            raise ValueError("only CP^1 and CP^2 are supported")
        if self.n < 1:
            raise ValueError("n must be >= 1")

    @property
    def d_n(self) -> int:
        return space_dimension(self.m, self.n)

    @cached_property
    def exponents(self) -> tuple[tuple[int, ...], ...]:
        return multi_indices(self.m, self.n)

    @cached_property
    def weights(self) -> np.ndarray:
        """sqrt(d_n * n! / (alpha! (n - |alpha|)!)) per affine monomial."""
        n = self.n
        out = []
        for alpha in self.exponents:
            c = math.factorial(n) // math.factorial(n - sum(alpha))
            for a in alpha:
                c //= math.factorial(a)
            out.append(math.sqrt(self.d_n * float(c)))
        return np.array(out)

    @cached_property
    def basis(self) -> BasisFamily:
        return BasisFamily(self.m, self.n, np.diag(self.weights).astype(complex), "fs-orthonormal")

    def affine_coefficients(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=complex)
        if s.shape[-1] != self.d_n:
            raise ValueError(f"section vector must have length {self.d_n}")
        return s * self.weights

    def homogeneous_eval(self, s, Z: np.ndarray) -> np.ndarray:
        """S(Z) for homogeneous coordinates Z of shape (N, m+1)."""
        c = self.affine_coefficients(s)
        E = np.asarray(self.exponents)
        pw = np.ones((len(Z), len(E)), dtype=complex)
        z0pow = self.n - E.sum(axis=1)
        pw *= Z[:, 0:1] ** z0pow
        for v in range(self.m):
            pw *= Z[:, v + 1:v + 2] ** E[:, v]
        return pw @ c


def dimension_bounds(m: int, n_max: int = 512) -> tuple[float, float, bool]:
    """min and max of d_n / n^m over 1 <= n <= n_max and whether both lie in [1/m!, e^m]."""
    r = [space_dimension(m, n) / n**m for n in range(1, n_max + 1)]
    lo, hi = min(r), max(r)
    return lo, hi, (1 / math.factorial(m) <= lo and hi <= math.e**m)


def lift(z, m: int, chart: int = 0) -> np.ndarray:
    """Homogeneous coordinates of affine points given in chart ``chart`` (Z_chart = 1)."""
    pts, _ = as_points(z, m)
    return np.insert(pts, chart, 1.0, axis=1)


def _normalize(Z: np.ndarray) -> np.ndarray:
    k = np.argmax(np.abs(Z), axis=1)
    return Z / Z[np.arange(len(Z)), k][:, None]


def fs_section_norm(s, space: SectionSpace, z, chart: int = 0):
    """|S(Z)| / |Z|^n at affine point(s) z of chart ``chart``.

    In chart 0 this is |p_s(z)| (1 + |z|^2)^{-n/2}.
    """
    pts, shape = as_points(z, space.m)
    Z = _normalize(lift(pts, space.m, chart))
    vals = np.abs(space.homogeneous_eval(s, Z)) / np.linalg.norm(Z, axis=1) ** space.n
    vals = vals.reshape(shape)
    return float(vals) if vals.ndim == 0 else vals


def bergman_gamma_sections(space: SectionSpace, z, s_family=None):
    """sum_j ||s_j(z)||^2 for the basis (or the rows of ``s_family``)."""
    fam = np.eye(space.d_n) if s_family is None else np.asarray(s_family, complex)
    pts, shape = as_points(z, space.m)
    Z = _normalize(lift(pts, space.m))
    nrm = np.linalg.norm(Z, axis=1) ** space.n
    tot = np.zeros(len(Z))
    for row in fam:
        tot += (np.abs(space.homogeneous_eval(row, Z)) / nrm) ** 2
    tot = tot.reshape(shape)
    return float(tot) if tot.ndim == 0 else tot


def gamma_constancy_residual(space: SectionSpace, z) -> float:
    g = np.atleast_1d(bergman_gamma_sections(space, z))
    return float(np.max(np.abs(g / space.d_n - 1)))


def sup_normalized_sections(space: SectionSpace, points) -> np.ndarray:
    """Monomial sections scaled to sup norm 1 over the given affine points (a grid of K)."""
    pts, _ = as_points(points, space.m)
    Z = _normalize(lift(pts, space.m))
    nrm = np.linalg.norm(Z, axis=1) ** space.n
    fam = np.eye(space.d_n, dtype=complex)
    sups = np.array([np.max(np.abs(space.homogeneous_eval(row, Z)) / nrm) for row in fam])
    return fam / sups[:, None]


def disk_extremal_sections(z) -> np.ndarray:
    """Target of (1/2n) log Gamma_n for sup-normalized sections on K = {|z| <= 1} in CP^1.

    V_{K,phi} - phi with phi = log(1 + |z|^2)/2: zero on K and
    log(2|z|^2 / (1 + |z|^2))/2 outside.
    """
    r2 = np.abs(np.asarray(z, dtype=complex)) ** 2
    return np.where(r2 <= 1, 0.0, 0.5 * np.log(2 * r2 / (1 + r2)))


# ---------------------------------------------------------------- systems and zeros

@dataclass(frozen=True)
class SectionSystem:
    k: int
    space: SectionSpace
    sections: np.ndarray
    law: str = "gaussian"

    def __post_init__(self):
        if not 1 <= self.k <= self.space.m:
            raise ValueError("codimension must satisfy 1 <= k <= m")
        if self.sections.shape != (self.k, self.space.d_n):
            raise ValueError("sections must have shape (k, d_n)")


def draw_system(space: SectionSpace, law: CoefficientLaw, k: int, seed: int, trial: int, attempt: int = 0) -> SectionSystem:
    """k sections from disjoint streams (seed, 'section', n, trial, i, attempt)."""
    rows = [sample_batch(law, space.d_n, 1, stream(seed, "section", space.n, trial, i, attempt))[0] for i in range(k)]
    return SectionSystem(k, space, np.array(rows), law.kind)


def _random_unitary(rng, k):
    Zm = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / math.sqrt(2)
    Qm, R = np.linalg.qr(Zm)
    return Qm * (np.diag(R) / np.abs(np.diag(R)))


def _chart_polynomial(space: SectionSpace, s, U: np.ndarray) -> np.ndarray:
    """Coefficient grid of w -> S(U (1, w1, w2)), the section in a rotated chart."""
    c = space.affine_coefficients(s)
    n = space.n
    forms = []
    for k in range(3):
        L = np.zeros((2, 2), complex)
        L[0, 0], L[1, 0], L[0, 1] = U[k, 0], U[k, 1], U[k, 2]
        forms.append(L)
    pows = [[np.ones((1, 1), complex)] for _ in range(3)]
    for k in range(3):
        for _ in range(n):
            pows[k].append(conv2(pows[k][-1], forms[k]))
    out = np.zeros((n + 1, n + 1), complex)
    for (i, j), coef in zip(space.exponents, c):
        term = conv2(conv2(pows[0][n - i - j], pows[1][i]), pows[2][j])
        out[: term.shape[0], : term.shape[1]] += coef * term
    return out


def zero_locus_cp(system: SectionSystem, space: SectionSpace, *, seed: int = 0, attempts: int = 4) -> ZeroSample:
    """Common zeros of k = m sections, counted on all of CP^m.

    CP^1: roots of the affine polynomial plus n - deg zeros at infinity.
    CP^2: Sylvester-pencil solve in chart Z_0 = 1; if fewer than n^2 points
    come back, the system is re-solved in random unitary charts and points
    with Z_0 = 0 are reported at infinity.
    """
    if system.k != space.m:
        raise ValueError("zero_locus_cp handles the point case k = m only")
    n = space.n
    if space.m == 1:
        c = space.affine_coefficients(system.sections[0])
        if not np.any(c):
            raise NonGenericSystemError("section vanishes identically")
        deg = int(np.flatnonzero(c)[-1])
        if deg == 0:
            zs = ZeroSample(np.zeros((0, 1), complex), np.zeros(0, int), 1, n, 0.0, "constant")
        else:
            zs = roots_univariate(c[: deg + 1], trim_rel=0.0)
        H, mults = lift(zs.points, 1), zs.multiplicities
        if n > deg:
            H = np.concatenate([H, [[0, 1]]])
            mults = np.concatenate([mults, [n - deg]])
        H = np.repeat(H / np.linalg.norm(H, axis=1, keepdims=True), mults, axis=0)
        return ZeroSample(zs.points, zs.multiplicities, 1, n, zs.residual, zs.method, n - deg, H)
    target = n * n
    rng = np.random.default_rng([seed, n, 7])
    best = None
    for attempt in range(attempts):
        U = np.eye(3, dtype=complex) if attempt == 0 else _random_unitary(rng, 3)
        P = _chart_polynomial(space, system.sections[0], U)
        Q = _chart_polynomial(space, system.sections[1], U)
        zs = solve_system_2d(P, Q, expected=target, seed=seed + attempt, attempts=2)
        Z = np.concatenate([np.ones((len(zs.points), 1)), zs.points], axis=1) @ U.T
        Z = Z / np.linalg.norm(Z, axis=1, keepdims=True)
        inf = np.abs(Z[:, 0]) <= 1e-12
        with np.errstate(all="ignore"):
            affine = Z[:, 1:] / Z[:, :1]
        cand = ZeroSample(affine[~inf], zs.multiplicities[~inf], 2, n, zs.residual, zs.method,
                          int(zs.multiplicities[inf].sum()), Z)
        cand = _with_mults(cand, zs.multiplicities)
        if best is None or abs(cand.total - target) < abs(best.total - target):
            best = cand
        if cand.total == target:
            break
    return best


def _with_mults(z: ZeroSample, mults) -> ZeroSample:
    H = np.repeat(z.homogeneous, mults, axis=0)
    return ZeroSample(z.points, z.multiplicities, z.codim, z.source_degree, z.residual, z.method, z.at_infinity, H)


# ---------------------------------------------------------------- statistics on the manifold

def to_sphere(H: np.ndarray) -> np.ndarray:
    """Inverse stereographic image of [Z0 : Z1] on the unit sphere; Z0 = 0 maps to (0, 0, 1)."""
    Z0, Z1 = H[:, 0], H[:, 1]
    den = np.abs(Z0) ** 2 + np.abs(Z1) ** 2
    w = Z1 * np.conj(Z0)
    return np.stack([2 * w.real / den, 2 * w.imag / den, (np.abs(Z1) ** 2 - np.abs(Z0) ** 2) / den], axis=1)


def cap_centers() -> np.ndarray:
    out = []
    for i, th in enumerate(CAP_COLATITUDES):
        for k in range(4):
            ph = (k + 0.5 * (i % 2)) * math.pi / 2
            out.append((math.sin(th) * math.cos(ph), math.sin(th) * math.sin(ph), math.cos(th)))
    return np.array(out)


def cap_area(radius: float) -> float:
    """Normalized area of a spherical cap of angular radius ``radius``."""
    return (1 - math.cos(radius)) / 2


def cap_masses(points: np.ndarray, centers: np.ndarray, radius: float, weights=None) -> np.ndarray:
    """Fraction of (weighted) sphere points in each cap."""
    w = np.ones(len(points)) if weights is None else np.asarray(weights, float)
    inside = points @ centers.T >= math.cos(radius)
    return (w @ inside) / w.sum()


def window_mass(s0, s1, t0, t1) -> float:
    """omega^2 mass of {s0 <= |z1|^2 < s1, t0 <= |z2|^2 < t1} for the normalized FS volume."""
    def F(s, t):
        a = 0.0 if math.isinf(s) else 1 / (1 + s)
        b = 0.0 if math.isinf(t) else 1 / (1 + t)
        c = 0.0 if math.isinf(s) or math.isinf(t) else 1 / (1 + s + t)
        return 1 - a - b + c
    return F(s1, t1) - F(s0, t1) - F(s1, t0) + F(s0, t0)


def window_masses_points(H: np.ndarray) -> np.ndarray:
    """Fraction of points of CP^2 (homogeneous rows) in each of the 9 windows."""
    a0 = np.abs(H[:, 0]) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(a0 > 0, np.abs(H[:, 1]) ** 2 / a0, np.inf)
        t = np.where(a0 > 0, np.abs(H[:, 2]) ** 2 / a0, np.inf)
    # a point at infinity with Z1 = 0 or Z2 = 0 has a finite-ratio limit; treat 0/0 as 0
    s = np.where(np.isnan(s), 0.0, s)
    t = np.where(np.isnan(t), 0.0, t)
    edges = np.array(WINDOW_EDGES[1:-1])
    bs = np.searchsorted(edges, s, side="right")
    bt = np.searchsorted(edges, t, side="right")
    counts = np.bincount(3 * bs + bt, minlength=9)
    return counts / len(H)


def window_targets() -> np.ndarray:
    e = WINDOW_EDGES
    return np.array([window_mass(e[i], e[i + 1], e[j], e[j + 1]) for i in range(3) for j in range(3)])


def zero_cloud_rows(H: np.ndarray, m: int) -> list[dict]:
    """Rows for CSV export: affine coordinates (blank at infinity), plus sphere coordinates on CP^1."""
    rows = []
    sph = to_sphere(H) if m == 1 else None
    for i, Z in enumerate(H):
        row = {"index": i, "at_infinity": bool(abs(Z[0]) <= 1e-12)}
        for v in range(m):
            w = Z[v + 1] / Z[0] if not row["at_infinity"] else None
            row[f"re_z{v + 1}"] = None if w is None else float(w.real)
            row[f"im_z{v + 1}"] = None if w is None else float(w.imag)
        if sph is not None:
            row.update(x=float(sph[i, 0]), y=float(sph[i, 1]), z=float(sph[i, 2]))
        rows.append(row)
    return rows


def _projective_block(task):
    setup, n, trials = task
    m = setup.manifold_dim
    space = SectionSpace(m, n)
    out = []
    nongeneric = 0
    for t in trials:
        for attempt in range(16):
            system = draw_system(space, setup.law, m, setup.seed, t, attempt)
            try:
                zs = zero_locus_cp(system, space, seed=setup.seed + t)
                break
            except NonGenericSystemError:
                nongeneric += 1
        else:
            raise RuntimeError("non-generic systems persisted")
        H = zs.homogeneous
        if m == 1:
            masses = cap_masses(to_sphere(H), cap_centers(), CAP_RADIUS)
        else:
            masses = window_masses_points(H) if len(H) else np.full(9, np.nan)
        cloud = zero_cloud_rows(H, m) if t == 0 else None
        out.append((masses, zs.total, zs.residual, cloud))
    return out, nongeneric


def global_equidist_experiment(setup: Setup) -> ExperimentReport:
    """Zero clouds of k = m random sections against the Fubini-Study volume.

    The expected zero measure equals omega^m exactly at every n (unitary
    invariance), so each dictionary mass is compared with its FS value both
    in absolute terms and within 3 SE.
    """
    m = setup.manifold_dim
    rep = ExperimentReport("projective", THEOREM_TAGS["projective"], setup.seed)
    targets = np.full(16, cap_area(CAP_RADIUS)) if m == 1 else window_targets()
    tol = setup.cap_tolerance if setup.cap_tolerance is not None else (0.02 if m == 1 else 0.05)
    block = max(1, -(-setup.trials // max(setup.workers, 1)))
    tasks = [(setup, n, tuple(range(s, min(setup.trials, s + block)))) for n in setup.degrees
             for s in range(0, setup.trials, block)]
    results = parallel_map(_projective_block, tasks, setup.workers)
    per_n: dict[int, list] = {n: [] for n in setup.degrees}
    nongeneric = 0
    for (st, n, tr), (vals, ng) in zip(tasks, results):
        per_n[n].extend(vals)
        nongeneric += ng
    rep.events["nongeneric_resampled"] = nongeneric
    lo, hi, ok = dimension_bounds(m)
    rep.summary["dimension_ratio_range"] = [lo, hi]
    rep.audits.append(Audit("dimension_growth", ok, hi, math.e**m))
    for n in setup.degrees:
        masses = np.array([v[0] for v in per_n[n]])
        counts = np.array([v[1] for v in per_n[n]])
        bezout = n**m
        short = int(np.sum(counts != bezout))
        rep.audits.append(Audit(f"bezout_count[n={n}]", short == 0, float(short), 0.0,
                                f"{short} of {len(counts)} trials missed the count {bezout}"))
        worst = 0.0
        for j, target in enumerate(targets):
            mean, se = mean_se(masses[:, j])
            var = float(np.var(masses[:, j], ddof=1))
            dev = abs(mean - target)
            worst = max(worst, dev)
            rep.rows.append({"n": n, "region": j, "target": float(target), "mean": mean, "se": se,
                             "deviation": dev, "variance_n2": var * n * n, "z": (mean - target) / se if se > 0 else 0.0})
        zs = [abs(r["z"]) for r in rep.rows if r["n"] == n]
        rep.audits.append(Audit(f"max_deviation[n={n}]", worst <= tol, worst, tol))
        # diagnostic only: with 9 or 16 correlated regions a 3 SE rule alone trips a few percent of the time
        rep.summary[f"factorization_max_z[n={n}]"] = max(zs)
        rep.summary[f"factorization_within_3se[n={n}]"] = bool(max(zs) <= 3)
        rep.summary[f"max_residual[n={n}]"] = float(max(v[2] for v in per_n[n]))
        clouds = [v[3] for v in per_n[n] if v[3] is not None]
        if clouds:
            rep.tables[f"zeros_n{n}"] = clouds[0]
    rep.tables["regions"] = rep.rows
    return rep
