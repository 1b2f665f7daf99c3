"""Coefficient laws for random polynomials and their moment certificates.

The moment condition asks for a constant D_n with

    integral |log |<a, v>||^alpha dmu_n(a) <= D_n   for every unit vector v.

For the Gaussian and Fubini-Study laws <a, v> has a law independent of v and
of the dimension, so D_n is a one-dimensional radial integral.  For the
heavy-tail i.i.d. law only a growth rate D_n = B d_n^{alpha/gamma} is known and
B is estimated by Monte Carlo.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import integrate

from .poly_core import space_dimension
from .rng import stream

LAW_KINDS = ("gaussian", "fubini_study", "heavy_tail_iid", "custom")
METHODS = ("closed_form_radial", "quadrature", "monte_carlo_bound")
_U_LO, _U_HI, _U_STEP = -40.0, 60.0, 1e-3


# ---------------------------------------------------------------- heavy-tail radial law

def _log_e_plus(rho):
    return np.log(math.e + rho)


class _HeavyTailTable:
    """Planar density c/(1 + |z|^2 log(e + |z|)^(gamma+1)) with tabulated log-radius CDF.

    In the variable u = log|z| the radial density is
    2 pi c e^{2u} / (1 + e^{2u} L^(gamma+1)),  L = log(e + e^u).
    """

    def __init__(self, gamma: float):
        self.gamma = gamma
        u = np.arange(_U_LO, _U_HI + _U_STEP / 2, _U_STEP)
        dens = self._unnormalized(u)
        cum = integrate.cumulative_trapezoid(dens, u, initial=0.0)
        # mass below _U_LO: density ~ e^{2u}, integral e^{2u}/2
        head = math.exp(2 * _U_LO) / 2
        tail = self._tail_integral(_U_HI)
        total = head + cum[-1] + tail
        self.c = 1.0 / (2 * math.pi * total)
        self.u = u
        self.cdf = (head + cum) / total
        self.sf = (total - head - cum) / total
        self.sf_hi = tail / total

    def _unnormalized(self, u):
        e2 = np.exp(2 * np.asarray(u, float))
        return e2 / (1 + e2 * _log_e_plus(np.exp(u)) ** (self.gamma + 1))

    def _tail_integral(self, u0: float) -> float:
        val, _ = integrate.quad(lambda t: 1.0 / (math.exp(-2 * t) + math.log(math.e + math.exp(t)) ** (self.gamma + 1)),
                                u0, np.inf, limit=200)
        return val

    def survival(self, R: float) -> float:
        """P(log|a| > R), by quadrature."""
        val, _ = integrate.quad(lambda t: float(self._unnormalized(t)), R, _U_HI, limit=400)
        return 2 * math.pi * self.c * (val + self._tail_integral(_U_HI))

    def tight_delta(self) -> float:
        """sup over R >= 1 of R^gamma P(log|a| > R); attained as R -> infinity.

        Since log(e + e^u) > u, the tail never exceeds 2 pi c / (gamma R^gamma).
        """
        return 2 * math.pi * self.c / self.gamma

    def sample_log_radius(self, U: np.ndarray) -> np.ndarray:
        """Quantile map: U uniform on (0, 1) is read as a survival probability."""
        out = np.empty_like(U)
        upper = U < 0.5
        far = U < self.sf_hi
        mid = upper & ~far
        out[far] = (2 * math.pi * self.c / (self.gamma * U[far])) ** (1 / self.gamma)
        # log S and log F are increasing/decreasing in u; np.interp needs ascending x
        out[mid] = np.interp(np.log(U[mid]), np.log(self.sf[::-1][self.sf[::-1] > 0]),
                             self.u[::-1][self.sf[::-1] > 0])
        low = ~upper
        F = 1 - U[low]
        out[low] = np.interp(np.log(F), np.log(self.cdf), self.u)
        below = F < self.cdf[0]
        if np.any(below):
            # F(u) ~ pi c e^{2u} near the origin
            out[np.flatnonzero(low)[below]] = 0.5 * np.log(F[below] / (math.pi * self.c))
        return out


_TABLES: dict[float, _HeavyTailTable] = {}


def _table(gamma: float) -> _HeavyTailTable:
    if gamma not in _TABLES:
        _TABLES[gamma] = _HeavyTailTable(gamma)
    return _TABLES[gamma]


# ---------------------------------------------------------------- laws

@dataclass(frozen=True)
class CoefficientLaw:
    """Probability law on coefficient vectors.

    heavy_tail_iid takes ``gamma`` (> 2m), ``delta`` (tail constant, defaults to
    the tight value) and reports its density bound N = c_gamma.
    """

    kind: str
    gamma: float | None = None
    delta: float | None = None
    m: int = 1
    sampler: Callable | None = field(default=None, compare=False, repr=False)
    name: str = ""

    def __post_init__(self):
        if self.kind not in LAW_KINDS:
            raise ValueError(f"unknown law kind {self.kind!r}")
        if self.kind == "heavy_tail_iid":
            if self.gamma is None or not self.gamma > 2 * self.m:
                raise ValueError(f"gamma must exceed 2m = {2 * self.m} (got {self.gamma})")
            tight = _table(float(self.gamma)).tight_delta()
            if self.delta is None:
                object.__setattr__(self, "delta", tight)
            elif not self.delta >= tight * (1 - 1e-9):
                raise ValueError(f"delta = {self.delta} is below the law's tail constant {tight:.6g}")
        if self.kind == "custom" and self.sampler is None:
            raise ValueError("custom laws need a sampler(rng, shape) callable")

    @property
    def density_bound(self) -> float | None:
        if self.kind != "heavy_tail_iid":
            return None
        return _table(float(self.gamma)).c

    @property
    def invariant(self) -> bool:
        """True when <a, v> has the same law for every unit v (unitary invariance)."""
        return self.kind in ("gaussian", "fubini_study")

    def key(self, alpha: float) -> str:
        parts = [self.kind, f"alpha={alpha!r}"]
        if self.kind == "heavy_tail_iid":
            parts += [f"gamma={self.gamma!r}", f"delta={self.delta!r}"]
        if self.kind == "custom":
            parts.append(f"name={self.name}")
        return "|".join(parts)

    def tail_probability(self, R: float) -> float:
        """Exact P(log|a_1| > R) for the heavy-tail law."""
        if self.kind != "heavy_tail_iid":
            raise ValueError("tail_probability is defined for heavy_tail_iid only")
        return _table(float(self.gamma)).survival(R)

    def planar_density(self, z) -> np.ndarray:
        if self.kind != "heavy_tail_iid":
            raise ValueError("planar_density is defined for heavy_tail_iid only")
        r = np.abs(np.asarray(z, dtype=complex))
        return self.density_bound / (1 + r * r * _log_e_plus(r) ** (self.gamma + 1))


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    x = rng.standard_normal(shape + (2,))
    return (x[..., 0] + 1j * x[..., 1]) / math.sqrt(2)


def sample_batch(law: CoefficientLaw, dim: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent coefficient vectors, shape (count, dim)."""
    if dim < 1 or count < 0:
        raise ValueError("need dim >= 1 and count >= 0")
    shape = (count, dim)
    if law.kind == "gaussian":
        return _complex_normal(rng, shape)
    if law.kind == "fubini_study":
        w = _complex_normal(rng, (count, dim + 1))
        return w[:, 1:] / w[:, :1]
    if law.kind == "heavy_tail_iid":
        U = rng.random(shape)
        U = np.where(U == 0, np.nextafter(0, 1), U)
        logr = _table(float(law.gamma)).sample_log_radius(U)
        theta = rng.random(shape) * 2 * math.pi
        return np.exp(logr + 1j * theta)
    out = np.asarray(law.sampler(rng, shape), dtype=complex)
    if out.shape != shape:
        raise ValueError(f"custom sampler returned shape {out.shape}, expected {shape}")
    return out


def sample_coefficients(law: CoefficientLaw, dim: int, rng: np.random.Generator) -> np.ndarray:
    return sample_batch(law, dim, 1, rng)[0]


def random_unit_vectors(count: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    v = _complex_normal(rng, (count, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


# ---------------------------------------------------------------- certificates

@dataclass(frozen=True)
class MomentCertificate:
    """D_n = D * d_n**growth; ``se`` is nonzero only for Monte Carlo estimates."""

    alpha: float
    D: float
    method: str
    growth: float = 0.0
    se: float = 0.0
    law: str = ""
    signed: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown certificate method {self.method!r}")
        if not math.isfinite(self.D):
            raise ValueError("certificate constant must be finite")

    def D_n(self, dim: int) -> float:
        return self.D * float(dim) ** self.growth

    def to_json(self) -> dict:
        return asdict(self)


def _radial_moment(density: Callable[[float], float], alpha: float, signed: bool) -> float:
    if signed:
        f = lambda r: math.log(r) ** alpha * density(r) if r > 0 else 0.0
    else:
        f = lambda r: abs(math.log(r)) ** alpha * density(r) if r > 0 else 0.0
    # split at r = 1 where |log r| has a kink
    a, _ = integrate.quad(f, 0, 1, limit=200, epsabs=1e-14, epsrel=1e-13)
    b, _ = integrate.quad(f, 1, np.inf, limit=200, epsabs=1e-14, epsrel=1e-13)
    return a + b


def _gauss_radial(r: float) -> float:
    return 2 * r * math.exp(-r * r)


def _fs_radial(r: float) -> float:
    return 2 * r / (1 + r * r) ** 2


class CertificateCache:
    """JSON file of certificates keyed by law and alpha."""

    def __init__(self, path: str | os.PathLike):
        self.path = os.fspath(path)
        self._data: dict = {}
        if os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as fh:
                self._data = json.load(fh)

    def get(self, key: str) -> MomentCertificate | None:
        doc = self._data.get(key)
        return MomentCertificate(**doc) if doc else None

    def put(self, key: str, cert: MomentCertificate) -> None:
        self._data[key] = cert.to_json()
        tmp = self.path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self._data, fh, sort_keys=True, indent=1)
        os.replace(tmp, self.path)


def moment_constant(law: CoefficientLaw, alpha: float = 2.0, *, signed: bool = False,
                    cache: CertificateCache | None = None, seed: int = 0,
                    mc_trials: int = 20000, mc_dims=(2, 4, 8, 16, 32)) -> MomentCertificate:
    """Moment certificate (alpha, D_n).

    ``signed`` integrates (log r)^alpha instead of |log r|^alpha; it exists for
    closed-form cross-checks and is not a valid certificate.
    """
    if alpha < 1:
        raise ValueError("alpha must be >= 1")
    key = law.key(alpha) + ("|signed" if signed else "")
    if cache is not None and (hit := cache.get(key)) is not None:
        return hit
    if law.kind == "gaussian":
        cert = MomentCertificate(alpha, _radial_moment(_gauss_radial, alpha, signed), "quadrature", law=law.kind, signed=signed)
    elif law.kind == "fubini_study":
        cert = MomentCertificate(alpha, _radial_moment(_fs_radial, alpha, signed), "quadrature", law=law.kind, signed=signed)
    elif law.kind == "heavy_tail_iid":
        if not alpha < law.gamma:
            raise ValueError(f"heavy-tail moments need alpha < gamma = {law.gamma}")
        if signed:
            raise ValueError("signed moments are only defined for the radial laws")
        cert = _heavy_tail_certificate(law, alpha, seed, mc_trials, mc_dims)
    else:
        raise ValueError("custom laws need an explicit certificate")
    if cache is not None:
        cache.put(key, cert)
    return cert


def _moment_samples(law, dim, alpha, vectors, trials, rng):
    A = sample_batch(law, dim, trials, rng)
    ip = np.abs(A @ vectors.T)
    return np.abs(np.log(ip)) ** alpha


def _heavy_tail_certificate(law, alpha, seed, trials, dims) -> MomentCertificate:
    growth = alpha / law.gamma
    best, best_se = -np.inf, 0.0
    for d in dims:
        rng = stream(seed, "moment-certificate", int(d))
        V = random_unit_vectors(8, d, rng)
        vals = _moment_samples(law, d, alpha, V, trials, rng)
        est = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / math.sqrt(trials)
        ratio = (est + 3 * se) / d**growth
        j = int(np.argmax(ratio))
        if ratio[j] > best:
            best, best_se = float(ratio[j]), float(se[j] / d**growth)
    return MomentCertificate(alpha, best, "monte_carlo_bound", growth=growth, se=best_se, law=law.kind)


# ---------------------------------------------------------------- audits

@dataclass(frozen=True)
class MomentCheckReport:
    dim: int
    alpha: float
    target: float
    estimates: tuple[float, ...]
    ses: tuple[float, ...]
    max_estimate: float
    max_se: float
    pooled_estimate: float
    pooled_se: float
    passed: bool
    pooled_passed: bool

    def to_json(self) -> dict:
        return asdict(self)


def empirical_moment_check(law: CoefficientLaw, dim: int, alpha: float, trials: int, seed: int,
                           certificate: MomentCertificate | None = None, vectors: int = 32) -> MomentCheckReport:
    """Monte Carlo estimate of E|log|<a, v>||^alpha for ``vectors`` random unit v.

    Invariant laws pass when every estimate is within 3 SE of the certificate;
    other laws pass when every estimate is below D_n + 3 SE.  The pooled
    estimate averages over the vectors first (one statistic per dimension).
    """
    if trials < 10_000:
        raise ValueError("empirical_moment_check needs at least 10^4 trials")
    cert = certificate or moment_constant(law, alpha, seed=seed)
    target = cert.D_n(dim)
    rng = stream(seed, "moment-check", dim)
    V = random_unit_vectors(vectors, dim, rng)
    vals = _moment_samples(law, dim, alpha, V, trials, rng)
    est = vals.mean(axis=0)
    se = vals.std(axis=0, ddof=1) / math.sqrt(trials)
    pooled = vals.mean(axis=1)
    p_est = float(pooled.mean())
    p_se = float(pooled.std(ddof=1) / math.sqrt(trials))
    if law.invariant:
        ok = bool(np.all(np.abs(est - target) <= 3 * se))
        p_ok = abs(p_est - target) <= 3 * p_se
    else:
        ok = bool(np.all(est <= target + 3 * se))
        p_ok = p_est <= target + 3 * p_se
    j = int(np.argmax(est))
    return MomentCheckReport(dim, alpha, target, tuple(map(float, est)), tuple(map(float, se)),
                             float(est[j]), float(se[j]), p_est, p_se, ok, bool(p_ok))


@dataclass(frozen=True)
class SummabilityReport:
    alpha: float
    m: int
    partial_sums: tuple[float, ...]
    tail_exponent: float
    convergent: bool
    limit_estimate: float | None

    def to_json(self) -> dict:
        return asdict(self)


def summability_audit(law: CoefficientLaw, alpha: float, m: int, n_max: int,
                      certificate: MomentCertificate | None = None, seed: int = 0) -> SummabilityReport:
    """Partial sums of D_n^{2/alpha}/n^2 and the least-squares tail exponent.

    The exponent is fitted on log(term) vs log(n) over n in [n_max/2, n_max].
    """
    if n_max < 8:
        raise ValueError("n_max must be at least 8")
    if law.kind == "heavy_tail_iid" and not law.gamma > 2 * m:
        raise ValueError(f"gamma must exceed 2m = {2 * m}")
    cert = certificate or moment_constant(law, alpha, seed=seed)
    n = np.arange(1, n_max + 1)
    d = np.array([space_dimension(m, int(k)) for k in n], dtype=float)
    terms = (cert.D * d**cert.growth) ** (2 / alpha) / n.astype(float) ** 2
    sums = np.cumsum(terms)
    half = n >= n_max // 2
    slope = float(np.polyfit(np.log(n[half]), np.log(terms[half]), 1)[0])
    limit = cert.D ** (2 / alpha) * math.pi**2 / 6 if cert.growth == 0 else None
    return SummabilityReport(alpha, m, tuple(map(float, sums)), slope, slope < -1, limit)
