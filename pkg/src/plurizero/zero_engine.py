"""Zeros of univariate polynomials and bivariate systems, and current pairings.

Univariate roots come from Aberth-Ehrlich iteration started on the Newton
polygon radii, with the companion matrix as fallback.  Bivariate systems are
reduced to the polynomial eigenproblem det S(x) = 0 for the Sylvester matrix
S(x) of p and q in y; the first-companion linearization yields x and, from
the eigenvector, the power vector (y^{s-1}, ..., y, 1).
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .compact_weight import QuadratureWarning, TestForm
from .errors import ConvergenceError, DimensionMismatch, NonGenericSystemError, UnsupportedPairing, ZeroSetPoint
from .poly_core import Polynomial, as_points

_EPS = np.finfo(float).eps
TRIM_REL = 1e-14
CLUSTER_REL = 1e-8


@dataclass(frozen=True, eq=False)
class ZeroSample:
    """Zeros of one polynomial (codim 1, m = 1) or one square system (codim m).

    ``points`` has shape (N, m); ``residual`` is the largest backward error
    |f(z)| / sum_k |c_k| |z^k| over the reported points.
    """

    points: np.ndarray
    multiplicities: np.ndarray
    codim: int
    source_degree: int
    residual: float
    method: str = "aberth"
    at_infinity: int = 0
    homogeneous: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_vars(self) -> int:
        return self.points.shape[1]

    @property
    def total(self) -> int:
        return int(self.multiplicities.sum()) + self.at_infinity

    def to_csv(self, fh=None) -> str:
        buf = fh if fh is not None else io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        m = self.num_vars
        writer.writerow([f"{part}_{k + 1}" for k in range(m) for part in ("re", "im")] + ["multiplicity"])
        for pt, mult in zip(self.points, self.multiplicities):
            row = []
            for c in pt:
                row += [repr(float(c.real)), repr(float(c.imag))]
            writer.writerow(row + [int(mult)])
        return buf.getvalue() if fh is None else ""


# ---------------------------------------------------------------- univariate

def _coefficients(p) -> np.ndarray:
    if isinstance(p, Polynomial):
        if p.num_vars != 1:
            raise DimensionMismatch("roots_univariate needs a polynomial in one variable")
        return p.dense()
    return np.asarray(p, dtype=complex).ravel()


def _newton_polygon_guesses(c: np.ndarray) -> np.ndarray:
    n = len(c) - 1
    nz = np.flatnonzero(c != 0)
    logs = np.log(np.abs(c[nz]))
    # upper convex hull of (k, log|c_k|)
    hull: list[int] = []
    for i in range(len(nz)):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (nz[b] - nz[a]) * (logs[i] - logs[a]) - (logs[b] - logs[a]) * (nz[i] - nz[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    guesses = []
    for s, (a, b) in enumerate(zip(hull[:-1], hull[1:])):
        k = int(nz[b] - nz[a])
        r = math.exp((logs[a] - logs[b]) / k)
        ang = 2 * np.pi * np.arange(k) / k + 0.4 + 1.3 * s
        guesses.append(r * np.exp(1j * ang))
    z = np.concatenate(guesses)
    assert len(z) == n
    return z


def _horner2(c: np.ndarray, z: np.ndarray):
    """p(z) and p'(z) for ascending coefficients ``c``."""
    p = np.full(z.shape, c[-1], dtype=complex)
    dp = np.zeros(z.shape, dtype=complex)
    for ck in c[-2::-1]:
        dp = dp * z + p
        p = p * z + ck
    return p, dp


def _newton_ratio(c: np.ndarray, crev: np.ndarray, z: np.ndarray) -> np.ndarray:
    """p/p' evaluated in the better-conditioned of z and 1/z."""
    n = len(c) - 1
    out = np.empty_like(z)
    inner = np.abs(z) <= 1
    if np.any(inner):
        p, dp = _horner2(c, z[inner])
        out[inner] = p / dp
    if np.any(~inner):
        zo = z[~inner]
        w = 1 / zo
        q, dq = _horner2(crev, w)
        out[~inner] = zo * q / (n * q - w * dq)
    return out


def backward_error(c: np.ndarray, z: np.ndarray) -> np.ndarray:
    """|p(z)| / sum_k |c_k| |z|^k, evaluated without overflow for |z| > 1."""
    z = np.asarray(z, dtype=complex)
    out = np.empty(z.shape)
    inner = np.abs(z) <= 1
    absc = np.abs(c)
    if np.any(inner):
        zi = z[inner]
        out[inner] = np.abs(np.polyval(c[::-1], zi)) / np.polyval(absc[::-1], np.abs(zi))
    if np.any(~inner):
        w = 1 / z[~inner]
        out[~inner] = np.abs(np.polyval(c, w)) / np.polyval(absc, np.abs(w))
    return out


def _aberth(c: np.ndarray, maxiter: int) -> tuple[np.ndarray, bool]:
    n = len(c) - 1
    crev = c[::-1].copy()
    z = _newton_polygon_guesses(c)
    active = np.ones(n, dtype=bool)
    for _ in range(maxiter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            return z, True
        N = _newton_ratio(c, crev, z[idx])
        diff = z[idx, None] - z[None, :]
        diff[np.arange(len(idx)), idx] = 1.0
        S = (1 / diff).sum(axis=1) - 1.0
        with np.errstate(all="ignore"):
            w = N / (1 - N * S)
        w = np.where(np.isfinite(w), w, N)
        z[idx] -= w
        done = np.abs(w) <= 4 * _EPS * np.maximum(np.abs(z[idx]), _EPS)
        active[idx[done]] = False
    return z, not active.any()


def _cluster(points: np.ndarray, rel: float) -> tuple[np.ndarray, np.ndarray]:
    """Group points closer than rel * max(|z|, 1); return centroids and sizes."""
    n = len(points)
    if n == 0:
        return points, np.zeros(0, dtype=int)
    scale = np.maximum(np.abs(points).max(axis=1) if points.ndim == 2 else np.abs(points), 1.0)
    P = points.reshape(n, -1)
    D = np.abs(P[:, None, :] - P[None, :, :]).max(axis=2)
    close = D <= rel * np.maximum(scale[:, None], scale[None, :])
    label = -np.ones(n, dtype=int)
    cur = 0
    for i in range(n):
        if label[i] >= 0:
            continue
        stack = [i]
        label[i] = cur
        while stack:
            j = stack.pop()
            for k in np.flatnonzero(close[j] & (label < 0)):
                label[k] = cur
                stack.append(k)
        cur += 1
    cents = np.array([P[label == g].mean(axis=0) for g in range(cur)])
    sizes = np.bincount(label, minlength=cur)
    return cents.reshape((cur,) + points.shape[1:]), sizes


def _cluster_multiple_roots(c: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # A root of multiplicity k is resolved only to ~eps^(1/k); grow the radius
    # while the cluster centroid stays a root of the first k-1 derivatives.
    cents, sizes = _cluster(z, CLUSTER_REL)
    if np.all(sizes == 1):
        loose, lsizes = _cluster(z, 1e-4)
        if np.all(lsizes == 1):
            return cents, sizes
    else:
        loose, lsizes = _cluster(z, 1e-4)
    out_c, out_s = [], []
    deriv = [c]
    for _ in range(int(lsizes.max()) - 1):
        d = deriv[-1][1:] * np.arange(1, len(deriv[-1]))
        deriv.append(d if len(d) else np.zeros(1, complex))
    members = _membership(z, loose)
    for g, (zc, k) in enumerate(zip(loose, lsizes)):
        ok = k > 1 and all(len(deriv[j]) > 1 and backward_error(deriv[j], np.array([zc]))[0] <= 1e-6 for j in range(k))
        if ok:
            # the centroid is a simple root of p^(k-1); polish it there
            d = deriv[k - 1]
            for _ in range(3):
                zc = zc - _newton_ratio(d, d[::-1].copy(), np.array([zc]))[0]
            out_c.append(zc)
            out_s.append(k)
        else:
            sub_c, sub_s = _cluster(z[members == g], CLUSTER_REL)
            out_c.extend(sub_c)
            out_s.extend(sub_s)
    return np.array(out_c), np.array(out_s, dtype=int)


def _membership(z, cents):
    return np.argmin(np.abs(z[:, None] - cents[None, :]), axis=1)


def roots_univariate(p, *, maxiter: int = 500, trim_rel: float = TRIM_REL) -> ZeroSample:
    """All roots of a univariate polynomial (Polynomial or ascending coefficients).

    Leading coefficients below ``trim_rel`` times the largest one are dropped.
    Coefficient vectors with a wide dynamic range (Fubini-Study sections at
    high degree) should pass ``trim_rel=0`` so that large roots are kept.
    """
    c = _coefficients(p)
    if not np.all(np.isfinite(c)):
        raise ValueError("coefficients must be finite")
    scale = np.abs(c).max() if len(c) else 0.0
    if scale == 0:
        raise ValueError("the zero polynomial has no finite root set")
    top = np.flatnonzero(np.abs(c) > trim_rel * scale)[-1]
    c = c[: top + 1] / scale
    n = len(c) - 1
    if n < 1:
        raise ValueError("polynomial has degree 0; no roots")
    zero_mult = int(np.flatnonzero(c != 0)[0])
    core = c[zero_mult:]
    method = "aberth"
    if len(core) > 1:
        z, ok = _aberth(core, maxiter)
        be = backward_error(core, z)
        if not ok or not np.all(np.isfinite(z)) or be.max() > 1e-10:
            method = "companion"
            z = np.roots(core[::-1]).astype(complex)
            be = backward_error(core, z)
            if len(z) != len(core) - 1 or not np.all(np.isfinite(z)) or be.max() > 1e-8:
                raise ConvergenceError(f"root finding failed for degree {n} (backward error {be.max():.2e})")
        # polish: accept a Newton step only where it lowers the backward error
        crev = core[::-1].copy()
        z2 = z - _newton_ratio(core, crev, z)
        be2 = backward_error(core, z2)
        better = np.isfinite(be2) & (be2 < be)
        z = np.where(better, z2, z)
        residual = float(np.maximum(be, 0)[~better].max(initial=0.0))
        residual = max(residual, float(be2[better].max(initial=0.0)))
        cents, sizes = _cluster_multiple_roots(core, z)
    else:
        cents, sizes, residual = np.zeros(0, complex), np.zeros(0, int), 0.0
    if zero_mult:
        cents = np.concatenate([[0j], cents])
        sizes = np.concatenate([[zero_mult], sizes])
    return ZeroSample(np.asarray(cents, complex).reshape(-1, 1), np.asarray(sizes, int), 1, n, residual, method)


# ---------------------------------------------------------------- bivariate

def _grid(p) -> np.ndarray:
    if isinstance(p, Polynomial):
        if p.num_vars != 2:
            raise DimensionMismatch("solve_system_2d needs polynomials in two variables")
        return p.dense()
    C = np.asarray(p, dtype=complex)
    if C.ndim != 2:
        raise DimensionMismatch("expected a coefficient grid C[i, j] of x^i y^j")
    return C


def _ydeg(C: np.ndarray) -> int:
    cols = np.flatnonzero(np.any(C != 0, axis=0))
    return int(cols[-1]) if len(cols) else -1


def sylvester_matrix_coeffs(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Coefficients S_k (stacked on axis 0) of the Sylvester matrix S(x) = sum_k S_k x^k.

    Rows hold y-shifted coefficient vectors of p and q, columns correspond to
    y^{s-1}, ..., y, 1, so S(x0) @ (y0^{s-1}, ..., 1) = 0 at a common zero.
    """
    dp, dq = _ydeg(P), _ydeg(Q)
    if dp < 0 or dq < 0:
        raise ValueError("both polynomials must be nonzero")
    s = dp + dq
    K = max(P.shape[0], Q.shape[0])
    S = np.zeros((K, s, s), dtype=complex)
    for r in range(dq):
        for j in range(dp + 1):
            S[: P.shape[0], r, r + dp - j] = P[:, j]
    for r in range(dp):
        for j in range(dq + 1):
            S[: Q.shape[0], dq + r, r + dq - j] = Q[:, j]
    return S


def resultant_y(p, q, nodes: int | None = None) -> Polynomial:
    """Res_y(p, q) as a polynomial in x, by evaluation at roots of unity and FFT."""
    P, Q = _grid(p), _grid(q)
    S = sylvester_matrix_coeffs(P, Q)
    K, s, _ = S.shape
    bound = (K - 1) * s
    N = nodes or bound + 1
    if N <= bound:
        raise ValueError(f"need more than {bound} nodes")
    x = np.exp(2j * np.pi * np.arange(N) / N)
    vals = np.array([np.linalg.det(np.tensordot(xi ** np.arange(K), S, axes=1)) if s else 1.0 for xi in x])
    coef = np.fft.fft(vals) / N
    return Polynomial.from_dense(coef[: bound + 1])


def _eval_grid(C: np.ndarray, x: np.ndarray, y: np.ndarray, grad: bool = False):
    i = np.arange(C.shape[0])
    j = np.arange(C.shape[1])
    X = x[:, None] ** i
    Y = y[:, None] ** j
    val = np.einsum("ni,ij,nj->n", X, C, Y)
    if not grad:
        return val
    Xd = np.zeros_like(X)
    Yd = np.zeros_like(Y)
    Xd[:, 1:] = i[1:] * X[:, :-1]
    Yd[:, 1:] = j[1:] * Y[:, :-1]
    return val, np.einsum("ni,ij,nj->n", Xd, C, Y), np.einsum("ni,ij,nj->n", X, C, Yd)


def _backward_error_2d(C: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    num = np.abs(_eval_grid(C, x, y))
    den = _eval_grid(np.abs(C), np.abs(x).astype(complex), np.abs(y).astype(complex)).real
    return num / np.maximum(den, np.finfo(float).tiny)


def _newton_2d(P, Q, x, y, steps: int = 6):
    for _ in range(steps):
        p, px, py = _eval_grid(P, x, y, True)
        q, qx, qy = _eval_grid(Q, x, y, True)
        det = px * qy - py * qx
        ok = np.abs(det) > 0
        dx = np.where(ok, (p * qy - py * q) / np.where(ok, det, 1), 0)
        dy = np.where(ok, (px * q - p * qx) / np.where(ok, det, 1), 0)
        x2, y2 = x - dx, y - dy
        old = np.maximum(_backward_error_2d(P, x, y), _backward_error_2d(Q, x, y))
        new = np.maximum(_backward_error_2d(P, x2, y2), _backward_error_2d(Q, x2, y2))
        take = np.isfinite(new) & (new <= old)
        x = np.where(take, x2, x)
        y = np.where(take, y2, y)
    return x, y


def _solve_pencil(P: np.ndarray, Q: np.ndarray):
    S = sylvester_matrix_coeffs(P, Q)
    # drop trailing zero x-coefficients
    while S.shape[0] > 1 and not np.any(S[-1]):
        S = S[:-1]
    K, s, _ = S.shape
    deg = K - 1
    if deg == 0 or s < 2:
        # no x-dependence or no y in one equation: y cannot be read off here, a rotated chart can
        return np.zeros(0, complex), np.zeros(0, complex)
    A = np.zeros((deg * s, deg * s), dtype=complex)
    B = np.eye(deg * s, dtype=complex)
    A[: (deg - 1) * s, s:] = np.eye((deg - 1) * s)
    for k in range(deg):
        A[(deg - 1) * s:, k * s:(k + 1) * s] = -S[k]
    B[(deg - 1) * s:, (deg - 1) * s:] = S[deg]
    w, V = scipy.linalg.eig(A, B, homogeneous_eigvals=True)
    alpha, beta = w
    finite = np.abs(beta) > 1e-10 * np.abs(alpha)
    xs = alpha[finite] / beta[finite]
    U = V[:s, finite]
    # y from consecutive entries of the power vector (y^{s-1}, ..., y, 1)
    ys = np.empty(len(xs), dtype=complex)
    for t in range(len(xs)):
        u = U[:, t]
        k = int(np.argmax(np.abs(u[1:]))) + 1
        ys[t] = u[k - 1] / u[k]
    keep = np.abs(xs) < 1e8
    return xs[keep], ys[keep]


def _random_unitary(rng: np.random.Generator, k: int) -> np.ndarray:
    Z = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / math.sqrt(2)
    Qm, R = np.linalg.qr(Z)
    return Qm * (np.diag(R) / np.abs(np.diag(R)))


def conv2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1), dtype=complex)
    for i, j in zip(*np.nonzero(b)):
        out[i:i + a.shape[0], j:j + a.shape[1]] += b[i, j] * a
    return out


def linear_substitute(C: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Coefficient grid of p(U[0,0] x + U[0,1] y, U[1,0] x + U[1,1] y)."""
    n = C.shape[0] + C.shape[1] - 2
    L1 = np.zeros((2, 2), complex)
    L1[1, 0], L1[0, 1] = U[0, 0], U[0, 1]
    L2 = np.zeros((2, 2), complex)
    L2[1, 0], L2[0, 1] = U[1, 0], U[1, 1]
    pow1 = [np.ones((1, 1), complex)]
    pow2 = [np.ones((1, 1), complex)]
    for _ in range(n):
        pow1.append(conv2(pow1[-1], L1))
        pow2.append(conv2(pow2[-1], L2))
    out = np.zeros((n + 1, n + 1), complex)
    for i, j in zip(*np.nonzero(C)):
        term = conv2(pow1[i], pow2[j])
        out[: term.shape[0], : term.shape[1]] += C[i, j] * term
    return out


def _is_zero_dimensional(P, Q, rng) -> bool:
    # in generic coordinates every common factor depends on y, so Res_y catches it
    U = _random_unitary(rng, 2)
    S = sylvester_matrix_coeffs(linear_substitute(P, U), linear_substitute(Q, U))
    K = S.shape[0]
    for x in rng.standard_normal(3) + 1j * rng.standard_normal(3):
        M = np.tensordot(x ** np.arange(K), S, axes=1)
        sv = np.linalg.svd(M, compute_uv=False)
        if sv[-1] > 1e-11 * sv[0]:
            return True
    return False


def _solve_affine(P, Q):
    xs, ys = _solve_pencil(P, Q)
    if len(xs) == 0:
        return np.zeros((0, 2), complex), np.zeros(0, int), 0.0
    xs, ys = _newton_2d(P, Q, xs, ys)
    res = np.maximum(_backward_error_2d(P, xs, ys), _backward_error_2d(Q, xs, ys))
    good = np.isfinite(res) & (res <= 1e-7)
    pts = np.stack([xs[good], ys[good]], axis=1)
    cents, sizes = _cluster(pts, CLUSTER_REL)
    resid = float(res[good].max(initial=0.0))
    return cents.reshape(-1, 2), sizes, resid


def solve_system_2d(p, q, *, expected: int | None = None, seed: int = 0, attempts: int = 4) -> ZeroSample:
    """Common zeros of p(x, y) = q(x, y) = 0 in C^2.

    ``expected`` (default deg p * deg q) is the count to aim for: when the
    affine chart returns fewer points the system is re-solved after a random
    unitary change of coordinates, which moves clustered or ill-conditioned
    x-coordinates apart.  The best attempt is returned.
    """
    P, Q = _grid(p), _grid(q)
    dp = max((i + j for i, j in zip(*np.nonzero(P))), default=-1)
    dq = max((i + j for i, j in zip(*np.nonzero(Q))), default=-1)
    if dp < 1 or dq < 1:
        raise ValueError("both polynomials need positive degree")
    target = dp * dq if expected is None else expected
    rng = np.random.default_rng(seed)
    if not _is_zero_dimensional(P, Q, rng):
        raise NonGenericSystemError("resultant vanishes identically: positive-dimensional common zero locus")
    best = None
    for attempt in range(attempts):
        if attempt == 0:
            U = np.eye(2, dtype=complex)
            Pc, Qc = P, Q
        else:
            U = _random_unitary(rng, 2)
            Pc, Qc = linear_substitute(P, U), linear_substitute(Q, U)
        pts, sizes, resid = _solve_affine(Pc, Qc)
        pts = pts @ U.T
        if len(pts):
            xs, ys = _newton_2d(P, Q, pts[:, 0].copy(), pts[:, 1].copy(), steps=2)
            pts = np.stack([xs, ys], axis=1)
            resid = float(np.maximum(_backward_error_2d(P, xs, ys), _backward_error_2d(Q, xs, ys)).max())
        total = int(sizes.sum())
        cand = ZeroSample(pts, sizes, 2, max(dp, dq), resid, "sylvester_pencil" if attempt == 0 else f"sylvester_pencil_chart{attempt}")
        if best is None or abs(total - target) < abs(best.total - target):
            best = cand
        if total == target:
            break
    return best


# ---------------------------------------------------------------- pairings

@dataclass(frozen=True)
class CurrentPairing:
    value: float
    method: str
    normalized: bool = True
    degree: int = 0
    codim: int = 1
    warnings: tuple[str, ...] = ()


def pairing_root_sum(zeros: ZeroSample, phi: TestForm) -> CurrentPairing:
    """(1/n^k) sum over zeros of multiplicity * phi(point)."""
    if zeros.codim != zeros.num_vars:
        raise UnsupportedPairing("root sums need point masses (codim = m); use pairing_poincare_lelong")
    if phi.num_vars != zeros.num_vars:
        raise DimensionMismatch("test form and zeros live in different dimensions")
    n, k = zeros.source_degree, zeros.codim
    vals = np.asarray(phi(zeros.points if zeros.num_vars > 1 else zeros.points[:, 0]), float).reshape(-1)
    total = math.fsum(vals * zeros.multiplicities)
    return CurrentPairing(total / n**k, "root_sum", True, n, k)


def _log_abs(f: Polynomial, pts: np.ndarray) -> np.ndarray:
    vals = np.asarray(f(pts if f.num_vars > 1 else pts[:, 0]), complex).reshape(-1)
    a = np.abs(vals)
    if np.any(a == 0):
        raise ZeroSetPoint("f vanishes at a quadrature node")
    return np.log(a)


def pairing_poincare_lelong(f: Polynomial, phi: TestForm, n: int, *, divisions: int | None = None,
                            check: bool = False, tol: float = 1e-4) -> CurrentPairing:
    """(1/n) integral log|f| dd^c phi, with dd^c phi = Laplacian(phi)/2pi.

    In m = 2 the test form is phi * beta and the value is the pairing of the
    codimension-one current with it.  With ``check`` the quadrature is repeated
    on a coarser grid and a change above ``tol`` is reported as a warning.
    """
    if n < 1:
        raise ValueError("degree n must be >= 1")
    if f.is_zero:
        raise ValueError("f is identically zero")
    if f.num_vars != phi.num_vars:
        raise DimensionMismatch("polynomial and test form live in different dimensions")
    k = divisions or (128 if phi.num_vars == 1 else 16)
    Q = phi.quadrature(k)
    val = float(np.dot(_log_abs(f, Q.nodes) * phi.ddc_density(Q.nodes), Q.weights)) / n
    notes: tuple[str, ...] = ()
    if check:
        Qc = phi.quadrature(k // 2)
        coarse = float(np.dot(_log_abs(f, Qc.nodes) * phi.ddc_density(Qc.nodes), Qc.weights)) / n
        if abs(coarse - val) > tol:
            msg = f"Poincare-Lelong quadrature moved by {abs(coarse - val):.2e} under refinement"
            warnings.warn(msg, QuadratureWarning, stacklevel=2)
            notes = (msg,)
    return CurrentPairing(val, "poincare_lelong", True, n, 1, notes)
