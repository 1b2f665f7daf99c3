"""Polynomials on C^m, basis families of P_n and Bergman-type functions.

A basis family of the space P_n of polynomials of degree <= n in m variables
is stored as a square coefficient matrix: row j holds the coefficients of
member j over the monomials ``multi_indices(m, n)`` (graded lexicographic).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterator, Mapping, NamedTuple, Sequence

import numpy as np
from numpy.polynomial import chebyshev as _cheb

from .errors import DegeneratePointError, DimensionMismatch, SingularGramError, ZeroSetPoint

ORDER = "grlex"
NORMALIZATIONS = ("sup-normalized", "L2-orthonormal", "fs-orthonormal", "raw")
_INDEX_LIMIT = 2**63 - 1


def space_dimension(m: int, n: int) -> int:
    """Dimension C(m+n, n) of the space of polynomials of degree <= n in m variables."""
    if int(m) != m or int(n) != n:
        raise TypeError("m and n must be integers")
    if m < 1 or n < 0:
        raise ValueError(f"need m >= 1 and n >= 0, got m={m}, n={n}")
    d = math.comb(m + n, n)
    if d > _INDEX_LIMIT:
        raise OverflowError(f"dim P_n for m={m}, n={n} exceeds the 64-bit index range")
    return d


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=64)
def multi_indices(m: int, n: int) -> tuple[tuple[int, ...], ...]:
    """Exponents of degree <= n in m variables, by degree then descending lex.

    For m = 1 this is (0,), (1,), ..., (n,), i.e. ascending powers.
    """
    space_dimension(m, n)
    out: list[tuple[int, ...]] = []
    for deg in range(n + 1):
        out.extend(_compositions(deg, m))
    return tuple(out)


def grlex_key(alpha: Sequence[int]) -> tuple:
    return (sum(alpha), tuple(-a for a in alpha))


class Quadrature(NamedTuple):
    """Weighted point set: ``nodes`` has shape (N, m), ``weights`` shape (N,)."""

    nodes: np.ndarray
    weights: np.ndarray


def as_points(z, m: int) -> tuple[np.ndarray, tuple[int, ...]]:
    """Flatten ``z`` to an (N, m) complex array; also return the batch shape."""
    arr = np.asarray(z, dtype=complex)
    if m == 1:
        if arr.ndim >= 1 and arr.shape[-1] == 1 and arr.ndim > 1:
            arr = arr[..., 0]
        return arr.reshape(-1, 1), arr.shape
    if arr.ndim == 0 or arr.shape[-1] != m:
        raise DimensionMismatch(f"expected points in C^{m}, got array of shape {arr.shape}")
    return arr.reshape(-1, m), arr.shape[:-1]


def monomial_values(points: np.ndarray, exponents: Sequence[Sequence[int]]) -> np.ndarray:
    """Matrix of monomials z^alpha: rows are points (N, m), columns exponents."""
    E = np.asarray(exponents, dtype=int)
    N, m = points.shape
    if E.shape[1] != m:
        raise DimensionMismatch(f"exponents have {E.shape[1]} variables, points have {m}")
    top = int(E.max()) if E.size else 0
    out = np.ones((N, E.shape[0]), dtype=complex)
    for v in range(m):
        pw = points[:, v, None] ** np.arange(top + 1)
        out *= pw[:, E[:, v]]
    return out


@dataclass(frozen=True)
class Polynomial:
    """Complex polynomial in ``num_vars`` variables, coefficients keyed by exponent tuple."""

    num_vars: int
    coeffs: Mapping[tuple[int, ...], complex]
    degree: int = field(init=False)

    def __post_init__(self):
        if self.num_vars < 1:
            raise ValueError("num_vars must be positive")
        clean: dict[tuple[int, ...], complex] = {}
        for alpha, c in self.coeffs.items():
            alpha = (int(alpha),) if np.isscalar(alpha) else tuple(int(a) for a in alpha)
            if len(alpha) != self.num_vars or min(alpha) < 0:
                raise DimensionMismatch(f"bad multi-index {alpha} for {self.num_vars} variables")
            c = complex(c)
            if c != 0:
                clean[alpha] = clean.get(alpha, 0j) + c
        object.__setattr__(self, "coeffs", dict(sorted(clean.items(), key=lambda kv: grlex_key(kv[0]))))
        object.__setattr__(self, "degree", max((sum(a) for a in clean), default=-1))

    @classmethod
    def from_dense(cls, coeffs: Sequence[complex]) -> "Polynomial":
        """Univariate polynomial from ascending coefficients c_0, c_1, ..."""
        return cls(1, {(k,): c for k, c in enumerate(np.asarray(coeffs, dtype=complex))})

    @classmethod
    def from_grid(cls, C) -> "Polynomial":
        """Bivariate polynomial with ``C[i, j]`` the coefficient of x^i y^j."""
        C = np.asarray(C, dtype=complex)
        return cls(2, {(i, j): C[i, j] for i, j in zip(*np.nonzero(C))})

    @classmethod
    def from_vector(cls, m: int, n: int, vec) -> "Polynomial":
        """Polynomial from a coefficient vector over ``multi_indices(m, n)``."""
        vec = np.asarray(vec, dtype=complex)
        idx = multi_indices(m, n)
        if vec.shape != (len(idx),):
            raise DimensionMismatch(f"coefficient vector length {vec.shape} != {len(idx)}")
        return cls(m, dict(zip(idx, vec)))

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    def dense(self) -> np.ndarray:
        """Ascending coefficient array (m = 1) or coefficient grid ``C[i, j]`` (m = 2)."""
        deg = max(self.degree, 0)
        if self.num_vars == 1:
            out = np.zeros(deg + 1, dtype=complex)
            for (k,), c in self.coeffs.items():
                out[k] = c
            return out
        if self.num_vars == 2:
            out = np.zeros((deg + 1, deg + 1), dtype=complex)
            for (i, j), c in self.coeffs.items():
                out[i, j] = c
            return out
        raise NotImplementedError("dense layout only for one or two variables")

    def vector(self, n: int | None = None) -> np.ndarray:
        """Coefficients over ``multi_indices(num_vars, n)``."""
        n = max(self.degree, 0) if n is None else n
        if n < self.degree:
            raise ValueError(f"degree {self.degree} does not fit in P_{n}")
        pos = {a: i for i, a in enumerate(multi_indices(self.num_vars, n))}
        out = np.zeros(len(pos), dtype=complex)
        for alpha, c in self.coeffs.items():
            out[pos[alpha]] = c
        return out

    def __call__(self, z):
        pts, shape = as_points(z, self.num_vars)
        if self.is_zero:
            vals = np.zeros(len(pts), dtype=complex)
        elif self.degree == 0:
            vals = np.full(len(pts), next(iter(self.coeffs.values())), dtype=complex)
        elif self.num_vars == 1:
            c = self.dense()
            vals = np.full(len(pts), c[-1], dtype=complex)
            x = pts[:, 0]
            for ck in c[-2::-1]:
                vals = vals * x + ck
        else:
            alphas = list(self.coeffs)
            vals = monomial_values(pts, alphas) @ np.array([self.coeffs[a] for a in alphas])
        vals = vals.reshape(shape)
        return complex(vals) if vals.ndim == 0 else vals

    def conj(self) -> "Polynomial":
        return Polynomial(self.num_vars, {a: np.conj(c) for a, c in self.coeffs.items()})

    def scale(self, factor: complex) -> "Polynomial":
        return Polynomial(self.num_vars, {a: factor * c for a, c in self.coeffs.items()})


@dataclass(frozen=True, eq=False)
class BasisFamily:
    """Ordered basis {p_nj} of P_n with normalization metadata.

    ``matrix[j]`` holds the monomial coefficients of member j.  ``scales``
    records the divisors applied by :func:`normalize_sup`, for audit.
    """

    num_vars: int
    degree: int
    matrix: np.ndarray
    normalization: str = "raw"
    scales: tuple[float, ...] | None = None
    first_is_constant: bool = field(init=False)

    def __post_init__(self):
        d = space_dimension(self.num_vars, self.degree)
        mat = np.array(self.matrix, dtype=complex)
        if mat.shape != (d, d):
            raise DimensionMismatch(f"basis matrix must be {d}x{d}, got {mat.shape}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        const = np.zeros(d, dtype=complex)
        const[0] = 1.0
        object.__setattr__(self, "first_is_constant", bool(np.array_equal(mat[0], const)))
        if self.normalization == "sup-normalized" and not self.first_is_constant:
            raise ValueError("a sup-normalized family must have p_n1 = 1 as its first member")
        tri = np.allclose(np.triu(mat), mat) or np.allclose(np.tril(mat), mat)
        if tri:
            ok = np.all(np.diag(mat) != 0)
        else:
            ok = np.linalg.matrix_rank(mat) == d
        if not ok:
            raise ValueError("basis members are linearly dependent")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def exponents(self) -> tuple[tuple[int, ...], ...]:
        return multi_indices(self.num_vars, self.degree)

    @property
    def members(self) -> list[Polynomial]:
        return [Polynomial(self.num_vars, dict(zip(self.exponents, row))) for row in self.matrix]

    def evaluate(self, z) -> np.ndarray:
        """Member values at ``z``; shape (..., d) for a batch of points."""
        pts, shape = as_points(z, self.num_vars)
        vals = monomial_values(pts, self.exponents) @ self.matrix.T
        return vals.reshape(shape + (self.dim,))

    def combine(self, a) -> np.ndarray:
        """Monomial coefficient vector of sum_j a_j p_nj."""
        a = np.asarray(a, dtype=complex)
        if a.shape[-1] != self.dim:
            raise DimensionMismatch(f"coefficient vector has length {a.shape[-1]}, basis has {self.dim}")
        return a @ self.matrix

    def polynomial(self, a) -> Polynomial:
        return Polynomial.from_vector(self.num_vars, self.degree, self.combine(a))

    def to_json(self) -> dict:
        members = []
        for row in self.matrix:
            members.append(
                [[list(alpha), float(c.real), float(c.imag)] for alpha, c in zip(self.exponents, row) if c != 0]
            )
        doc = {
            "m": self.num_vars,
            "n": self.degree,
            "order": ORDER,
            "normalization": self.normalization,
            "members": members,
        }
        if self.scales is not None:
            doc["scales"] = list(self.scales)
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "BasisFamily":
        if doc.get("order", ORDER) != ORDER:
            raise ValueError(f"unsupported monomial order {doc.get('order')!r}")
        m, n = int(doc["m"]), int(doc["n"])
        pos = {a: i for i, a in enumerate(multi_indices(m, n))}
        d = len(pos)
        if len(doc["members"]) != d:
            raise DimensionMismatch(f"expected {d} members, got {len(doc['members'])}")
        mat = np.zeros((d, d), dtype=complex)
        for j, triples in enumerate(doc["members"]):
            for alpha, re, im in triples:
                mat[j, pos[tuple(alpha)]] = complex(re, im)
        scales = tuple(doc["scales"]) if "scales" in doc else None
        return cls(m, n, mat, doc.get("normalization", "raw"), scales)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def monomial_basis(m: int, n: int) -> BasisFamily:
    d = space_dimension(m, n)
    return BasisFamily(m, n, np.eye(d, dtype=complex), "raw")


def chebyshev_basis(n: int) -> BasisFamily:
    """Chebyshev polynomials T_0..T_n, sup-normalized on [-1, 1].

    Members are stored in monomial form, whose coefficients grow like 2^n;
    keep n moderate (<= 40) to retain accuracy.
    """
    mat = np.zeros((n + 1, n + 1), dtype=complex)
    for j in range(n + 1):
        c = _cheb.cheb2poly(np.eye(n + 1)[j])
        mat[j, : len(c)] = c
    return BasisFamily(1, n, mat, "sup-normalized")


def _single_point(basis: BasisFamily, z) -> np.ndarray:
    pts, shape = as_points(z, basis.num_vars)
    if len(pts) != 1:
        raise DimensionMismatch("expected a single point")
    return basis.evaluate(pts)[0]


def eval_basis(basis: BasisFamily, z) -> np.ndarray:
    """(p_n1(z), ..., p_nd(z)) at one point (or a batch, with trailing axis d)."""
    pts, shape = as_points(z, basis.num_vars)
    vals = basis.evaluate(pts)
    return vals[0] if shape == () else vals.reshape(shape + (basis.dim,))


def bergman_gamma(basis: BasisFamily, z):
    """Gamma_n(z) = sum_j |p_nj(z)|^2 at one point or a batch of points."""
    vals = eval_basis(basis, z)
    g = np.sum(vals.real**2 + vals.imag**2, axis=-1)
    return float(g) if np.ndim(g) == 0 else g


def unit_section(basis: BasisFamily, z) -> np.ndarray:
    """p(z) / sqrt(Gamma_n(z)), a unit vector in C^d."""
    vals = _single_point(basis, z)
    g = float(np.sum(np.abs(vals) ** 2))
    if not g > 0:
        raise DegeneratePointError(f"Gamma_n vanishes at {z!r}")
    return vals / math.sqrt(g)


def log_decompose(coeffs, basis: BasisFamily, z) -> tuple[float, float]:
    """Split (1/n) log|f_n(z)| into (1/n) log|<a, beta(z)>| + (1/2n) log Gamma_n(z).

    The pairing <a, beta> = sum_j a_j beta_j is bilinear, as in f = sum_j a_j p_nj.
    """
    n = basis.degree
    if n < 1:
        raise ValueError("log decomposition needs degree n >= 1")
    a = np.asarray(coeffs, dtype=complex)
    if a.shape != (basis.dim,):
        raise DimensionMismatch(f"coefficient vector length {a.shape} != {basis.dim}")
    beta = unit_section(basis, z)
    ip = complex(np.dot(a, beta))
    if ip == 0 or abs(ip) <= 1e-300:
        raise ZeroSetPoint(f"<a, beta(z)> = 0 at {z!r}: point on the zero set")
    g = float(np.sum(np.abs(_single_point(basis, z)) ** 2))
    return math.log(abs(ip)) / n, math.log(g) / (2 * n)


def build_orthonormal_basis(
    quadrature: Quadrature,
    weight: Callable[[np.ndarray], np.ndarray] | np.ndarray | None,
    n: int,
    *,
    gram_tol: float = 1e-8,
) -> BasisFamily:
    """Gram-Schmidt of the monomials of degree <= n in the product
    <p, q> = sum_i w_i p(z_i) conj(q(z_i)) exp(-2n q(z_i)).

    Modified Gram-Schmidt with one re-orthogonalization pass.  Raises
    SingularGramError when the nodes cannot separate P_n.
    """
    nodes = np.asarray(quadrature.nodes, dtype=complex)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    w = np.asarray(quadrature.weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("quadrature weights must be positive")
    m = nodes.shape[1]
    if weight is None:
        qv = np.zeros(len(nodes))
    elif callable(weight):
        qv = np.asarray(weight(nodes if m > 1 else nodes[:, 0]), dtype=float).reshape(-1)
    else:
        qv = np.asarray(weight, dtype=float).reshape(-1)
    exps = multi_indices(m, n)
    d = len(exps)
    scale = np.sqrt(w) * np.exp(-n * qv)
    A = scale[:, None] * monomial_values(nodes, exps)
    if len(nodes) < d:
        raise SingularGramError(f"{len(nodes)} nodes cannot separate a space of dimension {d}", np.inf)

    Q = np.empty_like(A)
    R = np.zeros((d, d), dtype=complex)
    for j in range(d):
        v = A[:, j].copy()
        norm0 = np.linalg.norm(v)
        for _ in range(2):
            for i in range(j):
                c = np.vdot(Q[:, i], v)
                v -= c * Q[:, i]
                R[i, j] += c
        r = np.linalg.norm(v)
        if norm0 == 0 or r <= 1e-13 * norm0:
            raise SingularGramError(f"Gram matrix singular at member {j} of degree-{n} basis", np.linalg.cond(A))
        Q[:, j] = v / r
        R[j, j] = r

    from scipy.linalg import solve_triangular

    Rinv = solve_triangular(R, np.eye(d, dtype=complex))
    mat = Rinv.T.copy()
    G = (A @ Rinv).conj().T @ (A @ Rinv)
    err = np.max(np.abs(G - np.eye(d)))
    if err > gram_tol:
        raise SingularGramError(f"orthonormality lost ({err:.2e} > {gram_tol:.0e})", np.linalg.cond(A))
    return BasisFamily(m, n, mat, "L2-orthonormal")


def weighted_sup(basis: BasisFamily, points: np.ndarray, qvals: np.ndarray) -> np.ndarray:
    """Per-member max over ``points`` of |p_nj| exp(-n q)."""
    vals = np.abs(basis.evaluate(points)) * np.exp(-basis.degree * np.asarray(qvals))[:, None]
    return vals.max(axis=0)


def normalize_sup(basis: BasisFamily, kq) -> BasisFamily:
    """Scale each member to weighted sup 1 on the discretized compact ``kq``.

    The first member must be a constant; it is reset to p_n1 = 1, which needs
    exp(-n q) <= 1 on K.
    """
    if kq.num_vars != basis.num_vars:
        raise DimensionMismatch("compact and basis live in different dimensions")
    pts = kq.sup_points()
    qv = kq.weight_values(pts)
    sups = weighted_sup(basis, pts, qv)
    if np.any(sups == 0):
        bad = int(np.flatnonzero(sups == 0)[0])
        raise ValueError(f"basis member {bad} vanishes identically on the grid")
    mat = np.array(basis.matrix) / sups[:, None]
    if np.count_nonzero(basis.matrix[0]) != 1 or basis.matrix[0, 0] == 0:
        raise ValueError("first member must be a nonzero constant to enforce p_n1 = 1")
    if np.max(np.exp(-basis.degree * qv)) > 1 + 1e-12:
        raise ValueError("p_n1 = 1 violates the sup bound: weight q must be >= 0 on K")
    mat[0] = 0
    mat[0, 0] = 1.0
    return BasisFamily(basis.num_vars, basis.degree, mat, "sup-normalized", tuple(float(s) for s in sups))
