"""Weighted compacts (K, q), extremal functions and test-form pairings.

Conventions: dd^c = (i/pi) d dbar.  On C^m the codimension-one pairing of
dd^c u with the test form phi = chi * beta (beta the flat Kaehler form, chi a
scalar bump) reduces to (1/2pi) * integral of u * Laplacian(chi) over R^{2m};
for m = 1 this is the usual <dd^c u, chi>.
"""

from __future__ import annotations

import ast
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, NoClosedFormError
from .poly_core import BasisFamily, Quadrature, as_points, bergman_gamma

KINDS = ("unit_disk", "circle", "interval", "polydisk", "unit_ball", "custom_grid")
_KIND_VARS = {"unit_disk": 1, "circle": 1, "interval": 1, "polydisk": 2, "unit_ball": 2}
PROFILES = ("smooth_bump", "polynomial_bump")
# grid offsets (in cells) keep quadrature nodes off lattice-aligned zeros
_JITTER = np.array([0.5 + 1e-3 * (math.sqrt(5) - 2), 0.5 + 1e-3 * (math.sqrt(3) - 1.5),
                    0.5 + 1e-3 * (math.sqrt(7) - 2.5), 0.5 + 1e-3 * (math.sqrt(2) - 1.2)])


class QuadratureWarning(UserWarning):
    pass


# ---------------------------------------------------------------- weights

_ALLOWED_BINOPS = (ast.Add, ast.Sub, ast.Mult, ast.Pow)


class WeightExpression:
    """Real weight q written as a polynomial in abs2, re, im (re1, im1, re2, im2 for m = 2).

    ``abs2`` is |z|^2 summed over coordinates.
    """

    def __init__(self, text: str, num_vars: int):
        self.text = str(text).strip() or "0"
        self.num_vars = num_vars
        try:
            tree = ast.parse(self.text, mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"weight expression {self.text!r}: {exc.msg}") from None
        self._names = {"abs2"}
        if num_vars == 1:
            self._names |= {"re", "im"}
        self._names |= {f"{p}{k}" for p in ("re", "im") for k in range(1, num_vars + 1)}
        self._check(tree.body)
        self._tree = tree
        self._code = compile(tree, "<weight>", "eval")

    def _check(self, node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return
        if isinstance(node, ast.Name):
            if node.id not in self._names:
                raise ValueError(f"weight expression {self.text!r}: unknown variable {node.id!r}")
            return
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            return self._check(node.operand)
        if isinstance(node, ast.BinOp) and isinstance(node.op, _ALLOWED_BINOPS):
            if isinstance(node.op, ast.Pow):
                e = node.right
                if not (isinstance(e, ast.Constant) and isinstance(e.value, int) and e.value >= 0):
                    raise ValueError(f"weight expression {self.text!r}: exponents must be literal non-negative integers")
            self._check(node.left)
            self._check(node.right)
            return
        raise ValueError(f"weight expression {self.text!r}: unsupported syntax {type(node).__name__}")

    @property
    def is_zero(self) -> bool:
        body = self._tree.body
        return isinstance(body, ast.Constant) and body.value == 0

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=complex).reshape(-1, self.num_vars)
        env = {"abs2": np.sum(pts.real**2 + pts.imag**2, axis=1)}
        for k in range(self.num_vars):
            env[f"re{k + 1}"] = pts[:, k].real
            env[f"im{k + 1}"] = pts[:, k].imag
        if self.num_vars == 1:
            env["re"], env["im"] = env["re1"], env["im1"]
        val = eval(self._code, {"__builtins__": {}}, env)
        return np.broadcast_to(np.asarray(val, dtype=float), (len(pts),)).copy()


# ---------------------------------------------------------------- compacts

def _circle_grid(N: int) -> Quadrature:
    theta = 2 * np.pi * np.arange(N) / N
    return Quadrature(np.exp(1j * theta)[:, None], np.full(N, 1.0 / N))


def _disk_area_grid(nr: int, nt: int) -> Quadrature:
    x, w = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * (x + 1)
    wr = 0.5 * w * r
    theta = 2 * np.pi * np.arange(nt) / nt
    nodes = (r[:, None] * np.exp(1j * theta)[None, :]).reshape(-1)
    weights = np.repeat(wr * 2 * np.pi / nt, nt)
    return Quadrature(nodes[:, None], weights)


def _interval_grid(N: int) -> Quadrature:
    x = np.cos(np.pi * np.arange(N) / (N - 1))
    w = np.full(N, 1.0 / (N - 1))
    w[[0, -1]] *= 0.5
    return Quadrature(x.astype(complex)[:, None], w)


def _torus_grid(N: int) -> Quadrature:
    e = np.exp(2j * np.pi * np.arange(N) / N)
    z1, z2 = np.meshgrid(e, e, indexing="ij")
    nodes = np.stack([z1.ravel(), z2.ravel()], axis=1)
    return Quadrature(nodes, np.full(N * N, 1.0 / (N * N)))


def _sphere3_grid(nu: int, nt: int, phase=(0.0, 0.0)) -> Quadrature:
    """Uniform probability on S^3 via Hopf coordinates (sqrt(u) e^{it1}, sqrt(1-u) e^{it2})."""
    x, w = np.polynomial.legendre.leggauss(nu)
    u = 0.5 * (x + 1)
    wu = 0.5 * w
    e1 = np.exp(2j * np.pi * (np.arange(nt) + phase[0]) / nt)
    e2 = np.exp(2j * np.pi * (np.arange(nt) + phase[1]) / nt)
    U, E1, E2 = np.meshgrid(u, e1, e2, indexing="ij")
    nodes = np.stack([(np.sqrt(U) * E1).ravel(), (np.sqrt(1 - U) * E2).ravel()], axis=1)
    weights = np.repeat(wu / (nt * nt), nt * nt)
    return Quadrature(nodes, weights)


@dataclass(frozen=True, eq=False)
class WeightedCompact:
    """A compact K with weight q and its discretizations.

    ``boundary_grid`` carries a probability measure on the Shilov boundary (or
    on K itself for the circle and interval); ``area_grid`` covers the interior
    when K has one and is used only for sup estimates.
    """

    kind: str
    num_vars: int
    boundary_grid: Quadrature
    area_grid: Quadrature | None = None
    weight_expr: str = "0"
    resolution: int = 0
    weight: WeightExpression = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown compact kind {self.kind!r}")
        object.__setattr__(self, "weight", WeightExpression(self.weight_expr, self.num_vars))
        for grid in (self.boundary_grid, self.area_grid):
            if grid is None:
                continue
            if len(grid.nodes) == 0 or np.any(grid.weights <= 0):
                raise ValueError("grids must be nonempty with positive weights")
        q = self.weight_values(self.sup_points())
        if not np.all(np.isfinite(q)):
            raise ValueError("weight is not finite on the grid")

    @property
    def unweighted(self) -> bool:
        return self.weight.is_zero

    def weight_values(self, points) -> np.ndarray:
        return self.weight(points)

    def sup_points(self) -> np.ndarray:
        pts = [self.boundary_grid.nodes]
        if self.area_grid is not None:
            pts.append(self.area_grid.nodes)
        return np.concatenate(pts, axis=0)

    def refined(self, factor: int = 2) -> "WeightedCompact":
        if self.kind == "custom_grid":
            raise ValueError("custom grids cannot be refined")
        return make_compact(self.kind, self.weight_expr, self.resolution * factor)

    def measure(self) -> Quadrature:
        """Probability measure used for L2 products (normalized boundary measure)."""
        return self.boundary_grid


def make_compact(kind: str, weight: str = "0", resolution: int | None = None,
                 nodes=None, weights=None) -> WeightedCompact:
    """Build a WeightedCompact with default grids (512 points in m = 1, 64 x 64 in m = 2)."""
    if kind == "custom_grid":
        if nodes is None or weights is None:
            raise ValueError("custom_grid needs nodes and weights")
        nodes = np.asarray(nodes, dtype=complex)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        return WeightedCompact(kind, nodes.shape[1], Quadrature(nodes, np.asarray(weights, float)), None, weight)
    if kind not in _KIND_VARS:
        raise ValueError(f"unknown compact kind {kind!r}")
    m = _KIND_VARS[kind]
    res = resolution or (512 if m == 1 else 64)
    if kind == "circle":
        return WeightedCompact(kind, 1, _circle_grid(res), None, weight, res)
    if kind == "unit_disk":
        return WeightedCompact(kind, 1, _circle_grid(res), _disk_area_grid(max(res // 16, 8), max(res // 8, 16)), weight, res)
    if kind == "interval":
        return WeightedCompact(kind, 1, _interval_grid(res), None, weight, res)
    if kind == "polydisk":
        inner = _disk_area_grid(max(res // 16, 4), max(res // 8, 8))
        a, b = np.meshgrid(inner.nodes[:, 0], inner.nodes[:, 0], indexing="ij")
        wa, wb = np.meshgrid(inner.weights, inner.weights, indexing="ij")
        area = Quadrature(np.stack([a.ravel(), b.ravel()], axis=1), (wa * wb).ravel())
        return WeightedCompact(kind, 2, _torus_grid(res), area, weight, res)
    # unit_ball
    sphere = _sphere3_grid(max(res // 4, 4), max(res // 2, 8))
    coarse = _sphere3_grid(4, 8)
    radii = np.linspace(0.2, 0.8, 4)
    area_nodes = np.concatenate([r * coarse.nodes for r in radii])
    area_w = np.concatenate([coarse.weights * r**3 for r in radii])
    return WeightedCompact(kind, 2, sphere, Quadrature(area_nodes, area_w), weight, res)


# ---------------------------------------------------------------- extremal functions

def _extremal_closed_form(kind: str, pts: np.ndarray) -> np.ndarray:
    if kind in ("unit_disk", "circle"):
        return np.log(np.maximum(np.abs(pts[:, 0]), 1.0))
    if kind == "interval":
        z = pts[:, 0]
        s = np.sqrt(z * z - 1)
        w = z + s
        w = np.where(np.abs(w) >= 1, w, z - s)
        return np.maximum(np.log(np.abs(w)), 0.0)
    if kind == "polydisk":
        return np.log(np.maximum(np.abs(pts).max(axis=1), 1.0))
    if kind == "unit_ball":
        return np.log(np.maximum(np.linalg.norm(pts, axis=1), 1.0))
    raise NoClosedFormError(f"no closed-form extremal function for kind {kind!r}; use extremal_numeric")


def extremal_analytic(kq: WeightedCompact, z):
    """Closed-form pluricomplex Green function V_K (unweighted canonical compacts)."""
    if kq.kind not in _KIND_VARS:
        raise NoClosedFormError(f"no closed form for {kq.kind!r}; use extremal_numeric")
    if not kq.unweighted:
        raise NoClosedFormError(f"weight {kq.weight_expr!r} is nonzero; use extremal_numeric")
    pts, shape = as_points(z, kq.num_vars)
    vals = _extremal_closed_form(kq.kind, pts).reshape(shape)
    return float(vals) if vals.ndim == 0 else vals


def extremal_numeric(kq: WeightedCompact, n: int, basis: BasisFamily, z):
    """(1/2n) log Gamma_n(z), which tends to V_{K,q} for admissible bases.

    Away from the boundary of K the error behaves like (log d_n)/(2n).
    """
    if basis.degree != n:
        raise ValueError(f"basis has degree {basis.degree}, expected {n}")
    if basis.num_vars != kq.num_vars:
        raise DimensionMismatch("basis and compact live in different dimensions")
    if basis.normalization not in ("sup-normalized", "L2-orthonormal"):
        raise ValueError("extremal_numeric needs a sup-normalized or L2-orthonormal basis")
    g = bergman_gamma(basis, z)
    if np.any(np.asarray(g) <= 0):
        raise ArithmeticError("Gamma_n vanishes at an evaluation point")
    return np.log(g) / (2 * n)


@dataclass(frozen=True)
class ExtremalFunction:
    source: str
    evaluator: Callable[[np.ndarray], np.ndarray]
    num_vars: int
    metadata: dict = field(default_factory=dict)

    def __call__(self, z):
        pts, shape = as_points(z, self.num_vars)
        vals = np.asarray(self.evaluator(pts), dtype=float).reshape(shape)
        return float(vals) if vals.ndim == 0 else vals


def analytic_extremal(kq: WeightedCompact) -> ExtremalFunction:
    extremal_analytic(kq, np.zeros(kq.num_vars) if kq.num_vars > 1 else 0.0)
    kind = kq.kind
    return ExtremalFunction("analytic", lambda pts: _extremal_closed_form(kind, pts), kq.num_vars,
                            {"kind": kind, "weight": kq.weight_expr})


def numeric_extremal(kq: WeightedCompact, basis: BasisFamily) -> ExtremalFunction:
    n = basis.degree
    return ExtremalFunction("bergman_numeric", lambda pts: extremal_numeric(kq, n, basis, pts), kq.num_vars,
                            {"kind": kq.kind, "weight": kq.weight_expr, "n": n})


def zero_function(num_vars: int) -> ExtremalFunction:
    return ExtremalFunction("analytic", lambda pts: np.zeros(len(pts)), num_vars, {"kind": "zero"})


# ---------------------------------------------------------------- test forms

def _profile_derivs(profile: str, t: np.ndarray):
    """f(t), f'(t)/t and f''(t) for the radial profile, zero for t >= 1."""
    f = np.zeros_like(t)
    fp_t = np.zeros_like(t)
    fpp = np.zeros_like(t)
    inside = t < 1
    ti = t[inside]
    s = 1 - ti * ti
    if profile == "smooth_bump":
        val = np.exp(1 - 1 / s)
        g1_t = -2 / s**2
        g1 = g1_t * ti
        g2 = -2 / s**2 - 8 * ti * ti / s**3
        f[inside] = val
        fp_t[inside] = val * g1_t
        fpp[inside] = val * (g1 * g1 + g2)
    elif profile == "polynomial_bump":
        f[inside] = s**4
        fp_t[inside] = -8 * s**3
        fpp[inside] = -8 * s**3 + 48 * ti * ti * s**2
    else:
        raise ValueError(f"unknown profile {profile!r}")
    return f, fp_t, fpp


@dataclass(frozen=True)
class TestForm:
    """Radial bump chi centred at ``center`` with support radius ``radius``.

    In m = 1 it is the test function chi; in m = 2 it stands for the
    (1,1)-form chi * beta.
    """

    __test__ = False  # not a pytest class

    center: tuple[complex, ...]
    radius: float
    profile: str = "smooth_bump"
    amplitude: float = 1.0

    def __post_init__(self):
        c = self.center
        c = (complex(c),) if np.isscalar(c) else tuple(complex(x) for x in c)
        object.__setattr__(self, "center", c)
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")

    @property
    def num_vars(self) -> int:
        return len(self.center)

    def scaled(self, factor: float) -> "TestForm":
        return TestForm(self.center, self.radius, self.profile, self.amplitude * factor)

    def _t(self, pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) / self.radius

    def __call__(self, z):
        pts, shape = as_points(z, self.num_vars)
        f, _, _ = _profile_derivs(self.profile, self._t(pts))
        vals = (self.amplitude * f).reshape(shape)
        return float(vals) if vals.ndim == 0 else vals

    def laplacian(self, z):
        """Euclidean Laplacian of chi on R^{2m}, from the analytic radial derivatives."""
        pts, shape = as_points(z, self.num_vars)
        _, fp_t, fpp = _profile_derivs(self.profile, self._t(pts))
        dim = 2 * self.num_vars
        vals = self.amplitude * (fpp + (dim - 1) * fp_t) / self.radius**2
        return vals.reshape(shape)

    def support_measure(self) -> float:
        r = self.radius
        return math.pi * r * r if self.num_vars == 1 else math.pi**2 * r**4 / 2

    def quadrature(self, divisions: int | None = None) -> Quadrature:
        """Nodes and weights covering the support of phi.

        m = 1: jittered cell-centred Cartesian grid with spacing radius/divisions
        (default 128).  m = 2: product of Gauss-Legendre in the radius (3k nodes)
        and Hopf coordinates on S^3 (3k/4 x 3k/2 x 3k/2), k = divisions (default 16).
        """
        m = self.num_vars
        k = divisions or (128 if m == 1 else 16)
        if m == 1:
            h = self.radius / k
            c = self.center[0]
            xs = c.real - self.radius + (np.arange(2 * k) + _JITTER[0]) * h
            ys = c.imag - self.radius + (np.arange(2 * k) + _JITTER[1]) * h
            pts = (xs[:, None] + 1j * ys[None, :]).ravel()
            pts = pts[np.abs(pts - c) < self.radius]
            return Quadrature(pts[:, None], np.full(len(pts), h * h))
        nr, nu, nt = 3 * k, max(3 * k // 4, 2), max(3 * k // 2, 4)
        x, w = np.polynomial.legendre.leggauss(nr)
        rho = 0.5 * (x + 1)
        wr = 0.5 * w * rho**3 * self.radius**4
        sphere = _sphere3_grid(nu, nt, phase=(_JITTER[2] - 0.5, _JITTER[3] - 0.5))
        pts = (self.radius * rho[:, None, None] * sphere.nodes[None]).reshape(-1, 2) + np.asarray(self.center)
        wts = (wr[:, None] * sphere.weights[None] * 2 * math.pi**2).reshape(-1)
        return Quadrature(pts, wts)

    def ddc_density(self, pts: np.ndarray) -> np.ndarray:
        """Density of dd^c phi against Lebesgue measure: Laplacian / 2pi."""
        return self.laplacian(pts) / (2 * math.pi)

    @cached_property
    def c_phi(self) -> float:
        pts = self.quadrature().nodes
        if self.amplitude == 0:
            return 0.0
        return float(np.max(np.abs(self.ddc_density(pts)))) * self.support_measure()


def make_test_form(center, radius: float, profile: str = "smooth_bump", amplitude: float = 1.0) -> TestForm:
    return TestForm(center, radius, profile, amplitude)


def c_phi_norm(phi: TestForm) -> float:
    """Sup of |dd^c phi| coefficients times the support volume."""
    return phi.c_phi


def stencil_laplacian(phi: TestForm, pts: np.ndarray, h: float) -> np.ndarray:
    """Second-difference Laplacian of phi ((2m+1)-point stencil in R^{2m})."""
    m = phi.num_vars
    center = np.asarray(phi(pts), dtype=float).reshape(-1)
    acc = -2 * (2 * m) * center
    for j in range(2 * m):
        step = np.zeros(m, dtype=complex)
        step[j // 2] = h if j % 2 == 0 else 1j * h
        acc = acc + np.asarray(phi(pts + step)).reshape(-1) + np.asarray(phi(pts - step)).reshape(-1)
    return acc / (h * h)


def pair_with_ddc(u: Callable[[np.ndarray], np.ndarray], phi: TestForm, divisions: int | None = None,
                  laplacian: str = "analytic") -> float:
    """Quadrature of integral u * dd^c phi over the support grid of phi."""
    pts, wts = phi.quadrature(divisions)
    if laplacian == "analytic":
        dens = phi.ddc_density(pts)
    elif laplacian == "stencil":
        h = phi.radius / (divisions or (128 if phi.num_vars == 1 else 16))
        dens = stencil_laplacian(phi, pts, h) / (2 * math.pi)
    else:
        raise ValueError(f"unknown laplacian mode {laplacian!r}")
    vals = np.asarray(u(pts), dtype=float).reshape(-1)
    return float(np.dot(vals * dens, wts))


def equilibrium_pairing(V: ExtremalFunction, phi: TestForm, divisions: int | None = None,
                        laplacian: str = "analytic", check: bool = True, tol: float = 1e-4) -> float:
    """<dd^c V, phi> = integral of V * dd^c phi, by grid quadrature.

    With ``check`` the value is recomputed on a grid twice as coarse and a
    QuadratureWarning is emitted when the two differ by more than ``tol``.
    """
    if V.num_vars != phi.num_vars:
        raise DimensionMismatch("extremal function and test form live in different dimensions")
    k = divisions or (128 if phi.num_vars == 1 else 16)
    val = pair_with_ddc(V.evaluator, phi, k, laplacian)
    if check and k >= 8:
        coarse = pair_with_ddc(V.evaluator, phi, k // 2, laplacian)
        if abs(coarse - val) > tol:
            warnings.warn(f"equilibrium pairing moved by {abs(coarse - val):.2e} under grid refinement",
                          QuadratureWarning, stacklevel=2)
    return val


def circle_average(phi: TestForm, points: int = 4096) -> float:
    """Mean of phi over the unit circle (the disk's equilibrium measure)."""
    z = np.exp(2j * np.pi * (np.arange(points) + 0.5) / points)
    return float(np.mean(phi(z)))
