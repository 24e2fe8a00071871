"""Radial-graph hypersurfaces in H^{n+1}.

A star-shaped hypersurface about an interior point is stored as its radial
function rho on S^n: the point in direction w sits at hyperbolic distance
rho(w) from the center.  The center and the identification of S^n with the
unit tangent sphere there are carried by a Lorentz matrix ``frame`` that maps
local hyperboloid coordinates (cosh r, sinh r w) to global ones.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateSurfaceError, RecenterError
from .spheregrid import SphereGrid, as_matrix

DEGENERATE_EPS = 1e-14


@dataclass
class RadialSurface:
    grid: SphereGrid
    rho: np.ndarray
    frame: np.ndarray = None

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        if self.frame is None:
            self.frame = np.eye(self.grid.dim + 2)
        if self.rho.shape != self.grid.shape:
            raise DegenerateSurfaceError(
                f"rho shape {self.rho.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.rho)) or self.rho.min() <= 0.0:
            raise DegenerateSurfaceError("radial function must be finite and positive")

    @property
    def center(self):
        """Global hyperboloid coordinates of the parametrization origin."""
        return self.frame[:, 0].copy()

    def local_points(self):
        """Surface nodes in local hyperboloid coordinates, shape ``(*shape, n+2)``."""
        w = self.grid.points()
        r = self.rho[..., None]
        return np.concatenate([np.cosh(r), np.sinh(r) * w], axis=-1)

    def with_rho(self, rho):
        return RadialSurface(self.grid, rho, self.frame)


def ball(grid, radius):
    """Geodesic sphere of the given radius about the origin."""
    return RadialSurface(grid, np.full(grid.shape, float(radius)))


@dataclass
class SurfaceGeometry:
    """Pointwise geometry of a radial graph.

    Tensors are stored as ``(*shape, n, n)`` matrices in the orthonormal frame
    of the round metric.  ``nu_radial`` and ``nu_sphere`` are the components of
    the unit normal along d/drho and along the frame of S^n (the latter as
    coefficients of the round-orthonormal vectors, so its hyperbolic length
    is sinh(rho) times their norm).  ``sigma[k]`` is the k-th elementary
    symmetric function of the principal curvatures, with ``sigma[0] = 1``.
    """

    rho: np.ndarray
    grad: np.ndarray
    g: np.ndarray
    h: np.ndarray
    nu_radial: np.ndarray
    nu_sphere: np.ndarray
    u: np.ndarray
    dmu: np.ndarray
    kappa: np.ndarray
    sigma: np.ndarray

    @property
    def K(self):
        return self.sigma[-1]

    @property
    def H(self):
        return self.sigma[1]

    @property
    def n(self):
        return self.kappa.shape[0]


def _derivs(surface):
    grad, hess = surface.grid.derivatives(surface.rho)
    if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
        raise DegenerateSurfaceError("non-finite derivatives of rho")
    return grad, as_matrix(hess)


def _curvature_form(rho, grad, H):
    """-sinh(rho) rho_ij + 2 cosh(rho) rho_i rho_j + sinh^2 cosh sigma_ij, and q."""
    n = grad.shape[0]
    sh, ch = np.sinh(rho), np.cosh(rho)
    gv = np.moveaxis(grad, 0, -1)
    outer = gv[..., :, None] * gv[..., None, :]
    eye = np.eye(n)
    q = sh ** 2 + np.sum(gv ** 2, axis=-1)
    if q.min() < DEGENERATE_EPS:
        raise DegenerateSurfaceError("sinh^2(rho) + |grad rho|^2 vanishes at a node")
    form = (-sh[..., None, None] * H + 2.0 * ch[..., None, None] * outer
            + (sh ** 2 * ch)[..., None, None] * eye)
    return form, q, gv, outer


def geometry(surface):
    """Fundamental forms, normal, support function and curvatures of a radial graph."""
    rho = surface.rho
    n = surface.grid.dim
    grad, H = _derivs(surface)
    form, q, gv, outer = _curvature_form(rho, grad, H)
    sh = np.sinh(rho)
    sq = np.sqrt(q)
    g = outer + (sh ** 2)[..., None, None] * np.eye(n)
    h = form / sq[..., None, None]

    if n == 1:
        kappa = (h[..., 0, 0] / g[..., 0, 0])[None]
        sigma = np.stack([np.ones_like(rho), kappa[0]])
    else:
        # eigenvalues of g^{-1}h via the symmetric S h S with S = g^{-1/2}:
        # g = sh^2 I + v v^T has the closed-form inverse root below
        v2 = np.sum(gv ** 2, axis=-1)
        safe = np.where(v2 > 0.0, v2, 1.0)
        vv = outer / safe[..., None, None]
        S = (np.eye(2) - vv) / sh[..., None, None] + vv / sq[..., None, None]
        M = S @ h @ S
        a, b, d = M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]
        mid = 0.5 * (a + d)
        disc = np.hypot(0.5 * (a - d), b)
        kappa = np.stack([mid - disc, mid + disc])
        sigma = np.stack([np.ones_like(rho), kappa[0] + kappa[1], kappa[0] * kappa[1]])

    if not np.all(np.isfinite(kappa)):
        raise DegenerateSurfaceError("non-finite principal curvatures")
    scale = 1.0 / np.sqrt(1.0 + np.sum(gv ** 2, axis=-1) / sh ** 2)
    return SurfaceGeometry(
        rho=rho,
        grad=grad,
        g=g,
        h=h,
        nu_radial=scale,
        nu_sphere=-grad / sh ** 2 * scale,
        u=sh ** 2 / sq,
        dmu=sh ** (n - 1) * sq,
        kappa=kappa,
        sigma=sigma,
    )


def gauss_curvature(surface):
    """Gauss curvature straight from the determinant ratio in rho and its derivatives."""
    n = surface.grid.dim
    grad, H = _derivs(surface)
    form, q, _, _ = _curvature_form(surface.rho, grad, H)
    det = np.linalg.det(form) if n == 2 else form[..., 0, 0]
    return det / (q ** ((n + 2) / 2.0) * np.sinh(surface.rho) ** (2 * n - 2))


def sinh_minus_x(x):
    """sinh(x) - x without cancellation near 0."""
    x = np.asarray(x, dtype=float)
    x2 = x * x
    # Taylor tail x^3/3! + ... + x^19/19!, exact to rounding for |x| < 0.5
    series = np.zeros_like(x)
    for k in range(19, 1, -2):
        series = series * x2 + 1.0 / math.factorial(k)
    series = series * x2 * x
    return np.where(np.abs(x) < 0.5, series, np.sinh(x) - x)


def ball_volume_profile(rho, n):
    """int_0^rho sinh^n r dr."""
    rho = np.asarray(rho, dtype=float)
    if n == 1:
        return 2.0 * np.sinh(0.5 * rho) ** 2
    return 0.25 * sinh_minus_x(2.0 * rho)


def enclosed_volume(surface):
    return float(surface.grid.integrate(ball_volume_profile(surface.rho, surface.grid.dim)))


@dataclass
class Functionals:
    """Global integrals of a convex body.

    ``quermass[k-1]`` is A_k for k = 1..n (A_0 is ``area``), and
    ``curv_int[k]`` is the total curvature measure Phi_k = int sigma_{n-k} dmu.
    """

    volume: float
    area: float
    quermass: np.ndarray
    curv_int: np.ndarray
    kbar: float

    def A(self, k):
        """A_k for k = -1..n."""
        if k == -1:
            return self.volume
        if k == 0:
            return self.area
        return float(self.quermass[k - 1])

    def as_list(self):
        """[A_0, ..., A_n]."""
        return [self.area] + [float(a) for a in self.quermass]

    def to_dict(self):
        d = {"volume": self.volume, "area": self.area}
        for k, a in enumerate(self.quermass, start=1):
            d[f"A{k}"] = float(a)
        for k, p in enumerate(self.curv_int):
            d[f"Phi{k}"] = float(p)
        d["kbar"] = self.kbar
        return d

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        n = sum(1 for k in d if k.startswith("A"))
        return cls(
            volume=d["volume"],
            area=d["area"],
            quermass=np.array([d[f"A{k}"] for k in range(1, n + 1)]),
            curv_int=np.array([d[f"Phi{k}"] for k in range(n + 1)]),
            kbar=d["kbar"],
        )


def quermassintegrals(geom, volume, grid):
    """A_k by the smooth curvature-integral recursion, plus Phi_k and K-bar."""
    n = geom.n
    totals = grid.integrate(geom.sigma * geom.dmu)  # int sigma_k dmu, k = 0..n
    A = {-1: volume, 0: float(totals[0])}
    for k in range(1, n + 1):
        if k == 1:
            A[1] = totals[1] - n * volume
        else:
            A[k] = totals[k] - (n - k + 1) / (k - 1) * A[k - 2]
    if n >= 2:
        kbar = (A[n] + A[n - 2] / (n - 1)) / A[0]
    else:
        kbar = totals[n] / A[0]
    return Functionals(
        volume=float(volume),
        area=float(A[0]),
        quermass=np.array([A[k] for k in range(1, n + 1)], dtype=float),
        curv_int=np.array(totals[::-1], dtype=float),
        kbar=float(kbar),
    )


def functionals(surface, geom=None):
    geom = geometry(surface) if geom is None else geom
    return quermassintegrals(geom, enclosed_volume(surface), surface.grid)


# -- isometries --------------------------------------------------------------

def boost(direction, distance):
    """Lorentz translation taking the origin to distance ``distance`` along ``direction``."""
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    m = e.size + 1
    ch, sh = np.cosh(distance), np.sinh(distance)
    B = np.eye(m)
    B[0, 0] = ch
    B[0, 1:] = sh * e
    B[1:, 0] = sh * e
    B[1:, 1:] += (ch - 1.0) * np.outer(e, e)
    return B


def minkowski_inner(x, y):
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def distance(x, y):
    return np.arccosh(np.maximum(-minkowski_inner(x, y), 1.0))


def exp_origin(v):
    """Point of H^{n+1} reached from the origin by the tangent vector v."""
    v = np.asarray(v, dtype=float)
    r = np.linalg.norm(v)
    if r == 0.0:
        out = np.zeros(v.size + 1)
        out[0] = 1.0
        return out
    return np.concatenate([[np.cosh(r)], np.sinh(r) * v / r])


def _polar(P):
    """Local polar coordinates (rho, direction) of hyperboloid points."""
    spatial = P[..., 1:]
    norm = np.linalg.norm(spatial, axis=-1)
    rho = np.arcsinh(norm)
    w = spatial / np.where(norm > 0, norm, 1.0)[..., None]
    return rho, w


def recenter(surface, direction, dist, tol=1e-13, max_iter=100):
    """Re-express the body as a radial graph about a translated center.

    The new center lies at hyperbolic distance ``dist`` from the current one
    along ``direction`` (a vector in R^{n+1}).  For each grid direction the
    ray from the new center is intersected with the surface by a bracketed
    secant iteration on the spectral interpolant of rho.
    """
    grid = surface.grid
    if dist == 0.0:
        return RadialSurface(grid, surface.rho.copy(), surface.frame.copy())
    B = boost(direction, dist)
    c = grid.analysis(surface.rho)
    w_new = grid.points()
    rho_max = float(surface.rho.max())

    def F(t):
        tt = t[..., None]
        local = np.concatenate([np.cosh(tt), np.sinh(tt) * w_new], axis=-1)
        P = local @ B.T
        r, w = _polar(P)
        return r - grid.evaluate(c, w)

    a = np.zeros(grid.shape)
    b = np.full(grid.shape, rho_max + dist + 1.0)
    fa, fb = F(a), F(b)
    if np.any(fa >= 0.0):
        raise RecenterError("new center is not inside the body")
    if np.any(fb <= 0.0):
        raise RecenterError("failed to bracket the surface along some ray")
    side = np.zeros(grid.shape)
    t = a
    for _ in range(max_iter):
        t = b - fb * (b - a) / (fb - fa)
        ft = F(t)
        if np.max(np.abs(ft)) < tol:
            break
        neg = ft < 0.0
        # Illinois modification keeps the stale endpoint from stalling
        a = np.where(neg, t, a)
        fa = np.where(neg, ft, np.where(side == 1, 0.5 * fa, fa))
        b = np.where(neg, b, t)
        fb = np.where(neg, np.where(side == -1, 0.5 * fb, fb), ft)
        side = np.where(neg, -1, 1)
    else:
        raise RecenterError("ray intersection did not converge")

    out = RadialSurface(grid, t, surface.frame @ B)
    if geometry(out).u.min() <= 0.0:
        raise RecenterError("recentered surface is not a radial graph")
    return out


def recenter_to(surface, point):
    """Recenter so that the local hyperboloid point ``point`` becomes the origin."""
    rho, w = _polar(np.asarray(point, dtype=float))
    if rho == 0.0:
        return recenter(surface, np.eye(surface.grid.dim + 1)[0], 0.0)
    return recenter(surface, w, float(rho))


@dataclass
class RadiusBounds:
    inner: float
    outer: float
    inner_center: np.ndarray = field(repr=False)
    outer_center: np.ndarray = field(repr=False)
    fallback: bool = False


def _center_search(objective, dim, scale):
    res = minimize(objective, np.zeros(dim + 1), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000,
                            "initial_simplex": _simplex(dim + 1, scale)})
    return res


def _simplex(m, scale):
    s = np.zeros((m + 1, m))
    s[1:] = scale * np.eye(m)
    return s


def inner_outer_radius(surface):
    """Inradius and circumradius, searched over translated centers.

    Candidate centers are parametrized by a tangent vector at the current
    origin.  The circumradius minimizes the largest node distance and the
    inradius maximizes the smallest one.
    """
    P = surface.local_points().reshape(-1, surface.grid.dim + 2)
    dim = surface.grid.dim
    scale = 0.1 * float(np.mean(surface.rho))

    def dists(v):
        return distance(exp_origin(v), P)

    outer = _center_search(lambda v: dists(v).max(), dim, scale)
    inner = _center_search(lambda v: -dists(v).min(), dim, scale)
    base_out, base_in = float(surface.rho.max()), float(surface.rho.min())
    fallback = not (outer.success and inner.success)
    r_out = min(float(outer.fun), base_out)
    r_in = max(float(-inner.fun), base_in)
    return RadiusBounds(
        inner=r_in if not fallback else base_in,
        outer=r_out if not fallback else base_out,
        inner_center=exp_origin(inner.x),
        outer_center=exp_origin(outer.x),
        fallback=fallback,
    )
