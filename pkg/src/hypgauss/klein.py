"""Klein-model projection and Gauss-map (support function) geometry.

The Klein model sends X = (1, Y)/sqrt(1 - |Y|^2) to Y in the Euclidean unit
ball; hyperbolic convexity and Euclidean convexity coincide under it.  A
projected convex body is described by its Euclidean support function s on
S^n, with boundary point Y(z) = s(z) z + grad s(z) and radii tensor
r_ij = hess_ij s + s delta_ij (orthonormal frame).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConvexityLossError, OutOfModelError
from .hypgeom import ball_volume_profile, geometry
from .spheregrid import as_matrix

PD_TOL = 1e-10
FD_H = 1e-4  # difference step for the contact-point Newton iteration


@dataclass
class SupportSurface:
    grid: object
    s: np.ndarray
    grad_s: np.ndarray
    hess_s: np.ndarray
    r2: np.ndarray
    contact: np.ndarray = None  # radial directions of the support points, if known

    @property
    def n(self):
        return self.grid.dim

    def points(self):
        """Euclidean boundary points s z + grad s, shape ``(*shape, n+1)``."""
        z = self.grid.points()
        fr = self.grid.frame()
        return self.s[..., None] * z + np.einsum("i...,i...k->...k", self.grad_s, fr)


def support_surface(grid, s):
    """Wrap a support function, caching its derivatives.

    Raises OutOfModelError unless 0 < s < 1 and s^2 + |grad s|^2 < 1.
    """
    s = np.asarray(s, dtype=float)
    grad, hess = grid.derivatives(s)
    r2 = s ** 2 + np.sum(grad ** 2, axis=0)
    if not np.all(np.isfinite(r2)):
        raise OutOfModelError("non-finite support function data")
    if s.min() <= 0.0 or s.max() >= 1.0:
        raise OutOfModelError("support function must lie in (0, 1)")
    if r2.max() >= 1.0:
        node = int(np.argmax(r2))
        raise OutOfModelError(f"boundary point leaves the unit ball at node {node}")
    return SupportSurface(grid, s, grad, hess, r2)


# -- projection from a radial graph -----------------------------------------

def _tangent_basis(w):
    """Two unit vectors orthogonal to each unit vector in w (shape (K, 3))."""
    helper = np.where(np.abs(w[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    t1 = np.cross(w, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(w, t1)
    return t1, t2


def project(surface, newton_tol=1e-11, max_newton=30):
    """Support function of the Klein image of a convex radial graph.

    Every grid direction z is matched with the surface point maximizing
    <Y, z>: the node with the closest Euclidean normal seeds a Newton
    iteration on the spectral interpolant of the radial function.
    """
    grid = surface.grid
    geom = geometry(surface)
    if geom.kappa.min() <= 0.0:
        raise ConvexityLossError("projection refused: surface is not convex",
                                 node=int(np.argmin(geom.kappa.min(axis=0))),
                                 eigenvalue=float(geom.kappa.min()))
    n = grid.dim
    c = grid.analysis(surface.rho)
    w_nodes = grid.points().reshape(-1, n + 1)
    R = np.tanh(surface.rho)
    gradR = (1.0 - R ** 2) * geom.grad
    normal = R[..., None] * grid.points() - np.einsum(
        "i...,i...k->...k", gradR, grid.frame())
    normal = normal.reshape(-1, n + 1)
    normal /= np.linalg.norm(normal, axis=1, keepdims=True)
    z = grid.points().reshape(-1, n + 1)
    _, idx = cKDTree(normal).query(z)
    w = w_nodes[idx].copy()

    def support_at(wpts, zz):
        r = np.tanh(grid.evaluate(c, wpts))
        return r * np.sum(wpts * zz, axis=-1)

    h = FD_H
    active = np.arange(z.shape[0])
    for _ in range(max_newton):
        if active.size == 0:
            break
        wa, za = w[active], z[active]
        if n == 1:
            t = np.arctan2(wa[:, 1], wa[:, 0])
            ts = t[:, None] + h * np.array([-1.0, 0.0, 1.0])
            pts = np.stack([np.cos(ts), np.sin(ts)], axis=-1)
            f = support_at(pts, za[:, None, :])
            g1 = (f[:, 2] - f[:, 0]) / (2 * h)
            H11 = (f[:, 2] - 2 * f[:, 1] + f[:, 0]) / h ** 2
            step = -g1 / np.where(H11 < 0, H11, -1.0)
            step = np.clip(step, -0.2, 0.2)
            t_new = t + step
            w[active] = np.stack([np.cos(t_new), np.sin(t_new)], axis=-1)
            size = np.abs(step)
        else:
            t1, t2 = _tangent_basis(wa)
            offs = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1],
                             [1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float) * h
            pts = wa[:, None, :] + offs[None, :, 0, None] * t1[:, None, :] \
                + offs[None, :, 1, None] * t2[:, None, :]
            pts /= np.linalg.norm(pts, axis=-1, keepdims=True)
            f = support_at(pts, za[:, None, :])
            g1 = (f[:, 1] - f[:, 2]) / (2 * h)
            g2 = (f[:, 3] - f[:, 4]) / (2 * h)
            H11 = (f[:, 1] - 2 * f[:, 0] + f[:, 2]) / h ** 2
            H22 = (f[:, 3] - 2 * f[:, 0] + f[:, 4]) / h ** 2
            H12 = (f[:, 5] - f[:, 6] - f[:, 7] + f[:, 8]) / (4 * h * h)
            det = H11 * H22 - H12 ** 2
            ok = (H11 < 0) & (det > 0)
            a1 = np.where(ok, -(H22 * g1 - H12 * g2) / np.where(ok, det, 1.0), g1)
            a2 = np.where(ok, -(H11 * g2 - H12 * g1) / np.where(ok, det, 1.0), g2)
            size = np.hypot(a1, a2)
            shrink = np.minimum(1.0, 0.2 / np.maximum(size, 1e-300))
            a1, a2 = a1 * shrink, a2 * shrink
            wn = wa + a1[:, None] * t1 + a2[:, None] * t2
            w[active] = wn / np.linalg.norm(wn, axis=1, keepdims=True)
        active = active[size > newton_tol]

    s = support_at(w, z).reshape(grid.shape)
    ss = support_surface(grid, s)
    ss.contact = w.reshape(grid.shape + (n + 1,))
    return ss


# -- Gauss-map geometry -------------------------------------------------------

@dataclass
class RadiiTensor:
    r: np.ndarray        # frame layout, like hess_s
    eigen: np.ndarray    # (n, *shape), ascending

    @property
    def det(self):
        return np.prod(self.eigen, axis=0)


def _sym_eigen(t):
    if t.shape[0] == 1:
        return t.copy()
    a, b, d = t
    mid = 0.5 * (a + d)
    disc = np.hypot(0.5 * (a - d), b)
    return np.stack([mid - disc, mid + disc])


def radii_tensor(ss):
    r = ss.hess_s.copy()
    if ss.n == 1:
        r[0] += ss.s
    else:
        r[0] += ss.s
        r[2] += ss.s
    return RadiiTensor(r, _sym_eigen(r))


def gauss_KY(rt):
    """Euclidean Gauss curvature 1/det r of the projected body."""
    lo = rt.eigen[0]
    if lo.min() <= PD_TOL:
        node = int(np.argmin(lo))
        raise ConvexityLossError(
            f"radii tensor not positive definite at node {node}",
            node=node, eigenvalue=float(lo.ravel()[node]))
    if rt.r.shape[0] == 1:
        det = rt.r[0]
    else:
        det = rt.r[0] * rt.r[2] - rt.r[1] ** 2
    return 1.0 / det


def _check_model(ss):
    if ss.r2.max() >= 1.0:
        raise OutOfModelError("s^2 + |grad s|^2 reached 1")


def gauss_KX(ss, KY=None):
    """Hyperbolic Gauss curvature from the Klein data."""
    _check_model(ss)
    if KY is None:
        KY = gauss_KY(radii_tensor(ss))
    return ((1.0 - ss.r2) / (1.0 - ss.s ** 2)) ** ((ss.n + 2) / 2.0) * KY


@dataclass
class KleinCoefficients:
    A: np.ndarray
    B: np.ndarray


def coefficients(ss, alpha):
    _check_model(ss)
    n = ss.n
    a = 1.0 - ss.r2
    b = 1.0 - ss.s ** 2
    A = np.sqrt(a * b)
    p = 0.5 * (n + 2) * alpha
    B = a ** (p + 0.5) * b ** (0.5 - p)
    return KleinCoefficients(A, B)


def inverse_weingarten(ss):
    """Matrix of the inverse hyperbolic Weingarten map and its eigenvalues 1/kappa_i.

    Returns ``(W_inv, eig)`` with ``W_inv`` of shape ``(*shape, n, n)``.
    """
    _check_model(ss)
    n = ss.n
    rt = radii_tensor(ss)
    a = 1.0 - ss.r2
    gv = np.moveaxis(ss.grad_s, 0, -1)
    P = np.eye(n) + gv[..., :, None] * gv[..., None, :] / a[..., None, None]
    scale = np.sqrt((1.0 - ss.s ** 2) / a)[..., None, None]
    W_inv = as_matrix(rt.r) @ P * scale
    if n == 1:
        eig = W_inv[..., 0, 0][None]
    else:
        # r P is similar to the symmetric P^(1/2) r P^(1/2)
        v2 = np.sum(gv ** 2, axis=-1)
        safe = np.where(v2 > 0.0, v2, 1.0)
        vv = gv[..., :, None] * gv[..., None, :] / safe[..., None, None]
        root = np.eye(2) + (np.sqrt(1.0 + v2 / a) - 1.0)[..., None, None] * vv
        M = root @ as_matrix(rt.r) @ root * scale
        eig = _sym_eigen(np.stack([M[..., 0, 0], M[..., 0, 1], M[..., 1, 1]]))
    return W_inv, eig


@dataclass
class CertificateReport:
    min_eigenvalue: float
    min_det: float
    passed: bool
    node: int

    def location(self, grid):
        """Coordinates of the weakest node."""
        return tuple(float(c.ravel()[self.node]) for c in grid.coords())


def convexity_certificate(ss):
    rt = radii_tensor(ss)
    lo = rt.eigen[0]
    node = int(np.argmin(lo))
    return CertificateReport(
        min_eigenvalue=float(lo.ravel()[node]),
        min_det=float(rt.det.min()),
        passed=bool(lo.min() > PD_TOL),
        node=node,
    )


@dataclass
class KleinGeometry:
    """Hyperbolic curvature data recovered from a support function."""

    kappa: np.ndarray
    sigma: np.ndarray
    dmu: np.ndarray
    KY: np.ndarray
    KX: np.ndarray

    @property
    def K(self):
        return self.sigma[-1]

    @property
    def H(self):
        return self.sigma[1]

    @property
    def n(self):
        return self.kappa.shape[0]


def klein_geometry(ss):
    """Principal curvatures, sigma_k and area density of the hyperbolic surface."""
    rt = radii_tensor(ss)
    KY = gauss_KY(rt)
    KX = gauss_KX(ss, KY)
    _, eig = inverse_weingarten(ss)
    kappa = 1.0 / eig[::-1]
    one = np.ones_like(ss.s)
    if ss.n == 1:
        sigma = np.stack([one, kappa[0]])
    else:
        sigma = np.stack([one, kappa[0] + kappa[1], kappa[0] * kappa[1]])
    dmu = np.sqrt(1.0 - ss.s ** 2) / (1.0 - ss.r2) ** ((ss.n + 1) / 2.0) / KY
    return KleinGeometry(kappa, sigma, dmu, KY, KX)


def enclosed_volume(ss):
    """Hyperbolic volume of the body by the divergence theorem in the Klein ball."""
    n = ss.n
    rt = radii_tensor(ss)
    det = rt.r[0] if n == 1 else rt.r[0] * rt.r[2] - rt.r[1] ** 2
    r = np.sqrt(ss.r2)
    flux = ball_volume_profile(np.arctanh(r), n) / r ** (n + 1)
    return float(ss.grid.integrate(flux * ss.s * det))


def hyperbolic_radius(ss):
    """Hyperbolic distance from the origin of each boundary point."""
    return np.arctanh(np.sqrt(ss.r2))
