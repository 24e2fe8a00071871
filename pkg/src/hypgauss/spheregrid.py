"""Pseudo-spectral calculus on the round sphere S^n for n = 1, 2.

S^1 uses a uniform periodic grid and FFT differentiation.  S^2 uses a
Gauss-Legendre (in cos theta) x uniform-azimuth product grid with a
spherical-harmonic transform; derivatives are exact for band-limited
fields, so the poles need no special stencil.

Field layout
------------
A scalar field is an ndarray of shape ``grid.shape``.  Vector fields carry a
leading axis of length n and symmetric 2-tensors a leading axis of length
1 (n=1) or 3 (n=2, ordered 11, 12, 22).  All tensor components are taken in
the orthonormal frame (d/dtheta, d/(sin theta dphi)), in which the round
metric is the identity.  ``metric`` and ``christoffel`` expose the coordinate
versions for reference.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import sph_legendre_p_all

from .errors import GridConfigError

MIN_NODES = 8

SPHERE_AREA = {1: 2.0 * np.pi, 2: 4.0 * np.pi}


class SphereGrid:
    """Quadrature grid on S^n with spectral differentiation.

    Use :func:`make_grid` rather than calling this directly.
    """

    def __init__(self, dim, resolution):
        if dim not in (1, 2):
            raise GridConfigError(f"sphere dimension must be 1 or 2, got {dim}")
        resolution = tuple(int(r) for r in np.atleast_1d(resolution))
        if len(resolution) != dim:
            raise GridConfigError(
                f"S^{dim} needs {dim} node count(s), got {resolution}")
        if min(resolution) < MIN_NODES:
            raise GridConfigError(
                f"resolution {resolution} below minimum of {MIN_NODES} per dimension")

        self.dim = dim
        self.shape = resolution
        self.size = int(np.prod(resolution))

        if dim == 1:
            (n,) = resolution
            self.theta = 2.0 * np.pi * np.arange(n) / n
            self.phi = None
            self.weights = np.full(n, 2.0 * np.pi / n)
            self.lmax = (n - 1) // 2
        else:
            nlat, nlon = resolution
            x, w = leggauss(nlat)
            x, w = x[::-1], w[::-1]  # north to south
            self.theta = np.arccos(x)
            self.phi = 2.0 * np.pi * np.arange(nlon) / nlon
            self._gl_weights = w
            self.weights = np.outer(w, np.full(nlon, 2.0 * np.pi / nlon))
            self.lmax = min(nlat - 1, (nlon - 1) // 2)
            self._sin = np.sin(self.theta)[:, None]
            self._cos = np.cos(self.theta)[:, None]
            L = self.lmax
            tab = sph_legendre_p_all(L, L, self.theta, diff_n=2)
            # tab[k, l, m, i]; keep m >= 0 and reorder to [i, l, m]
            tab = np.moveaxis(tab[:, :, : L + 1, :], -1, 1)
            self._P, self._dP, self._d2P = tab[0], tab[1], tab[2]
            # per-order matrices for batched transforms: [m, i, l] and [m, l, i]
            self._Pm = np.ascontiguousarray(np.transpose(tab[0], (2, 0, 1)))
            self._Pall = np.ascontiguousarray(
                np.transpose(tab, (3, 0, 1, 2)).reshape(L + 1, 3 * nlat, L + 1))
            self._PwT = np.ascontiguousarray(
                np.transpose(tab[0] * w[:, None, None], (2, 1, 0)))

    def __repr__(self):
        return f"SphereGrid(dim={self.dim}, shape={self.shape})"

    # -- geometry of the grid ------------------------------------------------

    def coords(self):
        """Node coordinates broadcast to the grid shape: (theta,) or (theta, phi)."""
        if self.dim == 1:
            return (self.theta.copy(),)
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        return th, ph

    def points(self):
        """Unit vectors in R^{n+1} for every node, shape ``(*shape, n+1)``."""
        if self.dim == 1:
            return np.stack([np.cos(self.theta), np.sin(self.theta)], axis=-1)
        th, ph = self.coords()
        return np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph),
                         np.cos(th)], axis=-1)

    def frame(self):
        """Orthonormal tangent frame as R^{n+1} vectors, shape ``(n, *shape, n+1)``."""
        if self.dim == 1:
            t = self.theta
            return np.stack([-np.sin(t), np.cos(t)], axis=-1)[None]
        th, ph = self.coords()
        e1 = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph),
                       -np.sin(th)], axis=-1)
        e2 = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=-1)
        return np.stack([e1, e2])

    @property
    def metric(self):
        """Coordinate components of the round metric, shape ``(n, n, *shape)``."""
        if self.dim == 1:
            return np.ones((1, 1) + self.shape)
        th, _ = self.coords()
        g = np.zeros((2, 2) + self.shape)
        g[0, 0] = 1.0
        g[1, 1] = np.sin(th) ** 2
        return g

    @property
    def christoffel(self):
        """Coordinate Christoffel symbols Gamma^k_ij, shape ``(n, n, n, *shape)``."""
        if self.dim == 1:
            return np.zeros((1, 1, 1) + self.shape)
        th, _ = self.coords()
        G = np.zeros((2, 2, 2) + self.shape)
        G[0, 1, 1] = -np.sin(th) * np.cos(th)
        G[1, 0, 1] = G[1, 1, 0] = np.cos(th) / np.sin(th)
        return G

    # -- transforms ----------------------------------------------------------

    def analysis(self, f):
        """Spectral coefficients of a grid field.

        For S^1 these are complex Fourier coefficients c_k, k = 0..lmax, with
        f = sum_k c_k e^{ik theta} (real part doubled for k > 0).  For S^2
        they form a complex ``(lmax+1, lmax+1)`` array c[l, m] (m >= 0) of
        the orthonormal harmonics Y_lm = P_lm(cos theta) e^{i m phi}.
        """
        f = np.asarray(f, dtype=float)
        if self.dim == 1:
            n = self.shape[0]
            return np.fft.rfft(f)[: self.lmax + 1] / n
        L = self.lmax
        F = np.fft.rfft(f, axis=1)[:, : L + 1] * (2.0 * np.pi / self.shape[1])
        return _bmat(self._PwT, F.T).T

    def _to_grid(self, ring_spectrum):
        n = self.shape[-1]
        pad = np.zeros(ring_spectrum.shape[:-1] + (n // 2 + 1,), dtype=complex)
        pad[..., : ring_spectrum.shape[-1]] = ring_spectrum
        return np.fft.irfft(pad * n, n=n, axis=-1)

    def synthesis(self, c):
        """Inverse of :meth:`analysis` for band-limited coefficients."""
        if self.dim == 1:
            return self._to_grid(c)
        return self._to_grid(_bmat(self._Pm, c.T).T)

    def truncate(self, f, lcut):
        """Project a field onto harmonics of degree <= lcut."""
        c = self.analysis(f)
        if self.dim == 1:
            c[lcut + 1:] = 0.0
        else:
            c[lcut + 1:, :] = 0.0
        return self.synthesis(c)

    # -- differential operators ---------------------------------------------

    def derivatives(self, f):
        """Gradient and Hessian of ``f`` in the orthonormal frame.

        Returns ``(grad, hess)`` with shapes ``(n, *shape)`` and
        ``(1 or 3, *shape)``.  Only the band-limited part (degree <= lmax) of
        ``f`` is differentiated.
        """
        f = np.asarray(f, dtype=float)
        # constants have no derivatives; removing one keeps quadrature roundoff
        # (amplified by l^2 below) proportional to the variation of f only
        c = self.analysis(f - 0.5 * (f.max() + f.min()))
        if self.dim == 1:
            k = np.arange(c.size)
            d1 = self._to_grid(1j * k * c)
            d2 = self._to_grid(-(k ** 2) * c)
            return d1[None], d2[None]

        m = np.arange(self.lmax + 1)
        nlat = self.shape[0]
        V, dV, d2V = _bmat(self._Pall, c.T).T.reshape(3, nlat, -1)
        f_t = self._to_grid(dV)
        f_p = self._to_grid(1j * m * V)
        f_tt = self._to_grid(d2V)
        f_tp = self._to_grid(1j * m * dV)
        f_pp = self._to_grid(-(m ** 2) * V)
        s, co = self._sin, self._cos
        grad = np.stack([f_t, f_p / s])
        hess = np.stack([
            f_tt,
            (f_tp - co / s * f_p) / s,
            f_pp / s ** 2 + co / s * f_t,
        ])
        return grad, hess

    def gradient(self, f):
        return self.derivatives(f)[0]

    def hessian(self, f):
        return self.derivatives(f)[1]

    def laplacian(self, f):
        """Trace of the Hessian with respect to the round metric."""
        return trace(self.hessian(f))

    # -- quadrature and harmonics -------------------------------------------

    def integrate(self, f):
        """Quadrature of a scalar field (or stack of fields over leading axes)."""
        f = np.asarray(f)
        axes = tuple(range(f.ndim - self.dim, f.ndim))
        return np.sum(f * self.weights, axis=axes)

    def harmonic_coeffs(self, f, lmax):
        """Per-degree L2 amplitudes sqrt(sum_m a_lm^2) in the real orthonormal basis."""
        if lmax < 0 or lmax > self.lmax:
            raise GridConfigError(
                f"l_max={lmax} outside the supported range 0..{self.lmax}")
        c = self.analysis(f)
        if self.dim == 1:
            amp = 2.0 * np.sqrt(np.pi) * np.abs(c)
            amp[0] = np.sqrt(2.0 * np.pi) * abs(c[0].real)
            return amp[: lmax + 1]
        p = np.abs(c) ** 2
        p[:, 1:] *= 2.0
        return np.sqrt(p.sum(axis=1))[: lmax + 1]

    def harmonic(self, l, m=0):
        """Real orthonormal harmonic of degree ``l`` on the grid.

        ``m >= 0`` selects the cosine partner, ``m < 0`` the sine partner.
        For S^1 only the sign of ``m`` matters.
        """
        if l < 0 or l > self.lmax:
            raise GridConfigError(f"degree {l} not representable (lmax={self.lmax})")
        if self.dim == 1:
            t = self.theta
            if l == 0:
                return np.full(self.shape, 1.0 / np.sqrt(2.0 * np.pi))
            trig = np.sin if m < 0 else np.cos
            return trig(l * t) / np.sqrt(np.pi)
        am = abs(m)
        if am > l:
            raise GridConfigError(f"order {m} exceeds degree {l}")
        P = self._P[:, l, am][:, None]
        if am == 0:
            return np.broadcast_to(P, self.shape).copy()
        trig = np.sin if m < 0 else np.cos
        return np.sqrt(2.0) * P * trig(am * self.phi)[None, :]

    def evaluate(self, c, points):
        """Evaluate a spectral expansion at arbitrary unit vectors.

        ``points`` has shape ``(..., n+1)``; the result has shape ``(...)``.
        """
        c = _trim(c)
        points = np.asarray(points, dtype=float)
        out_shape = points.shape[:-1]
        pts = points.reshape(-1, self.dim + 1)
        if self.dim == 1:
            t = np.arctan2(pts[:, 1], pts[:, 0])
            k = np.arange(c.size)
            e = np.exp(1j * np.outer(t, k))
            wk = np.where(k == 0, 1.0, 2.0)
            return (e @ (wk * c)).real.reshape(out_shape)
        r = np.linalg.norm(pts, axis=1)
        x = np.clip(pts[:, 2] / r, -1.0, 1.0)
        y = np.sqrt(np.maximum(0.0, 1.0 - x * x))
        ph = np.arctan2(pts[:, 1], pts[:, 0])
        ring = _legendre_sum(c, x, y)
        m = np.arange(c.shape[1])
        wm = np.where(m == 0, 1.0, 2.0)
        val = np.sum(wm[:, None] * (ring * np.exp(1j * np.outer(m, ph))).real, axis=0)
        return val.reshape(out_shape)

    def field(self, values, name="value"):
        return ScalarField(self, np.asarray(values, dtype=float), name)


def _bmat(M, X):
    """out[m] = M[m] @ X[m] for real M and complex X of shape (m, l)."""
    Xr = np.ascontiguousarray(X.real)[:, :, None]
    Xi = np.ascontiguousarray(X.imag)[:, :, None]
    return (M @ Xr)[..., 0] + 1j * (M @ Xi)[..., 0]


def _legendre_sum(c, x, y, chunk=4096):
    """S[m, k] = sum_l c[l, m] P_lm(x_k) with orthonormal, Condon-Shortley P_lm."""
    L = c.shape[0] - 1
    S = np.empty((L + 1, x.size), dtype=complex)
    block = np.empty((L + 1, min(chunk, x.size)))
    for lo in range(0, x.size, chunk):
        xs, ys = x[lo:lo + chunk], y[lo:lo + chunk]
        k = xs.size
        pmm = np.full(k, 1.0 / np.sqrt(4.0 * np.pi))
        for m in range(L + 1):
            if m > 0:
                pmm = -np.sqrt((2 * m + 1) / (2 * m)) * ys * pmm
            B = block[: L + 1 - m, :k]
            B[0] = pmm
            if m < L:
                B[1] = np.sqrt(2 * m + 3) * xs * pmm
                a_prev = np.sqrt(2 * m + 3)
                for l in range(m + 2, L + 1):
                    a = np.sqrt((4 * l * l - 1) / (l * l - m * m))
                    B[l - m] = a * (xs * B[l - m - 1] - B[l - m - 2] / a_prev)
                    a_prev = a
            S[m, lo:lo + k] = c[m:, m] @ B
    return S


def _trim(c, rel=1e-13):
    """Drop trailing degrees whose coefficients are pure roundoff."""
    mag = np.abs(c).max(axis=tuple(range(1, c.ndim))) if c.ndim > 1 else np.abs(c)
    keep = np.nonzero(mag > rel * max(mag.max(), 1e-300))[0]
    top = int(keep[-1]) + 1 if keep.size else 1
    return c[:top, :top] if c.ndim > 1 else c[:top]


def trace(t):
    """Round-metric trace of a symmetric tensor stored in frame layout."""
    if t.shape[0] == 1:
        return t[0]
    return t[0] + t[2]


def as_matrix(t):
    """Frame-layout symmetric tensor to explicit matrices, shape ``(*shape, n, n)``."""
    if t.shape[0] == 1:
        return t[0][..., None, None]
    a, b, d = t
    return np.stack([np.stack([a, b], -1), np.stack([b, d], -1)], -2)


def make_grid(dim, resolution=None):
    """Build a :class:`SphereGrid`.

    ``resolution`` is a node count for S^1 or ``(nlat, nlon)`` for S^2;
    defaults are 256 and 64 x 128.
    """
    if resolution is None:
        resolution = 256 if dim == 1 else (64, 128)
    return SphereGrid(dim, resolution)


@dataclass
class ScalarField:
    """Values of a real function at the nodes of a grid."""

    grid: SphereGrid
    values: np.ndarray
    name: str = "value"

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise GridConfigError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise GridConfigError(f"field {self.name!r} has non-finite values")

    def to_csv(self, path):
        coords = self.grid.coords()
        cols = ["theta"] if self.grid.dim == 1 else ["theta", "phi"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + [self.name])
            flat = [c.ravel() for c in coords] + [self.values.ravel()]
            for row in zip(*flat):
                w.writerow([f"{v:.17g}" for v in row])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        if header[0] != "theta" or len(header) not in (2, 3):
            raise GridConfigError(f"{path}: unrecognised field header {header}")
        if len(header) == 2:
            grid = make_grid(1, data.shape[0])
            values = data[:, 1]
        else:
            nlat = np.unique(data[:, 0]).size
            nlon = np.unique(data[:, 1]).size
            grid = make_grid(2, (nlat, nlon))
            values = data[:, 2].reshape(nlat, nlon)
        check = np.stack([c.ravel() for c in grid.coords()], axis=-1)
        if not np.allclose(check, data[:, : grid.dim], atol=1e-12):
            raise GridConfigError(f"{path}: nodes do not match a standard grid")
        return cls(grid, values, header[-1])
