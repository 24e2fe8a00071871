"""Checks of the flow's structural identities and asymptotics.

Everything here is a pure function of a :class:`~hypgauss.flow.FunctionalSeries`
and/or surfaces.  Time derivatives of series columns use the three-point
centered difference on the (non-uniform) step sequence, which is second
order in the local step size.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import flow, hypgeom
from .errors import RecenterError, WindowError
from .spheregrid import SPHERE_AREA, make_grid

FIT_FRACTION = 0.4


# -- linearization about the limit sphere ------------------------------------

def linear_coefficient(n, alpha, rho_inf):
    """alpha coth^{alpha-1}(rho) / (n sinh^2 rho)."""
    return alpha / math.tanh(rho_inf) ** (alpha - 1.0) / (n * math.sinh(rho_inf) ** 2)


def flow_coefficient(n, alpha, rho_inf):
    """alpha coth^{n alpha - 1}(rho) / sinh^2 rho, from linearizing the radial flow itself."""
    return alpha / math.tanh(rho_inf) ** (n * alpha - 1.0) / math.sinh(rho_inf) ** 2


def _mode_factor(n, l):
    if l < 0:
        raise ValueError(f"degree must be non-negative, got {l}")
    if l < 2:
        return 0.0
    return float(l * (l + n - 1) - n)


def linear_rate(n, alpha, rho_inf, l):
    """Decay rate of the degree-l mode of the mean-projected linear model

        eta_t = c (Lap eta + n eta - n mean(eta)),   c = linear_coefficient.
    """
    return linear_coefficient(n, alpha, rho_inf) * _mode_factor(n, l)


def flow_linear_rate(n, alpha, rho_inf, l):
    """Decay rate of the degree-l mode under the linearized radial flow."""
    return flow_coefficient(n, alpha, rho_inf) * _mode_factor(n, l)


@dataclass
class LinearizedModel:
    n: int
    alpha: float
    rho_inf: float
    c: float
    rates: list

    def to_json(self):
        return json.dumps(asdict(self))


def linearized_model(n, alpha, rho_inf, lmax, corrected=False):
    rate = flow_linear_rate if corrected else linear_rate
    coef = flow_coefficient if corrected else linear_coefficient
    return LinearizedModel(n, alpha, rho_inf, coef(n, alpha, rho_inf),
                           [rate(n, alpha, rho_inf, l) for l in range(lmax + 1)])


def linear_pde_rate(n, alpha, rho_inf, l, grid=None, decay=1e-3):
    """Brute-force oracle: integrate the linear model on a grid and fit the rate.

    Starts from the zonal degree-l harmonic plus a constant (which the mean
    projection must leave alone), steps with RK4 until the mode has decayed
    by ``decay`` and fits log of its amplitude.
    """
    grid = grid or make_grid(n, (24, 48) if n == 2 else 64)
    c = linear_coefficient(n, alpha, rho_inf)
    area = SPHERE_AREA[n]
    Y = grid.harmonic(l, 0)

    def rhs(eta):
        return c * (grid.laplacian(eta) + n * eta - n * grid.integrate(eta) / area)

    lam_top = grid.lmax * (grid.lmax + n - 1)
    dt = 0.5 * flow.RK4_REAL_AXIS / (c * lam_top)
    expected = linear_rate(n, alpha, rho_inf, l)
    t_end = -math.log(decay) / expected if expected > 0 else 1.0
    steps = max(20, int(math.ceil(t_end / dt)))
    dt = t_end / steps
    eta = Y + 0.5
    ts, amps = [0.0], [grid.integrate(eta * Y)]
    for k in range(steps):
        k1 = rhs(eta)
        k2 = rhs(eta + 0.5 * dt * k1)
        k3 = rhs(eta + 0.5 * dt * k2)
        k4 = rhs(eta + dt * k3)
        eta = eta + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        ts.append((k + 1) * dt)
        amps.append(grid.integrate(eta * Y))
    amps = np.array(amps)
    if expected == 0.0:
        return float(-(math.log(abs(amps[-1])) - math.log(abs(amps[0]))) / ts[-1])
    return fit_decay((np.array(ts), amps), window=(0.0, ts[-1])).rate


def jacobian_rate(n, alpha, rho_inf, l, grid=None, h=1e-6):
    """Rate of the degree-l mode from a centered difference of the full radial flow.

    Perturbs the sphere by +-h Y_l (phi recomputed) and projects the change
    in the right-hand side back onto Y_l.
    """
    grid = grid or make_grid(n, (24, 48) if n == 2 else 64)
    Y = grid.harmonic(l, 0)
    out = []
    for sgn in (1.0, -1.0):
        surf = hypgeom.RadialSurface(grid, rho_inf + sgn * h * Y)
        ph = flow.phi_of(surf, alpha)
        out.append(flow.radial_rhs(surf, alpha, ph))
    dF = (out[0] - out[1]) / (2.0 * h)
    return float(-grid.integrate(dF * Y) / grid.integrate(Y * Y))


# -- decay fits ---------------------------------------------------------------

@dataclass
class DecayFit:
    rate: float
    residual: float
    window: tuple
    samples: int


def _series_arrays(series, column):
    if isinstance(series, tuple):
        t, y = series
        return np.asarray(t, dtype=float), np.asarray(y, dtype=float)
    t = series.column("t")
    if isinstance(column, tuple):
        key, idx = column
        y = np.array([r[key][idx] for r in series.rows], dtype=float)
    else:
        y = series.column(column)
    return t, y


def fit_decay(series, window=None, column="osc"):
    """Least-squares slope of log(y) against t; returns the decay rate (minus slope).

    ``series`` is a FunctionalSeries or a ``(t, y)`` pair.  ``column`` names
    a scalar series column, or ``(key, index)`` for list columns such as
    ``("modes", 2)``.  The default window is the last 40% of the time span.
    """
    t, y = _series_arrays(series, column)
    if window is None:
        t0 = t[0] + (1.0 - FIT_FRACTION) * (t[-1] - t[0])
        window = (t0, t[-1])
    sel = (t >= window[0]) & (t <= window[1])
    if sel.sum() < 3:
        raise WindowError(f"fit window {window} holds fewer than 3 samples")
    ys = y[sel]
    if np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise WindowError("fit window contains non-positive or non-finite values")
    ts = t[sel]
    coef, res, *_ = np.polyfit(ts, np.log(ys), 1, full=True)
    slope = coef[0]
    resid = float(np.sqrt(res[0] / ts.size)) if len(res) else 0.0
    return DecayFit(rate=float(-slope), residual=resid,
                    window=(float(window[0]), float(window[1])), samples=int(ts.size))


# -- evolution identities ------------------------------------------------------

def centered_difference(t, y):
    """Second-order derivative estimate at the interior nodes of a non-uniform grid."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    return (-h1 / (h0 * (h0 + h1)) * y[:-2]
            + (h1 - h0) / (h0 * h1) * y[1:-1]
            + h0 / (h1 * (h0 + h1)) * y[2:])


@dataclass
class IdentityReport:
    """Discrete rate (lhs) vs pointwise identity (rhs) at interior sample times."""

    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    mismatch: np.ndarray = field(repr=False)
    max_mismatch: float = 0.0
    max_abs_error: float = 0.0

    def to_json(self):
        return json.dumps({
            "t": self.t.tolist(), "lhs": self.lhs.tolist(), "rhs": self.rhs.tolist(),
            "mismatch": self.mismatch.tolist(), "max_mismatch": self.max_mismatch,
            "max_abs_error": self.max_abs_error,
        })


DissipationReport = IdentityReport


def _interior(t, trim):
    span = t[-1] - t[0]
    return (t >= t[0] + trim * span) & (t <= t[-1] - trim * span)


def _report(t, lhs, rhs, trim):
    ti = t[1:-1]
    keep = _interior(t, trim)[1:-1] if trim > 0 else np.ones(ti.size, bool)
    if keep.sum() == 0:
        raise WindowError("no interior samples")
    ti, lhs, rhs = ti[keep], lhs[keep], rhs[keep]
    err = np.abs(lhs - rhs)
    scale = np.abs(rhs)
    rel = np.where(scale > 0, err / np.where(scale > 0, scale, 1.0),
                   np.where(err > 0, np.inf, 0.0))
    return IdentityReport(ti, lhs, rhs, rel, float(rel.max()), float(err.max()))


def _row_rates(series, states, alpha):
    """(var, diss) per row, recomputed from states when given."""
    if states is None:
        return ([r["rates"] for r in series.rows], [r["dissipation"] for r in series.rows])
    if alpha is None:
        raise ValueError("alpha is required when recomputing from states")
    out = [flow.identity_rates(s, alpha) for s in states]
    return [o[0] for o in out], [o[1] for o in out]


def dissipation_identity(series, states=None, alpha=None, trim=0.1):
    """d A_{n-1}/dt against -n int (K - Kbar)(K^alpha - Kbar^alpha) dmu.

    ``states`` (a consecutive run of FlowStates) overrides the per-row
    values stored in the series; ``trim`` drops that fraction of the time
    span at each end.
    """
    if states is not None:
        t = np.array([s.t for s in states])
        n = states[0].surface.grid.dim
        A = np.array([s.functionals.A(n - 1) for s in states])
    else:
        t = series.column("t")
        n = len(series[0]["A"]) - 1
        A = np.array([r["A"][n - 1] for r in series.rows])
    if t.size < 3:
        raise WindowError("need at least 3 consecutive samples")
    _, diss = _row_rates(series, states, alpha)
    return _report(t, centered_difference(t, A), np.array(diss)[1:-1], trim)


def variational_identity(series, k, states=None, alpha=None, trim=0.1):
    """d A_k/dt against (k+1) int (phi - K^alpha) sigma_{k+1} dmu, k = -1..n-1.

    For k = -1 the factor is taken as 1, so the rhs is the volume rate
    int (phi - K^alpha) dmu.
    """
    if states is not None:
        t = np.array([s.t for s in states])
        A = np.array([s.functionals.A(k) for s in states])
        n = states[0].surface.grid.dim
    else:
        t = series.column("t")
        n = len(series[0]["A"]) - 1
        A = series.column("volume") if k == -1 else np.array([r["A"][k] for r in series.rows])
    if not -1 <= k <= n - 1:
        raise ValueError(f"k must lie in -1..{n - 1}, got {k}")
    if t.size < 3:
        raise WindowError("need at least 3 consecutive samples")
    var, _ = _row_rates(series, states, alpha)
    rhs = np.array([v[k + 1] for v in var])[1:-1]
    return _report(t, centered_difference(t, A), rhs, trim)


# -- geodesic-ball comparisons -------------------------------------------------

def ball_volume(n, rho):
    return SPHERE_AREA[n] * float(hypgeom.ball_volume_profile(rho, n))


def ball_radius_for_volume(n, v, tol=1e-13, max_iter=100):
    """Radius of the geodesic ball with volume v (Newton on a monotone function)."""
    if v <= 0:
        raise ValueError("volume must be positive")
    if n == 1:
        return math.acosh(1.0 + v / (2.0 * math.pi))
    # f(rho) = pi (sinh 2rho - 2rho) - v is convex, so Newton started above the
    # root decreases monotonically; both start values are upper bounds
    rho = min((3.0 * v / (4.0 * math.pi)) ** (1.0 / 3.0), 0.5 * math.asinh(v / math.pi) + 1.0)
    for _ in range(max_iter):
        f = math.pi * float(hypgeom.sinh_minus_x(2 * rho)) - v
        d = 2.0 * math.pi * (math.cosh(2 * rho) - 1.0)
        step = f / d
        rho = max(rho - step, 0.5 * rho)
        if abs(step) <= tol * rho:
            return rho
    raise ArithmeticError(f"ball radius inversion did not converge for v={v}")


def ball_quermass(n, rho):
    """A_{n-1} of the geodesic ball of radius rho."""
    if n == 1:
        return 2.0 * math.pi * math.sinh(rho)
    return 2.0 * math.pi * math.sinh(2 * rho) + 4.0 * math.pi * rho


def ball_closed_forms(n, rho):
    """Exact volume, A_0..A_n and K-bar of the geodesic ball of radius rho."""
    sh, ch = math.sinh(rho), math.cosh(rho)
    if n == 1:
        return {"volume": 2.0 * math.pi * (ch - 1.0), "A0": 2.0 * math.pi * sh,
                "A1": 2.0 * math.pi, "kbar": ch / sh}
    return {"volume": math.pi * (math.sinh(2 * rho) - 2 * rho), "A0": 4.0 * math.pi * sh ** 2,
            "A1": 2.0 * math.pi * math.sinh(2 * rho) + 4.0 * math.pi * rho,
            "A2": 4.0 * math.pi, "kbar": (ch / sh) ** 2}


def psi(n, v):
    """A_{n-1} of the geodesic ball enclosing volume v."""
    return ball_quermass(n, ball_radius_for_volume(n, v))


@dataclass
class AFReport:
    volume: float
    quermass: float
    psi: float
    gap: float


def af_verify(surface, geom=None):
    """A_{n-1}(body) - psi_n(volume); non-negative for convex bodies."""
    n = surface.grid.dim
    f = hypgeom.functionals(surface, geom)
    p = psi(n, f.volume)
    q = f.A(n - 1)
    return AFReport(f.volume, q, p, q - p)


@dataclass
class BallDistance:
    rho_star: float
    distance: float
    center: np.ndarray = field(repr=False)
    converged: bool = True


def ball_distance(surface):
    """Volume-matched radius and sup-distance to the best-centered ball of that radius.

    The center minimizes max_j |d(c, P_j) - rho*| over the surface nodes,
    searched over tangent vectors at the current origin.
    """
    n = surface.grid.dim
    rho_star = ball_radius_for_volume(n, hypgeom.enclosed_volume(surface))
    P = surface.local_points().reshape(-1, n + 2)

    def obj(v):
        return float(np.abs(hypgeom.distance(hypgeom.exp_origin(v), P) - rho_star).max())

    base = obj(np.zeros(n + 1))
    res = minimize(obj, np.zeros(n + 1), method="Nelder-Mead",
                   options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000,
                            "initial_simplex": hypgeom._simplex(
                                n + 1, 0.1 * max(float(np.ptp(surface.rho)), 1e-3))})
    if not np.all(np.isfinite(res.x)):
        raise RecenterError("center search produced a non-finite center")
    if res.fun < base:
        return BallDistance(rho_star, float(res.fun), hypgeom.exp_origin(res.x), bool(res.success))
    return BallDistance(rho_star, base, hypgeom.exp_origin(np.zeros(n + 1)), bool(res.success))
