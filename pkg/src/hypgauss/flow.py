"""Volume-preserving K^alpha flow.

Two scalar PDEs are integrated with classical RK4, the nonlocal term being
recomputed at every stage:

* radial:  rho_t = (phi - K^alpha) sqrt(1 + |grad rho|^2 / sinh^2 rho)
* support: s_t   = A phi - B (K^Y)^alpha   (Klein support function)

Explicit stepping of a parabolic problem is limited by the largest
eigenvalue of the linearized operator.  The bound used here is
``D * Lambda`` with D the largest pointwise diffusion coefficient and
Lambda = L(L+n-1) the top Laplacian eigenvalue kept by the dealiasing
filter.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import hypgeom, klein
from .errors import (ConfigError, ConvexityLossError, DegenerateSurfaceError,
                     OutOfModelError, StiffnessError, VolumeCorrectionError)

RK4_REAL_AXIS = 2.78  # RK4 stability interval on the negative real axis is ~2.785
MAX_HALVINGS = 20
MODE_DEGREES = 6

_STEP_FAILURES = (ConvexityLossError, DegenerateSurfaceError, OutOfModelError,
                  FloatingPointError)


@dataclass(frozen=True)
class FlowConfig:
    n: int = 2
    alpha: float = 1.0
    parametrization: str = "radial"
    dt_initial: float | None = None
    safety: float = 0.5
    dt_max: float = 0.05
    fixed_dt: bool = False
    volume_correction: bool = True
    t_end: float | None = 1.0
    osc_tol: float | None = None
    resolution: tuple | int | None = None
    filter_fraction: float | None = 2.0 / 3.0
    recenter_threshold: float = 0.5
    keep_every: int = 0
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ConfigError(f"n must be 1 or 2, got {self.n}")
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.safety <= 1:
            raise ConfigError(f"safety factor must lie in (0, 1], got {self.safety}")
        if self.parametrization not in ("radial", "support"):
            raise ConfigError(f"unknown parametrization {self.parametrization!r}")
        if self.t_end is None and self.osc_tol is None:
            raise ConfigError("need t_end and/or osc_tol as a stop criterion")
        if self.fixed_dt and not self.dt_initial:
            raise ConfigError("fixed_dt requires dt_initial")
        if self.dt_max <= 0:
            raise ConfigError("dt_max must be positive")
        if self.filter_fraction is not None and not 0 < self.filter_fraction <= 1:
            raise ConfigError("filter_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class FlowState:
    t: float
    surface: object  # RadialSurface or SupportSurface
    functionals: hypgeom.Functionals
    phi: float
    step_count: int
    geom: object = field(repr=False, default=None)

    @property
    def parametrization(self):
        return "radial" if isinstance(self.surface, hypgeom.RadialSurface) else "support"


@dataclass
class StepReport:
    dt: float
    rejections: int = 0
    reasons: list = field(default_factory=list)
    correction: float = 0.0


class FunctionalSeries:
    """Per-step record of global quantities; ``t`` strictly increasing."""

    def __init__(self, rows=None):
        self.rows = []
        for r in rows or []:
            self.append(r)

    def append(self, row):
        if self.rows and not row["t"] > self.rows[-1]["t"]:
            raise ValueError("series times must be strictly increasing")
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def column(self, key):
        if key == "A" or key == "modes" or key == "rates":
            return np.array([r[key] for r in self.rows], dtype=float)
        return np.array([r[key] for r in self.rows], dtype=float)

    @property
    def t(self):
        return self.column("t")

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for r in self.rows:
                fh.write(json.dumps(r, default=float) + "\n")

    @classmethod
    def from_jsonl(cls, path):
        with open(path) as fh:
            return cls([json.loads(line) for line in fh if line.strip()])

    def to_csv(self, path):
        if not self.rows:
            open(path, "w").close()
            return
        first = self.rows[0]
        header, getters = [], []
        for key, val in first.items():
            if isinstance(val, (list, tuple)):
                for i in range(len(val)):
                    header.append(f"{key}{i}")
                    getters.append((key, i))
            else:
                header.append(key)
                getters.append((key, None))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in self.rows:
                w.writerow([_fmt(r[k] if i is None else r[k][i]) for k, i in getters])


def _fmt(x):
    return repr(x) if isinstance(x, (int, str)) else f"{float(x):.17g}"


# -- pointwise pieces ---------------------------------------------------------

def _geom(surface):
    if isinstance(surface, hypgeom.RadialSurface):
        return hypgeom.geometry(surface)
    return klein.klein_geometry(surface)


def _volume(surface):
    if isinstance(surface, hypgeom.RadialSurface):
        return hypgeom.enclosed_volume(surface)
    return klein.enclosed_volume(surface)


def phi_of(surface, alpha, geom=None):
    geom = _geom(surface) if geom is None else geom
    Ka = _powK(geom.K, alpha)
    w = surface.grid.weights
    return float(np.sum(Ka * geom.dmu * w) / np.sum(geom.dmu * w))


def phi(state, alpha):
    """Area average of K^alpha on the state's surface."""
    return phi_of(state.surface, alpha, state.geom)


def _powK(K, alpha):
    if K.min() <= 0.0:
        node = int(np.argmin(K))
        raise ConvexityLossError(f"Gauss curvature not positive at node {node}",
                                 node=node, eigenvalue=float(K.ravel()[node]))
    return K ** alpha


def radial_rhs(surface, alpha, phi_value, K=None, grad=None):
    """(phi - K^alpha) sqrt(1 + |grad rho|^2 / sinh^2 rho)."""
    if surface.rho.min() <= 0.0:
        raise DegenerateSurfaceError("radial function must be positive")
    if grad is None:
        grad = surface.grid.gradient(surface.rho)
    if K is None:
        K = hypgeom.gauss_curvature(surface)
    stretch = np.sqrt(1.0 + np.sum(grad ** 2, axis=0) / np.sinh(surface.rho) ** 2)
    return (phi_value - _powK(K, alpha)) * stretch


def support_rhs(ss, alpha, phi_value, KY=None):
    """A phi - B (K^Y)^alpha."""
    if KY is None:
        KY = klein.gauss_KY(klein.radii_tensor(ss))
    co = klein.coefficients(ss, alpha)
    return co.A * phi_value - co.B * _powK(KY, alpha)


# -- state construction -------------------------------------------------------

def _osc(surface):
    if isinstance(surface, hypgeom.RadialSurface):
        r = surface.rho
    else:
        r = klein.hyperbolic_radius(surface)
    return float(r.max() - r.min())


def _radius_field(surface):
    if isinstance(surface, hypgeom.RadialSurface):
        return surface.rho
    return np.arctanh(surface.s)


def _certify(surface, geom):
    if isinstance(surface, hypgeom.RadialSurface):
        lo = geom.kappa[0]
        if lo.min() <= 0.0:
            node = int(np.argmin(lo))
            raise ConvexityLossError(f"principal curvature not positive at node {node}",
                                     node=node, eigenvalue=float(lo.ravel()[node]))
    else:
        rep = klein.convexity_certificate(surface)
        if not rep.passed:
            raise ConvexityLossError(f"radii tensor not positive definite at node {rep.node}",
                                     node=rep.node, eigenvalue=rep.min_eigenvalue)


def make_state(surface, alpha, t=0.0, step_count=0):
    """Snapshot with cached geometry, functionals and phi; certifies convexity."""
    with np.errstate(over="raise", invalid="raise", divide="raise"):
        geom = _geom(surface)
        _certify(surface, geom)
        vol = _volume(surface)
        fun = hypgeom.quermassintegrals(geom, vol, surface.grid)
        ph = phi_of(surface, alpha, geom)
    return FlowState(t=float(t), surface=surface, functionals=fun, phi=ph,
                     step_count=step_count, geom=geom)


def identity_rates(state, alpha):
    """Instantaneous right-hand sides of the evolution identities.

    ``var[k+1] = (k+1) int (phi - K^alpha) sigma_{k+1} dmu`` for k = -1..n-1
    (the k = -1 entry is int eta dmu, the volume rate) and
    ``diss = -n int (K - Kbar)(K^alpha - Kbar^alpha) dmu``.
    """
    g = state.geom
    grid = state.surface.grid
    n = grid.dim
    K = g.K
    eta = state.phi - K ** alpha
    var = []
    for k in range(-1, n):
        fac = 1.0 if k == -1 else (k + 1)
        var.append(float(fac * grid.integrate(eta * g.sigma[k + 1] * g.dmu)))
    kb = state.functionals.kbar
    diss = float(-n * grid.integrate((K - kb) * (K ** alpha - kb ** alpha) * g.dmu))
    return var, diss


def series_row(state, alpha, dt=0.0):
    g = state.geom
    f = state.functionals
    grid = state.surface.grid
    var, diss = identity_rates(state, alpha)
    lmax = min(MODE_DEGREES, grid.lmax)
    return {
        "t": state.t,
        "volume": f.volume,
        "A": f.as_list(),
        "phi": state.phi,
        "kbar": f.kbar,
        "kappa_min": float(g.kappa.min()),
        "kappa_max": float(g.kappa.max()),
        "osc": _osc(state.surface),
        "dt": float(dt),
        "modes": [float(a) for a in grid.harmonic_coeffs(_radius_field(state.surface), lmax)],
        "rates": var,
        "dissipation": diss,
    }


# -- time stepping ------------------------------------------------------------

def filter_degree(grid, config):
    if config.filter_fraction is None:
        return grid.lmax
    return max(2, int(math.floor(config.filter_fraction * grid.lmax)))


def _top_eigenvalue(grid, config):
    L = filter_degree(grid, config)
    return L * (L + grid.dim - 1) if grid.dim == 2 else L * L


def diffusion_bound(state, alpha):
    """Largest pointwise coefficient of the linearized operator."""
    g = state.geom
    K = g.K
    s = state.surface
    if isinstance(s, hypgeom.RadialSurface):
        kmin = g.kappa[0]
        stretch = np.sqrt(1.0 + np.sum(g.grad ** 2, axis=0) / np.sinh(s.rho) ** 2)
        D = alpha * K ** (alpha - 1.0) * (K / kmin) * stretch / np.sinh(s.rho) ** 2
    else:
        rt = klein.radii_tensor(s)
        B = klein.coefficients(s, alpha).B
        D = alpha * B * g.KY ** alpha / rt.eigen[0]
    return float(D.max())


def stable_dt(state, config):
    lam = _top_eigenvalue(state.surface.grid, config)
    dt = config.safety * RK4_REAL_AXIS / (diffusion_bound(state, config.alpha) * lam)
    return min(dt, config.dt_max)


def _rhs(surface, config):
    grid = surface.grid
    if isinstance(surface, hypgeom.RadialSurface):
        geom = hypgeom.geometry(surface)
        ph = phi_of(surface, config.alpha, geom)
        out = radial_rhs(surface, config.alpha, ph, K=geom.K, grad=geom.grad)
    else:
        geom = klein.klein_geometry(surface)
        ph = phi_of(surface, config.alpha, geom)
        out = support_rhs(surface, config.alpha, ph, KY=geom.KY)
    if config.filter_fraction is not None:
        out = grid.truncate(out, filter_degree(grid, config))
    return out


def _field(surface):
    return surface.rho if isinstance(surface, hypgeom.RadialSurface) else surface.s


def _rebuild(surface, values):
    if isinstance(surface, hypgeom.RadialSurface):
        return surface.with_rho(values)
    return klein.support_surface(surface.grid, values)


def rk4(surface, config, dt):
    u = _field(surface)
    k1 = _rhs(surface, config)
    k2 = _rhs(_rebuild(surface, u + 0.5 * dt * k1), config)
    k3 = _rhs(_rebuild(surface, u + 0.5 * dt * k2), config)
    k4 = _rhs(_rebuild(surface, u + dt * k3), config)
    return _rebuild(surface, u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))


def step(state, config, dt=None, target_volume=None):
    """One accepted RK4 step; returns ``(new_state, StepReport)``.

    A trial is rejected if any stage fails (non-finite field, convexity or
    model loss) or the result fails the convexity certificate.  Each
    rejection halves dt; after MAX_HALVINGS the run is declared stiff.
    """
    if dt is None:
        dt = config.dt_initial if config.fixed_dt else stable_dt(state, config)
        if config.dt_initial and not config.fixed_dt:
            dt = min(dt, config.dt_initial)
    report = StepReport(dt=dt)
    for _ in range(MAX_HALVINGS + 1):
        try:
            with np.errstate(over="raise", invalid="raise", divide="raise"):
                surf = rk4(state.surface, config, dt)
                if target_volume is not None:
                    surf, eps = correct_surface(surf, target_volume)
                    report.correction = eps
            new = make_state(surf, config.alpha, state.t + dt, state.step_count + 1)
            report.dt = dt
            return new, report
        except _STEP_FAILURES + (VolumeCorrectionError,) as exc:
            report.rejections += 1
            report.reasons.append(f"dt={dt:.6g}: {exc}")
            dt *= 0.5
    raise StiffnessError(f"step rejected {MAX_HALVINGS} times at t={state.t}", state=state)


# -- volume correction --------------------------------------------------------

def correct_surface(surface, target, tol=1e-13, max_iter=50):
    """Uniform normal shift restoring the enclosed volume; returns (surface, eps).

    Radial graphs shift rho by eps (exact parallel shift for balls).  Support
    functions shift along A = sqrt((1-|Y|^2)(1-s^2)), the first-order
    support change of a unit normal displacement.
    """
    grid = surface.grid
    n = grid.dim
    radial = isinstance(surface, hypgeom.RadialSurface)
    if radial:
        base = surface.rho
        vol = lambda e: float(grid.integrate(hypgeom.ball_volume_profile(base + e, n)))
        dvol = lambda e: float(grid.integrate(np.sinh(base + e) ** n))
        build = lambda e: surface.with_rho(base + e)
    else:
        base = surface.s
        A = klein.coefficients(surface, 1.0).A
        area = float(grid.integrate(klein.klein_geometry(surface).dmu))
        build = lambda e: klein.support_surface(grid, base + e * A)
        vol = lambda e: klein.enclosed_volume(build(e))
        dvol = lambda e: area
    eps = 0.0
    for _ in range(max_iter):
        r = vol(eps) - target
        if abs(r) <= tol * abs(target):
            return (surface if eps == 0.0 else build(eps)), eps
        eps -= r / dvol(eps)
    raise VolumeCorrectionError(
        f"volume correction did not converge (residual {r:.3e}, eps {eps:.3e})")


def volume_correct(state, target, alpha=1.0):
    """State with the enclosed volume restored to ``target``."""
    surf, eps = correct_surface(state.surface, target)
    if eps == 0.0:
        return state
    return make_state(surf, alpha, state.t, state.step_count)


# -- driver -------------------------------------------------------------------

@dataclass
class RunResult:
    series: FunctionalSeries
    final: FlowState
    states: list
    reports: list
    stop_reason: str


def _maybe_recenter(surface, threshold):
    if not isinstance(surface, hypgeom.RadialSurface) or _osc(surface) <= threshold:
        return surface
    bounds = hypgeom.inner_outer_radius(surface)
    return hypgeom.recenter_to(surface, bounds.inner_center)


def run(initial, config, callback=None):
    """Integrate from ``initial`` until a stop criterion holds.

    ``initial`` is a RadialSurface; for the support parametrization it is
    projected to the Klein model first.  Every accepted state appends a
    series row; every ``keep_every``-th state (and the first and last) is
    retained in ``states`` when keep_every > 0.
    """
    if initial.grid.dim != config.n:
        raise ConfigError(f"surface lives on S^{initial.grid.dim}, config says n={config.n}")
    surface = initial
    if config.parametrization == "support":
        surface = klein.project(initial)
    state = make_state(surface, config.alpha)
    target = state.functionals.volume if config.volume_correction else None
    series = FunctionalSeries()
    series.append(series_row(state, config.alpha))
    states = [state] if config.keep_every else []
    reports = []
    stop = None
    if config.osc_tol is not None and _osc(state.surface) <= config.osc_tol:
        stop = "osc_tol"
    while stop is None:
        if state.step_count >= config.max_steps:
            stop = "max_steps"
            break
        dt = config.dt_initial if config.fixed_dt else None
        if dt is None:
            dt = stable_dt(state, config)
            if config.dt_initial:
                dt = min(dt, config.dt_initial)
        if config.t_end is not None:
            remaining = config.t_end - state.t
            if dt >= remaining * (1.0 - 1e-12):
                dt = remaining
        state, rep = step(state, config, dt=dt, target_volume=target)
        reports.append(rep)
        recentered = _maybe_recenter(state.surface, config.recenter_threshold)
        if recentered is not state.surface:
            state = make_state(recentered, config.alpha, state.t, state.step_count)
        series.append(series_row(state, config.alpha, rep.dt))
        if config.keep_every and state.step_count % config.keep_every == 0:
            states.append(state)
        if callback is not None:
            callback(state, rep)
        if config.t_end is not None and state.t >= config.t_end * (1.0 - 1e-14):
            stop = "t_end"
        elif config.osc_tol is not None and _osc(state.surface) <= config.osc_tol:
            stop = "osc_tol"
    if config.keep_every and states[-1] is not state:
        states.append(state)
    return RunResult(series, state, states, reports, stop)
