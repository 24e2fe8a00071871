"""High-precision reference computations that share no code with the package.

Curvatures are computed in the hyperboloid model of H^{n+1} inside
Minkowski space from a parametrization X(theta[, phi]) by direct
differentiation with mpmath.
"""

import mpmath as mp

mp.mp.dps = 30


def _mink(a, b):
    return -a[0] * b[0] + sum(x * y for x, y in zip(a[1:], b[1:]))


def _embed(rho, theta, phi):
    r = rho(theta, phi)
    return [mp.cosh(r), mp.sinh(r) * mp.sin(theta) * mp.cos(phi),
            mp.sinh(r) * mp.sin(theta) * mp.sin(phi), mp.sinh(r) * mp.cos(theta)]


def gauss_curvature_s2(rho, theta, phi):
    """Gauss-Kronecker curvature of the radial graph rho(theta, phi) in H^3."""
    theta, phi = mp.mpf(theta), mp.mpf(phi)

    def d(i, j, k):
        return mp.diff(lambda a, b: _embed(rho, a, b)[k], (theta, phi), (i, j))

    X = _embed(rho, theta, phi)
    Xt = [d(1, 0, k) for k in range(4)]
    Xp = [d(0, 1, k) for k in range(4)]
    Xtt = [d(2, 0, k) for k in range(4)]
    Xtp = [d(1, 1, k) for k in range(4)]
    Xpp = [d(0, 2, k) for k in range(4)]
    # normal: Minkowski-orthogonal to X, Xt, Xp
    rows = [[-X[0]] + X[1:], [-Xt[0]] + Xt[1:], [-Xp[0]] + Xp[1:]]
    nu = []
    for k in range(4):
        minor = mp.matrix([[r[c] for c in range(4) if c != k] for r in rows])
        nu.append((-1) ** k * mp.det(minor))
    norm = mp.sqrt(_mink(nu, nu))
    nu = [v / norm for v in nu]
    r = rho(theta, phi)
    radial = [mp.sinh(r), mp.cosh(r) * mp.sin(theta) * mp.cos(phi),
              mp.cosh(r) * mp.sin(theta) * mp.sin(phi), mp.cosh(r) * mp.cos(theta)]
    if _mink(nu, radial) < 0:
        nu = [-v for v in nu]
    g = mp.matrix([[_mink(Xt, Xt), _mink(Xt, Xp)], [_mink(Xp, Xt), _mink(Xp, Xp)]])
    h = mp.matrix([[-_mink(Xtt, nu), -_mink(Xtp, nu)], [-_mink(Xtp, nu), -_mink(Xpp, nu)]])
    return mp.det(h) / mp.det(g)


def curvature_s1(rho, theta):
    """Geodesic curvature of the radial graph rho(theta) in H^2."""
    theta = mp.mpf(theta)

    def X(t):
        r = rho(t)
        return [mp.cosh(r), mp.sinh(r) * mp.cos(t), mp.sinh(r) * mp.sin(t)]

    P = X(theta)
    T = [mp.diff(lambda t: X(t)[k], theta) for k in range(3)]
    A = [mp.diff(lambda t: X(t)[k], theta, 2) for k in range(3)]
    # normal orthogonal to P and T in R^{2,1}
    a = [-P[0], P[1], P[2]]
    b = [-T[0], T[1], T[2]]
    nu = [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    nu = [v / mp.sqrt(_mink(nu, nu)) for v in nu]
    r = rho(theta)
    radial = [mp.sinh(r), mp.cosh(r) * mp.cos(theta), mp.cosh(r) * mp.sin(theta)]
    if _mink(nu, radial) < 0:
        nu = [-v for v in nu]
    return -_mink(A, nu) / _mink(T, T)
