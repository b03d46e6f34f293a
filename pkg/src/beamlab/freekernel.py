"""Closed-form free objects for H0 = d^4/dx^4 on the line.

F_sign(s) = sign*i*exp(sign*i*s) - exp(-s) generates the free resolvent kernel
R0(lam^4)(x, y) = F(lam|x-y|) / (4 lam^3).  The functions here broadcast over
numpy arrays.
"""

from dataclasses import dataclass

import mpmath as mp
import numpy as np

from .errors import QuadratureError


def _sign(sign):
    if sign in (1, "+"):
        return 1
    if sign in (-1, "-"):
        return -1
    raise ValueError(f"sign must be +1/-1 or '+'/'-', got {sign!r}")


def F(sign, s, deriv=0):
    """k-th derivative of F_sign at s (analytic, k <= 3 typical)."""
    sg = _sign(sign)
    s = np.asarray(s)
    osc = sg * 1j * (sg * 1j) ** deriv * np.exp(sg * 1j * s)
    return osc - (-1.0) ** deriv * np.exp(-s)


def F_tilde(sign, s, deriv=0):
    """F plus (1 +- i) s^2 / 2, which removes the s^2 term so F~(0)' = F~(0)'' = 0."""
    sg = _sign(sign)
    c = 1.0 + sg * 1j
    s = np.asarray(s)
    poly = (c * s * s / 2.0, c * s, c * np.ones_like(s))
    extra = poly[deriv] if deriv < 3 else 0.0
    return F(sg, s, deriv) + extra


def free_resolvent_kernel(lam, x, y, sign):
    """R0^sign(lam^4)(x, y).

    Real lam > 0 gives the boundary value on the spectrum.  Complex lam with
    0 < arg lam < pi/4 gives the resolvent at z = lam^4 off the axis (sign '+').
    """
    lam = np.asarray(lam)
    if np.iscomplexobj(lam):
        if np.any(lam.real <= 0) or np.any(lam.imag < 0):
            raise ValueError("complex lam must lie in the open first quadrant")
    elif np.any(lam <= 0):
        raise ValueError("lam must be positive")
    r = np.abs(np.asarray(x) - np.asarray(y))
    return F(sign, lam * r) / (4.0 * lam**3)


def G0_kernel(x, y):
    """|x-y|^3 / 12, a fundamental solution of d^4/dx^4."""
    return np.abs(np.asarray(x) - np.asarray(y)) ** 3 / 12.0


def fresnel_cos_kernel(t, x, y):
    """Kernel of cos(t d^2/dx^2): Re[(4 pi i t)^(-1/2) exp(i (x-y)^2 / (4t))]."""
    t = np.asarray(t, dtype=float)
    if np.any(t == 0):
        raise ValueError("t must be nonzero")
    r2 = (np.asarray(x) - np.asarray(y)) ** 2
    amp = (4.0 * np.pi * np.abs(t)) ** -0.5 * np.exp(-0.25j * np.pi * np.sign(t))
    return (amp * np.exp(1j * r2 / (4.0 * t))).real


@dataclass(frozen=True)
class TaylorCheck:
    order: int
    residual: float
    value: complex
    nodes: int


def _gauss_legendre(f, a, b, n):
    """(integral of f, integral of |f|) by n-point Gauss-Legendre on [a, b]."""
    z, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    vals = f(mid + half * z)
    return half * np.dot(w, vals), half * np.dot(w, np.abs(vals))


def _theta_integral(f, breaks, rel_tol, max_nodes):
    def rule(n):
        parts = [_gauss_legendre(f, a, b, n) for a, b in zip(breaks, breaks[1:])]
        return sum(p[0] for p in parts), sum(p[1] for p in parts)

    n = 64
    prev, _ = rule(n)
    while True:
        n *= 2
        if n > max_nodes:
            raise QuadratureError(f"theta integral not converged at {max_nodes} nodes")
        cur, mass = rule(n)
        # relative to the integral of |f|: cancellation can make the value itself tiny
        if abs(cur - prev) <= rel_tol * max(mass, 1e-300):
            return cur, n
        prev = cur


# double-precision theta nodes put a phase error of about eps * lam|x - theta y| on every
# sample; once that, weighted by the integral of |f|, passes this the check reruns in mpmath
TAYLOR_ROUNDOFF = 1e-11
TAYLOR_DPS = 30


def _F_mp(sg, s, deriv, tilde):
    val = sg * 1j * (sg * 1j) ** deriv * mp.expj(sg * s) - (-1) ** deriv * mp.exp(-s)
    if tilde and deriv < 3:
        c = mp.mpc(1, sg)
        val += (c * s * s / 2, c * s, c)[deriv]
    return val


def _taylor_mp(order, lam, x, y, sg):
    with mp.workdps(TAYLOR_DPS):
        lam, x, y = mp.mpf(lam), mp.mpf(x), mp.mpf(y)
        tilde = order == 3

        def f(s, k=0):
            return _F_mp(sg, s, k, tilde)

        lhs = f(lam * abs(x - y))
        s0 = lam * abs(x)
        terms = [f(s0), -lam * y * mp.sign(x) * f(s0, 1), lam**2 * y**2 * f(s0, 2) / 2]
        head = mp.fsum(terms[:order])
        coef = (lambda th: -lam * y, lambda th: (1 - th) * lam**2 * y**2,
                lambda th: -(1 - th) ** 2 * lam**3 * y**3 / 2)[order - 1]
        odd = order != 2

        def rem(th):
            d = x - th * y
            return coef(th) * (mp.sign(d) if odd else 1) * f(lam * abs(d), order)

        kink = x / y
        pts = [0, kink, 1] if 0 < kink < 1 else [0, 1]
        integral = mp.quad(rem, pts, maxdegree=10)
        return float(abs(lhs - head - integral)), complex(lhs)


def taylor_split_check(order, lam, x, y, sign=1, rel_tol=1e-13, max_nodes=4096):
    """Residual of the order-1/2/3 Taylor splitting of F(lam|x - y|) around y = 0.

    With g(theta) = F(lam|x - theta*y|) the identities are the integral-remainder
    Taylor formulas for g(1) about theta = 0.  Order 3 uses F~, whose first two
    derivatives vanish at 0 so the kink of |x - theta y| costs nothing.
    """
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    if lam <= 0:
        raise ValueError("lam must be positive")
    f = F_tilde if order == 3 else F
    sg = _sign(sign)
    lhs = complex(f(sg, lam * abs(x - y)))
    if y == 0:
        return TaylorCheck(order, 0.0, lhs, 0)

    def u(th):
        return lam * np.abs(x - th * y)

    def sgn(th):
        return np.sign(x - th * y)

    g0 = f(sg, lam * abs(x))
    g1 = -lam * y * np.sign(x) * f(sg, lam * abs(x), 1)
    g2 = lam**2 * y**2 * f(sg, lam * abs(x), 2)
    if order == 1:
        head = g0
        remainder = lambda th: -lam * y * sgn(th) * f(sg, u(th), 1)
    elif order == 2:
        head = g0 + g1
        remainder = lambda th: (1 - th) * lam**2 * y**2 * f(sg, u(th), 2)
    else:
        head = g0 + g1 + g2 / 2
        remainder = lambda th: -0.5 * (1 - th) ** 2 * lam**3 * y**3 * sgn(th) * f(sg, u(th), 3)
    # split where x - theta*y changes sign so each piece is smooth
    kink = x / y
    breaks = [0.0, kink, 1.0] if 0.0 < kink < 1.0 else [0.0, 1.0]
    integral, nodes = _theta_integral(remainder, breaks, rel_tol, max_nodes)
    mass = sum(_gauss_legendre(remainder, a, b, nodes)[1] for a, b in zip(breaks, breaks[1:]))
    s_max = lam * max(abs(x), abs(x - y))
    if np.finfo(float).eps * mass * s_max > TAYLOR_ROUNDOFF:
        residual, lhs = _taylor_mp(order, lam, x, y, sg)
        return TaylorCheck(order, residual, lhs, nodes)
    return TaylorCheck(order, float(abs(lhs - (head + integral))), lhs, nodes)
