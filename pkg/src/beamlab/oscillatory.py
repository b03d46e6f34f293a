"""Littlewood-Paley pieces, the dyadic oscillatory integrals K_N and their
two-branch bound Theta.

K_N^sign = int_0^inf exp(-i t sqrt(2^{4N} s^4 + m^2)) exp(sign i 2^N s Psi)
           s^h phi0(s) Phi(2^N s) ds

is evaluated on the two smooth pieces [1/4, 1/2], [1/2, 1] of phi0.  Moderate
phases use Gauss-Legendre with node doubling.  Large phases use Levin
collocation away from the stationary point, with Gauss-Legendre on a window
around it.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import brentq

from .errors import QuadratureError
from .model import smoothstep

log = logging.getLogger(__name__)

EPS = np.finfo(float).eps


def phi(s):
    """Base bump: 1 for |s| <= 1/2, 0 for |s| >= 1, C^2 in between."""
    return 1.0 - smoothstep(2.0 * np.abs(s) - 1.0)


def phi0(s):
    """phi(s) - phi(2s), supported in [1/4, 1]; sum_N phi0(2^-N s) = 1 for s != 0."""
    return phi(s) - phi(2.0 * s)


@dataclass(frozen=True)
class DyadicPiece:
    N: int

    @property
    def support(self):
        return 2.0 ** (self.N - 2), 2.0**self.N

    def weight(self, s):
        return phi0(np.asarray(s) / 2.0**self.N)


def dyadic_partition(s_min, s_max):
    if not 0 < s_min < s_max:
        raise ValueError("need 0 < s_min < s_max")
    lo = math.floor(math.log2(s_min))
    hi = math.ceil(math.log2(s_max)) + 2
    return [DyadicPiece(N) for N in range(lo, hi + 1)
            if 2.0**N > s_min and 2.0 ** (N - 2) < s_max]


@dataclass(frozen=True)
class OscIntegrand:
    t: float
    m: float = 0.0
    ell: float = 0.0
    h: float = 0.0
    psi: float = 0.0
    amplitude: Optional[Callable] = None  # Phi(lam, m, ell); None means Phi = 1
    amplitude_bound: float = 1.0

    def __post_init__(self):
        if self.psi < 0:
            raise ValueError("phase offset Psi must be nonnegative")

    def Phi(self, lam):
        if self.amplitude is None:
            return np.ones_like(lam)
        return self.amplitude(lam, self.m, self.ell)

    def check_amplitude(self, N, samples=129):
        """Spot check |Phi(2^N s)| and |d/ds Phi(2^N s)| against the declared bound."""
        if self.amplitude is None:
            return
        s = np.linspace(0.25, 1.0, samples)
        vals = self.Phi(2.0**N * s)
        deriv = np.gradient(vals, s)
        worst = max(np.abs(vals).max(), np.abs(deriv).max())
        if worst > 1.01 * self.amplitude_bound:
            raise ValueError(f"amplitude exceeds its declared bound at N={N}: {worst:.3g}")


# --------------------------------------------------------------------------
# quadrature rules
# --------------------------------------------------------------------------

_PANEL = 64
_LEG_CACHE = {}


def _leggauss(n):
    if n not in _LEG_CACHE:
        _LEG_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _LEG_CACHE[n]


def gl_nodes(a, b, n):
    """Nodes and weights of an n-point rule on [a, b]: plain Gauss-Legendre up to
    64 points, otherwise ceil(n/64) equal panels of 64 points."""
    if n <= _PANEL:
        z, w = _leggauss(n)
        half = 0.5 * (b - a)
        return 0.5 * (a + b) + half * z, half * w
    panels = -(-n // _PANEL)
    z, w = _leggauss(_PANEL)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    return (mid + half * z).ravel(), (half * w).ravel()


def gauss_legendre(f, a, b, n):
    s, w = gl_nodes(a, b, n)
    return np.dot(w, f(s))


def _cheb_matrix(n):
    """Chebyshev-Lobatto points on [-1, 1] (descending) and differentiation matrix."""
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.where((j == 0) | (j == n), 2.0, 1.0) * (-1.0) ** j
    X = x[:, None] - x[None, :]
    D = np.outer(c, 1.0 / c) / (X + np.eye(n + 1))
    D -= np.diag(D.sum(axis=1))
    return x, D


def levin(f, theta, dtheta, a, b, n):
    """int_a^b f exp(i theta) via the non-oscillatory solution of p' + i theta' p = f."""
    x, D = _cheb_matrix(n)
    half = 0.5 * (b - a)
    s = 0.5 * (a + b) + half * x
    A = D / half + np.diag(1j * dtheta(s))
    p = np.linalg.solve(A, f(s).astype(complex))
    # x[0] = 1 maps to b, x[-1] = -1 maps to a
    return p[0] * np.exp(1j * theta(b)) - p[-1] * np.exp(1j * theta(a))


@dataclass
class _Phase:
    t: float
    m: float
    scale: float  # 2^N
    offset: float  # sign * 2^N * Psi

    def theta(self, s):
        """Total phase: -t sqrt(2^{4N} s^4 + m^2) + sign 2^N Psi s."""
        return -self.t * np.sqrt((self.scale * s) ** 4 + self.m**2) + self.offset * s

    def dtheta(self, s):
        q = (self.scale * s) ** 4
        return -self.t * 2.0 * q / (s * np.sqrt(q + self.m**2)) + self.offset

    def d2theta(self, s):
        lam = self.scale * s
        num = 2.0 * lam**6 + 6.0 * lam**2 * self.m**2
        return -self.t * self.scale**2 * num / (lam**4 + self.m**2) ** 1.5


def _gl_doubling(g, a, b, n0, rel_tol, max_nodes):
    n = n0
    prev = gauss_legendre(g, a, b, n)
    # sums of O(|g|) terms cannot resolve values below this round-off floor
    floor = 64.0 * EPS * gauss_legendre(lambda s: np.abs(g(s)), a, b, n)
    while True:
        n *= 2
        if n > max_nodes:
            raise QuadratureError(
                f"Gauss-Legendre not converged on [{a:.4g}, {b:.4g}] with {max_nodes} nodes",
                phase_nodes=n0)
        cur = gauss_legendre(g, a, b, n)
        if abs(cur - prev) <= rel_tol * abs(cur) + floor:
            return cur, n
        prev = cur


def _levin_doubling(f, ph, a, b, rel_tol, n_max=512):
    n = 16
    prev = levin(f, ph.theta, ph.dtheta, a, b, n)
    while n < n_max:
        n *= 2
        cur = levin(f, ph.theta, ph.dtheta, a, b, n)
        # cancellation between adjacent pieces limits attainable relative accuracy
        floor = 1e3 * EPS * np.abs(f(np.linspace(a, b, 9))).max() / max(
            abs(ph.dtheta(a)), abs(ph.dtheta(b)), 1e-300)
        if abs(cur - prev) <= rel_tol * abs(cur) + floor:
            return cur, n
        prev = cur
    raise QuadratureError(f"Levin collocation not converged on [{a:.4g}, {b:.4g}]")


def oscillatory_integral(f, ph, a, b, rel_tol=1e-8, max_nodes=100_000, gl_cap=8192):
    """int_a^b f(s) exp(i theta(s)) ds for the K_N phase; returns (value, nodes used)."""
    span = b - a
    phase_range = abs(ph.t) * ph.scale**2 * span + abs(ph.offset) * span
    n0 = max(32, 4 * math.ceil(phase_range / math.pi))
    g = lambda s: f(s) * np.exp(1j * ph.theta(s))
    if n0 <= gl_cap:
        return _gl_doubling(g, a, b, n0, rel_tol, max_nodes)
    da, db = ph.dtheta(a), ph.dtheta(b)
    if da * db > 0:
        return _levin_doubling(f, ph, a, b, rel_tol)
    s0 = brentq(ph.dtheta, a, b, xtol=1e-15 * b)
    width = math.sqrt(64.0 * math.pi / abs(ph.d2theta(s0)))
    lo, hi = max(a, s0 - width), min(b, s0 + width)
    total, nodes = 0j, 0
    win_range = abs(ph.theta(hi) - ph.theta(s0)) + abs(ph.theta(s0) - ph.theta(lo))
    val, n = _gl_doubling(g, lo, hi, max(32, 4 * math.ceil(win_range / math.pi)), rel_tol, max_nodes)
    total, nodes = total + val, nodes + n
    for u, w in ((a, lo), (hi, b)):
        if w - u > 0:
            val, n = _levin_doubling(f, ph, u, w, rel_tol)
            total, nodes = total + val, nodes + n
    return total, nodes


def K_N(sign, N, integrand, rel_tol=1e-8, max_nodes=100_000):
    """Dyadic oscillatory integral K_N^sign for the given integrand."""
    sg = 1 if sign in (1, "+") else -1
    itg = integrand
    if itg.amplitude is not None:
        itg.check_amplitude(N)
    scale = 2.0**N
    ph = _Phase(itg.t, itg.m, scale, sg * scale * itg.psi)

    def f(s):
        return s**itg.h * phi0(s) * itg.Phi(scale * s)

    total = 0j
    for a, b in ((0.25, 0.5), (0.5, 1.0)):
        val, _ = oscillatory_integral(f, ph, a, b, rel_tol, max_nodes)
        total += val
    return total


# --------------------------------------------------------------------------
# Theta bound and dyadic sums
# --------------------------------------------------------------------------

def C_m(m, N2=0):
    """Width of the near (stationary) band: 2 + log2(1 + 2^{-4(N2-2)} m^2) / 2."""
    return 2.0 + 0.5 * math.log2(1.0 + 2.0 ** (-4 * (N2 - 2)) * m * m)


def N0_of(psi, t):
    """Stationary scale index floor(log2(Psi/|t|))."""
    if t == 0:
        raise ValueError("t must be nonzero")
    if psi <= 0:
        return -(10**9)  # no stationary scale: every N is far
    return math.floor(math.log2(psi / abs(t)))


@dataclass(frozen=True)
class ThetaParams:
    N: int
    N0: int
    m: float
    t: float
    C_m: float
    value: float
    near: bool


def theta_params(N, N0, m, t, N2=0):
    if t == 0:
        raise ValueError("t must be nonzero")
    bracket = 1.0 + abs(m)
    width = C_m(m, N2)
    x = abs(t) * 4.0**N
    near = abs(N - N0) <= width
    value = math.sqrt(bracket) / math.sqrt(1.0 + x) if near else bracket / (1.0 + x)
    return ThetaParams(N, N0, m, t, width, value, near)


def theta(N, N0, m, t, N2=0):
    """Two-branch bound Theta_{N0,N}(m, t)."""
    return theta_params(N, N0, m, t, N2).value


@dataclass(frozen=True)
class DyadicSum:
    total: float
    bound: float
    ratio: float
    terms: int


def dyadic_sum_check(m, t, ell=0.0, variant="ii", psi=None, N2=0):
    """Sum one of the dyadic series over all N and compare with its power of |t|.

    variant "i":   sum 2^{(1+2 ell)N} Theta(0, t)   vs |t|^{-(1+2 ell)/2}
    variant "ii":  sum 2^N Theta(m, t)              vs <m> |t|^{-1/2}
    variant "iii": sum 2^N (1 + |t| 2^{4N})^{-1/2}  vs |t|^{-1/4}
    Psi defaults to |t|^{1/2}, which puts the stationary scale 2^{N0} at |t|^{-1/2},
    where the near band carries the most weight.
    """
    if t == 0:
        raise ValueError("t must be nonzero")
    psi = math.sqrt(abs(t)) if psi is None else psi
    N0 = N0_of(psi, t)
    if variant == "i":
        if not -0.5 < ell <= 0:
            raise ValueError("variant i needs -1/2 < ell <= 0")
        term = lambda N: 2.0 ** ((1 + 2 * ell) * N) * theta(N, N0, 0.0, t, N2)
        bound = abs(t) ** (-(1 + 2 * ell) / 2)
    elif variant == "ii":
        term = lambda N: 2.0**N * theta(N, N0, m, t, N2)
        bound = (1.0 + abs(m)) * abs(t) ** -0.5
    elif variant == "iii":
        term = lambda N: 2.0**N / math.sqrt(1.0 + abs(t) * 16.0**N)
        bound = abs(t) ** -0.25
    else:
        raise ValueError(f"unknown variant {variant!r}")
    centre = round(-0.25 * math.log2(abs(t))) if variant == "iii" else N0
    total = term(centre)
    count = 1
    for step in (1, -1):
        N = centre + step
        while True:
            x = term(N)
            total += x
            count += 1
            if x < 1e-16 * total and abs(N - centre) > C_m(m, N2) + 2:
                break
            N += step
    return DyadicSum(total, bound, total / bound, count)
