"""Propagator kernels from Stone's formula, decay curves and exponent fits.

For f(H) P_ac the Stone integral over the spectral variable lam (energy lam^4)
is written with the scattering states psi_k = (1 - R0^- v M^-(lam)^-1 v) e_k,
e_k(x) = exp(i k lam x), k = +-1:

    f(H) P_ac (x, y) = int_0^inf f(lam^4) sigma(lam; x, y) dlam,
    sigma = (1 / 2 pi) sum_k psi_k(x) conj(psi_k(y)) = (2 / pi i) lam^3 [R_V^+ - R_V^-](x, y).

For V = 0 this is sigma = cos(lam (x - y)) / pi.  The lam-integral is split into
dyadic intervals [2^(j-1), 2^j] (plus cutoff breakpoints); the Littlewood-Paley
weights phi0(2^-N lam) telescope, so truncating the piece sum at N_top leaves the
smooth weight phi(lam / 2^N_top) on the last interval.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import mpmath as mp
import numpy as np
from scipy import stats

from .errors import ConfigError, NumericalError, QuadratureError, SingularOperatorError, \
    ValidityWindowError
from .freekernel import F, free_resolvent_kernel
from .oscillatory import gl_nodes, phi
from .resonance import EXTENDED_MAX_SUPPORT, BirmanSchwinger, extended_dps
from .results import DecayCurve, DecayFit, KernelSlice
from .spectral import (build_hamiltonian, detect_bound_states, eigendecompose,
                       propagate_spectral, spectral_lam_max, validity_window)

log = logging.getLogger(__name__)

# psi = e - R0 v g cancels about log10(cond M) digits; past this the states go to mpmath
STATE_COND = 1e6
# node chunks at least this long get their solves by Chebyshev interpolation
INTERP_MIN_NODES = 96
INTERP_TOL = 1e-10

KINDS = ("cos", "sin_over", "unified_exp")
CUTOFFS = ("low", "high", "full")


# --------------------------------------------------------------------------
# resolvent
# --------------------------------------------------------------------------

def resolvent_V(sample, lam, sign=1, xs=None, ys=None, cond_max=1e10):
    """R_V^sign(lam^4)(x, y) = R0 - R0 v M^-1 v R0, on grid nodes by default.

    Complex lam in the open first quadrant (sign +1) gives the resolvent at
    lam^4 off the real axis.
    """
    grid = sample.grid
    xs = grid.x if xs is None else np.asarray(xs, dtype=float)
    ys = grid.x if ys is None else np.asarray(ys, dtype=float)
    R0 = free_resolvent_kernel(lam, xs[:, None], ys[None, :], sign)
    if sample.is_zero:
        return R0
    bs = BirmanSchwinger(sample)
    M = bs.matrix(lam, sign)
    cond = np.linalg.cond(M)
    if not cond < cond_max:
        raise SingularOperatorError(f"M(lam={lam}) condition {cond:.3e} >= {cond_max:.0e}")
    left = free_resolvent_kernel(lam, xs[:, None], bs.nodes[None, :], sign) * bs.w
    right = bs.w[:, None] * free_resolvent_kernel(lam, bs.nodes[:, None], ys[None, :], sign)
    return R0 - left @ np.linalg.solve(M, right)


# --------------------------------------------------------------------------
# spectral densities
# --------------------------------------------------------------------------

class FreeDensity:
    """Plane waves exp(+-i lam x)."""

    def states(self, lam, points):
        phase = lam[:, None, None] * np.array([1.0, -1.0])[None, :, None] * points[None, None, :]
        return np.exp(1j * phase)


class ScatteringDensity:
    """Scattering states of H = d^4 + V with per-node caching of M^-(lam)^-1 v e_k.

    Double-precision solves are used unless M is ill-conditioned (> STATE_COND) on
    a small support, in which case the solve and the state evaluation run in mpmath.
    """

    def __init__(self, sample, precision="auto"):
        self.bs = BirmanSchwinger(sample)
        self.precision = precision
        self._cache = {}
        self.extended_nodes = 0

    def _solve(self, lam):
        bs = self.bs
        rhs = bs.w[:, None] * np.exp(1j * lam * np.outer(bs.nodes, [1.0, -1.0]))
        M = bs.matrix(lam, -1)
        small = bs.size <= EXTENDED_MAX_SUPPORT
        use_mp = self.precision == "extended" and small
        if self.precision == "auto" and small:
            use_mp = np.linalg.cond(M) > STATE_COND
        if not use_mp:
            try:
                return np.linalg.solve(M, rhs)
            except np.linalg.LinAlgError:
                raise SingularOperatorError(f"M^- singular at lam={lam}") from None
        dps = extended_dps(lam)
        with mp.workdps(dps):
            Mm = bs.matrix_mp(lam, -1, dps)
            lam_m = mp.mpf(lam)
            g = mp.matrix(bs.size, 2)
            for c, k in enumerate((1, -1)):
                b = mp.matrix([mp.mpf(float(w)) * mp.expj(k * lam_m * mp.mpf(float(z)))
                               for w, z in zip(bs.w, bs.nodes)])
                col = mp.lu_solve(Mm, b)
                for j in range(bs.size):
                    g[j, c] = col[j]
        self.extended_nodes += 1
        return ("mp", dps, g)

    def _g(self, lam):
        key = float(lam)
        if key not in self._cache:
            self._cache[key] = self._solve(key)
        return self._cache[key]

    def _states_mp(self, lam, dps, g, points):
        bs = self.bs
        out = np.empty((2, points.size), dtype=complex)
        with mp.workdps(dps):
            lam_m = mp.mpf(lam)
            scale = 1 / (4 * lam_m**3)
            wz = [(mp.mpf(float(w)), mp.mpf(float(z))) for w, z in zip(bs.w, bs.nodes)]
            for p, x in enumerate(points):
                xm = mp.mpf(float(x))
                kern = []
                for w, z in wz:
                    s = lam_m * abs(xm - z)
                    kern.append(w * (-1j * mp.expj(-s) - mp.exp(-s)) * scale)
                for c, k in enumerate((1, -1)):
                    acc = mp.expj(k * lam_m * xm)
                    for j, kv in enumerate(kern):
                        acc -= kv * g[j, c]
                    out[c, p] = complex(acc)
        return out

    def _interpolated(self, lam):
        """Solutions on a sorted node chunk from solves at Chebyshev points.

        The solutions oscillate only on the scale of the support diameter, far
        slower than the time and distance phases that set the node density.
        Returns None when the chunk is too short to gain, a Chebyshev solve needs
        extended precision, or the spot checks against direct solves fail.
        """
        a, b = float(lam[0]), float(lam[-1])
        half = 0.5 * (b - a)
        span = float(np.ptp(self.bs.nodes))
        nc = 24 + math.ceil(half * span)
        checks = np.unique(np.linspace(0, lam.size - 1, 5).round().astype(int)[1:-1])
        while 2 * nc <= lam.size:
            k = np.arange(nc)
            cheb = np.cos((2 * k + 1) * np.pi / (2 * nc))
            bary = (-1.0) ** k * np.sin((2 * k + 1) * np.pi / (2 * nc))
            coarse = [self._solve(0.5 * (a + b) + half * c) for c in cheb]
            if any(isinstance(g, tuple) for g in coarse):
                return None
            G = np.stack(coarse)
            u = (lam - 0.5 * (a + b)) / half if half > 0 else np.zeros_like(lam)
            diff = u[:, None] - cheb[None, :]
            hit = diff == 0
            diff[hit] = 1.0
            B = bary / diff
            B[hit.any(axis=1)] = hit[hit.any(axis=1)]
            B /= B.sum(axis=1, keepdims=True)
            out = np.einsum("qc,csk->qsk", B, G)
            scale = np.abs(G).max()
            err = max(np.abs(out[i] - self._solve(float(lam[i]))).max() for i in checks)
            if err <= INTERP_TOL * scale:
                return out
            nc *= 2
        return None

    def states(self, lam, points, chunk=64):
        bs = self.bs
        out = np.empty((lam.size, 2, points.size), dtype=complex)
        interp = None
        if lam.size >= INTERP_MIN_NODES and np.all(np.diff(lam) > 0):
            interp = self._interpolated(lam)
        sols = list(interp) if interp is not None else [self._g(x) for x in lam]
        plain = [i for i, s in enumerate(sols) if not isinstance(s, tuple)]
        dist = np.abs(points[:, None] - bs.nodes[None, :])
        for start in range(0, len(plain), chunk):
            idx = plain[start:start + chunk]
            lq = lam[idx]
            G = np.stack([sols[i] for i in idx])  # (q, S, 2)
            R0 = F(-1, lq[:, None, None] * dist[None]) / (4.0 * lq[:, None, None] ** 3)
            corr = np.einsum("qps,qsk->qkp", R0, bs.w[None, :, None] * G)
            free = np.exp(1j * lq[:, None, None] * np.array([1.0, -1.0])[None, :, None] * points)
            out[idx] = free - corr
        for i, s in enumerate(sols):
            if isinstance(s, tuple):
                out[i] = self._states_mp(lam[i], s[1], s[2], points)
        return out


def density_for(sample, precision="auto"):
    if sample is None or sample.is_zero:
        return FreeDensity()
    return ScatteringDensity(sample, precision)


# --------------------------------------------------------------------------
# lam-quadrature shared by a set of times
# --------------------------------------------------------------------------

def _omega(lam, m):
    return np.sqrt(lam**4 + m * m)


def _time_profile(t, w, kind, ell):
    if kind == "cos":
        return np.cos(t * w) * w**ell
    if kind == "sin_over":
        return np.sin(t * w) / w
    if kind == "unified_exp":
        return np.exp(-1j * t * w) * w**ell
    raise ValueError(f"unknown kind {kind!r}")


def _round_nodes(n):
    return n if n <= 64 else 64 * -(-n // 64)


@dataclass
class _Interval:
    a: float
    b: float
    j: int  # dyadic index: interval lies in [2^(j-1), 2^j] (head: j = j_lo)
    n: int = 0
    nodes: np.ndarray = None
    weights: np.ndarray = None


class StoneRule:
    """Gauss-Legendre nodes on dyadic intervals of the lam axis for a set of times.

    For the low cutoff the rule stops at the top of the chi_1 band.  Otherwise
    each time gets its own top index, found by summing the free pieces until two
    consecutive pieces fall below rel_tol of the partial sum (beyond the
    stationary scale).  Node counts follow the phase range of the largest time
    that uses each interval, checked by node doubling on the free integrand.
    """

    def __init__(self, m, cutoff, cutoff_spec, times, r_max, rel_tol=1e-6,
                 max_nodes=200_000, lam_cap=2.0**14):
        if cutoff not in CUTOFFS:
            raise ValueError(f"cutoff must be one of {CUTOFFS}")
        if cutoff != "full" and cutoff_spec is None:
            raise ConfigError("low/high cutoffs need a CutoffSpec")
        self.m, self.cutoff, self.spec = float(m), cutoff, cutoff_spec
        self.times = np.abs(np.asarray(times, dtype=float))
        if np.any(self.times == 0):
            raise ValueError("times must be nonzero")
        self.r_max = float(r_max)
        self.rel_tol, self.max_nodes, self.lam_cap = rel_tol, max_nodes, lam_cap
        self._build()

    # -- helpers ----------------------------------------------------------

    def _cut_weight(self, lam):
        if self.cutoff == "full":
            return np.ones_like(lam)
        return self.spec.lifted(self.cutoff, lam)

    def _count(self, a, b, t):
        w = _omega(np.array([a, b]), self.m)
        span = t * (w[1] - w[0]) + self.r_max * (b - a)
        return max(32, 4 * math.ceil(span / math.pi))

    def _free_piece(self, a, b, t, n, top=None):
        """Free integral over [a, b] at (t, r in {0, r_max/4, r_max/2, r_max}), cos kind."""
        lam, wq = gl_nodes(a, b, n)
        weight = wq * self._cut_weight(lam) * (1.0 if top is None else phi(lam / top))
        r = self.r_max * np.array([0.0, 0.25, 0.5, 1.0])
        g = np.cos(t * _omega(lam, self.m)) * weight
        return (np.cos(np.outer(r, lam)) @ g) / np.pi, np.abs(g).sum() / np.pi

    def _edges(self):
        lo_band, hi_band = self.spec.band if self.spec is not None else (None, None)
        return [e for e in (lo_band, hi_band) if e is not None]

    def _split(self, a, b, j):
        cuts = [e for e in self._edges() if a < e < b]
        pts = [a, *cuts, b]
        return [_Interval(u, v, j) for u, v in zip(pts, pts[1:])]

    # -- construction -----------------------------------------------------

    def _build(self):
        t_hi = self.times.max()
        if self.cutoff == "low":
            lam_top = self.spec.band[1]
            j_top = math.ceil(math.log2(lam_top))
            j_lo = j_top - 6
            self.j_top_by_time = {t: j_top for t in self.times}
            intervals = self._split(0.0, 2.0**j_lo, j_lo)
            for j in range(j_lo + 1, j_top + 1):
                intervals += self._split(2.0 ** (j - 1), min(2.0**j, lam_top), j)
            intervals = [iv for iv in intervals if iv.a < lam_top]
        else:
            if self.cutoff == "high":
                start = self.spec.band[0]
                j_lo = math.floor(math.log2(start))
                intervals_head = self._split(start, 2.0 ** (j_lo + 1), j_lo + 1)
                j_first = j_lo + 1
            else:
                j_lo = math.floor(math.log2(min(1.0, t_hi**-0.5))) - 3
                intervals_head = self._split(0.0, 2.0**j_lo, j_lo)
                j_first = j_lo
            self.j_top_by_time = {t: self._find_top(t, j_first, intervals_head)
                                  for t in np.unique(self.times)}
            j_max = max(self.j_top_by_time.values())
            intervals = list(intervals_head)
            for j in range(j_first + 1, j_max + 1):
                intervals += self._split(2.0 ** (j - 1), 2.0**j, j)
        self.intervals = intervals
        for iv in intervals:
            users = [t for t in self.times if self.j_top_by_time[t] >= iv.j]
            t_use = max(users) if users else t_hi
            iv.n = self._verified_count(iv, t_use)
            iv.nodes, iv.weights = gl_nodes(iv.a, iv.b, iv.n)
        self.nodes = np.concatenate([iv.nodes for iv in intervals])
        self.gl_weights = np.concatenate([iv.weights for iv in intervals])
        self.index = np.concatenate([np.full(iv.n, iv.j) for iv in intervals])
        self.cut = self._cut_weight(self.nodes)

    def _verified_count(self, iv, t):
        n = _round_nodes(self._count(iv.a, iv.b, t))
        while True:
            coarse, scale = self._free_piece(iv.a, iv.b, t, n)
            fine, _ = self._free_piece(iv.a, iv.b, t, 2 * n)
            if np.abs(fine - coarse).max() <= self.rel_tol * max(scale, 1e-300) * 1e-2:
                return n
            n *= 2
            if n > self.max_nodes:
                raise QuadratureError(f"lam interval [{iv.a:.4g}, {iv.b:.4g}] unresolved at t={t}")

    def _stationary_lam(self, t):
        """Largest lam where t * omega'(lam) = r_max (omega' = 2 lam^3 / omega)."""
        target = self.r_max / t
        lam = max(target / 2.0, 1e-12)
        for _ in range(60):  # fixed point on 2 lam^3 / omega = target
            lam = (target * _omega(lam, self.m) / 2.0) ** (1.0 / 3.0)
        return lam

    def _find_top(self, t, j_first, head):
        partial = np.zeros(4)
        for iv in head:
            val, _ = self._free_piece(iv.a, iv.b, t, _round_nodes(self._count(iv.a, iv.b, t)))
            partial += val
        lam_star = self._stationary_lam(t)
        quiet = 0
        j = j_first
        while True:
            j += 1
            if 2.0**j > self.lam_cap:
                raise QuadratureError(f"dyadic tail not converging below lam={self.lam_cap:g} (t={t})")
            # piece N = j: (1 - phi(lam/2^(j-1))) on I_(j-1) and phi(lam/2^j) on I_j
            piece = np.zeros(4)
            for iv in self._split(2.0 ** (j - 2), 2.0 ** (j - 1), j - 1):
                n = _round_nodes(self._count(iv.a, iv.b, t))
                full_val, _ = self._free_piece(iv.a, iv.b, t, n)
                low_val, _ = self._free_piece(iv.a, iv.b, t, n, top=2.0 ** (j - 1))
                piece += full_val - low_val
            for iv in self._split(2.0 ** (j - 1), 2.0**j, j):
                val, _ = self._free_piece(iv.a, iv.b, t, _round_nodes(self._count(iv.a, iv.b, t)),
                                          top=2.0**j)
                piece += val
            partial += piece
            small = np.abs(piece).max() < self.rel_tol * np.abs(partial).max()
            quiet = quiet + 1 if small else 0
            if quiet >= 2 and 2.0 ** (j - 2) > 2.0 * lam_star:
                return j

    # -- use --------------------------------------------------------------

    def weights_for(self, t):
        """Weights of all nodes at time t (zero beyond the time's top index)."""
        j_top = self.j_top_by_time[abs(t)]
        w = np.where(self.index <= j_top, self.gl_weights * self.cut, 0.0)
        if self.cutoff != "low":
            w = w * phi(self.nodes / 2.0**j_top)
        return w

    @property
    def size(self):
        return self.nodes.size


# --------------------------------------------------------------------------
# Stone kernels
# --------------------------------------------------------------------------

class StoneKernels:
    """Kernels at several times sharing one rule; states are streamed in node chunks."""

    def __init__(self, density, rule, xs, ys, chunk=1024):
        self.density, self.rule, self.chunk = density, rule, chunk
        self.xs, self.ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        self._same = self.xs.shape == self.ys.shape and np.array_equal(self.xs, self.ys)

    def evaluate(self, times, kind="cos", ell=0):
        """List of kernel arrays, one per time."""
        rule = self.rule
        if kind != "sin_over" and ell < 0 and rule.m == 0:
            raise ValueError("negative ell needs m != 0 (omega^ell is not integrable at 0)")
        times = np.atleast_1d(np.asarray(times, dtype=float))
        W = np.stack([rule.weights_for(t) for t in times])
        omega = _omega(rule.nodes, rule.m)
        nx, ny = self.xs.size, self.ys.size
        acc = np.zeros((times.size, nx * ny), dtype=complex)
        for start in range(0, rule.size, self.chunk):
            sl = slice(start, start + self.chunk)
            used = np.any(W[:, sl] != 0, axis=0)
            if not used.any():
                continue
            lam = rule.nodes[sl][used]
            px = self.density.states(lam, self.xs)
            py = px if self._same else self.density.states(lam, self.ys)
            S = np.matmul(px.transpose(0, 2, 1), py.conj()).reshape(lam.size, -1)
            prof = np.stack([_time_profile(t, omega[sl][used], kind, ell) for t in times])
            acc += (W[:, sl][:, used] * prof / (2.0 * np.pi)) @ S
        out = []
        for A in acc.reshape(times.size, nx, ny):
            if kind == "unified_exp":
                out.append(A)
                continue
            if np.abs(A.imag).max() > 1e-8 * np.abs(A).max() + 1e-300:
                raise NumericalError("Stone integrand not real: imaginary residue above 1e-8")
            out.append(A.real)
        return out

    def values(self, t, kind="cos", ell=0):
        return self.evaluate([t], kind, ell)[0]


def _check_kind(kind, cutoff):
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    if cutoff not in CUTOFFS:
        raise ValueError(f"cutoff must be one of {CUTOFFS}")


def _r_max(xs, ys):
    return float(np.abs(xs).max() + np.abs(ys).max())


def stone_kernel(sample, t, m=0.0, ell=0, kind="cos", cutoff="full", xs=None, ys=None,
                 cutoff_spec=None, rel_tol=1e-6, density=None):
    """Stone-route kernel on xs x ys.  kind='sin_over' with m=0 goes through the
    time integral of cos kernels."""
    _check_kind(kind, cutoff)
    if t == 0:
        raise ValueError("t must be nonzero")
    xs, ys = _default_points(sample, xs, ys)
    if kind == "sin_over" and m == 0:
        res = sin_over_sqrt_by_time_integral(sample, [abs(t)], xs, ys, cutoff, cutoff_spec,
                                             rel_tol, density)[0]
        # sin(t w)/w is odd in t
        return replace(res, t=float(t), values=res.values if t > 0 else -res.values)
    density = density or density_for(sample)
    rule = StoneRule(m, cutoff, cutoff_spec, [t], _r_max(xs, ys), rel_tol)
    vals = StoneKernels(density, rule, xs, ys).values(abs(t), kind, ell)
    if kind == "sin_over" and t < 0:
        vals = -vals
    if kind == "unified_exp" and t < 0:
        # e^{+i|t| omega} = conj of e^{-i|t| omega} for a real spectral density
        vals = vals.conj()
    return KernelSlice(float(t), float(m), ell, kind, cutoff, xs, ys, vals, "stone")


def _default_points(sample, xs, ys):
    if xs is None:
        L = sample.grid.L if sample is not None else 8.0
        xs = np.linspace(-L / 4, L / 4, 33)
    ys = xs if ys is None else ys
    return np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)


def _time_grid(s_lo, s_hi, r_max, omega_cut, per_decade=64):
    """Trapezoid nodes on [s_lo, s_hi]: at least per_decade per decade and at least
    16 per local period of the cos kernel (frequency r^2 / 4s^2 + omega_cut)."""
    ratio = 10.0 ** (1.0 / per_decade) - 1.0
    s = [s_lo]
    while s[-1] < s_hi:
        cur = s[-1]
        freq = r_max**2 / (4.0 * cur * cur) + omega_cut
        step = cur * ratio if freq == 0 else min(cur * ratio, 2.0 * math.pi / (16.0 * freq))
        s.append(min(cur + step, s_hi))
    return np.array(s)


def sin_over_sqrt_by_time_integral(sample, t_list, xs=None, ys=None, cutoff="full",
                                   cutoff_spec=None, rel_tol=1e-6, density=None, head=None,
                                   batch=64):
    """sin(t sqrt H)/sqrt H P_ac = (1/2) int_{-t}^{t} cos(s sqrt H) P_ac ds for m = 0.

    cos(s sqrt H) is even in s, so this is the integral over [0, t].  The head [0, s0] is taken from the Stone sine formula (its integrand sin(s lam^2) /
    lam^2 is bounded); [s0, t] is a trapezoid sum over cos kernels.
    """
    xs, ys = _default_points(sample, xs, ys)
    t_list = np.sort(np.abs(np.asarray(t_list, dtype=float)))
    if np.any(t_list == 0):
        raise ValueError("t must be nonzero")
    s0 = head or min(1.0, t_list[0] / 4.0)
    r_max = _r_max(xs, ys)
    omega_cut = math.sqrt(2 * cutoff_spec.lambda0) if cutoff == "low" else 0.0
    grid = np.union1d(_time_grid(s0, t_list[-1], r_max, omega_cut), t_list)
    density = density or density_for(sample)
    rule = StoneRule(0.0, cutoff, cutoff_spec, grid, r_max, rel_tol)
    kern = StoneKernels(density, rule, xs, ys)
    total = kern.values(s0, "sin_over")
    prev_s, prev = s0, kern.values(s0, "cos")
    out = []
    wanted = set(t_list.tolist())
    for start in range(1, grid.size, batch):
        block = grid[start:start + batch]
        for s, cur in zip(block, kern.evaluate(block, "cos")):
            total = total + 0.5 * (s - prev_s) * (cur + prev)
            prev_s, prev = s, cur
            if s in wanted:
                out.append(KernelSlice(float(s), 0.0, 0, "sin_over", cutoff, xs, ys, total.copy(),
                                       "stone"))
    return out


# --------------------------------------------------------------------------
# decay curves and fits
# --------------------------------------------------------------------------

def dispersive_radius(t, m, kind, cutoff, base):
    """Half-width of the sup-norm subgrid: covers where the kernel peaks at time t.

    The peak of |x - y| moves like t^(1/2) (m = 0), t^(1/4) (m != 0, low energy)
    or t (m != 0, high energy); sin/sqrt(H) kernels peak on the diagonal.
    """
    t = abs(t)
    if kind == "sin_over":
        return base
    if m == 0:
        return max(base, 1.5 * math.sqrt(t))
    if cutoff == "low":
        return max(base, 2.0 * t**0.25)
    return max(base, 2.0 * t)


def subgrid_for(t, m, kind, cutoff, base, points=33):
    R = dispersive_radius(t, m, kind, cutoff, base)
    xs = np.linspace(-R, R, points)
    return xs, xs


def envelope_times(t, m, kind, samples=8):
    """For m != 0 the kernels carry the fast factor exp(-i t m); sampling one period
    2 pi / m after t and keeping the largest sup-norm measures the envelope."""
    if m == 0 or kind == "sin_over":
        return np.array([t])
    period = 2.0 * math.pi / abs(m)
    return t + period * np.arange(samples) / samples


def decay_curve(sample, m, ell, kind, cutoff, t_list, cutoff_spec=None, base_radius=None,
                points=33, rel_tol=1e-6, envelope=True, route="stone", density=None):
    """Sup-norm of the kernel over a subgrid (including x = y = 0 and the diagonal)
    at each t.  Returns a DecayCurve."""
    _check_kind(kind, cutoff)
    t_list = np.sort(np.abs(np.asarray(t_list, dtype=float)))
    L = sample.grid.L if sample is not None else 15.0
    base = base_radius if base_radius is not None else L / 4
    settings = dict(m=m, ell=ell, kind=kind, cutoff=cutoff, route=route, points=points,
                    envelope=bool(envelope), base_radius=base, rel_tol=rel_tol,
                    lambda0=getattr(cutoff_spec, "lambda0", None))
    if route == "spectral":
        return _decay_curve_spectral(sample, m, ell, kind, cutoff, t_list, cutoff_spec,
                                     base, points, envelope, settings)
    density = density or density_for(sample)
    if kind == "sin_over" and m == 0:
        xs, ys = subgrid_for(t_list[-1], m, kind, cutoff, base, points)
        slices = sin_over_sqrt_by_time_integral(sample, t_list, xs, ys, cutoff, cutoff_spec,
                                                rel_tol, density)
        return DecayCurve(t_list, np.array([s.supnorm for s in slices]), settings)
    sup = []
    for t in t_list:
        times = envelope_times(t, m, kind) if envelope else np.array([t])
        xs, ys = subgrid_for(t, m, kind, cutoff, base, points)
        rule = StoneRule(m, cutoff, cutoff_spec, times, _r_max(xs, ys), rel_tol)
        kern = StoneKernels(density, rule, xs, ys)
        sup.append(max(np.abs(K).max() for K in kern.evaluate(times, kind, ell)))
        log.info("t=%g: sup=%.6g (%d lam nodes)", t, sup[-1], rule.size)
    return DecayCurve(t_list, np.array(sup), settings)


def _decay_curve_spectral(sample, m, ell, kind, cutoff, t_list, cutoff_spec, base, points,
                          envelope, settings):
    grid = sample.grid
    sd = eigendecompose(build_hamiltonian(grid, sample, m))
    sd = sd.with_bound_states(detect_bound_states(sd))
    t_max = validity_window(grid, spectral_lam_max(grid, cutoff_spec, cutoff))
    if t_list[-1] > t_max:
        raise ValidityWindowError(f"t={t_list[-1]} beyond validity window {t_max:.4g}")
    sup = []
    for t in t_list:
        R = dispersive_radius(t, m, kind, cutoff, base)
        idx = np.flatnonzero(np.abs(grid.x) <= R)
        idx = idx[np.linspace(0, idx.size - 1, min(points, idx.size)).round().astype(int)]
        times = envelope_times(t, m, kind) if envelope else [t]
        sup.append(max(propagate_spectral(sd, s, m, kind, ell, cutoff_spec, cutoff, idx, idx).supnorm
                       for s in times))
    return DecayCurve(t_list, np.array(sup), settings)


def fit_exponent(curve, window=None, min_points=8, min_decades=1.5):
    """Least-squares slope of log(sup-norm) against log(t) inside the window."""
    t, y = np.asarray(curve.t, dtype=float), np.asarray(curve.supnorm, dtype=float)
    lo, hi = window if window is not None else (t.min(), t.max())
    sel = (t >= lo) & (t <= hi)
    if sel.sum() < min_points:
        raise ValueError(f"need at least {min_points} points in the fit window, got {sel.sum()}")
    if np.any(y[sel] <= 0):
        raise ValueError("sup-norms must be positive")
    if math.log10(t[sel].max() / t[sel].min()) < min_decades - 1e-9:
        raise ValueError(f"fit window must span at least {min_decades} decades")
    res = stats.linregress(np.log(t[sel]), np.log(y[sel]))
    return DecayFit(float(res.slope), float(res.intercept), float(res.stderr),
                    (float(t[sel].min()), float(t[sel].max())), int(sel.sum()))


# --------------------------------------------------------------------------
# two-route comparison
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CrossValidation:
    discrepancy: float
    stone: KernelSlice
    spectral: KernelSlice
    lambda0: float
    details: dict = field(default_factory=dict)


def crossvalidate(sample, t, m=0.0, kind="cos", cutoff_spec=None, points=33, rel_tol=1e-7,
                  floor=1e-12, images=4):
    """Max relative difference between the Stone and spectral kernels with the low
    cutoff, on grid nodes |x| <= L/4.

    The spectral route lives on the 2L-periodic box, so the Stone kernel is summed
    over the translates y + 2Lp, |p| <= images (method of images); the
    unperiodized difference is reported in details["line_discrepancy"].
    lambda0 defaults to the largest 2^-k keeping t inside the spectral route's
    finite-box window L / (4 (2 lambda0)^(1/4)).
    """
    from .model import CutoffSpec

    grid = sample.grid
    if cutoff_spec is None:
        k = 0
        while validity_window(grid, (2.0 * 2.0**-k) ** 0.25) < abs(t):
            k += 1
        cutoff_spec = CutoffSpec(2.0**-k)
    t_max = validity_window(grid, cutoff_spec.band[1])
    if abs(t) > t_max:
        raise ValidityWindowError(f"t={t} outside the validity window {t_max:.4g}")
    sd = eigendecompose(build_hamiltonian(grid, sample, m))
    sd = sd.with_bound_states(detect_bound_states(sd))
    idx = np.flatnonzero(np.abs(grid.x) <= grid.L / 4)
    idx = idx[np.unique(np.linspace(0, idx.size - 1, min(points, idx.size)).round().astype(int))]
    spec_slice = propagate_spectral(sd, t, m, kind, 0, cutoff_spec, "low", idx, idx)
    xs = grid.x[idx]
    shifts = 2.0 * grid.L * np.arange(-images, images + 1)
    ys = (xs[None, :] + shifts[:, None]).ravel()
    wide = stone_kernel(sample, t, m, 0, kind, "low", xs, ys, cutoff_spec, rel_tol)
    blocks = wide.values.reshape(xs.size, shifts.size, xs.size)
    line = blocks[:, images, :]
    torus = blocks.sum(axis=1)
    scale = np.abs(spec_slice.values).max() + floor
    stone = replace(wide, ys=xs, values=torus)
    return CrossValidation(
        float(np.abs(torus - spec_slice.values).max() / scale), stone, spec_slice,
        cutoff_spec.lambda0,
        {"t_max": t_max, "bound_states": [int(i) for i in sd.bound_state_indices], "images": images,
         "line_discrepancy": float(np.abs(line - spec_slice.values).max() / scale)})
