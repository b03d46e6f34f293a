"""Zero-energy analysis: T0 = U + v G0 v, moment projectors, resonance
classification, the Birman-Schwinger matrix M(lam) = U + v R0(lam^4) v and
probes of its low-energy behaviour.

Everything acts on the support of V (nodes with v > 0) in symmetrised
coordinates: a kernel K becomes the matrix sqrt(h) K(x_i, x_j) sqrt(h).
"""

import logging
import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np

from .errors import ConfigError, NumericalError, SingularOperatorError
from .freekernel import F, F_tilde, G0_kernel

log = logging.getLogger(__name__)

CLASSES = ("Regular", "FirstKind", "SecondKind")
# double-precision solves above this condition number are redone in mpmath
EXTENDED_COND = 1e10
EXTENDED_MAX_SUPPORT = 200


@dataclass(frozen=True, eq=False)
class NystromOperator:
    """Symmetrised Nystrom matrix of an integral operator restricted to the nodes."""

    matrix: np.ndarray
    nodes: np.ndarray

    @property
    def norm(self):
        return float(np.linalg.norm(self.matrix, 2))


def _require_potential(sample):
    if sample.is_zero:
        raise ConfigError("zero potential: Birman-Schwinger objects are undefined")


def _weights(sample):
    S = sample.support
    return S, sample.grid.x[S], np.sqrt(sample.grid.h) * sample.v[S], sample.U[S]


def build_T0(sample, grid=None):
    if grid is not None and sample.grid != grid:
        raise ConfigError("sample and grid differ")
    S, z, w, U = _weights(sample)
    if not S.size:
        return NystromOperator(np.zeros((0, 0)), z)
    T = np.diag(U) + w[:, None] * G0_kernel(z[:, None], z[None, :]) * w[None, :]
    return NystromOperator(T, z)


@dataclass(frozen=True, eq=False)
class MomentProjectors:
    """P, Q1, Q2, Q3~ plus orthonormal bases of their ranges (support coordinates)."""

    P: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    Q3: np.ndarray
    moments: np.ndarray  # columns sqrt(h) x^k v, k = 0, 1, 2
    bases: dict

    def by_order(self, alpha):
        return {0: np.eye(len(self.P)), 1: self.Q1, 2: self.Q2, 3: self.Q3}[alpha]


def moment_projectors(sample, grid=None, gram_cond_max=1e12):
    _require_potential(sample)
    S, z, w, _ = _weights(sample)
    if S.size < 4:
        raise NumericalError("support too small for three moment conditions")
    B = np.column_stack([w, z * w, z * z * w])
    gram = B.T @ B
    if np.linalg.cond(gram) > gram_cond_max:
        raise NumericalError("moment vectors v, xv, x^2 v numerically dependent")
    # complete QR: first k columns span the moments, the rest their complement
    Qfull, _ = np.linalg.qr(B, mode="complete")
    eye = np.eye(S.size)
    e0 = Qfull[:, :1]
    P = e0 @ e0.T
    Q1 = eye - P
    Q2 = eye - Qfull[:, :2] @ Qfull[:, :2].T
    Q3 = eye - Qfull[:, :3] @ Qfull[:, :3].T
    bases = {k: Qfull[:, k:] for k in (1, 2, 3)}
    return MomentProjectors(P, Q1, Q2, Q3, B, bases)


@dataclass(frozen=True, eq=False)
class ResonanceReport:
    q20_dim: int
    q3_dim: int
    singular_values_q20: np.ndarray
    singular_values_q3: np.ndarray
    rank_tol: float
    gap_q20: float
    gap_q3: float
    classification: str
    lambda0: float = None
    ambiguous: bool = False

    def as_dict(self):
        return {
            "classification": self.classification,
            "q20_dim": self.q20_dim,
            "q3_dim": self.q3_dim,
            "rank_tol": self.rank_tol,
            "gap_q20": self.gap_q20,
            "gap_q3": self.gap_q3,
            "ambiguous": self.ambiguous,
            "lambda0": self.lambda0,
            "singular_values_q20": self.singular_values_q20.tolist(),
            "singular_values_q3": self.singular_values_q3.tolist(),
        }


def _null_dim(A, rank_tol):
    """Null dimension of A (acting on its columns) with the gap ratio at the threshold."""
    sv = np.linalg.svd(A, compute_uv=False)
    # a wide matrix has forced null directions beyond its rank
    n_cols = A.shape[1]
    sv = np.concatenate([sv, np.zeros(max(0, n_cols - sv.size))])
    tau = rank_tol * sv.max()
    below, above = sv[sv < tau], sv[sv >= tau]
    lo = below.max() if below.size else tau
    hi = above.min() if above.size else tau
    gap = hi / lo if lo > 0 else np.inf
    return int(below.size), sv, float(gap)


def compute_resonance_subspaces(T0, projectors, rank_tol=1e-8, lambda0=None):
    T = T0.matrix
    B1, B2, B3 = (projectors.bases[k] for k in (1, 2, 3))
    q20, sv20, gap20 = _null_dim(B2.T @ T @ B2, rank_tol)
    q3, sv3, gap3 = _null_dim(B1.T @ T @ B3, rank_tol)
    if q20 == 0:
        label = "Regular"
    elif q3 == 0:
        label = "FirstKind"
    else:
        label = "SecondKind"
    ambiguous = min(gap20, gap3) < 10.0 or q3 > q20
    if ambiguous:
        log.warning("resonance rank call ambiguous: gaps %.3g / %.3g, dims %d / %d",
                    gap20, gap3, q20, q3)
    return ResonanceReport(q20, q3, sv20, sv3, rank_tol, gap20, gap3, label, lambda0, ambiguous)


def classify(sample, rank_tol=1e-8, lambda0=None):
    return compute_resonance_subspaces(build_T0(sample), moment_projectors(sample),
                                       rank_tol, lambda0)


# --------------------------------------------------------------------------
# Birman-Schwinger matrix
# --------------------------------------------------------------------------

def extended_dps(lam):
    """Working digits for mpmath solves: the O(1) part of M(lam) sits about
    3 log10(1/lam) digits below its lam^-3 leading part, and its inverse can cost as much again."""
    return 25 + 6 * max(0, math.ceil(-math.log10(lam)))


class BirmanSchwinger:
    """M^sign(lam) = U + sqrt(h) v R0^sign(lam^4) v sqrt(h) on the support of V."""

    def __init__(self, sample):
        _require_potential(sample)
        self.sample = sample
        self.support, self.nodes, self.w, self.U = _weights(sample)
        self.dist = np.abs(self.nodes[:, None] - self.nodes[None, :])
        # support nodes sit on the grid, so distances are integer multiples of h:
        # evaluate F once per multiple
        gap = np.abs(self.support[:, None] - self.support[None, :])
        self._level_index = gap
        self._levels = sample.grid.h * np.arange(gap.max() + 1 if gap.size else 0)
        self._ww = np.outer(self.w, self.w)

    @property
    def size(self):
        return self.nodes.size

    def matrix(self, lam, sign=1):
        if np.real(lam) <= 0:
            raise ValueError("lam must be positive")
        K = (F(sign, lam * self._levels) / (4.0 * lam**3))[self._level_index]
        M = self._ww * K
        M[np.diag_indices_from(M)] += self.U
        return M

    def matrix_mp(self, lam, sign=1, dps=None):
        dps = dps or extended_dps(lam)
        with mp.workdps(dps):
            lam_m = mp.mpf(lam)
            sg = 1 if sign in (1, "+") else -1
            w = [mp.mpf(float(x)) for x in self.w]
            z = [mp.mpf(float(x)) for x in self.nodes]
            n = self.size
            M = mp.matrix(n, n)
            scale = 1 / (4 * lam_m**3)
            for i in range(n):
                for j in range(i, n):
                    s = lam_m * abs(z[i] - z[j])
                    f = sg * 1j * mp.expj(sg * s) - mp.exp(-s)
                    val = w[i] * w[j] * f * scale
                    if i == j:
                        val += int(self.U[i])
                    M[i, j] = M[j, i] = val
        return M

    def condition(self, lam, sign=1):
        return float(np.linalg.cond(self.matrix(lam, sign)))

    def needs_extended(self, lam, sign=1, cond=None):
        cond = self.condition(lam, sign) if cond is None else cond
        return cond > EXTENDED_COND and self.size <= EXTENDED_MAX_SUPPORT

    def inverse_norm(self, lam, sign=1, precision="auto"):
        """(||M^-1||_2, working epsilon, ||M||_2)."""
        M = self.matrix(lam, sign)
        sv = np.linalg.svd(M, compute_uv=False)
        cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
        if precision == "double" or (precision == "auto" and not self.needs_extended(lam, sign, cond)):
            if not np.isfinite(cond):
                raise SingularOperatorError(f"M singular at lam={lam}")
            return 1.0 / sv[-1], np.finfo(float).eps, sv[0]
        dps = extended_dps(lam)
        with mp.workdps(dps):
            s = mp.svd_c(self.matrix_mp(lam, sign, dps), compute_uv=False)
            smin = min(s[i] for i in range(len(s)))
            smax = max(s[i] for i in range(len(s)))
            if smin == 0:
                raise SingularOperatorError(f"M singular at lam={lam}")
            return float(1 / smin), 10.0**-dps, float(smax)

    def solve(self, lam, sign, rhs, precision="auto"):
        """M^sign(lam)^-1 rhs for a (size, k) right-hand side block."""
        M = self.matrix(lam, sign)
        cond = np.linalg.cond(M)
        extended = precision == "extended" or (precision == "auto" and self.needs_extended(lam, sign, cond))
        if not extended:
            if not np.isfinite(cond) or cond > 1e15:
                raise SingularOperatorError(f"M ill-conditioned at lam={lam} (cond {cond:.2e})")
            return np.linalg.solve(M, rhs)
        dps = extended_dps(lam)
        with mp.workdps(dps):
            sol = mp.lu_solve(self.matrix_mp(lam, sign, dps), mp.matrix(np.asarray(rhs).tolist()))
            return np.array(sol.tolist(), dtype=complex).reshape(np.shape(rhs))


def build_M(sample, lam, sign=1):
    bs = BirmanSchwinger(sample)
    return NystromOperator(bs.matrix(lam, sign), bs.nodes)


def choose_lambda0(sample, cond_max=1e6, k_max=20):
    """Largest 2^-k such that M(lam) stays well conditioned for lam^4 in [lambda0, 2 lambda0]."""
    if sample.is_zero:
        return 1.0
    bs = BirmanSchwinger(sample)
    for k in range(k_max + 1):
        lambda0 = 2.0**-k
        energies = lambda0 * np.array([1.0, 1.5, 2.0])
        if all(bs.condition(e**0.25) < cond_max for e in energies):
            log.info("lambda0 = 2^-%d chosen (cond < %.0e on the band)", k, cond_max)
            return lambda0
    raise NumericalError("no lambda0 = 2^-k gives a well-conditioned band")


# --------------------------------------------------------------------------
# probes
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ProbeResult:
    lam: np.ndarray
    norms: np.ndarray
    slope: float
    stderr: float
    used: np.ndarray = field(default=None)

    def rows(self):
        return list(zip(self.lam.tolist(), self.norms.tolist()))


def _loglog_slope(lam, norms):
    coef, cov = np.polyfit(np.log(lam), np.log(norms), 1, cov=True) if lam.size > 2 else (
        np.polyfit(np.log(lam), np.log(norms), 1), np.zeros((2, 2)))
    return float(coef[0]), float(np.sqrt(cov[0, 0]))


def minv_blowup_probe(sample, lam_list, sign=1, precision="auto"):
    """||M(lam)^-1||_2 over lam_list and its log-log slope."""
    bs = BirmanSchwinger(sample)
    lam = np.sort(np.asarray(lam_list, dtype=float))
    norms, ceilings, kept = [], [], []
    for x in lam:
        try:
            nrm, eps, mnorm = bs.inverse_norm(x, sign, precision)
        except SingularOperatorError:
            log.warning("M singular at lam=%g, dropped", x)
            continue
        kept.append(x)
        norms.append(nrm)
        ceilings.append(1.0 / (eps * mnorm))
    lam, norms, ceilings = map(np.asarray, (kept, norms, ceilings))
    used = np.ones(lam.size, bool)
    # lam is ascending: the two smallest lam come first
    for i in range(min(2, lam.size)):
        if norms[i] * 10.0 >= ceilings[i]:
            used[i] = False
            log.info("lam=%g dropped: norm within 10x of round-off ceiling", lam[i])
    if used.sum() < 3:
        raise NumericalError("too few usable lam values for a slope")
    slope, err = _loglog_slope(lam[used], norms[used])
    return ProbeResult(lam, norms, slope, err, used)


def cancellation_operator(sample, alpha, lam, projectors=None, columns=None, sign=1):
    """Q_alpha v R0(lam^4) as a matrix from column points to the support.

    For alpha = 3 the kernel uses F~ = F + (1 +- i)s^2/2; the added quadratic is
    annihilated by Q_3 exactly, so the operator is the same.
    """
    S, z, w, _ = _weights(sample)
    proj = projectors or moment_projectors(sample)
    ys = cancellation_columns(lam) if columns is None else np.asarray(columns)
    f = F_tilde if alpha == 3 else F
    K = f(sign, lam * np.abs(z[:, None] - ys[None, :])) / (4.0 * lam**3)
    return proj.by_order(alpha) @ (w[:, None] * K)


def cancellation_columns(lam, reach=8.0, count=2001):
    """Column points |y| <= reach/lam: the kernel order in lam is attained at |y| ~ 1/lam."""
    return np.linspace(-reach / lam, reach / lam, count)


def cancellation_probe(sample, alpha, lam_list, sign=1):
    """Slope of the L^1 -> L^2 norm of Q_alpha v R0(lam^4) against lam (expected alpha - 3)."""
    if alpha not in (0, 1, 2, 3):
        raise ValueError("alpha must be 0, 1, 2 or 3")
    proj = moment_projectors(sample)
    Q = proj.by_order(alpha)
    for k in range(alpha):
        col = proj.moments[:, k]
        if np.linalg.norm(Q @ col) > 1e-10 * np.linalg.norm(col):
            raise NumericalError(f"Q_{alpha} does not annihilate x^{k} v")
    lam = np.sort(np.asarray(lam_list, dtype=float))
    norms = np.array([
        np.linalg.norm(cancellation_operator(sample, alpha, x, proj, sign=sign), axis=0).max()
        for x in lam
    ])
    slope, err = _loglog_slope(lam, norms)
    return ProbeResult(lam, norms, slope, err, np.ones(lam.size, bool))
