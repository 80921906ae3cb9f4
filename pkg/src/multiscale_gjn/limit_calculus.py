"""Closed-form objects of the multi-scale limit theorems.

Everything here is plain dense linear algebra on J x J matrices (J is small).
Station, pivot and block indices in the public functions are 1-based to match
the usual notation; arrays are 0-based internally.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import NotMMatrix, NotPSD, SingularBlock
from .network_model import ScaleRegime, solve_traffic

REGIMES = ("matching", "lowest", "block-matching", "block-lowest")

_SIGN_TOL = 1e-10
_COND_LIMIT = 1e13


def _solve(A, B, what):
    """LU solve that turns (near) singularity into :class:`SingularBlock`."""
    if A.size == 0:
        return np.zeros((0,) + np.shape(B)[1:])
    if np.linalg.cond(A) > _COND_LIMIT:
        raise SingularBlock(f"{what} is numerically singular")
    return scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), B)


# --------------------------------------------------------------------------
# w-matrix

def w_matrix(P):
    """Absorption-type probabilities of the routing chain.

    ``w[i, j]`` is the probability that the chain started at ``i`` visits
    ``j`` (at a step >= 1) before it exits or enters any of ``j+1..J``.

    Column ``j`` (1-based) is ``P[:, 0]`` for ``j = 1``; otherwise with
    ``x = (I - P_{j-1})^{-1} P_{[1:j-1], j}``, the rows ``1..j-1`` equal ``x``
    and rows ``j..J`` equal ``P_{[j:J], j} + P_{[j:J], [1:j-1]} x``. Here
    ``P_{j-1}`` is the leading ``(j-1) x (j-1)`` block.
    """
    P = np.asarray(P, dtype=float)
    J = P.shape[0]
    w = np.zeros((J, J))
    for j in range(J):
        if j == 0:
            w[:, 0] = P[:, 0]
            continue
        x = _solve(np.eye(j) - P[:j, :j], P[:j, j], f"I - P_{j}")
        w[:j, j] = x
        w[j:, j] = P[j:, j] + P[j:, :j] @ x
    return w


def w_from_R(R):
    """Entries ``w_ij`` with ``i <= j`` recovered from a reflection matrix.

    ``(w_1j .. w_{j-1,j}) = -R_{j,[1:j-1]} R_{j-1}^{-1}`` and
    ``w_jj = 1 - R_jj + R_{j,[1:j-1]} R_{j-1}^{-1} R_{[1:j-1],j}``.
    Entries below the diagonal are returned as 0.
    """
    R = np.asarray(R, dtype=float)
    J = R.shape[0]
    w = np.zeros((J, J))
    for j in range(J):
        if j == 0:
            w[0, 0] = 1.0 - R[0, 0]
            continue
        # row vector R_{j,[1:j-1]} R_{j-1}^{-1}, via the transposed system
        v = _solve(R[:j, :j].T, R[j, :j], f"R_{j}")
        w[:j, j] = -v
        w[j, j] = 1.0 - R[j, j] + v @ R[:j, j]
    return w


def u_vector(w, j):
    """``u = (w_1j, ..., w_{j-1,j}, 1, 0, ..., 0)`` for 1-based ``j``."""
    w = np.asarray(w, dtype=float)
    u = np.zeros(w.shape[0])
    u[: j - 1] = w[: j - 1, j - 1]
    u[j - 1] = 1.0
    return u


# --------------------------------------------------------------------------
# block Gaussian elimination

@dataclass(frozen=True)
class Elimination:
    """Result of eliminating the first ``k - 1`` columns below the pivot block.

    ``E @ R == G`` where ``G`` has zeros in rows ``k..J`` of columns
    ``1..k-1`` and its trailing block is the Schur complement.
    """

    k: int
    E: np.ndarray
    G: np.ndarray

    def trailing(self):
        """``G_{[k:J],[k:J]}``."""
        return self.G[self.k - 1:, self.k - 1:]


def eliminate(R, k):
    """Block Gaussian elimination of ``R`` at 1-based pivot ``k``.

    With ``A = R_{[1:k-1],[1:k-1]}``, ``B``, ``C``, ``D`` the other blocks,
    ``E = [[I, 0], [-C A^{-1}, I]]`` and ``G = [[A, B], [0, D - C A^{-1} B]]``.
    ``k = 1`` gives ``E = I`` and ``G = R``.
    """
    R = np.asarray(R, dtype=float)
    J = R.shape[0]
    if not 1 <= k <= J:
        raise ValueError(f"pivot {k} outside 1..{J}")
    m = k - 1
    E = np.eye(J)
    G = R.copy()
    if m:
        A, B, C, D = R[:m, :m], R[:m, m:], R[m:, :m], R[m:, m:]
        # C A^{-1} = (A^{-T} C^T)^T
        CAi = _solve(A.T, C.T, f"leading block of order {m}").T
        E[m:, :m] = -CAi
        G[m:, :m] = 0.0
        G[m:, m:] = D - CAi @ B
    return Elimination(k, E, G)


def is_m_matrix(A, tol=_SIGN_TOL):
    """Sign pattern plus nonnegative inverse (the non-singular M-matrix test)."""
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return True
    off = A - np.diag(np.diag(A))
    if np.any(np.diag(A) <= 0) or np.any(off > tol):
        return False
    if np.linalg.cond(A) > _COND_LIMIT:
        return False
    inv = scipy.linalg.lu_solve(scipy.linalg.lu_factor(A), np.eye(A.shape[0]))
    return bool(np.all(inv >= -tol * max(1.0, np.abs(inv).max())))


def require_m_matrix(A, what="matrix"):
    if not is_m_matrix(A):
        raise NotMMatrix(f"{what} is not a non-singular M-matrix")


# --------------------------------------------------------------------------
# covariance and variances

def gamma_matrix(P, alpha, lam, ce2, cs2):
    """Covariance of the driving Brownian motion from raw network quantities.

    ``Gamma_jk = alpha_j ce2_j d_jk + sum_i lam_i [P_ij (d_jk - P_ik)
    + cs2_i (d_ij - P_ij)(d_ik - P_ik)]``.
    """
    P = np.asarray(P, dtype=float)
    lam = np.asarray(lam, dtype=float)
    cs2 = np.asarray(cs2, dtype=float)
    J = P.shape[0]
    # routing part: sum_i lam_i (diag(P_i) - P_i P_i')
    routing = np.diag(lam @ P) - (P.T * lam) @ P
    M = np.eye(J) - P
    service = (M.T * (lam * cs2)) @ M
    G = np.diag(np.asarray(alpha, dtype=float) * np.asarray(ce2, dtype=float))
    G = G + routing + service
    asym = np.abs(G - G.T).max() if J else 0.0
    if asym > 1e-10:
        raise NotPSD(f"covariance asymmetry {asym:.3e}")
    return 0.5 * (G + G.T)


def covariance_gamma(spec, lam=None):
    """Covariance matrix of the network's driving Brownian motion."""
    if lam is None:
        lam = solve_traffic(spec)
    return gamma_matrix(spec.P, spec.alpha, lam, spec.ce2, spec.cs2)


def sigma2_from_parts(w, alpha, lam, ce2, cs2, j):
    """Three-part variance sum over ``i < j``, ``i = j`` and ``i > j``."""
    j0 = j - 1
    wc = w[:, j0]
    bern = wc * (1.0 - wc)
    lo, hi = slice(0, j0), slice(j0 + 1, None)
    s = np.sum(alpha[lo] * (wc[lo] ** 2 * ce2[lo] + bern[lo]))
    s += alpha[j0] * ce2[j0]
    s += np.sum(lam[hi] * (wc[hi] ** 2 * cs2[hi] + bern[hi]))
    s += lam[j0] * (cs2[j0] * (1.0 - wc[j0]) ** 2 + bern[j0])
    return float(s)


def sigma_theorem1(spec, j, lam=None, w=None):
    """Variance of the ``j``-th scalar limit, summed station by station."""
    if lam is None:
        lam = solve_traffic(spec)
    if w is None:
        w = w_matrix(spec.P)
    return sigma2_from_parts(w, spec.alpha, lam, spec.ce2, spec.cs2, j)


def sigma_uGu(spec, j, lam=None, w=None, Gamma=None):
    """Variance of the ``j``-th scalar limit as the quadratic form ``u' Gamma u``."""
    if w is None:
        w = w_matrix(spec.P)
    if Gamma is None:
        Gamma = covariance_gamma(spec, lam)
    u = u_vector(w, j)
    return float(u @ Gamma @ u)


def variance_identity_residuals(spec):
    """Relative gaps ``|sigma_theorem1 - sigma_uGu| / max(sigma_theorem1, 1e-30)``."""
    lam = solve_traffic(spec)
    w = w_matrix(spec.P)
    Gamma = covariance_gamma(spec, lam)
    out = []
    for j in range(1, spec.J + 1):
        a = sigma_theorem1(spec, j, lam, w)
        b = sigma_uGu(spec, j, lam, w, Gamma)
        out.append(abs(a - b) / max(a, 1e-30))
    return np.array(out)


# --------------------------------------------------------------------------
# limit descriptors

@dataclass(frozen=True)
class SrbmComponent:
    """One SRBM making up (part of) a limit process.

    ``stations`` lists the 1-based stations whose limits are the first
    ``len(stations)`` coordinates of this SRBM (the reporting mask).
    ``initial`` is a label: ``xi[a:b]`` names a slice of the limiting initial
    vector, ``0`` a zero start. Concrete vectors are supplied at simulation
    time through :meth:`initial_from`.
    """

    drift: np.ndarray
    covariance: np.ndarray
    reflection: np.ndarray
    stations: tuple
    initial: str
    initial_slice: tuple = None

    @property
    def dim(self):
        return len(self.drift)

    @property
    def report(self):
        return len(self.stations)

    def initial_from(self, xi):
        """Concrete initial state given the limiting initial vector ``xi``."""
        if self.initial_slice is None:
            return np.zeros(self.dim)
        lo, hi = self.initial_slice
        return np.asarray(xi, dtype=float)[lo:hi].copy()

    def to_json(self):
        return {
            "dimension": self.dim,
            "stations": list(self.stations),
            "initial": self.initial,
            "drift": np.asarray(self.drift).tolist(),
            "covariance": np.asarray(self.covariance).tolist(),
            "reflection": np.asarray(self.reflection).tolist(),
            "reported_coordinates": self.report,
        }


@dataclass(frozen=True)
class LimitDescriptor:
    regime: str
    components: tuple = field(default_factory=tuple)

    def to_json(self):
        return {"regime": self.regime,
                "components": [c.to_json() for c in self.components]}


def _check_regime(kind, regime):
    if kind not in REGIMES:
        raise ValueError(f"unknown regime '{kind}', expected one of {REGIMES}")
    if kind in ("matching", "lowest") and regime.K != regime.J:
        raise ValueError(f"regime '{kind}' needs singleton blocks; use "
                         f"'block-{kind}' for {regime.K} blocks")


def descriptor_from(R, Gamma, regime, kind):
    """Limit descriptor from the reflection matrix and covariance alone.

    This serves both the network limits (with ``R = I - P'``) and the limits of
    a multi-scaling SRBM family with arbitrary M-matrix ``R``.
    """
    R = np.asarray(R, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    J = R.shape[0]
    _check_regime(kind, regime)
    comps = []
    for k, ((lo, hi), b) in enumerate(zip(regime.blocks, regime.block_drifts)):
        a = lo - 1
        blk = slice(a, hi)
        b = np.asarray(b, dtype=float)
        el = eliminate(R, lo)
        EGE = el.E @ Gamma @ el.E.T
        EGE = 0.5 * (EGE + EGE.T)
        require_m_matrix(el.G[a:, a:], f"Schur complement at pivot {lo}")
        stations = tuple(range(lo, hi + 1))
        if kind in ("matching", "block-matching"):
            comps.append(SrbmComponent(
                drift=-el.G[blk, blk] @ b,
                covariance=EGE[blk, blk],
                reflection=el.G[blk, blk].copy(),
                stations=stations,
                initial=f"xi[{lo}:{hi}]",
                initial_slice=(a, hi),
            ))
        else:
            first = k == 0
            comps.append(SrbmComponent(
                drift=-el.G[a:, blk] @ b,
                covariance=EGE[a:, a:],
                reflection=el.G[a:, a:].copy(),
                stations=stations,
                initial=f"xi[1:{J}]" if first else "0",
                initial_slice=(0, J) if first else None,
            ))
    return LimitDescriptor(kind, tuple(comps))


def limit_descriptor(spec, kind="matching", regime=None):
    """Limit-process parameters of the network under the named regime.

    ``kind`` is ``matching``, ``lowest``, ``block-matching`` or
    ``block-lowest``. ``regime`` defaults to the spec's own scale regime.
    """
    regime = spec.regime if regime is None else regime
    return descriptor_from(spec.R, covariance_gamma(spec), regime, kind)


def conventional_srbm(R, Gamma, b):
    """Classical single-scale heavy-traffic SRBM parameters ``(-R b, Gamma, R)``."""
    R = np.asarray(R, dtype=float)
    return -R @ np.asarray(b, dtype=float), np.asarray(Gamma, dtype=float), R


def two_station_example(q12=0.5, q21=0.5, L21=0.3):
    """``R = [[1, -q12], [-q21, 1]]`` and ``Gamma = L L'`` with unit-diagonal ``L``."""
    R = np.array([[1.0, -q12], [-q21, 1.0]])
    L = np.array([[1.0, 0.0], [L21, 1.0]])
    return R, L @ L.T


def limits_report(spec):
    """Everything the ``limits`` command prints, as plain JSON types."""
    lam = solve_traffic(spec)
    w = w_matrix(spec.P)
    Gamma = covariance_gamma(spec, lam)
    J = spec.J
    out = {
        "lambda": lam.tolist(),
        "w": w.tolist(),
        "Gamma": Gamma.tolist(),
        "R": spec.R.tolist(),
        "sigma2_theorem": [sigma_theorem1(spec, j, lam, w) for j in range(1, J + 1)],
        "sigma2_quadratic": [sigma_uGu(spec, j, lam, w, Gamma)
                             for j in range(1, J + 1)],
        "variance_identity_residuals": variance_identity_residuals(spec).tolist(),
        "descriptors": {},
    }
    kinds = (("matching", "lowest") if spec.regime.K == J else ()) + \
        ("block-matching", "block-lowest")
    for kind in kinds:
        out["descriptors"][kind] = descriptor_from(spec.R, Gamma, spec.regime,
                                                   kind).to_json()
    return out


__all__ = [
    "Elimination", "LimitDescriptor", "REGIMES", "ScaleRegime", "SrbmComponent",
    "conventional_srbm", "covariance_gamma", "descriptor_from", "eliminate",
    "gamma_matrix", "is_m_matrix", "limit_descriptor", "limits_report",
    "require_m_matrix", "sigma2_from_parts", "sigma_theorem1", "sigma_uGu",
    "two_station_example", "u_vector", "variance_identity_residuals",
    "w_from_R", "w_matrix",
]
