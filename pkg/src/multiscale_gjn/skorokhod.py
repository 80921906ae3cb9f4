"""Skorokhod reflection on discretized paths.

Paths live on a grid ``t_0 = 0 < t_1 < ... < t_N``. The regulator is taken as
piecewise constant between grid points, which turns the reflection problem
into a running-maximum fixed point:

    y_j(t_n) = max(0, max_{l <= n} (-x_j(t_l) - sum_{k != j} R_jk y_k(t_l)) / R_jj)

In one dimension this is the classical explicit formula and needs a single
pass. For an M-matrix ``R`` the map is a contraction in the sup norm and the
iteration converges geometrically.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import NegativeStart, NoConvergence

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class PathGrid:
    """A vector-valued path sampled on a strictly increasing time grid.

    ``values`` has shape ``(N + 1, d)``.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if t.ndim != 1 or v.shape[0] != t.shape[0]:
            raise ValueError("times and values disagree in length")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("path values must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def d(self):
        return self.values.shape[1]

    def __len__(self):
        return self.times.shape[0]

    def coord(self, j):
        """Coordinate ``j`` (1-based) as a 1-d array."""
        return self.values[:, j - 1]

    def at(self, t):
        """Value at the last grid point ``<= t`` (right-continuous reading)."""
        i = np.searchsorted(self.times, t, side="right") - 1
        return self.values[max(i, 0)]


@dataclass(frozen=True)
class Reflection:
    """Output of the reflection map: ``z = x + R y``."""

    z: PathGrid
    y: PathGrid
    complementarity_residual: float
    iterations: int = 1


def kappa(R):
    """Largest absolute row sum of ``R``."""
    R = np.atleast_2d(np.asarray(R, dtype=float))
    return float(np.abs(R).sum(axis=1).max())


def _values(x):
    if isinstance(x, PathGrid):
        return x.times, x.values
    v = np.asarray(x, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return np.arange(v.shape[0], dtype=float), v


def complementarity(z, y):
    """``max_j sum_n z_j(t_n) (y_j(t_n) - y_j(t_{n-1}))`` along axis ``-2``."""
    dy = np.diff(y, axis=-2, prepend=0.0)
    return float(np.max(np.sum(np.abs(z) * dy, axis=-2), initial=0.0))


def _running_regulator(w):
    """``max(0, running max of w)`` along the time axis (axis ``-2``)."""
    return np.maximum(np.maximum.accumulate(w, axis=-2), 0.0)


def reflect_1d(x):
    """Exact one-dimensional reflection ``y = max(0, max_{m<=n} -x_m)``."""
    t, v = _values(x)
    if v.shape[1] != 1:
        raise ValueError("reflect_1d needs a one-dimensional path")
    if v[0, 0] < 0:
        raise NegativeStart(f"path starts at {v[0, 0]:.6g} < 0")
    y = _running_regulator(-v)
    z = v + y
    return Reflection(PathGrid(t, z), PathGrid(t, y), complementarity(z, y))


def reflect_batch(x, R, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Reflect a stack of paths at once.

    ``x`` has shape ``(..., N + 1, d)``. Returns ``(z, y, iterations)`` as
    arrays of the same shape. Starting points must be nonnegative (the check
    allows ``-1e-12`` of rounding).
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    x = np.asarray(x, dtype=float)
    d = R.shape[0]
    if x.shape[-1] != d:
        raise ValueError(f"path dimension {x.shape[-1]} does not match R ({d})")
    if np.any(x[..., 0, :] < -1e-12):
        raise NegativeStart("path starts outside the orthant")
    diag = np.diag(R).copy()
    if np.any(diag <= 0):
        raise ValueError("reflection matrix needs a positive diagonal")
    # normalized off-diagonal part: row j divided by R_jj
    Q = R / diag[:, None]
    np.fill_diagonal(Q, 0.0)
    xs = x / diag
    y = _running_regulator(-xs)
    if d == 1:
        return x + R[0, 0] * y, y, 1
    change = np.inf
    for it in range(2, max_iter + 1):
        y_new = _running_regulator(-xs - y @ Q.T)
        change = float(np.max(np.abs(y_new - y), initial=0.0))
        y = y_new
        if change <= tol:
            break
    else:
        raise NoConvergence(max_iter, change)
    z = x + y @ R.T
    return z, y, it


def reflect_md(x, R, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER):
    """Multi-dimensional reflection with M-matrix ``R`` by fixed-point iteration.

    Parameters
    ----------
    x : PathGrid or array of shape (N + 1, d)
        Driving path with ``x(0) >= 0``.
    R : array_like, (d, d)
        Reflection matrix with positive diagonal.
    tol, max_iter
        Stop once the sup-norm change of ``y`` is at most ``tol``; raise
        :class:`NoConvergence` after ``max_iter`` sweeps.
    """
    t, v = _values(x)
    z, y, it = reflect_batch(v, R, tol, max_iter)
    return Reflection(PathGrid(t, z), PathGrid(t, y), complementarity(z, y), it)


# --------------------------------------------------------------------------
# deterministic path families behind the two convergence lemmas

@dataclass
class LemmaScenario:
    """Deterministic path family indexed by ``r``.

    ``kind`` is ``negative`` (reflected path of ``u - v - m t``, which should
    vanish) or ``positive`` (regulator of ``u - v + a`` with scalar reflection
    ``c``, which should vanish). ``u`` and ``v`` are callables ``(t, r)``; the
    scalar families ``m`` or ``a`` are callables of ``r``.
    """

    kind: str
    u: Callable
    v: Callable
    scalar: Callable
    c: float = 1.0
    T: float = 1.0
    n: int = 2001
    r_grid: Sequence[float] = (0.3, 0.1, 0.03, 0.01)


def lemma_sup_norms(s):
    """Sup over ``[0, T]`` of the quantity each lemma sends to 0, per ``r``."""
    t = np.linspace(0.0, s.T, s.n)
    out = []
    for r in s.r_grid:
        base = np.asarray(s.u(t, r), dtype=float) - np.asarray(s.v(t, r), dtype=float)
        if s.kind == "negative":
            res = reflect_1d(base - s.scalar(r) * t)
            out.append(float(np.max(np.abs(res.z.values))))
        elif s.kind == "positive":
            res = reflect_md(base + s.scalar(r), [[s.c]])
            out.append(float(np.max(np.abs(res.y.values))))
        else:
            raise ValueError(f"unknown lemma kind '{s.kind}'")
    return out


def check_lemma_paths(scenario, atol=1e-12):
    """True when the sup norms are non-increasing along the ``r`` grid and
    either strictly smaller at the end or already zero."""
    sups = lemma_sup_norms(scenario)
    mono = all(b <= a + atol for a, b in zip(sups, sups[1:]))
    return bool(mono and (sups[-1] < sups[0] or sups[-1] <= atol))


def lipschitz_gaps(x, x2, R):
    """Sup-norm distances ``(|dx|, |dz|, |dy|)`` between two reflections."""
    a = reflect_md(x, R)
    b = reflect_md(x2, R)
    _, v1 = _values(x)
    _, v2 = _values(x2)
    return (float(np.abs(v1 - v2).max()),
            float(np.abs(a.z.values - b.z.values).max()),
            float(np.abs(a.y.values - b.y.values).max()))


def write_reflection_csv(refl, fh):
    """Dump a reflection as CSV with columns ``t, z_1..z_d, y_1..y_d``."""
    import csv

    d = refl.z.d
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["t"] + [f"z_{j}" for j in range(1, d + 1)]
               + [f"y_{j}" for j in range(1, d + 1)])
    for t, z, y in zip(refl.z.times, refl.z.values, refl.y.values):
        w.writerow([repr(float(t))] + [repr(float(a)) for a in z]
                   + [repr(float(a)) for a in y])


def lipschitz_constants(R):
    """Sup-norm Lipschitz constants ``(c_Phi, c_Psi)`` that the fixed point obeys.

    From the iteration, ``|dy| <= D^{-1}|dx| + |Q| |dy|`` componentwise, with
    ``D = diag(R)`` and ``Q`` the normalized off-diagonal part. Hence
    ``c_Psi = max row of (I - |Q|)^{-1} D^{-1} 1`` and ``c_Phi = 1 + kappa(R) c_Psi``.
    In one dimension with ``R = [1]`` these are the sharp values ``(2, 1)``.
    """
    R = np.atleast_2d(np.asarray(R, dtype=float))
    diag = np.diag(R)
    Q = np.abs(R / diag[:, None])
    np.fill_diagonal(Q, 0.0)
    c_psi = float(np.max(np.linalg.solve(np.eye(R.shape[0]) - Q, 1.0 / diag)))
    return 1.0 + kappa(R) * c_psi, c_psi
