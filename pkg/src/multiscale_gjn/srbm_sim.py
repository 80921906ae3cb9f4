"""Simulation of semimartingale reflecting Brownian motions.

The free process ``X(t) = z0 + theta t + L W(t)`` is sampled exactly on a
uniform grid and handed to the reflection engine. The only discretization
error is that the regulator acts at grid points, which biases the boundary
behaviour by O(sqrt(step)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np

from .errors import NotPSD
from .limit_calculus import covariance_gamma, require_m_matrix
from .network_model import NetworkSpec
from .seeding import PURPOSE, run_replications, stream
from .skorokhod import PathGrid, Reflection, complementarity, reflect_batch

MAX_GRID = 50_000_000


def cholesky(Gamma, tol=1e-10):
    """Lower-triangular ``L`` with ``L L' = Gamma``.

    Positive definite input goes through LAPACK. Otherwise an outer-product
    factorization is used that leaves a zero column wherever the remaining
    pivot vanishes (within ``tol`` relative to the largest diagonal entry).
    """
    G = np.atleast_2d(np.asarray(Gamma, dtype=float))
    if G.shape[0] != G.shape[1]:
        raise NotPSD("covariance must be square")
    if np.abs(G - G.T).max(initial=0.0) > tol * max(1.0, np.abs(G).max(initial=0.0)):
        raise NotPSD("covariance is not symmetric")
    try:
        return np.linalg.cholesky(G)
    except np.linalg.LinAlgError:
        pass
    n = G.shape[0]
    scale = max(1.0, float(np.max(np.abs(np.diag(G)), initial=0.0)))
    A = 0.5 * (G + G.T)
    L = np.zeros_like(A)
    for j in range(n):
        piv = A[j, j]
        if piv < -tol * scale:
            raise NotPSD(f"negative pivot {piv:.3e} at position {j + 1}")
        if piv <= tol * scale:
            # rank deficiency: the rest of this column must vanish too
            if np.any(np.abs(A[j + 1:, j]) > math.sqrt(tol) * scale):
                raise NotPSD(f"zero pivot with nonzero column at position {j + 1}")
            continue
        col = A[j:, j] / math.sqrt(piv)
        L[j:, j] = col
        A[j:, j:] -= np.outer(col, col)
    return L


@dataclass(frozen=True)
class SrbmSpec:
    """``SRBM(initial, drift, covariance, reflection)`` on the orthant."""

    initial: np.ndarray
    drift: np.ndarray
    covariance: np.ndarray
    reflection: np.ndarray

    def __post_init__(self):
        for name in ("initial", "drift"):
            object.__setattr__(self, name,
                               np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("covariance", "reflection"):
            object.__setattr__(self, name,
                               np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        d = self.drift.size
        if self.initial.size != d or self.covariance.shape != (d, d) \
                or self.reflection.shape != (d, d):
            raise ValueError("SRBM parameters disagree in dimension")
        if np.any(self.initial < 0):
            from .errors import NegativeStart
            raise NegativeStart("SRBM initial state must be nonnegative")
        require_m_matrix(self.reflection, "reflection matrix")

    @property
    def d(self):
        return self.drift.size

    @property
    def L(self):
        return cholesky(self.covariance)

    @classmethod
    def from_component(cls, comp, initial):
        return cls(initial, comp.drift, comp.covariance, comp.reflection)


def time_grid(horizon, step):
    n = int(round(horizon / step))
    if n < 1:
        raise ValueError("horizon must cover at least one step")
    if n + 1 > MAX_GRID:
        raise ValueError(f"grid of {n + 1} points exceeds the cap {MAX_GRID}")
    return np.linspace(0.0, n * step, n + 1)


def brownian_paths(rng, L, n, step):
    """``L W`` on a uniform grid of ``n`` steps, shape ``(n + 1, d)``."""
    d = L.shape[0]
    inc = rng.standard_normal((n, d)) * math.sqrt(step)
    out = np.zeros((n + 1, d))
    np.cumsum(inc @ L.T, axis=0, out=out[1:])
    return out


def _free_paths(indices, seed, z0, drift, L, n, step, tag):
    t = np.arange(n + 1) * step
    base = z0[None, :] + t[:, None] * drift[None, :]
    out = np.empty((len(indices), n + 1, drift.size))
    for m, i in enumerate(indices):
        out[m] = base + brownian_paths(stream(seed, PURPOSE["srbm"], tag, i), L, n, step)
    return out


def _reflected_chunk(indices, seed, z0, drift, L, R, n, step, tag, keep, what):
    x = _free_paths(indices, seed, z0, drift, L, n, step, tag)
    # one path at a time: the stopping rule of the fixed point is per path,
    # so results do not depend on how replications are grouped
    z, y = np.empty_like(x), np.empty_like(x)
    for m in range(x.shape[0]):
        z[m], y[m], _ = reflect_batch(x[m], R)
    parts = {"z": z, "y": y}
    out = np.stack([parts[w] for w in what], axis=1) if len(what) > 1 else parts[what[0]][:, None]
    return out[:, :, keep]


def simulate_srbm(spec, horizon, step, seed, tag=0):
    """One SRBM path on ``[0, horizon]`` with grid spacing ``step``."""
    t = time_grid(horizon, step)
    x = _free_paths([0], seed, spec.initial, spec.drift, spec.L, t.size - 1, step, tag)[0]
    z, y, it = reflect_batch(x, spec.reflection)
    return Reflection(PathGrid(t, z), PathGrid(t, y), complementarity(z, y), it)


def simulate_srbm_batch(spec, horizon, step, seed, replications, probe_steps=None,
                        what=("z",), workers=1, tag=0):
    """Many independent SRBM paths.

    Replication ``i`` uses its own stream, so the output does not depend on
    ``workers``. Returns an array ``(replications, len(what), N', d)`` where
    ``N'`` is either the full grid or only the grid indices in
    ``probe_steps``.
    """
    t = time_grid(horizon, step)
    keep = slice(None) if probe_steps is None else np.asarray(probe_steps)
    fn = partial(_reflected_chunk, seed=seed, z0=spec.initial, drift=spec.drift,
                 L=spec.L, R=spec.reflection, n=t.size - 1, step=step, tag=tag,
                 keep=keep, what=tuple(what))
    return run_replications(fn, replications, workers)


# --------------------------------------------------------------------------
# multi-scaling family on a scaled clock

def prelimit_parameters(R, Gamma, delta, gamma_k, z0):
    """Initial state and drift of ``gamma_k Z(t / gamma_k^2)``.

    The scaled free process is ``gamma_k z0 - R delta t / gamma_k + W'(t)``
    where ``W'`` is again a Brownian motion with covariance ``Gamma``.
    """
    R = np.asarray(R, dtype=float)
    return (gamma_k * np.asarray(z0, dtype=float),
            -R @ np.asarray(delta, dtype=float) / gamma_k)


def _family_inputs(model, r, regime):
    if isinstance(model, NetworkSpec):
        return model.R, covariance_gamma(model), model.regime if regime is None else regime
    R, Gamma = model
    if regime is None:
        raise ValueError("a scale regime is required with a raw (R, Gamma) pair")
    return np.asarray(R, dtype=float), np.asarray(Gamma, dtype=float), regime


def prelimit_spec(model, r, z0, k, regime=None):
    """SRBM spec of the ``k``-th scaled view of the ``r``-th family member.

    ``model`` is a :class:`NetworkSpec` (``R = I - P'`` and its covariance) or a
    raw ``(R, Gamma)`` pair together with ``regime``. ``k`` is a 1-based block
    index.
    """
    R, Gamma, regime = _family_inputs(model, r, regime)
    gk = regime.gamma(r)[k - 1]
    init, drift = prelimit_parameters(R, Gamma, regime.delta(r), gk, z0)
    return SrbmSpec(init, drift, Gamma, R)


def simulate_prelimit_family(model, r, z0, k, horizon, step, seed, regime=None,
                             replications=None, probe_steps=None, what=("z",),
                             workers=1, tag=0):
    """Scaled paths ``{gamma_k(r) Z(t / gamma_k(r)^2)}`` of the multi-scaling SRBM.

    With ``replications=None`` a single :class:`PathGrid` of the scaled
    reflected path is returned, otherwise the batch array of
    :func:`simulate_srbm_batch`.
    """
    spec = prelimit_spec(model, r, z0, k, regime)
    if replications is None:
        return simulate_srbm(spec, horizon, step, seed, tag).z
    return simulate_srbm_batch(spec, horizon, step, seed, replications,
                               probe_steps, what, workers, tag)


def simulate_limit(desc, component, initial, horizon, step, seed, replications=None,
                   probe_steps=None, workers=1, tag=0):
    """Simulate component ``component`` (1-based) of a limit descriptor.

    Only the reported coordinates are returned: a :class:`PathGrid` for a
    single path or an array ``(replications, N', report)``.
    """
    comp = desc.components[component - 1]
    spec = SrbmSpec.from_component(comp, initial)
    if replications is None:
        path = simulate_srbm(spec, horizon, step, seed, tag).z
        return PathGrid(path.times, path.values[:, :comp.report])
    out = simulate_srbm_batch(spec, horizon, step, seed, replications, probe_steps,
                              ("z",), workers, tag)
    return out[:, 0, :, :comp.report]


def coupled_prelimit_and_limit(R, Gamma, regime, r, z0, k, station, limit_spec,
                               horizon, step, seed, replications, tag=0):
    """Pre-limit scaled coordinate and its limit driven by the same noise.

    Both processes are built from one Brownian path per replication: the
    pre-limit SRBM uses ``L W`` and the scalar limit uses ``(u' L) W``. This
    common-random-numbers pairing leaves each marginal law untouched, so the
    two-sample KS distance of the outputs estimates the distance between the
    laws with far less noise than independent samples.
    Returns ``(prelimit, limit)`` arrays of shape ``(replications, N + 1)``.
    """
    t = time_grid(horizon, step)
    n = t.size - 1
    L = cholesky(Gamma)
    pre = prelimit_spec((R, Gamma), r, z0, k, regime)
    a = np.asarray(limit_spec["loading"], dtype=float)
    out_pre = np.empty((replications, n + 1))
    out_lim = np.empty((replications, n + 1))
    for i in range(replications):
        W = brownian_paths(stream(seed, PURPOSE["srbm"], tag, i), np.eye(L.shape[0]), n, step)
        x = pre.initial + t[:, None] * pre.drift + W @ L.T
        z, _, _ = reflect_batch(x, R)
        out_pre[i] = z[:, station - 1]
        xl = limit_spec["initial"] + limit_spec["drift"] * t + W @ a
        zl, _, _ = reflect_batch(xl[:, None], [[limit_spec["reflection"]]])
        out_lim[i] = zl[:, 0]
    return out_pre, out_lim


# --------------------------------------------------------------------------
# one Brownian motion read on several clocks

def scaled_bm_family(seed, r_list, t_grid, exponents, replications, tag=0):
    """``gamma_k(r) W(t / gamma_k(r)^2)`` for every ``r``, ``k`` and grid time.

    One standard Brownian path per replication is sampled exactly at the
    sorted union of all required clock times. Returns a dict mapping each ``r``
    to an array ``(replications, len(t_grid), len(exponents))``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    exps = np.asarray(exponents, dtype=float)
    queries = []
    for r in r_list:
        g = float(r) ** exps
        queries.append(t_grid[:, None] / g[None, :] ** 2)
    flat = np.concatenate([q.ravel() for q in queries])
    clock, inverse = np.unique(flat, return_inverse=True)
    dt = np.diff(clock, prepend=0.0)
    rng = stream(seed, PURPOSE["bm"], tag)
    W = np.cumsum(rng.standard_normal((replications, clock.size)) * np.sqrt(dt), axis=1)
    out, pos = {}, 0
    for r, q in zip(r_list, queries):
        g = float(r) ** exps
        idx = inverse[pos:pos + q.size].reshape(q.shape)
        pos += q.size
        out[r] = W[:, idx] * g[None, None, :]
    return out


def scaled_bm_covariance(r, s, t, beta_i, beta_j):
    """Exact ``Cov(gamma_i W(s / gamma_i^2), gamma_j W(t / gamma_j^2))``."""
    gi, gj = r ** beta_i, r ** beta_j
    return gi * gj * min(s / gi**2, t / gj**2)
