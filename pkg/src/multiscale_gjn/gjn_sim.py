"""Discrete-event simulation of a generalized Jackson network.

Each station is a single FCFS server. Job ``n`` arriving from outside to
station ``j`` comes ``T_e,j(n) / alpha_j`` after the previous one, the ``n``-th
service at ``j`` lasts ``T_s,j(n) / mu_j`` and the ``n``-th departure from ``j``
is routed by the ``n``-th routing uniform of ``j``. Only queue counts are
tracked: with homogeneous jobs and FCFS, job identities do not affect ``Z``.

Simultaneous events are processed in the order (time, station, departure
before arrival). ``Z`` is right-continuous, so an observation at time ``t``
sees every event at times ``<= t``.

The event loop is compiled with numba. Variates come from numpy generators
in fixed-size chunks; the loop returns to Python whenever a chunk runs dry.
A plain-Python simulator that keeps job-level queues consumes the same
variates and serves as an oracle for the compiled loop.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass
from functools import partial

import numba
import numpy as np

from .errors import EventOverflow, GridMismatch, NegativeStart
from .network_model import service_rates, solve_traffic
from .seeding import PURPOSE, run_replications, stream
from .skorokhod import PathGrid

DEFAULT_EVENT_CAP = 500_000_000
CHUNK = 4096

# stream kinds per station; INITIAL is reserved for random initial states
ARRIVAL, SERVICE, ROUTING, INITIAL = 0, 1, 2, 3

_DONE, _REFILL, _OVERFLOW = 0, 1, 2


@dataclass(frozen=True)
class SimOutput:
    """Observed state of one run.

    Arrays are indexed ``[observation, station]``. ``arrivals``,
    ``departures`` and ``routed_in`` are the event counters behind the flow
    balance ``Z = Z(0) + arrivals + routed_in - departures``; ``area`` is
    ``int_0^t Z(s) ds``.
    """

    sample_times: np.ndarray
    queue_lengths: np.ndarray
    busy_times: np.ndarray
    idle_regulator: np.ndarray
    arrivals: np.ndarray
    departures: np.ndarray
    routed_in: np.ndarray
    area: np.ndarray
    event_count: int
    z0: np.ndarray
    mu: np.ndarray
    r: float

    def check_invariants(self):
        """List of violated output invariants (empty when all hold)."""
        bad = []
        Z, B, Y = self.queue_lengths, self.busy_times, self.idle_regulator
        t = self.sample_times[:, None]
        if np.any(Z < 0):
            bad.append("negative queue length")
        if np.any(np.diff(B, axis=0) < -1e-12) or np.any(B > t + 1e-9):
            bad.append("busy time not nondecreasing or exceeds elapsed time")
        if np.any(np.diff(Y, axis=0) < -1e-9 * max(1.0, float(self.mu.max()))):
            bad.append("idle regulator decreases")
        flow = self.z0[None, :] + self.arrivals + self.routed_in - self.departures
        if not np.array_equal(flow, Z):
            bad.append("flow conservation violated")
        return bad


class Primitives:
    """Chunked unitized variates for one replication.

    Streams are keyed by ``(seed, replication, kind, station)`` so that every
    primitive sequence is independent and reproducible.
    """

    def __init__(self, spec, seed, replication=0, chunk=CHUNK):
        self.spec = spec
        self.chunk = chunk
        J = spec.J
        self.rngs = [[stream(seed, PURPOSE["gjn"], replication, kind, j)
                      for j in range(J)] for kind in (ARRIVAL, SERVICE, ROUTING)]
        self.buf = np.empty((3, J, chunk))
        self.ptr = np.zeros((3, J), dtype=np.int64)
        for kind in range(3):
            for j in range(J):
                self.refill(kind, j)

    def refill(self, kind, j):
        rng = self.rngs[kind][j]
        if kind == ARRIVAL:
            self.buf[kind, j] = self.spec.arrival_dists[j].sample(rng, self.chunk)
        elif kind == SERVICE:
            self.buf[kind, j] = self.spec.service_dists[j].sample(rng, self.chunk)
        else:
            self.buf[kind, j] = rng.random(self.chunk)
        self.ptr[kind, j] = 0

    def take(self, kind, j):
        """Next variate of one sequence (used by the reference simulator)."""
        if self.ptr[kind, j] == self.chunk:
            self.refill(kind, j)
        v = self.buf[kind, j, self.ptr[kind, j]]
        self.ptr[kind, j] += 1
        return float(v)


def _route_table(P):
    """Cumulative routing rows; a uniform beyond the last entry means exit."""
    return np.cumsum(np.asarray(P, dtype=float), axis=1)


def _destination(cum_row, u):
    # index J (past the end) encodes leaving the network
    return int(np.searchsorted(cum_row, u, side="right"))


# --------------------------------------------------------------------------
# compiled event loop

@numba.njit(cache=True)
def _event_loop(z, next_arr, next_dep, busy_since, busy_acc, area, last_t,
                arr_cnt, dep_cnt, in_cnt, counters,
                buf, ptr, alpha, mu, cum,
                obs, obs_ptr, Zo, Bo, Ao, Do, Io, Ro,
                horizon, cap):
    J = z.shape[0]
    chunk = buf.shape[2]
    inf = np.inf
    while True:
        # locate next event: (time, station, departure before arrival)
        best_t = inf
        best_j = -1
        best_kind = 0
        for j in range(J):
            if next_dep[j] < best_t:
                best_t = next_dep[j]
                best_j = j
                best_kind = 0
            if next_arr[j] < best_t:
                best_t = next_arr[j]
                best_j = j
                best_kind = 1
        # record observations strictly before the event
        while obs_ptr[0] < obs.shape[0] and obs[obs_ptr[0]] < best_t:
            tob = obs[obs_ptr[0]]
            m = obs_ptr[0]
            for j in range(J):
                Zo[m, j] = z[j]
                b = busy_acc[j]
                if z[j] > 0:
                    b += tob - busy_since[j]
                Bo[m, j] = b
                Ao[m, j] = arr_cnt[j]
                Do[m, j] = dep_cnt[j]
                Io[m, j] = in_cnt[j]
                Ro[m, j] = area[j] + z[j] * (tob - last_t[0])
            obs_ptr[0] += 1
        if best_j < 0 or best_t > horizon:
            return _DONE, -1, -1
        # make sure every variate this event could need is available
        for kind in range(3):
            for j in range(J):
                if ptr[kind, j] == chunk:
                    return _REFILL, kind, j
        if counters[0] >= cap:
            return _OVERFLOW, -1, -1
        counters[0] += 1
        dt = best_t - last_t[0]
        for j in range(J):
            area[j] += z[j] * dt
        last_t[0] = best_t
        j = best_j
        if best_kind == 1:
            arr_cnt[j] += 1
            next_arr[j] = best_t + buf[0, j, ptr[0, j]] / alpha[j]
            ptr[0, j] += 1
            dest = j
        else:
            dep_cnt[j] += 1
            z[j] -= 1
            if z[j] > 0:
                next_dep[j] = best_t + buf[1, j, ptr[1, j]] / mu[j]
                ptr[1, j] += 1
            else:
                next_dep[j] = inf
                busy_acc[j] += best_t - busy_since[j]
            u = buf[2, j, ptr[2, j]]
            ptr[2, j] += 1
            dest = J
            for i in range(J):
                if u < cum[j, i]:
                    dest = i
                    break
            if dest < J:
                in_cnt[dest] += 1
        if dest < J:
            z[dest] += 1
            if z[dest] == 1:
                busy_since[dest] = best_t
                next_dep[dest] = best_t + buf[1, dest, ptr[1, dest]] / mu[dest]
                ptr[1, dest] += 1


class _State:
    """Mutable simulation state shared by the compiled and reference paths."""

    def __init__(self, spec, mu, z0, prim):
        J = spec.J
        self.z = np.array(z0, dtype=np.int64)
        self.next_arr = np.full(J, np.inf)
        self.next_dep = np.full(J, np.inf)
        self.busy_since = np.zeros(J)
        self.busy_acc = np.zeros(J)
        self.area = np.zeros(J)
        self.last_t = np.zeros(1)
        self.arr = np.zeros(J, dtype=np.int64)
        self.dep = np.zeros(J, dtype=np.int64)
        self.inn = np.zeros(J, dtype=np.int64)
        self.counters = np.zeros(1, dtype=np.int64)
        for j in range(J):
            if spec.alpha[j] > 0:
                self.next_arr[j] = prim.take(ARRIVAL, j) / spec.alpha[j]
        for j in range(J):
            if self.z[j] > 0:
                self.next_dep[j] = prim.take(SERVICE, j) / mu[j]


def _prepare(spec, r, z0, obs, mu):
    z0 = np.asarray(z0, dtype=np.int64)
    if z0.shape != (spec.J,):
        raise ValueError(f"initial state needs {spec.J} entries")
    if np.any(z0 < 0):
        raise NegativeStart("initial queue lengths must be nonnegative")
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 1 or (obs.size > 1 and np.any(np.diff(obs) < 0)) or np.any(obs < 0):
        raise ValueError("observation grid must be nondecreasing and nonnegative")
    if mu is None:
        mu = service_rates(spec, r)
    return z0, obs, np.asarray(mu, dtype=float)


def simulate(spec, r, z0, horizon, obs_grid, seed, replication=0,
             event_cap=DEFAULT_EVENT_CAP, mu=None):
    """Run one replication of the network at scale parameter ``r``.

    Parameters
    ----------
    spec : NetworkSpec
    r : float
        Heavy-traffic parameter in (0, 1); service rates follow the regime.
    z0 : sequence of int
        Initial queue lengths. Jobs initially present at a station start
        service at time 0.
    horizon : float
        Events after ``horizon`` are not processed.
    obs_grid : array_like
        Nondecreasing observation times within ``[0, horizon]``.
    seed, replication : int
        Master seed and replication index selecting the variate streams.
    mu : array_like, optional
        Override the service rates (used for the D/D/1 style hand checks).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    z0, obs, mu = _prepare(spec, r, z0, obs_grid, mu)
    if obs.size and obs[-1] > horizon:
        raise GridMismatch("observation grid extends past the horizon")
    prim = Primitives(spec, seed, replication)
    st = _State(spec, mu, z0, prim)
    M, J = obs.size, spec.J
    Zo = np.zeros((M, J), dtype=np.int64)
    Bo = np.zeros((M, J))
    Ao = np.zeros((M, J), dtype=np.int64)
    Do = np.zeros((M, J), dtype=np.int64)
    Io = np.zeros((M, J), dtype=np.int64)
    Ro = np.zeros((M, J))
    obs_ptr = np.zeros(1, dtype=np.int64)
    cum = _route_table(spec.P)
    alpha = np.asarray(spec.alpha, dtype=float)
    while True:
        code, kind, j = _event_loop(
            st.z, st.next_arr, st.next_dep, st.busy_since, st.busy_acc, st.area,
            st.last_t, st.arr, st.dep, st.inn, st.counters,
            prim.buf, prim.ptr, alpha, mu, cum,
            obs, obs_ptr, Zo, Bo, Ao, Do, Io, Ro, float(horizon), int(event_cap))
        if code == _DONE:
            break
        if code == _OVERFLOW:
            raise EventOverflow(event_cap)
        prim.refill(kind, j)
    Y = mu[None, :] * (obs[:, None] - Bo)
    return SimOutput(obs, Zo, Bo, Y, Ao, Do, Io, Ro, int(st.counters[0]),
                     z0, mu, float(r))


def simulate_reference(spec, r, z0, horizon, obs_grid, seed, replication=0, mu=None):
    """Slow job-level simulator used to validate :func:`simulate`.

    Keeps explicit FCFS queues of job labels and a heap of pending events.
    It consumes exactly the same primitive variates as the compiled loop.
    """
    z0, obs, mu = _prepare(spec, r, z0, obs_grid, mu)
    J = spec.J
    prim = Primitives(spec, seed, replication)
    cum = _route_table(spec.P)
    queues = [deque(("init", j, n) for n in range(z0[j])) for j in range(J)]
    heap = []
    for j in range(J):
        if spec.alpha[j] > 0:
            heapq.heappush(heap, (prim.take(ARRIVAL, j) / spec.alpha[j], j, 1))
    for j in range(J):
        if queues[j]:
            heapq.heappush(heap, (prim.take(SERVICE, j) / mu[j], j, 0))
    busy_since = np.zeros(J)
    busy_acc = np.zeros(J)
    area = np.zeros(J)
    arr = np.zeros(J, dtype=np.int64)
    dep = np.zeros(J, dtype=np.int64)
    inn = np.zeros(J, dtype=np.int64)
    rows = []
    last_t = 0.0
    events = 0
    k = 0
    label = 0

    def snapshot(t):
        z = np.array([len(q) for q in queues])
        b = busy_acc + np.where(z > 0, t - busy_since, 0.0)
        return z, b, arr.copy(), dep.copy(), inn.copy(), area + z * (t - last_t)

    while True:
        t_next = heap[0][0] if heap else math.inf
        while k < obs.size and obs[k] < t_next:
            rows.append(snapshot(obs[k]))
            k += 1
        if not heap or t_next > horizon:
            break
        t, j, kind = heapq.heappop(heap)
        events += 1
        for i in range(J):
            area[i] += len(queues[i]) * (t - last_t)
        last_t = t
        if kind == 1:
            arr[j] += 1
            heapq.heappush(heap, (t + prim.take(ARRIVAL, j) / spec.alpha[j], j, 1))
            dest, job = j, ("ext", j, label)
            label += 1
        else:
            dep[j] += 1
            job = queues[j].popleft()
            if queues[j]:
                heapq.heappush(heap, (t + prim.take(SERVICE, j) / mu[j], j, 0))
            else:
                busy_acc[j] += t - busy_since[j]
            dest = _destination(cum[j], prim.take(ROUTING, j))
            if dest < J:
                inn[dest] += 1
        if dest < J:
            queues[dest].append(job)
            if len(queues[dest]) == 1:
                busy_since[dest] = t
                heapq.heappush(heap, (t + prim.take(SERVICE, dest) / mu[dest], dest, 0))
    Z, B, A, D, I, R = (np.array(x) for x in zip(*rows)) if rows else \
        (np.zeros((0, J)),) * 6
    Y = mu[None, :] * (obs[:, None] - B)
    return SimOutput(obs, Z, B, Y, A, D, I, R, events, z0, mu, float(r))


# --------------------------------------------------------------------------
# scaling helpers

def matching_initial(regime, r, xi):
    """``z0_j = ceil(xi_j / gamma_{k(j)}(r))``: the matching-rate initial state."""
    return np.ceil(np.asarray(xi, dtype=float) / regime.station_gamma(r) - 1e-9).astype(np.int64)


def lowest_initial(regime, r, xi):
    """``z0_j = ceil(xi_j / gamma_1(r))``: the lowest-rate initial state."""
    return np.ceil(np.asarray(xi, dtype=float) / regime.gamma(r)[0] - 1e-9).astype(np.int64)


def scaled_obs_grid(t_grid, k, regime, r):
    """Unscaled observation times ``t / gamma_k(r)^2`` for a scaled grid."""
    g = regime.gamma(r)[k - 1]
    return np.asarray(t_grid, dtype=float) / g**2


def scaled_path(out, k, regime, stations=None, scaled_times=None):
    """``gamma_k(r) Z(t / gamma_k(r)^2)`` read off a simulation.

    Without ``scaled_times`` the whole observation grid is rescaled. Requested
    times must coincide (to relative 1e-9) with observation times, otherwise
    :class:`GridMismatch` is raised.
    """
    g = regime.gamma(out.r)[k - 1]
    cols = slice(None) if stations is None else np.asarray(stations) - 1
    if scaled_times is None:
        return PathGrid(out.sample_times * g**2, g * out.queue_lengths[:, cols])
    want = np.asarray(scaled_times, dtype=float) / g**2
    if want.size and (want.max() > out.sample_times[-1] * (1 + 1e-9) or want.min() < 0):
        raise GridMismatch("requested scaled times fall outside the simulated horizon")
    idx = np.searchsorted(out.sample_times, want * (1 - 1e-9), side="left")
    idx = np.minimum(idx, out.sample_times.size - 1)
    if not np.allclose(out.sample_times[idx], want, rtol=1e-9, atol=0):
        raise GridMismatch("requested scaled times are not on the observation grid")
    return PathGrid(np.asarray(scaled_times, dtype=float), g * out.queue_lengths[idx][:, cols])


# --------------------------------------------------------------------------
# replicated probes and steady state

def _probe_chunk(indices, spec, r, z0, obs, seed, event_cap, scale):
    out = np.empty((len(indices), obs.size, spec.J))
    for m, i in enumerate(indices):
        sim = simulate(spec, r, z0, obs[-1], obs, seed, i, event_cap)
        out[m] = sim.queue_lengths * scale
    return out


def replicate_probes(spec, r, z0, obs, seed, replications, scale=1.0,
                     workers=1, event_cap=DEFAULT_EVENT_CAP):
    """Queue lengths at ``obs`` over many replications, times ``scale``.

    ``scale`` may be a per-station vector. Returns ``(replications, len(obs), J)``.
    """
    obs = np.asarray(obs, dtype=float)
    fn = partial(_probe_chunk, spec=spec, r=r, z0=np.asarray(z0), obs=obs,
                 seed=seed, event_cap=event_cap, scale=np.asarray(scale, dtype=float))
    return run_replications(fn, replications, workers)


def multiscale_probe(spec, r, z0, t_probe, seed, replications, workers=1,
                     event_cap=DEFAULT_EVENT_CAP):
    """Joint ``(gamma_k(j)(r) Z_j(t / gamma_k(j)(r)^2))_j`` at one scaled time.

    Each station is read at its own clock. Returns ``(replications, J)``.
    """
    g = spec.regime.station_gamma(r)
    obs = np.unique(t_probe / g**2)
    raw = replicate_probes(spec, r, z0, obs, seed, replications, 1.0, workers, event_cap)
    pos = np.searchsorted(obs, t_probe / g**2)
    return raw[:, pos, np.arange(spec.J)] * g[None, :]


@dataclass(frozen=True)
class StationarySample:
    """Scaled steady-state samples, one row per batch.

    ``boundary`` holds ``gamma Z`` at the end of each batch and ``means`` the
    within-batch time averages of ``gamma Z``.
    """

    boundary: np.ndarray
    means: np.ndarray
    gamma: np.ndarray
    event_count: int


def stationary_sample(spec, r, seed, burn_in, batches, batch_len, z0=None, k=None,
                      event_cap=DEFAULT_EVENT_CAP):
    """Batch-means view of one long run.

    ``burn_in`` and ``batch_len`` are in the scaled time of block ``k``
    (default: the last, slowest block), i.e. real time divided by
    ``gamma_k(r)^2``. Station ``j`` is reported as ``gamma_{k(j)}(r) Z_j``.
    """
    regime = spec.regime
    k = regime.K if k is None else k
    gk = regime.gamma(r)[k - 1]
    z0 = np.zeros(spec.J, dtype=np.int64) if z0 is None else z0
    t0 = burn_in / gk**2
    L = batch_len / gk**2
    obs = t0 + L * np.arange(batches + 1)
    sim = simulate(spec, r, z0, obs[-1], obs, seed, 0, event_cap)
    g = regime.station_gamma(r)
    boundary = sim.queue_lengths[1:] * g
    means = np.diff(sim.area, axis=0) / L * g
    return StationarySample(boundary, means, g, sim.event_count)


def mm1_scaled_mean(r):
    """Exact stationary mean of ``r Z`` for M/M/1 with ``lambda = 1``, ``mu = 1 + r``."""
    rho = 1.0 / (1.0 + r)
    return r * rho / (1.0 - rho)


__all__ = [
    "Primitives", "SimOutput", "StationarySample", "lowest_initial",
    "matching_initial", "mm1_scaled_mean", "multiscale_probe", "replicate_probes",
    "scaled_obs_grid", "scaled_path", "simulate", "simulate_reference",
    "stationary_sample", "solve_traffic",
]
