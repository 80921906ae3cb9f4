"""Generalized Jackson network parameterization.

A network is described by its routing matrix ``P``, external arrival rates
``alpha``, the laws of the unitized interarrival and service times, and a
:class:`ScaleRegime` that says how fast each station's idle capacity
``mu_j - lambda_j`` vanishes as ``r -> 0``.

Station and block indices are 1-based in everything a user reads (JSON files,
validation messages, ``ScaleRegime.blocks``) and 0-based in arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DeadStation, SingularRouting, SpecError

FAMILIES = ("exponential", "deterministic", "uniform", "erlang",
            "hyperexponential", "lognormal")

# condition number above which I - P' is treated as singular
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class DistributionSpec:
    """Law of a unitized primitive sequence (mean exactly 1).

    Raw parameters are normalized on construction so that the mean is 1:

    ========================  =============================================
    family                    params
    ========================  =============================================
    ``exponential``           none
    ``deterministic``         none
    ``uniform``               ``low``, ``high`` with ``0 <= low < high``
    ``erlang``                ``k`` (positive integer phases)
    ``hyperexponential``      ``probs``, ``rates`` (mixture of exponentials)
    ``lognormal``             ``sigma`` (log-scale standard deviation)
    ========================  =============================================
    """

    family: str = "exponential"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SpecError(f"unknown distribution family '{self.family}'")
        p = dict(self.params)
        if self.family == "uniform":
            low, high = float(p.get("low", 0.0)), float(p.get("high", 2.0))
            if not 0.0 <= low < high:
                raise SpecError("uniform needs 0 <= low < high")
            m = 0.5 * (low + high)
            p = {"low": low / m, "high": high / m}
        elif self.family == "erlang":
            k = p.get("k", 2)
            if int(k) != k or k < 1:
                raise SpecError("erlang needs an integer k >= 1")
            p = {"k": int(k)}
        elif self.family == "hyperexponential":
            probs = np.asarray(p.get("probs", [0.5, 0.5]), dtype=float)
            rates = np.asarray(p.get("rates", [0.5, 2.0]), dtype=float)
            if (probs.shape != rates.shape or probs.ndim != 1 or np.any(probs < 0)
                    or np.any(rates <= 0) or not math.isclose(probs.sum(), 1.0)):
                raise SpecError("hyperexponential needs matching probs (summing "
                                "to 1) and positive rates")
            m = float(np.sum(probs / rates))
            p = {"probs": probs.tolist(), "rates": (rates * m).tolist()}
        elif self.family == "lognormal":
            sigma = float(p.get("sigma", 0.5))
            if sigma <= 0:
                raise SpecError("lognormal needs sigma > 0")
            p = {"sigma": sigma}
        else:
            p = {}
        object.__setattr__(self, "params", p)

    @property
    def mean(self):
        return 1.0

    @property
    def scv(self):
        """Squared coefficient of variation (equal to the variance here)."""
        p = self.params
        if self.family == "exponential":
            return 1.0
        if self.family == "deterministic":
            return 0.0
        if self.family == "uniform":
            return (p["high"] - p["low"]) ** 2 / 12.0
        if self.family == "erlang":
            return 1.0 / p["k"]
        if self.family == "hyperexponential":
            probs, rates = np.asarray(p["probs"]), np.asarray(p["rates"])
            return float(2.0 * np.sum(probs / rates**2) - 1.0)
        return math.expm1(p["sigma"] ** 2)

    def sample(self, rng, size):
        """Draw ``size`` unitized variates from ``rng`` (a numpy Generator)."""
        p = self.params
        if self.family == "exponential":
            return rng.standard_exponential(size)
        if self.family == "deterministic":
            return np.ones(size)
        if self.family == "uniform":
            return rng.uniform(p["low"], p["high"], size)
        if self.family == "erlang":
            return rng.gamma(p["k"], 1.0 / p["k"], size)
        if self.family == "hyperexponential":
            probs, rates = np.asarray(p["probs"]), np.asarray(p["rates"])
            branch = rng.choice(len(probs), size=size, p=probs)
            return rng.standard_exponential(size) / rates[branch]
        sigma = p["sigma"]
        return rng.lognormal(-0.5 * sigma**2, sigma, size)

    def to_json(self):
        return {"family": self.family, "params": dict(self.params)}


@dataclass(frozen=True)
class ScaleRegime:
    """Blockwise scale functions ``gamma_k(r) = r**beta_k``.

    ``blocks`` holds 1-based inclusive ``(lo, hi)`` station ranges, ordered and
    contiguous. ``exponents`` must increase strictly. ``block_drifts[k]`` is the
    positive vector ``b^(k)`` with ``(mu(r) - lambda)`` on block ``k`` equal to
    ``gamma_k(r) * b^(k)``.
    """

    blocks: tuple
    exponents: tuple
    block_drifts: tuple

    @classmethod
    def singletons(cls, exponents):
        """Fully multi-scale regime: one station per block, ``b = 1``."""
        exps = tuple(float(b) for b in exponents)
        return cls(tuple((j, j) for j in range(1, len(exps) + 1)), exps,
                   tuple((1.0,) for _ in exps))

    @classmethod
    def single_block(cls, J, exponent=1.0, b=None):
        """Conventional heavy traffic: every station shares one rate."""
        b = tuple(float(x) for x in (b if b is not None else [1.0] * J))
        return cls(((1, J),), (float(exponent),), (b,))

    @property
    def K(self):
        return len(self.blocks)

    @property
    def J(self):
        return self.blocks[-1][1] if self.blocks else 0

    def block_slices(self):
        """0-based ``slice`` for each block."""
        return [slice(lo - 1, hi) for lo, hi in self.blocks]

    def block_of(self):
        """0-based block index of every station."""
        out = np.empty(self.J, dtype=int)
        for k, sl in enumerate(self.block_slices()):
            out[sl] = k
        return out

    def gamma(self, r):
        """Vector ``(gamma_1(r), ..., gamma_K(r))`` over blocks."""
        return np.asarray(r, dtype=float) ** np.asarray(self.exponents)

    def station_gamma(self, r):
        """Per-station scale ``gamma_{k(j)}(r)``."""
        return self.gamma(r)[self.block_of()]

    def delta(self, r):
        """Per-station idle capacity ``delta(r)``: ``gamma_k(r) b^(k)_j``."""
        g = self.gamma(r)
        return np.concatenate([g[k] * np.asarray(b, dtype=float)
                               for k, b in enumerate(self.block_drifts)])

    def problems(self, J=None):
        """Human-readable invariant violations (empty when valid)."""
        out = []
        if not self.blocks:
            return ["no blocks given"]
        if len(self.exponents) != self.K or len(self.block_drifts) != self.K:
            out.append("blocks, exponents and drifts differ in length")
            return out
        expected = 1
        for k, (lo, hi) in enumerate(self.blocks, start=1):
            if lo != expected or hi < lo:
                out.append(f"block {k} is not contiguous with the previous block")
            if len(self.block_drifts[k - 1]) != hi - lo + 1:
                out.append(f"block {k} drift vector has wrong length")
            elif any(not b > 0 for b in self.block_drifts[k - 1]):
                out.append(f"block {k} drift vector is not strictly positive")
            expected = hi + 1
        if J is not None and expected - 1 != J:
            out.append(f"blocks cover {expected - 1} stations, network has {J}")
        if any(not b > 0 for b in self.exponents):
            out.append("exponents must be positive")
        if any(b2 <= b1 for b1, b2 in zip(self.exponents, self.exponents[1:])):
            out.append("exponents not increasing")
        return out

    def to_json(self):
        return [{"stations": [lo, hi], "exponent": e, "b": list(b)}
                for (lo, hi), e, b in zip(self.blocks, self.exponents,
                                          self.block_drifts)]


@dataclass(frozen=True)
class NetworkSpec:
    """Full GJN parameterization.

    Construction performs only shape coercion; call :func:`validate` for the
    semantic checks.
    """

    P: np.ndarray
    alpha: np.ndarray
    arrival_dists: tuple
    service_dists: tuple
    regime: ScaleRegime

    def __post_init__(self):
        P = np.array(self.P, dtype=float, ndmin=2)
        alpha = np.array(self.alpha, dtype=float, ndmin=1)
        P.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "arrival_dists", tuple(self.arrival_dists))
        object.__setattr__(self, "service_dists", tuple(self.service_dists))

    @property
    def J(self):
        return self.P.shape[0]

    @property
    def R(self):
        """Reflection matrix ``I - P'``."""
        return np.eye(self.J) - self.P.T

    @property
    def ce2(self):
        return np.array([d.scv for d in self.arrival_dists])

    @property
    def cs2(self):
        return np.array([d.scv for d in self.service_dists])

    @classmethod
    def build(cls, P, alpha, regime=None, arrival="exponential",
              service="exponential"):
        """Convenience constructor with one family for every station.

        ``regime`` defaults to singleton blocks with exponents ``1..J``.
        ``arrival`` and ``service`` may be a family name, a
        :class:`DistributionSpec`, or a per-station list of either.
        """
        P = np.array(P, dtype=float, ndmin=2)
        J = P.shape[0]

        def expand(d):
            if isinstance(d, (list, tuple)):
                return tuple(_as_dist(x) for x in d)
            return tuple(_as_dist(d) for _ in range(J))

        if regime is None:
            regime = ScaleRegime.singletons(range(1, J + 1))
        return cls(P, alpha, expand(arrival), expand(service), regime)

    def to_json(self):
        return {
            "J": self.J,
            "P": self.P.tolist(),
            "alpha": self.alpha.tolist(),
            "arrival_dists": [d.to_json() for d in self.arrival_dists],
            "service_dists": [d.to_json() for d in self.service_dists],
            "blocks": self.regime.to_json(),
        }


def _as_dist(d):
    if isinstance(d, DistributionSpec):
        return d
    if isinstance(d, str):
        return DistributionSpec(d)
    return DistributionSpec(d.get("family", "exponential"), d.get("params", {}))


def spectral_radius(P):
    P = np.asarray(P, dtype=float)
    if P.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(P))))


def solve_traffic(spec):
    """Nominal arrival rates: the solution of ``lambda = alpha + P' lambda``.

    Raises
    ------
    SingularRouting
        If ``I - P'`` is numerically singular.
    DeadStation
        If some station gets no traffic at all.
    """
    A = spec.R
    if not np.all(np.isfinite(A)) or np.linalg.cond(A) > _COND_LIMIT:
        raise SingularRouting("I - P' is numerically singular")
    lam = np.linalg.solve(A, spec.alpha)
    dead = np.flatnonzero(lam <= 0)
    if dead.size:
        raise DeadStation(f"station {dead[0] + 1} has nominal arrival rate "
                          f"{lam[dead[0]]:.3g}")
    return lam


def service_rates(spec, r, lam=None):
    """Service rates ``mu(r) = lambda + delta(r)`` under the scale regime."""
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    if lam is None:
        lam = solve_traffic(spec)
    return lam + spec.regime.delta(r)


def traffic_intensity(spec, r, lam=None):
    if lam is None:
        lam = solve_traffic(spec)
    return lam / service_rates(spec, r, lam)


def validate(spec):
    """Collect every invariant violation of ``spec``.

    Returns a list of messages; an empty list means the spec is valid.
    """
    issues = []
    P, alpha = spec.P, spec.alpha
    J = P.shape[0]
    if P.ndim != 2 or P.shape[1] != J:
        return [f"routing matrix must be square, got shape {P.shape}"]
    if alpha.shape != (J,):
        issues.append(f"alpha has length {alpha.size}, expected {J}")
    if np.any(P < 0):
        i, j = np.argwhere(P < 0)[0]
        issues.append(f"routing entry ({i + 1},{j + 1}) is negative")
    for i, s in enumerate(P.sum(axis=1), start=1):
        if s > 1 + 1e-12:
            issues.append(f"routing row {i} exceeds 1")
    if not issues and spectral_radius(P) >= 1 - 1e-12:
        issues.append("routing matrix is not open (spectral radius >= 1)")
    if alpha.shape == (J,) and np.any(alpha < 0):
        issues.append(f"alpha entry {int(np.argmax(alpha < 0)) + 1} is negative")
    for name, dists in (("arrival_dists", spec.arrival_dists),
                        ("service_dists", spec.service_dists)):
        if len(dists) != J:
            issues.append(f"{name} has {len(dists)} entries, expected {J}")
    issues.extend(spec.regime.problems(J))
    if not issues:
        try:
            solve_traffic(spec)
        except (SingularRouting, DeadStation) as exc:
            issues.append(str(exc))
    return issues


def tech_condition_holds(regime):
    """Analytic check of ``limsup gamma_1(r) loglog(1/gamma_K(r)) < inf``.

    For power scales ``r**beta`` with positive exponents the product tends
    to 0, so this reduces to the positivity of the exponents.
    """
    return all(b > 0 for b in regime.exponents)


def scale_separation_ratio(regime, k, l, r):
    """``gamma_l(r) / gamma_k(r)`` for 1-based block indices."""
    g = regime.gamma(r)
    return g[l - 1] / g[k - 1]


# --------------------------------------------------------------------------
# JSON (de)serialization

def _req(doc, key, path):
    if key not in doc:
        raise SpecError("missing required key", path=f"{path}{key}")
    return doc[key]


def _matrix(value, path, shape=None):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise SpecError("expected an array of numbers", path=path) from None
    if shape is not None and arr.shape != shape:
        raise SpecError(f"expected shape {shape}, got {arr.shape}", path=path)
    return arr


def _parse_dist(value, path):
    try:
        if isinstance(value, str):
            return DistributionSpec(value)
        if isinstance(value, dict):
            return DistributionSpec(value.get("family", "exponential"),
                                    value.get("params", {}))
    except SpecError as exc:
        raise SpecError(str(exc), path=path) from None
    raise SpecError("distribution must be a family name or an object", path=path)


def spec_from_dict(doc, prefix=""):
    """Build a :class:`NetworkSpec` from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise SpecError("network must be a JSON object", path=prefix or None)
    J = _req(doc, "J", prefix)
    if not isinstance(J, int) or J < 1:
        raise SpecError("J must be a positive integer", path=f"{prefix}J")
    P = _matrix(_req(doc, "P", prefix), f"{prefix}P", (J, J))
    alpha = _matrix(_req(doc, "alpha", prefix), f"{prefix}alpha", (J,))

    def dists(key):
        raw = doc.get(key, "exponential")
        if isinstance(raw, (str, dict)):
            raw = [raw] * J
        if not isinstance(raw, list) or len(raw) != J:
            raise SpecError(f"expected {J} distributions", path=f"{prefix}{key}")
        return tuple(_parse_dist(v, f"{prefix}{key}[{i}]") for i, v in enumerate(raw))

    blocks_raw = doc.get("blocks")
    if blocks_raw is None:
        regime = ScaleRegime.singletons(range(1, J + 1))
    else:
        if not isinstance(blocks_raw, list) or not blocks_raw:
            raise SpecError("blocks must be a non-empty array", path=f"{prefix}blocks")
        blocks, exps, drifts = [], [], []
        for k, blk in enumerate(blocks_raw):
            bpath = f"{prefix}blocks[{k}]."
            st = _req(blk, "stations", bpath)
            if (not isinstance(st, list) or len(st) != 2
                    or not all(isinstance(x, int) for x in st)):
                raise SpecError("stations must be [lo, hi]", path=f"{bpath}stations")
            blocks.append((st[0], st[1]))
            exps.append(float(_req(blk, "exponent", bpath)))
            b = blk.get("b", [1.0] * (st[1] - st[0] + 1))
            drifts.append(tuple(_matrix(b, f"{bpath}b").ravel().tolist()))
        regime = ScaleRegime(tuple(blocks), tuple(exps), tuple(drifts))
    return NetworkSpec(P, alpha, dists("arrival_dists"), dists("service_dists"),
                       regime)


def loads_spec(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    return spec_from_dict(doc)


def load_spec(path):
    return loads_spec(Path(path).read_text())


def dumps_spec(spec):
    return json.dumps(spec.to_json(), indent=2, sort_keys=True)


# --------------------------------------------------------------------------
# canonical networks used throughout tests and examples

def tandem(exponents=(1.0, 2.0), dist="exponential"):
    """Two stations in series, external arrivals at rate 1 into station 1."""
    return NetworkSpec.build([[0.0, 1.0], [0.0, 0.0]], [1.0, 0.0],
                             ScaleRegime.singletons(exponents), dist, dist)


def single_station(exponent=1.0, arrival="exponential", service="exponential"):
    """A lone G/G/1 queue with arrival rate 1 (M/M/1 by default)."""
    return NetworkSpec.build([[0.0]], [1.0], ScaleRegime.singletons([exponent]),
                             arrival, service)


def random_network(rng, J, density=0.6, exit_min=0.1, dist="random"):
    """Random open network for property-style checks.

    Every row leaves at least ``exit_min`` probability of exiting, which makes
    the network open. At least station 1 receives external traffic.
    """
    P = rng.uniform(0, 1, (J, J)) * (rng.uniform(0, 1, (J, J)) < density)
    np.fill_diagonal(P, P.diagonal() * (rng.uniform(0, 1, J) < 0.3))
    rows = P.sum(axis=1)
    budget = rng.uniform(0.0, 1.0 - exit_min, J)
    scale = np.where(rows > 0, budget / np.where(rows > 0, rows, 1.0), 0.0)
    P = P * scale[:, None]
    alpha = rng.uniform(0.2, 2.0, J) * (rng.uniform(0, 1, J) < 0.7)
    alpha[0] = max(alpha[0], 0.5)
    # guarantee every station gets traffic
    lam = np.linalg.solve(np.eye(J) - P.T, alpha)
    alpha = np.where(lam <= 1e-9, 0.5, alpha)

    def pick():
        fam = rng.choice(["exponential", "deterministic", "uniform", "erlang",
                          "hyperexponential", "lognormal"])
        return DistributionSpec(str(fam), {
            "uniform": {"low": float(rng.uniform(0, 1)), "high": 2.0},
            "erlang": {"k": int(rng.integers(1, 5))},
            "hyperexponential": {"probs": [0.3, 0.7], "rates": [0.4, 3.0]},
            "lognormal": {"sigma": float(rng.uniform(0.2, 1.0))},
        }.get(str(fam), {}))

    if dist == "random":
        arr = tuple(pick() for _ in range(J))
        svc = tuple(pick() for _ in range(J))
    else:
        arr = svc = tuple(DistributionSpec(dist) for _ in range(J))
    return NetworkSpec(P, alpha, arr, svc,
                       ScaleRegime.singletons(range(1, J + 1)))
