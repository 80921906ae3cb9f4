"""Command-line front end.

Usage::

    msgjn <subcommand> --config cfg.json [--seed N] [--workers N] [--out DIR]
          [--emit-plot-data] [--plot]

Subcommands: ``limits``, ``simulate-gjn``, ``simulate-srbm``, ``verify``,
``sweep``. Every flag can also be given through an environment variable with
the ``MSGJN_`` prefix (``MSGJN_SEED``, ``MSGJN_WORKERS``, ``MSGJN_OUT``,
``MSGJN_CONFIG``, ``MSGJN_EMIT_PLOT_DATA``, ``MSGJN_PLOT``). Flags beat the
environment, which beats the config file.

Exit codes: 0 success, 1 a check failed, 2 bad configuration, 3 runtime
error (event cap hit, reflection did not converge).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import gjn_sim, limit_calculus as lc, srbm_sim, verify
from .errors import EventOverflow, GJNError, NoConvergence, SpecError
from .network_model import spec_from_dict, validate

log = logging.getLogger("msgjn")

ENV_PREFIX = "MSGJN_"
SUBCOMMANDS = ("limits", "simulate-gjn", "simulate-srbm", "verify", "sweep")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

DEFAULTS = {
    "r_grid": [0.3, 0.1, 0.03],
    "regime": "matching",
    "simulate_gjn": {"r": 0.1, "xi": None, "initial": "matching", "horizon": 1.0,
                     "points": 101, "replications": 1, "k": 1},
    "simulate_srbm": {"mode": "prelimit", "r": 0.1, "k": 1, "xi": None, "horizon": 1.0,
                      "step": 1e-3, "replications": 1, "component": 1, "every": 10},
    "verify": {"checks": list(verify.DEFAULT_SUITE)},
    "sweep": {"t_probe": 1.0, "replications": 500, "station": 1, "xi": None,
              "step": 1e-3},
}


class ConfigError(SpecError):
    pass


def _env(name):
    return os.environ.get(ENV_PREFIX + name)


def _truthy(v):
    return str(v).strip().lower() in ("1", "true", "yes", "on")


def load_config(path):
    """Read a config file; an emitted report is accepted too (its echo is used)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", path=str(path)) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]
    base = Path(path).parent
    if "network_path" in doc:
        npath = base / doc.pop("network_path")
        try:
            doc["network"] = json.loads(npath.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load network: {exc}", path="network_path") from None
    return doc


def resolve(args):
    """Merge defaults, config file, environment and flags into one config."""
    cfg_path = args.config or _env("CONFIG")
    if not cfg_path:
        raise ConfigError("no config given (use --config or MSGJN_CONFIG)")
    doc = load_config(cfg_path)
    cfg = json.loads(json.dumps(DEFAULTS))
    for key, val in doc.items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    seed = args.seed if args.seed is not None else _env("SEED") or doc.get("seed")
    if seed is None:
        raise ConfigError("a master seed is required", path="seed")
    try:
        cfg["seed"] = int(seed)
    except (TypeError, ValueError):
        raise ConfigError("seed must be an integer", path="seed") from None
    if cfg["seed"] < 0 or cfg["seed"] >= 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer", path="seed")
    workers = args.workers if args.workers is not None else _env("WORKERS") or doc.get("workers", 1)
    try:
        workers = int(workers)
    except (TypeError, ValueError):
        raise ConfigError("workers must be an integer", path="workers") from None
    if workers < 1:
        raise ConfigError("workers must be at least 1", path="workers")
    cfg.pop("workers", None)
    out = args.out or _env("OUT") or doc.get("out") or "out"
    cfg.pop("out", None)
    rg = cfg["r_grid"]
    if (not isinstance(rg, list) or not rg or any(not 0 < float(r) < 1 for r in rg)
            or any(b >= a for a, b in zip(rg, rg[1:]))):
        raise ConfigError("r_grid must be strictly decreasing inside (0, 1)", path="r_grid")
    emit = args.emit_plot_data or _truthy(_env("EMIT_PLOT_DATA") or "")
    plot = args.plot or _truthy(_env("PLOT") or "")
    return cfg, {"workers": workers, "out": Path(out), "emit": emit, "plot": plot}


def _network(cfg, required=True):
    if "network" not in cfg:
        if required:
            raise ConfigError("missing required key", path="network")
        return None
    spec = spec_from_dict(cfg["network"], prefix="network.")
    issues = validate(spec)
    if issues:
        raise ConfigError("; ".join(issues), path="network")
    return spec


def _dump_json(obj, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(verify._plain(obj), indent=2, sort_keys=True) + "\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in row])
    return str(path)


def _initial(spec, r, sub):
    init = sub.get("initial", "matching")
    xi = sub.get("xi") or [1.0] * spec.J
    if isinstance(init, list):
        return np.asarray(init, dtype=np.int64)
    if init == "matching":
        return gjn_sim.matching_initial(spec.regime, r, xi)
    if init == "lowest":
        return gjn_sim.lowest_initial(spec.regime, r, xi)
    raise ConfigError("initial must be 'matching', 'lowest' or a list", path="simulate_gjn.initial")


# --------------------------------------------------------------------------
# subcommands; each returns (report, exit_code, manifest)

def cmd_limits(cfg, opts):
    spec = _network(cfg)
    rep = lc.limits_report(spec)
    manifest = []
    if opts["emit"]:
        rows = []
        for name in ("w", "Gamma", "R"):
            m = np.asarray(rep[name])
            rows += [(name, i + 1, j + 1, m[i, j]) for i in range(m.shape[0])
                     for j in range(m.shape[1])]
        manifest.append(_write_csv(opts["out"] / "plot_matrices.csv",
                                   ["matrix", "row", "col", "value"], rows))
    if opts["plot"]:
        from . import plots
        manifest.append(plots.matrix_heatmaps(
            {"w": rep["w"], "Gamma": rep["Gamma"], "R": rep["R"]},
            opts["out"] / "matrices.png"))
    return {"limits": rep}, EXIT_OK, manifest


def cmd_simulate_gjn(cfg, opts):
    spec = _network(cfg)
    sub = cfg["simulate_gjn"]
    r = float(sub["r"])
    k = int(sub.get("k", 1))
    z0 = _initial(spec, r, sub)
    g = spec.regime.gamma(r)[k - 1]
    t_scaled = np.linspace(0.0, float(sub["horizon"]), int(sub["points"]))
    obs = t_scaled / g**2
    J = spec.J
    header = (["replication", "t"] + [f"Z_{j}" for j in range(1, J + 1)]
              + [f"B_{j}" for j in range(1, J + 1)] + [f"Y_{j}" for j in range(1, J + 1)])
    rows, events, finals = [], [], []
    for i in range(int(sub["replications"])):
        out = gjn_sim.simulate(spec, r, z0, obs[-1], obs, cfg["seed"], i,
                               int(sub.get("event_cap", gjn_sim.DEFAULT_EVENT_CAP)))
        events.append(out.event_count)
        finals.append((out.queue_lengths[-1] * g).tolist())
        for m in range(obs.size):
            rows.append([i, obs[m]] + out.queue_lengths[m].tolist()
                        + out.busy_times[m].tolist() + out.idle_regulator[m].tolist())
    manifest = [_write_csv(opts["out"] / "gjn_paths.csv", header, rows)]
    if opts["emit"]:
        long = [(int(row[0]), row[1] * g**2, j + 1, row[2 + j] * g)
                for row in rows for j in range(J)]
        manifest.append(_write_csv(opts["out"] / "plot_gjn_scaled.csv",
                                   ["replication", "t_scaled", "station", "scaled_queue"], long))
    if opts["plot"]:
        from . import plots
        first = np.array([row[2:2 + J] for row in rows[:obs.size]], dtype=float) * g
        manifest.append(plots.path_plot(t_scaled, first, opts["out"] / "gjn_paths.png",
                                        [f"station {j + 1}" for j in range(J)],
                                        f"scaled queue lengths, r = {r}", "scaled Z"))
    summary = {"z0": z0.tolist(), "mu": gjn_sim.service_rates(spec, r).tolist(),
               "event_counts": events, "final_scaled_queue": finals,
               "scale": float(g)}
    return {"simulate_gjn": summary}, EXIT_OK, manifest


def cmd_simulate_srbm(cfg, opts):
    sub = cfg["simulate_srbm"]
    step, horizon = float(sub["step"]), float(sub["horizon"])
    reps = int(sub["replications"])
    mode = sub.get("mode", "prelimit")
    seed = cfg["seed"]
    if mode == "prelimit":
        spec = _network(cfg, required=False)
        if spec is not None:
            model, regime = spec, spec.regime
        else:
            try:
                model = (np.asarray(sub["R"], dtype=float), np.asarray(sub["Gamma"], dtype=float))
            except KeyError as exc:
                raise ConfigError("missing required key", path=f"simulate_srbm.{exc.args[0]}") from None
            from .network_model import ScaleRegime
            regime = ScaleRegime.singletons(sub.get("exponents", range(1, model[0].shape[0] + 1)))
        r, k = float(sub["r"]), int(sub["k"])
        d = regime.J
        xi = np.asarray(sub.get("xi") or [1.0] * d, dtype=float)
        z0 = xi / regime.station_gamma(r)
        arr = srbm_sim.simulate_prelimit_family(model, r, z0, k, horizon, step, seed, regime,
                                                reps, what=("z", "y"), workers=opts["workers"])
    elif mode == "limit":
        spec = _network(cfg)
        kind = cfg.get("regime", "matching")
        desc = lc.limit_descriptor(spec, kind)
        comp = desc.components[int(sub["component"]) - 1]
        xi = np.asarray(sub.get("xi") or [1.0] * spec.J, dtype=float)
        spec_s = srbm_sim.SrbmSpec.from_component(comp, comp.initial_from(xi))
        arr = srbm_sim.simulate_srbm_batch(spec_s, horizon, step, seed, reps, None,
                                           ("z", "y"), opts["workers"])
    else:
        raise ConfigError("mode must be 'prelimit' or 'limit'", path="simulate_srbm.mode")
    t = srbm_sim.time_grid(horizon, step)
    every = max(1, int(sub.get("every", 1)))
    d = arr.shape[-1]
    header = ["replication", "t"] + [f"z_{j}" for j in range(1, d + 1)] \
        + [f"y_{j}" for j in range(1, d + 1)]
    rows = [[i, t[n]] + arr[i, 0, n].tolist() + arr[i, 1, n].tolist()
            for i in range(reps) for n in range(0, t.size, every)]
    manifest = [_write_csv(opts["out"] / "srbm_paths.csv", header, rows)]
    zT = arr[:, 0, -1, :]
    summary = {"mode": mode, "dimension": d, "grid_points": int(t.size),
               "mean_final": zT.mean(axis=0).tolist(),
               "var_final": zT.var(axis=0, ddof=1).tolist() if reps > 1 else None,
               "time_average": arr[:, 0].mean(axis=(0, 1)).tolist()}
    if opts["emit"]:
        long = [(i, t[n], j + 1, arr[i, 0, n, j]) for i in range(reps)
                for n in range(0, t.size, every) for j in range(d)]
        manifest.append(_write_csv(opts["out"] / "plot_srbm.csv",
                                   ["replication", "t", "coordinate", "z"], long))
    if opts["plot"]:
        from . import plots
        manifest.append(plots.path_plot(t[::every], arr[0, 0, ::every],
                                        opts["out"] / "srbm_paths.png",
                                        title=f"SRBM ({mode})", ylabel="z"))
    return {"simulate_srbm": summary}, EXIT_OK, manifest


def cmd_verify(cfg, opts):
    sub = cfg["verify"]
    names = sub.get("checks", list(verify.DEFAULT_SUITE))
    per = {n: sub.get(n, {}) for n in names}
    for n in names:
        if n in ("independence",) and opts["workers"] > 1:
            per[n] = dict(per[n], workers=opts["workers"])
    timings = {}
    try:
        results = verify.run_suite(cfg["seed"], names, per, timings)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path="verify") from None
    failed = [r.name for r in results if not r.passed and not r.trend_only]
    manifest = []
    sweeps = {}
    for r in results:
        for key in ("sweep", "queue", "regulator"):
            sw = r.details.get(key)
            if isinstance(sw, dict) and "r_grid" in sw:
                sweeps[f"{r.name}/{key}"] = sw
    if opts["emit"] and sweeps:
        rows = [(name, sw["name"], rr, mm) for name, sw in sweeps.items()
                for rr, mm in zip(sw["r_grid"], sw["metric"])]
        manifest.append(_write_csv(opts["out"] / "plot_sweeps.csv",
                                   ["check", "metric", "r", "value"], rows))
    if opts["plot"] and sweeps:
        from . import plots
        manifest.append(plots.sweep_plot(sweeps, opts["out"] / "sweeps.png"))
    rep = {"results": [r.to_json() for r in results], "failed": failed,
           "passed": not failed}
    opts["timings"] = timings
    return {"verify": rep}, EXIT_FAIL if failed else EXIT_OK, manifest


def cmd_sweep(cfg, opts):
    """Scaled GJN coordinate at a probe time against its matching-rate limit."""
    spec = _network(cfg)
    sub = cfg["sweep"]
    station = int(sub["station"])
    t_probe, reps, step = float(sub["t_probe"]), int(sub["replications"]), float(sub["step"])
    xi = np.asarray(sub.get("xi") or [1.0] * spec.J, dtype=float)
    desc = lc.limit_descriptor(spec, "matching")
    n = int(round(t_probe / step))
    lim = srbm_sim.simulate_limit(desc, station, [xi[station - 1]], t_probe, step,
                                  cfg["seed"], reps, [n], opts["workers"], tag=5)[:, 0, 0]
    rows, per_r = [], []
    for r in cfg["r_grid"]:
        z0 = gjn_sim.matching_initial(spec.regime, r, xi)
        x = gjn_sim.multiscale_probe(spec, r, z0, t_probe, cfg["seed"], reps, opts["workers"])
        s = x[:, station - 1]
        dist = verify.ks_distance(s, lim)
        per_r.append({"r": r, "mean": float(s.mean()), "var": float(s.var(ddof=1)),
                      "ks_distance": dist})
        rows.append((r, float(s.mean()), float(s.var(ddof=1)), dist))
    sweep = verify.ConvergenceSweep(list(cfg["r_grid"]), [p["ks_distance"] for p in per_r],
                                    "ks-distance")
    manifest = [_write_csv(opts["out"] / "sweep.csv", ["r", "mean", "var", "ks_distance"], rows)]
    if opts["emit"]:
        manifest.append(_write_csv(opts["out"] / "plot_sweep.csv", ["r", "metric", "value"],
                                   [(p["r"], k, p[k]) for p in per_r
                                    for k in ("mean", "var", "ks_distance")]))
    if opts["plot"]:
        from . import plots
        manifest.append(plots.sweep_plot({"sweep": sweep.to_json()}, opts["out"] / "sweep.png"))
    rep = {"station": station, "t_probe": t_probe, "limit_mean": float(lim.mean()),
           "per_r": per_r, "sweep": sweep.to_json()}
    return {"sweep": rep}, EXIT_OK, manifest


COMMANDS = {"limits": cmd_limits, "simulate-gjn": cmd_simulate_gjn,
            "simulate-srbm": cmd_simulate_srbm, "verify": cmd_verify, "sweep": cmd_sweep}


def build_parser():
    p = argparse.ArgumentParser(prog="msgjn", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    p.add_argument("--workers", type=int, help="worker processes for replications")
    p.add_argument("--out", help="output directory")
    p.add_argument("--emit-plot-data", action="store_true",
                   help="also write long-format CSVs for external plotting")
    p.add_argument("--plot", action="store_true", help="render PNG figures into --out")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def run(command, cfg, opts):
    """Dispatch one subcommand and write its report. Returns the exit code."""
    t0 = time.perf_counter()
    body, code, manifest = COMMANDS[command](cfg, opts)
    out = opts["out"]
    report = {"command": command, "config": cfg, **body,
              "artifacts": sorted(Path(m).name for m in manifest)}
    _dump_json(report, out / "report.json")
    timing = {"runtime_seconds": time.perf_counter() - t0, "workers": opts["workers"]}
    if opts.get("timings"):
        timing["checks"] = opts["timings"]
    _dump_json(timing, out / "timing.json")
    return code


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg, opts = resolve(args)
        code = run(args.command, cfg, opts)
    except SpecError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EventOverflow, NoConvergence) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except GJNError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if code == EXIT_FAIL:
        print("one or more checks failed", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
