"""Command-line entry point.

    impflow run --config scenario.yaml [--seed N] [--protocol P] [--split on|off] [--out DIR] [--trace]
    impflow sweep --config sweep.yaml
    impflow oracle --config oracle.yaml
    impflow topo-dump --config scenario.yaml

The config is a flat YAML mapping; every key is optional and listed in
``DEFAULTS``.  The fully defaulted config is written next to the reports and
echoed as ``#`` comment lines at the top of every CSV/summary, and feeding it
back reproduces the same files.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import yaml

from . import metrics
from .engine import PROTOCOLS, AuditError, CapacityViolation, SimConfig, run
from .oracle import OracleGuardError, TinyInstance, random_tiny_instance, solve_global
from .topology import build_bcube
from .workload import SIZE_RANGES_KB, WorkloadSpec, gen_ranked_trace, gen_synthetic, load_trace

log = logging.getLogger("impflow")

DEFAULTS = {
    # topology and transport
    "n": 5,
    "k": 2,
    "capacity_bps": 1_000_000_000,
    "rtt_min_us": 35.0,
    "rtt_max_us": 100.0,
    "processing_delay_us": 5.0,
    "rto_ms": 200.0,
    "epoch_ms": 1.0,
    "retry_spacing_ms": 1.0,
    "audit": True,
    # protocol
    "protocol": "importance",
    "flow_splitting": True,
    "clusters": 2,
    # workload: synthetic (bimodal), ranked (heavy-tailed scores + truth) or a trace file
    "workload": "synthetic",
    "trace_file": None,
    "load_regime": "heavy",
    "deadline_mean_ms": 20.0,
    "pattern": "partition_aggregate",
    "high": 10.0,
    "low": 1.0,
    "high_fraction": 0.5,
    "unit_size": 1000,
    "n_flows": 100,
    "mean_interarrival_ms": 0.5,
    "truth_len": 200,
    # runs
    "seeds": [0],
    "repeat": None,
    "ks": [10, 50, 100],
    "precision_mode": "received",
    "out": "out",
    "emit_trace": False,
    "jobs": 1,
    # sweep grid
    "sweep_load_regimes": ["light", "medium", "heavy"],
    "sweep_deadline_means_ms": [20.0, 30.0, 40.0],
    "sweep_protocols": list(PROTOCOLS),
    "sweep_split": [True],
    # oracle comparison
    "oracle_instances": 20,
    "oracle_max_flows": 8,
    "oracle_capacity_bps": 50_000_000,
    "oracle_deadline_ms": 10.0,
    "oracle_n": 2,
    "oracle_k": 1,
    "oracle_routing": "splittable",
}


class ConfigError(ValueError):
    pass


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"invalid value for {key}: {msg}")


def validate(cfg: dict) -> dict:
    unknown = sorted(set(cfg) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    out = {**DEFAULTS, **cfg}
    for key in ("n", "k", "clusters", "unit_size", "n_flows", "truth_len", "jobs", "oracle_instances",
                "oracle_max_flows", "oracle_n", "oracle_k"):
        _check(isinstance(out[key], int) and not isinstance(out[key], bool), key, "must be an integer")
    for key in ("capacity_bps", "rtt_min_us", "rtt_max_us", "processing_delay_us", "rto_ms", "epoch_ms",
                "retry_spacing_ms", "deadline_mean_ms", "high", "low", "high_fraction",
                "mean_interarrival_ms", "oracle_capacity_bps", "oracle_deadline_ms"):
        _check(isinstance(out[key], (int, float)) and not isinstance(out[key], bool), key, "must be a number")
    _check(out["n"] >= 2, "n", "must be >= 2")
    _check(out["k"] >= 0, "k", "must be >= 0")
    _check(out["capacity_bps"] > 0, "capacity_bps", "must be > 0")
    for key in ("rtt_min_us", "rtt_max_us", "processing_delay_us", "rto_ms", "retry_spacing_ms", "low", "high",
                "mean_interarrival_ms"):
        _check(out[key] >= 0, key, "must be >= 0")
    _check(out["rtt_max_us"] >= out["rtt_min_us"], "rtt_max_us", "must be >= rtt_min_us")
    _check(out["epoch_ms"] > 0, "epoch_ms", "must be > 0")
    _check(out["deadline_mean_ms"] > 0, "deadline_mean_ms", "must be > 0")
    _check(0 <= out["high_fraction"] <= 1, "high_fraction", "must be in [0, 1]")
    _check(out["protocol"] in PROTOCOLS, "protocol", f"must be one of {', '.join(PROTOCOLS)}")
    _check(isinstance(out["flow_splitting"], bool), "flow_splitting", "must be true or false")
    _check(out["clusters"] >= 1, "clusters", "must be >= 1")
    _check(out["workload"] in ("synthetic", "ranked", "trace"), "workload", "must be synthetic, ranked or trace")
    _check(out["workload"] != "trace" or bool(out["trace_file"]), "trace_file", "required when workload is trace")
    _check(out["load_regime"] in SIZE_RANGES_KB, "load_regime", f"must be one of {', '.join(SIZE_RANGES_KB)}")
    _check(out["pattern"] in ("partition_aggregate", "random_pairs"), "pattern",
           "must be partition_aggregate or random_pairs")
    _check(out["unit_size"] > 0, "unit_size", "must be > 0")
    _check(out["precision_mode"] in ("received", "k"), "precision_mode", "must be received or k")
    _check(out["jobs"] >= 1, "jobs", "must be >= 1")
    if out["repeat"] is not None:
        _check(isinstance(out["repeat"], int) and out["repeat"] >= 1, "repeat", "must be a positive integer")
        if "seeds" not in cfg:
            out["seeds"] = list(range(out["repeat"]))
        _check(len(out["seeds"]) == out["repeat"], "repeat", "must equal the number of seeds")
    _check(isinstance(out["seeds"], list) and len(out["seeds"]) > 0
           and all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in out["seeds"]),
           "seeds", "must be a non-empty list of non-negative integers")
    _check(isinstance(out["ks"], list) and all(isinstance(x, int) and x >= 1 for x in out["ks"]),
           "ks", "must be a list of positive integers")
    _check(isinstance(out["sweep_load_regimes"], list) and out["sweep_load_regimes"]
           and all(r in SIZE_RANGES_KB for r in out["sweep_load_regimes"]), "sweep_load_regimes",
           "must list light/medium/heavy")
    _check(isinstance(out["sweep_deadline_means_ms"], list) and out["sweep_deadline_means_ms"]
           and all(isinstance(x, (int, float)) and x > 0 for x in out["sweep_deadline_means_ms"]),
           "sweep_deadline_means_ms", "must list positive numbers")
    _check(isinstance(out["sweep_protocols"], list) and out["sweep_protocols"]
           and all(p in PROTOCOLS for p in out["sweep_protocols"]), "sweep_protocols",
           f"must list protocols from {', '.join(PROTOCOLS)}")
    _check(isinstance(out["sweep_split"], list) and out["sweep_split"]
           and all(isinstance(x, bool) for x in out["sweep_split"]), "sweep_split", "must list true/false")
    _check(out["oracle_routing"] in ("splittable", "unsplittable"), "oracle_routing",
           "must be splittable or unsplittable")
    _check(out["oracle_instances"] >= 1, "oracle_instances", "must be >= 1")
    _check(out["oracle_max_flows"] >= 1, "oracle_max_flows", "must be >= 1")
    _check(out["oracle_deadline_ms"] > 0, "oracle_deadline_ms", "must be > 0")
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    raw: dict = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh) or {}
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse config {path}: {e}") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"config {path} must be a mapping of keys to values")
    if overrides.get("seeds") is not None:
        raw.pop("repeat", None)
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return validate(raw)


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)


def header(cfg: dict) -> str:
    return "".join(f"# {line}\n" for line in dump_config(cfg).splitlines())


# -- scenario runs -------------------------------------------------------------

def sim_config(cfg: dict, protocol: str, split: bool, seed: int) -> SimConfig:
    return SimConfig(n=cfg["n"], k=cfg["k"], capacity_bps=int(cfg["capacity_bps"]),
                     rtt_min_us=cfg["rtt_min_us"], rtt_max_us=cfg["rtt_max_us"],
                     processing_delay_us=cfg["processing_delay_us"], seed=seed, protocol=protocol,
                     flow_splitting=split, clusters=cfg["clusters"], rto_ms=cfg["rto_ms"],
                     epoch_ms=cfg["epoch_ms"], retry_spacing_ms=cfg["retry_spacing_ms"], audit=cfg["audit"])


def build_workload(cfg: dict, regime: str, deadline_ms: float, seed: int, topo):
    if cfg["workload"] == "trace":
        return load_trace(cfg["trace_file"])
    if cfg["workload"] == "ranked":
        return gen_ranked_trace(topo, seed, regime, deadline_ms / 1000, truth_len=cfg["truth_len"],
                                unit_size=cfg["unit_size"])
    spec = WorkloadSpec(regime, deadline_ms / 1000, high=cfg["high"], low=cfg["low"],
                        high_fraction=cfg["high_fraction"], unit_size=cfg["unit_size"], pattern=cfg["pattern"],
                        seed=seed, n_flows=cfg["n_flows"], mean_interarrival=cfg["mean_interarrival_ms"] / 1000)
    return gen_synthetic(spec, topo), None


def run_cell(args):
    cfg, regime, deadline_ms, protocol, split, seed = args
    topo = build_bcube(cfg["n"], cfg["k"], int(cfg["capacity_bps"]),
                       (cfg["rtt_min_us"] * 1e-6, cfg["rtt_max_us"] * 1e-6))
    flows, truth = build_workload(cfg, regime, deadline_ms, seed, topo)
    trace = run(sim_config(cfg, protocol, split, seed), flows, topo)
    rep = metrics.report(trace, truth, cfg["ks"] if truth else (), cfg["precision_mode"])
    row = {"load_regime": regime, "deadline_mean_ms": _num(deadline_ms), "protocol": protocol,
           "split": "on" if split else "off", "seed": seed, "flows": len(trace.flows), **rep.row()}
    return row, trace.to_text(), rep


def _num(x) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _csv(rows: list[dict], cfg: dict) -> str:
    buf = io.StringIO()
    if rows:
        fields = list(rows[0])
        for r in rows[1:]:
            fields += [f for f in r if f not in fields]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", restval="")
        w.writeheader()
        w.writerows(rows)
    return header(cfg) + buf.getvalue()


def _execute(cfg: dict, cells: list[tuple]):
    if cfg["jobs"] > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as pool:
            return list(pool.map(run_cell, cells))
    return [run_cell(c) for c in cells]


def _summary(cfg: dict, rows: list[dict]) -> str:
    lines = [header(cfg).rstrip("\n"), ""]
    groups: dict[tuple, list[dict]] = {}
    for r in rows:
        groups.setdefault((r["load_regime"], r["deadline_mean_ms"], r["protocol"], r["split"]), []).append(r)
    for key, rs in groups.items():
        imp = [float(r["aggregated_importance"]) for r in rs]
        ratio = [float(r["deadline_ratio"]) for r in rs]
        lines.append(f"{key[0]:6s} deadline={key[1]:>4s}ms {key[2]:14s} split={key[3]:3s} seeds={len(rs)} "
                     f"importance mean={statistics.fmean(imp):.1f} min={min(imp):.1f} max={max(imp):.1f} "
                     f"deadline_ratio mean={statistics.fmean(ratio):.3f}")
    return "\n".join(lines) + "\n"


def _write_outputs(cfg: dict, out: Path, name: str, results) -> list[dict]:
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.yaml").write_text(dump_config(cfg))
    rows = [r for r, _, _ in results]
    (out / f"{name}.csv").write_text(_csv(rows, cfg))
    (out / "summary.txt").write_text(_summary(cfg, rows))
    if cfg["emit_trace"]:
        for row, text, _ in results:
            tag = f"{row['load_regime']}_{row['deadline_mean_ms']}ms_{row['protocol']}_{row['split']}_s{row['seed']}"
            (out / f"trace_{tag}.txt").write_text(text)
    return rows


def cmd_run(cfg: dict) -> int:
    cells = [(cfg, cfg["load_regime"], cfg["deadline_mean_ms"], cfg["protocol"], cfg["flow_splitting"], s)
             for s in cfg["seeds"]]
    results = _execute(cfg, cells)
    out = Path(cfg["out"])
    _write_outputs(cfg, out, "metrics", results)
    if len(results) == 1:
        (out / "outcomes.csv").write_text(header(cfg) + results[0][2].outcome_csv())
    print((out / "summary.txt").read_text(), end="")
    return 0


def cmd_sweep(cfg: dict) -> int:
    cells = [(cfg, regime, dm, proto, split, seed)
             for regime in cfg["sweep_load_regimes"]
             for dm in cfg["sweep_deadline_means_ms"]
             for proto in cfg["sweep_protocols"]
             for split in cfg["sweep_split"]
             for seed in cfg["seeds"]]
    results = _execute(cfg, cells)
    out = Path(cfg["out"])
    rows = _write_outputs(cfg, out, "sweep", results)
    series = []
    for metric in ("goodput_bytes", "aggregated_importance", "deadline_ratio", "deadline_ratio_important"):
        groups: dict[tuple, list[float]] = {}
        for r in rows:
            if r[metric] == "":
                continue
            groups.setdefault((r["load_regime"], r["protocol"], r["split"], r["deadline_mean_ms"]),
                              []).append(float(r[metric]))
        for (regime, proto, split, x), ys in groups.items():
            series.append({"metric": metric, "load_regime": regime, "protocol": proto, "split": split,
                           "x_deadline_mean_ms": x, "y_mean": f"{statistics.fmean(ys):.6f}"})
    (out / "series.csv").write_text(_csv(series, cfg))
    print((out / "summary.txt").read_text(), end="")
    return 0


def oracle_rows(cfg: dict, instances: list[tuple[str, TinyInstance]]) -> list[dict]:
    rows = []
    for iid, inst in instances:
        sol = solve_global(inst, cfg["oracle_routing"])
        got = {}
        for proto in PROTOCOLS:
            sc = SimConfig(n=inst.topology.n, k=inst.topology.k, capacity_bps=int(cfg["oracle_capacity_bps"]),
                           rtt_min_us=cfg["rtt_min_us"], rtt_max_us=cfg["rtt_max_us"],
                           processing_delay_us=cfg["processing_delay_us"], protocol=proto,
                           flow_splitting=cfg["flow_splitting"], clusters=cfg["clusters"], seed=cfg["seeds"][0],
                           rto_ms=cfg["rto_ms"], epoch_ms=cfg["epoch_ms"], audit=cfg["audit"])
            got[proto] = metrics.aggregated_importance(run(sc, inst.flows, inst.topology))
        gap = got["importance"] / sol.objective if sol.objective > 0 else 1.0
        rows.append({"instance_id": iid, "oracle": f"{sol.objective:.6f}",
                     "importance_proto": f"{got['importance']:.6f}", "fcfs": f"{got['fcfs_deadline']:.6f}",
                     "fairshare": f"{got['fairshare']:.6f}", "gap_ratio": f"{gap:.6f}"})
    return rows


def cmd_oracle(cfg: dict) -> int:
    if cfg["workload"] == "trace":
        flows, _ = load_trace(cfg["trace_file"])
        topo = build_bcube(cfg["oracle_n"], cfg["oracle_k"], int(cfg["oracle_capacity_bps"]),
                           (cfg["rtt_min_us"] * 1e-6, cfg["rtt_max_us"] * 1e-6))
        instances = [("trace", TinyInstance(topo, flows))]
    else:
        if cfg["oracle_max_flows"] > 10:
            raise OracleGuardError(f"oracle_max_flows={cfg['oracle_max_flows']} exceeds the exhaustive-search "
                                   "limit of 10; use a smaller instance")
        base = cfg["seeds"][0]
        instances = []
        for i in range(cfg["oracle_instances"]):
            m = int(np.random.default_rng([base, i]).integers(1, cfg["oracle_max_flows"] + 1))
            inst = random_tiny_instance(base * 100_000 + i, m, int(cfg["oracle_capacity_bps"]),
                                        cfg["oracle_deadline_ms"] / 1000, cfg["oracle_n"], cfg["oracle_k"])
            instances.append((f"i{i:04d}", inst))
    rows = oracle_rows(cfg, instances)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.yaml").write_text(dump_config(cfg))
    text = _csv(rows, cfg)
    (out / "oracle.csv").write_text(text)
    print(text, end="")
    return 0


def cmd_topo_dump(cfg: dict) -> int:
    topo = build_bcube(cfg["n"], cfg["k"], int(cfg["capacity_bps"]))
    sys.stdout.write(topo.dump())
    return 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle, "topo-dump": cmd_topo_dump}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="impflow", description="Importance-aware datacenter flow simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--protocol", choices=PROTOCOLS)
        p.add_argument("--split", choices=("on", "off"))
        p.add_argument("--out")
        p.add_argument("--trace", action="store_true", help="write the full event trace of every run")
    args = parser.parse_args(argv)
    level = os.environ.get("IMPFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")

    overrides = {
        "seeds": [args.seed] if args.seed is not None else None,
        "protocol": args.protocol,
        "flow_splitting": None if args.split is None else args.split == "on",
        "out": args.out,
        "emit_trace": True if args.trace else None,
    }
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, OracleGuardError) as e:
        print(f"impflow: error: {e}", file=sys.stderr)
        return 2
    except (AuditError, CapacityViolation) as e:
        print(f"impflow: invariant audit failed: {e}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as e:
        print(f"impflow: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
