"""Command line entry point: run one policy or compare both on identical arrivals."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import yaml

from .engine import POLICIES, Deadlock, EngineConfig, Livelock, Simulation, run
from .metrics import MetricsError, emit, summarize
from .workflow import KINDS, WorkflowError, retime, workflow_from_document
from .workload import PATTERNS, ArrivalPattern, UnreachableTotal, generate_arrivals, inject

log = logging.getLogger("arasim")

# config-file keys, mapped onto argparse dests
_KEYS = {
    "policy", "pattern", "workflow", "nodes", "node_cpu_m", "node_mem_mi", "interval_s", "alpha", "beta_mi",
    "seed", "out", "total", "max_rounds", "min_cpu_m", "min_mem_mi", "true_peak_mem_mi", "cleanup_delay_s",
    "reallocation_delay_s", "slack", "workflow_file",
}


class ConfigError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="arasim", description=__doc__)
    p.add_argument("--config", help="YAML/JSON file supplying any of the options below (flags win)")
    p.add_argument("--policy", choices=POLICIES)
    p.add_argument("--pattern", choices=PATTERNS)
    p.add_argument("--workflow", choices=KINDS)
    p.add_argument("--workflow-file", help="ingest a workflow document instead of a built-in topology")
    p.add_argument("--nodes", type=int)
    p.add_argument("--node-cpu-m", type=int)
    p.add_argument("--node-mem-mi", type=int)
    p.add_argument("--interval-s", type=int, help="seconds between request bursts")
    p.add_argument("--total", type=int, help="number of workflow requests (pattern default if omitted)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta-mi", type=int)
    p.add_argument("--max-rounds", type=int)
    p.add_argument("--min-cpu-m", type=int)
    p.add_argument("--min-mem-mi", type=int)
    p.add_argument("--true-peak-mem-mi", type=int, help="memory a task really uses (default: its min_mem)")
    p.add_argument("--cleanup-delay-s", type=int)
    p.add_argument("--reallocation-delay-s", type=int)
    p.add_argument("--slack", type=float, help="deadline slack factor")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--compare", action="store_true", help="run both policies on the same arrivals")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a mapping")
    doc = {k.replace("-", "_"): v for k, v in doc.items()}
    unknown = set(doc) - _KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return doc


def resolve(args: argparse.Namespace) -> tuple[EngineConfig, str, str | None]:
    """Merge defaults, config file and flags into an engine config, output dir and workflow file."""
    opts = {"policy": "aras", "pattern": "constant", "workflow": "montage", "seed": 0, "out": "results"}
    if args.config:
        opts.update(_load_config_file(args.config))
    for key in _KEYS:
        value = getattr(args, key, None)
        if value is not None:
            opts[key] = value
    if opts["policy"] not in POLICIES or opts["pattern"] not in PATTERNS or opts["workflow"] not in KINDS:
        raise ConfigError(f"bad policy/pattern/workflow: {opts['policy']}/{opts['pattern']}/{opts['workflow']}")
    try:
        pattern = ArrivalPattern(opts["pattern"], interval=int(opts.get("interval_s", 300)), total=opts.get("total"))
        engine_keys = {
            "nodes": "nodes", "node_cpu_m": "node_cpu_m", "node_mem_mi": "node_mem_mi", "alpha": "alpha",
            "beta_mi": "beta", "max_rounds": "max_rounds", "min_cpu_m": "min_cpu_m", "min_mem_mi": "min_mem_mi",
            "true_peak_mem_mi": "true_peak_mem_mi", "cleanup_delay_s": "cleanup_delay_s",
            "reallocation_delay_s": "reallocation_delay_s", "slack": "slack",
        }
        extra = {dest: opts[src] for src, dest in engine_keys.items() if src in opts}
        cfg = EngineConfig(policy=opts["policy"], workflow=opts["workflow"], pattern=pattern,
                           seed=int(opts["seed"]), **extra)
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, str(opts["out"]), opts.get("workflow_file")


def _template_factory(path: str, slack: float):
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
        template = workflow_from_document(doc)
    except (OSError, yaml.YAMLError, WorkflowError, AttributeError, TypeError) as exc:
        raise ConfigError(f"bad workflow file {path}: {exc}") from exc
    if "slack_factor" in (doc or {}):
        slack = float(doc["slack_factor"])

    def make(workflow_id: str, inject_time: int, seed: int):
        return retime(template, workflow_id, inject_time, slack)
    return make


def _run_one(cfg: EngineConfig, workflow_file: str | None):
    if workflow_file is None:
        return run(cfg)
    sim = Simulation(cfg)
    inject(generate_arrivals(cfg.pattern), _template_factory(workflow_file, cfg.slack), sim, cfg.seed)
    return sim.run()


def _print_table(summaries) -> None:
    rows = [
        ("total duration (min)", "total_duration_min", "{:.2f}"),
        ("avg workflow duration (min)", "avg_workflow_duration_min", "{:.2f}"),
        ("cpu usage", "cpu_usage_mean", "{:.3f}"),
        ("memory usage", "mem_usage_mean", "{:.3f}"),
        ("objective (capacity)", "objective_capacity", "{:.3f}"),
        ("objective (residual)", "objective_residual", "{:.3f}"),
        ("OOMKilled pods", "oom_count", "{}"),
    ]
    header = f"{'metric':30s}" + "".join(f"{s.policy:>12s}" for s in summaries)
    print(header)
    for label, attr, fmt in rows:
        print(f"{label:30s}" + "".join(f"{fmt.format(getattr(s, attr)):>12s}" for s in summaries))


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg, out, workflow_file = resolve(args)
        if workflow_file:
            _template_factory(workflow_file, cfg.slack)
        generate_arrivals(cfg.pattern)
    except (ConfigError, UnreachableTotal) as exc:
        print(f"arasim: configuration error: {exc}", file=sys.stderr)
        return 2

    policies = POLICIES if args.compare else (cfg.policy,)
    configs = [replace(cfg, policy=p) for p in policies]
    try:
        results = [_run_one(c, workflow_file) for c in configs]
    except (Deadlock, Livelock) as exc:
        print(f"arasim: {exc}", file=sys.stderr)
        return 1

    summaries = []
    try:
        for c, result in zip(configs, results):
            summary = summarize(result)
            target = Path(out) / c.policy if args.compare else Path(out)
            emit(summary, result.series, result.events, target)
            log.info("wrote %s", target)
            summaries.append(summary)
        if args.compare:
            Path(out, "compare_summary.json").write_text(
                json.dumps({s.policy: s.headline() for s in summaries}, indent=2) + "\n")
    except (MetricsError, OSError) as exc:
        print(f"arasim: {exc}", file=sys.stderr)
        return 1
    _print_table(summaries)
    return 0


def main() -> None:
    sys.exit(cli_main())
