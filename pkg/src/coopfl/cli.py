"""Command-line interface: scenario validation, experiment runs, metrics export.

Exit codes: 0 success, 1 validation failure, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import Policy, RunReport, parse_policy, run_scenario
from .errors import ConfigError, SimulatorError
from .scenario import ScenarioConfig, build_graph, load_scenario

CSV_HEADER = ("round,policy,global_loss,global_accuracy,comp_energy_j,comm_energy_j,"
              "cum_energy_j,round_delay_s,cum_delay_s,bytes_tx,agg_server")

SUMMARY_HEADER = ("policy,seed,rounds,final_accuracy,final_loss,cum_energy_j,"
                  "cum_delay_s,bytes_tx,targets_reached")


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_metrics(report: RunReport, out_dir: str | Path) -> tuple[Path, Path]:
    """Write <policy>_<seed>.csv (one row per round) and the full report JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{report.policy}_{report.seed}"
    csv_path = out / f"{stem}.csv"
    cum_energy = 0.0
    cum_delay = 0.0
    lines = [CSV_HEADER]
    for m in report.rounds:
        cum_energy += m.cost.total_energy_j
        cum_delay += m.cost.round_delay_s
        lines.append(",".join([
            str(m.round), report.policy, _fmt(m.global_loss), _fmt(m.global_accuracy),
            _fmt(m.cost.comp_energy_j), _fmt(m.cost.comm_energy_j), _fmt(cum_energy),
            _fmt(m.cost.round_delay_s), _fmt(cum_delay), str(m.cost.bytes_transmitted),
            str(m.aggregation_server),
        ]))
    csv_path.write_text("\n".join(lines) + "\n")
    json_path = out / f"{stem}.json"
    json_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return csv_path, json_path


def _write_summary(reports: list[RunReport], out: Path) -> Path:
    lines = [SUMMARY_HEADER]
    for r in reports:
        final = r.rounds[-1] if r.rounds else None
        bytes_tx = sum(m.cost.bytes_transmitted for m in r.rounds)
        reached = ";".join(f"{t:g}" for t in sorted(r.time_to_target))
        lines.append(",".join([
            r.policy, str(r.seed), str(len(r.rounds)),
            _fmt(final.global_accuracy) if final else _fmt(r.initial_accuracy),
            _fmt(final.global_loss) if final else _fmt(r.initial_loss),
            _fmt(r.cumulative_energy_j), _fmt(r.cumulative_delay_s),
            str(bytes_tx), reached,
        ]))
    path = out / "summary.csv"
    path.write_text("\n".join(lines) + "\n")
    return path


def _load(path: str) -> ScenarioConfig:
    cfg = load_scenario(path)
    build_graph(cfg)  # structural cross-checks
    return cfg


def _cmd_validate(args) -> int:
    _load(args.scenario)
    print(f"scenario {args.scenario} is valid")
    return 0


def _cmd_run(args) -> int:
    cfg = _load(args.scenario)
    policy = parse_policy(args.policy)
    report = run_scenario(cfg, policy, args.seed)
    csv_path, _ = write_metrics(report, args.out)
    if report.aborted:
        print(f"run aborted: {report.error}", file=sys.stderr)
        return 2
    final_acc = report.rounds[-1].global_accuracy if report.rounds else report.initial_accuracy
    print(f"{policy.value}: {len(report.rounds)} rounds, "
          f"accuracy {final_acc:.4f}, wrote {csv_path}")
    return 0


def _cmd_compare(args) -> int:
    cfg = _load(args.scenario)
    policies = [parse_policy(p.strip()) for p in args.policies.split(",") if p.strip()]
    if not policies:
        raise ValueError("no policies given")
    out = Path(args.out)
    reports = []
    for policy in policies:
        report = run_scenario(cfg, policy, args.seed)
        write_metrics(report, out)
        if report.aborted:
            print(f"{policy.value} aborted: {report.error}", file=sys.stderr)
            return 2
        reports.append(report)
    summary = _write_summary(reports, out)
    print(f"compared {len(reports)} policies, wrote {summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coopfl",
        description="Deterministic cooperative federated learning simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one policy on a scenario")
    run_p.add_argument("--scenario", required=True)
    run_p.add_argument("--policy", required=True)
    run_p.add_argument("--seed", type=int, required=True)
    run_p.add_argument("--out", required=True)
    run_p.set_defaults(func=_cmd_run)

    cmp_p = sub.add_parser("compare", help="run several policies on identical seeds")
    cmp_p.add_argument("--scenario", required=True)
    cmp_p.add_argument("--policies", required=True,
                       help="comma-separated policy names")
    cmp_p.add_argument("--seed", type=int, required=True)
    cmp_p.add_argument("--out", required=True)
    cmp_p.set_defaults(func=_cmd_compare)

    val_p = sub.add_parser("validate", help="check a scenario file")
    val_p.add_argument("--scenario", required=True)
    val_p.set_defaults(func=_cmd_validate)

    return parser


def execute_command(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SimulatorError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> int:
    return execute_command(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
