import argparse
import json
import logging
import os
import sys
from pathlib import Path

import pandas as pd
from pydantic import ValidationError

from dmvrpx.aggregate import build_heatmaps
from dmvrpx.config import ENV_PREFIX, StudyConfig
from dmvrpx.domain import OrderSet, PolicyName, ValueTable, enumerate_settings, setting_by_ordinal
from dmvrpx.dp import decompose_optimal, evaluate_policy, solve_optimal
from dmvrpx.errors import DmvrpxError, InvariantViolation, UsageError
from dmvrpx.instgen import generate_study_instances
from dmvrpx.metrics import (
    compute_errors,
    decision_rates,
    optimality_gap,
    sample_decision_rates,
    weighted_error_ratio,
)
from dmvrpx.policies import build_rule
from dmvrpx.selftest import run_selftest
from dmvrpx.store import StudyStore, instance_stem, read_instance
from dmvrpx.study import manifest, run_study, write_figures


LOG = logging.getLogger("dmvrpx")

TABLE_COLUMNS = ("kind", "epoch", "mask", "value")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _policies(text: str) -> list[PolicyName]:
    try:
        return [PolicyName(p.strip()) for p in text.split(",") if p.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _ordinals(text: str) -> list[int]:
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dmvrpx", description="Exact explainability laboratory for order acceptance with routing")
    parser.add_argument(
        "--log-level",
        default=os.environ.get(ENV_PREFIX + "LOG_LEVEL", "INFO"),
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    commands = parser.add_subparsers(dest="command", required=True)

    def study_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="YAML study configuration")
        p.add_argument("--root-seed", type=int)
        p.add_argument("--instances-per-setting", type=int)
        p.add_argument("--settings", type=_ordinals, help="comma-separated setting ordinals")
        p.add_argument("--out", type=Path, dest="out_dir")

    gen = commands.add_parser("gen", help="generate instances only")
    study_flags(gen)

    solve = commands.add_parser("solve", help="solve one instance and dump its value tables")
    solve.add_argument("--instance", type=Path, required=True)
    solve.add_argument("--out", type=Path, required=True)
    solve.add_argument("--policies", type=_policies, default=list(PolicyName))

    metrics = commands.add_parser("metrics", help="metric records of one instance")
    metrics.add_argument("--instance", type=Path, required=True)
    metrics.add_argument("--out", type=Path, required=True)
    metrics.add_argument("--policies", type=_policies, default=[PolicyName.DPC, PolicyName.MCTS, PolicyName.MYOPIC])
    metrics.add_argument("--sampling-rates", type=int)
    metrics.add_argument("--seed", type=int, default=0)

    study = commands.add_parser("study", help="run the full factorial study")
    study_flags(study)
    study.add_argument("--policies", type=_policies)
    study.add_argument("--workers", type=int)
    study.add_argument("--sampling-rates", type=int)
    study.add_argument("--no-figures", dest="figures", action="store_const", const=False)
    study.add_argument("--dump-metrics", action="store_const", const=True)

    plot = commands.add_parser("plot", help="render figures from a finished study")
    plot.add_argument("--study", type=Path, required=True)
    plot.add_argument("--out", type=Path, required=True)
    plot.add_argument("--settings", type=_ordinals)
    plot.add_argument("--policies", type=_policies)

    selftest = commands.add_parser("selftest", help="oracle and invariant suite")
    selftest.add_argument("--seed", type=int, default=42)
    selftest.add_argument("--oracle-instances", type=int, default=200)
    selftest.add_argument("--tour-sets", type=int, default=50)
    selftest.add_argument("--rate-pairs", type=int, default=10)
    selftest.add_argument("--rate-paths", type=int, default=100_000)

    return parser


def _study_config(args: argparse.Namespace) -> StudyConfig:
    flags = {name: getattr(args, name, None) for name in StudyConfig.model_fields}
    return StudyConfig.load(args.config, flags)


def _emit(data: dict) -> None:
    sys.stdout.write(json.dumps(data, sort_keys=True) + "\n")


# ---- commands ----


def cmd_gen(args: argparse.Namespace) -> int:
    config = _study_config(args)
    store = StudyStore(config.out_dir)
    settings = (
        [setting_by_ordinal(o) for o in config.settings]
        if config.settings is not None
        else enumerate_settings()
    )
    count = 0
    for instance in generate_study_instances(config.root_seed, config.instances_per_setting, settings):
        store.write_instance(instance)
        count += 1
    store.write_json("manifest.json", manifest(config))
    _emit({"instances": count, "out": str(config.out_dir)})
    return 0


def _table_rows(label: str, table: ValueTable) -> list[dict]:
    horizon = table.horizon
    return [
        {"kind": label, "epoch": t, "mask": state.bitstring(horizon), "value": value}
        for t, state, value in table.items()
    ]


def cmd_solve(args: argparse.Namespace) -> int:
    instance = read_instance(args.instance)
    store = StudyStore(args.out)
    stem = instance_stem(instance.setting.ordinal, instance.instance_id)

    optimal = solve_optimal(instance)
    revenue, cost = decompose_optimal(optimal, instance)
    rows = _table_rows("optimal", optimal.table)
    rows += _table_rows("revenue_share", revenue)
    rows += _table_rows("cost_share", cost)

    objective = {}
    for policy in args.policies:
        rule = build_rule(policy, instance, optimal)
        evaluation = evaluate_policy(rule, instance)
        objective[policy.value] = evaluation.value
        if policy in (PolicyName.DPC, PolicyName.MCTS):
            rows += _table_rows(policy.value, rule.solution.table)
        rows += _table_rows(f"{policy.value}_policy_value", evaluation.table)

    store.write_frame(f"{stem}_tables.csv", pd.DataFrame(rows, columns=list(TABLE_COLUMNS)))
    _emit({"instance": stem, "J_star": optimal.root_value, "J_pi": objective})
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    instance = read_instance(args.instance)
    store = StudyStore(args.out)
    optimal = solve_optimal(instance)

    results = {}
    for policy in args.policies:
        rule = build_rule(policy, instance, optimal)
        if args.sampling_rates is None:
            rates = decision_rates(rule, instance)
        else:
            rates = sample_decision_rates(rule, instance, args.sampling_rates, args.seed)
        records = compute_errors(optimal, rule, instance, rates)
        store.write_records(instance.setting.ordinal, instance.instance_id, policy, records.to_frame())
        for metric, heatmap in build_heatmaps(records).items():
            store.write_frame(
                f"{instance_stem(instance.setting.ordinal, instance.instance_id)}_{policy.value}_{metric.value}.csv",
                heatmap.to_frame(),
            )
        j_pi = evaluate_policy(rule, instance).value
        results[policy.value] = {
            "records": len(records),
            "E": weighted_error_ratio(records),
            "J_pi": j_pi,
            "gap": optimality_gap(optimal.root_value, j_pi),
        }
    _emit({"J_star": optimal.root_value, "policies": results})
    return 0


def cmd_study(args: argparse.Namespace) -> int:
    report = run_study(_study_config(args))
    _emit(
        {
            "instances": report.n_instances,
            "failed": report.n_failed,
            "incomplete_settings": report.incomplete_settings,
            "dominance": {p.value: f for p, f in report.dominance.items()},
            "invariant_violations": sum(report.invariants.violations.values()),
        }
    )
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    summaries = StudyStore(args.study).read_summaries()
    if args.settings is not None:
        summaries = [s for s in summaries if s.setting.ordinal in set(args.settings)]
    if args.policies is not None:
        summaries = [s for s in summaries if s.policy in set(args.policies)]
    write_figures(StudyStore(args.out), summaries)
    _emit({"figures": len(summaries) + 2, "out": str(args.out)})
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    report = run_selftest(
        seed=args.seed,
        oracle_instances_n=args.oracle_instances,
        tour_sets=args.tour_sets,
        rate_pairs=args.rate_pairs,
        rate_paths=args.rate_paths,
    )
    _emit(report.serialize())
    if not report.ok:
        failing = [c.name for c in report.checks if not c.passed]
        raise InvariantViolation(f"selftest failed: {', '.join(failing)}")
    return 0


COMMANDS = {
    "gen": cmd_gen,
    "solve": cmd_solve,
    "metrics": cmd_metrics,
    "study": cmd_study,
    "plot": cmd_plot,
    "selftest": cmd_selftest,
}


def _fail(exc: BaseException, code: int) -> int:
    sys.stderr.write(
        json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}) + "\n"
    )
    return code


# ---- entrypoint ----

def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(exc, exc.exit_code)

    logging.basicConfig(
        level=args.log_level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except DmvrpxError as exc:
        return _fail(exc, exc.exit_code)
    except ValidationError as exc:
        return _fail(exc, UsageError.exit_code)
    except OSError as exc:
        return _fail(exc, 3)
    except Exception as exc:
        LOG.exception("unexpected failure")
        return _fail(exc, 1)


if __name__ == "__main__":
    sys.exit(main())
