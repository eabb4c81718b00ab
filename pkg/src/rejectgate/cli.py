"""Command-line interface.

Exit codes: 0 success, 1 data or runtime error, 2 usage error.  Artifacts go
to ``--output`` (stdout when absent); diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from dataclasses import asdict
from typing import Sequence

from . import dataio
from .calibrate import apply_temperature, fit_temperature, nll
from .cost_core import (
    CostModel,
    Dataset,
    Threshold,
    deployed_value,
    expected_value,
    optimal_threshold,
    parse_threshold,
)
from .errors import InvalidCostModelError, RejectGateError
from .metrics import BinningScheme, ece, empirical_threshold, full_report, reliability_table, value_curve, value_gap
from .rejector import (
    DEFAULT_EPSILON,
    DEFAULT_MIN_GROUP_SIZE,
    decide,
    evaluate,
    fit_global,
    fit_per_group,
    fit_trusted_subset,
    identify_trusted_subsets,
)
from .simulate import (
    DistortionParams,
    SyntheticConfig,
    generate_calibrated,
    generate_distorted,
    generate_rare_high_confidence,
    run_workflow,
    top_line_accuracy,
)

DEFAULT_K = 3.0
SEED_ENV = "REJECT_GATE_SEED"


class UsageError(Exception):
    pass


def _cost_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("cost model")
    g.add_argument("--k", type=float, default=None, help=f"severity ratio (default {DEFAULT_K})")
    g.add_argument("--v", type=float, default=None, help="value of a correct accepted prediction")
    g.add_argument("--cd", type=float, default=None, help="value of the default path")
    g.add_argument("--cw", type=float, default=None, help="value of a wrong accepted prediction")


def _input_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--input", required=required, help="prediction log (csv or jsonl)")
    p.add_argument("--input-format", choices=("csv", "jsonl"), default=None)
    p.add_argument("--group-col", default="group", help="column holding group tags")


def _report_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output", default=None, help="output path (stdout when absent)")
    p.add_argument("--format", choices=("json", "markdown"), default=None, help="report format")
    p.add_argument("--deterministic", action="store_true", help="suppress the report timestamp")


def _binning_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bins", type=int, default=15)
    p.add_argument("--scheme", choices=("equal_width", "equal_mass"), default="equal_width")


def _group_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    p.add_argument("--min-group-size", type=int, default=DEFAULT_MIN_GROUP_SIZE)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rejectgate", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="print the analytic threshold")
    _cost_args(p)

    p = sub.add_parser("analyze", help="calibration and value report for a prediction log")
    _input_args(p)
    _cost_args(p)
    p.add_argument("--threshold", default="auto", help='decimal, "auto" (analytic) or "fit" (empirical)')
    _binning_args(p)
    _group_args(p)
    _report_args(p)

    p = sub.add_parser("sweep", help="value curve over every achievable threshold")
    _input_args(p)
    _cost_args(p)
    p.add_argument("--output", default=None)

    p = sub.add_parser("calibrate", help="fit a temperature to logits")
    _input_args(p)
    _cost_args(p)
    _binning_args(p)
    p.add_argument("--emit-recalibrated", default=None, help="write the recalibrated dataset here")
    _report_args(p)

    p = sub.add_parser("reject", help="build, apply and evaluate rejectors")
    actions = p.add_subparsers(dest="action", required=True)
    a = actions.add_parser("fit", help="global empirical threshold")
    _input_args(a)
    _cost_args(a)
    a.add_argument("--output", default=None)
    a = actions.add_parser("fit-per-group", help="per-group empirical thresholds")
    _input_args(a)
    _cost_args(a)
    a.add_argument("--min-group-size", type=int, default=DEFAULT_MIN_GROUP_SIZE)
    a.add_argument("--output", default=None)
    a = actions.add_parser("trust", help="find groups on which confidences can be trusted")
    _input_args(a)
    _cost_args(a)
    _group_args(a)
    _report_args(a)
    a.add_argument("--emit-spec", default=None, help="write the trusted-subset rejector here")
    a = actions.add_parser("apply", help="accept/reject decision per record")
    a.add_argument("--spec", required=True)
    _input_args(a)
    a.add_argument("--output", default=None)
    a = actions.add_parser("eval", help="value of a rejector on a labeled dataset")
    a.add_argument("--spec", required=True)
    _input_args(a)
    _cost_args(a)
    _report_args(a)

    p = sub.add_parser("simulate", help="synthetic data and Monte Carlo workflow runs")
    p.add_argument("--n", type=int, default=10000)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--hc", type=float, default=None, help="rare high-confidence slice fraction")
    p.add_argument("--high-conf", type=float, default=0.99)
    p.add_argument("--gamma", type=float, default=None, help="logit scale distortion")
    p.add_argument("--delta", type=float, default=None, help="logit shift distortion")
    p.add_argument("--seed", type=int, default=None, help=f"u64 seed (fallback: ${SEED_ENV}, then 0)")
    _cost_args(p)
    p.add_argument("--threshold", default="auto")
    p.add_argument("--replications", type=int, default=20)
    p.add_argument("--no-resample", action="store_true", help="score recorded outcomes instead of redrawing")
    p.add_argument("--emit-dataset", default=None, help="write the generated dataset here")
    _report_args(p)
    return parser


def resolve_cost(args) -> CostModel:
    triple = (args.v, args.cd, args.cw)
    try:
        if any(x is not None for x in triple):
            if args.k is not None:
                raise UsageError("--k and --v/--cd/--cw are mutually exclusive")
            if any(x is None for x in triple):
                raise UsageError("--v, --cd and --cw must be given together")
            return CostModel(v=args.v, c_d=args.cd, c_w=args.cw)
        return CostModel.normalized(DEFAULT_K if args.k is None else args.k)
    except InvalidCostModelError as exc:
        raise UsageError(str(exc)) from None


def cost_params(cost: CostModel) -> dict:
    return {"k": cost.k, "v": cost.v, "c_d": cost.c_d, "c_w": cost.c_w}


def resolve_threshold(mode: str, cost: CostModel, d: Dataset | None) -> Threshold:
    if mode == "auto":
        return optimal_threshold(cost)
    if mode == "fit":
        if d is None:
            raise UsageError('--threshold fit requires an input dataset')
        return empirical_threshold(d, cost)[0]
    try:
        return parse_threshold(mode)
    except (ValueError, RejectGateError):
        raise UsageError(f'--threshold must be a decimal in [0, 1], "auto" or "fit", got {mode!r}') from None


def _load(args) -> Dataset:
    return dataio.load_dataset(args.input, args.input_format, group_col=args.group_col)


def _digest(args) -> str:
    return dataio.file_digest(args.input)


def _write(doc: dataio.ReportDocument, args) -> None:
    fmt = args.format or (dataio.infer_format(args.output, "json") if args.output else "json")
    if fmt not in ("json", "markdown"):
        fmt = "json"
    dataio.write_report(doc, args.output, fmt)


def cmd_threshold(args) -> int:
    t = optimal_threshold(resolve_cost(args))
    print(f"{t:.12g}")
    return 0


def cmd_analyze(args) -> int:
    cost = resolve_cost(args)
    scheme = _scheme(args)
    d = _load(args)
    t = resolve_threshold(args.threshold, cost, d)
    report = full_report(d, cost, scheme, t)
    sections = {
        "calibration": report,
        "value_at_threshold": deployed_value(d, cost, t),
        "expected_at_threshold": expected_value(d, cost, t),
        "reliability": [asdict(r) for r in reliability_table(d, scheme).rows],
    }
    if d.group_tags():
        groups = identify_trusted_subsets(d, cost, args.epsilon, args.min_group_size)
        sections["groups"] = {
            "epsilon": groups.epsilon,
            "min_group_size": groups.min_group_size,
            "untagged": groups.untagged,
            "rows": [asdict(r) for r in groups.rows],
        }
    params = {
        **cost_params(cost),
        "threshold_mode": args.threshold,
        "threshold": t,
        "scheme": scheme.kind,
        "bins": scheme.bins,
        "epsilon": args.epsilon,
        "min_group_size": args.min_group_size,
        "n": d.n,
    }
    _write(dataio.ReportDocument("analysis", sections, params, _digest(args), args.deterministic), args)
    return 0


def _scheme(args) -> BinningScheme:
    try:
        return BinningScheme(args.scheme, args.bins)
    except RejectGateError as exc:
        raise UsageError(str(exc)) from None


def cmd_sweep(args) -> int:
    cost = resolve_cost(args)
    dataio.write_curve(value_curve(_load(args), cost), args.output)
    return 0


def cmd_calibrate(args) -> int:
    cost = resolve_cost(args)
    scheme = _scheme(args)
    d = _load(args)
    model = fit_temperature(d)
    after = apply_temperature(d, model)
    t = optimal_threshold(cost)
    sections = {
        "temperature": model,
        "before": {"nll": nll(d), "ece": ece(d, scheme), "value_gap": value_gap(d, cost, t)},
        "after": {"nll": nll(after), "ece": ece(after, scheme), "value_gap": value_gap(after, cost, t)},
    }
    params = {**cost_params(cost), "threshold": t, "scheme": scheme.kind, "bins": scheme.bins, "n": d.n}
    if args.emit_recalibrated:
        dataio.save_dataset(after, args.emit_recalibrated)
    _write(dataio.ReportDocument("calibration", sections, params, _digest(args), args.deterministic), args)
    return 0


def cmd_reject(args) -> int:
    action = args.action
    if action == "apply":
        spec = dataio.load_rejector(args.spec)
        d = _load(args)
        accept = decide(spec, d)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id", "decision"])
        for rid, ok in zip(d.ids, accept):
            writer.writerow([rid, "accept" if ok else "reject"])
        dataio.emit(buf.getvalue(), args.output)
        return 0
    if action == "eval":
        spec = dataio.load_rejector(args.spec)
        if args.k is None and args.v is None and args.cd is None and args.cw is None and not math.isnan(spec.cost_k):
            args.k = spec.cost_k
        cost = resolve_cost(args)
        d = _load(args)
        report = evaluate(spec, d, cost)
        sections = {"value": report, "rejector": dataio.rejector_to_dict(spec)}
        params = {**cost_params(cost), "n": d.n}
        _write(dataio.ReportDocument("rejector_evaluation", sections, params, _digest(args), args.deterministic), args)
        return 0

    cost = resolve_cost(args)
    d = _load(args)
    if action == "fit":
        dataio.save_rejector(fit_global(d, cost), args.output)
    elif action == "fit-per-group":
        dataio.save_rejector(fit_per_group(d, cost, args.min_group_size), args.output)
    elif action == "trust":
        report = identify_trusted_subsets(d, cost, args.epsilon, args.min_group_size)
        sections = {
            "groups": {
                "epsilon": report.epsilon,
                "min_group_size": report.min_group_size,
                "untagged": report.untagged,
                "trusted_groups": report.trusted_groups,
                "rows": [asdict(r) for r in report.rows],
            }
        }
        params = {**cost_params(cost), "epsilon": args.epsilon, "min_group_size": args.min_group_size, "n": d.n}
        if args.emit_spec:
            dataio.save_rejector(fit_trusted_subset(d, cost, args.epsilon, args.min_group_size), args.emit_spec)
        _write(dataio.ReportDocument("trusted_subsets", sections, params, _digest(args), args.deterministic), args)
    return 0


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"${SEED_ENV} must be an integer, got {env!r}") from None


def cmd_simulate(args) -> int:
    cost = resolve_cost(args)
    seed = _seed(args)
    try:
        cfg = SyntheticConfig(
            n=args.n, alpha=args.alpha, beta=args.beta, hc=args.hc, high_conf=args.high_conf, seed=seed
        )
        distortion = None
        if args.gamma is not None or args.delta is not None:
            distortion = DistortionParams(
                gamma=1.0 if args.gamma is None else args.gamma,
                delta=0.0 if args.delta is None else args.delta,
            )
    except RejectGateError as exc:
        raise UsageError(str(exc)) from None
    if cfg.hc is not None and distortion is not None:
        raise UsageError("--hc cannot be combined with --gamma/--delta")
    if cfg.hc is not None:
        generator, d = "rare_high_confidence", generate_rare_high_confidence(cfg)
    elif distortion is not None:
        generator, d = "distorted", generate_distorted(cfg, distortion)
    else:
        generator, d = "calibrated", generate_calibrated(cfg)
    t = resolve_threshold(args.threshold, cost, d)
    result = run_workflow(d, cost, t, args.replications, seed, resample=not args.no_resample)
    params = {
        **cost_params(cost),
        "generator": generator,
        "config": cfg.to_dict(),
        "distortion": distortion.to_dict() if distortion else None,
        "threshold_mode": args.threshold,
        "threshold": t,
        "replications": args.replications,
        "resample": not args.no_resample,
        "seed": seed,
    }
    sections = {
        "simulation": result,
        "dataset": {
            "n": d.n,
            "top_line_accuracy": top_line_accuracy(d),
            "deployed_value": deployed_value(d, cost, t),
            "expected_value": expected_value(d, cost, t),
        },
    }
    if args.emit_dataset:
        dataio.save_dataset(d, args.emit_dataset, provenance={"generator": generator, **params})
    digest = dataio.dataset_digest(d)
    _write(dataio.ReportDocument("simulation", sections, params, digest, args.deterministic), args)
    return 0


COMMANDS = {
    "threshold": cmd_threshold,
    "analyze": cmd_analyze,
    "sweep": cmd_sweep,
    "calibrate": cmd_calibrate,
    "reject": cmd_reject,
    "simulate": cmd_simulate,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 2
    except (RejectGateError, OSError) as exc:
        print(f"{parser.prog}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
