"""Command-line driver: simulate, sweep-hashes, cost-model.

Exit codes: 0 success, 2 config or validation error, 1 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, dataclass

import numpy as np

from . import cost_model
from .config import ConfigError, ExperimentConfig, load
from .core import gen_tokens
from .cost_model import SpeedupParams, predict_speedup
from .expert_parallel import StepMetrics, step_baseline, step_lsh
from .moe import moe_forward_dense

log = logging.getLogger("lshmoe")

RUN_COLUMNS = ("mode", "q", "family", "compression_ratio", "mean_l2_error_vs_baseline",
               "dispatch_bytes", "return_bytes", "modeled_step_time_s", "predicted_speedup")
COST_COLUMNS = ("axis", "value", "ratio", "a2a_share", "t_all_to_all_exact_s",
                "t_all_to_all_approx_s", "t_compute_s")

ORACLE_TOL = 1e-12


class InvariantViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class RunRow:
    mode: str
    q: int | None
    family: str | None
    compression_ratio: float
    mean_l2_error_vs_baseline: float
    dispatch_bytes: int
    return_bytes: int
    modeled_step_time_s: float
    predicted_speedup: float


def _baseline(config: ExperimentConfig, threads=None):
    xs = gen_tokens(config.tokens)
    layer = config.build_layer()
    base = step_baseline(xs, layer, config.topology, threads)
    dense = moe_forward_dense(layer, xs)
    gap = float(np.max(np.abs(base.output - dense)))
    if gap > ORACLE_TOL * max(1.0, float(np.max(np.abs(dense)))):
        raise InvariantViolation(f"baseline step differs from dense forward by {gap:.3e}")
    flops = config.cost.flops
    row = RunRow("baseline", None, None, 1.0, 0.0, base.dispatch.total_bytes,
                 base.combine.total_bytes, base.modeled_time_s(flops), 1.0)
    return xs, layer, base, row


def _lsh_row(config: ExperimentConfig, xs, layer, base: StepMetrics, threads=None) -> RunRow:
    cfg = config.lsh
    run = step_lsh(xs, layer, config.topology, cfg, threads)
    flops = config.cost.flops
    err = float(np.mean(np.linalg.norm(run.output - base.output, axis=1)))
    comm = base.comm_time_s()
    share = comm / base.modeled_time_s(flops)
    # clustering time as a fraction of the uncompressed exchange time, capped at 1
    overhead = min(1.0, run.lsh_overhead_flops / flops / comm)
    speedup = predict_speedup(SpeedupParams(share, run.compression_ratio, overhead))
    return RunRow("lsh", cfg.q, cfg.family.value, run.compression_ratio, err,
                  run.dispatch.total_bytes, run.combine.total_bytes, run.modeled_time_s(flops), speedup)


def run_experiment(config: ExperimentConfig, threads=None) -> list[RunRow]:
    """Baseline row, plus an LSH row when the config has an ``lsh`` section."""
    xs, layer, base, row = _baseline(config, threads)
    rows = [row]
    if config.lsh is not None:
        rows.append(_lsh_row(config, xs, layer, base, threads))
    return rows


def sweep_hashes(config: ExperimentConfig, q_values, families, threads=None) -> list[RunRow]:
    q_values = sorted(set(q_values))
    families = list(dict.fromkeys(families))
    if not q_values or not families:
        raise ValueError("need at least one q value and one family")
    xs, layer, base, row = _baseline(config, threads)
    rows = [row]
    for family in families:
        for q in q_values:
            rows.append(_lsh_row(config.with_lsh(family, q), xs, layer, base, threads))
    return rows


def cost_report(params: cost_model.CostParams, sweeps=()) -> list[cost_model.SweepRow]:
    rows = [cost_model.evaluate(params)]
    for axis, values in sweeps:
        rows.extend(cost_model.sweep(params, axis, values))
    return rows


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return "%.12g" % value
    return str(value)


def render(rows, columns, fmt: str = "csv") -> str:
    records = [dict(zip(columns, asdict(r).values())) for r in rows]
    if fmt == "json":
        clean = [{k: (float(_fmt(v)) if isinstance(v, float) else v) for k, v in r.items()}
                 for r in records]
        return json.dumps(clean, indent=2) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in records:
        writer.writerow([_fmt(v) for v in r.values()])
    return buf.getvalue()


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _sweep_spec(text: str):
    axis, _, values = text.partition("=")
    if axis not in cost_model.AXES or not values:
        raise argparse.ArgumentTypeError(
            f"expected AXIS=v1,v2,... with AXIS in {cost_model.AXES}, got {text!r}")
    try:
        return axis, [float(v) if "." in v or "e" in v else int(v) for v in values.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad sweep values in {text!r}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="experiment config (JSON)")
    common.add_argument("--out", help="output path (default: config 'output', else stdout)")
    common.add_argument("--seed", type=int, help="override the config's master seed")
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    parser = _Parser(prog="lshmoe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("simulate", parents=[common], help="baseline (+ LSH) step for one config")
    sw = sub.add_parser("sweep-hashes", parents=[common], help="hash count / family ablation")
    sw.add_argument("--q", type=_int_list, default=[2, 4, 6, 8, 10])
    sw.add_argument("--families", default="cp,sp")
    cm = sub.add_parser("cost-model", parents=[common], help="analytic all-to-all vs compute model")
    cm.add_argument("--sweep", type=_sweep_spec, action="append", default=[])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        config = load(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            config = config.with_seed(args.seed)
        if args.command == "simulate":
            text = render(run_experiment(config), RUN_COLUMNS, args.format)
        elif args.command == "sweep-hashes":
            families = [f.strip() for f in args.families.split(",") if f.strip()]
            bad = [f for f in families if f not in ("cp", "sp")]
            if bad or not families:
                raise ConfigError(f"--families must list cp and/or sp, got {args.families!r}")
            text = render(sweep_hashes(config, args.q, families), RUN_COLUMNS, args.format)
        else:
            text = render(cost_report(config.cost_params(), args.sweep), COST_COLUMNS, args.format)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    out = args.out or config.output
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
