"""
Command-line front end for the simulator.

    python python/cli.py run --n 64 --delta 0.25 --attack none --trials 10 --seed 7
    python python/cli.py run --n 64 --attack intercept-fake:c=0.6,d=0.8 --trials 20
    python python/cli.py scan --samples 100 --seed 3 --plot images/robustness_scan.png
    python python/cli.py table2 --format json

Exit status: 0 success, 2 configuration error, 3 internal invariant failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np
import pandas as pd

from adversary import DEFAULT_ANCILLA_QUBITS, DEFAULT_SCAN_N, AttackSpec, robustness_scan, scan_frame
from errors import ConfigError, InvariantError, SqkdError
from metrics import detection_stats, results_frame, table2_report
from protocol import DEFAULT_DELTA, PostProcessParams, ProtocolParams, RunResult, run_protocol

logger = logging.getLogger(__name__)

ENV_SEED = "SQKD_SEED"
FORMATS = ("json", "csv", "text")
EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3
ROBUSTNESS_EPSILON = 1e-6


@dataclass(frozen=True)
class RunConfig:
    params: ProtocolParams
    attack: AttackSpec
    postprocess: PostProcessParams = PostProcessParams()
    trials: int = 1
    output_format: str = "text"
    workers: int = 1
    deterministic: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1 (got {self.trials})")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1 (got {self.workers})")
        if self.output_format not in FORMATS:
            raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
        self.postprocess.resolve(self.params.n)

    def describe(self) -> dict:
        return {
            "n": self.params.n,
            "delta": self.params.delta,
            "pairs": self.params.num_pairs,
            "p_ctrl_threshold": self.params.p_ctrl_threshold,
            "p_test_threshold": self.params.p_test_threshold,
            "seed": self.params.seed,
            "attack": self.attack.label,
            "trials": self.trials,
            "syndrome_length": self.postprocess.syndrome_length,
            "security_margin": self.postprocess.security_margin,
        }


def derive_trial_seed(master_seed: int, trial: int) -> int:
    """
    First 32-bit word of SeedSequence([master_seed, trial]). A single trial is
    replayed with run_protocol(ProtocolParams(..., seed=<derived>)).
    """
    return int(np.random.SeedSequence([master_seed, trial]).generate_state(1)[0])


def run_trials(config: RunConfig) -> list[RunResult]:
    seeds = [derive_trial_seed(config.params.seed, t) for t in range(config.trials)]

    def one(seed: int) -> RunResult:
        return run_protocol(replace(config.params, seed=seed), config.attack, config.postprocess)

    if config.workers > 1:
        # map() yields in submission order whatever the completion order
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(one, seeds))
    return [one(seed) for seed in seeds]


def _clean(value):
    """JSON-safe copy: NaN becomes null"""
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _records(frame: pd.DataFrame) -> list[dict]:
    return json.loads(frame.to_json(orient="records"))


def _emit_json(payload: dict, deterministic: bool, out) -> None:
    if not deterministic:
        payload["generated_at"] = datetime.now(timezone.utc).isoformat()
    print(json.dumps(_clean(payload), indent=2), file=out)


def _banner(title: str, out) -> None:
    print("=" * 60, file=out)
    print(title, file=out)
    print("=" * 60, file=out)


def _rate(value: float) -> str:
    return "n/a" if math.isnan(value) else f"{value:.4f}"


def cmd_run(config: RunConfig, out=None) -> int:
    out = sys.stdout if out is None else out
    results = run_trials(config)
    frame = results_frame(results)
    summary = detection_stats(results)

    if config.output_format == "json":
        _emit_json({"command": "run", "config": config.describe(),
                    "trials": _records(frame), "aggregate": summary.as_dict()},
                   config.deterministic, out)
    elif config.output_format == "csv":
        frame.to_csv(out, index=False)
    else:
        _banner(f"SQKD RUN: attack={config.attack.label} n={config.params.n} "
                f"delta={config.params.delta} trials={config.trials}", out)
        if not config.deterministic:
            print(f"Generated at: {datetime.now(timezone.utc).isoformat()}", file=out)
        for row in frame.itertuples():
            status = f"❌ aborted ({row.aborted})" if row.aborted else "✅ completed"
            print(f"Trial {row.trial:3d} seed={row.seed:<10d} {status:<28s} "
                  f"ctrl={_rate(row.ctrl_error_rate)} test={_rate(row.test_mismatch_rate)} "
                  f"final_key={row.final_key_length} bits eta={row.eta}", file=out)
        print("\n📊 AGGREGATE", file=out)
        print("-" * 60, file=out)
        print(f"Mean CTRL error rate:    {_rate(summary.mean_ctrl_error_rate)} "
              f"(sd {_rate(summary.std_ctrl_error_rate)})", file=out)
        print(f"Mean TEST mismatch rate: {_rate(summary.mean_test_mismatch_rate)} "
              f"(sd {_rate(summary.std_test_mismatch_rate)})", file=out)
        for reason, share in summary.abort_frequencies.items():
            print(f"  {reason:<18s} {share:.3f}", file=out)
    return EXIT_OK


def cmd_scan(
    samples: int,
    ancilla_qubits: int = DEFAULT_ANCILLA_QUBITS,
    seed: int = 0,
    n: int = DEFAULT_SCAN_N,
    output_format: str = "csv",
    output: str | None = None,
    plot: str | None = None,
    measure_resend_fractions: tuple[float, ...] = (),
    deterministic: bool = False,
    out=None,
) -> int:
    out = sys.stdout if out is None else out
    if output_format not in FORMATS:
        raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
    points = robustness_scan(samples, ancilla_qubits, n=n, seed=seed,
                             measure_resend_fractions=measure_resend_fractions)
    frame = scan_frame(points)
    violations = frame[(frame["detection_probability"] < ROBUSTNESS_EPSILON)
                       & (frame["avg_trace_distance"] > ROBUSTNESS_EPSILON)]
    if len(violations):
        logger.warning("%d scan point(s) gain information undetected", len(violations))

    target = out
    if output:
        parent = os.path.dirname(output)
        if parent:
            os.makedirs(parent, exist_ok=True)
        target = open(output, "w", newline="")
    try:
        if output_format == "json":
            _emit_json({"command": "scan", "samples": samples, "ancilla_qubits": ancilla_qubits,
                        "n": n, "seed": seed, "robustness_violations": len(violations),
                        "points": _records(frame)}, deterministic, target)
        elif output_format == "csv":
            frame.to_csv(target, index=False)
        else:
            _banner(f"ROBUSTNESS SCAN: {len(frame)} points, ancilla={ancilla_qubits}, n={n}", target)
            print(frame.to_string(index=False), file=target)
            print(f"\nRobustness violations: {len(violations)}", file=target)
    finally:
        if target is not out:
            target.close()
            print(f"Scan saved to {output}", file=out)

    if plot:
        from visualizations import plot_robustness_scan

        plot_robustness_scan(frame, plot)
        print(f"Scatter plot saved to {plot}", file=out)
    return EXIT_OK


def cmd_table2(
    n: int = 64, delta: float = 0.0, seed: int = 0, output_format: str = "text",
    deterministic: bool = False, out=None,
) -> int:
    out = sys.stdout if out is None else out
    if output_format not in FORMATS:
        raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
    ProtocolParams(n=n, delta=delta, seed=seed)
    frame = table2_report(n=n, delta=delta, seed=seed)
    if output_format == "json":
        _emit_json({"command": "table2", "n": n, "delta": delta, "seed": seed,
                    "rows": _records(frame)}, deterministic, out)
    elif output_format == "csv":
        frame.to_csv(out, index=False)
    else:
        _banner("EFFICIENCY COMPARISON (eta = b_s / (q_t + b_t))", out)
        for row in frame.itertuples():
            print(f"{row.protocol:<14s} q_t={row.q_t:<6s} b_s={row.b_s:<6s} b_t={row.b_t:<6s} "
                  f"eta={row.efficiency:<6s} [{row.source}]", file=out)
            if row.note:
                print(f"  note: {row.note}", file=out)
    return EXIT_OK


def _default_seed() -> int:
    raw = os.environ.get(ENV_SEED, "0")
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{ENV_SEED}={raw!r} is not an integer") from None


def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad fraction list '{text}'") from None


def _handle_run(args) -> int:
    params = ProtocolParams(n=args.n, delta=args.delta, p_ctrl_threshold=args.p_ctrl,
                            p_test_threshold=args.p_test,
                            seed=args.seed if args.seed is not None else _default_seed())
    config = RunConfig(
        params=params,
        attack=AttackSpec.parse(args.attack),
        postprocess=PostProcessParams(args.syndrome_length, args.security_margin),
        trials=args.trials,
        output_format=args.format,
        workers=args.workers,
        deterministic=args.deterministic,
    )
    return cmd_run(config)


def _handle_scan(args) -> int:
    return cmd_scan(
        samples=args.samples,
        ancilla_qubits=args.ancilla_qubits,
        seed=args.seed if args.seed is not None else _default_seed(),
        n=args.n,
        output_format=args.format,
        output=args.output,
        plot=args.plot,
        measure_resend_fractions=_fractions(args.mrz_fractions),
        deterministic=args.deterministic,
    )


def _handle_table2(args) -> int:
    return cmd_table2(n=args.n, delta=args.delta,
                      seed=args.seed if args.seed is not None else _default_seed(),
                      output_format=args.format, deterministic=args.deterministic)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Semi-quantum key distribution simulator with Bell pairs")
    parser.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="execute seeded protocol trials")
    run.add_argument("--n", type=int, default=64, help="INFO string length (default: 64)")
    run.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="oversampling (default: 0.25)")
    run.add_argument("--attack", default="none",
                     help="none | intercept-fake:c=..,d=.. | measure-resend-z[:fraction=..] | "
                          "unitary-return:family=..[,ancilla=..][,seed=..]")
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--p-ctrl", type=float, default=0.0, help="CTRL error threshold (default: 0)")
    run.add_argument("--p-test", type=float, default=0.0, help="TEST mismatch threshold (default: 0)")
    run.add_argument("--syndrome-length", type=int, default=None, help="default: ceil(n/4)")
    run.add_argument("--security-margin", type=int, default=None, help="default: ceil(n/8)")
    run.add_argument("--workers", type=int, default=1, help="parallel trials (thread pool)")
    run.set_defaults(handler=_handle_run, fmt_default="text")

    scan = commands.add_parser("scan", help="robustness scan over return-leg unitaries")
    scan.add_argument("--samples", type=int, default=200)
    scan.add_argument("--ancilla-qubits", type=int, default=DEFAULT_ANCILLA_QUBITS)
    scan.add_argument("--n", type=int, default=DEFAULT_SCAN_N, help="INFO length per point (default: 100)")
    scan.add_argument("--mrz-fractions", default="", help="extra partial measure-resend points, e.g. 0.1,0.5")
    scan.add_argument("--output", default=None, help="write the table to a file instead of stdout")
    scan.add_argument("--plot", default=None, help="save a scatter plot, e.g. images/robustness_scan.png")
    scan.set_defaults(handler=_handle_scan, fmt_default="csv")

    table2 = commands.add_parser("table2", help="efficiency comparison table")
    table2.add_argument("--n", type=int, default=64)
    table2.add_argument("--delta", type=float, default=0.0)
    table2.set_defaults(handler=_handle_table2, fmt_default="text")

    for sub in (run, scan, table2):
        sub.add_argument("--seed", type=int, default=None, help=f"master seed (default: ${ENV_SEED} or 0)")
        sub.add_argument("--format", choices=FORMATS, default=None)
        sub.add_argument("--deterministic", action="store_true", help="omit the timestamp field")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.format is None:
        args.format = args.fmt_default
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except InvariantError as e:
        print(f"error[{e.code}]: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    except SqkdError as e:
        print(f"error[{e.code}]: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
