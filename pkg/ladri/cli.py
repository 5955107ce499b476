"""``ladri`` command line: simulate, generate, train, evaluate and assess.

stdout carries reports and summary lines only; logs and the error line go to stderr.
Exit status is 0 on success, 2 for configuration or usage errors (missing input
files included) and 1 for any other failure.
"""

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from ladri.config import Role, TrainConfig
from ladri.consts import ENV_OTEL_ENDPOINT, ENV_TRACES_FILE, LIVE_LOGS_FILE_PATH, STAGE_NAMES
from ladri.dataset_io import (
    generate_dataset,
    load_model,
    load_network_spec,
    load_scenario_config,
    load_sweep_config,
    read_csv,
    rows_to_arrays,
    save_model,
    split_dataset,
    write_csv,
    write_history_csv,
    write_metrics_csv,
    write_table,
    write_trace_csv,
)
from ladri.errors import ConfigError, LadriError
from ladri.feature_extract import build_feature_vector, truth_features
from ladri.hara_oracle import assess_features, label_trace
from ladri.ladri_model import cross_validate, evaluate_model, infer, train, train_baseline
from ladri.scenario_engine import run_scenario
from ladri.sensor_sim import SceneTruth, sample_sensors
from ladri.telemetry import Telemetry, traced_function
from ladri.util import format_float, log_level, worker_count

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _stage_times(times) -> str:
    return " ".join(
        f"time_to_{name.lower()}={'none' if times[stage] is None else format_float(times[stage])}"
        for stage, name in zip(sorted(times), STAGE_NAMES)
    )


@traced_function
def cmd_simulate(args) -> int:
    config, thresholds = load_scenario_config(args.config)
    if args.rear == "auto":
        rear = Role.EGO if config.vehicle(Role.LEAD) is not None or config.vehicle(Role.FOLLOWER) is None else Role.FOLLOWER
    else:
        rear = Role(args.rear.capitalize())
    front = Role.LEAD if rear == Role.EGO else Role.EGO
    trace = run_scenario(config)
    labels = label_trace(trace, rear, front, thresholds)
    write_trace_csv(trace, args.out, labels)
    print(
        f"terminal={trace.terminal.kind.value} t_end={format_float(trace.terminal.time)} "
        f"perspective={rear.value}->{front.value} {_stage_times(labels.times_to_stages())}"
    )
    return EXIT_OK


@traced_function
def cmd_generate(args) -> int:
    sweep, thresholds = load_sweep_config(args.sweep)
    rows, meta = generate_dataset(sweep, thresholds, workers=worker_count())
    write_csv(rows, args.out)
    counts = " ".join(f"{name.lower()}={count}" for name, count in zip(STAGE_NAMES, meta.class_counts))
    collisions = sum(1 for s in meta.scenarios if s.terminal == "Collision")
    print(f"rows={meta.total_rows} scenarios={len(meta.scenarios)} collisions={collisions} {counts}")
    return EXIT_OK


def _history_path(model_path: Path) -> Path:
    return model_path.with_name(model_path.stem + ".history.csv")


@traced_function
def cmd_train(args) -> int:
    spec, config = load_network_spec(args.spec)
    rows = read_csv(args.data)
    train_rows, val_rows, test_rows = split_dataset(rows, seed=args.split_seed)
    weights, history = train(spec, config, rows_to_arrays(train_rows), rows_to_arrays(val_rows))
    out = Path(args.out)
    save_model(weights, out)
    write_history_csv(history, args.history or _history_path(out))
    metrics = evaluate_model(weights, rows_to_arrays(test_rows))
    print(
        f"train_rows={len(train_rows)} val_rows={len(val_rows)} test_rows={len(test_rows)} "
        f"test_accuracy={metrics.accuracy:.4f} test_macro_f1={metrics.macro_f1:.4f}"
    )
    return EXIT_OK


def _report(name: str, m) -> str:
    return (
        f"{name}: n={m.n} accuracy={m.accuracy:.4f} macro_f1={m.macro_f1:.4f} "
        f"mean_latency_s={m.mean_inference_latency:.6f}"
    )


def _confusion_report(m) -> str:
    width = max(len(n) for n in STAGE_NAMES)
    lines = ["confusion (rows=oracle, columns=predicted)"]
    lines.append(" " * width + " " + " ".join(f"{n:>{width}}" for n in STAGE_NAMES))
    for name, row in zip(STAGE_NAMES, m.confusion):
        lines.append(f"{name:>{width}} " + " ".join(f"{int(v):>{width}}" for v in row))
    return "\n".join(lines)


@traced_function
def cmd_evaluate(args) -> int:
    weights = load_model(args.model)
    rows = read_csv(args.data)
    train_rows, val_rows, test_rows = split_dataset(rows, seed=args.split_seed)
    if args.spec:
        _, config = load_network_spec(args.spec)
    else:
        config = TrainConfig()

    results = {"nn": evaluate_model(weights, rows_to_arrays(test_rows))}
    print(_report("nn", results["nn"]))
    print(_confusion_report(results["nn"]))

    if args.baseline:
        baseline, _ = train_baseline(config, rows_to_arrays(train_rows), rows_to_arrays(val_rows))
        results["baseline"] = evaluate_model(baseline, rows_to_arrays(test_rows))
        print(_report("baseline", results["baseline"]))

    if args.kfold:
        cv = cross_validate(weights.spec, config, rows_to_arrays(rows), k=args.kfold, workers=worker_count())
        for i, fold in enumerate(cv.folds):
            results[f"fold{i}"] = fold
        print(
            f"cv k={args.kfold} mean_accuracy={cv.mean_accuracy:.4f} std_accuracy={cv.std_accuracy:.4f} "
            f"mean_macro_f1={cv.mean_macro_f1:.4f} std_macro_f1={cv.std_macro_f1:.4f}"
        )

    if args.metrics_out:
        write_metrics_csv(results, args.metrics_out)
    return EXIT_OK


@traced_function
def cmd_assess(args) -> int:
    weights = load_model(args.model)
    config, thresholds = load_scenario_config(args.config)
    trace = run_scenario(config)
    rng = np.random.default_rng(config.seed)
    detection_range = config.acc_params.detection_range

    table = []
    agree = 0
    latencies = []
    prev = None
    for record in trace.records:
        truth = SceneTruth.from_record(record)
        frame = sample_sensors(truth, config.noise, rng, detection_range, config.limits)
        predicted, probs, latency = infer(weights, build_feature_vector(frame, prev, detection_range))
        oracle = assess_features(truth_features(truth, detection_range, config.limits), thresholds).stage
        agree += int(predicted == oracle)
        latencies.append(latency)
        table.append([record.time, int(oracle), int(predicted), *(float(p) for p in probs), latency])
        prev = frame

    header = ["time", "oracle_stage", "predicted_stage"] + [f"p_{n.lower()}" for n in STAGE_NAMES] + ["inference_latency"]
    write_table(args.out, header, table)
    print(
        f"frames={len(table)} agreement={agree / len(table):.4f} "
        f"mean_latency_s={float(np.mean(latencies)):.6f} terminal={trace.terminal.kind.value}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ladri", description="Dynamic ADAS risk simulation, labeling and classification.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at DEBUG level")
    parser.add_argument("--trace-file", type=Path, help="append OpenTelemetry spans to this file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run one scenario and export its labeled trace")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument(
        "--rear",
        choices=("auto", "ego", "follower"),
        default="auto",
        help="vehicle whose risk stage is labeled; auto picks the follower when nothing is ahead of the ego",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("generate", help="run a scenario sweep into a labeled dataset CSV")
    p.add_argument("--sweep", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the risk classifier")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--spec", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--history", type=Path, help="history CSV (default: <out>.history.csv)")
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a model on the held-out split")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--kfold", type=int, help="also run stratified k-fold cross-validation")
    p.add_argument("--baseline", action="store_true", help="also train and score the logistic baseline")
    p.add_argument("--spec", type=Path, help="training config for --kfold and --baseline")
    p.add_argument("--metrics-out", type=Path)
    p.add_argument("--split-seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("assess", help="run a scenario with inline model inference")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_assess)
    return parser


def _error_line(kind: str, code: int, message: str) -> None:
    message = " ".join(str(message).split())
    if message.startswith("[LADRI] "):
        message = message[len("[LADRI] "):]
    print(f"ladri: error: kind={kind} code={code} msg={message}", file=sys.stderr)


def _telemetry_requested(args) -> bool:
    return bool(args.trace_file) or any(os.getenv(name) for name in (ENV_OTEL_ENDPOINT, ENV_TRACES_FILE, LIVE_LOGS_FILE_PATH))


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        _error_line("UsageError", EXIT_USAGE, e)
        return EXIT_USAGE

    logging.basicConfig(level=logging.DEBUG if args.verbose else log_level(), stream=sys.stderr)
    telemetry = None
    try:
        if _telemetry_requested(args):
            telemetry = Telemetry(
                write_to_file=args.trace_file is not None,
                traces_file=str(args.trace_file) if args.trace_file else None,
            )
        return args.func(args)
    except ConfigError as e:
        _error_line(type(e).__name__, EXIT_USAGE, e)
        return EXIT_USAGE
    except FileNotFoundError as e:
        _error_line("FileNotFoundError", EXIT_USAGE, f"{e.filename}: file not found")
        return EXIT_USAGE
    except LadriError as e:
        _error_line(type(e).__name__, EXIT_RUNTIME, e)
        return EXIT_RUNTIME
    except OSError as e:
        _error_line(type(e).__name__, EXIT_RUNTIME, e)
        return EXIT_RUNTIME
    finally:
        if telemetry is not None:
            telemetry.shutdown()


if __name__ == "__main__":
    sys.exit(main())
