"""Scenario-sweep dataset generation, CSV persistence, grouped splitting and model/config files."""

import csv
import itertools
import json
import logging
import math
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from ladri.config import (
    FaultKind,
    FaultSpec,
    NetworkSpec,
    NoiseSpec,
    OracleThresholds,
    Policy,
    Role,
    ScenarioConfig,
    SweepConfig,
    TrainConfig,
    network_from_dict,
    oracle_from_dict,
    scenario_from_dict,
    sweep_from_dict,
    to_dict,
)
from ladri.consts import (
    DATASET_COLUMNS,
    FEATURE_CONTRACT_VERSION,
    FEATURE_NAMES,
    MODEL_FORMAT_VERSION,
    NUM_STAGES,
    STAGE_NAMES,
)
from ladri.errors import (
    ConfigError,
    CoverageError,
    DataError,
    ModelError,
    ParseError,
    SchemaError,
    StratifyError,
    VersionError,
)
from ladri.feature_extract import FeatureVector, NormStats, build_feature_vector, truth_features
from ladri.hara_oracle import DEFAULT_THRESHOLDS, LabeledTrace, assess_features
from ladri.ladri_model import EpochRecord, LabeledRows, Metrics, ModelWeights
from ladri.scenario_engine import SimulationTrace, run_scenario
from ladri.sensor_sim import SceneTruth, sample_sensors
from ladri.telemetry import traced_function
from ladri.util import derive_seed, format_float, seed_override

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DatasetRow:
    scenario_id: str
    time: float
    features: FeatureVector  # noisy, from sensor frames
    s_level: int
    c_level: int
    stage: int  # from ground truth

    def to_record(self) -> List[str]:
        return (
            [self.scenario_id, format_float(self.time)]
            + [format_float(v) for v in astuple(self.features)]
            + [str(self.s_level), str(self.c_level), str(self.stage)]
        )


@dataclass(frozen=True)
class ScenarioSummary:
    scenario_id: str
    seed: int
    fault_kind: Optional[FaultKind]
    magnitude: float
    initial_gap: float
    lead_speed: float
    ego_policy: Policy
    terminal: str
    terminal_time: float
    rows: int


@dataclass(frozen=True)
class DatasetMeta:
    master_seed: int
    class_counts: Tuple[int, ...]
    scenarios: Tuple[ScenarioSummary, ...]

    @property
    def total_rows(self) -> int:
        return sum(self.class_counts)


# --- generation ---


def scenario_id(index: int) -> str:
    return f"sc{index:04d}"


def sweep_grid(sweep: SweepConfig) -> List[Tuple[Optional[FaultKind], float, float, float, Policy]]:
    """Grid points as (fault kind, magnitude, initial gap, lead speed, ego policy), fault-free first."""
    faults = [(None, 0.0)] + [(kind, m) for kind in sweep.fault_kinds for m in sweep.magnitudes]
    return [
        (kind, magnitude, gap, speed, policy)
        for (kind, magnitude), gap, speed, policy in itertools.product(
            faults, sweep.initial_gaps, sweep.lead_speeds, sweep.ego_policies
        )
    ]


def grid_scenario(sweep: SweepConfig, index: int, point) -> ScenarioConfig:
    kind, magnitude, gap, lead_speed, policy = point
    base = sweep.base
    ego = base.vehicle(Role.EGO)
    vehicles = []
    for setup in base.vehicles:
        if setup.role == Role.EGO:
            setup = replace(setup, policy=policy)
        elif setup.role == Role.LEAD:
            setup = replace(setup, position=ego.position + gap, speed=lead_speed)
        vehicles.append(setup)
    t_start, t_end = sweep.fault_window
    return replace(
        base,
        vehicles=tuple(vehicles),
        fault=None if kind is None else FaultSpec(kind, magnitude, t_start, t_end),
        seed=derive_seed(sweep.master_seed, index),
        noise=base.noise if sweep.noise_on else NoiseSpec.zero(),
    )


def scenario_rows(
    sid: str,
    trace: SimulationTrace,
    frame_stride: int = 1,
    thresholds: OracleThresholds = DEFAULT_THRESHOLDS,
) -> List[DatasetRow]:
    """Noisy features and ground-truth labels for every ``frame_stride``-th record of a trace.

    Sensors are seeded from the scenario seed; frames between kept records
    are not sampled.
    """
    config = trace.config
    rng = np.random.default_rng(config.seed)
    detection_range = config.acc_params.detection_range
    rows = []
    prev = None
    for record in trace.records[::frame_stride]:
        truth = SceneTruth.from_record(record)
        frame = sample_sensors(truth, config.noise, rng, detection_range, config.limits)
        features = build_feature_vector(frame, prev, detection_range)
        label = assess_features(truth_features(truth, detection_range, config.limits), thresholds)
        rows.append(DatasetRow(sid, record.time, features, int(label.severity), int(label.controllability), int(label.stage)))
        prev = frame
    return rows


def _generate_point(args) -> Tuple[List[DatasetRow], ScenarioSummary]:
    sweep, thresholds, index, point = args
    config = grid_scenario(sweep, index, point)
    trace = run_scenario(config)
    sid = scenario_id(index)
    rows = scenario_rows(sid, trace, sweep.frame_stride, thresholds)
    kind, magnitude, gap, lead_speed, policy = point
    summary = ScenarioSummary(
        scenario_id=sid,
        seed=config.seed,
        fault_kind=kind,
        magnitude=magnitude,
        initial_gap=gap,
        lead_speed=lead_speed,
        ego_policy=policy,
        terminal=trace.terminal.kind.value,
        terminal_time=trace.terminal.time,
        rows=len(rows),
    )
    return rows, summary


@traced_function
def generate_dataset(
    sweep: SweepConfig,
    thresholds: OracleThresholds = DEFAULT_THRESHOLDS,
    workers: int = 1,
    require_coverage: bool = True,
) -> Tuple[List[DatasetRow], DatasetMeta]:
    """Runs every grid point of the sweep and concatenates the labeled rows in grid order.

    Each grid point owns the seed ``master_seed XOR index``, so parallel and
    serial generation produce the same rows.

    Raises:
        CoverageError: a risk stage never occurs across the whole sweep
            (checked unless ``require_coverage`` is False).
    """
    jobs = [(sweep, thresholds, i, point) for i, point in enumerate(sweep_grid(sweep))]
    logger.info(f"[LADRI] Generating {len(jobs)} scenarios with {workers} worker(s)")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_generate_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_generate_point(job) for job in jobs]

    rows = [row for point_rows, _ in results for row in point_rows]
    counts = Counter(row.stage for row in rows)
    class_counts = tuple(counts.get(stage, 0) for stage in range(NUM_STAGES))
    for stage, count in enumerate(class_counts):
        if count == 0 and require_coverage:
            raise CoverageError(stage, f"stage {STAGE_NAMES[stage]} never occurs in the sweep")
    meta = DatasetMeta(sweep.master_seed, class_counts, tuple(summary for _, summary in results))
    logger.info(f"[LADRI] Generated {len(rows)} rows; stage counts {dict(zip(STAGE_NAMES, class_counts))}")
    return rows, meta


# --- dataset CSV ---


def write_csv(rows: Iterable[DatasetRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(DATASET_COLUMNS)
        for row in rows:
            writer.writerow(row.to_record())


def _parse_float(value: str, column: str, line: int) -> float:
    try:
        parsed = float(value)
    except ValueError:
        raise ParseError(line, f"column {column}: '{value}' is not a number")
    if not math.isfinite(parsed):
        raise ParseError(line, f"column {column}: non-finite value '{value}'")
    return parsed


def _parse_level(value: str, column: str, line: int) -> int:
    try:
        level = int(value)
    except ValueError:
        raise ParseError(line, f"column {column}: '{value}' is not an integer")
    if not 0 <= level < NUM_STAGES:
        raise ParseError(line, f"column {column}: {level} outside [0, {NUM_STAGES - 1}]")
    return level


def read_csv(path) -> List[DatasetRow]:
    """Reads a dataset CSV written by ``write_csv``.

    Raises:
        SchemaError: the header is not the dataset column contract.
        ParseError: a data row is malformed; ``line`` is the 1-based file line.
    """
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or tuple(header) != DATASET_COLUMNS:
            raise SchemaError(
                f"{path}: expected header {','.join(DATASET_COLUMNS)}, got {','.join(header or [])}"
            )
        n_features = len(FEATURE_NAMES)
        for record in reader:
            line = reader.line_num
            if len(record) != len(DATASET_COLUMNS):
                raise ParseError(line, f"expected {len(DATASET_COLUMNS)} fields, got {len(record)}")
            values = [_parse_float(v, c, line) for v, c in zip(record[2:2 + n_features], FEATURE_NAMES)]
            s, c, stage = (
                _parse_level(v, col, line) for v, col in zip(record[-3:], DATASET_COLUMNS[-3:])
            )
            rows.append(DatasetRow(
                scenario_id=record[0],
                time=_parse_float(record[1], "time", line),
                features=FeatureVector(*values),
                s_level=s,
                c_level=c,
                stage=stage,
            ))
    return rows


def rows_to_arrays(rows: Sequence[DatasetRow]) -> LabeledRows:
    if not rows:
        return LabeledRows(np.empty((0, len(FEATURE_NAMES))), np.empty(0, dtype=np.int64))
    features = np.array([astuple(row.features) for row in rows], dtype=np.float64)
    labels = np.array([row.stage for row in rows], dtype=np.int64)
    return LabeledRows(features, labels)


def split_dataset(
    rows: Sequence[DatasetRow],
    fractions: Tuple[float, float, float] = (0.70, 0.15, 0.15),
    seed: int = 0,
) -> Tuple[List[DatasetRow], List[DatasetRow], List[DatasetRow]]:
    """Train/val/test split that keeps every scenario whole.

    Scenarios are dealt largest first (ties in seeded random order). Each one
    goes to the split whose per-stage row counts it brings closest to that
    split's share of the rows dealt so far, so stage proportions track the
    global mix while no scenario_id crosses a split boundary.
    """
    if len(fractions) != 3 or any(not 0 <= f <= 1 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"fractions must be three values in [0, 1] summing to 1, got {fractions}")
    counts = Counter(row.stage for row in rows)
    for stage in sorted(counts):
        if counts[stage] < 3:
            raise StratifyError(stage, f"stage {STAGE_NAMES[stage]} has {counts[stage]} rows, need at least 3")

    profiles: Dict[str, np.ndarray] = defaultdict(lambda: np.zeros(NUM_STAGES))
    for row in rows:
        profiles[row.scenario_id][row.stage] += 1
    scenario_ids = sorted(profiles)
    shuffled = [scenario_ids[i] for i in np.random.default_rng(seed).permutation(len(scenario_ids))]
    order = sorted(shuffled, key=lambda sid: -profiles[sid].sum())

    shares = np.asarray(fractions, dtype=np.float64)
    open_splits = np.flatnonzero(shares > 0)
    dealt = np.zeros(NUM_STAGES)
    split_counts = np.zeros((3, NUM_STAGES))
    assignment: Dict[str, int] = {}
    for sid in order:
        profile = profiles[sid]
        dealt += profile
        drift = split_counts[open_splits] - shares[open_splits, None] * dealt
        # growth of sum_s |drift_s|^2 / share_s when the scenario joins each split
        cost = (2.0 * drift @ profile + profile @ profile) / shares[open_splits]
        target = int(open_splits[int(np.argmin(cost))])
        split_counts[target] += profile
        assignment[sid] = target

    splits: Tuple[List[DatasetRow], ...] = ([], [], [])
    for row in rows:
        splits[assignment[row.scenario_id]].append(row)
    logger.debug(
        f"[LADRI] Split {len(scenario_ids)} scenarios into {[len(s) for s in splits]} rows"
    )
    return splits


# --- trace CSV ---


def write_trace_csv(trace: SimulationTrace, path, labels: Optional[LabeledTrace] = None) -> None:
    """Per-step export: every vehicle's kinematics, the ego command, and the oracle stage if given."""
    roles = [state.role for state in trace.records[0].states]
    header = ["time"]
    for role in roles:
        name = role.value.lower()
        header += [f"{name}_position", f"{name}_speed", f"{name}_accel"]
    header += ["commanded_accel", "effective_accel", "fault_active"]
    if labels is not None:
        header += ["s_level", "c_level", "stage"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for i, record in enumerate(trace.records):
            line = [format_float(record.time)]
            for state in record.states:
                line += [format_float(state.position), format_float(state.speed), format_float(state.accel)]
            line += [format_float(record.commanded_accel), format_float(record.effective_accel), int(record.fault_active)]
            if labels is not None:
                label = labels.labels[i]
                line += [int(label.severity), int(label.controllability), int(label.stage)]
            writer.writerow(line)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])


def write_history_csv(history: Sequence[EpochRecord], path) -> None:
    write_table(
        path,
        ("epoch", "train_loss", "train_acc", "val_loss", "val_acc"),
        (astuple(record) for record in history),
    )


def metrics_header() -> List[str]:
    names = [name.lower() for name in STAGE_NAMES]
    return (
        ["model", "n", "accuracy", "macro_f1", "mean_inference_latency"]
        + [f"precision_{n}" for n in names]
        + [f"recall_{n}" for n in names]
        + [f"f1_{n}" for n in names]
    )


def write_metrics_csv(metrics: Dict[str, Metrics], path) -> None:
    write_table(
        path,
        metrics_header(),
        (
            [name, m.n, m.accuracy, m.macro_f1, m.mean_inference_latency, *m.precision, *m.recall, *m.f1]
            for name, m in metrics.items()
        ),
    )


# --- JSON configs ---


def _load_json(path) -> dict:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError:
        raise ConfigError(str(path), "file not found")
    except json.JSONDecodeError as e:
        raise ConfigError(str(path), f"invalid JSON at line {e.lineno}: {e.msg}")


def load_scenario_config(path) -> Tuple[ScenarioConfig, OracleThresholds]:
    """Scenario plus its optional ``oracle`` block; LADRI_SEED replaces the scenario seed."""
    data = _load_json(path)
    config = scenario_from_dict(data)
    thresholds = oracle_from_dict(data.get("oracle") if isinstance(data, dict) else None)
    override = seed_override()
    if override is not None:
        config = replace(config, seed=override)
    return config, thresholds


def load_sweep_config(path) -> Tuple[SweepConfig, OracleThresholds]:
    data = _load_json(path)
    oracle = data.pop("oracle", None) if isinstance(data, dict) else None
    sweep = sweep_from_dict(data)
    override = seed_override()
    if override is not None:
        sweep = replace(sweep, master_seed=override)
    return sweep, oracle_from_dict(oracle)


def load_network_spec(path) -> Tuple[NetworkSpec, TrainConfig]:
    spec, train = network_from_dict(_load_json(path))
    override = seed_override()
    if override is not None:
        train = replace(train, seed=override)
    return spec, train


def save_config(config, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_dict(config), f, indent=2)


# --- model files ---


def _decimal_text(values: np.ndarray):
    """Nested lists of 17-significant-digit strings; parses back to the same doubles."""
    if values.ndim == 0:
        return f"{float(values):#.17g}"
    return [_decimal_text(v) for v in values]


def model_to_dict(weights: ModelWeights) -> dict:
    return {
        "format_version": weights.format_version,
        "feature_contract_version": FEATURE_CONTRACT_VERSION,
        "feature_names": list(weights.feature_names),
        "network": to_dict(weights.spec),
        "norm_stats": {
            "mean": _decimal_text(weights.norm_stats.mean),
            "std": _decimal_text(weights.norm_stats.std),
        },
        "layers": [{"W": _decimal_text(w), "b": _decimal_text(b)} for w, b in zip(weights.weights, weights.biases)],
    }


def model_from_dict(data: dict) -> ModelWeights:
    """Rebuilds a model document.

    Raises:
        VersionError: the document targets another format version or feature contract.
        ModelError: the document is structurally malformed.
    """
    try:
        version = data["format_version"]
        feature_names = tuple(data["feature_names"])
    except (KeyError, TypeError) as e:
        raise ModelError(f"malformed model document: missing {e}")
    if version != MODEL_FORMAT_VERSION:
        raise VersionError(f"model format version {version} is not supported (expected {MODEL_FORMAT_VERSION})")
    contract = data.get("feature_contract_version")
    if contract != FEATURE_CONTRACT_VERSION:
        raise VersionError(f"feature contract version {contract} does not match {FEATURE_CONTRACT_VERSION}")
    if feature_names != FEATURE_NAMES:
        raise VersionError(f"model feature order {list(feature_names)} does not match {list(FEATURE_NAMES)}")
    try:
        spec = NetworkSpec(**{**data["network"], "hidden": tuple(data["network"]["hidden"])})
        stats = NormStats(
            mean=np.array(data["norm_stats"]["mean"], dtype=np.float64),
            std=np.array(data["norm_stats"]["std"], dtype=np.float64),
        )
        weights = [np.array(layer["W"], dtype=np.float64) for layer in data["layers"]]
        biases = [np.array(layer["b"], dtype=np.float64) for layer in data["layers"]]
    except (KeyError, TypeError, ValueError) as e:
        raise ModelError(f"malformed model document: {e}")
    return ModelWeights(spec, weights, biases, stats, version, feature_names)


def save_model(weights: ModelWeights, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(weights), f)


def load_model(path) -> ModelWeights:
    with open(path, encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ModelError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    if not isinstance(data, dict):
        raise ModelError(f"{path}: expected a JSON object")
    return model_from_dict(data)
