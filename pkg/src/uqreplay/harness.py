"""Experiment runner: config handling, the online training loop, seeded grids.

One run seed drives every random decision through named substreams, so a
(config, seed) pair fully determines the dataset, task assignment, stream
order, model init, replay draws, and retention choices.
"""

import csv
import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, replace

import numpy as np
import yaml

from .memory import STRATEGIES, ReplayMemory
from .metrics import (
    AccuracyMatrix,
    RunSummary,
    last_accuracy,
    last_forgetting,
    relative_improvement,
)
from .models import MODEL_KINDS, init_model
from .rng import substream
from .scoring import SCORE_KINDS, PerturbationFamily, score_samples
from .stream import (
    TASK_ORDERINGS,
    SyntheticSpec,
    assign_classes,
    generate_synthetic,
    load_csv,
    longtail_sizes,
    make_stream,
    train_test_split_by_class,
)

#: Score kind that selects the experience-replay baseline (class-balanced
#: random retention, no uncertainty computation).
ER_SCORE = "er-random"
SCORE_CHOICES = SCORE_KINDS + (ER_SCORE,)

#: Extra keys a grid config may carry on top of the single-run schema.
GRID_KEYS = ("scores", "strategies", "capacities")


@dataclass(frozen=True)
class ExperimentConfig:
    """Full seeded description of one run.

    Defaults are the desk-scale benchmark: 10 overlapping Gaussian classes in
    16 dimensions, 200 samples per class, 5 tasks of 2 classes, batch size
    10, SGD learning rate 0.1, and an over-parameterized one-hidden-layer
    network. Class centers are drawn at scale 0.45 against within-class noise
    1.35, so classes overlap heavily (each class's tail reaches into its
    neighbours) and the fixed view-noise scale 0.1 is large enough to flip
    predicted labels near decision boundaries.
    """

    dataset: str = "synthetic"
    csv_path: str = None
    label_column: str = None
    class_count: int = 10
    dim: int = 16
    samples_per_class: int = 200
    class_center_scale: float = 0.45
    noise_scale: float = 1.35
    imbalance_rho: float = 1.0
    task_count: int = 5
    classes_per_task: int = 2
    task_ordering: str = "by_task_index"
    batch_size: int = 10
    learning_rate: float = 0.1
    memory_capacity: int = 50
    score: str = "bi"
    strategy: str = "bottom"
    model: str = "mlp"
    hidden: int = 768
    tta_views: int = 4
    tta_sigma: float = 0.1
    test_fraction: float = 0.2
    seeds: tuple = (0, 1, 2)
    out_dir: str = "results"

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.dataset not in ("synthetic", "csv"):
            raise ValueError("dataset must be 'synthetic' or 'csv'")
        if self.dataset == "csv" and (not self.csv_path or not self.label_column):
            raise ValueError("csv dataset requires csv_path and label_column")
        if self.task_count < 2:
            raise ValueError("task_count must be >= 2 (forgetting needs at least two tasks)")
        if self.classes_per_task < 1:
            raise ValueError("classes_per_task must be >= 1")
        if self.dataset == "synthetic" and self.class_count != self.task_count * self.classes_per_task:
            raise ValueError("class_count must equal task_count * classes_per_task")
        if self.dataset == "synthetic" and (self.dim < 1 or self.samples_per_class < 2):
            raise ValueError("dim must be >= 1 and samples_per_class >= 2")
        if not 0.0 < self.imbalance_rho <= 1.0:
            raise ValueError("imbalance_rho must be in (0, 1]")
        if self.task_ordering not in TASK_ORDERINGS:
            raise ValueError(f"task_ordering must be one of {TASK_ORDERINGS}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.memory_capacity < 0:
            raise ValueError("memory_capacity must be >= 0")
        if self.score not in SCORE_CHOICES:
            raise ValueError(f"score must be one of {SCORE_CHOICES}, got {self.score!r}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.model not in MODEL_KINDS:
            raise ValueError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")
        if self.hidden < 1:
            raise ValueError("hidden must be >= 1")
        if self.tta_views < 1:
            raise ValueError("tta_views must be >= 1")
        if self.tta_sigma < 0:
            raise ValueError("tta_sigma must be >= 0")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError("test_fraction must be in (0, 1)")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config, rejecting unknown keys."""
    unknown = sorted(set(data) - _CONFIG_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    return ExperimentConfig(**data)


def load_config_dict(path) -> dict:
    """Parse a YAML config file into a plain mapping."""
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config file must be a key/value mapping")
    return data


def config_fingerprint(cfg: ExperimentConfig) -> str:
    """Hash of the canonicalized config, minus seeds and output directory."""
    payload = dataclasses.asdict(cfg)
    payload.pop("seeds")
    payload.pop("out_dir")
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class RunArtifacts:
    """Filesystem locations of one run's outputs."""

    summary_path: str
    matrix_path: str
    memory_path: str
    fingerprint: str


def _build_data(cfg: ExperimentConfig, seed: int):
    """Dataset, task assignment, train/test split, and the batch stream."""
    if cfg.dataset == "synthetic":
        classes = list(range(cfg.class_count))
        assignment = assign_classes(classes, cfg.task_count, substream(seed, "task-assignment"))
        class_sizes = None
        if cfg.imbalance_rho < 1.0:
            by_rank = longtail_sizes(cfg.samples_per_class, cfg.imbalance_rho, cfg.class_count)
            ranked = [c for group in assignment.task_classes for c in group]
            class_sizes = [0] * cfg.class_count
            for rank, label in enumerate(ranked):
                class_sizes[label] = by_rank[rank]
        spec = SyntheticSpec(
            class_count=cfg.class_count,
            dim=cfg.dim,
            samples_per_class=cfg.samples_per_class,
            class_center_scale=cfg.class_center_scale,
            noise_scale=cfg.noise_scale,
            seed=seed,
        )
        dataset = generate_synthetic(spec, class_sizes)
    else:
        dataset = load_csv(cfg.csv_path, cfg.label_column)
        classes = [int(c) for c in dataset.class_labels]
        expected = cfg.task_count * cfg.classes_per_task
        if len(classes) != expected:
            raise ValueError(
                f"csv dataset has {len(classes)} classes, config expects {expected}"
            )
        assignment = assign_classes(classes, cfg.task_count, substream(seed, "task-assignment"))

    train, test = train_test_split_by_class(dataset, cfg.test_fraction, substream(seed, "test-split"))
    for t in range(cfg.task_count):
        if not np.any(np.isin(test.y, assignment.classes_of(t))):
            raise ValueError(f"task {t} has no test samples; increase class sizes")
    stream_batches = make_stream(
        train, assignment, cfg.batch_size, substream(seed, "stream-shuffle"), cfg.task_ordering
    )
    return train, test, assignment, stream_batches


def _task_accuracies(model, test, assignment, stage_tasks) -> list:
    accs = []
    for t in stage_tasks:
        idx = np.flatnonzero(np.isin(test.y, assignment.classes_of(t)))
        pred = model.predict(test.X[idx])
        accs.append(float((pred == test.y[idx]).mean()))
    return accs


def _execute(cfg: ExperimentConfig, seed: int):
    train, test, assignment, stream_batches = _build_data(cfg, seed)
    class_count = cfg.class_count if cfg.dataset == "synthetic" else len(assignment.psi)
    model = init_model(
        cfg.model,
        train.dim,
        class_count,
        hidden=cfg.hidden,
        learning_rate=cfg.learning_rate,
        rng=substream(seed, "model-init"),
    )
    family = PerturbationFamily(count=cfg.tta_views, noise_scale=cfg.tta_sigma, seed=seed)
    er_mode = cfg.score == ER_SCORE
    memory = ReplayMemory(cfg.memory_capacity, "random" if er_mode else cfg.strategy)
    rng_replay = substream(seed, "replay")
    rng_retention = substream(seed, "er-retention")

    def score_fn(samples):
        X = np.stack([s.features for s in samples])
        ids = [s.id for s in samples]
        return score_samples(model, X, ids, cfg.score, family)

    matrix = AccuracyMatrix(cfg.task_count)
    stage_tasks = []
    n_batches = len(stream_batches)
    for i, batch in enumerate(stream_batches):
        try:
            if not stage_tasks or stage_tasks[-1] != batch.task:
                stage_tasks.append(batch.task)
            replay = memory.sample_replay(cfg.batch_size, batch.task, rng_replay)
            combined = list(batch.samples) + replay
            X = np.stack([s.features for s in combined])
            y = np.array([s.label for s in combined])
            model.step(X, y)
            if er_mode:
                memory.update(batch.samples, rng=rng_retention)
            else:
                memory.update(batch.samples, score_fn=score_fn)
            last_of_task = i + 1 == n_batches or stream_batches[i + 1].task != batch.task
            if last_of_task:
                stage = len(stage_tasks) - 1
                matrix.record_task_end(stage, _task_accuracies(model, test, assignment, stage_tasks))
        except Exception as exc:
            raise RuntimeError(f"run aborted at stream batch {i} (task {batch.task}): {exc}") from exc
    summary = RunSummary(
        last_accuracy=last_accuracy(matrix),
        last_forgetting=last_forgetting(matrix),
        seed=seed,
        fingerprint=config_fingerprint(cfg),
    )
    return summary, matrix, memory


def run_online_cl(cfg: ExperimentConfig, seed: int) -> RunSummary:
    """Run the online loop: replay draw, one SGD step, memory update per batch."""
    return _execute(cfg, seed)[0]


def run_er_baseline(cfg: ExperimentConfig, seed: int) -> RunSummary:
    """Identical loop with class-balanced random retention instead of scores."""
    return run_online_cl(replace(cfg, score=ER_SCORE), seed)


def run_single(cfg: ExperimentConfig, seed: int, out_dir=None) -> RunArtifacts:
    """Run one seed and persist summary JSON, accuracy-matrix CSV, memory CSV."""
    out = out_dir or cfg.out_dir
    os.makedirs(out, exist_ok=True)
    summary, matrix, memory = _execute(cfg, seed)
    matrix_path = os.path.join(out, f"accuracy_matrix_seed{seed}.csv")
    memory_path = os.path.join(out, f"memory_seed{seed}.csv")
    summary_path = os.path.join(out, f"summary_seed{seed}.json")
    matrix.to_csv(matrix_path)
    memory.to_csv(memory_path)
    payload = {
        "last_accuracy": summary.last_accuracy,
        "last_forgetting": summary.last_forgetting,
        "seed": summary.seed,
        "fingerprint": summary.fingerprint,
        "config": {k: v for k, v in dataclasses.asdict(cfg).items() if k != "out_dir"},
    }
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return RunArtifacts(summary_path, matrix_path, memory_path, summary.fingerprint)


@dataclass(frozen=True)
class GridResult:
    """Aggregated cells plus the underlying per-seed rows."""

    cells: tuple
    runs: tuple


def _mean_std(values) -> tuple:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def run_grid(
    cfg: ExperimentConfig,
    scores=None,
    strategies=None,
    capacities=None,
    seeds=None,
    out_dir=None,
) -> GridResult:
    """Run every (score, strategy, capacity) x seed cell and aggregate.

    The ER baseline (score ``er-random``) is run once per capacity and
    reported with strategy ``random``; every other cell of the same capacity
    gets its relative forgetting improvement over that ER cell. Per-cell
    failures are recorded without aborting the rest of the grid.
    """
    scores = list(scores) if scores is not None else [cfg.score]
    strategies = list(strategies) if strategies is not None else [cfg.strategy]
    capacities = [int(c) for c in capacities] if capacities is not None else [cfg.memory_capacity]
    seeds = [int(s) for s in seeds] if seeds is not None else list(cfg.seeds)
    if not scores or not strategies or not capacities or not seeds:
        raise ValueError("grid axes must be non-empty")

    cells = []
    seen_cells = set()
    for capacity in capacities:
        for score in scores:
            variants = ["random"] if score == ER_SCORE else strategies
            for strategy in variants:
                cell = (capacity, score, strategy)
                if cell not in seen_cells:
                    seen_cells.add(cell)
                    cells.append(cell)

    run_rows = []
    cell_stats = {}
    for capacity, score, strategy in cells:
        run_cfg = replace(
            cfg,
            memory_capacity=capacity,
            score=score,
            strategy=cfg.strategy if score == ER_SCORE else strategy,
        )
        fingerprint = config_fingerprint(run_cfg)
        results, errors = [], []
        for seed in seeds:
            try:
                summary = run_online_cl(run_cfg, seed)
            except Exception as exc:
                errors.append(f"seed {seed}: {exc}")
                run_rows.append(
                    {
                        "capacity": capacity,
                        "score": score,
                        "strategy": strategy,
                        "seed": seed,
                        "last_accuracy": "",
                        "last_forgetting": "",
                        "fingerprint": fingerprint,
                        "error": str(exc),
                    }
                )
                continue
            results.append(summary)
            run_rows.append(
                {
                    "capacity": capacity,
                    "score": score,
                    "strategy": strategy,
                    "seed": seed,
                    "last_accuracy": summary.last_accuracy,
                    "last_forgetting": summary.last_forgetting,
                    "fingerprint": fingerprint,
                    "error": "",
                }
            )
        cell_stats[(capacity, score, strategy)] = (results, errors)

    grid_rows = []
    for capacity, score, strategy in sorted(cell_stats, key=lambda c: (c[0], c[1], c[2])):
        results, errors = cell_stats[(capacity, score, strategy)]
        row = {
            "capacity": capacity,
            "score": score,
            "strategy": strategy,
            "n_seeds": len(results),
            "n_failed": len(errors),
            "mean_last_accuracy": "",
            "std_last_accuracy": "",
            "mean_last_forgetting": "",
            "std_last_forgetting": "",
            "rel_forgetting_improvement_vs_er": "",
            "error": errors[0] if errors else "",
        }
        if results:
            mean_a, std_a = _mean_std([r.last_accuracy for r in results])
            mean_f, std_f = _mean_std([r.last_forgetting for r in results])
            row.update(
                mean_last_accuracy=mean_a,
                std_last_accuracy=std_a,
                mean_last_forgetting=mean_f,
                std_last_forgetting=std_f,
            )
        grid_rows.append(row)

    er_mean_f = {
        row["capacity"]: row["mean_last_forgetting"]
        for row in grid_rows
        if row["score"] == ER_SCORE and row["mean_last_forgetting"] != ""
    }
    for row in grid_rows:
        baseline = er_mean_f.get(row["capacity"])
        if (
            row["score"] != ER_SCORE
            and row["mean_last_forgetting"] != ""
            and baseline is not None
            and baseline > 0.0
        ):
            row["rel_forgetting_improvement_vs_er"] = relative_improvement(
                baseline, row["mean_last_forgetting"]
            )

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        _write_rows_csv(
            os.path.join(out_dir, "grid.csv"),
            grid_rows,
            [
                "capacity",
                "score",
                "strategy",
                "n_seeds",
                "n_failed",
                "mean_last_accuracy",
                "std_last_accuracy",
                "mean_last_forgetting",
                "std_last_forgetting",
                "rel_forgetting_improvement_vs_er",
                "error",
            ],
        )
        _write_rows_csv(
            os.path.join(out_dir, "runs.csv"),
            run_rows,
            [
                "capacity",
                "score",
                "strategy",
                "seed",
                "last_accuracy",
                "last_forgetting",
                "fingerprint",
                "error",
            ],
        )
    return GridResult(cells=tuple(grid_rows), runs=tuple(run_rows))


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows_csv(path, rows, columns) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])
