from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from flash_max.errors import ConfigError, InvalidObservationsError

FIELD_COMPONENTS = ("E1", "E2", "E3", "B1", "B2", "B3")
POINT_COORDS = ("t", "x", "y", "z")


class Activation(str, enum.Enum):
    TANH = "tanh"
    COS = "cos"
    RELU = "relu"
    SILU = "silu"
    GELU = "gelu"
    SIGMOID = "sigmoid"


class Setup(str, enum.Enum):
    IC = "ic"
    BC = "bc"


class GroundTruthKind(str, enum.Enum):
    PLANE_WAVES = "plane_waves"
    RADIAL_WAVES = "radial_waves"
    HOPF_FIBRATION = "hopf_fibration"
    RANDOM_SOLUTION = "random_solution"


class Experiment(str, enum.Enum):
    TRAIN = "train"
    RACE = "race"
    TIME_BUDGET = "time_budget"
    DATA_BUDGET = "data_budget"
    ABLATION = "ablation"
    VERIFY = "verify"
    GRADCHECK = "gradcheck"
    EXACT_INIT = "exact_init"
    EXPORT_FIELD = "export_field"
    EVAL = "eval"


@dataclass(frozen=True)
class GroundTruthId:
    kind: GroundTruthKind
    seed: int | None = None

    def __post_init__(self):
        if self.kind is GroundTruthKind.RANDOM_SOLUTION:
            if self.seed is None:
                object.__setattr__(self, "seed", 0)
        elif self.seed is not None:
            raise ValueError(f"{self.kind.value} does not take a seed")

    @classmethod
    def parse(cls, text: str) -> GroundTruthId:
        """Parse ``plane_waves``, ``hopf_fibration``, ``random_solution:7`` etc."""
        name, _, seed = text.strip().partition(":")
        try:
            kind = GroundTruthKind(name.lower().replace("-", "_"))
        except ValueError:
            choices = ", ".join(k.value for k in GroundTruthKind)
            raise ConfigError(f"unknown ground truth {text!r} (choose from {choices})") from None
        if seed and kind is not GroundTruthKind.RANDOM_SOLUTION:
            raise ConfigError(f"ground truth {name!r} does not take a seed")
        return cls(kind, int(seed) if seed else None)

    def __str__(self) -> str:
        if self.kind is GroundTruthKind.RANDOM_SOLUTION:
            return f"{self.kind.value}:{self.seed}"
        return self.kind.value


@dataclass
class BranchParams:
    spatial_freqs: np.ndarray
    signs: np.ndarray
    out_weights: np.ndarray
    biases: np.ndarray

    def copy(self) -> BranchParams:
        return BranchParams(
            spatial_freqs=self.spatial_freqs.copy(),
            signs=self.signs.copy(),
            out_weights=self.out_weights.copy(),
            biases=self.biases.copy(),
        )


@dataclass
class ModelParams:
    """Trainable state of a network with two multiplier branches of 2W neurons each."""

    width_half: int
    activation: Activation
    branches: tuple[BranchParams, BranchParams]

    def __post_init__(self):
        self.activation = Activation(self.activation)
        if self.width_half < 0:
            raise ValueError("width_half must be non-negative")
        if len(self.branches) != 2:
            raise ValueError("exactly two branches are required")
        n = 2 * self.width_half
        for i, br in enumerate(self.branches, start=1):
            br.spatial_freqs = np.asarray(br.spatial_freqs, dtype=float).reshape(n, 3)
            br.signs = np.asarray(br.signs, dtype=float).reshape(n)
            br.out_weights = np.asarray(br.out_weights, dtype=float).reshape(n)
            br.biases = np.asarray(br.biases, dtype=float).reshape(n)
            if not np.all(np.abs(br.signs) == 1.0):
                raise ValueError(f"branch {i}: signs must be +1 or -1")
            if int(np.sum(br.signs > 0)) != self.width_half:
                raise ValueError(f"branch {i}: signs must split {self.width_half}/{self.width_half}")

    @classmethod
    def zeros(cls, width_half: int, activation: Activation = Activation.TANH) -> ModelParams:
        n = 2 * width_half
        signs = np.concatenate([np.ones(width_half), -np.ones(width_half)])

        def branch():
            return BranchParams(np.zeros((n, 3)), signs.copy(), np.zeros(n), np.zeros(n))

        return cls(width_half, activation, (branch(), branch()))

    def copy(self) -> ModelParams:
        return ModelParams(
            self.width_half,
            self.activation,
            (self.branches[0].copy(), self.branches[1].copy()),
        )


@dataclass
class BranchGradient:
    spatial_freqs: np.ndarray
    out_weights: np.ndarray
    biases: np.ndarray

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.spatial_freqs, self.out_weights, self.biases


@dataclass
class GradientBundle:
    branches: tuple[BranchGradient, BranchGradient]

    @classmethod
    def zeros_like(cls, params: ModelParams) -> GradientBundle:
        return cls(tuple(
            BranchGradient(
                np.zeros_like(br.spatial_freqs),
                np.zeros_like(br.out_weights),
                np.zeros_like(br.biases),
            )
            for br in params.branches
        ))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for br in self.branches for a in br.arrays())


@dataclass
class ObservationSet:
    """Points (N, 4), target fields (N, 6) and boolean loss masks (N, 6)."""

    points: np.ndarray
    targets: np.ndarray
    masks: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 4)
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1, 6)
        self.masks = np.asarray(self.masks, dtype=bool).reshape(-1, 6)
        if not len(self.points) == len(self.targets) == len(self.masks):
            raise InvalidObservationsError(
                f"length mismatch: {len(self.points)} points, {len(self.targets)} targets, "
                f"{len(self.masks)} masks"
            )
        if len(self.masks) and not np.all(self.masks.any(axis=1)):
            raise InvalidObservationsError("every observation needs at least one mask bit set")

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, index) -> ObservationSet:
        return ObservationSet(self.points[index], self.targets[index], self.masks[index])

    @classmethod
    def full(cls, points, targets) -> ObservationSet:
        targets = np.asarray(targets, dtype=float).reshape(-1, 6)
        return cls(points, targets, np.ones(targets.shape, dtype=bool))


@dataclass
class TrainConfig:
    width_half: int = 5000
    activation: Activation = Activation.TANH
    learning_rate: float = 5e-2
    weight_decay: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.95
    batch_size: int = 1000
    max_epochs: int = 10000
    cosine_epochs: int = 10000
    eta_min: float = 0.0
    seed: int = 0
    target_rel_error: float | None = None
    val_every_steps: int = 10
    wall_clock_budget_s: float | None = None

    def __post_init__(self):
        self.activation = Activation(self.activation)

    def validate(self) -> None:
        if self.width_half < 1:
            raise ConfigError("train.width_half must be a positive integer")
        for name in ("batch_size", "max_epochs", "cosine_epochs", "val_every_steps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"train.{name} must be a positive integer")
        for name in ("beta1", "beta2"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"train.{name} must lie in (0, 1)")
        if self.learning_rate <= 0 or self.weight_decay < 0 or self.eta_min < 0:
            raise ConfigError("train.learning_rate must be positive; weight_decay and eta_min non-negative")
        if self.target_rel_error is not None and not 0.0 < self.target_rel_error <= 1.0:
            raise ConfigError("train.target_rel_error must lie in (0, 1]")
        if self.wall_clock_budget_s is not None and self.wall_clock_budget_s < 0:
            raise ConfigError("train.wall_clock_budget_s must be non-negative")


@dataclass
class SamplingConfig:
    setup: Setup = Setup.IC
    n_train: int = 1000
    n_val: int = 10000
    seed: int = 0
    ground_truth: GroundTruthId = field(
        default_factory=lambda: GroundTruthId(GroundTruthKind.HOPF_FIBRATION)
    )

    def __post_init__(self):
        self.setup = Setup(self.setup)

    def validate(self) -> None:
        if self.n_train < 1:
            raise ConfigError("sampling.n_train must be a positive integer")
        if self.n_val < 0:
            raise ConfigError("sampling.n_val must be non-negative")


@dataclass(frozen=True)
class TrainRecord:
    step: int
    epoch: int
    wall_seconds_train: float
    wall_seconds_total: float
    loss: float
    lr: float
    val_rel_error: float | None = None


@dataclass
class TrainLog:
    records: list[TrainRecord] = field(default_factory=list)

    def append(self, record: TrainRecord) -> None:
        if self.records:
            last = self.records[-1]
            if (record.wall_seconds_train < last.wall_seconds_train
                    or record.wall_seconds_total < last.wall_seconds_total):
                raise ValueError("train log wall clock must be non-decreasing")
        self.records.append(record)

    def set_last_validation(self, value: float) -> None:
        self.records[-1] = replace(self.records[-1], val_rel_error=value)

    def validations(self) -> list[TrainRecord]:
        return [r for r in self.records if r.val_rel_error is not None]

    def best_so_far(self) -> list[tuple[TrainRecord, float]]:
        best = math.inf
        curve = []
        for rec in self.validations():
            best = min(best, rec.val_rel_error)
            curve.append((rec, best))
        return curve

    def __len__(self) -> int:
        return len(self.records)


@dataclass
class EvalReport:
    rel_l2_error: float
    residual_rmse: float | None
    n_points: int
    setup: Setup | None = None
    ground_truth: GroundTruthId | None = None
    seed: int | None = None


@dataclass
class TrigTerm:
    xi: np.ndarray
    amp_cos: np.ndarray
    amp_sin: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=float).reshape(3)
        self.amp_cos = np.asarray(self.amp_cos, dtype=float).reshape(6)
        self.amp_sin = np.asarray(self.amp_sin, dtype=float).reshape(6)


@dataclass
class ExportGrid:
    times: list[float] = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    resolution: int = 21
    lower: float = 0.0
    upper: float = 1.0


@dataclass
class ExperimentConfig:
    experiment: Experiment = Experiment.TRAIN
    ground_truth: GroundTruthId | None = None
    setup: Setup = Setup.IC
    seed: int | None = None
    repeats: int = 5
    workers: int = 1
    output_dir: Path = Path("runs")
    train: TrainConfig = field(default_factory=TrainConfig)
    sampling: SamplingConfig = field(default_factory=SamplingConfig)
    n_points: list[int] = field(default_factory=lambda: [100, 200, 500, 1000, 2000, 5000, 10000, 12000])
    widths: list[int] = field(default_factory=lambda: [50, 100, 250, 500, 1000, 2500, 5000, 6000])
    activations: list[Activation] = field(default_factory=lambda: [Activation.TANH])
    export: ExportGrid = field(default_factory=ExportGrid)

    def __post_init__(self):
        self.experiment = Experiment(self.experiment)
        self.setup = Setup(self.setup)
        self.output_dir = Path(self.output_dir)
        self.activations = [Activation(a) for a in self.activations]

    def validate(self) -> None:
        if self.repeats < 1:
            raise ConfigError("repeats must be a positive integer")
        if self.workers < 1:
            raise ConfigError("workers must be a positive integer")
        self.train.validate()
        self.sampling.validate()

    def ground_truth_or(self, default: GroundTruthKind) -> GroundTruthId:
        return self.ground_truth if self.ground_truth is not None else GroundTruthId(default)

    def seed_or(self, default: int) -> int:
        return self.seed if self.seed is not None else default

    def for_seed(self, seed: int, ground_truth: GroundTruthId) -> tuple[TrainConfig, SamplingConfig]:
        train = replace(self.train, seed=seed)
        sampling = replace(self.sampling, seed=seed, setup=self.setup, ground_truth=ground_truth)
        return train, sampling


@dataclass
class RunRecord:
    run_id: str
    run_dir: Path
    seed: int
    report: EvalReport
    checkpoint_path: Path
    trainlog_path: Path
    converged: bool
    best_error: float
    time_to_target: float | None
    time_to_best: float | None
    wall_seconds: float
    steps: int
    extras: dict = field(default_factory=dict)


@dataclass
class ExperimentSummary:
    experiment: Experiment
    rows: list[dict]
    aggregate: dict = field(default_factory=dict)
    runs: list[RunRecord] = field(default_factory=list)
