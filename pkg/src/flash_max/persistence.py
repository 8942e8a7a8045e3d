"""JSON checkpoints and reports, CSV logs and tables."""
from __future__ import annotations

import dataclasses
import enum
import json
import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

from flash_max.errors import ConfigError
from flash_max.models import (
    FIELD_COMPONENTS,
    POINT_COORDS,
    BranchGradient,
    BranchParams,
    EvalReport,
    GradientBundle,
    GroundTruthId,
    ModelParams,
    ObservationSet,
    TrainLog,
    TrainRecord,
)
from flash_max.training import AdamWState

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TRAINLOG_COLUMNS = [f.name for f in dataclasses.fields(TrainRecord)]


def _to_jsonable(obj):
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (Path, GroundTruthId)):
        return str(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if dataclasses.is_dataclass(obj):
        return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    # float repr round-trips exactly, so no precision is lost
    return json.dumps(obj, indent=2, default=_to_jsonable)


def write_json(path: Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n")
    return path


def read_json(path: Path):
    return json.loads(Path(path).read_text())


def params_to_dict(params: ModelParams) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "width_half": params.width_half,
        "activation": params.activation.value,
        "branches": [
            {
                "spatial_freqs": br.spatial_freqs.tolist(),
                "signs": br.signs.tolist(),
                "out_weights": br.out_weights.tolist(),
                "biases": br.biases.tolist(),
            }
            for br in params.branches
        ],
    }


def _check_schema(data: dict, what: str) -> None:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"{what}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")


def params_from_dict(data: dict) -> ModelParams:
    _check_schema(data, "checkpoint")
    w = int(data["width_half"])
    n = 2 * w
    branches = []
    for br in data["branches"]:
        branches.append(BranchParams(
            spatial_freqs=np.asarray(br["spatial_freqs"], dtype=float).reshape(n, 3),
            signs=np.asarray(br["signs"], dtype=float),
            out_weights=np.asarray(br["out_weights"], dtype=float),
            biases=np.asarray(br["biases"], dtype=float),
        ))
    return ModelParams(w, data["activation"], tuple(branches))


def _bundle_to_list(bundle: GradientBundle) -> list[dict]:
    return [
        {"spatial_freqs": g.spatial_freqs.tolist(), "out_weights": g.out_weights.tolist(), "biases": g.biases.tolist()}
        for g in bundle.branches
    ]


def _bundle_from_list(items: list[dict], width_half: int) -> GradientBundle:
    n = 2 * width_half
    return GradientBundle(tuple(
        BranchGradient(
            np.asarray(g["spatial_freqs"], dtype=float).reshape(n, 3),
            np.asarray(g["out_weights"], dtype=float),
            np.asarray(g["biases"], dtype=float),
        )
        for g in items
    ))


def save_checkpoint(path: Path, params: ModelParams, state: AdamWState | None = None, **extra) -> Path:
    data = params_to_dict(params)
    if state is not None:
        data["optimizer"] = {
            "step": state.step,
            "first": _bundle_to_list(state.first),
            "second": _bundle_to_list(state.second),
        }
    data.update(extra)
    write_json(path, data)
    log.info("Wrote checkpoint %s (W=%d)", path, params.width_half)
    return Path(path)


def load_checkpoint(path: Path) -> tuple[ModelParams, AdamWState | None]:
    try:
        data = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read checkpoint {path}: {exc}") from exc
    try:
        params = params_from_dict(data)
        opt = data.get("optimizer")
        state = None
        if opt is not None:
            state = AdamWState(
                int(opt["step"]),
                _bundle_from_list(opt["first"], params.width_half),
                _bundle_from_list(opt["second"], params.width_half),
            )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed checkpoint {path}: {exc}") from exc
    return params, state


def report_to_dict(report: EvalReport) -> dict:
    return {
        "rel_l2_error": report.rel_l2_error,
        "residual_rmse": report.residual_rmse,
        "n_points": report.n_points,
        "setup": report.setup.value if report.setup is not None else None,
        "ground_truth": str(report.ground_truth) if report.ground_truth is not None else None,
        "seed": report.seed,
    }


def write_trainlog(path: Path, train_log: TrainLog) -> Path:
    frame = pd.DataFrame([dataclasses.asdict(r) for r in train_log.records], columns=TRAINLOG_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.17g")
    return Path(path)


def read_trainlog(path: Path) -> TrainLog:
    frame = pd.read_csv(path, float_precision="round_trip")
    out = TrainLog()
    for row in frame.itertuples(index=False):
        val = row.val_rel_error
        out.append(TrainRecord(
            step=int(row.step),
            epoch=int(row.epoch),
            wall_seconds_train=float(row.wall_seconds_train),
            wall_seconds_total=float(row.wall_seconds_total),
            loss=float(row.loss),
            lr=float(row.lr),
            val_rel_error=None if math.isnan(val) else float(val),
        ))
    return out


def write_curve(path: Path, train_log: TrainLog) -> Path:
    """Validation checkpoints with the running best error."""
    rows = [
        {
            "step": rec.step,
            "wall_seconds_total": rec.wall_seconds_total,
            "val_rel_error": rec.val_rel_error,
            "best_so_far": best,
        }
        for rec, best in train_log.best_so_far()
    ]
    columns = ["step", "wall_seconds_total", "val_rel_error", "best_so_far"]
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False, float_format="%.17g")
    return Path(path)


def write_observations(path: Path, obs: ObservationSet) -> Path:
    frame = pd.DataFrame(np.hstack([obs.points, obs.targets]), columns=[*POINT_COORDS, *FIELD_COMPONENTS])
    frame["mask"] = ["".join("1" if bit else "0" for bit in row) for row in obs.masks]
    frame.to_csv(path, index=False, float_format="%.17g")
    return Path(path)


def read_observations(path: Path) -> ObservationSet:
    frame = pd.read_csv(path, dtype={"mask": str}, float_precision="round_trip")
    masks = np.array([[c == "1" for c in m] for m in frame["mask"]], dtype=bool).reshape(-1, 6)
    return ObservationSet(
        frame[list(POINT_COORDS)].to_numpy(),
        frame[list(FIELD_COMPONENTS)].to_numpy(),
        masks,
    )


def write_field(path: Path, points: np.ndarray, fields: np.ndarray) -> Path:
    frame = pd.DataFrame(np.hstack([points, fields]), columns=[*POINT_COORDS, *FIELD_COMPONENTS])
    frame.to_csv(path, index=False, float_format="%.17g")
    log.info("Wrote %d field samples to %s", len(frame), path)
    return Path(path)


def write_table(directory: Path, name: str, rows: list[dict], summary: dict | None = None) -> tuple[Path, Path]:
    """Write ``name.csv`` with one line per row and ``name.json`` with rows and summary."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{name}.csv"
    pd.DataFrame(rows).to_csv(csv_path, index=False)
    json_path = write_json(directory / f"{name}.json", {"rows": rows, "summary": summary or {}})
    return csv_path, json_path
