"""Data collection support: five-point-stencil acceleration, residual force
measurement from logged states, and dataset/manifest persistence.

Datasets are plain CSV with a commented header; floats are written with 17
significant digits so save -> load is exact for float64.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
import yaml

from .sim import SimParams

DATASET_FORMAT = "dataset-csv"
DATASET_VERSION = 1
MANIFEST_VERSION = 1


class DatasetFormatError(ValueError):
    pass


@dataclass
class RawLog:
    """Time-ordered flight records at the collection rate."""

    t: np.ndarray  # (n,)
    p: np.ndarray  # (n, 3)
    v: np.ndarray  # (n, 3)
    quat: np.ndarray  # (n, 4)
    u_motor: np.ndarray  # (n, 4)
    u_world: np.ndarray  # (n, 3) world-frame control force

    def __post_init__(self):
        n = len(self.t)
        if n < 5:
            raise ValueError("log must contain at least 5 samples")
        steps = np.diff(self.t)
        if np.any(steps <= 0):
            raise ValueError("log timestamps must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 0.01 * steps[0]:
            raise ValueError("log spacing exceeds 1% jitter")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self) -> int:
        return len(self.t)


@dataclass
class Dataset:
    """Per-condition training samples: 11-d inputs x against measured 3-d
    residual forces y."""

    cond_id: int
    t: np.ndarray  # (n,)
    x: np.ndarray  # (n, 11)
    y: np.ndarray  # (n, 3)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        if self.x.shape != (n, 11) or self.y.shape != (n, 3):
            raise ValueError("dataset arrays have inconsistent shapes")
        steps = np.diff(self.t)
        if np.any(steps <= 0):
            raise ValueError("dataset timestamps must be strictly increasing")
        if np.max(np.abs(steps - steps[0])) > 0.01 * steps[0]:
            raise ValueError("dataset spacing exceeds 1% jitter")

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self) -> int:
        return len(self.t)


def five_point_accel(log: RawLog, i: int) -> np.ndarray:
    """Acceleration at sample i from the first-derivative five-point stencil
    on velocity (exact for velocity polynomials up to degree 4)."""
    if not 2 <= i <= len(log) - 3:
        raise IndexError(f"stencil index {i} outside [2, {len(log) - 3}]")
    v = log.v
    return (-v[i + 2] + 8.0 * v[i + 1] - 8.0 * v[i - 1] + v[i - 2]) / (12.0 * log.dt)


def five_point_accel_position(log: RawLog, i: int) -> np.ndarray:
    """Cross-check estimator: second-derivative stencil on position."""
    if not 2 <= i <= len(log) - 3:
        raise IndexError(f"stencil index {i} outside [2, {len(log) - 3}]")
    p = log.p
    return (
        -p[i - 2] + 16.0 * p[i - 1] - 30.0 * p[i] + 16.0 * p[i + 1] - p[i + 2]
    ) / (12.0 * log.dt**2)


def build_dataset(log: RawLog, params: SimParams, cond_id: int,
                  noise_sigma: float = 0.0, noise_seed=None) -> Dataset:
    """Measured residual per interior sample: y = m a - m g - u_world, with
    x = [v, quat, u_motor]. The two stencil boundary samples at each end are
    dropped. Optional seeded Gaussian measurement noise is added to y."""
    n = len(log)
    idx = np.arange(2, n - 2)
    accel = np.array([five_point_accel(log, int(i)) for i in idx])
    g = params.gravity_vec
    y = params.mass * accel - params.mass * g - log.u_world[idx]
    if noise_sigma > 0.0:
        rng = np.random.default_rng(noise_seed)
        y = y + rng.normal(scale=noise_sigma, size=y.shape)
    x = np.hstack([log.v[idx], log.quat[idx], log.u_motor[idx]])
    return Dataset(cond_id, log.t[idx].copy(), x, y,
                   meta={"noise_sigma": noise_sigma})


# --- persistence -------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_dataset(ds: Dataset, path) -> None:
    cols = ["t"] + [f"x{i}" for i in range(11)] + [f"y{i}" for i in range(3)]
    lines = [
        f"# {DATASET_FORMAT} {DATASET_VERSION}",
        f"# cond_id {ds.cond_id}",
        f"# dt {_fmt(ds.dt)}",
        ",".join(cols),
    ]
    for i in range(len(ds)):
        row = [ds.t[i], *ds.x[i], *ds.y[i]]
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as f:
        lines = f.read().splitlines()
    if len(lines) < 5:
        raise DatasetFormatError(f"{path}:1: file too short to be a dataset")
    head = lines[0].split()
    if len(head) != 3 or head[1] != DATASET_FORMAT:
        raise DatasetFormatError(f"{path}:1: missing {DATASET_FORMAT} header")
    if int(head[2]) != DATASET_VERSION:
        raise DatasetFormatError(f"{path}:1: unsupported version {head[2]}")
    try:
        cond_id = int(lines[1].split()[2])
    except (IndexError, ValueError) as exc:
        raise DatasetFormatError(f"{path}:2: bad cond_id line") from exc
    t_list, x_list, y_list = [], [], []
    prev_t = None
    for ln_no, line in enumerate(lines[4:], start=5):
        if not line:
            continue
        vals = line.split(",")
        if len(vals) != 15:
            raise DatasetFormatError(f"{path}:{ln_no}: expected 15 fields, got {len(vals)}")
        try:
            row = [float(v) for v in vals]
        except ValueError as exc:
            raise DatasetFormatError(f"{path}:{ln_no}: non-numeric field: {exc}") from exc
        if prev_t is not None and row[0] <= prev_t:
            raise DatasetFormatError(f"{path}:{ln_no}: non-monotonic timestamp")
        prev_t = row[0]
        t_list.append(row[0])
        x_list.append(row[1:12])
        y_list.append(row[12:15])
    try:
        return Dataset(cond_id, np.array(t_list), np.array(x_list), np.array(y_list))
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc


def scenario_hash(scenario: dict) -> str:
    """Stable short hash of a scenario configuration."""
    blob = json.dumps(scenario, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_manifest(entries: list[dict], scenario: dict, path) -> None:
    """entries: [{cond_id, path, seed, rows}, ...]; stored sorted by cond_id."""
    doc = {
        "manifest_version": MANIFEST_VERSION,
        "scenario_hash": scenario_hash(scenario),
        "conditions": sorted(entries, key=lambda e: e["cond_id"]),
    }
    with open(path, "w") as f:
        yaml.safe_dump(doc, f, sort_keys=True)


def load_manifest(path) -> dict:
    with open(path) as f:
        doc = yaml.safe_load(f)
    if not isinstance(doc, dict) or doc.get("manifest_version") != MANIFEST_VERSION:
        raise DatasetFormatError(f"{path}: not a version-{MANIFEST_VERSION} manifest")
    doc["conditions"] = sorted(doc["conditions"], key=lambda e: e["cond_id"])
    return doc
