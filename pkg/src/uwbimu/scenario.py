"""Scenario configuration, dataset synthesis, and serialization.

A scenario pins everything needed to reproduce an experiment: anchor layout,
trajectory, sensor rates, noise densities, the true lever arm and temporal
offset, and the RNG seed. Datasets are JSON Lines: one header object followed
by time-ordered imu/range records. An IMU record stamped tau was physically
captured at tau - t_d (the IMU pipeline introduces the latency); UWB ranges
are stamped on the common clock.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import models, trajectories
from .errors import ConfigError

DATASET_VERSION = 1


def _require(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


@dataclass
class Scenario:
    anchors: list                      # [[id, [x, y, z]], ...]
    trajectory: dict                   # {"kind": ..., "params": {...}}
    p_IU: list
    t_d: float
    duration: float = 60.0
    imu_rate: float = 200.0
    uwb_rate: float = 20.0
    b_a0: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    b_w0: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    noise: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        _require(isinstance(self.anchors, list) and len(self.anchors) >= 3,
                 "anchors", "need at least three anchors")
        for i, entry in enumerate(self.anchors):
            _require(isinstance(entry, (list, tuple)) and len(entry) == 2,
                     f"anchors[{i}]", "expected [id, [x, y, z]]")
            _require(len(entry[1]) == 3, f"anchors[{i}][1]", "expected 3 coordinates")
        _require(isinstance(self.trajectory, dict) and "kind" in self.trajectory,
                 "trajectory", "expected {'kind': ..., 'params': {...}}")
        _require(self.trajectory["kind"] in trajectories.GENERATOR_KINDS,
                 "trajectory.kind", f"unknown kind {self.trajectory['kind']!r}")
        _require(len(self.p_IU) == 3, "p_IU", "expected 3 coordinates")
        _require(self.t_d >= 0.0, "t_d", "must be non-negative")
        _require(self.t_d <= trajectories.DOMAIN_MARGIN, "t_d",
                 f"must not exceed the trajectory domain margin {trajectories.DOMAIN_MARGIN}")
        _require(self.duration > 0, "duration", "must be positive")
        _require(self.imu_rate > 0, "imu_rate", "must be positive")
        _require(self.uwb_rate > 0, "uwb_rate", "must be positive")
        known = {"sigma_a", "sigma_w", "sigma_ba", "sigma_bw", "sigma_r"}
        for key in self.noise:
            _require(key in known, f"noise.{key}", "unknown noise field")

    # --- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        if not isinstance(data, dict):
            raise ConfigError("scenario root: expected a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        for key in data:
            _require(key in known, key, "unknown scenario field")
        missing = {"anchors", "trajectory", "p_IU", "t_d"} - set(data)
        _require(not missing, "scenario", f"missing required fields {sorted(missing)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(f"scenario: {exc}") from exc

    @classmethod
    def from_json(cls, path: str) -> "Scenario":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"scenario file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario file is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    # --- derived objects -----------------------------------------------------

    def anchor_set(self) -> models.AnchorSet:
        return models.AnchorSet.from_list([(a[0], a[1]) for a in self.anchors])

    def noise_config(self) -> models.NoiseConfig:
        return models.NoiseConfig(seed=self.seed, **self.noise)

    def make_trajectory(self) -> trajectories.Trajectory:
        params = dict(self.trajectory.get("params", {}))
        params.setdefault("duration", self.duration)
        if params["duration"] < self.duration:
            raise ConfigError("trajectory.params.duration: shorter than scenario duration")
        return trajectories.make_trajectory(self.trajectory["kind"], params)


def simulate(scenario: Scenario) -> tuple[list, list]:
    """Synthesize (records, truth): the measurement stream and per-IMU-epoch truth.

    Records are time-ordered ImuSample/RangeSample objects; truth is one State
    per IMU record, evaluated at the physical capture time tau - t_d with the
    bias random-walk values in effect at that epoch. Ranges cycle through the
    anchors round-robin, one per UWB tick.
    """
    traj = scenario.make_trajectory()
    anchors = scenario.anchor_set()
    noise = scenario.noise_config()
    rng = np.random.default_rng(scenario.seed)
    dt = 1.0 / scenario.imu_rate
    n_imu = int(round(scenario.duration * scenario.imu_rate))
    b_a = np.asarray(scenario.b_a0, dtype=float).copy()
    b_w = np.asarray(scenario.b_w0, dtype=float).copy()
    imu_records = []
    truth = []
    for k in range(n_imu + 1):
        tau = k * dt
        if k > 0:
            b_a = b_a + noise.sigma_ba * np.sqrt(dt) * rng.standard_normal(3)
            b_w = b_w + noise.sigma_bw * np.sqrt(dt) * rng.standard_normal(3)
        t_phys = tau - scenario.t_d
        sample = models.synth_imu(traj, t_phys, b_a, b_w, noise, rng)
        imu_records.append(models.ImuSample(tau, sample.a_m, sample.w_m))
        truth.append(traj.state_at(t_phys, b_a=b_a, b_w=b_w,
                                   p_IU=scenario.p_IU, t_d=scenario.t_d))
    range_records = []
    n_uwb = int(round(scenario.duration * scenario.uwb_rate))
    for m in range(n_uwb):
        t_r = (m + 1) / scenario.uwb_rate
        state = traj.state_at(t_r, p_IU=scenario.p_IU, t_d=scenario.t_d)
        aid = anchors.ids[m % len(anchors.ids)]
        sub = models.AnchorSet(ids=(aid,),
                               positions=anchors.positions[m % len(anchors.ids):][:1])
        z = models.synth_range(sub, state, noise, rng, t=t_r)[0]
        range_records.append(z)
    records = sorted(imu_records + range_records, key=lambda r: (r.t, isinstance(r, models.RangeSample)))
    return records, truth


# --- dataset IO ---------------------------------------------------------------

def write_dataset(path: str, scenario: Scenario, records: list):
    with open(path, "w") as fh:
        header = {"type": "header", "version": DATASET_VERSION,
                  "scenario_digest": scenario.digest(), "units": "SI"}
        fh.write(json.dumps(header) + "\n")
        for rec in records:
            if isinstance(rec, models.ImuSample):
                row = {"type": "imu", "t": rec.t,
                       "a": list(rec.a_m), "w": list(rec.w_m)}
            else:
                row = {"type": "range", "t": rec.t,
                       "anchor_id": rec.anchor_id, "range": rec.range}
            fh.write(json.dumps(row) + "\n")


def read_dataset(path: str) -> tuple[dict, list]:
    records = []
    header = None
    last_t = -np.inf
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            kind = row.get("type")
            if lineno == 1:
                _require(kind == "header", f"{path}:1", "first record must be the header")
                _require(row.get("version") == DATASET_VERSION,
                         f"{path}:1", f"unsupported dataset version {row.get('version')!r}")
                header = row
                continue
            if kind == "imu":
                records.append(models.ImuSample(row["t"], row["a"], row["w"]))
            elif kind == "range":
                records.append(models.RangeSample(row["t"], row["anchor_id"], row["range"]))
            else:
                raise ConfigError(f"{path}:{lineno}: unknown record type {kind!r}")
            if row["t"] < last_t:
                raise ConfigError(f"{path}:{lineno}: records out of time order")
            last_t = row["t"]
    _require(header is not None, path, "empty dataset")
    return header, records


def write_truth(path: str, truth: list):
    with open(path, "w") as fh:
        for k, s in enumerate(truth):
            row = {"index": k, "p": list(s.p_WI), "v": list(s.v_WI),
                   "q": list(s.q_WI), "b_a": list(s.b_a), "b_w": list(s.b_w),
                   "p_IU": list(s.p_IU), "t_d": s.t_d}
            fh.write(json.dumps(row) + "\n")


def read_truth(path: str) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            out.append(models.State(row["p"], row["v"], row["q"], row["b_a"],
                                    row["b_w"], row["p_IU"], row["t_d"]))
    return out
