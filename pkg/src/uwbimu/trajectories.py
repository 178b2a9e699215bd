"""Closed-form ground-truth trajectories and the input-excitation detector.

Each generator returns a Trajectory whose pose, velocity, acceleration and
body angular rate are consistent closed forms, so truth queries carry no
integration error. Generators are chosen to realize (or deliberately break)
the excitation conditions used by the identifiability and observability
analyses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geom, models

# variance threshold (SI units squared) above which an input channel counts
# as excited over the analysis window
EXCITATION_EPS = 1e-4

DOMAIN_MARGIN = 0.25  # trajectories stay valid slightly outside [0, T]

_AXES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class ExcitationReport:
    accel: tuple  # (a_x, a_y, a_z) excited flags
    gyro: tuple   # (w_x, w_y, w_z) excited flags

    def all_excited(self) -> bool:
        return all(self.accel) and all(self.gyro)

    def any_accel(self) -> bool:
        return any(self.accel)

    def as_dict(self) -> dict:
        return {"accel": list(self.accel), "gyro": list(self.gyro)}


@dataclass(frozen=True)
class Trajectory:
    """Continuous-time ground truth over [0, T] (with a small margin)."""

    kind: str
    params: dict
    duration: float
    position: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    acceleration: Callable[[float], np.ndarray]
    orientation: Callable[[float], np.ndarray]   # unit quaternion, body->world
    angular_rate: Callable[[float], np.ndarray]  # body frame

    def check_domain(self, t: float):
        if t < -DOMAIN_MARGIN or t > self.duration + DOMAIN_MARGIN:
            raise ValueError(f"t={t} outside trajectory domain [0, {self.duration}]")

    def state_at(self, t: float, b_a=(0, 0, 0), b_w=(0, 0, 0), p_IU=(0, 0, 0), t_d: float = 0.0) -> models.State:
        self.check_domain(t)
        return models.State(self.position(t), self.velocity(t), self.orientation(t),
                            b_a, b_w, p_IU, t_d)


def _guarded(traj_duration: float, fn):
    def wrapped(t: float) -> np.ndarray:
        if t < -DOMAIN_MARGIN or t > traj_duration + DOMAIN_MARGIN:
            raise ValueError(f"t={t} outside trajectory domain [0, {traj_duration}]")
        return fn(t)

    return wrapped


def make_static(position=(0.0, 0.0, 0.0), quat=(1.0, 0.0, 0.0, 0.0), duration: float = 60.0) -> Trajectory:
    """Negative control: constant pose, nothing excited."""
    p0 = np.asarray(position, dtype=float)
    q0 = geom.normalize_quat(np.asarray(quat, dtype=float))
    zero = np.zeros(3)
    return Trajectory(
        kind="static",
        params={"position": list(p0), "quat": list(q0), "duration": duration},
        duration=duration,
        position=_guarded(duration, lambda t: p0.copy()),
        velocity=_guarded(duration, lambda t: zero.copy()),
        acceleration=_guarded(duration, lambda t: zero.copy()),
        orientation=_guarded(duration, lambda t: q0.copy()),
        angular_rate=_guarded(duration, lambda t: zero.copy()),
    )


def make_single_axis_accel(axis: str = "x", amplitude: float = 0.5, frequency: float = 1.0,
                           position=(0.0, 0.0, 1.0), quat=(1.0, 0.0, 0.0, 0.0),
                           duration: float = 60.0) -> Trajectory:
    """Sinusoidal translation along one body axis at constant attitude."""
    if amplitude <= 0:
        raise ValueError("amplitude must be positive")
    p0 = np.asarray(position, dtype=float)
    q0 = geom.normalize_quat(np.asarray(quat, dtype=float))
    direction = geom.rotation_matrix(q0)[:, _AXES[axis]]
    w = 2.0 * np.pi * frequency
    zero = np.zeros(3)
    return Trajectory(
        kind="single_axis_accel",
        params={"axis": axis, "amplitude": amplitude, "frequency": frequency,
                "position": list(p0), "quat": list(q0), "duration": duration},
        duration=duration,
        position=_guarded(duration, lambda t: p0 + direction * amplitude * np.sin(w * t)),
        velocity=_guarded(duration, lambda t: direction * amplitude * w * np.cos(w * t)),
        acceleration=_guarded(duration, lambda t: -direction * amplitude * w * w * np.sin(w * t)),
        orientation=_guarded(duration, lambda t: q0.copy()),
        angular_rate=_guarded(duration, lambda t: zero.copy()),
    )


def make_single_axis_rotation(axis: str = "z", rate: float = 0.5, frequency: float = 0.3,
                              position=(0.0, 0.0, 1.0), duration: float = 60.0) -> Trajectory:
    """Fixed position, oscillating angular rate about one body axis.

    The rate is rate * cos(2 pi f t); with frequency=0 it degenerates to a
    constant rate, which carries no timing information and therefore does not
    count as excitation. The initial attitude maps the rotation body axis onto
    world z, so the gravity reading stays constant and the accelerometer
    channels remain unexcited; the trajectory isolates gyroscope-driven
    effects and the alignment degeneracies built from them.
    """
    if rate == 0:
        raise ValueError("rate must be non-zero")
    p0 = np.asarray(position, dtype=float)
    idx = _AXES[axis]
    # constant R0 mapping the rotation body axis onto world z; cyclic column
    # order keeps the frame right-handed
    e1 = np.array([0.0, 0.0, 1.0])
    e2 = np.array([1.0, 0.0, 0.0])
    R0 = np.zeros((3, 3))
    R0[:, idx] = e1
    R0[:, (idx + 1) % 3] = e2
    R0[:, (idx + 2) % 3] = np.cross(e1, e2)
    q0 = geom.quat_from_matrix(R0)
    axis_body = np.zeros(3)
    axis_body[idx] = 1.0
    zero = np.zeros(3)
    w = 2.0 * np.pi * frequency

    def angle(t: float) -> float:
        return rate * np.sin(w * t) / w if w != 0 else rate * t

    def orientation(t: float) -> np.ndarray:
        return geom.quat_multiply(q0, geom.quat_from_rotvec(axis_body * angle(t)))

    return Trajectory(
        kind="single_axis_rotation",
        params={"axis": axis, "rate": rate, "frequency": frequency,
                "position": list(p0), "duration": duration},
        duration=duration,
        position=_guarded(duration, lambda t: p0.copy()),
        velocity=_guarded(duration, lambda t: zero.copy()),
        acceleration=_guarded(duration, lambda t: zero.copy()),
        orientation=_guarded(duration, orientation),
        angular_rate=_guarded(duration, lambda t: axis_body * rate * np.cos(w * t)),
    )


# default full-excitation parameters: incommensurate frequencies avoid the
# axis-alignment degeneracies by construction
DEFAULT_TRANS_FREQS = (0.7, 1.1, 1.3)     # Hz
DEFAULT_TRANS_AMPS = (0.4, 0.3, 0.25)     # m
DEFAULT_ROT_RATES = (0.5, 0.9, 1.7)       # rad/s peak body rate
DEFAULT_ROT_FREQS = (0.23, 0.31, 0.41)    # Hz


def make_full_excitation(position=(0.0, 0.0, 1.0),
                         trans_amps=DEFAULT_TRANS_AMPS, trans_freqs=DEFAULT_TRANS_FREQS,
                         rot_amps=None, rot_freqs=DEFAULT_ROT_FREQS,
                         duration: float = 60.0, phase: float = 0.0) -> Trajectory:
    """Three-axis incommensurate sinusoids in translation and attitude.

    The attitude is parameterized by a rotation vector with per-axis
    sinusoids; body rates follow from the exact right Jacobian of SO(3).
    """
    p0 = np.asarray(position, dtype=float)
    ta = np.asarray(trans_amps, dtype=float)
    tw = 2.0 * np.pi * np.asarray(trans_freqs, dtype=float)
    rw = 2.0 * np.pi * np.asarray(rot_freqs, dtype=float)
    if rot_amps is None:
        # choose rotation-vector amplitudes so peak body rates hit the defaults
        ra = np.asarray(DEFAULT_ROT_RATES, dtype=float) / rw
    else:
        ra = np.asarray(rot_amps, dtype=float)
    ph = float(phase)

    def theta(t):
        return ra * np.sin(rw * t + ph)

    def theta_dot(t):
        return ra * rw * np.cos(rw * t + ph)

    return Trajectory(
        kind="full_excitation",
        params={"position": list(p0), "trans_amps": list(ta),
                "trans_freqs": list(np.asarray(trans_freqs, dtype=float)),
                "rot_amps": list(ra), "rot_freqs": list(np.asarray(rot_freqs, dtype=float)),
                "duration": duration, "phase": ph},
        duration=duration,
        position=_guarded(duration, lambda t: p0 + ta * np.sin(tw * t + ph)),
        velocity=_guarded(duration, lambda t: ta * tw * np.cos(tw * t + ph)),
        acceleration=_guarded(duration, lambda t: -ta * tw * tw * np.sin(tw * t + ph)),
        orientation=_guarded(duration, lambda t: geom.quat_from_rotvec(theta(t))),
        angular_rate=_guarded(duration, lambda t: geom.right_jacobian(theta(t)) @ theta_dot(t)),
    )


_GENERATORS = {
    "static": make_static,
    "single_axis_accel": make_single_axis_accel,
    "single_axis_rotation": make_single_axis_rotation,
    "full_excitation": make_full_excitation,
}

GENERATOR_KINDS = tuple(_GENERATORS)


def make_trajectory(kind: str, params: dict) -> Trajectory:
    if kind not in _GENERATORS:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    return _GENERATORS[kind](**params)


def excitation_report(traj: Trajectory, window: tuple[float, float] | None = None,
                      n_samples: int = 256, eps: float = EXCITATION_EPS) -> ExcitationReport:
    """Flag each input channel whose noise-free variance exceeds eps.

    A channel counts as excited only if it varies over the window: constant
    inputs (including a constant nonzero rate) carry no timing information.
    """
    if window is None:
        window = (0.0, traj.duration)
    t0, t1 = window
    if not (t1 > t0):
        raise ValueError("analysis window must have positive length")
    traj.check_domain(t0)
    traj.check_domain(t1)
    ts = np.linspace(t0, t1, n_samples)
    a = np.empty((n_samples, 3))
    w = np.empty((n_samples, 3))
    for i, t in enumerate(ts):
        R = geom.rotation_matrix(traj.orientation(t))
        a[i] = R.T @ (traj.acceleration(t) + models.GRAVITY)
        w[i] = traj.angular_rate(t)
    return ExcitationReport(
        accel=tuple(bool(v) for v in a.var(axis=0) > eps),
        gyro=tuple(bool(v) for v in w.var(axis=0) > eps),
    )
