"""System state, sensor synthesis, motion model and delayed range prediction.

State layout for the 19-dimensional reduced vector (temporal offset excluded):
  [0:3]   p_WI   IMU position, world frame (m)
  [3:6]   v_WI   IMU velocity, world frame (m/s)
  [6:10]  q_WI   body-to-world unit quaternion, scalar first
  [10:13] b_a    accelerometer bias (m/s^2)
  [13:16] b_w    gyroscope bias (rad/s)
  [16:19] p_IU   lever arm: radio position in the IMU frame (m)

The accelerometer measures specific force: a_m = R^T (v_dot + g) + b_a + n_a,
so that v_dot = R (a_m - b_a) - g with g = (0, 0, 9.8) m/s^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import geom

GRAVITY = np.array([0.0, 0.0, 9.8])


def _vec3(v) -> np.ndarray:
    out = np.asarray(v, dtype=float).reshape(3).copy()
    if not np.all(np.isfinite(out)):
        raise ValueError("vector components must be finite")
    return out


@dataclass
class State:
    """Full system state: pose, velocity, IMU biases, lever arm, temporal offset."""

    p_WI: np.ndarray
    v_WI: np.ndarray
    q_WI: np.ndarray
    b_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    b_w: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_IU: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t_d: float = 0.0

    def __post_init__(self):
        self.p_WI = _vec3(self.p_WI)
        self.v_WI = _vec3(self.v_WI)
        self.q_WI = geom.normalize_quat(self.q_WI)
        self.b_a = _vec3(self.b_a)
        self.b_w = _vec3(self.b_w)
        self.p_IU = _vec3(self.p_IU)
        self.t_d = float(self.t_d)
        if self.t_d < 0.0:
            raise ValueError("temporal offset must be non-negative")

    def reduced_vector(self) -> np.ndarray:
        """19-vector of everything except t_d."""
        return np.concatenate([self.p_WI, self.v_WI, self.q_WI, self.b_a, self.b_w, self.p_IU])

    @classmethod
    def from_reduced_vector(cls, x: np.ndarray, t_d: float = 0.0) -> "State":
        x = np.asarray(x, dtype=float).reshape(19)
        return cls(x[0:3], x[3:6], x[6:10], x[10:13], x[13:16], x[16:19], t_d)

    def copy(self) -> "State":
        return replace(self)

    def radio_position(self) -> np.ndarray:
        """World-frame position of the mobile radio, p_WU = R p_IU + p_WI."""
        return geom.rotation_matrix(self.q_WI) @ self.p_IU + self.p_WI


@dataclass(frozen=True)
class ImuSample:
    t: float
    a_m: np.ndarray
    w_m: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a_m", _vec3(self.a_m))
        object.__setattr__(self, "w_m", _vec3(self.w_m))


@dataclass(frozen=True)
class RangeSample:
    t: float
    anchor_id: int
    range: float

    def __post_init__(self):
        if self.range < 0:
            raise ValueError("range must be non-negative")


@dataclass(frozen=True)
class AnchorSet:
    ids: tuple
    positions: np.ndarray  # (n, 3), world frame

    @classmethod
    def from_list(cls, anchors: Sequence) -> "AnchorSet":
        """Build from a list of (anchor_id, position) pairs."""
        ids = tuple(a[0] for a in anchors)
        if len(ids) == 0:
            raise ValueError("at least one anchor required")
        if len(set(ids)) != len(ids):
            raise ValueError("anchor ids must be unique")
        pos = np.array([_vec3(a[1]) for a in anchors])
        return cls(ids, pos)

    def __len__(self) -> int:
        return len(self.ids)

    def position(self, anchor_id) -> np.ndarray:
        return self.positions[self.ids.index(anchor_id)]


@dataclass(frozen=True)
class NoiseConfig:
    """Per-axis standard deviations; all zero means noise-free synthesis."""

    sigma_a: float = 0.0    # accelerometer white noise (m/s^2)
    sigma_w: float = 0.0    # gyroscope white noise (rad/s)
    sigma_ba: float = 0.0   # accel bias random walk (m/s^2/sqrt(s))
    sigma_bw: float = 0.0   # gyro bias random walk (rad/s/sqrt(s))
    sigma_r: float = 0.0    # range noise (m)
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_a", "sigma_w", "sigma_ba", "sigma_bw", "sigma_r"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def synth_imu(truth, t: float, b_a, b_w, noise: NoiseConfig = NoiseConfig(),
              rng: np.random.Generator | None = None) -> ImuSample:
    """Synthesize one IMU sample from a ground-truth trajectory.

    The measured acceleration is the specific force in the body frame,
    a_m = R^T (a_W + g) + b_a + n_a, and w_m = w_body + b_w + n_w.
    """
    R = geom.rotation_matrix(truth.orientation(t))
    a_t = R.T @ (truth.acceleration(t) + GRAVITY)
    w_t = truth.angular_rate(t)
    a_m = a_t + _vec3(b_a)
    w_m = w_t + _vec3(b_w)
    if noise.sigma_a > 0 or noise.sigma_w > 0:
        if rng is None:
            rng = np.random.default_rng(noise.seed)
        a_m = a_m + noise.sigma_a * rng.standard_normal(3)
        w_m = w_m + noise.sigma_w * rng.standard_normal(3)
    return ImuSample(t, a_m, w_m)


def synth_range(anchors: AnchorSet, state: State, noise: NoiseConfig = NoiseConfig(),
                rng: np.random.Generator | None = None, t: float = 0.0) -> list[RangeSample]:
    """Noisy Euclidean range from the mobile radio to each anchor."""
    p_U = state.radio_position()
    if (noise.sigma_r > 0) and rng is None:
        rng = np.random.default_rng(noise.seed)
    out = []
    for aid, p_a in zip(anchors.ids, anchors.positions):
        r = float(np.linalg.norm(p_a - p_U))
        if noise.sigma_r > 0:
            r += noise.sigma_r * float(rng.standard_normal())
        out.append(RangeSample(t, aid, max(r, 0.0)))
    return out


# --- control-affine decomposition of the noise-free dynamics -----------------

def f0(x: np.ndarray) -> np.ndarray:
    """Drift field: stacked derivatives with zero inputs."""
    x = np.asarray(x, dtype=float)
    v, q = x[3:6], x[6:10]
    R = geom.rotation_matrix_raw(q)
    out = np.zeros(19)
    out[0:3] = v
    out[3:6] = -R @ x[10:13] - GRAVITY
    out[6:10] = -0.5 * geom.xi_matrix(q) @ x[13:16]
    return out


def f1(x: np.ndarray) -> np.ndarray:
    """Input field for the measured acceleration (19x3)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((19, 3))
    out[3:6, :] = geom.rotation_matrix_raw(x[6:10])
    return out


def f2(x: np.ndarray) -> np.ndarray:
    """Input field for the measured angular rate (19x3)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros((19, 3))
    out[6:10, :] = 0.5 * geom.xi_matrix(x[6:10])
    return out


def reduced_derivative(x: np.ndarray, a_m: np.ndarray, w_m: np.ndarray) -> np.ndarray:
    """x_dot = f0(x) + f1(x) a_m + f2(x) w_m."""
    return f0(x) + f1(x) @ np.asarray(a_m, dtype=float) + f2(x) @ np.asarray(w_m, dtype=float)


# --- propagation --------------------------------------------------------------

InputSource = ImuSample | Callable[[float], ImuSample]


def _input_at(u: InputSource, tau: float) -> ImuSample:
    return u(tau) if callable(u) else u


def propagate(x: State, u: InputSource, dt: float, scheme: str = "euler") -> State:
    """Integrate the noise-free motion model for dt seconds.

    `u` is either a single zero-order-hold ImuSample or a callable mapping the
    offset tau in [0, dt] to the sample, which RK4 queries at substeps.

    The euler scheme is the constant-input closed-form step used by the
    delayed-measurement analysis: position gains v*dt + 0.5*a_W*dt^2 with
    a_W = R(a_m - b_a) - g, and the attitude takes one quaternion Euler step.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    if dt == 0:
        return x.copy()
    if scheme == "euler":
        u0 = _input_at(u, 0.0)
        R = geom.rotation_matrix(x.q_WI)
        a_W = R @ (u0.a_m - x.b_a) - GRAVITY
        w = u0.w_m - x.b_w
        p = x.p_WI + x.v_WI * dt + 0.5 * a_W * dt * dt
        v = x.v_WI + a_W * dt
        q = geom.quat_integrate(x.q_WI, w, dt)
        return State(p, v, q, x.b_a, x.b_w, x.p_IU, x.t_d)
    if scheme == "rk4":
        y = x.reduced_vector()

        def deriv(tau, yv):
            s = _input_at(u, tau)
            return reduced_derivative(yv, s.a_m, s.w_m)

        k1 = deriv(0.0, y)
        k2 = deriv(dt / 2, y + dt / 2 * k1)
        k3 = deriv(dt / 2, y + dt / 2 * k2)
        k4 = deriv(dt, y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        y[6:10] = geom.normalize_quat(y[6:10])
        return State.from_reduced_vector(y, x.t_d)
    raise ValueError(f"unknown integration scheme {scheme!r}")


def delayed_radio_position(x: State, u: ImuSample, t_d: float | None = None,
                           a_m: np.ndarray | None = None, w_m: np.ndarray | None = None) -> np.ndarray:
    """Radio position after propagating the state by t_d with the first-order model.

    Matches the constant-input expansion used by the temporal-offset analysis:
    translation gains v*t_d + 0.5*(R(a_m - b_a) - g)*t_d^2 and the attitude is
    advanced with the first-order rotation increment R(I + [w*t_d]x).
    Inputs a_m / w_m default to the sample's and may be overridden (the
    identifiability oracle perturbs them).
    """
    td = x.t_d if t_d is None else float(t_d)
    a = u.a_m if a_m is None else np.asarray(a_m, dtype=float)
    w = u.w_m if w_m is None else np.asarray(w_m, dtype=float)
    R = geom.rotation_matrix(x.q_WI)
    R_r = geom.first_order_rotation_increment(R, w - x.b_w, td)
    p_r = x.p_WI + x.v_WI * td + 0.5 * (R @ (a - x.b_a) - GRAVITY) * td * td
    return R_r @ x.p_IU + p_r


def delayed_range_prediction(x: State, u: ImuSample, anchors: AnchorSet,
                             t_d: float | None = None, a_m=None, w_m=None) -> np.ndarray:
    """Predicted noise-free ranges at t_r = t_I + t_d, one per anchor."""
    p_U = delayed_radio_position(x, u, t_d=t_d, a_m=a_m, w_m=w_m)
    return np.linalg.norm(anchors.positions - p_U, axis=1)
