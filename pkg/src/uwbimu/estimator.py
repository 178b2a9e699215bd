"""Error-state Kalman filter for the tightly-coupled UWB-IMU problem.

The nominal state is the full State (quaternion attitude, delay included);
the 19-dim error state is [dp, dv, dtheta, db_a, db_w, dp_IU, dt_d] with a
right attitude perturbation, R = R_hat (I + [dtheta]x), injected as
q = q_hat * exp(dtheta / 2).

Range updates are applied against the delayed prediction: a range stamped t_r
is compared with the radio position propagated t_d past the last IMU sample
("propagate-by-td"); the "ignore-td" mode prices the measurement at the
undelayed state and serves as the mis-modelled baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import geom, models
from .errors import ConfigError, NumericalFailure

ERROR_DIM = 19
# error-state slices
SL_P = slice(0, 3)
SL_V = slice(3, 6)
SL_TH = slice(6, 9)
SL_BA = slice(9, 12)
SL_BW = slice(12, 15)
SL_PIU = slice(15, 18)
IDX_TD = 18

_H_STEPS = np.concatenate([
    np.full(3, 1e-5), np.full(3, 1e-5), np.full(3, 1e-6),
    np.full(3, 1e-6), np.full(3, 1e-6), np.full(3, 1e-6), [1e-6],
])


def inject(x: models.State, delta: np.ndarray) -> models.State:
    """Apply a 19-dim error to the nominal state."""
    delta = np.asarray(delta, dtype=float).reshape(ERROR_DIM)
    q = geom.quat_multiply(x.q_WI, geom.quat_from_rotvec(delta[SL_TH]))
    return models.State(
        p_WI=x.p_WI + delta[SL_P],
        v_WI=x.v_WI + delta[SL_V],
        q_WI=geom.normalize_quat(q),
        b_a=x.b_a + delta[SL_BA],
        b_w=x.b_w + delta[SL_BW],
        p_IU=x.p_IU + delta[SL_PIU],
        t_d=x.t_d + delta[IDX_TD],
    )


def error_between(truth: models.State, est: models.State) -> np.ndarray:
    """19-dim error delta such that truth ~ inject(est, delta)."""
    dq = geom.quat_multiply(geom.quat_conjugate(est.q_WI), truth.q_WI)
    out = np.empty(ERROR_DIM)
    out[SL_P] = truth.p_WI - est.p_WI
    out[SL_V] = truth.v_WI - est.v_WI
    out[SL_TH] = geom.rotvec_from_quat(geom.normalize_quat(dq))
    out[SL_BA] = truth.b_a - est.b_a
    out[SL_BW] = truth.b_w - est.b_w
    out[SL_PIU] = truth.p_IU - est.p_IU
    out[IDX_TD] = truth.t_d - est.t_d
    return out


@dataclass
class FilterConfig:
    x0: models.State
    P0: np.ndarray
    noise: models.NoiseConfig
    gate_chi2: float = 9.0          # per-scalar-range Mahalanobis gate
    delay_mode: str = "propagate-by-td"
    trace_cap: float = 1e6          # covariance-trace divergence diagnostic

    def __post_init__(self):
        self.P0 = np.asarray(self.P0, dtype=float)
        if self.P0.shape != (ERROR_DIM, ERROR_DIM):
            raise ConfigError(f"P0 must be {ERROR_DIM}x{ERROR_DIM}")
        if self.delay_mode not in ("propagate-by-td", "ignore-td"):
            raise ConfigError(f"unknown delay mode {self.delay_mode!r}")


@dataclass
class FilterState:
    x: models.State
    P: np.ndarray
    t: float = 0.0


@dataclass
class InnovationRecord:
    t: float
    anchor_id: object
    innovation: float
    S: float
    gated: bool


def predict(fs: FilterState, u: models.ImuSample, dt: float,
            config: FilterConfig) -> FilterState:
    """Propagate nominal state and covariance over dt with a held IMU sample."""
    if dt < 0:
        raise ConfigError("negative prediction interval")
    if dt == 0:
        return fs
    x = models.propagate(fs.x, u, dt, scheme="rk4")
    R = geom.rotation_matrix(fs.x.q_WI)
    a_hat = u.a_m - fs.x.b_a
    w_hat = u.w_m - fs.x.b_w
    F = np.eye(ERROR_DIM)
    F[SL_P, SL_V] = np.eye(3) * dt
    F[SL_V, SL_TH] = -R @ geom.skew(a_hat) * dt
    F[SL_V, SL_BA] = -R * dt
    F[SL_TH, SL_TH] = np.eye(3) - geom.skew(w_hat) * dt
    F[SL_TH, SL_BW] = -np.eye(3) * dt
    # second-order position coupling keeps the linearization honest at 200 Hz
    F[SL_P, SL_TH] = -0.5 * R @ geom.skew(a_hat) * dt ** 2
    F[SL_P, SL_BA] = -0.5 * R * dt ** 2
    n = config.noise
    # sigma_a / sigma_w are per-sample standard deviations, so one held sample
    # perturbs velocity by sigma_a * dt; the bias walks use sqrt(dt) scaling
    Q = np.zeros((ERROR_DIM, ERROR_DIM))
    Q[SL_V, SL_V] = np.eye(3) * (n.sigma_a * dt) ** 2
    Q[SL_TH, SL_TH] = np.eye(3) * (n.sigma_w * dt) ** 2
    Q[SL_BA, SL_BA] = np.eye(3) * n.sigma_ba ** 2 * dt
    Q[SL_BW, SL_BW] = np.eye(3) * n.sigma_bw ** 2 * dt
    # p_IU and t_d are constants: no process noise
    P = F @ fs.P @ F.T + Q
    P = 0.5 * (P + P.T)
    if np.trace(P) > config.trace_cap or not np.all(np.isfinite(P)):
        raise NumericalFailure(f"covariance diverged at t={fs.t + dt:.3f}")
    return FilterState(x=x, P=P, t=fs.t + dt)


def _predict_range(x: models.State, u: models.ImuSample,
                   anchors: models.AnchorSet, mode: str) -> np.ndarray:
    t_d = x.t_d if mode == "propagate-by-td" else 0.0
    return models.delayed_range_prediction(x, u, anchors, t_d=t_d)


def measurement_jacobian(x: models.State, u: models.ImuSample,
                         anchors: models.AnchorSet, mode: str) -> np.ndarray:
    """Central finite differences of the range prediction in error space.

    The t_d column comes out of the same delayed propagation, so a delay error
    is corrected through the very mechanism that makes it observable. In
    ignore-td mode that column is structurally zero.
    """
    m = len(anchors.ids)
    H = np.zeros((m, ERROR_DIM))
    for i in range(ERROR_DIM):
        if mode == "ignore-td" and i == IDX_TD:
            continue
        step = _H_STEPS[i]
        e = np.zeros(ERROR_DIM)
        e[i] = step
        hi = _predict_range(inject(x, e), u, anchors, mode)
        lo = _predict_range(inject(x, -e), u, anchors, mode)
        H[:, i] = (hi - lo) / (2.0 * step)
    return H


def update_range(fs: FilterState, z: models.RangeSample, u: models.ImuSample,
                 anchors: models.AnchorSet, config: FilterConfig) -> tuple[FilterState, InnovationRecord]:
    """Scalar range update with Mahalanobis gating and Joseph-form covariance."""
    idx = anchors.ids.index(z.anchor_id)
    one = models.AnchorSet(ids=(z.anchor_id,), positions=anchors.positions[idx:idx + 1])
    r_hat = float(_predict_range(fs.x, u, one, config.delay_mode)[0])
    H = measurement_jacobian(fs.x, u, one, config.delay_mode)
    nu = z.range - r_hat
    S = float((H @ fs.P @ H.T).item()) + config.noise.sigma_r ** 2
    if S <= 0:
        raise NumericalFailure("non-positive innovation variance")
    rec = InnovationRecord(t=z.t, anchor_id=z.anchor_id, innovation=nu, S=S,
                           gated=(nu ** 2 / S > config.gate_chi2))
    if rec.gated:
        return fs, rec
    K = (fs.P @ H.T) / S
    delta = (K * nu).ravel()
    x = inject(fs.x, delta)
    IKH = np.eye(ERROR_DIM) - K @ H
    P = IKH @ fs.P @ IKH.T + K @ K.T * config.noise.sigma_r ** 2
    P = 0.5 * (P + P.T)
    return FilterState(x=x, P=P, t=fs.t), rec


@dataclass
class RunResult:
    times: np.ndarray
    estimates: list                  # State per IMU epoch
    P_diag: np.ndarray               # (n, 19) error-state variances
    innovations: list = field(default_factory=list)
    errors: np.ndarray | None = None   # (n, 19) vs truth, when provided
    nees: np.ndarray | None = None

    def summary(self) -> dict:
        out = {
            "steps": len(self.times),
            "updates": sum(not r.gated for r in self.innovations),
            "gated": sum(r.gated for r in self.innovations),
        }
        if self.errors is not None:
            final = self.errors[-1]
            out["final_p_IU_error"] = float(np.linalg.norm(final[SL_PIU]))
            out["final_t_d_error"] = float(abs(final[IDX_TD]))
            out["final_position_error"] = float(np.linalg.norm(final[SL_P]))
        return out


def run(config: FilterConfig, records: list, anchors: models.AnchorSet,
        truth: list | None = None) -> RunResult:
    """Process a time-ordered list of ImuSample / RangeSample records.

    Consecutive IMU samples are averaged over each interval (midpoint input),
    which removes the zero-order-hold bias at the IMU rate. Truth, when given,
    is one State per IMU epoch, time-aligned with the sample stamps.
    """
    fs = FilterState(x=config.x0.copy(), P=config.P0.copy())
    last_u: models.ImuSample | None = None
    times, estimates, p_diag, errors, nees = [], [], [], [], []
    innovations = []
    imu_idx = 0
    for rec in records:
        if isinstance(rec, models.ImuSample):
            if last_u is None:
                fs = FilterState(x=fs.x, P=fs.P, t=rec.t)
            else:
                dt = rec.t - last_u.t
                if dt < 0:
                    raise ConfigError("IMU records out of order")
                u_mid = models.ImuSample(last_u.t, 0.5 * (last_u.a_m + rec.a_m),
                                         0.5 * (last_u.w_m + rec.w_m))
                fs = predict(fs, u_mid, dt, config)
            last_u = rec
            times.append(rec.t)
            estimates.append(fs.x)
            p_diag.append(np.diag(fs.P).copy())
            if truth is not None:
                delta = error_between(truth[imu_idx], fs.x)
                errors.append(delta)
                nees.append(float(delta @ np.linalg.solve(fs.P, delta)))
            imu_idx += 1
        elif isinstance(rec, models.RangeSample):
            if last_u is None:
                continue  # no inertial context yet
            fs, inno = update_range(fs, rec, last_u, anchors, config)
            innovations.append(inno)
        else:
            raise ConfigError(f"unknown record type {type(rec).__name__}")
    return RunResult(
        times=np.asarray(times),
        estimates=estimates,
        P_diag=np.asarray(p_diag),
        innovations=innovations,
        errors=np.asarray(errors) if truth is not None else None,
        nees=np.asarray(nees) if truth is not None else None,
    )
