"""Sensitivity of the delayed range output to the delayed IMU inputs, and the
classification of temporal-offset identifiability.

The sensitivities are the derivatives of the half-squared-range output at
t_r = t_I + t_d with respect to the inputs applied over the delay interval.
Closed forms are cross-checked against an independent oracle that perturbs the
delayed input channel and re-runs the first-order delay propagation.

Sign and scale convention (oracle-arbitrated): the accelerometer sensitivity
is -0.5 * dp^T R 1_axis * t_d^2 and the gyroscope sensitivity is
-p_i_imu^T [1_axis]x p_IU * t_d, i.e. the actual output derivatives. Their
zero sets are what the identifiability conditions consume.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geom, models
from .errors import NumericalFailure

ZERO_TOL = 1e-10        # |sensitivity| below this counts as a structural zero
MARGINAL_TOL = 1e-9     # within 10x of the zero tolerance -> marginal verdict
ALIGN_EPS = 1e-8        # normalized cross-product threshold for S4-S9
COLOCATION_EPS = 1e-9   # co-location thresholds for S2/S3 (m)

_AXES = {"x": 0, "y": 1, "z": 2}
_ORACLE_STEP = 1e-4


def _axis_vec(axis) -> np.ndarray:
    idx = _AXES[axis] if isinstance(axis, str) else int(axis)
    out = np.zeros(3)
    out[idx] = 1.0
    return out


def _oracle(x: models.State, u: models.ImuSample, anchor: np.ndarray,
            axis_vec: np.ndarray, channel: str) -> float:
    """Central difference of the delayed half-squared range w.r.t. one delayed
    input channel. The output is quadratic in the inputs, so the central
    difference is exact up to roundoff."""
    anchors = models.AnchorSet.from_list([(0, anchor)])

    def out(scale: float) -> float:
        if channel == "accel":
            r = models.delayed_range_prediction(x, u, anchors, a_m=u.a_m + scale * axis_vec)
        else:
            r = models.delayed_range_prediction(x, u, anchors, w_m=u.w_m + scale * axis_vec)
        return 0.5 * float(r[0]) ** 2

    return (out(_ORACLE_STEP) - out(-_ORACLE_STEP)) / (2.0 * _ORACLE_STEP)


def _motion_slack(x: models.State, u: models.ImuSample, direction_norm: float) -> float:
    """Bound on closed-form/oracle disagreement caused by the state moving over
    the delay interval (the closed forms hold the residual at t_I)."""
    drift = models.delayed_radio_position(x, u) - x.radio_position()
    return float(np.linalg.norm(drift)) * direction_norm


def _agreement_check(closed: float, oracle: float, slack: float, what: str):
    tol = max(1e-8, 1e-4 * abs(closed)) + slack
    if abs(closed - oracle) > tol:
        raise NumericalFailure(
            f"{what} sensitivity oracle disagreement: closed={closed!r} oracle={oracle!r} tol={tol!r}"
        )


def accel_sensitivity(x: models.State, u: models.ImuSample, anchor, axis,
                      check_oracle: bool = True) -> float:
    """d(half squared range)/d(a_axis at t_r - t_d) = -0.5 dp^T R 1_axis t_d^2."""
    anchor = np.asarray(anchor, dtype=float)
    e = _axis_vec(axis)
    R = geom.rotation_matrix(x.q_WI)
    dp = anchor - x.radio_position()
    closed = -0.5 * float(dp @ (R @ e)) * x.t_d ** 2
    if check_oracle:
        oracle = _oracle(x, u, anchor, e, "accel")
        _agreement_check(closed, oracle, _motion_slack(x, u, 0.5 * x.t_d ** 2), "accelerometer")
    return closed


def gyro_sensitivity(x: models.State, u: models.ImuSample, anchor, axis,
                     check_oracle: bool = True) -> float:
    """d(half squared range)/d(w_axis at t_r - t_d) = -p_i_imu^T [1_axis]x p_IU t_d,
    with p_i_imu the anchor position expressed in the IMU frame at t_I."""
    anchor = np.asarray(anchor, dtype=float)
    e = _axis_vec(axis)
    R = geom.rotation_matrix(x.q_WI)
    p_i_imu = R.T @ (anchor - x.p_WI)
    closed = -float(p_i_imu @ np.cross(e, x.p_IU)) * x.t_d
    if check_oracle:
        oracle = _oracle(x, u, anchor, e, "gyro")
        direction = np.linalg.norm(np.cross(e, x.p_IU)) * x.t_d
        _agreement_check(closed, oracle, _motion_slack(x, u, direction), "gyroscope")
    return closed


@dataclass
class IdentifiabilityReport:
    accel_sensitivities: np.ndarray  # per axis, max |value| over anchors
    gyro_sensitivities: np.ndarray
    T1: bool
    T2: bool
    T3: bool
    s_conditions: list               # triggered degenerate conditions, e.g. "S4(x)"
    verdict: str                     # identifiable | not-identifiable | marginal

    def to_dict(self) -> dict:
        return {
            "accel_sensitivities": [float(v) for v in self.accel_sensitivities],
            "gyro_sensitivities": [float(v) for v in self.gyro_sensitivities],
            "T1": self.T1, "T2": self.T2, "T3": self.T3,
            "s_conditions": list(self.s_conditions),
            "verdict": self.verdict,
        }


def detect_s_conditions(x: models.State, anchors: models.AnchorSet) -> list:
    """Geometric detection of the degenerate configurations S1-S9.

    Axis-alignment conditions (S4-S9) use normalized cross products; the
    anchor-dependent ones hold only if every anchor triggers them.
    """
    out = []
    if x.t_d <= ZERO_TOL:
        out.append("S1")
    norm_pIU = np.linalg.norm(x.p_IU)
    if norm_pIU < COLOCATION_EPS:
        out.append("S2")
    R = geom.rotation_matrix(x.q_WI)
    p_imu = [R.T @ (p - x.p_WI) for p in anchors.positions]
    if all(np.linalg.norm(p) < COLOCATION_EPS for p in p_imu):
        out.append("S3")
    axis_names = ["x", "y", "z"]
    radio_aligned = {"x": "S4", "y": "S6", "z": "S8"}
    anchor_aligned = {"x": "S5", "y": "S7", "z": "S9"}
    for name in axis_names:
        e = _axis_vec(name)
        if norm_pIU > 0 and np.linalg.norm(np.cross(e, x.p_IU)) / norm_pIU < ALIGN_EPS:
            out.append(f"{radio_aligned[name]}")
        aligned = [
            np.linalg.norm(np.cross(e, p)) / n
            for p in p_imu
            if (n := np.linalg.norm(p)) > 0
        ]
        if aligned and all(a < ALIGN_EPS for a in aligned):
            out.append(f"{anchor_aligned[name]}")
    return out


def classify(x: models.State, u: models.ImuSample, anchors: models.AnchorSet,
             excitation) -> IdentifiabilityReport:
    """Evaluate the temporal-offset identifiability conditions.

    T1: the radio is separated from every anchor; T2: some accelerometer axis
    is excited with a nonzero sensitivity; T3: nonzero lever arm and all three
    gyroscope axes excited. Identifiable iff T1 and (T2 or T3).
    """
    accel = np.zeros(3)
    gyro = np.zeros(3)
    for axis in range(3):
        accel[axis] = max(
            (accel_sensitivity(x, u, p, axis, check_oracle=False) for p in anchors.positions),
            key=abs,
        )
        gyro[axis] = max(
            (gyro_sensitivity(x, u, p, axis, check_oracle=False) for p in anchors.positions),
            key=abs,
        )
    min_sep = min(np.linalg.norm(p - x.radio_position()) for p in anchors.positions)
    T1 = bool(min_sep > 1e-6)
    T2 = bool(any(excitation.accel[i] and abs(accel[i]) > ZERO_TOL for i in range(3)))
    T3 = bool(np.linalg.norm(x.p_IU) > 1e-6 and all(excitation.gyro))
    s_conds = detect_s_conditions(x, anchors)
    if T1 and (T2 or T3):
        relevant = [abs(accel[i]) for i in range(3) if excitation.accel[i]] + (
            [abs(g) for g in gyro] if T3 else []
        )
        peak = max(relevant) if relevant else 0.0
        verdict = "marginal" if peak <= MARGINAL_TOL else "identifiable"
    else:
        verdict = "not-identifiable"
    return IdentifiabilityReport(accel, gyro, T1, T2, T3, s_conds, verdict)
