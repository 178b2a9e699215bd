"""Observability matrix from stacked gradients of Lie derivatives of the
three-anchor squared-range output, plus the rank/condition report.

The derivative engine is exact: Lie derivatives are built by composing the
output function with the control-affine vector fields and differentiating the
composition with JAX. A nested central-finite-difference engine is provided
as an independent diagnostic route (``method="fd"``); its noise grows roughly
like 1/step per nesting level, which is why it is not the authority for rank
decisions.
"""

from __future__ import annotations

from dataclasses import dataclass

import jax

jax.config.update("jax_enable_x64", True)

import jax.numpy as jnp
import numpy as np

from . import geom, models
from .errors import NumericalFailure

# rank rule: singular values above smax * max(m, n) * RANK_RTOL count
RANK_RTOL = 1e-10
# collinearity / coplanarity threshold (m^2 / m^3) for condition checks
GEOM_EPS = 1e-9

FULL_STATE_DIM = 19

# the six-entry Lie-derivative stack, innermost application first
STACK_SPECS = (
    (),                  # L0 h                      (3 rows)
    ("f0",),             # L1_f0 h                   (3 rows)
    ("f0", "f0"),        # L2_f0 h                   (3 rows)
    ("f0", "f1"),        # L1_f1 L1_f0 h             (9 rows, columns stacked)
    ("f2",),             # L1_f2 L0 h                (9 rows, columns stacked)
    ("f0", "f1", "f0"),  # L1_f0 L1_f1 L1_f0 h       (9 rows)
)


def _as_anchor_array(anchors) -> np.ndarray:
    if isinstance(anchors, models.AnchorSet):
        pos = anchors.positions
    else:
        pos = np.asarray(anchors, dtype=float)
    if pos.shape != (3, 3):
        raise ValueError("exactly three anchors are required")
    return pos


# --- jax versions of the model pieces ----------------------------------------

def _rot(q):
    q0, q1, q2, q3 = q
    return jnp.array(
        [
            [q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3, 2 * (q1 * q2 - q0 * q3), 2 * (q1 * q3 + q0 * q2)],
            [2 * (q1 * q2 + q0 * q3), q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3, 2 * (q2 * q3 - q0 * q1)],
            [2 * (q1 * q3 - q0 * q2), 2 * (q2 * q3 + q0 * q1), q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3],
        ]
    )


def _xi(q):
    q0, q1, q2, q3 = q
    return jnp.array([[-q1, -q2, -q3], [q0, -q3, q2], [q3, q0, -q1], [-q2, q1, q0]])


def _h3(x, A):
    """Half squared ranges to the three anchors."""
    p_U = _rot(x[6:10]) @ x[16:19] + x[0:3]
    dp = A - p_U[None, :]
    return 0.5 * jnp.sum(dp * dp, axis=1)


def _f0(x):
    q = x[6:10]
    return jnp.concatenate(
        [
            x[3:6],
            -_rot(q) @ x[10:13] - jnp.asarray(models.GRAVITY),
            -0.5 * _xi(q) @ x[13:16],
            jnp.zeros(9),
        ]
    )


def _f1(x):
    return jnp.zeros((19, 3)).at[3:6, :].set(_rot(x[6:10]))


def _f2(x):
    return jnp.zeros((19, 3)).at[6:10, :].set(0.5 * _xi(x[6:10]))


def _lie_fn(spec):
    """Value function of the Lie derivative described by spec.

    spec is a tuple over {"f0", "f1", "f2"}, applied innermost-first.
    Derivatives along the 19x3 input fields produce 3 columns per value,
    stacked column-major (rows per input axis x, then y, then z).
    """
    fn = _h3
    for name in spec:
        if name == "f0":
            fn = (lambda g: lambda x, A: jax.jacobian(g)(x, A) @ _f0(x))(fn)
        elif name in ("f1", "f2"):
            field = _f1 if name == "f1" else _f2
            fn = (lambda g, fld: lambda x, A: (jax.jacobian(g)(x, A) @ fld(x)).T.reshape(-1))(fn, field)
        else:
            raise ValueError(f"unknown vector field {name!r}")
    return fn


_VALUE_FNS = {spec: jax.jit(_lie_fn(spec)) for spec in STACK_SPECS}
_GRAD_FNS = {spec: jax.jit(jax.jacobian(_lie_fn(spec))) for spec in STACK_SPECS}

# lever-arm image derivative d(R p_IU)/dq, the 3x4 block the paper names F0
_F0_FN = jax.jit(jax.jacobian(lambda x, A: _rot(x[6:10]) @ x[16:19]))


def lie_derivative(spec, x, anchors, method: str = "autodiff") -> np.ndarray:
    """Value of the Lie derivative for one stack entry (L0 returns h itself)."""
    spec = tuple(spec)
    A = _as_anchor_array(anchors)
    x = np.asarray(x, dtype=float).reshape(FULL_STATE_DIM)
    if method == "autodiff":
        fn = _VALUE_FNS.get(spec) or _lie_fn(spec)
        return np.asarray(fn(jnp.asarray(x), jnp.asarray(A)))
    if method == "fd":
        return _lie_value_fd(spec, x, A)
    raise ValueError(f"unknown method {method!r}")


def gradient(spec, x, anchors, method: str = "autodiff") -> np.ndarray:
    """Rows of the observability matrix for one stack entry (k x 19)."""
    spec = tuple(spec)
    A = _as_anchor_array(anchors)
    x = np.asarray(x, dtype=float).reshape(FULL_STATE_DIM)
    if method == "autodiff":
        fn = _GRAD_FNS.get(spec) or jax.jacobian(_lie_fn(spec))
        return np.asarray(fn(jnp.asarray(x), jnp.asarray(A)))
    if method == "fd":
        return _fd_jacobian(lambda y: _lie_value_fd(spec, y, A), x,
                            step=lambda xi: 1e-6 * (1.0 + abs(xi)))
    raise ValueError(f"unknown method {method!r}")


# --- finite-difference diagnostic route ---------------------------------------

_FD_MIN_STEP = 1e-13


def _fd_jacobian(fn, x, step, richardson: bool = False) -> np.ndarray:
    """Central-difference Jacobian; `step` maps a coordinate value to its step."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = step(x[i]) if callable(step) else step
        if h < _FD_MIN_STEP:
            raise NumericalFailure(f"finite-difference step underflow at coordinate {i}")

        def diff(hh):
            xp, xm = x.copy(), x.copy()
            xp[i] += hh
            xm[i] -= hh
            return (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2.0 * hh)

        d = diff(h)
        if richardson:
            d2 = diff(h / 2.0)
            d = (4.0 * d2 - d) / 3.0
        cols.append(d)
    return np.stack(cols, axis=-1)


def _lie_value_fd(spec, x, A) -> np.ndarray:
    if not spec:
        return np.asarray(_h3(jnp.asarray(x), jnp.asarray(A)))
    inner = spec[:-1]
    g = lambda y: _lie_value_fd(inner, y, A)
    J = _fd_jacobian(g, x, step=1e-4, richardson=True)
    name = spec[-1]
    xj = jnp.asarray(x)
    if name == "f0":
        return J @ np.asarray(_f0(xj))
    field = _f1 if name == "f1" else _f2
    return (J @ np.asarray(field(xj))).T.reshape(-1)


# --- closed-form blocks from the analytical derivation (cross-check route) ----

def deltap_matrix(x, anchors) -> np.ndarray:
    """Residual rows anchor - radio, the workhorse 3x3 block."""
    A = _as_anchor_array(anchors)
    x = np.asarray(x, dtype=float)
    p_U = geom.rotation_matrix_raw(x[6:10]) @ x[16:19] + x[0:3]
    return A - p_U[None, :]


def lever_arm_orientation_jacobian(q, p_IU) -> np.ndarray:
    """Closed-form d(R{q} p)/dq, 3x4."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p_IU, dtype=float)
    q0, qv = q[0], q[1:]
    F = np.empty((3, 4))
    F[:, 0] = 2.0 * (q0 * p + np.cross(qv, p))
    F[:, 1:] = 2.0 * (
        -np.outer(p, qv) + np.outer(qv, p) + np.dot(qv, p) * np.eye(3) - q0 * geom.skew(p)
    )
    return F


def grad_l0_closed(x, anchors) -> np.ndarray:
    """Closed-form gradient of the zeroth-order entry: [-dp, 0, -dp F0, 0, 0, -dp R]."""
    x = np.asarray(x, dtype=float)
    dp = deltap_matrix(x, anchors)
    R = geom.rotation_matrix_raw(x[6:10])
    F0 = lever_arm_orientation_jacobian(x[6:10], x[16:19])
    out = np.zeros((3, FULL_STATE_DIM))
    out[:, 0:3] = -dp
    out[:, 6:10] = -dp @ F0
    out[:, 16:19] = -dp @ R
    return out


def _drift_direction(x) -> np.ndarray:
    """v - 0.5 F0 Xi b_w, the common row of the first-order position block."""
    x = np.asarray(x, dtype=float)
    F0 = lever_arm_orientation_jacobian(x[6:10], x[16:19])
    return x[3:6] - 0.5 * F0 @ geom.xi_matrix(x[6:10]) @ x[13:16]


def l1_f0_closed(x, anchors) -> np.ndarray:
    """Closed form of the first-order entry: -dp v + 0.5 dp F0 Xi b_w."""
    return -deltap_matrix(x, anchors) @ _drift_direction(x)


def grad_l1_f0_closed(x, anchors) -> np.ndarray:
    """Closed-form gradient of the first-order entry: [F1, -dp, F2, 0, dp F3, F4].

    F2 and F4 are defined in the derivation only as derivatives of the value;
    they are realized here with single-level central differences of the
    closed-form value, keeping this route independent of the autodiff engine.
    """
    x = np.asarray(x, dtype=float)
    A = _as_anchor_array(anchors)
    dp = deltap_matrix(x, A)
    u = _drift_direction(x)
    F0 = lever_arm_orientation_jacobian(x[6:10], x[16:19])
    F3 = 0.5 * F0 @ geom.xi_matrix(x[6:10])
    out = np.zeros((3, FULL_STATE_DIM))
    out[:, 0:3] = np.tile(u, (3, 1))                      # F1
    out[:, 3:6] = -dp
    out[:, 13:16] = dp @ F3
    full = _fd_jacobian(lambda y: l1_f0_closed(y, A), x,
                        step=lambda xi: 1e-6 * (1.0 + abs(xi)))
    out[:, 6:10] = full[:, 6:10]                          # F2
    out[:, 16:19] = full[:, 16:19]                        # F4
    return out


def lever_arm_blocks(x, anchors) -> dict:
    """Sub-blocks of the stacked gradients, named after the derivation.

    Only the blocks the rank analysis combines are extracted; everything is
    sliced out of the exact gradients rather than re-derived.
    """
    A = _as_anchor_array(anchors)
    xr = np.asarray(x, dtype=float).reshape(FULL_STATE_DIM)
    g_f1 = gradient(("f0", "f1"), xr, A)       # [F5, 0, F6, 0, 0, F7]
    g_f2 = gradient(("f2",), xr, A)            # [F13, 0, F14, 0, 0, F15]
    g_3rd = gradient(("f0", "f1", "f0"), xr, A)  # [F16, F5, F17, 0, F18, F19]
    F0 = np.asarray(_F0_FN(jnp.asarray(xr), jnp.asarray(A)))[:, 6:10]
    R = geom.rotation_matrix_raw(xr[6:10])
    return {
        "R": R,
        "F0": F0,
        "F3": 0.5 * F0 @ geom.xi_matrix(xr[6:10]),
        "F5": g_f1[:, 0:3],
        "F6": g_f1[:, 6:10],
        "F7": g_f1[:, 16:19],
        "F13": g_f2[:, 0:3],
        "F14": g_f2[:, 6:10],
        "F15": g_f2[:, 16:19],
        "F16": g_3rd[:, 0:3],
        "F17": g_3rd[:, 6:10],
        "F18": g_3rd[:, 13:16],
        "F19": g_3rd[:, 16:19],
    }


# --- reports -------------------------------------------------------------------

@dataclass
class ObservabilityReport:
    O: np.ndarray
    singular_values: np.ndarray
    rank: int
    tolerance: float
    conditions: dict                 # {"C1": bool, ..., "C4": bool}
    null_space: np.ndarray | None    # (19, k) basis when rank-deficient

    def to_dict(self) -> dict:
        return {
            "rows": int(self.O.shape[0]),
            "singular_values": [float(s) for s in self.singular_values],
            "rank": int(self.rank),
            "tolerance": float(self.tolerance),
            "conditions": {k: bool(v) for k, v in self.conditions.items()},
            "null_space": None if self.null_space is None else self.null_space.tolist(),
        }


def h3(x, anchors) -> np.ndarray:
    """Half squared ranges to exactly three anchors."""
    A = _as_anchor_array(anchors)
    x = np.asarray(x, dtype=float).reshape(FULL_STATE_DIM)
    return np.asarray(_h3(jnp.asarray(x), jnp.asarray(A)))


def _row_mask(spec, excitation) -> np.ndarray:
    """Rows of one stack entry to keep: input-driven rows need their channel excited."""
    # the input field whose columns were stacked (if any) ties rows to axes
    driven = None
    for name in reversed(spec):
        if name in ("f1", "f2"):
            driven = name
            break
    if driven is None:
        return np.ones(3, dtype=bool)
    flags = excitation.accel if driven == "f1" else excitation.gyro
    return np.repeat(np.asarray(flags, dtype=bool), 3)


def build_O(x, anchors, excitation=None, project_quat: bool = False) -> ObservabilityReport:
    """Stack the gradients of the six Lie-derivative entries and rank them.

    With `excitation` given, rows driven by an unexcited input channel are
    dropped (each input-field application contributes three rows per axis);
    without it all 36 rows are kept. `project_quat` removes the component of
    the quaternion columns along q itself, a diagnostic for the unit-norm
    gauge direction.
    """
    A = _as_anchor_array(anchors)
    x = np.asarray(x, dtype=float).reshape(FULL_STATE_DIM)
    rows = []
    for spec in STACK_SPECS:
        g = gradient(spec, x, A)
        if excitation is not None:
            g = g[_row_mask(spec, excitation)]
        if g.size:
            rows.append(g)
    O = np.vstack(rows)
    if not np.all(np.isfinite(O)):
        raise NumericalFailure("non-finite entries in the observability matrix")
    if project_quat:
        q = x[6:10] / np.linalg.norm(x[6:10])
        O = O.copy()
        O[:, 6:10] -= np.outer(O[:, 6:10] @ q, q)
    s = np.linalg.svd(O, compute_uv=False)
    tol = s[0] * max(O.shape) * RANK_RTOL if s.size else 0.0
    rank = int(np.sum(s > tol))
    null_space = None
    if rank < FULL_STATE_DIM:
        _, _, Vt = np.linalg.svd(O, full_matrices=True)
        null_space = Vt[rank:].T
    conditions = check_conditions(anchors, x, excitation)
    return ObservabilityReport(O, s, rank, tol, conditions, null_space)


def check_conditions(anchors, x, excitation=None) -> dict:
    """Geometric and excitation conditions for full column rank."""
    A = _as_anchor_array(anchors)
    x = np.asarray(x, dtype=float).reshape(FULL_STATE_DIM)
    e1, e2 = A[1] - A[0], A[2] - A[0]
    area = 0.5 * np.linalg.norm(np.cross(e1, e2))
    p_U = geom.rotation_matrix_raw(x[6:10]) @ x[16:19] + x[0:3]
    volume = abs(np.dot(np.cross(e1, e2), p_U - A[0])) / 6.0
    return {
        "C1": bool(area > GEOM_EPS),
        "C2": bool(volume > GEOM_EPS),
        "C3": bool(excitation is not None and all(excitation.accel)),
        "C4": bool(excitation is not None and all(excitation.gyro)),
    }
