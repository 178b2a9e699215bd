"""Numeric verification of the four determinant lemmas behind the rank proof.

Everything is evaluated in the canonical anchor frame: anchor i at the origin,
anchor j on the +y axis, anchor k in the xy-plane with a nonzero x component.
An arbitrary configuration is brought there by a rigid world remap, which
leaves every rank statement invariant.

The verified identities are, per lemma:

1. det(dp_ijk) = p_jy * p_kx * (radio world z), so the matrix collapses
   exactly when the radio is coplanar with the anchors.
2. the three listed 4-row determinants of F5 F0 - F6 equal
   -/+ 16 p_jy p_kx (radio world z) f_i; all of them vanish when the radio is
   coplanar with the anchors.
3. the nine listed 3-row determinants of F13 R - F15 equal
   (1 or 2) p_jy f_a g_b; the g terms can vanish simultaneously only for a
   coplanar radio.
4. same structure for F5 F3 + F18 with negated coefficients.

Additionally (f3, f2, f1) = p_IU + R^T p_WI exactly, and a configuration built
in the null space of the g terms is verified to put the radio in the anchor
plane, which is the pivotal step of the proofs of Lemmas 3 and 4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geom, models, observability
from .errors import ConfigError

DET_TOL = 1e-6       # determinant vs product-form agreement
F_TERM_TOL = 1e-12   # f-vector identity
CERT_ZERO_TOL = 1e-9 # vanishing certificate determinants in degenerate cases

# (rows, coefficient, f index, g index); rows are 1-indexed in listed order
_CERT_L3 = (
    ((1, 2, 4), 1.0, 0, 0), ((1, 4, 5), 2.0, 0, 1), ((1, 4, 8), 1.0, 0, 2),
    ((1, 7, 2), 1.0, 1, 0), ((1, 7, 5), 2.0, 1, 1), ((1, 8, 7), 1.0, 1, 2),
    ((2, 7, 4), 1.0, 2, 0), ((4, 7, 5), 2.0, 2, 1), ((4, 7, 8), 1.0, 2, 2),
)
_CERT_L4 = (
    ((1, 2, 4), -1.0, 0, 0), ((1, 4, 5), -2.0, 0, 1), ((1, 4, 8), -1.0, 0, 2),
    ((1, 7, 2), -1.0, 1, 0), ((1, 5, 7), -2.0, 1, 1), ((1, 8, 7), -1.0, 1, 2),
    ((2, 7, 4), -1.0, 2, 0), ((4, 7, 5), -2.0, 2, 1), ((4, 7, 8), -1.0, 2, 2),
)
# Lemma 2: (rows, sign); product = sign * 16 * p_jy * p_kx * pUz_world * f_i
_CERT_L2 = (((1, 2, 3, 4), -1.0, 0), ((1, 2, 3, 7), 1.0, 1), ((4, 5, 6, 7), -1.0, 2))


@dataclass
class LemmaCase:
    """A state/anchor configuration already expressed in the canonical frame."""
    x: np.ndarray        # 19-dim reduced state
    anchors: np.ndarray  # (3, 3), row 0 = origin, row 1 on +y, row 2 in xy
    p_jy: float
    p_kx: float

    def radio_world(self) -> np.ndarray:
        return geom.rotation_matrix_raw(self.x[6:10]) @ self.x[16:19] + self.x[0:3]


def canonicalize(anchors, x: np.ndarray) -> LemmaCase:
    """Rigid world remap taking three anchors to the canonical frame.

    The state is carried along: positions/velocities rotate and translate,
    the attitude is left-composed with the frame rotation; body-frame
    quantities (biases, lever arm) and t_d are untouched.
    """
    pos = np.asarray(
        anchors.positions if isinstance(anchors, models.AnchorSet) else anchors, dtype=float
    )
    if pos.shape != (3, 3):
        raise ConfigError("canonicalize needs exactly three anchors")
    d_j = pos[1] - pos[0]
    n = np.cross(d_j, pos[2] - pos[0])
    if np.linalg.norm(d_j) < 1e-12 or np.linalg.norm(n) < 1e-12:
        raise ConfigError("anchors are collinear; no canonical frame exists")
    e_y = d_j / np.linalg.norm(d_j)
    e_z = n / np.linalg.norm(n)
    e_x = np.cross(e_y, e_z)
    R_c = np.vstack([e_x, e_y, e_z])  # world -> canonical
    x = np.asarray(x, dtype=float).reshape(19).copy()
    x[0:3] = R_c @ (x[0:3] - pos[0])
    x[3:6] = R_c @ x[3:6]
    x[6:10] = geom.quat_multiply(geom.quat_from_matrix(R_c), x[6:10])
    A = (pos - pos[0]) @ R_c.T
    return LemmaCase(x=x, anchors=A, p_jy=float(A[1, 1]), p_kx=float(A[2, 0]))


def f_terms(x: np.ndarray) -> np.ndarray:
    """(f1, f2, f3); reversed this equals p_IU + R^T p_WI."""
    pIx, pIy, pIz = x[0:3]
    q0, q1, q2, q3 = x[6:10]
    pUx, pUy, pUz = x[16:19]
    f1 = (pUz + pIz - 2 * pIy * q0 * q1 - 2 * pIz * q1 ** 2 + 2 * pIx * q0 * q2
          - 2 * pIz * q2 ** 2 + 2 * pIx * q1 * q3 + 2 * pIy * q2 * q3)
    f2 = (pUy + pIy + 2 * pIz * q0 * q1 - 2 * pIy * q1 ** 2 + 2 * pIx * q1 * q2
          - 2 * pIx * q0 * q3 + 2 * pIz * q2 * q3 - 2 * pIy * q3 ** 2)
    f3 = (pUx + pIx - 2 * pIz * q0 * q2 + 2 * pIy * q1 * q2 - 2 * pIx * q2 ** 2
          + 2 * pIy * q0 * q3 + 2 * pIz * q1 * q3 - 2 * pIx * q3 ** 2)
    return np.array([f1, f2, f3])


def g_terms(x: np.ndarray) -> np.ndarray:
    """(g1, g2, g3); they vanish together only when the radio world z is zero."""
    pIx, pIy, pIz = x[0:3]
    q0, q1, q2, q3 = x[6:10]
    pUx, pUy, pUz = x[16:19]
    g1 = (pUz + pIz + 2 * pUy * q0 * q1 - 2 * pUz * q1 ** 2 + 2 * pIx * q0 * q2
          - 2 * pIz * q2 ** 2 - 2 * pIx * q1 * q3 - 2 * pUy * q2 * q3
          - 2 * pUz * q3 ** 2 - 2 * pIz * q3 ** 2)
    g2 = (pUx * q0 * q1 + pIx * q0 * q1 + pUz * q1 * q2 - pIz * q1 * q2
          + pUz * q0 * q3 + pIz * q0 * q3 - pUx * q2 * q3 + pIx * q2 * q3)
    g3 = (pUx + pIx - 2 * pUx * q1 ** 2 - 2 * pIx * q1 ** 2 - 2 * pIz * q0 * q2
          - 2 * pUy * q1 * q2 - 2 * pIx * q2 ** 2 - 2 * pUy * q0 * q3
          - 2 * pIz * q1 * q3 - 2 * pUx * q3 ** 2)
    return np.array([g1, g2, g3])


def _g_linear_map(q: np.ndarray) -> np.ndarray:
    """g is linear and homogeneous in (p_WI, p_IU); return the 3x6 matrix."""
    cols = []
    for e in np.eye(6):
        x = np.zeros(19)
        x[6:10] = q
        x[0:3] = e[:3]
        x[16:19] = e[3:]
        cols.append(g_terms(x))
    return np.column_stack(cols)


def sample_case(rng: np.random.Generator, degenerate: str | None = None) -> LemmaCase:
    """Random canonical-frame configuration.

    degenerate=None keeps the radio well clear of the anchor plane;
    "coplanar" shifts it into the plane; "g-null" draws (p_WI, p_IU) from the
    null space of the g terms (which also puts the radio in the plane).
    """
    p_jy = rng.uniform(0.5, 4.0)
    p_kx = float(rng.uniform(0.5, 4.0) * rng.choice([-1.0, 1.0]))
    anchors = np.array([[0.0, 0.0, 0.0], [0.0, p_jy, 0.0], [p_kx, rng.uniform(-3.0, 3.0), 0.0]])
    q = geom.normalize_quat(rng.normal(size=4))
    if degenerate == "g-null":
        _, _, Vt = np.linalg.svd(_g_linear_map(q))
        w = Vt[3:].T @ rng.normal(size=3)
        w *= rng.uniform(1.0, 3.0) / np.linalg.norm(w)
        p_WI, p_IU = w[:3], w[3:]
    else:
        p_WI = rng.uniform(-2.0, 2.0, 3)
        p_IU = rng.uniform(-0.4, 0.4, 3)
        z = (geom.rotation_matrix_raw(q) @ p_IU + p_WI)[2]
        if degenerate == "coplanar":
            p_WI = p_WI - np.array([0.0, 0.0, z])
        elif abs(z) < 0.1:
            p_WI = p_WI + np.array([0.0, 0.0, np.sign(z or 1.0) * 0.2])
    x = np.concatenate([
        p_WI, 0.5 * rng.normal(size=3), q,
        0.05 * rng.normal(size=3), 0.01 * rng.normal(size=3), p_IU,
    ])
    return LemmaCase(x=x, anchors=anchors, p_jy=p_jy, p_kx=p_kx)


def det_lemma1(case: LemmaCase) -> tuple[float, float]:
    """(direct determinant of dp_ijk, closed form p_jy p_kx (radio world z))."""
    dp = case.anchors - case.radio_world()[None, :]
    return float(np.linalg.det(dp)), case.p_jy * case.p_kx * float(case.radio_world()[2])


def lemma_matrix(case: LemmaCase, lemma_id: int) -> np.ndarray:
    B = observability.lever_arm_blocks(case.x, case.anchors)
    if lemma_id == 1:
        return case.anchors - case.radio_world()[None, :]
    if lemma_id == 2:
        return B["F5"] @ B["F0"] - B["F6"]
    if lemma_id == 3:
        return B["F13"] @ B["R"] - B["F15"]
    if lemma_id == 4:
        return B["F5"] @ B["F3"] + B["F18"]
    raise ConfigError(f"unknown lemma id {lemma_id}")


def _det(M: np.ndarray, rows) -> float:
    # rows are 1-indexed and order-sensitive (it fixes the sign)
    return float(np.linalg.det(M[np.asarray(rows) - 1]))


def certificate_residuals(case: LemmaCase, lemma_id: int) -> list[dict]:
    """Listed determinants against their product forms.

    residual = min over sign of |det -/+ product|, so a printed-sign erratum
    in a source row ordering cannot fail the identity itself.
    """
    M = lemma_matrix(case, lemma_id)
    f = f_terms(case.x)
    g = g_terms(case.x)
    out = []
    if lemma_id == 1:
        direct, closed = det_lemma1(case)
        out.append({"rows": (1, 2, 3), "det": direct, "product": closed,
                    "residual": abs(direct - closed)})
        return out
    if lemma_id == 2:
        pUz = float(case.radio_world()[2])
        for rows, sign, fi in _CERT_L2:
            d = _det(M, rows)
            prod = sign * 16.0 * case.p_jy * case.p_kx * pUz * f[fi]
            out.append({"rows": rows, "det": d, "product": prod,
                        "residual": min(abs(d - prod), abs(d + prod))})
        return out
    table = _CERT_L3 if lemma_id == 3 else _CERT_L4
    for rows, coef, fi, gi in table:
        d = _det(M, rows)
        prod = coef * case.p_jy * f[fi] * g[gi]
        out.append({"rows": rows, "det": d, "product": prod,
                    "residual": min(abs(d - prod), abs(d + prod))})
    return out


def matrix_rank(M: np.ndarray) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > s[0] * max(M.shape) * observability.RANK_RTOL)) if s[0] > 0 else 0


@dataclass
class LemmaReport:
    lemma_id: int
    n_samples: int
    max_residual: float
    max_f_term_error: float
    full_rank_fraction: float        # non-degenerate samples at full column rank
    degenerate_max_certificate: float  # largest |certificate| on degenerate cases
    degenerate_collapses: bool
    passed: bool

    def to_dict(self) -> dict:
        return {
            "lemma": self.lemma_id,
            "n_samples": self.n_samples,
            "max_residual": self.max_residual,
            "max_f_term_error": self.max_f_term_error,
            "full_rank_fraction": self.full_rank_fraction,
            "degenerate_max_certificate": self.degenerate_max_certificate,
            "degenerate_collapses": self.degenerate_collapses,
            "passed": self.passed,
        }


def check_lemma(lemma_id: int, n_samples: int = 1000, seed: int = 0,
                rows_out: list | None = None) -> LemmaReport:
    """Sample random configurations and verify one lemma end to end.

    Degenerate construction: "coplanar" for Lemmas 1 and 2 (the certificates
    carry the radio world z as a factor), "g-null" for Lemmas 3 and 4. For
    Lemma 1 the matrix itself drops rank; for the others every certificate
    determinant vanishes, which is exactly the failure mode the proof rules
    out under the lemma conditions.
    """
    if lemma_id not in (1, 2, 3, 4):
        raise ConfigError(f"unknown lemma id {lemma_id}")
    rng = np.random.default_rng(seed)
    max_res = 0.0
    max_f_err = 0.0
    full_rank_hits = 0
    degen_cert = 0.0
    degen_rank_ok = True
    degen_kind = "coplanar" if lemma_id in (1, 2) else "g-null"
    n_degen = max(1, n_samples // 10)
    for _ in range(n_samples):
        case = sample_case(rng)
        R = geom.rotation_matrix_raw(case.x[6:10])
        f_err = np.max(np.abs(f_terms(case.x)[::-1] - (case.x[16:19] + R.T @ case.x[0:3])))
        max_f_err = max(max_f_err, float(f_err))
        for entry in certificate_residuals(case, lemma_id):
            scale = max(1.0, abs(entry["product"]))
            max_res = max(max_res, entry["residual"] / scale)
        if rows_out is not None:
            rows_out.extend(certificate_residuals(case, lemma_id))
        M = lemma_matrix(case, lemma_id)
        if matrix_rank(M) == M.shape[1]:
            full_rank_hits += 1
    for _ in range(n_degen):
        case = sample_case(rng, degenerate=degen_kind)
        if lemma_id == 1:
            degen_rank_ok &= matrix_rank(lemma_matrix(case, 1)) < 3
        certs = [abs(e["det"]) for e in certificate_residuals(case, lemma_id)]
        degen_cert = max(degen_cert, max(certs))
    if lemma_id == 1:
        collapses = degen_rank_ok and degen_cert < CERT_ZERO_TOL
    else:
        collapses = degen_cert < CERT_ZERO_TOL
    passed = (max_res < DET_TOL and max_f_err < F_TERM_TOL
              and full_rank_hits == n_samples and collapses)
    return LemmaReport(
        lemma_id=lemma_id,
        n_samples=n_samples,
        max_residual=max_res,
        max_f_term_error=max_f_err,
        full_rank_fraction=full_rank_hits / n_samples,
        degenerate_max_certificate=degen_cert,
        degenerate_collapses=collapses,
        passed=passed,
    )
