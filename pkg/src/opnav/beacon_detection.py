"""Expected beacon projection, its pixel covariance, and spike gating.

The projection of a beacon depends on the ten parameters (q0, qv, r,
r_bc): attitude quaternion, spacecraft position, beacon position.  The
2x10 Jacobian chains the dehomogenization derivative through the
intrinsic matrix into the analytic partials of the rotated line of
sight.  The pixel covariance P = F S F^T then feeds the 99.73%
chi-square gate (11.8292 for 2 degrees of freedom): a spike is accepted
when its Mahalanobis distance to the expected projection passes the
gate, and the closest accepted spike wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Attitude, CameraModel, matrix_from_quaternion, skew

# Inverse chi-square cdf with 2 dof at 0.9973 (the 3-sigma probability).
CHI2_GATE_3SIGMA = 11.8292

DEFAULT_ELLIPSE_FLOOR_PX = 0.5


@dataclass(frozen=True)
class UncertaintyBudget:
    """Per-axis standard deviations of the pose/ephemeris knowledge.

    sigma_q0 is structurally zero: small-angle attitude errors live
    entirely in the quaternion vector part.
    """

    sigma_qv: float = 1e-4
    sigma_r_km: float = 1e5
    sigma_rbc_km: float = 0.0

    def __post_init__(self):
        if min(self.sigma_qv, self.sigma_r_km, self.sigma_rbc_km) < 0:
            raise ValueError("standard deviations must be non-negative")

    def to_matrix(self) -> np.ndarray:
        """10x10 diagonal covariance, blocks (q0 | qv | r | r_bc)."""
        d = np.concatenate(
            [
                [0.0],
                np.full(3, self.sigma_qv**2),
                np.full(3, self.sigma_r_km**2),
                np.full(3, self.sigma_rbc_km**2),
            ]
        )
        return np.diag(d)


@dataclass(frozen=True)
class Ellipse:
    a: float  # semimajor axis, px
    b: float  # semiminor axis, px
    psi: float  # orientation of the major axis towards the image x axis, rad


@dataclass(frozen=True)
class ProjectionPrediction:
    expected_px: np.ndarray
    covariance: np.ndarray  # 2x2, after the semiminor-axis floor
    ellipse: Ellipse

    def __post_init__(self):
        self.expected_px.setflags(write=False)
        self.covariance.setflags(write=False)


def projection_jacobian(
    camera: CameraModel,
    attitude_q: Attitude | np.ndarray,
    sc_position_km: np.ndarray,
    beacon_position_km: np.ndarray,
) -> np.ndarray:
    """2x10 Jacobian of the beacon pixel w.r.t. (q0, qv, r, r_bc).

    Column blocks: d/dq0 (1), d/dqv (3), d/dr (3), d/dr_bc (3).  Raises
    when the beacon sits behind the camera.
    """
    q = attitude_q.q if isinstance(attitude_q, Attitude) else np.asarray(attitude_q, float)
    q0, qv = q[0], q[1:]
    a = matrix_from_quaternion(q)
    rho = np.asarray(beacon_position_km, float) - np.asarray(sc_position_km, float)
    rho_c = a @ rho
    if rho_c[2] <= 0:
        raise ValueError("beacon is behind the camera")
    k = camera.intrinsic
    h = k @ rho_c
    dehom = np.array(
        [
            [1.0 / h[2], 0.0, -h[0] / h[2] ** 2],
            [0.0, 1.0 / h[2], -h[1] / h[2] ** 2],
        ]
    )
    inner = np.empty((3, 10))
    inner[:, 0] = 2.0 * q0 * rho - 2.0 * skew(qv) @ rho
    inner[:, 1:4] = (
        -2.0 * np.outer(rho, qv)
        + 2.0 * (qv @ rho) * np.eye(3)
        + 2.0 * np.outer(qv, rho)
        + 2.0 * q0 * skew(rho)
    )
    inner[:, 4:7] = -a
    inner[:, 7:10] = a
    return dehom @ k @ inner


def projection_covariance(jacobian: np.ndarray, budget: UncertaintyBudget) -> np.ndarray:
    """P = F S F^T, symmetrized against round-off."""
    p = jacobian @ budget.to_matrix() @ jacobian.T
    return 0.5 * (p + p.T)


def covariance_ellipse(p: np.ndarray) -> Ellipse:
    """3-sigma ellipse of a 2x2 covariance.

    Semi-axes are sqrt(11.8292 * eigenvalue); psi is the two-argument
    arctangent of the major eigenvector, reported in (-pi, pi] with the
    x-component canonicalized non-negative.
    """
    vals, vecs = np.linalg.eigh(np.asarray(p, dtype=float))
    v_max = vecs[:, 1]
    if v_max[0] < 0 or (v_max[0] == 0 and v_max[1] < 0):
        v_max = -v_max
    return Ellipse(
        a=math.sqrt(CHI2_GATE_3SIGMA * max(vals[1], 0.0)),
        b=math.sqrt(CHI2_GATE_3SIGMA * max(vals[0], 0.0)),
        psi=math.atan2(v_max[1], v_max[0]),
    )


def ellipse_points(ellipse: Ellipse, center, angles) -> np.ndarray:
    """Parametric boundary points of the uncertainty ellipse (for reports)."""
    t = np.asarray(angles, dtype=float)
    c, s = math.cos(ellipse.psi), math.sin(ellipse.psi)
    rot = np.array([[c, s], [-s, c]])
    xy = np.column_stack([ellipse.a * np.cos(t), ellipse.b * np.sin(t)]) @ rot
    return xy + np.asarray(center, dtype=float)


def floor_covariance(p: np.ndarray, floor_px: float = DEFAULT_ELLIPSE_FLOOR_PX) -> np.ndarray:
    """Raise the eigenvalues of P so the semiminor axis is at least
    ``floor_px``; encodes the centroiding error the budget omits and
    keeps the gate invertible."""
    min_eig = floor_px**2 / CHI2_GATE_3SIGMA
    vals, vecs = np.linalg.eigh(np.asarray(p, dtype=float))
    vals = np.maximum(vals, min_eig)
    return vecs @ np.diag(vals) @ vecs.T


def predict_projection(
    camera: CameraModel,
    attitude_q: Attitude,
    sc_position_km: np.ndarray,
    beacon_position_km: np.ndarray,
    budget: UncertaintyBudget,
    floor_px: float = DEFAULT_ELLIPSE_FLOOR_PX,
) -> ProjectionPrediction | None:
    """Expected pixel, floored covariance, and ellipse for one beacon.

    Returns None when the expected projection is behind the camera.
    """
    a = matrix_from_quaternion(attitude_q)
    rho_c = a @ (np.asarray(beacon_position_km, float) - np.asarray(sc_position_km, float))
    if rho_c[2] <= 0:
        return None
    h = camera.intrinsic @ rho_c
    expected = np.array([h[0] / h[2], h[1] / h[2]])
    jac = projection_jacobian(camera, attitude_q, sc_position_km, beacon_position_km)
    p = floor_covariance(projection_covariance(jac, budget), floor_px)
    return ProjectionPrediction(expected_px=expected, covariance=p, ellipse=covariance_ellipse(p))


def detect_beacon(spike_positions, prediction: ProjectionPrediction) -> int | None:
    """Pick the gated spike closest to the expected projection.

    ``spike_positions`` is a sequence of (x, y) pixel pairs.  Returns the
    index of the selected spike, or None when no spike passes the
    chi-square gate.  Ties on distance go to the lowest index.
    """
    positions = np.atleast_2d(np.asarray(spike_positions, dtype=float))
    if positions.size == 0:
        return None
    delta = positions - prediction.expected_px
    mahal = np.einsum("ni,ni->n", delta @ np.linalg.inv(prediction.covariance), delta)
    inside = mahal <= CHI2_GATE_3SIGMA
    if not inside.any():
        return None
    dist = np.linalg.norm(delta, axis=1)
    dist[~inside] = np.inf
    return int(np.argmin(dist))
