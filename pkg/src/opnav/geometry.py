"""Camera model, attitude representations, and pinhole projection.

Conventions shared by every module in this package:

* Inertial frame N is right-handed; star directions come from right
  ascension / declination on the celestial sphere.
* Camera frame C has c3 along the boresight, c1 pointing right and c2
  pointing down in the image.
* Image coordinates: x (column) grows to the right, y (row) grows
  downward, origin at the upper-left corner.  Pixel centers sit at
  integer coordinates, so pixel (0, 0) covers [-0.5, 0.5] x [-0.5, 0.5].
* Rotation matrices are passive (they transform coordinates, not
  vectors).  Quaternions are scalar-first (q0, qv) and describe the same
  passive rotation; the canonical representative has q0 >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
ARCSEC_TO_RAD = math.pi / (180.0 * 3600.0)
RAD_TO_ARCSEC = 1.0 / ARCSEC_TO_RAD


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera with the detector parameters used for rendering.

    The pixel focal length is derived from the field of view and the
    image width (the physical focal length and f-number only matter for
    photometry): f_px = width / (2 tan(fov/2)).
    """

    fov_deg: float = 20.0
    width: int = 1024
    height: int = 1024
    focal_length_mm: float = 40.0
    f_number: float = 2.2
    exposure_ms: float = 400.0
    qe_tlens: float = 0.49
    defocus_sigma_px: float = 0.9

    @property
    def focal_px(self) -> float:
        return self.width / (2.0 * math.tan(math.radians(self.fov_deg) / 2.0))

    @property
    def principal_point(self) -> tuple[float, float]:
        return (self.width / 2.0, self.height / 2.0)

    @property
    def intrinsic(self) -> np.ndarray:
        """3x3 intrinsic matrix [[f, 0, cx], [0, f, cy], [0, 0, 1]] in pixels."""
        f = self.focal_px
        cx, cy = self.principal_point
        return np.array([[f, 0.0, cx], [0.0, f, cy], [0.0, 0.0, 1.0]])

    def in_frame(self, x: float, y: float) -> bool:
        """True when (x, y) lies on the pixel-center grid of the detector."""
        return 0.0 <= x <= self.width - 1 and 0.0 <= y <= self.height - 1


@dataclass(frozen=True)
class PointingAngles:
    """Axis-azimuth camera pointing: right ascension, declination, twist."""

    alpha: float
    delta: float
    phi: float

    def __post_init__(self):
        if not -math.pi / 2 <= self.delta <= math.pi / 2:
            raise ValueError(f"declination {self.delta} outside [-pi/2, pi/2]")
        object.__setattr__(self, "alpha", self.alpha % TWO_PI)
        object.__setattr__(self, "phi", self.phi % TWO_PI)


@dataclass(frozen=True)
class Attitude:
    """Unit quaternion, scalar first, canonicalized to q0 >= 0."""

    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (4,):
            raise ValueError("quaternion must have 4 components (q0, qv)")
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("quaternion has zero or non-finite norm")
        q = q / n
        if q[0] < 0 or (q[0] == 0 and _first_nonzero_sign(q[1:]) < 0):
            q = -q
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def scalar(self) -> float:
        return float(self.q[0])

    @property
    def vector(self) -> np.ndarray:
        return self.q[1:]

    def to_matrix(self) -> np.ndarray:
        return matrix_from_quaternion(self)

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Attitude":
        return quaternion_from_matrix(m)


def _first_nonzero_sign(v: np.ndarray) -> float:
    for x in v:
        if x != 0:
            return math.copysign(1.0, x)
    return 1.0


def skew(v) -> np.ndarray:
    """Cross-product matrix [v]^ such that skew(v) @ w == cross(v, w)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot2(theta: float) -> np.ndarray:
    """Passive elementary rotation about axis 2."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rot3(theta: float) -> np.ndarray:
    """Passive elementary rotation about axis 3."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def attitude_from_axis_azimuth(angles: PointingAngles) -> np.ndarray:
    """Attitude matrix from N to C for axis-azimuth pointing angles.

    Composition is rot3(alpha) @ rot2(pi/2 - delta) @ rot3(phi); the
    boresight declination equals delta and the identity is recovered at
    (0, pi/2, 0).
    """
    return rot3(angles.alpha) @ rot2(math.pi / 2.0 - angles.delta) @ rot3(angles.phi)


def matrix_from_quaternion(q: Attitude | np.ndarray) -> np.ndarray:
    """Passive rotation matrix of a unit quaternion.

    A = (q0^2 - qv.qv) I + 2 qv qv^T - 2 q0 [qv]^
    """
    arr = q.q if isinstance(q, Attitude) else np.asarray(q, dtype=float)
    n = np.linalg.norm(arr)
    if abs(n - 1.0) > 1e-9:
        raise ValueError(f"quaternion norm {n} is not 1")
    q0, qv = arr[0], arr[1:]
    return (q0 * q0 - qv @ qv) * np.eye(3) + 2.0 * np.outer(qv, qv) - 2.0 * q0 * skew(qv)


def quaternion_from_matrix(m: np.ndarray) -> Attitude:
    """Inverse of matrix_from_quaternion, stable for all rotation angles.

    Uses the largest of (trace, m00, m11, m22) to pick the division
    branch, so no catastrophic cancellation occurs near 0 or pi.
    Raises ValueError for a non-orthonormal input.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError("attitude matrix must be 3x3")
    if np.max(np.abs(m @ m.T - np.eye(3))) > 1e-8 or abs(np.linalg.det(m) - 1.0) > 1e-8:
        raise ValueError("matrix is not a proper rotation")
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    choices = [tr, m[0, 0], m[1, 1], m[2, 2]]
    best = int(np.argmax(choices))
    if best == 0:
        q0 = 0.5 * math.sqrt(1.0 + tr)
        q = np.array([
            q0,
            (m[1, 2] - m[2, 1]) / (4.0 * q0),
            (m[2, 0] - m[0, 2]) / (4.0 * q0),
            (m[0, 1] - m[1, 0]) / (4.0 * q0),
        ])
    else:
        i = best - 1
        j, k = (i + 1) % 3, (i + 2) % 3
        qi = 0.5 * math.sqrt(1.0 + 2.0 * m[i, i] - tr)
        q = np.empty(4)
        q[0] = (m[j, k] - m[k, j]) / (4.0 * qi)
        q[1 + i] = qi
        q[1 + j] = (m[i, j] + m[j, i]) / (4.0 * qi)
        q[1 + k] = (m[i, k] + m[k, i]) / (4.0 * qi)
    return Attitude(q)


def radec_to_unit(ra: float, dec: float) -> np.ndarray:
    """Unit vector in N for right ascension / declination in radians."""
    cd = math.cos(dec)
    return np.array([cd * math.cos(ra), cd * math.sin(ra), math.sin(dec)])


def angular_separation(u, v) -> float:
    """Angle in radians between two vectors, stable for tiny angles."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cross = np.linalg.norm(np.cross(u, v))
    dot = float(u @ v)
    return math.atan2(cross, dot)


def project_point(
    camera: CameraModel,
    attitude_matrix: np.ndarray,
    sc_position: np.ndarray,
    target_position: np.ndarray,
) -> np.ndarray | None:
    """Project an inertial-frame point onto the image.

    Returns the (x, y) pixel coordinates, or None when the point lies
    behind the camera (third camera-frame component <= 0).  No bounds
    clipping is applied; callers decide what off-image means.
    """
    rho = np.asarray(target_position, dtype=float) - np.asarray(sc_position, dtype=float)
    if not np.any(rho):
        raise ValueError("target coincides with the spacecraft position")
    return _project_los(camera, attitude_matrix @ rho)


def project_star(
    camera: CameraModel, attitude_matrix: np.ndarray, ra: float, dec: float
) -> np.ndarray | None:
    """Project a star (a direction on the plane at infinity) onto the image."""
    return _project_los(camera, attitude_matrix @ radec_to_unit(ra, dec))


def _project_los(camera: CameraModel, rho_c: np.ndarray) -> np.ndarray | None:
    if rho_c[2] <= 0.0:
        return None
    h = camera.intrinsic @ rho_c
    return np.array([h[0] / h[2], h[1] / h[2]])


def project_unit_vectors(
    camera: CameraModel, attitude_matrix: np.ndarray, unit_vectors: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized star projection.

    Parameters
    ----------
    unit_vectors : (n, 3) array of inertial directions.

    Returns
    -------
    pixels : (n, 2) array, rows valid only where ``in_front`` is True.
    in_front : (n,) boolean array, False where the direction points behind
        the camera.
    """
    rho_c = unit_vectors @ attitude_matrix.T
    in_front = rho_c[:, 2] > 0.0
    h = rho_c @ camera.intrinsic.T
    pixels = np.full((len(unit_vectors), 2), np.nan)
    z = h[in_front, 2]
    pixels[in_front, 0] = h[in_front, 0] / z
    pixels[in_front, 1] = h[in_front, 1] / z
    return pixels, in_front


def los_from_pixel(camera: CameraModel, pixel) -> np.ndarray:
    """Unit line-of-sight direction in C for a pixel coordinate."""
    x, y = float(pixel[0]), float(pixel[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("pixel coordinates must be finite")
    cx, cy = camera.principal_point
    v = np.array([(x - cx) / camera.focal_px, (y - cy) / camera.focal_px, 1.0])
    return v / np.linalg.norm(v)
