"""Wahba's problem by SVD, wrapped in a principal-axis RANSAC.

The RANSAC stage solves the three-star Wahba problem for ``n_samples``
random triples, represents each solution by its principal rotation
axis, and scores every axis by how many other sample axes fall within
the threshold angle.  Stars feeding any sample inside the best
consensus set are inliers; stars that only appear in rejected samples
are relabeled spikes; the final attitude refits the inliers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import ARCSEC_TO_RAD, Attitude, angular_separation, quaternion_from_matrix

_DEGENERATE_AXIS_ANGLE = 1e-9  # rad; below this the rotation axis is noise


class DegenerateGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class AxisAngle:
    axis: np.ndarray
    angle: float
    indeterminate: bool = False


@dataclass(frozen=True)
class RansacConfig:
    n_samples: int = 20
    threshold_arcsec: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.threshold_arcsec <= 0:
            raise ValueError("threshold must be positive")


@dataclass(frozen=True)
class AttitudeSolution:
    matrix: np.ndarray
    quaternion: Attitude
    inlier_centroids: tuple[int, ...]
    outlier_centroids: tuple[int, ...]  # relabeled spikes
    consensus_score: int


def wahba_svd(c_vectors: np.ndarray, n_vectors: np.ndarray) -> np.ndarray:
    """Rotation best mapping inertial directions onto camera directions.

    Rows of the inputs are paired unit vectors.  B = sum_i c_i n_i^T is
    decomposed as U S V^T and the attitude is U diag(1, 1, det U det V)
    V^T, which enforces a proper right-handed rotation.  Unit weights.
    """
    c = np.atleast_2d(np.asarray(c_vectors, dtype=float))
    v = np.atleast_2d(np.asarray(n_vectors, dtype=float))
    if c.shape != v.shape or c.shape[1] != 3 or len(c) < 2:
        raise ValueError("need matching (n, 3) arrays with n >= 2")
    b = c.T @ v
    u, s, vt = np.linalg.svd(b)
    if s[1] <= 1e-9 * max(s[0], 1e-300):
        raise DegenerateGeometryError("degenerate geometry: observations are collinear")
    m = np.diag([1.0, 1.0, np.linalg.det(u) * np.linalg.det(vt)])
    return u @ m @ vt


def principal_axis_angle(rotation: np.ndarray) -> AxisAngle:
    """Euler axis and angle of a rotation matrix, angle in [0, pi].

    Extraction goes through the quaternion, which is stable at both ends
    of the angle range.  Near zero rotation the axis is meaningless: it
    is reported as (0, 0, 1) with the indeterminate flag set.
    """
    q = quaternion_from_matrix(rotation)
    qv_norm = float(np.linalg.norm(q.vector))
    angle = 2.0 * math.atan2(qv_norm, q.scalar)
    if angle < _DEGENERATE_AXIS_ANGLE:
        return AxisAngle(axis=np.array([0.0, 0.0, 1.0]), angle=angle, indeterminate=True)
    return AxisAngle(axis=q.vector / qv_norm, angle=angle)


def _axes_agree(a: AxisAngle, b: AxisAngle, threshold_rad: float) -> bool:
    # Indeterminate axes carry no direction: they only agree with each
    # other.  Axis sign is meaningful and *not* collapsed.
    if a.indeterminate or b.indeterminate:
        return a.indeterminate and b.indeterminate
    return angular_separation(a.axis, b.axis) <= threshold_rad


def consensus_scores(axes, threshold_rad: float) -> np.ndarray:
    """Score of each sample axis: how many *other* axes agree with it.

    ``axes`` holds AxisAngle entries; None marks a sample whose Wahba
    solve was degenerate (scored -1, never in any consensus set).
    """
    scores = np.full(len(axes), -1, dtype=int)
    for i, ax_i in enumerate(axes):
        if ax_i is None:
            continue
        scores[i] = sum(
            1
            for j, ax_j in enumerate(axes)
            if j != i and ax_j is not None and _axes_agree(ax_i, ax_j, threshold_rad)
        )
    return scores


def ransac_attitude(matches, config: RansacConfig) -> AttitudeSolution | None:
    """Consensus attitude over identified stars; None when unsolvable.

    ``matches`` is the match list of a MatchResult (or the MatchResult
    itself).  Outliers keep their centroid indices so the caller can
    relabel them as spikes.
    """
    match_list = list(getattr(matches, "matches", matches))
    m = len(match_list)
    if m < 3:
        return None
    c_all = np.array([s.los_camera for s in match_list])
    n_all = np.array([s.los_inertial for s in match_list])
    rng = np.random.default_rng(config.seed)
    threshold_rad = config.threshold_arcsec * ARCSEC_TO_RAD

    subsets: list[np.ndarray] = []
    axes: list[AxisAngle | None] = []
    for _ in range(config.n_samples):
        idx = rng.choice(m, size=3, replace=False)
        subsets.append(idx)
        try:
            axes.append(principal_axis_angle(wahba_svd(c_all[idx], n_all[idx])))
        except DegenerateGeometryError:
            axes.append(None)

    scores = consensus_scores(axes, threshold_rad)
    if scores.max() < 0:
        return None
    best = int(np.argmax(scores))  # ties: lowest sample index wins

    consensus = [
        i
        for i, ax in enumerate(axes)
        if ax is not None and (i == best or _axes_agree(axes[best], ax, threshold_rad))
    ]
    inlier_set = sorted({int(k) for i in consensus for k in subsets[i]})

    try:
        attitude = wahba_svd(c_all[inlier_set], n_all[inlier_set])
    except DegenerateGeometryError:
        return None

    # Data-fitting pass: matches never drawn into a consensus sample are
    # kept when they agree with the consensus attitude, so thin sampling
    # cannot demote a perfectly consistent star.
    residual_ok = [
        k
        for k in range(m)
        if k not in inlier_set
        and angular_separation(c_all[k], attitude @ n_all[k]) <= threshold_rad
    ]
    if residual_ok:
        inlier_set = sorted(inlier_set + residual_ok)
        try:
            attitude = wahba_svd(c_all[inlier_set], n_all[inlier_set])
        except DegenerateGeometryError:
            return None

    inlier_idx = set(inlier_set)
    return AttitudeSolution(
        matrix=attitude,
        quaternion=quaternion_from_matrix(attitude),
        inlier_centroids=tuple(match_list[k].centroid_index for k in inlier_set),
        outlier_centroids=tuple(
            match_list[k].centroid_index for k in range(m) if k not in inlier_idx
        ),
        consensus_score=int(scores[best]),
    )
