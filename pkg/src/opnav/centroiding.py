"""Dynamic thresholding, ROI extraction, and weighted-moment centroids.

The threshold is mean + T * std over the whole frame (population std);
pixels strictly above it form 8-connected components.  Each component is
boxed with a one-pixel margin and the sub-pixel centroid is computed
from intensity-weighted moments over every pixel inside the box, with
weights w = I / I_max normalized by the brightest pixel of the box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class Roi:
    """Inclusive pixel box (grown one pixel per side, clipped at borders)
    around one connected bright component."""

    x0: int
    y0: int
    x1: int
    y1: int
    member_x: np.ndarray
    member_y: np.ndarray
    member_intensity: np.ndarray

    def __post_init__(self):
        for a in (self.member_x, self.member_y, self.member_intensity):
            a.setflags(write=False)

    @property
    def n_members(self) -> int:
        return len(self.member_x)


@dataclass(frozen=True)
class Centroid:
    x: float
    y: float
    total_weighted_intensity: float
    peak_dn: float
    roi: Roi


def compute_threshold(image: np.ndarray, t: float) -> float:
    """Intensity threshold mean + t * std over all pixels of the frame."""
    if image.size == 0:
        raise ValueError("empty image")
    data = image.astype(np.float64, copy=False)
    return float(data.mean() + t * data.std())


def extract_rois(image: np.ndarray, threshold: float) -> list[Roi]:
    """8-connected components of pixels strictly above the threshold.

    Components are returned in row-major order of their first (seed)
    pixel, each boxed with a one-pixel margin clipped to the frame.
    """
    height, width = image.shape
    mask = image > threshold
    labels, n_components = ndimage.label(mask, structure=_EIGHT_CONNECTED)
    if n_components == 0:
        return []
    out = []
    seeds = []
    for k, sl in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = np.nonzero(labels[sl] == k)
        ys = ys + sl[0].start
        xs = xs + sl[1].start
        seeds.append(int(ys[0]) * width + int(xs[0]))
        out.append(
            Roi(
                x0=max(int(xs.min()) - 1, 0),
                y0=max(int(ys.min()) - 1, 0),
                x1=min(int(xs.max()) + 1, width - 1),
                y1=min(int(ys.max()) + 1, height - 1),
                member_x=xs.astype(np.int64),
                member_y=ys.astype(np.int64),
                member_intensity=image[ys, xs].astype(np.float64),
            )
        )
    order = np.argsort(seeds, kind="stable")
    return [out[i] for i in order]


def compute_centroid(roi: Roi, image: np.ndarray) -> Centroid:
    """Sub-pixel centroid from weighted image moments over the ROI box.

    Moments sum over the full box including the margin ring, so faint
    PSF tails below the threshold still pull the estimate.
    """
    if roi.n_members == 0:
        raise ValueError("ROI has no member pixels")
    box = image[roi.y0 : roi.y1 + 1, roi.x0 : roi.x1 + 1].astype(np.float64)
    peak = box.max()
    if peak <= 0:
        raise ValueError("ROI box holds no signal")
    w = box / peak
    iw = box * w
    m00 = iw.sum()
    if m00 <= 0:
        raise ValueError("zero total weighted intensity")
    ys, xs = np.mgrid[roi.y0 : roi.y1 + 1, roi.x0 : roi.x1 + 1]
    m10 = (xs * iw).sum()
    m01 = (ys * iw).sum()
    return Centroid(
        x=float(m10 / m00),
        y=float(m01 / m00),
        total_weighted_intensity=float(m00),
        peak_dn=float(roi.member_intensity.max()),
        roi=roi,
    )


def find_centroids(image: np.ndarray, t: float) -> tuple[list[Centroid], float]:
    """Threshold, extract ROIs, and centroid each one.

    Returns the centroid list (ROI order) and the threshold used.
    """
    threshold = compute_threshold(image, t)
    return [compute_centroid(r, image) for r in extract_rois(image, threshold)], threshold
