"""Synthetic 8-bit sky-field images with ground-truth sidecars.

Point sources (stars, planets, injected artifacts) are deposited as
pixel-integrated 2-D Gaussians of standard deviation ``defocus_sigma_px``
truncated at a 4-sigma box.  Photometry is anchored so that a source of
magnitude ``anchor_mag`` produces a peak pixel of ``anchor_peak_dn``
before clamping when rendered by the reference camera (400 ms exposure,
Qe*Tlens 0.49, 40 mm / f2.2 optics); everything else follows from the
2.5-log magnitude scale and linear scaling with exposure, throughput,
and aperture area.

Rendering order: float signal field -> optional per-pixel Poisson shot
noise -> additive Gaussian background -> clamp to [0, 255] -> round to
integer DN.  With a fixed seed, output is bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .geometry import CameraModel, PointingAngles, attitude_from_axis_azimuth, project_point, project_unit_vectors
from .star_catalog import StarCatalog

# Reference (anchor) camera photometric parameters.
_REF_EXPOSURE_MS = 400.0
_REF_QE_TLENS = 0.49
_REF_APERTURE_MM = 40.0 / 2.2

DETECTABILITY_DN = 120.0
PSF_TRUNCATION_SIGMAS = 4.0


@dataclass(frozen=True)
class PlanetSource:
    name: str
    position_km: np.ndarray
    apparent_magnitude: float


@dataclass(frozen=True)
class SceneSpec:
    camera: CameraModel
    true_attitude: PointingAngles
    sc_position_km: np.ndarray
    star_catalog: StarCatalog
    planets: tuple[PlanetSource, ...] = ()
    render_mag_cutoff: float = 6.5
    background_mean_dn: float = 5.0
    background_sigma_dn: float = 2.0
    photon_noise: bool = True
    seed: int = 0
    anchor_mag: float = 0.0
    anchor_peak_dn: float = 2000.0
    # (x_px, y_px, total_flux_dn) artifacts injected on top of the scene,
    # e.g. to force overlapping objects in adversarial tests.
    extra_sources: tuple[tuple[float, float, float], ...] = ()


@dataclass(frozen=True)
class Image:
    width: int
    height: int
    data: np.ndarray  # (height, width) uint8

    def __post_init__(self):
        assert self.data.shape == (self.height, self.width)
        self.data.setflags(write=False)


@dataclass(frozen=True)
class TruthObject:
    kind: str  # "star" | "planet" | "artifact"
    ident: str
    x: float
    y: float
    peak_dn: float
    visible: bool


@dataclass(frozen=True)
class GroundTruth:
    objects: tuple[TruthObject, ...]
    attitude: PointingAngles

    def planets(self) -> tuple[TruthObject, ...]:
        return tuple(o for o in self.objects if o.kind == "planet")


def central_pixel_fraction(sigma_px: float) -> float:
    """Fraction of a source's flux landing in the central pixel when the
    source sits exactly on a pixel center."""
    half = 0.5 / sigma_px
    return float((ndtr(half) - ndtr(-half)) ** 2)


def magnitude_to_flux(
    m: float,
    camera: CameraModel,
    anchor_mag: float = 0.0,
    anchor_peak_dn: float = 2000.0,
) -> float:
    """Total signal in DN deposited by a source of apparent magnitude m.

    ``anchor_peak_dn`` is the peak-pixel calibration at ``anchor_mag``
    for the reference camera; the return value is the *total* flux, i.e.
    peak divided by the central-pixel fraction of the camera's PSF.
    """
    anchor_total = anchor_peak_dn / central_pixel_fraction(camera.defocus_sigma_px)
    throughput = (
        (camera.exposure_ms / _REF_EXPOSURE_MS)
        * (camera.qe_tlens / _REF_QE_TLENS)
        * (camera.focal_length_mm / camera.f_number / _REF_APERTURE_MM) ** 2
    )
    return anchor_total * throughput * 10.0 ** (-0.4 * (m - anchor_mag))


def _deposit(field: np.ndarray, x: float, y: float, flux: float, sigma: float) -> None:
    """Add one pixel-integrated Gaussian spot to the float field."""
    height, width = field.shape
    r = PSF_TRUNCATION_SIGMAS * sigma
    x0 = max(int(math.floor(x - r)), 0)
    x1 = min(int(math.ceil(x + r)), width - 1)
    y0 = max(int(math.floor(y - r)), 0)
    y1 = min(int(math.ceil(y + r)), height - 1)
    if x0 > x1 or y0 > y1:
        return
    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    fx = ndtr((xs + 0.5 - x) / sigma) - ndtr((xs - 0.5 - x) / sigma)
    fy = ndtr((ys + 0.5 - y) / sigma) - ndtr((ys - 0.5 - y) / sigma)
    field[y0 : y1 + 1, x0 : x1 + 1] += flux * np.outer(fy, fx)


@dataclass(frozen=True)
class _PendingObject:
    kind: str
    ident: str
    x: float
    y: float
    in_front: bool


def render_field(scene: SceneSpec) -> tuple[np.ndarray, list[_PendingObject]]:
    """Noise-free, unclamped float signal field plus the projected objects.

    Exposed separately so photometric linearity can be checked without
    quantization in the way; ``render`` adds noise and quantizes.
    """
    cam = scene.camera
    att = attitude_from_axis_azimuth(scene.true_attitude)
    field = np.zeros((cam.height, cam.width))
    objects: list[_PendingObject] = []
    margin = PSF_TRUNCATION_SIGMAS * cam.defocus_sigma_px + 1.0

    stars = scene.star_catalog
    if len(stars):
        mags = stars.magnitudes
        keep = mags <= scene.render_mag_cutoff
        pixels, in_front = project_unit_vectors(cam, att, stars.unit_vectors)
        sel = keep & in_front
        with np.errstate(invalid="ignore"):  # NaN rows (behind camera) compare False
            sel &= (
                (pixels[:, 0] >= -margin)
                & (pixels[:, 0] <= cam.width - 1 + margin)
                & (pixels[:, 1] >= -margin)
                & (pixels[:, 1] <= cam.height - 1 + margin)
            )
        for row in np.nonzero(sel)[0]:
            x, y = pixels[row]
            flux = magnitude_to_flux(mags[row], cam, scene.anchor_mag, scene.anchor_peak_dn)
            _deposit(field, x, y, flux, cam.defocus_sigma_px)
            objects.append(_PendingObject("star", str(stars.stars[row].id), float(x), float(y), True))

    for planet in scene.planets:
        px = project_point(cam, att, scene.sc_position_km, planet.position_km)
        if px is None:
            objects.append(_PendingObject("planet", planet.name, math.nan, math.nan, False))
            continue
        flux = magnitude_to_flux(planet.apparent_magnitude, cam, scene.anchor_mag, scene.anchor_peak_dn)
        _deposit(field, float(px[0]), float(px[1]), flux, cam.defocus_sigma_px)
        objects.append(_PendingObject("planet", planet.name, float(px[0]), float(px[1]), True))

    for i, (x, y, flux) in enumerate(scene.extra_sources):
        _deposit(field, x, y, flux, cam.defocus_sigma_px)
        objects.append(_PendingObject("artifact", f"artifact-{i}", float(x), float(y), True))

    return field, objects


def render(scene: SceneSpec) -> tuple[Image, GroundTruth]:
    """Render the scene to an 8-bit frame and its ground-truth sidecar."""
    cam = scene.camera
    field, pending = render_field(scene)
    rng = np.random.default_rng(scene.seed)
    if scene.photon_noise:
        field = rng.poisson(field).astype(np.float64)
    if scene.background_sigma_dn > 0 or scene.background_mean_dn != 0:
        field = field + rng.normal(
            scene.background_mean_dn, scene.background_sigma_dn, size=field.shape
        )
    data = np.clip(np.rint(field), 0, 255).astype(np.uint8)
    image = Image(width=cam.width, height=cam.height, data=data)

    objects = []
    for o in pending:
        peak = _peak_near(data, o.x, o.y, cam.defocus_sigma_px) if o.in_front else 0.0
        visible = (
            o.in_front
            and cam.in_frame(o.x, o.y)
            and peak >= DETECTABILITY_DN
        )
        objects.append(TruthObject(o.kind, o.ident, o.x, o.y, peak, visible))
    return image, GroundTruth(objects=tuple(objects), attitude=scene.true_attitude)


def _peak_near(data: np.ndarray, x: float, y: float, sigma: float) -> float:
    """Max rendered DN within the 4-sigma footprint of a true position."""
    height, width = data.shape
    r = PSF_TRUNCATION_SIGMAS * sigma
    x0 = max(int(math.floor(x - r)), 0)
    x1 = min(int(math.ceil(x + r)), width - 1)
    y0 = max(int(math.floor(y - r)), 0)
    y1 = min(int(math.ceil(y + r)), height - 1)
    if x0 > x1 or y0 > y1:
        return 0.0
    return float(data[y0 : y1 + 1, x0 : x1 + 1].max())


def write_pgm(image: Image, path) -> None:
    """Binary PGM (P5, maxval 255)."""
    with open(path, "wb") as fh:
        fh.write(f"P5\n{image.width} {image.height}\n255\n".encode("ascii"))
        fh.write(image.data.tobytes())


def read_pgm(path) -> Image:
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        fields.append(int(blob[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    data = np.frombuffer(blob[pos : pos + width * height], dtype=np.uint8).reshape(height, width)
    return Image(width=width, height=height, data=data.copy())


def write_truth(truth: GroundTruth, path) -> None:
    """Sidecar: one `kind,id,x_px,y_px,peak_dn,visible` line per object.

    The true attitude rides along in a comment line so the sidecar alone
    suffices to score a run.
    """
    att = truth.attitude
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# attitude {att.alpha!r} {att.delta!r} {att.phi!r}\n")
        fh.write("# kind,id,x_px,y_px,peak_dn,visible\n")
        for o in truth.objects:
            fh.write(f"{o.kind},{o.ident},{o.x!r},{o.y!r},{o.peak_dn!r},{int(o.visible)}\n")


def read_truth(path) -> GroundTruth:
    attitude = None
    objects = []
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if parts and parts[0] == "attitude":
                    attitude = PointingAngles(float(parts[1]), float(parts[2]), float(parts[3]))
                continue
            kind, ident, x, y, peak, visible = line.split(",")
            objects.append(
                TruthObject(kind, ident, float(x), float(y), float(peak), bool(int(visible)))
            )
    if attitude is None:
        raise ValueError(f"{path}: missing attitude comment line")
    return GroundTruth(objects=tuple(objects), attitude=attitude)
