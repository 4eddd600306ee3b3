"""Plain-text key=value configuration for the pipeline and harness.

Defaults reproduce the reference setup: a 20 deg, 1024x1024, 40 mm f/2.2
camera with 400 ms exposure and 0.9 px defocus; threshold tuning T=20,
7 arcsec range tolerance, magnitude limit 5.5, 35 deg maximum pair
angle; 20 RANSAC samples with a 15 arcsec consensus threshold; attitude
knowledge sigma_qv = 1e-4 and exactly-known planet ephemerides.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .geometry import ARCSEC_TO_RAD, CameraModel
from .star_id import IdentifyConfig
from .attitude_solver import RansacConfig
from .beacon_detection import UncertaintyBudget


@dataclass
class PipelineConfig:
    # Camera (detector and optics)
    fov_deg: float = 20.0
    image_width: int = 1024
    image_height: int = 1024
    focal_length_mm: float = 40.0
    f_number: float = 2.2
    exposure_ms: float = 400.0
    qe_tlens: float = 0.49
    sea_deg: float = 20.0  # solar exclusion angle; carried, not enforced
    defocus_sigma_px: float = 0.9

    # Star identification
    threshold_t: float = 20.0
    threshold_t_step: float = 5.0
    threshold_max_iterations: int = 5
    kvector_epsilon_arcsec: float = 7.0
    mag_limit: float = 5.5
    max_pair_angle_deg: float = 35.0

    # RANSAC
    ransac_samples: int = 20
    ransac_threshold_arcsec: float = 15.0

    # Uncertainty budget (sigma_r comes from the campaign sweep)
    sigma_qv: float = 1e-4
    sigma_rbc_km: float = 0.0

    # Renderer
    anchor_mag: float = 0.0
    anchor_peak_dn: float = 2000.0
    background_mean_dn: float = 5.0
    background_sigma_dn: float = 2.0
    photon_noise: bool = True
    render_mag_cutoff: float = 6.5
    ellipse_floor_px: float = 0.5

    # Harness (scenario sampling and outcome classification)
    sigma_x_au: float = 3.0
    sigma_y_au: float = 3.0
    sigma_z_au: float = 0.07
    delta_sigma_rad: float = 0.2
    delta_max_rad: float = 0.6
    wrong_attitude_arcsec: float = 500.0
    wrong_beacon_px: float = 5.0

    # Synthetic sky (used when no catalog/ephemeris files are supplied)
    sky_star_count: int = 4000
    sky_mag_bright: float = -1.0
    sky_mag_faint: float = 6.5
    sky_mag_slope: float = 0.25
    sky_seed: int = 7041997

    def camera(self) -> CameraModel:
        return CameraModel(
            fov_deg=self.fov_deg,
            width=self.image_width,
            height=self.image_height,
            focal_length_mm=self.focal_length_mm,
            f_number=self.f_number,
            exposure_ms=self.exposure_ms,
            qe_tlens=self.qe_tlens,
            defocus_sigma_px=self.defocus_sigma_px,
        )

    def identify_config(self) -> IdentifyConfig:
        return IdentifyConfig(
            epsilon_rad=self.kvector_epsilon_arcsec * ARCSEC_TO_RAD,
            threshold_t=self.threshold_t,
            threshold_t_step=self.threshold_t_step,
            max_iterations=self.threshold_max_iterations,
        )

    def ransac_config(self, seed: int = 0) -> RansacConfig:
        return RansacConfig(
            n_samples=self.ransac_samples,
            threshold_arcsec=self.ransac_threshold_arcsec,
            seed=seed,
        )

    def budget(self, sigma_r_km: float) -> UncertaintyBudget:
        return UncertaintyBudget(
            sigma_qv=self.sigma_qv, sigma_r_km=sigma_r_km, sigma_rbc_km=self.sigma_rbc_km
        )

    @property
    def max_pair_angle_rad(self) -> float:
        return math.radians(self.max_pair_angle_deg)


def load_config(path) -> PipelineConfig:
    """Parse key=value lines (``#`` comments) over the defaults."""
    cfg = PipelineConfig()
    types = {f.name: f.type for f in fields(PipelineConfig)}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path} line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if key not in types:
                raise ValueError(f"{path} line {lineno}: unknown key '{key}'")
            current = getattr(cfg, key)
            if isinstance(current, bool):
                setattr(cfg, key, value.lower() in ("1", "true", "yes", "on"))
            elif isinstance(current, int):
                setattr(cfg, key, int(value))
            else:
                setattr(cfg, key, float(value))
    return cfg


def save_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in fields(PipelineConfig):
            value = getattr(cfg, f.name)
            if isinstance(value, bool):
                value = int(value)
            fh.write(f"{f.name}={value}\n")
