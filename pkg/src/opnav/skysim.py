"""Deterministic synthetic sky and solar-system snapshots.

The Monte Carlo harness needs a full-sky star catalog and a set of
planets without any network access, so both are generated here from a
seed.  Star directions are uniform on the sphere; magnitudes follow a
truncated exponential number-count law dN/dm ~ 10^(slope*m), which
mimics the ratio of faint to bright stars in real catalogs.  Planets
sit at fixed heliocentric-scale positions near the z=0 plane; their
apparent magnitude as seen from a given observer follows an inverse
square brightness law anchored at 1 AU.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .star_catalog import StarCatalog, StarRecord, catalog_from_records

AU_KM = 1.495978707e8

# name, orbital radius (AU), ecliptic longitude (rad), z offset (AU),
# apparent magnitude at 1 AU observer distance (absolute magnitude plus
# 5 log10 of the sun distance; phase effects ignored).  Mars sits at its
# bright end and uranus at its faint end so that neither planet dwells
# in the narrow band between the detection threshold and the 120 DN
# visibility level, where the external oracle and the pipeline disagree
# by construction.
_PLANETS = (
    ("mercury", 0.39, 0.80, 0.004, -2.6),
    ("venus", 0.72, 2.10, -0.010, -5.1),
    ("earth", 1.00, 3.60, 0.000, -4.0),
    ("mars", 1.52, 5.10, 0.030, -1.3),
    ("jupiter", 5.20, 0.30, -0.060, -5.8),
    ("saturn", 9.54, 1.70, 0.110, -4.0),
    ("uranus", 19.19, 3.10, -0.160, 0.2),
    ("neptune", 30.07, 4.60, 0.220, 0.4),
)


@dataclass(frozen=True)
class PlanetBody:
    name: str
    position_km: np.ndarray
    mag_at_1au: float

    def apparent_magnitude(self, observer_km: np.ndarray) -> float:
        d = float(np.linalg.norm(self.position_km - np.asarray(observer_km, float)))
        return self.mag_at_1au + 5.0 * math.log10(max(d, 1.0) / AU_KM)


def synthetic_star_records(
    n_stars: int,
    seed: int,
    mag_bright: float = -1.0,
    mag_faint: float = 6.5,
    slope: float = 0.35,
) -> list[StarRecord]:
    """Full-sky star list, ids 1..n, deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    ra = rng.uniform(0.0, 2.0 * math.pi, n_stars)
    dec = np.arcsin(rng.uniform(-1.0, 1.0, n_stars))
    u = rng.uniform(0.0, 1.0, n_stars)
    lo = 10.0 ** (slope * mag_bright)
    hi = 10.0 ** (slope * mag_faint)
    mags = np.log10(lo + u * (hi - lo)) / slope
    return [
        StarRecord(id=i + 1, right_ascension=float(ra[i]), declination=float(dec[i]), magnitude=float(mags[i]))
        for i in range(n_stars)
    ]


def synthetic_catalog(
    n_stars: int,
    seed: int,
    mag_bright: float = -1.0,
    mag_faint: float = 6.5,
    slope: float = 0.35,
) -> StarCatalog:
    return catalog_from_records(
        synthetic_star_records(n_stars, seed, mag_bright, mag_faint, slope)
    )


def solar_system() -> tuple[PlanetBody, ...]:
    """The fixed planet snapshot used by the default campaign."""
    bodies = []
    for name, r_au, lon, z_au, mag in _PLANETS:
        pos = np.array(
            [r_au * math.cos(lon) * AU_KM, r_au * math.sin(lon) * AU_KM, z_au * AU_KM]
        )
        bodies.append(PlanetBody(name=name, position_km=pos, mag_at_1au=mag))
    return tuple(bodies)
