import math

import numpy as np
import pytest

from opnav.config import PipelineConfig
from opnav.geometry import CameraModel, PointingAngles
from opnav.skysim import synthetic_catalog
from opnav.star_catalog import StarRecord, build_kvector, build_pair_database, catalog_from_records


@pytest.fixture(scope="session")
def camera():
    return CameraModel()


@pytest.fixture(scope="session")
def cfg():
    return PipelineConfig()


# Six stars in a ~12 deg patch around (ra 1.0, dec 0.2); every pair angle
# is below 35 deg and the 15 pair angles are mutually separated by more
# than 100 arcsec, so a centroid corrupted by a fraction of a pixel can
# never jump to a different catalog pair.
DESK_STARS = [
    (1, 1.00, 0.20, 2.0),
    (2, 1.05, 0.23, 2.2),
    (3, 0.97, 0.155, 2.4),
    (4, 1.08, 0.14, 2.1),
    (5, 0.935, 0.26, 2.3),
    (6, 1.02, 0.305, 2.5),
]

# Pointing that puts all six desk stars well inside the frame.
DESK_POINTING = PointingAngles(alpha=0.7, delta=0.21, phi=1.01)


@pytest.fixture(scope="session")
def desk_catalog():
    return catalog_from_records(
        StarRecord(id=i, right_ascension=ra, declination=dec, magnitude=m)
        for i, ra, dec, m in DESK_STARS
    )


@pytest.fixture(scope="session")
def desk_db(desk_catalog):
    db = build_pair_database(desk_catalog, mag_limit=5.5, max_angle_rad=math.radians(35))
    return db, build_kvector(db)


@pytest.fixture(scope="session")
def sky(cfg):
    """Full-scale synthetic sky with its onboard pair database."""
    catalog = synthetic_catalog(
        cfg.sky_star_count, cfg.sky_seed, cfg.sky_mag_bright, cfg.sky_mag_faint, cfg.sky_mag_slope
    )
    db = build_pair_database(catalog, cfg.mag_limit, cfg.max_pair_angle_rad)
    return catalog, db, build_kvector(db)


def random_rotation(rng):
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    from opnav.geometry import matrix_from_quaternion

    return matrix_from_quaternion(q)
