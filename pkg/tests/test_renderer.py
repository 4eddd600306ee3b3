import math

import numpy as np
import pytest

from opnav.centroiding import find_centroids
from opnav.geometry import PointingAngles
from opnav.renderer import (
    DETECTABILITY_DN,
    PSF_TRUNCATION_SIGMAS,
    SceneSpec,
    central_pixel_fraction,
    magnitude_to_flux,
    read_pgm,
    read_truth,
    render,
    render_field,
    write_pgm,
    write_truth,
)
from opnav.star_catalog import catalog_from_records
from conftest import DESK_POINTING


def _empty_scene(camera, **kw):
    defaults = dict(
        camera=camera,
        true_attitude=PointingAngles(0.0, 0.0, 0.0),
        sc_position_km=np.zeros(3),
        star_catalog=catalog_from_records([]),
        background_mean_dn=0.0,
        background_sigma_dn=0.0,
        photon_noise=False,
    )
    defaults.update(kw)
    return SceneSpec(**defaults)


class TestMagnitudeToFlux:
    def test_pogson_ratio(self, camera):
        assert magnitude_to_flux(1.0, camera) / magnitude_to_flux(3.5, camera) == pytest.approx(10.0)
        assert magnitude_to_flux(2.0, camera) / magnitude_to_flux(3.0, camera) == pytest.approx(
            10**0.4
        )

    def test_anchor_total_flux(self, camera):
        # at the anchor magnitude, flux * central fraction = anchor peak
        flux = magnitude_to_flux(0.0, camera, anchor_mag=0.0, anchor_peak_dn=2000.0)
        assert flux * central_pixel_fraction(camera.defocus_sigma_px) == pytest.approx(2000.0)

    def test_exposure_linearity(self, camera):
        import dataclasses

        doubled = dataclasses.replace(camera, exposure_ms=camera.exposure_ms * 2)
        assert magnitude_to_flux(3.0, doubled) == pytest.approx(2 * magnitude_to_flux(3.0, camera))

    def test_monotone_decreasing(self, camera):
        mags = np.linspace(-2, 8, 30)
        flux = [magnitude_to_flux(m, camera) for m in mags]
        assert all(a > b for a, b in zip(flux, flux[1:]))


class TestRender:
    def test_empty_scene_all_zero(self, camera):
        image, truth = render(_empty_scene(camera))
        assert image.data.sum() == 0
        assert truth.objects == ()

    def test_anchor_peak_at_pixel_center(self, camera):
        flux = magnitude_to_flux(0.0, camera)
        field, _ = render_field(_empty_scene(camera, extra_sources=((512.0, 512.0, flux),)))
        assert field.max() == pytest.approx(2000.0, rel=1e-6)

    def test_rotational_symmetry_at_pixel_center(self, camera):
        image, _ = render(_empty_scene(camera, extra_sources=((200.0, 300.0, 1000.0),)))
        r = math.ceil(PSF_TRUNCATION_SIGMAS * camera.defocus_sigma_px)
        patch = image.data[300 - r : 300 + r + 1, 200 - r : 200 + r + 1].astype(int)
        np.testing.assert_array_equal(patch, np.rot90(patch))
        np.testing.assert_array_equal(patch, patch.T)

    def test_psf_truncated_at_four_sigma(self, camera):
        field, _ = render_field(_empty_scene(camera, extra_sources=((200.0, 300.0, 1e6),)))
        r = PSF_TRUNCATION_SIGMAS * camera.defocus_sigma_px
        assert field[300, 200 + math.ceil(r) + 1] == 0.0
        assert field[300, 200] > 0.0

    def test_superposition_before_quantization(self, camera):
        s1 = ((100.2, 100.8, 900.0),)
        s2 = ((103.4, 101.1, 700.0),)
        f1, _ = render_field(_empty_scene(camera, extra_sources=s1))
        f2, _ = render_field(_empty_scene(camera, extra_sources=s2))
        f12, _ = render_field(_empty_scene(camera, extra_sources=s1 + s2))
        np.testing.assert_allclose(f12, f1 + f2, atol=1e-9)

    def test_same_seed_bit_identical(self, camera, sky):
        catalog, _, _ = sky
        def make():
            scene = SceneSpec(
                camera=camera,
                true_attitude=DESK_POINTING,
                sc_position_km=np.zeros(3),
                star_catalog=catalog,
                seed=99,
            )
            return render(scene)
        img1, t1 = make()
        img2, t2 = make()
        np.testing.assert_array_equal(img1.data, img2.data)
        assert t1 == t2

    def test_different_seed_differs(self, camera, sky):
        catalog, _, _ = sky
        imgs = []
        for seed in (1, 2):
            scene = SceneSpec(
                camera=camera,
                true_attitude=DESK_POINTING,
                sc_position_km=np.zeros(3),
                star_catalog=catalog,
                seed=seed,
            )
            imgs.append(render(scene)[0].data)
        assert (imgs[0] != imgs[1]).any()

    def test_noiseless_spot_centroid_accuracy(self, camera):
        rng = np.random.default_rng(10)
        worst = 0.0
        for _ in range(20):
            x = rng.uniform(100, 900)
            y = rng.uniform(100, 900)
            image, _ = render(_empty_scene(camera, extra_sources=((x, y, 1200.0),)))
            cents, _ = find_centroids(image.data, 5.0)
            assert len(cents) == 1
            worst = max(worst, abs(cents[0].x - x), abs(cents[0].y - y))
        assert worst < 0.02

    def test_visible_flag_matches_peak_recount(self, camera, sky):
        catalog, _, _ = sky
        scene = SceneSpec(
            camera=camera,
            true_attitude=DESK_POINTING,
            sc_position_km=np.zeros(3),
            star_catalog=catalog,
            seed=5,
        )
        image, truth = render(scene)
        r = math.ceil(PSF_TRUNCATION_SIGMAS * camera.defocus_sigma_px)
        for o in truth.objects:
            if math.isnan(o.x):
                assert not o.visible
                continue
            x0, x1 = max(int(o.x) - r, 0), min(int(o.x) + r + 1, camera.width)
            y0, y1 = max(int(o.y) - r, 0), min(int(o.y) + r + 1, camera.height)
            peak = image.data[y0:y1, x0:x1].max() if (x1 > x0 and y1 > y0) else 0
            in_frame = camera.in_frame(o.x, o.y)
            assert o.visible == (in_frame and peak >= DETECTABILITY_DN)

    def test_clamped_to_eight_bit(self, camera):
        image, truth = render(_empty_scene(camera, extra_sources=((300.0, 300.0, 1e9),)))
        assert image.data.max() == 255
        assert truth.objects[0].peak_dn == 255.0


class TestIO:
    def test_pgm_roundtrip(self, camera, tmp_path):
        image, _ = render(_empty_scene(camera, extra_sources=((77.3, 48.9, 5000.0),)))
        path = tmp_path / "frame.pgm"
        write_pgm(image, path)
        back = read_pgm(path)
        assert (back.width, back.height) == (image.width, image.height)
        np.testing.assert_array_equal(back.data, image.data)
        header = path.read_bytes()[:15]
        assert header.startswith(b"P5\n1024 1024\n")

    def test_truth_roundtrip(self, camera, tmp_path):
        scene = _empty_scene(
            camera,
            extra_sources=((10.5, 20.25, 3000.0),),
            true_attitude=PointingAngles(0.1, -0.2, 5.0),
        )
        _, truth = render(scene)
        path = tmp_path / "truth.csv"
        write_truth(truth, path)
        back = read_truth(path)
        assert back == truth

    def test_bad_pgm_rejected(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
        with pytest.raises(ValueError):
            read_pgm(path)
