"""Monte Carlo campaign driver and outcome classification.

Each scenario samples a spacecraft position (Gaussian, wide in x/y and
narrow in z) and a camera pointing (uniform right ascension and twist,
truncated-normal declination), renders the sky field, and runs the
pipeline.  An external scoring step, with access to the ground truth the
flight code never sees, labels every scenario:

====================  =================================================
label                 meaning
====================  =================================================
1.I                   planet visible, detected within 5 px
1.II                  planet visible, detected more than 5 px away
1.III.A               not detected: planet was matched as a star
1.III.B               not detected: planet spike fell outside the gate
1.III.C               not detected: attitude was wrong upstream
1.III.D               not detected: expected projection off-frame
1.III.E               not detected: merged with a neighboring object
1.III.F               not detected: no centroid at the planet
2.I                   planet not visible, expected projection off-frame
2.II                  planet not visible, nothing in the gate
2.III                 planet not visible but something was detected
ATT_WRONG             pointing error above 500 arcsec, no planet case
ATT_NONE              star identification did not converge
====================  =================================================

The attitude stage is independent of the position-uncertainty sweep, so
one scenario is rendered and solved once and only the beacon stage is
repeated per sigma_r, with the position-error direction shared across
the sweep (this is also what makes failure rates monotone in sigma_r).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .attitude_solver import AttitudeSolution, RansacConfig, principal_axis_angle, ransac_attitude
from .beacon_detection import ProjectionPrediction, UncertaintyBudget, detect_beacon, predict_projection
from .config import PipelineConfig
from .geometry import (
    RAD_TO_ARCSEC,
    Attitude,
    CameraModel,
    PointingAngles,
    angular_separation,
    attitude_from_axis_azimuth,
)
from .renderer import GroundTruth, PlanetSource, SceneSpec, TruthObject, render
from .skysim import AU_KM, PlanetBody
from .star_catalog import KVectorIndex, PairDatabase, StarCatalog
from .star_id import IdentifyConfig, RetryResult, identify_with_retry

PLANET_ASSOC_RADIUS_PX = 5.0


@dataclass(frozen=True)
class ScenarioSpec:
    index: int
    sc_position_km: np.ndarray
    pointing: PointingAngles
    planets: tuple[PlanetSource, ...]
    planet_in_frame: bool
    sigma_r_km: float | None = None


@dataclass(frozen=True)
class OutcomeLabel:
    label: str
    attitude_status: str  # "ok" | "wrong" | "none"
    rotation_error_arcsec: float = math.nan
    pointing_error_arcsec: float = math.nan
    projection_error_px: float = math.nan


@dataclass(frozen=True)
class AttitudeOutput:
    """Result of the flight pipeline's attitude stage for one image."""

    retry: RetryResult | None
    solution: AttitudeSolution | None
    spike_centroids: tuple[int, ...]  # unmatched + RANSAC-relabeled
    spike_positions: np.ndarray  # (k, 2)


@dataclass(frozen=True)
class BeaconObservation:
    name: str
    prediction: ProjectionPrediction | None
    attempted: bool  # False when the expected projection is off-frame
    spike_index: int | None  # index into spike_positions
    selected_px: np.ndarray | None


def solve_attitude(
    image_data: np.ndarray,
    camera: CameraModel,
    catalog: StarCatalog,
    db: PairDatabase,
    index: KVectorIndex,
    identify_cfg: IdentifyConfig,
    ransac_cfg: RansacConfig,
) -> AttitudeOutput:
    retry = identify_with_retry(image_data, camera, catalog, db, index, identify_cfg)
    if retry is None:
        return AttitudeOutput(None, None, (), np.empty((0, 2)))
    solution = ransac_attitude(retry.result, ransac_cfg)
    if solution is None:
        return AttitudeOutput(retry, None, (), np.empty((0, 2)))
    spike_centroids = tuple(sorted(set(retry.result.spikes) | set(solution.outlier_centroids)))
    positions = np.array(
        [(retry.centroids[i].x, retry.centroids[i].y) for i in spike_centroids]
    ).reshape(-1, 2)
    return AttitudeOutput(retry, solution, spike_centroids, positions)


def detect_beacons(
    attitude_out: AttitudeOutput,
    camera: CameraModel,
    est_position_km: np.ndarray,
    planets,
    budget: UncertaintyBudget,
    floor_px: float,
) -> dict[str, BeaconObservation]:
    """Gate the spikes against each planet's predicted projection."""
    out: dict[str, BeaconObservation] = {}
    solution = attitude_out.solution
    for planet in planets:
        if solution is None:
            out[planet.name] = BeaconObservation(planet.name, None, False, None, None)
            continue
        prediction = predict_projection(
            camera, solution.quaternion, est_position_km, planet.position_km, budget, floor_px
        )
        attempted = prediction is not None and camera.in_frame(*prediction.expected_px)
        spike_index = None
        selected = None
        if attempted and len(attitude_out.spike_positions):
            spike_index = detect_beacon(attitude_out.spike_positions, prediction)
            if spike_index is not None:
                selected = attitude_out.spike_positions[spike_index]
        out[planet.name] = BeaconObservation(planet.name, prediction, attempted, spike_index, selected)
    return out


def rotation_error_rad(estimated: np.ndarray, true: np.ndarray) -> float:
    """Principal angle of the error rotation between two attitudes."""
    return principal_axis_angle(estimated @ true.T).angle


def pointing_error_rad(estimated: np.ndarray, true: np.ndarray) -> float:
    """Angle between the estimated and true boresight directions."""
    return angular_separation(estimated[2], true[2])


def primary_planet(truth: GroundTruth) -> TruthObject | None:
    """The planet the scenario is scored on: brightest visible first,
    then brightest in-frame, then brightest projected."""
    planets = truth.planets()
    if not planets:
        return None
    for subset in (
        [p for p in planets if p.visible],
        [p for p in planets if not math.isnan(p.x)],
    ):
        if subset:
            return max(subset, key=lambda p: p.peak_dn)
    return planets[0]


def classify_outcome(
    truth: GroundTruth,
    attitude_out: AttitudeOutput,
    beacons: dict[str, BeaconObservation],
    camera: CameraModel,
    cfg: PipelineConfig,
) -> OutcomeLabel:
    """Score one scenario against ground truth (decision tree above)."""
    if attitude_out.solution is None:
        return OutcomeLabel("ATT_NONE", "none")
    true_matrix = attitude_from_axis_azimuth(truth.attitude)
    rot_err = rotation_error_rad(attitude_out.solution.matrix, true_matrix) * RAD_TO_ARCSEC
    point_err = pointing_error_rad(attitude_out.solution.matrix, true_matrix) * RAD_TO_ARCSEC
    att_wrong = point_err > cfg.wrong_attitude_arcsec
    status = "wrong" if att_wrong else "ok"

    planet = primary_planet(truth)
    if planet is None:
        # Nothing to detect and nothing expected: the no-planet analogue of 2.I.
        label = "ATT_WRONG" if att_wrong else "2.I"
        return OutcomeLabel(label, status, rot_err, point_err)

    obs = beacons[planet.ident]
    detected = obs.spike_index is not None
    err_px = math.nan
    if detected and not math.isnan(planet.x):
        err_px = float(np.hypot(obs.selected_px[0] - planet.x, obs.selected_px[1] - planet.y))

    if planet.visible:
        if detected:
            label = "1.I" if err_px <= cfg.wrong_beacon_px else "1.II"
        else:
            label = _failure_forensics(planet, obs, attitude_out, att_wrong)
        return OutcomeLabel(label, status, rot_err, point_err, err_px)

    if not obs.attempted:
        label = "ATT_WRONG" if att_wrong else "2.I"
    elif detected:
        label = "2.III"
    else:
        label = "ATT_WRONG" if att_wrong else "2.II"
    return OutcomeLabel(label, status, rot_err, point_err, err_px)


def _failure_forensics(
    planet: TruthObject,
    obs: BeaconObservation,
    attitude_out: AttitudeOutput,
    att_wrong: bool,
) -> str:
    """Assign the 1.III sub-case for a visible but undetected planet."""
    if not obs.attempted:
        return "1.III.D"
    if att_wrong:
        return "1.III.C"
    retry = attitude_out.retry
    nearest = None
    nearest_dist = math.inf
    for i, c in enumerate(retry.centroids):
        d = math.hypot(c.x - planet.x, c.y - planet.y)
        if d < nearest_dist:
            nearest, nearest_dist = i, d
    if nearest is None or nearest_dist > PLANET_ASSOC_RADIUS_PX:
        return "1.III.F"
    if nearest not in attitude_out.spike_centroids:
        return "1.III.A"  # the planet's centroid survived as a star match
    roi = retry.centroids[nearest].roi
    if roi.n_members and _roi_member_span(roi) > 1 and nearest_dist > 1.0:
        return "1.III.E"
    return "1.III.B"


def _roi_member_span(roi) -> float:
    return max(
        roi.member_x.max() - roi.member_x.min(),
        roi.member_y.max() - roi.member_y.min(),
    )


@dataclass(frozen=True)
class ScenarioRecord:
    """One classified scenario at one sigma_r, flattened for the CSV."""

    scenario: int
    sigma_r_km: float
    planet_present: bool
    planet_name: str
    planet_visible: bool
    truth_x: float
    truth_y: float
    n_centroids: int
    n_matches: int
    n_spikes: int
    iterations: int
    outcome: OutcomeLabel
    expected_x: float = math.nan
    expected_y: float = math.nan
    ellipse_a: float = math.nan
    ellipse_b: float = math.nan
    ellipse_psi: float = math.nan
    detected_x: float = math.nan
    detected_y: float = math.nan


@dataclass(frozen=True)
class CampaignRow:
    """Aggregate statistics for one sigma_r value."""

    sigma_r_km: float
    n_scenarios: int
    n_planet_present: int
    n_converged: int
    sigma_err_rot_arcsec: float
    pct_wrong_attitude: float
    pct_no_attitude: float
    pct_beacon_fail: float
    pct_beacon_fail_right_att: float
    n_correct_detection: int
    mu_err_px: np.ndarray
    p_err_px2: np.ndarray
    det_p_err: float


@dataclass
class CampaignReport:
    rows: list[CampaignRow]
    records: list[ScenarioRecord]
    n_scenarios: int
    planet_present_fraction: float
    elapsed_s: float = 0.0


def sample_scenarios(
    n: int,
    master_seed: int,
    cfg: PipelineConfig,
    camera: CameraModel,
    planets: tuple[PlanetBody, ...],
) -> list[ScenarioSpec]:
    """Deterministic scenario draws; flags whether a planet is in frame."""
    if n < 1:
        raise ValueError("need at least one scenario")
    specs = []
    for idx in range(n):
        rng = np.random.default_rng(np.random.SeedSequence((master_seed, idx, 0)))
        pos = rng.normal(0.0, 1.0, 3) * np.array(
            [cfg.sigma_x_au, cfg.sigma_y_au, cfg.sigma_z_au]
        ) * AU_KM
        alpha = rng.uniform(0.0, 2.0 * math.pi)
        delta = _truncated_normal(rng, cfg.delta_sigma_rad, cfg.delta_max_rad)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        pointing = PointingAngles(alpha=alpha, delta=delta, phi=phi)
        attitude = attitude_from_axis_azimuth(pointing)
        sources = tuple(
            PlanetSource(
                name=p.name,
                position_km=p.position_km,
                apparent_magnitude=p.apparent_magnitude(pos),
            )
            for p in planets
        )
        in_frame = False
        for p in planets:
            rho_c = attitude @ (p.position_km - pos)
            if rho_c[2] <= 0:
                continue
            x = camera.focal_px * rho_c[0] / rho_c[2] + camera.width / 2.0
            y = camera.focal_px * rho_c[1] / rho_c[2] + camera.height / 2.0
            if camera.in_frame(x, y):
                in_frame = True
                break
        specs.append(
            ScenarioSpec(
                index=idx,
                sc_position_km=pos,
                pointing=pointing,
                planets=sources,
                planet_in_frame=in_frame,
            )
        )
    return specs


def _truncated_normal(rng: np.random.Generator, sigma: float, bound: float) -> float:
    while True:
        x = rng.normal(0.0, sigma)
        if abs(x) <= bound:
            return x


def run_campaign(
    n: int,
    sigma_r_list,
    master_seed: int,
    cfg: PipelineConfig,
    catalog: StarCatalog,
    db: PairDatabase,
    index: KVectorIndex,
    planets: tuple[PlanetBody, ...],
) -> CampaignReport:
    """Render and solve each scenario once, sweep sigma_r on the beacon
    stage, classify everything, and aggregate per-sigma_r statistics."""
    t_start = time.perf_counter()
    if cfg.render_mag_cutoff < cfg.mag_limit:
        raise ValueError(
            "render_mag_cutoff must be >= mag_limit: stars fainter than the "
            "onboard catalog are the natural spikes, not the other way around"
        )
    camera = cfg.camera()
    identify_cfg = cfg.identify_config()
    sigma_r_list = [float(s) for s in sigma_r_list]
    specs = sample_scenarios(n, master_seed, cfg, camera, planets)
    records: list[ScenarioRecord] = []

    for spec in specs:
        render_seed = np.random.SeedSequence((master_seed, spec.index, 1))
        ransac_seed = int(
            np.random.SeedSequence((master_seed, spec.index, 2)).generate_state(1)[0]
        )
        eta = np.random.default_rng(
            np.random.SeedSequence((master_seed, spec.index, 3))
        ).standard_normal(3)

        scene = SceneSpec(
            camera=camera,
            true_attitude=spec.pointing,
            sc_position_km=spec.sc_position_km,
            star_catalog=catalog,
            planets=spec.planets,
            render_mag_cutoff=cfg.render_mag_cutoff,
            background_mean_dn=cfg.background_mean_dn,
            background_sigma_dn=cfg.background_sigma_dn,
            photon_noise=cfg.photon_noise,
            seed=render_seed,
            anchor_mag=cfg.anchor_mag,
            anchor_peak_dn=cfg.anchor_peak_dn,
        )
        image, truth = render(scene)
        attitude_out = solve_attitude(
            image.data, camera, catalog, db, index, identify_cfg, cfg.ransac_config(ransac_seed)
        )
        planet = primary_planet(truth)

        for sigma_r in sigma_r_list:
            est_pos = spec.sc_position_km + sigma_r * eta
            beacons = detect_beacons(
                attitude_out, camera, est_pos, spec.planets, cfg.budget(sigma_r), cfg.ellipse_floor_px
            )
            outcome = classify_outcome(truth, attitude_out, beacons, camera, cfg)
            records.append(
                _make_record(spec, sigma_r, planet, attitude_out, beacons, outcome)
            )

    rows = [aggregate(records, s) for s in sigma_r_list]
    n_present = sum(1 for s in specs if s.planet_in_frame)
    return CampaignReport(
        rows=rows,
        records=records,
        n_scenarios=n,
        planet_present_fraction=n_present / n,
        elapsed_s=time.perf_counter() - t_start,
    )


def _make_record(
    spec: ScenarioSpec,
    sigma_r: float,
    planet: TruthObject | None,
    attitude_out: AttitudeOutput,
    beacons: dict[str, BeaconObservation],
    outcome: OutcomeLabel,
) -> ScenarioRecord:
    retry = attitude_out.retry
    kwargs = dict(
        scenario=spec.index,
        sigma_r_km=sigma_r,
        planet_present=spec.planet_in_frame,
        planet_name=planet.ident if planet else "",
        planet_visible=bool(planet.visible) if planet else False,
        truth_x=planet.x if planet else math.nan,
        truth_y=planet.y if planet else math.nan,
        n_centroids=len(retry.centroids) if retry else 0,
        n_matches=len(attitude_out.solution.inlier_centroids) if attitude_out.solution else 0,
        n_spikes=len(attitude_out.spike_centroids),
        iterations=retry.result.iterations_used if retry else 0,
        outcome=outcome,
    )
    if planet is not None:
        obs = beacons.get(planet.ident)
        if obs is not None and obs.prediction is not None:
            kwargs.update(
                expected_x=float(obs.prediction.expected_px[0]),
                expected_y=float(obs.prediction.expected_px[1]),
                ellipse_a=obs.prediction.ellipse.a,
                ellipse_b=obs.prediction.ellipse.b,
                ellipse_psi=obs.prediction.ellipse.psi,
            )
        if obs is not None and obs.selected_px is not None:
            kwargs.update(detected_x=float(obs.selected_px[0]), detected_y=float(obs.selected_px[1]))
    return ScenarioRecord(**kwargs)


def is_beacon_failure(rec: ScenarioRecord) -> bool:
    """Beacon-stage failure for an attitude-converged scenario."""
    if rec.planet_visible:
        return rec.outcome.label != "1.I"
    return rec.outcome.label == "2.III"


def aggregate(records: list[ScenarioRecord], sigma_r: float) -> CampaignRow:
    recs = [r for r in records if r.sigma_r_km == sigma_r]
    present = [r for r in recs if r.planet_present]
    n_present = len(present)
    converged = [r for r in present if r.outcome.attitude_status != "none"]
    right = [r for r in converged if r.outcome.attitude_status == "ok"]
    rot_errs = np.array([r.outcome.rotation_error_arcsec for r in right], dtype=float)
    sigma_rot = float(np.sqrt(np.mean(rot_errs**2))) if len(rot_errs) else math.nan

    n_conv = len(converged)
    fails = sum(1 for r in converged if is_beacon_failure(r))
    fails_right = sum(1 for r in right if is_beacon_failure(r))

    ok = [
        r
        for r in converged
        if r.outcome.label == "1.I" and not math.isnan(r.detected_x)
    ]
    if ok:
        errs = np.array(
            [[r.detected_x - r.truth_x, r.detected_y - r.truth_y] for r in ok]
        )
        mu = errs.mean(axis=0)
        centered = errs - mu
        p_err = centered.T @ centered / len(errs)
    else:
        mu = np.full(2, math.nan)
        p_err = np.full((2, 2), math.nan)

    def pct(k: int, d: int) -> float:
        return 100.0 * k / d if d else math.nan

    return CampaignRow(
        sigma_r_km=sigma_r,
        n_scenarios=len(recs),
        n_planet_present=n_present,
        n_converged=n_conv,
        sigma_err_rot_arcsec=sigma_rot,
        pct_wrong_attitude=pct(
            sum(1 for r in present if r.outcome.attitude_status == "wrong"), n_present
        ),
        pct_no_attitude=pct(
            sum(1 for r in present if r.outcome.attitude_status == "none"), n_present
        ),
        pct_beacon_fail=pct(fails, n_conv),
        pct_beacon_fail_right_att=pct(fails_right, n_conv),
        n_correct_detection=len(ok),
        mu_err_px=mu,
        p_err_px2=p_err,
        det_p_err=float(np.linalg.det(p_err)) if ok else math.nan,
    )


# ---------------------------------------------------------------------------
# Output files


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.9g}"
    if isinstance(x, bool):
        return str(int(x))
    return str(x)


CSV_HEADER = (
    "scenario,sigma_r_km,planet_present,planet_name,planet_visible,"
    "truth_x,truth_y,n_centroids,n_matches,n_spikes,iterations,"
    "label,att_status,rot_err_arcsec,pointing_err_arcsec,err_px,"
    "a_px,b_px,psi_rad,expected_x,expected_y,detected_x,detected_y"
)


def write_scenarios_csv(records: list[ScenarioRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            o = r.outcome
            row = [
                r.scenario, r.sigma_r_km, r.planet_present, r.planet_name, r.planet_visible,
                r.truth_x, r.truth_y, r.n_centroids, r.n_matches, r.n_spikes, r.iterations,
                o.label, o.attitude_status, o.rotation_error_arcsec, o.pointing_error_arcsec,
                o.projection_error_px,
                r.ellipse_a, r.ellipse_b, r.ellipse_psi, r.expected_x, r.expected_y,
                r.detected_x, r.detected_y,
            ]
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def write_pdf_errors_csv(records: list[ScenarioRecord], path) -> None:
    """Projection-error samples of correct detections, for histograms."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("sigma_r_km,err_x_px,err_y_px\n")
        for r in records:
            if r.outcome.label == "1.I" and not math.isnan(r.detected_x):
                fh.write(
                    f"{_fmt(r.sigma_r_km)},{_fmt(r.detected_x - r.truth_x)},"
                    f"{_fmt(r.detected_y - r.truth_y)}\n"
                )


def write_report(report: CampaignReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("Monte Carlo campaign report\n")
        fh.write(f"scenarios per sigma_r: {report.n_scenarios}\n")
        fh.write(
            f"planet in frame: {report.planet_present_fraction * 100:.2f}% of scenarios\n"
        )
        fh.write(f"elapsed: {report.elapsed_s:.1f} s\n\n")
        header = (
            f"{'sigma_r[km]':>12} {'sigErrRot[as]':>14} {'wrongAtt%':>10} "
            f"{'noAtt%':>8} {'beaconFail%':>12} {'failRightAtt%':>14} {'n1.I':>6}"
        )
        fh.write(header + "\n")
        for row in report.rows:
            fh.write(
                f"{row.sigma_r_km:>12.6g} {row.sigma_err_rot_arcsec:>14.4g} "
                f"{row.pct_wrong_attitude:>10.4g} {row.pct_no_attitude:>8.4g} "
                f"{row.pct_beacon_fail:>12.4g} {row.pct_beacon_fail_right_att:>14.4g} "
                f"{row.n_correct_detection:>6d}\n"
            )
        fh.write("\nprojection error statistics over correct detections\n")
        for row in report.rows:
            mu = row.mu_err_px
            p = row.p_err_px2
            fh.write(
                f"sigma_r {row.sigma_r_km:.6g} km: mu_err [{_fmt(float(mu[0]))}, {_fmt(float(mu[1]))}] px, "
                f"P_err [[{_fmt(float(p[0, 0]))}, {_fmt(float(p[0, 1]))}], "
                f"[{_fmt(float(p[1, 0]))}, {_fmt(float(p[1, 1]))}]] px^2, "
                f"det {_fmt(row.det_p_err)} px^4\n"
            )
