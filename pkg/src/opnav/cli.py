"""Command-line entry points.

Subcommands:
  build-catalog   raw star list -> onboard pair database artifact
  synth-sky       deterministic synthetic catalog + ephemeris files
  render          scene description -> PGM image + ground-truth sidecar
  process         run the pipeline on one image
  montecarlo      the full campaign with a sigma_r sweep

Exit code 0 on success; any failure prints a one-line reason to stderr
and exits nonzero.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import skysim
from .config import PipelineConfig, load_config, save_config
from .ephemeris import EphemerisEntry, EphemerisTable, load_ephemeris, save_ephemeris
from .geometry import PointingAngles
from .harness import (
    detect_beacons,
    run_campaign,
    solve_attitude,
    write_pdf_errors_csv,
    write_report,
    write_scenarios_csv,
)
from .renderer import PlanetSource, SceneSpec, read_pgm, render, write_pgm, write_truth
from .skysim import AU_KM, PlanetBody
from .star_catalog import (
    build_kvector,
    build_pair_database,
    load_catalog,
    load_pair_database,
    save_catalog,
    save_pair_database,
)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # one-line reason, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opnav", description=__doc__)
    sub = parser.add_subparsers(required=True)

    p = sub.add_parser("build-catalog", help="build the onboard pair database")
    p.add_argument("--in", dest="raw", required=True, help="raw catalog (id,ra_deg,dec_deg,vmag)")
    p.add_argument("--out", required=True, help="output .npz artifact")
    p.add_argument("--mlim", type=float, default=5.5)
    p.add_argument("--gamma-max-deg", type=float, default=35.0)
    p.set_defaults(func=_cmd_build_catalog)

    p = sub.add_parser("synth-sky", help="write a synthetic catalog and ephemeris")
    p.add_argument("--catalog-out", required=True)
    p.add_argument("--ephemeris-out")
    p.add_argument("--config")
    p.set_defaults(func=_cmd_synth_sky)

    p = sub.add_parser("render", help="render a scene file to PGM + truth sidecar")
    p.add_argument("--scene", required=True, help="key=value scene description")
    p.add_argument("--out", required=True, help="output PGM path")
    p.add_argument("--truth", required=True, help="output ground-truth sidecar path")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("process", help="run the pipeline on one image")
    p.add_argument("--image", required=True)
    p.add_argument("--db", required=True, help="pair database artifact from build-catalog")
    p.add_argument("--config", required=True)
    p.add_argument("--catalog", required=True, help="raw catalog (inertial directions)")
    p.add_argument("--ephemeris", help="beacon table; omit to skip beacon detection")
    p.add_argument("--epoch", help="epoch tag to select (default: first in file)")
    p.add_argument("--sc-pos", help="estimated spacecraft position 'x,y,z' in km")
    p.add_argument("--sigma-r", type=float, default=1e5, help="position uncertainty, km")
    p.set_defaults(func=_cmd_process)

    p = sub.add_parser("montecarlo", help="Monte Carlo campaign with a sigma_r sweep")
    p.add_argument("--n", type=int, required=True, help="scenarios per sigma_r")
    p.add_argument("--sigma-r", required=True, help="comma-separated sigma_r list in km")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")
    p.add_argument("--catalog", help="raw catalog; omit for the synthetic sky")
    p.add_argument("--ephemeris", help="planet table; omit for the built-in snapshot")
    p.add_argument("--epoch")
    p.set_defaults(func=_cmd_montecarlo)
    return parser


def _cmd_build_catalog(args) -> int:
    catalog = load_catalog(args.raw)
    db = build_pair_database(catalog, args.mlim, math.radians(args.gamma_max_deg))
    index = build_kvector(db)
    save_pair_database(db, index, args.out)
    print(f"{len(catalog)} stars -> {len(db)} pairs -> {args.out}")
    return 0


def _cmd_synth_sky(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    catalog = skysim.synthetic_catalog(
        cfg.sky_star_count, cfg.sky_seed, cfg.sky_mag_bright, cfg.sky_mag_faint, cfg.sky_mag_slope
    )
    save_catalog(catalog, args.catalog_out)
    print(f"wrote {len(catalog)} stars to {args.catalog_out}")
    if args.ephemeris_out:
        entries = tuple(
            EphemerisEntry(
                name=p.name,
                epoch="t0",
                position_km=p.position_km,
                apparent_magnitude=p.mag_at_1au,
            )
            for p in skysim.solar_system()
        )
        save_ephemeris(EphemerisTable(entries=entries), args.ephemeris_out)
        print(f"wrote {len(entries)} beacons to {args.ephemeris_out}")
    return 0


def _parse_kv_file(path) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path} line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def _cmd_render(args) -> int:
    kv = _parse_kv_file(args.scene)
    cfg = load_config(kv["config"]) if "config" in kv else PipelineConfig()
    catalog = load_catalog(kv["catalog"])
    planets: tuple[PlanetSource, ...] = ()
    if "ephemeris" in kv:
        table = load_ephemeris(kv["ephemeris"])
        epoch = kv.get("epoch", table.epochs[0] if table.epochs else "")
        planets = tuple(
            PlanetSource(e.name, e.position_km, e.apparent_magnitude)
            for e in table.at_epoch(epoch)
        )
    scene = SceneSpec(
        camera=cfg.camera(),
        true_attitude=PointingAngles(
            alpha=float(kv["alpha_rad"]), delta=float(kv["delta_rad"]), phi=float(kv["phi_rad"])
        ),
        sc_position_km=np.array(
            [float(kv.get("sc_x_km", 0)), float(kv.get("sc_y_km", 0)), float(kv.get("sc_z_km", 0))]
        ),
        star_catalog=catalog,
        planets=planets,
        render_mag_cutoff=float(kv.get("mag_cutoff", cfg.render_mag_cutoff)),
        background_mean_dn=cfg.background_mean_dn,
        background_sigma_dn=cfg.background_sigma_dn,
        photon_noise=cfg.photon_noise,
        seed=int(kv.get("seed", 0)),
        anchor_mag=cfg.anchor_mag,
        anchor_peak_dn=cfg.anchor_peak_dn,
    )
    image, truth = render(scene)
    write_pgm(image, args.out)
    write_truth(truth, args.truth)
    n_vis = sum(1 for o in truth.objects if o.visible)
    print(f"rendered {len(truth.objects)} objects ({n_vis} visible) -> {args.out}")
    return 0


def _cmd_process(args) -> int:
    cfg = load_config(args.config)
    camera = cfg.camera()
    catalog = load_catalog(args.catalog)
    db, index = load_pair_database(args.db)
    image = read_pgm(args.image)
    attitude_out = solve_attitude(
        image.data, camera, catalog, db, index, cfg.identify_config(), cfg.ransac_config()
    )
    if attitude_out.solution is None:
        print("no attitude solution", file=sys.stderr)
        return 3
    sol = attitude_out.solution
    retry = attitude_out.retry
    print(f"threshold={retry.threshold:.3f} iterations={retry.result.iterations_used}")
    for m in retry.result.matches:
        tag = "outlier" if m.centroid_index in sol.outlier_centroids else "inlier"
        c = retry.centroids[m.centroid_index]
        print(f"match centroid {m.centroid_index} ({c.x:.2f},{c.y:.2f}) -> star {m.star_id} [{tag}]")
    q = sol.quaternion.q
    print(f"attitude quaternion {q[0]:.9f} {q[1]:.9f} {q[2]:.9f} {q[3]:.9f}")
    print(f"spikes: {list(attitude_out.spike_centroids)}")

    if args.ephemeris:
        table = load_ephemeris(args.ephemeris)
        epoch = args.epoch or (table.epochs[0] if table.epochs else "")
        planets = tuple(
            PlanetSource(e.name, e.position_km, e.apparent_magnitude)
            for e in table.at_epoch(epoch)
        )
        if args.sc_pos is None:
            raise ValueError("--sc-pos is required for beacon detection")
        est = np.array([float(x) for x in args.sc_pos.split(",")])
        beacons = detect_beacons(
            attitude_out, camera, est, planets, cfg.budget(args.sigma_r), cfg.ellipse_floor_px
        )
        for name, obs in beacons.items():
            if obs.prediction is None:
                print(f"beacon {name}: behind camera")
                continue
            e = obs.prediction.ellipse
            ex, ey = obs.prediction.expected_px
            line = f"beacon {name}: {e.a:.6g},{e.b:.6g},{e.psi:.6g},{ex:.6g},{ey:.6g}"
            if obs.spike_index is not None:
                line += f" detected=({obs.selected_px[0]:.3f},{obs.selected_px[1]:.3f})"
            else:
                line += " detected=none"
            print(line)
    return 0


def _cmd_montecarlo(args) -> int:
    cfg = load_config(args.config) if args.config else PipelineConfig()
    if args.catalog:
        catalog = load_catalog(args.catalog)
    else:
        catalog = skysim.synthetic_catalog(
            cfg.sky_star_count, cfg.sky_seed, cfg.sky_mag_bright, cfg.sky_mag_faint, cfg.sky_mag_slope
        )
    if args.ephemeris:
        table = load_ephemeris(args.ephemeris)
        epoch = args.epoch or (table.epochs[0] if table.epochs else "")
        planets = tuple(
            PlanetBody(e.name, e.position_km, e.apparent_magnitude)
            for e in table.at_epoch(epoch)
        )
    else:
        planets = skysim.solar_system()
    sigma_r = [float(s) for s in args.sigma_r.split(",") if s]
    if not sigma_r:
        raise ValueError("empty --sigma-r list")
    db = build_pair_database(catalog, cfg.mag_limit, cfg.max_pair_angle_rad)
    index = build_kvector(db)

    report = run_campaign(args.n, sigma_r, args.seed, cfg, catalog, db, index, planets)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_scenarios_csv(report.records, out / "scenarios.csv")
    write_pdf_errors_csv(report.records, out / "pdf_errors.csv")
    write_report(report, out / "report.txt")
    save_config(cfg, out / "config.used")
    print((out / "report.txt").read_text(), end="")
    return 0


if __name__ == "__main__":
    sys.exit(main())
