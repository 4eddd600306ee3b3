"""Search-less star identification with reference-star confirmation.

For every pair of observed centroids the measured interstar angle is
turned into a range query against the onboard pair database.  A
candidate assignment (centroid i -> star A, centroid j -> star B) is
confirmed by a third centroid r when the candidate partner sets of the
two legs (i, r) and (j, r) share exactly one catalog star; an ambiguous
intersection (two or more shared stars) confirms nothing.  Confirmed
triangles vote for their three (centroid, star) assignments and each
centroid keeps the star with the unique maximal vote count, requiring
at least two votes.  Centroids left without an assignment are spikes.

When identification fails, the threshold tuning parameter is raised and
the whole chain (thresholding, centroiding, matching) reruns, until the
asterism is recognized or fewer than three centroids survive.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace

import numpy as np

from .centroiding import Centroid, find_centroids
from .geometry import CameraModel, angular_separation, los_from_pixel
from .star_catalog import KVectorIndex, PairDatabase, StarCatalog, kvector_range_query

MIN_ASTERISM = 3


@dataclass(frozen=True)
class StarMatch:
    centroid_index: int
    star_id: int
    los_camera: np.ndarray  # unit vector in C from the measured centroid
    los_inertial: np.ndarray  # catalog unit vector in N


@dataclass(frozen=True)
class MatchResult:
    matches: tuple[StarMatch, ...]
    spikes: tuple[int, ...]  # centroid indices with no accepted assignment
    iterations_used: int = 1


@dataclass(frozen=True)
class IdentifyConfig:
    epsilon_rad: float
    threshold_t: float = 20.0
    threshold_t_step: float = 5.0
    max_iterations: int = 5


@dataclass(frozen=True)
class RetryResult:
    result: MatchResult
    threshold: float
    centroids: tuple[Centroid, ...]


def _pair_partner_maps(
    los: np.ndarray,
    db: PairDatabase,
    index: KVectorIndex,
    epsilon_rad: float,
) -> dict[tuple[int, int], dict[int, set[int]]]:
    """For each centroid pair, map candidate star -> set of partner stars."""
    n = len(los)
    maps: dict[tuple[int, int], dict[int, set[int]]] = {}
    for i in range(n):
        for j in range(i + 1, n):
            gamma = angular_separation(los[i], los[j])
            rows = kvector_range_query(index, db, gamma, epsilon_rad)
            partners: dict[int, set[int]] = defaultdict(set)
            for a, b in zip(db.star_i[rows].tolist(), db.star_j[rows].tolist()):
                partners[a].add(b)
                partners[b].add(a)
            maps[(i, j)] = partners
    return maps


def identify_stars(
    centroids,
    camera: CameraModel,
    catalog: StarCatalog,
    db: PairDatabase,
    index: KVectorIndex,
    epsilon_rad: float,
) -> MatchResult | None:
    """Match centroids to catalog stars; None when no asterism is found.

    The catalog supplies the inertial directions of the matched ids; it
    must contain every star referenced by the pair database.
    """
    n = len(centroids)
    if n < MIN_ASTERISM:
        return None
    los = np.array([los_from_pixel(camera, (c.x, c.y)) for c in centroids])
    maps = _pair_partner_maps(los, db, index, epsilon_rad)

    votes: dict[tuple[int, int], int] = defaultdict(int)
    empty: dict[int, set[int]] = {}
    for i in range(n):
        for j in range(i + 1, n):
            partners_ij = maps[(i, j)]
            if not partners_ij:
                continue
            candidates = [
                (a, sorted(bs)) for a, bs in sorted(partners_ij.items())
            ]
            for r in range(n):
                if r == i or r == j:
                    continue
                m_ir = maps[(i, r) if i < r else (r, i)]
                m_jr = maps[(j, r) if j < r else (r, j)]
                if not m_ir or not m_jr:
                    continue
                for a, bs in candidates:
                    ref_a = m_ir.get(a)
                    if not ref_a:
                        continue
                    for b in bs:
                        ref_b = m_jr.get(b)
                        if not ref_b:
                            continue
                        common = ref_a & ref_b
                        if len(common) == 1:
                            c = next(iter(common))
                            votes[(i, a)] += 1
                            votes[(j, b)] += 1
                            votes[(r, c)] += 1

    assignment = _resolve_votes(votes, n)
    matches = tuple(
        StarMatch(
            centroid_index=i,
            star_id=star,
            los_camera=los[i],
            los_inertial=catalog.unit_vector_of(star),
        )
        for i, star in sorted(assignment.items())
    )
    if len(matches) < MIN_ASTERISM:
        return None
    matched = set(assignment)
    spikes = tuple(i for i in range(n) if i not in matched)
    return MatchResult(matches=matches, spikes=spikes)


def _resolve_votes(votes: dict[tuple[int, int], int], n_centroids: int) -> dict[int, int]:
    """Per-centroid unique argmax with >= 2 votes, then global id uniqueness.

    A tie for a centroid's best star drops the centroid; a star claimed
    by several centroids stays with the highest vote count, ties drop
    all claimants.
    """
    by_centroid: dict[int, dict[int, int]] = defaultdict(dict)
    for (i, star), v in votes.items():
        by_centroid[i][star] = v
    best: dict[int, tuple[int, int]] = {}
    for i, options in by_centroid.items():
        top = max(options.values())
        if top < 2:
            continue
        winners = [s for s, v in options.items() if v == top]
        if len(winners) != 1:
            continue
        best[i] = (winners[0], top)

    by_star: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for i, (star, v) in best.items():
        by_star[star].append((v, i))
    assignment: dict[int, int] = {}
    for star, claims in by_star.items():
        claims.sort(reverse=True)
        if len(claims) > 1 and claims[0][0] == claims[1][0]:
            continue
        assignment[claims[0][1]] = star
    return assignment


def identify_with_retry(
    image: np.ndarray,
    camera: CameraModel,
    catalog: StarCatalog,
    db: PairDatabase,
    index: KVectorIndex,
    config: IdentifyConfig,
) -> RetryResult | None:
    """Run centroiding + identification, escalating the threshold on failure.

    Stops as soon as an asterism is recognized, when fewer than three
    centroids remain, or after ``max_iterations`` attempts.
    """
    for iteration in range(config.max_iterations):
        t = config.threshold_t + iteration * config.threshold_t_step
        centroids, threshold = find_centroids(image, t)
        if len(centroids) < MIN_ASTERISM:
            return None
        result = identify_stars(centroids, camera, catalog, db, index, config.epsilon_rad)
        if result is not None:
            return RetryResult(
                result=replace(result, iterations_used=iteration + 1),
                threshold=threshold,
                centroids=tuple(centroids),
            )
    return None
