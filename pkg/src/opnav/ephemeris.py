"""Planet position/brightness snapshots for scene generation and the
expected-projection step.

Each entry is one beacon at one instant; no propagation or interpolation
happens here.  File format: ``name,epoch,x_km,y_km,z_km,app_mag`` per
line, ``#`` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EphemerisError(ValueError):
    pass


@dataclass(frozen=True)
class EphemerisEntry:
    name: str
    epoch: str
    position_km: np.ndarray
    apparent_magnitude: float

    def __post_init__(self):
        pos = np.asarray(self.position_km, dtype=float)
        if pos.shape != (3,) or not np.all(np.isfinite(pos)):
            raise EphemerisError(f"bad position for {self.name}: {self.position_km}")
        pos.setflags(write=False)
        object.__setattr__(self, "position_km", pos)


@dataclass(frozen=True)
class EphemerisTable:
    entries: tuple[EphemerisEntry, ...]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.name, e.epoch)
            if key in seen:
                raise EphemerisError(f"duplicate entry {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.entries)

    def at_epoch(self, epoch: str) -> tuple[EphemerisEntry, ...]:
        return tuple(e for e in self.entries if e.epoch == epoch)

    @property
    def epochs(self) -> tuple[str, ...]:
        out = []
        for e in self.entries:
            if e.epoch not in out:
                out.append(e.epoch)
        return tuple(out)


def load_ephemeris(path) -> EphemerisTable:
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 6:
                raise EphemerisError(f"line {lineno}: expected 6 fields, got {len(parts)}")
            try:
                entries.append(
                    EphemerisEntry(
                        name=parts[0].strip(),
                        epoch=parts[1].strip(),
                        position_km=np.array([float(parts[2]), float(parts[3]), float(parts[4])]),
                        apparent_magnitude=float(parts[5]),
                    )
                )
            except ValueError as exc:
                if isinstance(exc, EphemerisError):
                    raise
                raise EphemerisError(f"line {lineno}: unparseable field ({exc})") from None
    return EphemerisTable(entries=tuple(entries))


def save_ephemeris(table: EphemerisTable, path) -> None:
    """Write entries in order; float repr keeps the round trip bit-exact."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# name,epoch,x_km,y_km,z_km,app_mag\n")
        for e in table.entries:
            x, y, z = (float(v) for v in e.position_km)
            fh.write(f"{e.name},{e.epoch},{x!r},{y!r},{z!r},{float(e.apparent_magnitude)!r}\n")
