"""Wildfire smoke-index instrument over fire and tract records.

For each tract the raw index averages ``size * m / distance^q`` over the
fire season, with ``q = 2`` (inverse-square variants) or ``q = 1``
(inverse-linear), an optional west-of weighting ``m = 1 + w`` for fires west
of the tract, and great-circle distances clamped below to guard the
singularity at coincident points.  A closed threshold turns the raw index
into a binary instrument.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .exceptions import DataFormatError, DomainError

__all__ = [
    "FireRecord",
    "SmokeIndexConfig",
    "ThresholdedInstrument",
    "TractRecord",
    "VARIANTS",
    "haversine_km",
    "read_fires_csv",
    "read_tracts_csv",
    "smoke_index",
    "threshold_instrument",
    "write_instrument_csv",
]

EARTH_RADIUS_KM = 6371.0

VARIANTS = ("inverse-square", "inverse-square-west-weighted", "inverse-linear")


def _check_coords(lat: float, lon: float, label: str) -> None:
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lon <= 180.0):
        raise DomainError(f"{label}: invalid coordinates ({lat}, {lon})")


@dataclass(frozen=True)
class FireRecord:
    id: str
    latitude: float
    longitude: float
    size_acres: float

    def __post_init__(self) -> None:
        _check_coords(self.latitude, self.longitude, f"fire {self.id}")
        if not self.size_acres > 0:
            raise DomainError(f"fire {self.id}: size must be positive")


@dataclass(frozen=True)
class TractRecord:
    id: str
    latitude: float
    longitude: float

    def __post_init__(self) -> None:
        _check_coords(self.latitude, self.longitude, f"tract {self.id}")


@dataclass(frozen=True)
class SmokeIndexConfig:
    """Instrument formula variant and its parameters.

    ``threshold`` may be omitted only for the continuous inverse-linear
    variant; ``west_weight`` applies only to the west-weighted variant.
    """

    variant: str = "inverse-square"
    threshold: float | None = None
    west_weight: float = 0.0
    min_size_acres: float = 100.0
    min_distance_km: float = 1.0

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise DomainError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.threshold is None and self.variant != "inverse-linear":
            raise DomainError(f"variant {self.variant!r} requires a threshold")
        if self.west_weight < 0:
            raise DomainError("west_weight must be non-negative")
        if self.west_weight != 0.0 and self.variant != "inverse-square-west-weighted":
            raise DomainError("west_weight applies only to the west-weighted variant")
        if not self.min_distance_km > 0:
            raise DomainError("min_distance_km must be positive")

    @property
    def exponent(self) -> int:
        return 1 if self.variant == "inverse-linear" else 2


@dataclass(frozen=True)
class ThresholdedInstrument:
    """Binary instrument with its 0/1 split report."""

    z: np.ndarray
    threshold: float
    fraction_high: float
    fraction_low: float


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance in km (Earth radius 6371.0), vectorized."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(a, dtype=float)) for a in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def smoke_index(
    tracts: list[TractRecord],
    fires: list[FireRecord],
    cfg: SmokeIndexConfig,
) -> np.ndarray:
    """Raw smoke indices ``Z*`` for every tract.

    Fires below ``min_size_acres`` are dropped first; at least one must
    remain.  Distances are clamped below at ``min_distance_km``.
    """
    kept = [f for f in fires if f.size_acres >= cfg.min_size_acres]
    if not kept:
        raise DomainError(
            f"no fires of at least {cfg.min_size_acres} acres; cannot build the index"
        )
    if not tracts:
        raise DomainError("no tracts supplied")
    t_lat = np.array([t.latitude for t in tracts])
    t_lon = np.array([t.longitude for t in tracts])
    f_lat = np.array([f.latitude for f in kept])
    f_lon = np.array([f.longitude for f in kept])
    sizes = np.array([f.size_acres for f in kept])
    if cfg.variant == "inverse-square-west-weighted":
        # "west of" means smaller longitude; reject antimeridian-straddling
        # inputs since that convention only makes sense for CONUS data
        lons = np.concatenate([t_lon, f_lon])
        if lons.max() - lons.min() > 180.0:
            raise DomainError(
                "west-weighted variant does not support longitudes straddling the antimeridian"
            )
    dist = haversine_km(t_lat[:, None], t_lon[:, None], f_lat[None, :], f_lon[None, :])
    dist = np.maximum(dist, cfg.min_distance_km)
    weights = np.ones_like(dist)
    if cfg.variant == "inverse-square-west-weighted":
        weights = 1.0 + cfg.west_weight * (f_lon[None, :] < t_lon[:, None])
    return np.mean(sizes[None, :] * weights / dist ** cfg.exponent, axis=1)


def threshold_instrument(zstar: np.ndarray, c: float) -> ThresholdedInstrument:
    """Closed-threshold binary instrument ``Z_i = 1{Z*_i >= c}`` with split report."""
    zstar = np.asarray(zstar, dtype=float).ravel()
    z = (zstar >= c).astype(int)
    frac = float(z.mean()) if z.size else float("nan")
    return ThresholdedInstrument(z=z, threshold=float(c), fraction_high=frac, fraction_low=1.0 - frac)


# ---------------------------------------------------------------------------
# CSV schemas: fires `id,lat,lon,size_acres`; tracts `id,lat,lon`;
# output `id,z_star,z`.
# ---------------------------------------------------------------------------


def _read_records(path, expected_header: list[str]):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if header != expected_header:
            raise DataFormatError(f"{path}: expected header {expected_header}, got {header}")
        rows = [row for row in reader if row]
    return rows


def read_fires_csv(path) -> list[FireRecord]:
    rows = _read_records(path, ["id", "lat", "lon", "size_acres"])
    out = []
    for row in rows:
        try:
            out.append(FireRecord(row[0], float(row[1]), float(row[2]), float(row[3])))
        except (IndexError, ValueError, DomainError) as exc:
            raise DataFormatError(f"{path}: bad fire row {row}: {exc}") from None
    return out


def read_tracts_csv(path) -> list[TractRecord]:
    rows = _read_records(path, ["id", "lat", "lon"])
    out = []
    for row in rows:
        try:
            out.append(TractRecord(row[0], float(row[1]), float(row[2])))
        except (IndexError, ValueError, DomainError) as exc:
            raise DataFormatError(f"{path}: bad tract row {row}: {exc}") from None
    return out


def instrument_csv_string(ids: list[str], zstar: np.ndarray, z: np.ndarray | None) -> str:
    """Output CSV; for the continuous variant the z column repeats z_star."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", "z_star", "z"])
    for i, ident in enumerate(ids):
        zi = repr(float(zstar[i])) if z is None else str(int(z[i]))
        writer.writerow([ident, repr(float(zstar[i])), zi])
    return buf.getvalue()


def write_instrument_csv(path, ids: list[str], zstar: np.ndarray, z: np.ndarray | None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(instrument_csv_string(ids, zstar, z))
