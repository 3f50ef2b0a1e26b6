"""Tower-level rate aggregation, k-nearest IDW interpolation, map export.

Predicted and actual surfaces run through the identical interpolation path
so they stay comparable cell by cell.  All distances are haversine km.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geo import haversine_km, unit_vectors
from .ingest import Tower


@dataclass
class TowerEstimate:
    tower_id: str
    longitude: float
    latitude: float
    subscriber_count: int
    predicted_rate: Optional[float] = None  # None when suppressed (count < min_count)
    actual_rate: Optional[float] = None


def aggregate_towers(
    predictions: Mapping[str, float],
    illiterate: Mapping[str, bool],
    home_towers: Mapping[str, str],
    towers: Mapping[str, Tower],
    min_count: int = 5,
) -> list[TowerEstimate]:
    """Average predicted probabilities and actual label rates per home tower.

    Every scored subscriber must map to a tower present in the tower file.
    Towers with fewer than min_count subscribers are suppressed: the count
    is kept but rates are withheld.  Every tower appears exactly once, so
    counts sum to the number of scored subscribers.
    """
    sums: dict[str, float] = {tid: 0.0 for tid in towers}
    pos: dict[str, int] = {tid: 0 for tid in towers}
    counts: dict[str, int] = {tid: 0 for tid in towers}
    for sid in sorted(predictions):
        tid = home_towers.get(sid)
        if tid is None:
            raise ValueError(f"subscriber {sid!r} has no home tower")
        if tid not in towers:
            raise ValueError(f"home tower {tid!r} missing from tower file")
        counts[tid] += 1
        sums[tid] += predictions[sid]
        if illiterate[sid]:
            pos[tid] += 1
    out = []
    for tid in sorted(towers):
        t = towers[tid]
        c = counts[tid]
        suppressed = c < min_count
        out.append(TowerEstimate(
            tower_id=tid,
            longitude=t.longitude,
            latitude=t.latitude,
            subscriber_count=c,
            predicted_rate=None if suppressed else sums[tid] / c,
            actual_rate=None if suppressed else pos[tid] / c,
        ))
    return out


@dataclass(frozen=True)
class GridSpec:
    lon_min: float
    lat_min: float
    lon_max: float
    lat_max: float
    cell_size_deg: float
    power: float = 2.0
    k_neighbors: int = 8
    exact_radius_km: float = 0.001
    max_distance_km: Optional[float] = None

    def __post_init__(self):
        if self.lon_min >= self.lon_max or self.lat_min >= self.lat_max:
            raise ValueError("degenerate bounding box")
        if self.cell_size_deg <= 0:
            raise ValueError("cell size must be positive")
        if self.power <= 0:
            raise ValueError("IDW power must be positive")
        if self.k_neighbors < 1:
            raise ValueError("k_neighbors must be at least 1")

    @property
    def n_cols(self) -> int:
        return max(1, math.ceil((self.lon_max - self.lon_min) / self.cell_size_deg))

    @property
    def n_rows(self) -> int:
        return max(1, math.ceil((self.lat_max - self.lat_min) / self.cell_size_deg))

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        lon = self.lon_min + (np.arange(self.n_cols) + 0.5) * self.cell_size_deg
        lat = self.lat_min + (np.arange(self.n_rows) + 0.5) * self.cell_size_deg
        return lon, lat

    @classmethod
    def from_towers(
        cls,
        towers: Sequence[Tower],
        cell_size_deg: Optional[float] = None,
        margin_deg: float = 0.01,
        **kwargs,
    ) -> "GridSpec":
        lons = [t.longitude for t in towers]
        lats = [t.latitude for t in towers]
        lon_min, lon_max = min(lons) - margin_deg, max(lons) + margin_deg
        lat_min, lat_max = min(lats) - margin_deg, max(lats) + margin_deg
        if cell_size_deg is None:
            cell_size_deg = max(lon_max - lon_min, lat_max - lat_min) / 80.0
        return cls(lon_min, lat_min, lon_max, lat_max, cell_size_deg, **kwargs)

    def to_dict(self) -> dict:
        return {
            "lon_min": self.lon_min,
            "lat_min": self.lat_min,
            "lon_max": self.lon_max,
            "lat_max": self.lat_max,
            "cell_size_deg": self.cell_size_deg,
            "power": self.power,
            "k_neighbors": self.k_neighbors,
            "exact_radius_km": self.exact_radius_km,
            "max_distance_km": self.max_distance_km,
        }


@dataclass
class Surface:
    grid: GridSpec
    values: np.ndarray  # (n_rows, n_cols); NaN where no_data
    no_data: np.ndarray  # bool mask


def idw_interpolate(
    estimates: Sequence[TowerEstimate],
    grid: GridSpec,
    value_field: str = "predicted_rate",
) -> Surface:
    """Inverse-distance-weighted surface over the k nearest towers per cell.

    Cells within exact_radius_km of a tower take that tower's value exactly;
    cells whose neighbors all lie beyond max_distance_km become no-data.
    Suppressed towers (value None) do not contribute.
    """
    points = [
        (e.longitude, e.latitude, getattr(e, value_field))
        for e in estimates
        if getattr(e, value_field) is not None
    ]
    if not points:
        raise ValueError("no unsuppressed towers to interpolate")
    lons = np.array([p[0] for p in points])
    lats = np.array([p[1] for p in points])
    vals = np.array([p[2] for p in points])

    tree = cKDTree(unit_vectors(lons, lats))
    cell_lon, cell_lat = grid.cell_centers()
    grid_lon, grid_lat = np.meshgrid(cell_lon, cell_lat)
    q_lon = grid_lon.ravel()
    q_lat = grid_lat.ravel()
    k = min(grid.k_neighbors, len(points))
    _, idx = tree.query(unit_vectors(q_lon, q_lat), k=k)
    idx = idx.reshape(len(q_lon), k)

    d = haversine_km(q_lon[:, None], q_lat[:, None], lons[idx], lats[idx])
    v = vals[idx]
    if grid.max_distance_km is not None:
        in_range = d <= grid.max_distance_km
    else:
        in_range = np.ones_like(d, dtype=bool)

    out = np.full(len(q_lon), np.nan)
    no_data = ~in_range.any(axis=1)
    nearest = np.argmin(d, axis=1)
    nearest_d = d[np.arange(len(d)), nearest]
    exact = (nearest_d < grid.exact_radius_km) & ~no_data
    out[exact] = v[np.arange(len(d)), nearest][exact]

    rest = ~exact & ~no_data
    if rest.any():
        with np.errstate(divide="ignore"):
            w = np.where(in_range[rest], 1.0 / d[rest] ** grid.power, 0.0)
        wn = w / w.sum(axis=1, keepdims=True)
        out[rest] = (wn * v[rest]).sum(axis=1)

    shape = (grid.n_rows, grid.n_cols)
    return Surface(grid=grid, values=out.reshape(shape), no_data=no_data.reshape(shape))


def export_surface(
    surface: Surface,
    path: str | Path,
    fmt: str = "geojson",
    provenance: Optional[dict] = None,
) -> None:
    """GeoJSON polygons per cell, or CSV rows (lon_center, lat_center, rate)."""
    grid = surface.grid
    cell = grid.cell_size_deg
    if fmt == "geojson":
        features = []
        for r in range(grid.n_rows):
            for c in range(grid.n_cols):
                lon0 = grid.lon_min + c * cell
                lat0 = grid.lat_min + r * cell
                ring = [
                    [lon0, lat0],
                    [lon0 + cell, lat0],
                    [lon0 + cell, lat0 + cell],
                    [lon0, lat0 + cell],
                    [lon0, lat0],
                ]
                props: dict = {"no_data": bool(surface.no_data[r, c])}
                if not surface.no_data[r, c]:
                    props["rate"] = float(surface.values[r, c])
                features.append({
                    "type": "Feature",
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                    "properties": props,
                })
        doc = {"type": "FeatureCollection", "features": features}
        if provenance is not None:
            doc["provenance"] = provenance
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "csv":
        cell_lon, cell_lat = grid.cell_centers()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["lon_center", "lat_center", "rate", "no_data"])
            for r in range(grid.n_rows):
                for c in range(grid.n_cols):
                    nd = bool(surface.no_data[r, c])
                    writer.writerow([
                        repr(float(cell_lon[c])),
                        repr(float(cell_lat[r])),
                        "" if nd else repr(float(surface.values[r, c])),
                        "1" if nd else "0",
                    ])
    else:
        raise ValueError(f"unknown surface format {fmt!r}")


@dataclass
class SurfaceComparison:
    n_valid: int
    mean_abs_error: float
    p90_abs_error: float
    correlation: Optional[float]  # None when a surface is constant

    def to_dict(self) -> dict:
        return {
            "n_valid": self.n_valid,
            "mean_abs_error": self.mean_abs_error,
            "p90_abs_error": self.p90_abs_error,
            "correlation": self.correlation,
        }


def compare_surfaces(a: Surface, b: Surface) -> SurfaceComparison:
    if a.grid != b.grid:
        raise ValueError("surfaces use different grids")
    valid = ~a.no_data & ~b.no_data
    if not valid.any():
        raise ValueError("no jointly valid cells")
    va = a.values[valid]
    vb = b.values[valid]
    err = np.abs(va - vb)
    correlation: Optional[float] = None
    if va.std() > 0 and vb.std() > 0:
        correlation = float(np.corrcoef(va, vb)[0, 1])
    return SurfaceComparison(
        n_valid=int(valid.sum()),
        mean_abs_error=float(err.mean()),
        p90_abs_error=float(np.percentile(err, 90)),
        correlation=correlation,
    )


def write_tower_estimates_csv(path: str | Path, estimates: Sequence[TowerEstimate]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([
            "tower_id", "longitude", "latitude", "subscriber_count",
            "predicted_rate", "actual_rate",
        ])
        for e in estimates:
            writer.writerow([
                e.tower_id,
                repr(e.longitude),
                repr(e.latitude),
                str(e.subscriber_count),
                "" if e.predicted_rate is None else repr(e.predicted_rate),
                "" if e.actual_rate is None else repr(e.actual_rate),
            ])
