"""Great-circle geometry shared by the feature and mapping stages.

All distances use the haversine formula on the WGS84 mean radius so that
mobility features and map interpolation agree on a single metric.
"""

from __future__ import annotations

import numpy as np

EARTH_RADIUS_KM = 6371.0088


def haversine_km(lon1, lat1, lon2, lat2):
    """Great-circle distance in km. Accepts scalars or numpy arrays (degrees)."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(x, dtype=float)) for x in (lon1, lat1, lon2, lat2))
    dlon = lon2 - lon1
    dlat = lat2 - lat1
    a = np.sin(dlat / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2.0) ** 2
    return EARTH_RADIUS_KM * 2.0 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def unit_vectors(lon_deg, lat_deg):
    """Map (lon, lat) degrees to unit vectors on the sphere, shape (..., 3)."""
    lon = np.radians(np.asarray(lon_deg, dtype=float))
    lat = np.radians(np.asarray(lat_deg, dtype=float))
    return np.stack(
        [np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)], axis=-1
    )


def weighted_centroid(lon_deg, lat_deg, weights):
    """Weight-averaged location on the sphere, returned as (lon, lat) degrees.

    Computed by normalizing the weighted mean of unit vectors; falls back to
    the first point when the mean vector vanishes (antipodal degeneracy).
    """
    v = unit_vectors(lon_deg, lat_deg)
    w = np.asarray(weights, dtype=float)
    mean = (v * w[:, None]).sum(axis=0) / w.sum()
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        return float(np.asarray(lon_deg)[0]), float(np.asarray(lat_deg)[0])
    mean /= norm
    lat = np.degrees(np.arcsin(np.clip(mean[2], -1.0, 1.0)))
    lon = np.degrees(np.arctan2(mean[1], mean[0]))
    return float(lon), float(lat)
