"""Per-subscriber feature extraction over the observation window.

The default catalog covers the financial, mobility, and social families.
Feature values are floats with an explicit missing mask; categorical fields
are integer-encoded by first appearance during matrix assembly and are
declared CATEGORICAL so the learner splits them by equality, not order.

Conventions, fixed across the pipeline:
  * variance is the population variance (ddof=0),
  * entropies use the natural log,
  * weekly aggregates use ISO weeks (Mon-Sun) fully contained in the window,
    monthly aggregates use 30-day blocks from the window start,
  * distances are haversine km (see litmap.geo).
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .geo import haversine_km, weighted_centroid
from .ingest import CdrEvent, Channel, Direction, HandsetRecord, TopUpEvent, Tower

CATALOG_VERSION = "1"

_CHANNELS = ["voice", "sms", "mms", "video", "data", "vas"]
_CHANNEL_BY_NAME = {name: Channel(name.upper()) for name in _CHANNELS}


class Family(str, Enum):
    FINANCIAL = "FINANCIAL"
    MOBILITY = "MOBILITY"
    SOCIAL = "SOCIAL"


class Kind(str, Enum):
    NUMERIC = "NUMERIC"
    CATEGORICAL = "CATEGORICAL"


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    family: Family
    kind: Kind


def default_catalog() -> list[FeatureSpec]:
    """The fixed, ordered feature catalog (version 1)."""
    fin = [("topup_count", Kind.NUMERIC)]
    fin += [
        (f"topup_amount_{stat}", Kind.NUMERIC)
        for stat in ("mean", "median", "variance", "cov", "min", "max")
    ]
    fin += [
        ("topup_fraction_lowest", Kind.NUMERIC),
        ("topup_fraction_highest", Kind.NUMERIC),
        ("spending_speed", Kind.NUMERIC),
        ("topup_gap_mean_days", Kind.NUMERIC),
    ]
    fin += [
        (f"topup_{period}_total_{stat}", Kind.NUMERIC)
        for period in ("weekly", "monthly")
        for stat in ("mean", "median", "variance")
    ]
    fin += [
        (f"charge_{ch}_{d}_total", Kind.NUMERIC)
        for ch in _CHANNELS + ["roaming"]
        for d in ("out", "in")
    ]
    fin += [
        ("handset_manufacturer", Kind.CATEGORICAL),
        ("handset_brand", Kind.CATEGORICAL),
        ("handset_camera", Kind.NUMERIC),
        ("handset_device_class", Kind.CATEGORICAL),
    ]

    mob = [
        ("home_longitude", Kind.NUMERIC),
        ("home_latitude", Kind.NUMERIC),
        ("home_district", Kind.CATEGORICAL),
        ("radius_of_gyration_km", Kind.NUMERIC),
        ("entropy_of_places", Kind.NUMERIC),
        ("number_of_places", Kind.NUMERIC),
    ]

    soc = [
        ("degree", Kind.NUMERIC),
        ("interactions_per_contact", Kind.NUMERIC),
        ("entropy_of_contacts", Kind.NUMERIC),
        ("peer_events_total", Kind.NUMERIC),
        ("events_total", Kind.NUMERIC),
        ("active_days", Kind.NUMERIC),
    ]
    soc += [(f"{ch}_{d}_count", Kind.NUMERIC) for ch in _CHANNELS for d in ("out", "in")]
    soc += [
        ("voice_out_duration_s", Kind.NUMERIC),
        ("voice_in_duration_s", Kind.NUMERIC),
        ("voice_out_duration_mean_s", Kind.NUMERIC),
        ("voice_in_duration_mean_s", Kind.NUMERIC),
        ("video_out_duration_s", Kind.NUMERIC),
        ("video_in_duration_s", Kind.NUMERIC),
        ("data_out_volume_bytes", Kind.NUMERIC),
        ("data_in_volume_bytes", Kind.NUMERIC),
    ]
    soc += [
        (f"{metric}_weekly_{stat}", Kind.NUMERIC)
        for metric in ("sms_count", "data_volume")
        for stat in ("mean", "median", "variance")
    ]

    catalog = [FeatureSpec(n, Family.FINANCIAL, k) for n, k in fin]
    catalog += [FeatureSpec(n, Family.MOBILITY, k) for n, k in mob]
    catalog += [FeatureSpec(n, Family.SOCIAL, k) for n, k in soc]
    names = [spec.name for spec in catalog]
    assert len(names) == len(set(names)), "catalog names must be unique"
    return catalog


def catalog_names(catalog: Sequence[FeatureSpec]) -> list[str]:
    return [spec.name for spec in catalog]


def catalog_kinds(catalog: Sequence[FeatureSpec]) -> list[str]:
    return [spec.kind.value for spec in catalog]


@dataclass
class FeatureVector:
    subscriber_id: str
    values: np.ndarray
    missing: np.ndarray


def _shannon_entropy(counts: Iterable[int]) -> float:
    total = float(sum(counts))
    h = 0.0
    for c in counts:
        if c > 0:
            p = c / total
            h -= p * math.log(p)
    return h


def _stats(values: np.ndarray) -> tuple[float, float, float]:
    return float(values.mean()), float(np.median(values)), float(values.var())


class WindowGrid:
    """Index full ISO weeks and 30-day blocks inside the observation window."""

    def __init__(self, window_start: date, window_days: int):
        self.start_ordinal = window_start.toordinal()
        self.window_days = window_days
        end_ordinal = self.start_ordinal + window_days  # exclusive
        self.first_monday = self.start_ordinal + (7 - window_start.isoweekday() + 1) % 7
        last_sunday = end_ordinal - 1 - (date.fromordinal(end_ordinal - 1).isoweekday() % 7)
        self.n_weeks = max(0, (last_sunday - self.first_monday + 1) // 7)
        self.n_months = window_days // 30

    def week_index(self, ordinal: int) -> int:
        idx = (ordinal - self.first_monday) // 7
        return idx if 0 <= idx < self.n_weeks else -1

    def month_index(self, ordinal: int) -> int:
        idx = (ordinal - self.start_ordinal) // 30
        return idx if 0 <= idx < self.n_months else -1


class SubscriberAccumulator:
    """Single-pass aggregates for one subscriber's events and top-ups."""

    def __init__(self, grid: Optional[WindowGrid] = None):
        self.grid = grid
        self.counts: Counter = Counter()          # (channel, direction) -> events
        self.charges: Counter = Counter()         # (channel, direction) -> charge sum
        self.durations: Counter = Counter()       # (channel, direction) -> seconds
        self.volumes: Counter = Counter()         # direction -> bytes
        self.peers: Counter = Counter()
        self.towers: Counter = Counter()
        self.active_days: set[int] = set()
        self.topup_amounts: list[float] = []
        self.topup_ordinals: list[int] = []
        self.topup_times: list[float] = []
        n_weeks = grid.n_weeks if grid else 0
        n_months = grid.n_months if grid else 0
        self.weekly_sms = np.zeros(n_weeks)
        self.weekly_volume = np.zeros(n_weeks)
        self.weekly_topup = np.zeros(n_weeks)
        self.monthly_topup = np.zeros(n_months)

    def add_event(self, e: CdrEvent) -> None:
        key = (e.channel, e.direction)
        self.counts[key] += 1
        self.charges[key] += e.charge
        if e.duration_s is not None:
            self.durations[key] += e.duration_s
        if e.volume_bytes is not None:
            self.volumes[e.direction] += e.volume_bytes
        if e.peer_id is not None:
            self.peers[e.peer_id] += 1
        self.towers[e.tower_id] += 1
        ordinal = e.timestamp.toordinal()
        self.active_days.add(ordinal)
        if self.grid is not None:
            w = self.grid.week_index(ordinal)
            if w >= 0:
                if e.channel is Channel.SMS:
                    self.weekly_sms[w] += 1
                elif e.volume_bytes is not None:
                    self.weekly_volume[w] += e.volume_bytes

    def add_topup(self, t: TopUpEvent) -> None:
        self.topup_amounts.append(t.amount)
        ordinal = t.timestamp.toordinal()
        self.topup_ordinals.append(ordinal)
        self.topup_times.append(t.timestamp.timestamp())
        if self.grid is not None:
            w = self.grid.week_index(ordinal)
            m = self.grid.month_index(ordinal)
            if w >= 0:
                self.weekly_topup[w] += t.amount
            if m >= 0:
                self.monthly_topup[m] += t.amount

    # ---- family finalizers -------------------------------------------------

    def financial(self, handset: Optional[HandsetRecord]) -> dict:
        out: dict[str, object] = {}
        amounts = np.asarray(self.topup_amounts, dtype=float)
        if len(amounts) == 0:
            for name in (
                "topup_count", "topup_amount_mean", "topup_amount_median",
                "topup_amount_variance", "topup_amount_cov", "topup_amount_min",
                "topup_amount_max", "topup_fraction_lowest", "topup_fraction_highest",
                "spending_speed", "topup_gap_mean_days",
            ):
                out[name] = None
            for period in ("weekly", "monthly"):
                for stat in ("mean", "median", "variance"):
                    out[f"topup_{period}_total_{stat}"] = None
        else:
            mean, median, variance = _stats(amounts)
            out["topup_count"] = float(len(amounts))
            out["topup_amount_mean"] = mean
            out["topup_amount_median"] = median
            out["topup_amount_variance"] = variance
            out["topup_amount_cov"] = math.sqrt(variance) / mean if mean > 0 else None
            out["topup_amount_min"] = float(amounts.min())
            out["topup_amount_max"] = float(amounts.max())
            out["topup_fraction_lowest"] = float((amounts == amounts.min()).mean())
            out["topup_fraction_highest"] = float((amounts == amounts.max()).mean())
            days = self.grid.window_days if self.grid else None
            out["spending_speed"] = float(amounts.sum()) / days if days else None
            if len(amounts) >= 2:
                times = np.sort(np.asarray(self.topup_times))
                out["topup_gap_mean_days"] = float(np.diff(times).mean()) / 86400.0
            else:
                out["topup_gap_mean_days"] = None
            for period, totals in (("weekly", self.weekly_topup), ("monthly", self.monthly_topup)):
                if len(totals) > 0:
                    mean, median, variance = _stats(totals)
                    out[f"topup_{period}_total_mean"] = mean
                    out[f"topup_{period}_total_median"] = median
                    out[f"topup_{period}_total_variance"] = variance
                else:
                    for stat in ("mean", "median", "variance"):
                        out[f"topup_{period}_total_{stat}"] = None

        for ch_name in _CHANNELS:
            ch = _CHANNEL_BY_NAME[ch_name]
            out[f"charge_{ch_name}_out_total"] = float(self.charges[(ch, Direction.OUT)])
            out[f"charge_{ch_name}_in_total"] = float(self.charges[(ch, Direction.IN)])
        # Roaming is not observable in the CDR schema; kept as always-missing columns.
        out["charge_roaming_out_total"] = None
        out["charge_roaming_in_total"] = None

        if handset is not None:
            out["handset_manufacturer"] = handset.manufacturer
            out["handset_brand"] = handset.brand
            out["handset_camera"] = 1.0 if handset.camera_enabled else 0.0
            out["handset_device_class"] = handset.device_class.value
        else:
            out["handset_manufacturer"] = None
            out["handset_brand"] = None
            out["handset_camera"] = None
            out["handset_device_class"] = None
        return out

    def mobility(self, towers: Mapping[str, Tower]) -> dict:
        names = (
            "home_longitude", "home_latitude", "home_district",
            "radius_of_gyration_km", "entropy_of_places", "number_of_places",
        )
        if not self.towers:
            return {name: None for name in names}
        top = max(self.towers.values())
        home_id = min(tid for tid, c in self.towers.items() if c == top)
        home = towers[home_id]
        tower_ids = sorted(self.towers)
        counts = np.array([self.towers[t] for t in tower_ids], dtype=float)
        lons = np.array([towers[t].longitude for t in tower_ids])
        lats = np.array([towers[t].latitude for t in tower_ids])
        c_lon, c_lat = weighted_centroid(lons, lats, counts)
        d = haversine_km(lons, lats, c_lon, c_lat)
        r_g = math.sqrt(float((counts * d * d).sum() / counts.sum()))
        return {
            "home_longitude": home.longitude,
            "home_latitude": home.latitude,
            "home_district": home.district,
            "radius_of_gyration_km": r_g,
            "entropy_of_places": _shannon_entropy(self.towers.values()),
            "number_of_places": float(len(self.towers)),
        }

    def home_tower_id(self) -> Optional[str]:
        if not self.towers:
            return None
        top = max(self.towers.values())
        return min(tid for tid, c in self.towers.items() if c == top)

    def social(self) -> dict:
        out: dict[str, object] = {}
        degree = len(self.peers)
        peer_total = sum(self.peers.values())
        out["degree"] = float(degree)
        out["interactions_per_contact"] = peer_total / degree if degree else None
        out["entropy_of_contacts"] = _shannon_entropy(self.peers.values()) if degree else None
        out["peer_events_total"] = float(peer_total)
        out["events_total"] = float(sum(self.counts.values()))
        out["active_days"] = float(len(self.active_days))

        for ch_name in _CHANNELS:
            ch = _CHANNEL_BY_NAME[ch_name]
            out[f"{ch_name}_out_count"] = float(self.counts[(ch, Direction.OUT)])
            out[f"{ch_name}_in_count"] = float(self.counts[(ch, Direction.IN)])
        for ch_name in ("voice", "video"):
            ch = _CHANNEL_BY_NAME[ch_name]
            for d_name, d in (("out", Direction.OUT), ("in", Direction.IN)):
                out[f"{ch_name}_{d_name}_duration_s"] = float(self.durations[(ch, d)])
        for d_name, d in (("out", Direction.OUT), ("in", Direction.IN)):
            n_calls = self.counts[(Channel.VOICE, d)]
            out[f"voice_{d_name}_duration_mean_s"] = (
                self.durations[(Channel.VOICE, d)] / n_calls if n_calls else None
            )
            out[f"data_{d_name}_volume_bytes"] = float(self.volumes[d])

        for metric, series in (
            ("sms_count", self.weekly_sms),
            ("data_volume", self.weekly_volume),
        ):
            if len(series) > 0:
                mean, median, variance = _stats(series)
                out[f"{metric}_weekly_mean"] = mean
                out[f"{metric}_weekly_median"] = median
                out[f"{metric}_weekly_variance"] = variance
            else:
                for stat in ("mean", "median", "variance"):
                    out[f"{metric}_weekly_{stat}"] = None
        return out


# ---------------------------------------------------------------------------
# Family-level entry points (window-scoped streams for one subscriber)
# ---------------------------------------------------------------------------


def financial_features(
    topups: Iterable[TopUpEvent],
    events: Iterable[CdrEvent],
    handset: Optional[HandsetRecord],
    window_start: date,
    window_days: int,
) -> dict:
    acc = SubscriberAccumulator(WindowGrid(window_start, window_days))
    for t in topups:
        acc.add_topup(t)
    for e in events:
        acc.add_event(e)
    return acc.financial(handset)


def mobility_features(events: Iterable[CdrEvent], towers: Mapping[str, Tower]) -> dict:
    acc = SubscriberAccumulator()
    for e in events:
        acc.add_event(e)
    return acc.mobility(towers)


def social_features(events: Iterable[CdrEvent], window_start: date, window_days: int) -> dict:
    acc = SubscriberAccumulator(WindowGrid(window_start, window_days))
    for e in events:
        acc.add_event(e)
    return acc.social()


# ---------------------------------------------------------------------------
# Matrix assembly and export
# ---------------------------------------------------------------------------


def assemble_matrix(
    partials: Mapping[str, Mapping[str, object]],
    catalog: Sequence[FeatureSpec],
):
    """Merge per-subscriber partial feature dicts into a dense matrix.

    Rows are sorted by subscriber_id; categoricals are integer-encoded by
    first appearance in that order.  Returns (ids, X, missing, encoders).
    """
    names = catalog_names(catalog)
    index = {name: i for i, name in enumerate(names)}
    kinds = {spec.name: spec.kind for spec in catalog}
    ids = sorted(partials)
    n, f = len(ids), len(names)
    x = np.full((n, f), np.nan)
    missing = np.ones((n, f), dtype=bool)
    encoders: dict[str, dict[object, int]] = {
        spec.name: {} for spec in catalog if spec.kind is Kind.CATEGORICAL
    }
    for row, sid in enumerate(ids):
        for name, value in partials[sid].items():
            col = index.get(name)
            if col is None:
                raise ValueError(f"feature {name!r} not in catalog")
            if value is None:
                continue
            if kinds[name] is Kind.CATEGORICAL:
                codes = encoders[name]
                code = codes.setdefault(value, len(codes))
                x[row, col] = float(code)
            else:
                x[row, col] = float(value)  # type: ignore[arg-type]
            missing[row, col] = False
    return ids, x, missing, encoders


def feature_density(
    x: np.ndarray,
    is_illiterate: np.ndarray,
    catalog: Sequence[FeatureSpec],
    feature_name: str,
    n_bins: int,
    log_transform: bool = False,
):
    """Per-class normalized histograms over a shared bin grid.

    With log_transform, the natural log is applied and non-positive values
    are excluded.  Returns (bin_edges, hist_illiterate, hist_literate); each
    histogram sums to 1 over its class (or is all zero for an empty class).
    """
    names = catalog_names(catalog)
    if feature_name not in names:
        raise KeyError(feature_name)
    if n_bins < 2:
        raise ValueError("n_bins must be at least 2")
    col = x[:, names.index(feature_name)]
    y = np.asarray(is_illiterate, dtype=bool)
    valid = ~np.isnan(col)
    if log_transform:
        valid &= col > 0
    if not valid.any():
        raise ValueError(f"feature {feature_name!r} has no usable values")
    values = np.log(col[valid]) if log_transform else col[valid]
    classes = y[valid]
    lo, hi = float(values.min()), float(values.max())
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    edges = np.linspace(lo, hi, n_bins + 1)
    hists = []
    for mask in (classes, ~classes):
        counts, _ = np.histogram(values[mask], bins=edges)
        total = counts.sum()
        hists.append(counts / total if total else counts.astype(float))
    return edges, hists[0], hists[1]


def write_matrix_csv(
    path: str | Path,
    ids: Sequence[str],
    x: np.ndarray,
    catalog: Sequence[FeatureSpec],
) -> None:
    """Feature matrix CSV: header row of catalog names, empty field = missing."""
    names = catalog_names(catalog)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subscriber_id"] + names)
        for row, sid in enumerate(ids):
            values = [
                "" if math.isnan(v) else repr(float(v)) for v in x[row]
            ]
            writer.writerow([sid] + values)


def read_matrix_csv(path: str | Path):
    """Read a feature matrix CSV; returns (ids, X with NaN for missing, names)."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "subscriber_id":
            raise ValueError("matrix header must start with subscriber_id")
        names = header[1:]
        ids = []
        rows = []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) if v else math.nan for v in row[1:]])
    x = np.asarray(rows, dtype=float) if rows else np.empty((0, len(names)))
    return ids, x, names


def write_catalog_csv(path: str | Path, catalog: Sequence[FeatureSpec]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "family", "kind"])
        for spec in catalog:
            writer.writerow([spec.name, spec.family.value, spec.kind.value])


def read_catalog_csv(path: str | Path) -> list[FeatureSpec]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["name", "family", "kind"]:
            raise ValueError("malformed catalog header")
        return [FeatureSpec(r[0], Family(r[1]), Kind(r[2])) for r in reader]


def write_home_towers_csv(path: str | Path, home_towers: Mapping[str, Optional[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["subscriber_id", "home_tower_id"])
        for sid in sorted(home_towers):
            writer.writerow([sid, home_towers[sid] or ""])


def read_home_towers_csv(path: str | Path) -> dict[str, Optional[str]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["subscriber_id", "home_tower_id"]:
            raise ValueError("malformed home-towers header")
        return {row[0]: (row[1] or None) for row in reader}


# ---------------------------------------------------------------------------
# Dataset-level extraction (streaming driver used by the CLI)
# ---------------------------------------------------------------------------


def extract_features(
    events: Iterable[CdrEvent],
    topups: Iterable[TopUpEvent],
    labels: Sequence,
    handsets: Sequence[HandsetRecord],
    towers: Sequence[Tower],
    window_start: date,
    window_days: int,
    catalog: Optional[Sequence[FeatureSpec]] = None,
):
    """Compute the matrix for every labeled subscriber in one streaming pass.

    Activity from unlabeled subscribers is ignored (validate_bundle reports
    it).  Returns (ids, X, missing, encoders, home_towers).
    """
    catalog = list(catalog) if catalog is not None else default_catalog()
    grid = WindowGrid(window_start, window_days)
    tower_map = {t.tower_id: t for t in towers}
    handset_map = {h.subscriber_id: h for h in handsets}
    accumulators: dict[str, SubscriberAccumulator] = {
        lb.subscriber_id: SubscriberAccumulator(grid) for lb in labels
    }
    for e in events:
        acc = accumulators.get(e.subscriber_id)
        if acc is not None:
            if e.tower_id not in tower_map:
                raise KeyError(f"event references unknown tower {e.tower_id!r}")
            acc.add_event(e)
    for t in topups:
        acc = accumulators.get(t.subscriber_id)
        if acc is not None:
            acc.add_topup(t)

    partials = {}
    home_towers: dict[str, Optional[str]] = {}
    for sid, acc in accumulators.items():
        combined = acc.financial(handset_map.get(sid))
        combined.update(acc.mobility(tower_map))
        combined.update(acc.social())
        partials[sid] = combined
        home_towers[sid] = acc.home_tower_id()
    ids, x, missing, encoders = assemble_matrix(partials, catalog)
    return ids, x, missing, encoders, home_towers
