"""Seeded generator for a synthetic subscriber population and its log files.

The generator plants class-conditioned behavioral differences (messaging,
data use, contact diversity, mobility extent, spending, home location) so the
downstream pipeline has a known signal to recover.  Everything is driven by
one root seed; per-subscriber event streams are derived from
(seed, subscriber_id), so generation order never changes the output.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from . import __version__
from .geo import haversine_km
from .ingest import (
    UTC,
    CdrEvent,
    Channel,
    DeviceClass,
    Direction,
    HandsetRecord,
    LiteracyLabel,
    TopUpEvent,
    Tower,
    write_cdr,
    write_handsets,
    write_labels,
    write_topups,
    write_towers,
)
from .util import derive_seed

DEFAULT_WINDOW_START = date(2016, 1, 4)  # a Monday, so ISO weeks align with the window

_MANUFACTURERS = ["Aster", "Bellfone", "Corvid", "Dyna", "Emberly", "Futel"]
_SERVICE_CODES = [f"svc{i:03d}" for i in range(12)]

# Per-subscriber heterogeneity (lognormal log-sd).  These spread every class
# distribution so no single feature separates the classes cleanly; the class
# signal lives in the profile means.
_POOL_SIGMA = 0.55
_VOLUME_SIGMA = 0.5
_AMOUNT_SIGMA = 0.45
_DECAY_SIGMA = 0.5
_DURATION_SIGMA = 0.3


@dataclass(frozen=True)
class BehaviorProfile:
    """Event-rate parameters for one literacy class.

    Rates are per subscriber per day and may be zero; means must be positive.
    Per-subscriber heterogeneity comes from lognormal rate multipliers with
    log-sd `rate_sigma` (mean 1, so class means match the configured rates).
    """

    sms_in_rate: float
    sms_out_rate: float
    voice_in_rate: float
    voice_out_rate: float
    voice_duration_mean_s: float
    video_rate: float
    video_duration_mean_s: float
    mms_rate: float
    vas_rate: float
    data_rate: float
    data_volume_mean_mb: float
    contact_pool_size: int
    contact_decay: float
    place_pool_size: int
    place_decay: float
    topup_amount_mean: float
    topup_gap_mean_days: float
    device_class_probs: tuple[float, float, float]  # BASIC, FEATURE, SMART
    rate_sigma: float = 0.65

    def __post_init__(self):
        rates = (
            self.sms_in_rate, self.sms_out_rate, self.voice_in_rate, self.voice_out_rate,
            self.video_rate, self.mms_rate, self.vas_rate, self.data_rate,
        )
        if any(r < 0 for r in rates):
            raise ValueError("event rates must be non-negative")
        means = (
            self.voice_duration_mean_s, self.video_duration_mean_s,
            self.data_volume_mean_mb, self.topup_amount_mean, self.topup_gap_mean_days,
        )
        if any(m <= 0 for m in means):
            raise ValueError("duration/volume/amount means must be positive")
        if self.contact_pool_size < 1 or self.place_pool_size < 1:
            raise ValueError("contact and place pools must hold at least one entry")
        if not 0.0 < self.contact_decay <= 1.0 or not 0.0 < self.place_decay <= 1.0:
            raise ValueError("decay constants must lie in (0, 1]")
        if abs(sum(self.device_class_probs) - 1.0) > 1e-9:
            raise ValueError("device_class_probs must sum to 1")


# Calibrated once against the acceptance benchmark, then frozen.
DEFAULT_LITERATE_PROFILE = BehaviorProfile(
    sms_in_rate=1.7,
    sms_out_rate=1.0,
    voice_in_rate=0.9,
    voice_out_rate=1.0,
    voice_duration_mean_s=95.0,
    video_rate=0.035,
    video_duration_mean_s=170.0,
    mms_rate=0.08,
    vas_rate=0.10,
    data_rate=0.7,
    data_volume_mean_mb=9.0,
    contact_pool_size=19,
    contact_decay=0.88,
    place_pool_size=10,
    place_decay=0.70,
    topup_amount_mean=38.0,
    topup_gap_mean_days=5.2,
    device_class_probs=(0.38, 0.41, 0.21),
    rate_sigma=1.05,
)

DEFAULT_ILLITERATE_PROFILE = BehaviorProfile(
    sms_in_rate=0.8,
    sms_out_rate=0.85,
    voice_in_rate=0.82,
    voice_out_rate=0.95,
    voice_duration_mean_s=105.0,
    video_rate=0.028,
    video_duration_mean_s=155.0,
    mms_rate=0.055,
    vas_rate=0.075,
    data_rate=0.33,
    data_volume_mean_mb=7.0,
    contact_pool_size=9,
    contact_decay=0.74,
    place_pool_size=5,
    place_decay=0.62,
    topup_amount_mean=29.0,
    topup_gap_mean_days=7.0,
    device_class_probs=(0.55, 0.33, 0.12),
    rate_sigma=0.75,
)


def default_zone_weights(n_zones: int) -> tuple[float, ...]:
    """First three zones are high-illiteracy pockets, the rest baseline."""
    n_high = min(3, n_zones)
    return tuple(18.0 if z < n_high else 1.0 for z in range(n_zones))


@dataclass
class PopulationConfig:
    n_subscribers: int = 5000
    illiterate_prevalence: float = 0.068
    observation_days: int = 90
    n_towers: int = 200
    n_zones: int = 8
    zone_illiteracy_weights: Optional[tuple[float, ...]] = None
    seed: int = 42
    window_start: date = DEFAULT_WINDOW_START
    lon_min: float = 90.25
    lon_max: float = 90.60
    lat_min: float = 23.60
    lat_max: float = 23.95

    def validate(self) -> None:
        if self.n_subscribers <= 0 or self.n_towers <= 0 or self.n_zones <= 0:
            raise ValueError("population sizes must be positive")
        if not 0.0 < self.illiterate_prevalence < 1.0:
            raise ValueError("illiterate_prevalence must lie in (0, 1)")
        if self.observation_days <= 0:
            raise ValueError("observation_days must be positive")
        if self.n_zones > self.n_towers:
            raise ValueError("n_zones must not exceed n_towers")
        if self.lon_min >= self.lon_max or self.lat_min >= self.lat_max:
            raise ValueError("degenerate bounding box")
        weights = self.weights()
        if len(weights) != self.n_zones:
            raise ValueError("zone_illiteracy_weights length must equal n_zones")
        if any(w <= 0 for w in weights):
            raise ValueError("zone weights must be positive")

    def weights(self) -> tuple[float, ...]:
        if self.zone_illiteracy_weights is None:
            return default_zone_weights(self.n_zones)
        return tuple(self.zone_illiteracy_weights)

    def window_start_dt(self) -> datetime:
        return datetime(
            self.window_start.year, self.window_start.month, self.window_start.day, tzinfo=UTC
        )


@dataclass
class Population:
    config: PopulationConfig
    subscriber_ids: list[str]
    is_illiterate: np.ndarray  # bool per subscriber
    home_tower_index: np.ndarray  # int per subscriber
    towers: list[Tower]
    zone_centers: list[tuple[float, float]]  # (lon, lat)
    zone_districts: list[str]
    zone_of_tower: np.ndarray
    labels: list[LiteracyLabel] = field(default_factory=list)
    handsets: list[HandsetRecord] = field(default_factory=list)

    def profile_for(self, index: int, profiles: dict[str, BehaviorProfile]) -> BehaviorProfile:
        return profiles["illiterate"] if self.is_illiterate[index] else profiles["literate"]


def default_profiles() -> dict[str, BehaviorProfile]:
    return {"literate": DEFAULT_LITERATE_PROFILE, "illiterate": DEFAULT_ILLITERATE_PROFILE}


def _generate_towers(config: PopulationConfig, rng: np.random.Generator):
    """Zones are disc clusters in the bounding box; towers uniform within discs.

    Districts are opaque operator billing regions assigned tower by tower,
    carrying no geographic information; the location signal stays on the
    coordinates.
    """
    width = config.lon_max - config.lon_min
    height = config.lat_max - config.lat_min
    radius = 0.28 * min(width, height) / math.sqrt(config.n_zones)
    centers = []
    districts = []
    mid_lon = (config.lon_min + config.lon_max) / 2.0
    mid_lat = (config.lat_min + config.lat_max) / 2.0
    n_districts = min(4, config.n_zones)
    # Strided ring placement spreads consecutive zones (the leading ones are
    # the high-illiteracy pockets) across the box instead of clumping them,
    # and pairs high zones with low zones in the same lon or lat band so
    # neither coordinate alone separates the pockets.
    for z in range(config.n_zones):
        theta = 2.0 * math.pi * ((z * 3) % config.n_zones) / config.n_zones
        theta += math.pi / 2.0 + rng.normal(0.0, 0.08)
        reach = 0.85
        lon = mid_lon + math.cos(theta) * reach * (width / 2.0 - radius)
        lat = mid_lat + math.sin(theta) * reach * (height / 2.0 - radius)
        centers.append((lon, lat))
    zone_of_tower = np.arange(config.n_towers) % config.n_zones
    towers = []
    for i in range(config.n_towers):
        z = int(zone_of_tower[i])
        r = radius * math.sqrt(rng.random())
        theta = rng.random() * 2.0 * math.pi
        lon = centers[z][0] + r * math.cos(theta)
        lat = centers[z][1] + r * math.sin(theta)
        district = f"D{(i // config.n_zones) % n_districts:02d}"
        districts.append(district)
        towers.append(Tower(f"T{i:04d}", round(lon, 6), round(lat, 6), district))
    return towers, centers, zone_of_tower, districts


def generate_population(
    config: PopulationConfig, profiles: Optional[dict[str, BehaviorProfile]] = None
) -> Population:
    """Build labels, handsets, towers, and home-tower assignments.

    Exactly round(n * prevalence) subscribers are illiterate; their home
    zones are drawn with probability proportional to zone weight times the
    zone's tower count, literate homes proportional to tower count alone.
    """
    config.validate()
    profiles = profiles or default_profiles()
    rng = np.random.default_rng(derive_seed(config.seed, "population"))
    towers, centers, zone_of_tower, districts = _generate_towers(config, rng)

    n = config.n_subscribers
    ids = [f"s{i:05d}" for i in range(n)]
    n_illiterate = round(n * config.illiterate_prevalence)
    is_ill = np.zeros(n, dtype=bool)
    is_ill[rng.permutation(n)[:n_illiterate]] = True

    zone_tower_lists = [np.flatnonzero(zone_of_tower == z) for z in range(config.n_zones)]
    tower_counts = np.array([len(t) for t in zone_tower_lists], dtype=float)
    weights = np.asarray(config.weights(), dtype=float)
    p_lit = tower_counts / tower_counts.sum()
    p_ill = weights * tower_counts
    p_ill = p_ill / p_ill.sum()

    home_zone = np.empty(n, dtype=np.int64)
    ill_idx = np.flatnonzero(is_ill)
    lit_idx = np.flatnonzero(~is_ill)
    home_zone[ill_idx] = rng.choice(config.n_zones, size=len(ill_idx), p=p_ill)
    home_zone[lit_idx] = rng.choice(config.n_zones, size=len(lit_idx), p=p_lit)
    u = rng.random(n)
    home_tower = np.array(
        [zone_tower_lists[z][int(u[i] * len(zone_tower_lists[z]))] for i, z in enumerate(home_zone)],
        dtype=np.int64,
    )

    labels = [LiteracyLabel(ids[i], literate=not is_ill[i]) for i in range(n)]

    handsets = []
    class_draw = rng.random(n)
    variant_draw = rng.integers(1, 2, size=n)
    maker_draw = rng.integers(0, len(_MANUFACTURERS), size=n)
    camera_draw = rng.random(n)
    camera_p = {DeviceClass.BASIC: 0.05, DeviceClass.FEATURE: 0.65, DeviceClass.SMART: 1.0}
    for i in range(n):
        profile = profiles["illiterate"] if is_ill[i] else profiles["literate"]
        cum, dc = 0.0, DeviceClass.SMART
        for klass, p in zip((DeviceClass.BASIC, DeviceClass.FEATURE, DeviceClass.SMART),
                            profile.device_class_probs):
            cum += p
            if class_draw[i] < cum:
                dc = klass
                break
        manufacturer = _MANUFACTURERS[maker_draw[i]]
        brand = f"{manufacturer}-{variant_draw[i]}"
        handsets.append(
            HandsetRecord(ids[i], manufacturer, brand, camera_draw[i] < camera_p[dc], dc)
        )

    return Population(
        config=config,
        subscriber_ids=ids,
        is_illiterate=is_ill,
        home_tower_index=home_tower,
        towers=towers,
        zone_centers=centers,
        zone_districts=districts,
        zone_of_tower=zone_of_tower,
        labels=labels,
        handsets=handsets,
    )


def _neighbor_order(towers: Sequence[Tower]) -> np.ndarray:
    """Rows: tower index -> other tower indices by increasing distance."""
    lon = np.array([t.longitude for t in towers])
    lat = np.array([t.latitude for t in towers])
    n = len(towers)
    order = np.empty((n, n - 1), dtype=np.int64)
    for i in range(n):
        d = haversine_km(lon[i], lat[i], lon, lat)
        d[i] = -1.0  # sort self first, then drop it
        idx = np.argsort(d, kind="stable")
        order[i] = idx[1:]
    return order


def _geometric_weights(size: int, decay: float) -> np.ndarray:
    w = decay ** np.arange(size)
    return w / w.sum()


class _SubscriberStream:
    """Events and top-ups for one subscriber, from a (seed, id)-derived stream."""

    def __init__(
        self,
        population: Population,
        profiles: dict[str, BehaviorProfile],
        neighbor_order: np.ndarray,
        index: int,
    ):
        self.population = population
        self.config = population.config
        self.profile = population.profile_for(index, profiles)
        self.index = index
        self.sid = population.subscriber_ids[index]
        self.rng = np.random.default_rng(
            derive_seed(self.config.seed, f"events:{self.sid}")
        )
        self.start = self.config.window_start_dt()
        self.window_s = self.config.observation_days * 86400

        p = self.profile
        rng = self.rng
        sigma = p.rate_sigma

        def mult(s: float = sigma) -> float:
            # lognormal with mean 1, so class means stay at the profile rates
            return float(rng.lognormal(-0.5 * s * s, s))

        # One multiplier per behavioral group, drawn in fixed order.
        self.m_sms_in = mult()
        self.m_sms_out = mult()
        self.m_voice = mult()
        self.m_video = mult()
        self.m_mms = mult()
        self.m_vas = mult()
        self.m_data = mult()
        self.m_volume = mult(_VOLUME_SIGMA)
        self.m_duration = mult(_DURATION_SIGMA)
        self.m_topup = mult()
        self.m_amount = mult(_AMOUNT_SIGMA)
        m_contact_pool = mult(_POOL_SIGMA)
        m_place_pool = mult(_POOL_SIGMA)

        # Pool size 1 stays exactly 1 (single-contact contract); larger pools
        # get Poisson-jittered around the profile size.
        pool = 1 + int(rng.poisson((p.contact_pool_size - 1) * m_contact_pool))
        universe = max(3 * self.config.n_subscribers, pool)
        self.peer_ids = [
            f"p{j:06d}" for j in rng.choice(universe, size=pool, replace=False)
        ]
        contact_decay = p.contact_decay ** float(rng.lognormal(0.0, _DECAY_SIGMA))
        self.peer_weights = _geometric_weights(pool, contact_decay)

        home = int(population.home_tower_index[index])
        place_pool = 1 + int(rng.poisson((p.place_pool_size - 1) * m_place_pool))
        place_pool = min(place_pool, len(population.towers))
        pool_idx = [home] + [int(t) for t in neighbor_order[home][: place_pool - 1]]
        self.place_towers = [population.towers[t].tower_id for t in pool_idx]
        place_decay = p.place_decay ** float(rng.lognormal(0.0, _DECAY_SIGMA))
        self.place_weights = _geometric_weights(len(pool_idx), place_decay)

    def _timestamps(self, n: int) -> list[datetime]:
        offsets = self.rng.integers(0, self.window_s, size=n)
        return [self.start + timedelta(seconds=int(o)) for o in offsets]

    def _pick_towers(self, n: int) -> list[str]:
        idx = self.rng.choice(len(self.place_towers), size=n, p=self.place_weights)
        return [self.place_towers[i] for i in idx]

    def _pick_peers(self, n: int) -> list[str]:
        idx = self.rng.choice(len(self.peer_ids), size=n, p=self.peer_weights)
        return [self.peer_ids[i] for i in idx]

    def _count(self, rate: float, multiplier: float) -> int:
        lam = rate * multiplier * self.config.observation_days
        return int(self.rng.poisson(lam)) if lam > 0 else 0

    def events(self) -> list[CdrEvent]:
        out: list[CdrEvent] = []
        rng = self.rng
        p = self.profile

        def emit_plain(channel: Channel, n: int, direction: Optional[Direction],
                       out_charge: float):
            ts = self._timestamps(n)
            towers = self._pick_towers(n)
            peers = self._pick_peers(n)
            dirs = (
                [direction] * n
                if direction is not None
                else [Direction.OUT if b else Direction.IN for b in rng.random(n) < 0.5]
            )
            for k in range(n):
                d = dirs[k]
                out.append(CdrEvent(
                    self.sid, ts[k], d, channel, peers[k], None, None, towers[k],
                    out_charge if d is Direction.OUT else 0.0,
                ))

        def emit_timed(channel: Channel, n: int, direction: Optional[Direction],
                       mean_duration: float, out_rate_per_s: float):
            ts = self._timestamps(n)
            towers = self._pick_towers(n)
            peers = self._pick_peers(n)
            durations = rng.exponential(mean_duration * self.m_duration, size=n)
            dirs = (
                [direction] * n
                if direction is not None
                else [Direction.OUT if b else Direction.IN for b in rng.random(n) < 0.5]
            )
            for k in range(n):
                d = dirs[k]
                dur = int(durations[k]) + 1
                charge = round(dur * out_rate_per_s, 2) if d is Direction.OUT else 0.0
                out.append(CdrEvent(
                    self.sid, ts[k], d, channel, peers[k], dur, None, towers[k], charge,
                ))

        emit_plain(Channel.SMS, self._count(p.sms_in_rate, self.m_sms_in), Direction.IN, 0.0)
        emit_plain(Channel.SMS, self._count(p.sms_out_rate, self.m_sms_out), Direction.OUT, 0.5)
        emit_timed(Channel.VOICE, self._count(p.voice_in_rate, self.m_voice),
                   Direction.IN, p.voice_duration_mean_s, 0.0)
        emit_timed(Channel.VOICE, self._count(p.voice_out_rate, self.m_voice),
                   Direction.OUT, p.voice_duration_mean_s, 0.012)
        emit_timed(Channel.VIDEO, self._count(p.video_rate, self.m_video),
                   None, p.video_duration_mean_s, 0.02)
        emit_plain(Channel.MMS, self._count(p.mms_rate, self.m_mms), None, 2.0)

        n_vas = self._count(p.vas_rate, self.m_vas)
        ts = self._timestamps(n_vas)
        towers = self._pick_towers(n_vas)
        codes = rng.integers(0, len(_SERVICE_CODES), size=n_vas)
        for k in range(n_vas):
            out.append(CdrEvent(
                self.sid, ts[k], Direction.OUT, Channel.VAS,
                _SERVICE_CODES[codes[k]], None, None, towers[k], 1.5,
            ))

        n_data = self._count(p.data_rate, self.m_data)
        ts = self._timestamps(n_data)
        towers = self._pick_towers(n_data)
        mu = math.log(p.data_volume_mean_mb * 1e6 * self.m_volume) - 0.5 * 0.5 * 0.5
        volumes = rng.lognormal(mu, 0.5, size=n_data)
        for k in range(n_data):
            vol = max(1024, int(volumes[k]))
            charge = round(vol / 1e6 * 0.08, 2)
            out.append(CdrEvent(
                self.sid, ts[k], Direction.OUT, Channel.DATA, None, None, vol,
                towers[k], charge,
            ))
        return out

    def topups(self) -> list[TopUpEvent]:
        p = self.profile
        gap_s = p.topup_gap_mean_days * 86400.0 / self.m_topup
        out: list[TopUpEvent] = []
        t = self.rng.exponential(gap_s)
        mu = math.log(p.topup_amount_mean * self.m_amount) - 0.5 * 0.5 * 0.5
        while t < self.window_s:
            amount = max(0.01, round(float(self.rng.lognormal(mu, 0.5)), 2))
            out.append(TopUpEvent(self.sid, self.start + timedelta(seconds=int(t)), amount))
            t += self.rng.exponential(gap_s)
        return out


def generate_events(
    population: Population, profiles: Optional[dict[str, BehaviorProfile]] = None
) -> Iterator[tuple[list[CdrEvent], list[TopUpEvent]]]:
    """Yield (events, topups) per subscriber, in subscriber-id order."""
    profiles = profiles or default_profiles()
    neighbor_order = _neighbor_order(population.towers)
    for i in range(len(population.subscriber_ids)):
        stream = _SubscriberStream(population, profiles, neighbor_order, i)
        yield stream.events(), stream.topups()


def _profile_summary(profile: BehaviorProfile) -> dict:
    d = asdict(profile)
    d["device_class_probs"] = list(profile.device_class_probs)
    return d


def generate_dataset(
    config: PopulationConfig,
    out_dir: str | Path,
    profiles: Optional[dict[str, BehaviorProfile]] = None,
) -> dict:
    """Write the five CSV files plus a manifest; returns the manifest dict."""
    profiles = profiles or default_profiles()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    population = generate_population(config, profiles)

    write_towers(out / "towers.csv", population.towers)
    write_labels(out / "labels.csv", population.labels)
    write_handsets(out / "handsets.csv", population.handsets)

    n_cdr = 0
    n_topups = 0
    import csv as _csv

    from .ingest import CDR_HEADER, TOPUP_HEADER, cdr_to_row, topup_to_row

    with open(out / "cdr.csv", "w", newline="", encoding="utf-8") as cdr_fh, \
         open(out / "topups.csv", "w", newline="", encoding="utf-8") as topup_fh:
        cdr_writer = _csv.writer(cdr_fh, lineterminator="\n")
        topup_writer = _csv.writer(topup_fh, lineterminator="\n")
        cdr_writer.writerow(CDR_HEADER)
        topup_writer.writerow(TOPUP_HEADER)
        for events, topups in generate_events(population, profiles):
            for e in events:
                cdr_writer.writerow(cdr_to_row(e))
            for t in topups:
                topup_writer.writerow(topup_to_row(t))
            n_cdr += len(events)
            n_topups += len(topups)

    weights = config.weights()
    zone_table = []
    for z in range(config.n_zones):
        zone_table.append({
            "zone": z,
            "n_districts": len(set(population.zone_districts)),
            "center_lon": population.zone_centers[z][0],
            "center_lat": population.zone_centers[z][1],
            "illiteracy_weight": weights[z],
            "n_towers": int((population.zone_of_tower == z).sum()),
        })

    cfg = asdict(config)
    cfg["window_start"] = config.window_start.isoformat()
    cfg["zone_illiteracy_weights"] = list(weights)
    manifest = {
        "tool_version": __version__,
        "seed": config.seed,
        "config": cfg,
        "profiles": {name: _profile_summary(p) for name, p in profiles.items()},
        "zones": zone_table,
        "counts": {
            "subscribers": config.n_subscribers,
            "illiterate": int(population.is_illiterate.sum()),
            "cdr_rows": n_cdr,
            "topup_rows": n_topups,
            "towers": config.n_towers,
        },
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(data_dir: str | Path) -> dict:
    with open(Path(data_dir) / "manifest.json", "r", encoding="utf-8") as fh:
        return json.load(fh)


def profile_with(base: BehaviorProfile, **overrides) -> BehaviorProfile:
    return replace(base, **overrides)
