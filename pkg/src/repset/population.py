"""User populations: synthetic scenarios and throughput-trace ingestion.

A user is (requested video type, display resolution, throughput model).
Throughput is either a single capacity in kbps or an empirical sample set of
per-chunk download rates; both expose a survival function giving the fraction
of time the link sustains at least a given rate.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .qoe import RESOLUTIONS, VIDEO_TYPES, res_index

CHUNK_SECONDS = 2.0
WARMUP_CHUNKS = 5
P75_CUTOFF_KBPS = 8000.0
TRACE_CSV_HEADER = ("user_id", "chunk_index", "bytes_received", "download_seconds")

# Display classification: a user's display resolution is the largest one whose
# threshold exceeds the 75th percentile of their download rate.
DISPLAY_THRESHOLDS_KBPS = ((1575.0, "224p"), (2400.0, "360p"), (4500.0, "720p"), (6750.0, "1080p"))


class TraceParseError(ValueError):
    """Malformed trace CSV row."""


class PopulationShortfallError(ValueError):
    """Fewer eligible users than requested."""

    def __init__(self, requested: int, available: int):
        super().__init__(f"requested {requested} users but only {available} eligible")
        self.requested = requested
        self.available = available


@dataclass(frozen=True)
class Scalar:
    """Constant link capacity in kbps."""

    capacity: float

    def __post_init__(self):
        if self.capacity <= 0:
            raise ValueError("capacity must be positive")


class Empirical:
    """Empirical distribution of per-chunk download rates in kbps."""

    def __init__(self, samples: Sequence[float]):
        arr = np.sort(np.asarray(samples, dtype=float))
        if arr.size == 0:
            raise ValueError("empirical model needs at least one sample")
        if arr[0] <= 0:
            raise ValueError("all samples must be positive")
        self.samples = arr

    def __eq__(self, other) -> bool:
        return isinstance(other, Empirical) and np.array_equal(self.samples, other.samples)

    def __repr__(self) -> str:
        return f"Empirical({self.samples.size} samples, p50={np.median(self.samples):.0f} kbps)"


ThroughputModel = Union[Scalar, Empirical]


def survival_fraction(model: ThroughputModel, rate: float) -> float:
    """Fraction of time the link capacity is at least ``rate`` kbps."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    if isinstance(model, Scalar):
        return 1.0 if model.capacity >= rate else 0.0
    # fraction of samples >= rate on the sorted array
    idx = np.searchsorted(model.samples, rate, side="left")
    return float(model.samples.size - idx) / model.samples.size


def percentile_75(model: Empirical) -> float:
    """Nearest-rank 75th percentile (ceil(0.75 n)-th order statistic)."""
    n = model.samples.size
    rank = max(1, math.ceil(0.75 * n))
    return float(model.samples[rank - 1])


def classify_display(model: Empirical) -> str:
    """Display resolution implied by the 75th percentile of download rate."""
    p75 = percentile_75(model)
    for threshold, resolution in DISPLAY_THRESHOLDS_KBPS:
        if p75 < threshold:
            return resolution
    return RESOLUTIONS[-1]


@dataclass(frozen=True)
class UserProfile:
    id: str
    video: str
    display: str
    throughput: ThroughputModel

    def __post_init__(self):
        if self.video not in VIDEO_TYPES:
            raise ValueError(f"unknown video type {self.video!r}")
        res_index(self.display)


@dataclass(frozen=True)
class NetworkType:
    name: str
    bw_min: float  # kbps
    bw_max: float  # kbps
    attach_prob: float

    def __post_init__(self):
        if not (0 < self.bw_min < self.bw_max):
            raise ValueError(f"need 0 < bw_min < bw_max for network {self.name!r}")
        if not (0 <= self.attach_prob <= 1):
            raise ValueError("attach_prob must be in [0, 1]")


# Access-network mix used by the synthetic scenarios (rates in kbps).
DEFAULT_NETWORKS = (
    NetworkType("wifi_high_load", 150.0, 800.0, 0.3),
    NetworkType("3g", 400.0, 4000.0, 0.2),
    NetworkType("adsl_slow", 300.0, 3000.0, 0.1),
    NetworkType("adsl_fast", 700.0, 10000.0, 0.3),
    NetworkType("ftth", 1500.0, 25000.0, 0.1),
)

UNIFORM_VIDEO_MIX = {v: 0.25 for v in VIDEO_TYPES}
UNIFORM_DEVICE_MIX = {r: 0.25 for r in RESOLUTIONS}


def _check_mix(mix: Mapping[str, float], valid: Sequence[str], what: str) -> None:
    total = 0.0
    for key, p in mix.items():
        if key not in valid:
            raise ValueError(f"unknown {what} {key!r}")
        if p < 0:
            raise ValueError(f"negative probability for {what} {key!r}")
        total += p
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"{what} probabilities sum to {total}, expected 1")


@dataclass(frozen=True)
class ScenarioConfig:
    user_count: int
    video_mix: Mapping[str, float] = field(default_factory=lambda: dict(UNIFORM_VIDEO_MIX))
    device_mix: Mapping[str, float] = field(default_factory=lambda: dict(UNIFORM_DEVICE_MIX))
    networks: Sequence[NetworkType] = DEFAULT_NETWORKS
    rng_seed: int = 0

    def __post_init__(self):
        if self.user_count < 1:
            raise ValueError("user_count must be at least 1")
        _check_mix(self.video_mix, VIDEO_TYPES, "video type")
        _check_mix(self.device_mix, RESOLUTIONS, "resolution")
        total = sum(n.attach_prob for n in self.networks)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"network attach probabilities sum to {total}, expected 1")

    def to_json_obj(self) -> dict:
        return {
            "user_count": self.user_count,
            "video_mix": dict(self.video_mix),
            "device_mix": dict(self.device_mix),
            "networks": [
                {"name": n.name, "bw_min_kbps": n.bw_min, "bw_max_kbps": n.bw_max,
                 "attach_prob": n.attach_prob}
                for n in self.networks
            ],
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "ScenarioConfig":
        networks = tuple(
            NetworkType(n["name"], float(n["bw_min_kbps"]), float(n["bw_max_kbps"]),
                        float(n["attach_prob"]))
            for n in obj.get("networks", [])
        ) or DEFAULT_NETWORKS
        return cls(
            user_count=int(obj["user_count"]),
            video_mix={k: float(v) for k, v in obj.get("video_mix", UNIFORM_VIDEO_MIX).items()},
            device_mix={k: float(v) for k, v in obj.get("device_mix", UNIFORM_DEVICE_MIX).items()},
            networks=networks,
            rng_seed=int(obj.get("rng_seed", 0)),
        )


def generate_synthetic(cfg: ScenarioConfig, empirical_samples: int | None = None) -> list[UserProfile]:
    """Draw a user population from a scenario configuration.

    Each user gets a video by video_mix, a display by device_mix, a network
    type by attach probability, and a capacity uniform in the network's
    bandwidth range. With ``empirical_samples`` set, that many independent
    capacity draws form an Empirical model instead of a single Scalar.
    Deterministic given cfg.rng_seed.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    videos = sorted(cfg.video_mix)
    video_p = np.array([cfg.video_mix[v] for v in videos])
    devices = sorted(cfg.device_mix, key=res_index)
    device_p = np.array([cfg.device_mix[d] for d in devices])
    net_p = np.array([n.attach_prob for n in cfg.networks])

    width = max(4, len(str(cfg.user_count - 1)))
    users = []
    for i in range(cfg.user_count):
        video = videos[rng.choice(len(videos), p=video_p)]
        display = devices[rng.choice(len(devices), p=device_p)]
        net = cfg.networks[rng.choice(len(cfg.networks), p=net_p)]
        if empirical_samples is None:
            model: ThroughputModel = Scalar(float(rng.uniform(net.bw_min, net.bw_max)))
        else:
            model = Empirical(rng.uniform(net.bw_min, net.bw_max, size=empirical_samples))
        users.append(UserProfile(f"u{i:0{width}d}", video, display, model))
    return users


def sport_ratio_mix(x: float) -> dict[str, float]:
    """Video mix with fixed documentary/movie shares and sport share x."""
    if not (0.0 <= x <= 0.8):
        raise ValueError("sport ratio must be in [0, 0.8]")
    return {"documentary": 0.1, "movie": 0.1, "sport": x, "cartoon": 0.8 - x}


def hdtv_ratio_mix(y: float) -> dict[str, float]:
    """Device mix with fixed tablet/laptop shares and HDTV share y."""
    if not (0.0 <= y <= 0.8):
        raise ValueError("HDTV ratio must be in [0, 0.8]")
    return {"360p": 0.1, "720p": 0.1, "1080p": y, "224p": 0.8 - y}


@dataclass(frozen=True)
class SessionTrace:
    """Per-chunk download rates (kbps) for one user, warm-up chunks removed."""

    user_id: str
    rates: tuple[float, ...]
    chunk_seconds: float = CHUNK_SECONDS
    n_sessions: int = 1
    rejected_rows: int = 0

    def __post_init__(self):
        if not self.rates:
            raise ValueError("trace has no chunks after warm-up trimming")
        if min(self.rates) <= 0:
            raise ValueError("all chunk rates must be positive")

    def empirical(self) -> Empirical:
        return Empirical(self.rates)


def ingest_sessions(source) -> dict[str, SessionTrace]:
    """Build per-user traces from a session CSV.

    Expects columns ``user_id,chunk_index,bytes_received,download_seconds``.
    The per-chunk rate is bytes*8/seconds/1000 kbps. The first five chunks of
    every session (ramp-up) are dropped; a session restarts whenever a user's
    chunk_index does not increase. Rows with non-positive download time are
    rejected and counted on the user's trace; structurally malformed rows
    raise :class:`TraceParseError` with the offending row number.
    """
    if hasattr(source, "read"):
        rows = list(csv.reader(source))
    else:
        with open(source, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    if not rows or tuple(h.strip() for h in rows[0]) != TRACE_CSV_HEADER:
        raise TraceParseError(f"expected header {','.join(TRACE_CSV_HEADER)}")

    rates: dict[str, list[float]] = {}
    sessions: dict[str, int] = {}
    rejected: dict[str, int] = {}
    last_index: dict[str, int] = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise TraceParseError(f"row {lineno}: expected 4 columns, got {len(row)}")
        user_id = row[0].strip()
        try:
            chunk_index = int(row[1])
            nbytes = float(row[2])
            seconds = float(row[3])
        except ValueError as exc:
            raise TraceParseError(f"row {lineno}: {exc}") from None
        if chunk_index < 0 or nbytes < 0:
            raise TraceParseError(f"row {lineno}: negative chunk_index or bytes_received")

        if user_id not in last_index or chunk_index <= last_index[user_id]:
            sessions[user_id] = sessions.get(user_id, 0) + 1
        last_index[user_id] = chunk_index

        if seconds <= 0:
            rejected[user_id] = rejected.get(user_id, 0) + 1
            continue
        if chunk_index < WARMUP_CHUNKS:
            continue
        rates.setdefault(user_id, []).append(nbytes * 8.0 / seconds / 1000.0)

    traces = {}
    for user_id, user_rates in rates.items():
        traces[user_id] = SessionTrace(
            user_id=user_id,
            rates=tuple(user_rates),
            n_sessions=sessions.get(user_id, 1),
            rejected_rows=rejected.get(user_id, 0),
        )
    return traces


def filter_population(traces: Mapping[str, SessionTrace], count: int | None = None,
                      p75_cutoff: float = P75_CUTOFF_KBPS) -> dict[str, SessionTrace]:
    """Keep users whose p75 download rate is within the encodable range.

    With ``count`` given, the eligible users with the most sessions are
    selected (ties broken by ascending user id); a shortfall raises.
    """
    eligible = {
        uid: trace
        for uid, trace in traces.items()
        if percentile_75(trace.empirical()) <= p75_cutoff
    }
    if count is None:
        return dict(sorted(eligible.items()))
    if len(eligible) < count:
        raise PopulationShortfallError(count, len(eligible))
    ranked = sorted(eligible.items(), key=lambda kv: (-kv[1].n_sessions, kv[0]))
    return dict(sorted(ranked[:count]))


def profiles_from_traces(traces: Mapping[str, SessionTrace], video_assignment=None) -> list[UserProfile]:
    """Turn traces into user profiles: empirical throughput, classified display.

    ``video_assignment`` maps user_id to a video type; by default video types
    rotate deterministically over the sorted user ids.
    """
    users = []
    for i, (uid, trace) in enumerate(sorted(traces.items())):
        model = trace.empirical()
        if video_assignment is None:
            video = VIDEO_TYPES[i % len(VIDEO_TYPES)]
        else:
            video = video_assignment[uid]
        users.append(UserProfile(uid, video, classify_display(model), model))
    return users


def export_population(users: Iterable[UserProfile], path) -> None:
    """Write a population CSV: user_id,video,display,model_kind,detail."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "video", "display", "model_kind", "capacity_kbps", "samples"])
        for user in users:
            if isinstance(user.throughput, Scalar):
                writer.writerow([user.id, user.video, user.display, "scalar",
                                 f"{user.throughput.capacity:.3f}", ""])
            else:
                samples = ";".join(f"{s:.3f}" for s in user.throughput.samples)
                writer.writerow([user.id, user.video, user.display, "empirical", "", samples])
