"""Representation sets and candidate universes.

A representation is a (video type, resolution, rate) triple. Sets of them
are what the optimizer selects and what vendors recommend; the candidate
universe is the per-(video, resolution) pool of rates the optimizer may
activate.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

from .qoe import VIDEO_TYPES, res_index

CSV_HEADER = ("video", "resolution", "rate_kbps")


@dataclass(frozen=True)
class Representation:
    video: str
    resolution: str
    rate: int  # kbps

    def __post_init__(self):
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        res_index(self.resolution)  # validates the name

    @property
    def sort_key(self) -> tuple[str, int, int]:
        return (self.video, res_index(self.resolution), self.rate)


class RepresentationSet:
    """An ordered, duplicate-free collection of representations."""

    def __init__(self, representations: Iterable[Representation], label: str = ""):
        reps = sorted(set(representations), key=lambda r: r.sort_key)
        seen = set()
        for rep in reps:
            key = (rep.video, rep.resolution, rep.rate)
            if key in seen:
                raise ValueError(f"duplicate representation {key}")
            seen.add(key)
        self.representations = tuple(reps)
        self.label = label

    def __len__(self) -> int:
        return len(self.representations)

    def __iter__(self) -> Iterator[Representation]:
        return iter(self.representations)

    def __contains__(self, rep: Representation) -> bool:
        return rep in set(self.representations)

    def __eq__(self, other) -> bool:
        return isinstance(other, RepresentationSet) and self.representations == other.representations

    def __repr__(self) -> str:
        return f"RepresentationSet({self.label or 'unlabeled'}, {len(self)} reps)"

    def for_video(self, video: str) -> tuple[Representation, ...]:
        return tuple(r for r in self.representations if r.video == video)

    def to_csv(self, path=None) -> str:
        """Serialize as CSV (``video,resolution,rate_kbps``); write to path if given."""
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(CSV_HEADER)
        for rep in self.representations:
            writer.writerow([rep.video, rep.resolution, rep.rate])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source, label: str = "") -> "RepresentationSet":
        """Parse the CSV schema produced by :meth:`to_csv`.

        ``source`` may be a path or a text stream.
        """
        if hasattr(source, "read"):
            rows = list(csv.reader(source))
        else:
            with open(source, encoding="utf-8", newline="") as fh:
                rows = list(csv.reader(fh))
        if not rows or tuple(h.strip() for h in rows[0]) != CSV_HEADER:
            raise ValueError(f"expected header {','.join(CSV_HEADER)}")
        reps = []
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ValueError(f"line {lineno}: expected 3 columns, got {len(row)}")
            reps.append(Representation(row[0].strip(), row[1].strip(), int(row[2])))
        return cls(reps, label=label)

    def to_json_obj(self) -> dict:
        return {
            "label": self.label,
            "representations": [
                {"video": r.video, "resolution": r.resolution, "rate_kbps": r.rate}
                for r in self.representations
            ],
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_json_obj(), indent=2)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json_obj(cls, obj: Mapping) -> "RepresentationSet":
        reps = [
            Representation(r["video"], r["resolution"], int(r["rate_kbps"]))
            for r in obj["representations"]
        ]
        return cls(reps, label=obj.get("label", ""))


# Vendor ladders as published: (rate kbps, resolution) per representation.
# The ladders are video-type agnostic; builtin_recommendation replicates each
# across the four video types.
_APPLE = [
    (150, "224p"), (200, "224p"), (400, "224p"),
    (600, "360p"), (1200, "360p"),
    (1800, "720p"), (2500, "720p"), (4500, "720p"),
    (4500, "1080p"), (6500, "1080p"),
]
_MICROSOFT = [
    (350, "224p"), (400, "224p"), (900, "224p"),
    (1250, "360p"),
    (1400, "720p"), (2100, "720p"), (3000, "720p"), (3450, "720p"),
    (5000, "1080p"), (6000, "1080p"),
]
_NETFLIX = [
    (150, "224p"), (250, "224p"), (350, "224p"), (500, "224p"), (650, "224p"),
    (750, "224p"), (1000, "224p"), (1400, "224p"), (1500, "224p"),
    (1600, "224p"), (1750, "224p"),
    (250, "360p"), (350, "360p"), (500, "360p"), (650, "360p"), (750, "360p"),
    (1000, "360p"), (1400, "360p"), (1500, "360p"), (1600, "360p"), (1750, "360p"),
    (1000, "720p"), (1400, "720p"), (1500, "720p"), (1600, "720p"),
    (1750, "720p"), (2350, "720p"), (3600, "720p"),
    (1500, "1080p"), (1600, "1080p"), (1750, "1080p"), (2350, "1080p"), (3600, "1080p"),
]
_VENDOR_LADDERS = {"apple": _APPLE, "microsoft": _MICROSOFT, "netflix": _NETFLIX}


def builtin_recommendation(vendor: str) -> RepresentationSet:
    """A vendor's recommended ladder replicated across all video types."""
    try:
        ladder = _VENDOR_LADDERS[vendor.lower()]
    except KeyError:
        raise ValueError(
            f"unknown vendor {vendor!r}; choose from {sorted(_VENDOR_LADDERS)}"
        ) from None
    reps = [
        Representation(video, resolution, rate)
        for video in VIDEO_TYPES
        for rate, resolution in ladder
    ]
    return RepresentationSet(reps, label=vendor.lower())


class CandidateUniverse:
    """Per-(video, resolution) sorted candidate rates.

    Rates coming from an external representation set (rather than the derived
    grid) are flagged as injected; rate-bounds elimination leaves those alone.
    """

    def __init__(self, rates: Mapping[tuple[str, str], Sequence[int]],
                 injected: Iterable[tuple[str, str, int]] = ()):
        self._rates = {
            key: tuple(sorted(set(int(r) for r in values)))
            for key, values in rates.items()
            if len(values) > 0
        }
        self._injected = set(injected)

    def rates(self, video: str, resolution: str) -> tuple[int, ...]:
        return self._rates.get((video, resolution), ())

    def groups(self) -> Iterator[tuple[tuple[str, str], tuple[int, ...]]]:
        return iter(sorted(self._rates.items()))

    def is_injected(self, video: str, resolution: str, rate: int) -> bool:
        return (video, resolution, rate) in self._injected

    def triples(self) -> Iterator[Representation]:
        for (video, resolution), rates in sorted(self._rates.items()):
            for rate in rates:
                yield Representation(video, resolution, rate)

    def __len__(self) -> int:
        return sum(len(v) for v in self._rates.values())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, CandidateUniverse)
            and self._rates == other._rates
            and self._injected == other._injected
        )

    @classmethod
    def from_grid(cls, grid: Mapping[tuple[str, str], Sequence[int]]) -> "CandidateUniverse":
        return cls(grid)

    @classmethod
    def empty(cls) -> "CandidateUniverse":
        return cls({})


def augment_universe(universe: CandidateUniverse, rep_set: RepresentationSet) -> CandidateUniverse:
    """Union a representation set's rates into the universe.

    New rates are flagged as injected; existing grid rates keep their status.
    """
    rates = {key: list(values) for key, values in universe.groups()}
    injected = {t for t in _injected_triples(universe)}
    for rep in rep_set:
        key = (rep.video, rep.resolution)
        existing = rates.setdefault(key, [])
        if rep.rate not in existing:
            existing.append(rep.rate)
            injected.add((rep.video, rep.resolution, rep.rate))
    return CandidateUniverse(rates, injected)


def _injected_triples(universe: CandidateUniverse) -> Iterator[tuple[str, str, int]]:
    for (video, resolution), rates in universe.groups():
        for rate in rates:
            if universe.is_injected(video, resolution, rate):
                yield (video, resolution, rate)
