"""Parametric user-satisfaction model and candidate-rate derivation.

The satisfaction of a viewer watching a video encoded at ``rate`` kbps is
modeled by a three-parameter rational curve::

    score(rate) = clamp(1 - (m + n / (rate + o)), 0, 1)

with one (m, n, o) row per (video type, display resolution, encoded
resolution) combination. The bundled coefficient table covers four video
types and four resolutions; for each display size only the encoded
resolutions reachable by single-step up/down-sampling have a row.

This module also derives, per (video, resolution):

- admissible rate bounds (the rates scoring 0.6 and 1.0), and
- the discrete candidate-rate grid obtained by slicing the satisfaction
  range into uniform levels and inverting the curve at each level.

A reference bounds table calibrated on the original measurements ships with
the package; it is used for the top (score 1.0) grid endpoint, where the
analytic inversion is ill-conditioned (the rate there scales like n/|m|, so
the two-decimal rounding of ``m`` in the published coefficients can shift
it by 20% or more).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Iterator, Mapping

RESOLUTIONS: tuple[str, ...] = ("224p", "360p", "720p", "1080p")
RESOLUTION_PIXELS: dict[str, tuple[int, int]] = {
    "224p": (400, 224),
    "360p": (640, 360),
    "720p": (1280, 720),
    "1080p": (1920, 1080),
}
VIDEO_TYPES: tuple[str, ...] = ("documentary", "sport", "cartoon", "movie")

GRID_SAT_LO = 0.6
GRID_SAT_HI = 1.0
GRID_SAT_STEP = 0.025

# Margin below the curve asymptote 1 - m used when a requested score is not
# attainable at any finite rate.
ASYMPTOTE_EPS = 1e-4


class SingularRateError(ValueError):
    """Raised when a rate hits the pole of the satisfaction curve."""


class UnreachableTargetError(ValueError):
    """Raised when a satisfaction target is at or beyond the curve asymptote."""


class GridDerivationError(ValueError):
    """Raised when no grid level is invertible for some (video, resolution)."""


def res_index(resolution: str) -> int:
    """Ordinal of a resolution name (224p=0 ... 1080p=3)."""
    try:
        return RESOLUTIONS.index(resolution)
    except ValueError:
        raise ValueError(f"unknown resolution {resolution!r}") from None


def switching_window(display: str, switching: str = "adjacent") -> tuple[str, ...]:
    """Encoded resolutions a display may play.

    ``adjacent`` allows one step of up/down-sampling, clipped at the ends of
    the resolution ladder; ``none`` restricts playback to the display's own
    resolution.
    """
    i = res_index(display)
    if switching == "none":
        return (display,)
    if switching == "adjacent":
        return tuple(RESOLUTIONS[j] for j in range(max(0, i - 1), min(len(RESOLUTIONS), i + 2)))
    raise ValueError(f"unknown switching mode {switching!r}")


@dataclass(frozen=True)
class SatParams:
    """Coefficients of one satisfaction curve."""

    m: float
    n: float  # kbps
    o: float  # kbps

    @property
    def asymptote(self) -> float:
        """Score approached as rate grows without bound."""
        return 1.0 - self.m


def satisfaction(params: SatParams, rate: float) -> float:
    """Satisfaction score in [0, 1] at an encoding rate in kbps.

    Rates at or below the curve pole (-o, only reachable when o < 0) are
    below any admissible encoding rate for the fitted range and score 0.
    An exact hit of the pole raises :class:`SingularRateError`.
    """
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    denom = rate + params.o
    if denom == 0:
        raise SingularRateError(f"rate {rate} kbps hits the curve pole at {-params.o} kbps")
    if denom < 0:
        return 0.0
    raw = 1.0 - (params.m + params.n / denom)
    return min(1.0, max(0.0, raw))


def invert_satisfaction(params: SatParams, target: float) -> float:
    """Rate in kbps at which the curve reaches ``target``.

    Requires n > 0 (a strictly increasing curve) and a target strictly below
    the asymptote 1 - m.
    """
    if params.n <= 0:
        raise ValueError("inversion requires n > 0 (increasing curve)")
    if target <= 0:
        raise ValueError(f"target must be positive, got {target}")
    denom = 1.0 - target - params.m
    if denom <= 1e-12:
        raise UnreachableTargetError(
            f"target {target} is at or beyond the asymptote {params.asymptote:.4f}"
        )
    rate = params.n / denom - params.o
    if rate <= 0:
        raise UnreachableTargetError(
            f"target {target} is not attained at any positive rate"
        )
    return rate


def clamped_target(params: SatParams, target: float, eps: float = ASYMPTOTE_EPS) -> float:
    """Pull a target below the asymptote so the inversion stays defined."""
    return min(target, params.asymptote - eps)


def round_rate(rate: float) -> int:
    """Round a rate to integer kbps, halves up."""
    return int(math.floor(rate + 0.5))


class SatisfactionTable:
    """Lookup of SatParams by (video, display resolution, encoded resolution)."""

    def __init__(self, rows: Mapping[tuple[str, str, str], SatParams]):
        self._rows = dict(rows)

    def __contains__(self, key: tuple[str, str, str]) -> bool:
        return key in self._rows

    def __len__(self) -> int:
        return len(self._rows)

    def params(self, video: str, display: str, encoded: str) -> SatParams:
        try:
            return self._rows[(video, display, encoded)]
        except KeyError:
            raise KeyError(
                f"no satisfaction row for video={video!r} display={display!r} encoded={encoded!r}"
            ) from None

    def rows(self) -> Iterator[tuple[tuple[str, str, str], SatParams]]:
        return iter(sorted(self._rows.items()))

    def videos(self) -> tuple[str, ...]:
        return tuple(sorted({v for (v, _, _) in self._rows}))

    def score(self, video: str, display: str, encoded: str, rate: float) -> float:
        return satisfaction(self.params(video, display, encoded), rate)

    @classmethod
    def from_rows(cls, rows: Iterable[dict]) -> "SatisfactionTable":
        table = {}
        for row in rows:
            key = (row["video"], row["display"], row["encoded"])
            if key in table:
                raise ValueError(f"duplicate satisfaction row {key}")
            table[key] = SatParams(float(row["m"]), float(row["n"]), float(row["o"]))
        return cls(table)

    @classmethod
    def from_json(cls, path) -> "SatisfactionTable":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls.from_rows(payload["rows"])


class RateBounds:
    """Admissible encoding-rate range (kbps, inclusive) per (video, resolution)."""

    def __init__(self, bounds: Mapping[tuple[str, str], tuple[int, int]]):
        for key, (lo, hi) in bounds.items():
            if not (0 < lo < hi):
                raise ValueError(f"invalid rate bounds {lo}..{hi} for {key}")
        self._bounds = {k: (int(lo), int(hi)) for k, (lo, hi) in bounds.items()}

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._bounds

    def __len__(self) -> int:
        return len(self._bounds)

    def bounds(self, video: str, resolution: str) -> tuple[int, int]:
        try:
            return self._bounds[(video, resolution)]
        except KeyError:
            raise KeyError(f"no rate bounds for video={video!r} resolution={resolution!r}") from None

    def admits(self, video: str, resolution: str, rate: float) -> bool:
        lo, hi = self.bounds(video, resolution)
        return lo <= rate <= hi

    def items(self) -> Iterator[tuple[tuple[str, str], tuple[int, int]]]:
        return iter(sorted(self._bounds.items()))

    @classmethod
    def from_json(cls, path) -> "RateBounds":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        return cls(
            {
                (row["video"], row["resolution"]): (row["min_kbps"], row["max_kbps"])
                for row in payload["rows"]
            }
        )


def _data_path(name: str):
    return resources.files("repset.data").joinpath(name)


def load_satisfaction_table(path=None) -> SatisfactionTable:
    """The bundled coefficient table, or one loaded from ``path``."""
    if path is not None:
        return SatisfactionTable.from_json(path)
    with resources.as_file(_data_path("satisfaction_params.json")) as p:
        return SatisfactionTable.from_json(p)


def load_rate_bounds(path=None) -> RateBounds:
    """The bundled reference rate-bounds table, or one loaded from ``path``."""
    if path is not None:
        return RateBounds.from_json(path)
    with resources.as_file(_data_path("rate_bounds.json")) as p:
        return RateBounds.from_json(p)


def grid_levels(sat_lo: float = GRID_SAT_LO, sat_hi: float = GRID_SAT_HI,
                step: float = GRID_SAT_STEP) -> tuple[float, ...]:
    """Uniform satisfaction levels from sat_lo to sat_hi inclusive."""
    if not (0.0 < sat_lo < sat_hi <= 1.0):
        raise ValueError(f"need 0 < sat_lo < sat_hi <= 1, got {sat_lo}..{sat_hi}")
    if step <= 0:
        raise ValueError("step must be positive")
    count = int(round((sat_hi - sat_lo) / step))
    if not math.isclose(sat_lo + count * step, sat_hi, abs_tol=1e-9):
        raise ValueError("step must divide the satisfaction range evenly")
    return tuple(round(sat_lo + i * step, 10) for i in range(count)) + (sat_hi,)


def derive_rate_bounds(table: SatisfactionTable, reference: RateBounds | None = None,
                       sat_lo: float = GRID_SAT_LO, sat_hi: float = GRID_SAT_HI) -> RateBounds:
    """Analytically derive per (video, resolution) rate bounds from the curves.

    Only rows with display == encoded resolution define bounds. The lower
    bound is the rate scoring ``sat_lo``; the upper bound the rate scoring
    ``sat_hi``. When ``sat_hi`` sits at or beyond a curve's asymptote the
    inversion has no finite answer: the ``reference`` value is substituted
    if given, otherwise the rate at (asymptote - 1e-4) is used.
    """
    out: dict[tuple[str, str], tuple[int, int]] = {}
    for (video, display, encoded), params in table.rows():
        if display != encoded:
            continue
        lo = round_rate(invert_satisfaction(params, sat_lo))
        hi_target = clamped_target(params, sat_hi)
        if hi_target < sat_hi and reference is not None and (video, encoded) in reference:
            hi = reference.bounds(video, encoded)[1]
        else:
            hi = round_rate(invert_satisfaction(params, hi_target))
        out[(video, encoded)] = (max(lo, 1), hi)
    return RateBounds(out)


def derive_rate_grid(table: SatisfactionTable, bounds: RateBounds,
                     sat_lo: float = GRID_SAT_LO, sat_hi: float = GRID_SAT_HI,
                     step: float = GRID_SAT_STEP) -> dict[tuple[str, str], tuple[int, ...]]:
    """Candidate encoding rates per (video, resolution).

    Satisfaction levels sat_lo, sat_lo+step, ..., sat_hi are mapped to rates
    by inverting the display==encoded curve; a 1.0 top level takes the upper
    bound from ``bounds`` instead of the ill-conditioned inversion. Rates are
    rounded to integer kbps, deduplicated and sorted ascending.
    """
    levels = grid_levels(sat_lo, sat_hi, step)
    grid: dict[tuple[str, str], tuple[int, ...]] = {}
    for (video, display, encoded), params in table.rows():
        if display != encoded:
            continue
        rates = []
        for level in levels:
            if level == levels[-1] and level >= 1.0:
                rates.append(bounds.bounds(video, encoded)[1])
                continue
            target = clamped_target(params, level)
            if target <= 0:
                continue
            rates.append(round_rate(invert_satisfaction(params, target)))
        if not rates:
            raise GridDerivationError(f"no grid level invertible for ({video}, {encoded})")
        grid[(video, encoded)] = tuple(sorted({max(r, 1) for r in rates}))
    return grid
