"""Gluing per-segment growth curves into one timeline, with age and calendar dates.

Segments are in chronological order and assumed contiguous: the first
sample of segment ``j`` coincides with the last sample of segment ``j-1``,
so it is dropped from the aggregate and only the first segment keeps its
starting sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bootstrap import percentile_ci
from .errors import ConfigError
from .model import TWO_PI, Signal
from .streams import generator, parallel_map

_CHUNK = 1 << 16


@dataclass(frozen=True, eq=False)
class Segment:
    signal: Signal
    g: np.ndarray | None
    bootstrap_cycles: np.ndarray | None = None
    name: str = ""

    @classmethod
    def from_fit(cls, signal, fit, run=None, name=""):
        return cls(signal, None if fit is None else np.asarray(fit.path.g),
                   None if run is None else np.asarray(run.cycles), name)

    @property
    def cycles(self):
        return float(self.g[-1]) / TWO_PI


@dataclass(frozen=True, eq=False)
class SegmentSet:
    segments: tuple
    death_year: float = 0.0

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ConfigError("need at least one segment")
        object.__setattr__(self, "segments", segs)

    def __len__(self):
        return len(self.segments)


@dataclass(frozen=True, eq=False)
class AggregatedGrowth:
    g: np.ndarray
    x: np.ndarray
    y: np.ndarray
    segment_id: np.ndarray
    index: np.ndarray          # sample index within its own segment
    offsets: np.ndarray        # start of each segment in the aggregate, plus the end
    segment_cycles: np.ndarray

    @property
    def total_phase(self):
        return float(self.g[-1])

    @property
    def age(self):
        return self.total_phase / TWO_PI

    @property
    def n_total(self):
        return self.g.size

    def then(self, other: "AggregatedGrowth") -> "AggregatedGrowth":
        """Append a later aggregate (its leading junction sample is dropped)."""
        shift = self.total_phase
        k = len(self.segment_cycles)
        return AggregatedGrowth(
            g=np.concatenate([self.g, shift + other.g[1:]]),
            x=np.concatenate([self.x, other.x[1:]]),
            y=np.concatenate([self.y, other.y[1:]]),
            segment_id=np.concatenate([self.segment_id, k + other.segment_id[1:]]),
            index=np.concatenate([self.index, other.index[1:]]),
            offsets=np.concatenate([self.offsets, self.offsets[-1] - 1 + other.offsets[1:]]),
            segment_cycles=np.concatenate([self.segment_cycles, other.segment_cycles]))


def _single(seg: Segment, sid: int) -> AggregatedGrowth:
    if seg.g is None:
        raise ConfigError(f"segment {seg.name or sid} has not been fitted")
    g = np.asarray(seg.g, dtype=float)
    if g.shape != seg.signal.y.shape:
        raise ConfigError(f"segment {seg.name or sid}: growth curve and signal lengths differ")
    m = g.size
    return AggregatedGrowth(g=g - g[0], x=np.asarray(seg.signal.x), y=np.asarray(seg.signal.y),
                            segment_id=np.zeros(m, dtype=int), index=np.arange(m),
                            offsets=np.array([0, m]), segment_cycles=np.array([seg.cycles]))


def aggregate(segment_set: SegmentSet) -> AggregatedGrowth:
    """Cumulative growth over all segments; age is the terminal phase over 2*pi."""
    segs = segment_set.segments
    agg = _single(segs[0], 0)
    for j, seg in enumerate(segs[1:], start=1):
        agg = agg.then(_single(seg, j))
    return agg


def date_observations(agg: AggregatedGrowth, death_year: float) -> np.ndarray:
    """Calendar year of each sample; the last sample is dated ``death_year``."""
    return death_year - (agg.total_phase - agg.g) / TWO_PI


@dataclass(frozen=True)
class AgeEstimate:
    age: float
    low: float
    high: float
    level: float
    n_combinations: int

    @property
    def headline(self) -> int:
        # round half to even
        return int(round(self.age))


def _chunk_sums(tables, count, rng):
    total = np.zeros(count)
    for cyc in tables:
        total += cyc[rng.integers(0, cyc.size, size=count)]
    return total


def combination_ages(segment_set: SegmentSet, n_combinations: int, rng=0, threads=1):
    """Ages of random tuples taking one bootstrap replicate per segment.

    Only the scalar per-replicate cycle counts are combined. Chunk ``k`` of
    ``_CHUNK`` combinations draws from substream ``k`` of ``rng``.
    """
    if n_combinations < 1:
        raise ConfigError("n_combinations must be >= 1")
    tables = []
    for j, seg in enumerate(segment_set.segments):
        if seg.bootstrap_cycles is None or np.size(seg.bootstrap_cycles) == 0:
            raise ConfigError(f"segment {seg.name or j} has no bootstrap replicates")
        tables.append(np.asarray(seg.bootstrap_cycles, dtype=float))
    starts = range(0, n_combinations, _CHUNK)

    def run(k):
        count = min(_CHUNK, n_combinations - k * _CHUNK)
        return _chunk_sums(tables, count, generator(rng, k))

    return np.concatenate(parallel_map(run, range(len(starts)), threads))


def age_ci(segment_set: SegmentSet, n_combinations: int = 100_000, level: float = 0.95,
           rng=0, threads=1) -> AgeEstimate:
    """Point age from the aggregate and a percentile interval from combined replicates."""
    ages = combination_ages(segment_set, n_combinations, rng, threads)
    low, high = percentile_ci(ages, level)
    return AgeEstimate(aggregate(segment_set).age, low, high, level, n_combinations)


def timeline_rows(agg: AggregatedGrowth, death_year: float):
    """Columns for the exported timeline: segment_id, index, x, y, g, year."""
    years = date_observations(agg, death_year)
    return {"segment_id": agg.segment_id, "index": agg.index, "x": agg.x, "y": agg.y,
            "g": agg.g, "year": years}


def per_segment_cycles(agg: AggregatedGrowth):
    return [float(c) for c in agg.segment_cycles]

