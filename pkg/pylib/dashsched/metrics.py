'''
Per-episode QoE metrics and their Monte Carlo aggregation.

Stalls are counted per (user, segment). stalls_per_minute divides the total by the
summed video minutes of all users, i.e. total stalls / (N · video minutes) when all
users watch the same number of segments. Quality follows the segment tallies S_{i,l}
(segments user i watched at level l): the average level over users and segments,
each user weighted equally.
'''

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from dashsched.quality import MAX_LEVEL


SCALAR_METRICS = (
    'stalls_per_minute',
    'stalls_per_user',
    'worst_user_stalls_per_minute',
    'average_quality',
    'worst_user_quality',
    'zero_stall',
)


@dataclass
class EpisodeMetrics:
    '''
    stalls[u][j]: stalls user u suffered while owed segment j.
    level_tallies[u][l - 1]: segments user u received at quality level l.
    '''

    segment_minutes: float
    stalls: list[list[int]]
    level_tallies: list[list[int]]

    @classmethod
    def empty(cls, num_users: int, segments: int, segment_minutes: float) -> EpisodeMetrics:
        return cls(
            segment_minutes=segment_minutes,
            stalls=[[0] * segments for _ in range(num_users)],
            level_tallies=[[0] * MAX_LEVEL for _ in range(num_users)],
        )

    @property
    def num_users(self) -> int:
        return len(self.stalls)

    @property
    def segments(self) -> int:
        return len(self.stalls[0]) if self.stalls else 0

    @property
    def total_stalls(self) -> int:
        return sum(map(sum, self.stalls))

    @property
    def user_stalls(self) -> list[int]:
        return [sum(row) for row in self.stalls]

    @property
    def histogram(self) -> Counter:
        '''Stalls-in-segment → number of (user, segment) pairs; bins sum to N · segments.'''
        return Counter(n for row in self.stalls for n in row)

    @property
    def segment_total_histogram(self) -> Counter:
        '''Stalls summed over users in a segment → number of segments.'''
        return Counter(sum(row[j] for row in self.stalls) for j in range(self.segments))

    @property
    def user_minutes(self) -> float:
        return self.segments * self.segment_minutes

    @property
    def stalls_per_minute(self) -> float:
        minutes = self.num_users * self.user_minutes
        return self.total_stalls / minutes if minutes else 0.0

    @property
    def per_user_stalls_per_minute(self) -> list[float]:
        m = self.user_minutes
        return [s / m if m else 0.0 for s in self.user_stalls]

    @property
    def worst_user_stalls_per_minute(self) -> float:
        return max(self.per_user_stalls_per_minute, default=0.0)

    @property
    def per_user_quality(self) -> list[float]:
        out = []
        for tallies in self.level_tallies:
            s_i = sum(tallies)
            out.append(sum(l * n for l, n in enumerate(tallies, start=1)) / s_i if s_i else 0.0)
        return out

    @property
    def average_quality(self) -> float:
        q = self.per_user_quality
        return sum(q) / len(q) if q else 0.0

    @property
    def worst_user_quality(self) -> float:
        return min(self.per_user_quality, default=0.0)

    def scalars(self) -> dict[str, float]:
        return {
            'stalls_per_minute': self.stalls_per_minute,
            'stalls_per_user': self.total_stalls / self.num_users if self.num_users else 0.0,
            'worst_user_stalls_per_minute': self.worst_user_stalls_per_minute,
            'average_quality': self.average_quality,
            'worst_user_quality': self.worst_user_quality,
            'zero_stall': float(self.total_stalls == 0),
        }


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    stderr: float | None  # None with a single episode


@dataclass
class AggregateMetrics:
    '''Mean and standard error per scalar metric, plus summed histograms.'''

    episodes: int
    summaries: dict[str, MetricSummary] = field(default_factory=dict)
    histogram: Counter = field(default_factory=Counter)
    segment_total_histogram: Counter = field(default_factory=Counter)
    samples: dict[str, np.ndarray] = field(default_factory=dict)


def summarize(values: np.ndarray) -> MetricSummary:
    n = len(values)
    if n == 0:
        raise ValueError('no samples to summarize')
    mean = float(np.mean(values))
    if n == 1:
        return MetricSummary(mean, None)
    return MetricSummary(mean, float(np.std(values, ddof=1)) / math.sqrt(n))


def aggregate(episodes: list[EpisodeMetrics]) -> AggregateMetrics:
    '''Reduce episode metrics, which must already be in episode order.'''
    if not episodes:
        raise ValueError('episodes must be ≥ 1')
    result = AggregateMetrics(episodes=len(episodes))
    rows = [m.scalars() for m in episodes]
    for name in SCALAR_METRICS:
        result.samples[name] = np.array([r[name] for r in rows])
        result.summaries[name] = summarize(result.samples[name])
    for m in episodes:
        result.histogram.update(m.histogram)
        result.segment_total_histogram.update(m.segment_total_histogram)
    return result
