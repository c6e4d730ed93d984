'''
Core domain model: GoPs, traces, playout curves, system states and deadline schedules.

Time is slotted. One slot is one packet transmission time, L/r seconds, so every
GoP display duration and every deadline is a whole number of slots. A playout curve
p_i(t) is a right-continuous step function: the cumulative packets user i must hold
by slot t to display without interruption.

Everything here is value-semantic and immutable except SystemState, which an
episode owns and advances one slot at a time.
'''

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Literal


@dataclass(frozen=True)
class GopRecord:
    '''One group of pictures: the smallest independently decodable chunk.'''

    index: int
    size_bits: int
    size_packets: int
    duration_slots: int

    def __post_init__(self) -> None:
        if self.size_packets < 1:
            raise ValueError(f'GoP {self.index}: size_packets must be ≥ 1, got {self.size_packets}')
        if self.duration_slots < 1:
            raise ValueError(f'GoP {self.index}: duration_slots must be ≥ 1, got {self.duration_slots}')


@dataclass(frozen=True)
class VideoTrace:
    '''
    A GoP-level video trace.

    All GoPs share one display duration (gop_frames / frame_rate seconds, duration_slots
    slots once the channel rate is known). quality_level is 'source' for an unscaled
    trace, else the level in [1, 6] it was scaled to.
    '''

    label: str
    frame_rate: float
    gop_frames: int
    gops: tuple[GopRecord, ...]
    quality_level: int | Literal['source'] = 'source'
    packet_size: int = 1500

    def __post_init__(self) -> None:
        if not self.gops:
            raise ValueError(f'Trace {self.label!r}: no GoPs')
        durations = {g.duration_slots for g in self.gops}
        if len(durations) != 1:
            raise ValueError(f'Trace {self.label!r}: GoPs must share one duration, got {sorted(durations)}')

    @property
    def gop_duration_s(self) -> float:
        return self.gop_frames / self.frame_rate

    @property
    def duration_slots(self) -> int:
        return self.gops[0].duration_slots

    @property
    def packets(self) -> list[int]:
        return [g.size_packets for g in self.gops]


@dataclass(frozen=True)
class PlayoutCurve:
    '''
    Cumulative packet demand of one user over a segment of horizon_T slots.

    increments holds (deadline_slot, cumulative_packets) pairs, both strictly
    increasing; the jump at each deadline is that deadline's demand q_{i,m}.
    '''

    horizon_T: int
    increments: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        last_d, last_c = -1, 0
        for d, c in self.increments:
            if d <= last_d:
                raise ValueError(f'deadline slots must be strictly increasing: {self.increments}')
            if c <= last_c:
                raise ValueError(f'cumulative packets must be strictly increasing: {self.increments}')
            last_d, last_c = d, c
        if self.increments and last_d > self.horizon_T:
            raise ValueError(f'last deadline {last_d} beyond horizon {self.horizon_T}')

    @property
    def deadlines(self) -> list[int]:
        return [d for d, _ in self.increments]

    @property
    def jumps(self) -> list[int]:
        '''Jump heights q_m, i.e. the demand attached to each deadline.'''
        out, prev = [], 0
        for _, c in self.increments:
            out.append(c - prev)
            prev = c
        return out

    @property
    def total(self) -> int:
        return self.increments[-1][1] if self.increments else 0


@dataclass
class SystemState:
    '''Slot index k and per-user delivered packet counts s_1..s_N.'''

    slot_k: int
    delivered: list[int] = field(default_factory=list)

    @classmethod
    def fresh(cls, num_users: int) -> SystemState:
        return cls(0, [0] * num_users)

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(self.delivered)


@dataclass(frozen=True)
class DeadlineTask:
    '''Residual demand due at one deadline: user index → packets still owed.'''

    deadline_slot: int
    residuals: dict[int, int]


@dataclass(frozen=True)
class DeadlineSchedule:
    '''Ordered residual tasks, earliest deadline first.'''

    tasks: tuple[DeadlineTask, ...] = ()

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def total_for(self, user: int) -> int:
        return sum(t.residuals.get(user, 0) for t in self.tasks)


def packets_of_gop(size_bits: int, packet_size_L: int) -> int:
    '''Packets needed to carry size_bits; a partial packet still takes a whole slot.'''
    if size_bits <= 0:
        raise ValueError(f'size_bits must be positive, got {size_bits}')
    if packet_size_L <= 0:
        raise ValueError(f'packet size must be positive, got {packet_size_L}')
    return -(-size_bits // (8 * packet_size_L))


def build_playout_curve(
    trace: VideoTrace,
    packet_size_L: int,
    initial_buffer_slots: int,
    segment_window: tuple[int, int],
) -> PlayoutCurve:
    '''
    Playout curve for gop_count GoPs starting at first_gop.

    Increment m (1-based) is due at initial_buffer_slots + m · duration_slots and
    carries the cumulative packets of the first m GoPs of the window. Packet counts
    are recomputed from bits with packet_size_L.
    '''
    first_gop, gop_count = segment_window
    if gop_count <= 0:
        raise ValueError('segment window is empty')
    if first_gop < 0 or first_gop + gop_count > len(trace.gops):
        raise ValueError(
            f'window {segment_window} outside trace {trace.label!r} of {len(trace.gops)} GoPs')
    if initial_buffer_slots < 0:
        raise ValueError(f'initial buffer must be non-negative, got {initial_buffer_slots}')

    duration = trace.duration_slots
    increments = []
    cum = 0
    for m, gop in enumerate(trace.gops[first_gop:first_gop + gop_count], start=1):
        cum += packets_of_gop(gop.size_bits, packet_size_L)
        increments.append((initial_buffer_slots + m * duration, cum))
    return PlayoutCurve(horizon_T=increments[-1][0], increments=tuple(increments))


def playout_at(curve: PlayoutCurve, t: int) -> int:
    '''Right-continuous evaluation: cumulative demand of the latest increment due at or before t.'''
    if t < 0 or t > curve.horizon_T:
        raise ValueError(f'slot {t} outside [0, {curve.horizon_T}]')
    pos = bisect_right(curve.deadlines, t)
    return curve.increments[pos - 1][1] if pos else 0


def residual_deadlines(curves: list[PlayoutCurve], state: SystemState) -> DeadlineSchedule:
    '''
    Outstanding demand at every deadline from the current slot onwards.

    Delivered packets are netted off each user's earliest demands first. Deadlines at
    the current slot are kept (their demand is still owed this instant); tasks whose
    residuals are all zero are dropped.
    '''
    if len(curves) != len(state.delivered):
        raise ValueError(f'{len(curves)} curves for {len(state.delivered)} users')
    by_deadline: dict[int, dict[int, int]] = {}
    for user, (curve, got) in enumerate(zip(curves, state.delivered)):
        prev = 0
        for deadline, cum in curve.increments:
            owed = max(0, cum - got) - max(0, prev - got)
            prev = cum
            if owed > 0 and deadline >= state.slot_k:
                by_deadline.setdefault(deadline, {})[user] = owed
    return DeadlineSchedule(tuple(
        DeadlineTask(d, by_deadline[d]) for d in sorted(by_deadline)))


def inverse_utilization(channel_rate_r: float, packet_size_L: int, lambdas: list[float]) -> float:
    '''ρ⁻¹ = r / (L · Σ λ_i): channel rate over the aggregate video source rate.'''
    if channel_rate_r <= 0 or packet_size_L <= 0:
        raise ValueError('channel rate and packet size must be positive')
    if any(lam <= 0 for lam in lambdas):
        raise ValueError(f'source rates must be positive, got {lambdas}')
    denom = packet_size_L * sum(lambdas)
    if denom == 0:
        raise ValueError('aggregate source rate is zero')
    return channel_rate_r / denom


def seconds_to_slots(seconds: float, channel_rate_r: float, packet_size_L: int) -> int:
    '''Whole slots in a span of seconds; one slot lasts L / r seconds.'''
    return math.floor(seconds * channel_rate_r / packet_size_L + 0.5)


def gop_duration_slots(gop_duration_s: float, channel_rate_r: float, packet_size_L: int) -> int:
    '''GoP display duration in slots, never less than one.'''
    return max(1, math.floor(gop_duration_s * channel_rate_r / packet_size_L + 0.5))
