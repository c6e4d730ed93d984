'''
Client-side quality levels and the segment-boundary switching rule.

Level l ∈ [1, 6] requests the source GoPs scaled by QUALITY_WEIGHTS[l - 1]; level 6
is the source bit-rate. After each segment a client steps down one level if it
stalled during the segment, or steps up one level if it did not and its last GoP
arrived at least threshold_gops GoP durations ahead of its deadline.
'''

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from dashsched.model import VideoTrace, packets_of_gop


QUALITY_WEIGHTS = (0.05, 0.08, 0.13, 0.26, 0.47, 1.0)
MIN_LEVEL = 1
MAX_LEVEL = len(QUALITY_WEIGHTS)


@dataclass
class ClientState:
    '''Per-client playback bookkeeping owned by one episode.'''

    quality_level: int = MAX_LEVEL
    gop_cursor: int = 0
    segment_cursor: int = 0
    stall_count: int = 0
    last_delivery_lead: int = 0
    done: bool = False


def check_level(level: int) -> int:
    if not MIN_LEVEL <= level <= MAX_LEVEL:
        raise ValueError(f'quality level must lie in [{MIN_LEVEL}, {MAX_LEVEL}], got {level}')
    return level


def apply_quality(trace: VideoTrace, level: int) -> VideoTrace:
    '''trace with every GoP's bits scaled by the level's weight (rounded, at least 1 bit).'''
    weight = QUALITY_WEIGHTS[check_level(level) - 1]
    if level == MAX_LEVEL:
        return replace(trace, quality_level=level)
    gops = []
    for g in trace.gops:
        bits = max(1, math.floor(g.size_bits * weight + 0.5))
        gops.append(replace(g, size_bits=bits, size_packets=packets_of_gop(bits, trace.packet_size)))
    return replace(trace, gops=tuple(gops), quality_level=level)


def adapt_quality(
    client: ClientState,
    segment_had_stall: bool,
    lead_slots: int,
    threshold_gops: int,
    duration_slots: int,
) -> int:
    '''Level for the client's next segment; moves by at most one step.'''
    level = client.quality_level
    if segment_had_stall:
        return max(MIN_LEVEL, level - 1)
    if level < MAX_LEVEL and lead_slots >= threshold_gops * duration_slots:
        return level + 1
    return level
