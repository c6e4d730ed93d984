'''
Video traces: frame-size files in, GoP-level VideoTraces out.

Canonical trace file:

    frame_rate=30,gop_frames=16,label=tokyo-qp16
    0,41208
    1,10344
    ...

A header of comma-separated key=value pairs (frame_rate, gop_frames and label are
required; qp is optional), then one `frame_index,size_bits` row per frame with
indices contiguous from 0. Blank lines and lines starting with # are ignored.

Public frame-size traces usually come as whitespace-separated columns; convert_trace
turns the two-column `index size` form into the canonical format.
'''

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog

from dashsched.model import GopRecord, VideoTrace, packets_of_gop


_REQUIRED_HEADER = ('frame_rate', 'gop_frames', 'label')


class TraceFormatError(ValueError):
    '''Malformed trace file; the message names the path and the offending line.'''


@dataclass(frozen=True)
class FrameTrace:
    '''Per-frame sizes in bits, indices implicit and contiguous from 0.'''

    label: str
    frame_rate: float
    gop_frames: int
    sizes_bits: tuple[int, ...]
    qp: str | None = None

    def __post_init__(self) -> None:
        for i, size in enumerate(self.sizes_bits):
            if size <= 0:
                raise ValueError(f'frame {i}: size must be positive, got {size}')

    @property
    def frames(self) -> list[tuple[int, int]]:
        return list(enumerate(self.sizes_bits))


def _parse_header(line: str, path: Path) -> dict[str, str]:
    fields = {}
    for part in line.split(','):
        key, sep, value = part.partition('=')
        if not sep:
            raise TraceFormatError(f'{path}:1: header field {part.strip()!r} is not key=value')
        fields[key.strip()] = value.strip()
    missing = [k for k in _REQUIRED_HEADER if k not in fields]
    if missing:
        raise TraceFormatError(f'{path}:1: header missing {", ".join(missing)}')
    return fields


def load_trace(path: Path | str) -> FrameTrace:
    '''Read a canonical trace file.'''
    path = Path(path)
    lines = path.read_text(encoding='utf-8').splitlines()
    header = None
    sizes: list[int] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        if header is None:
            if '=' not in line:
                raise TraceFormatError(f'{path}:{lineno}: missing header line (frame_rate=...,gop_frames=...,label=...)')
            header = _parse_header(line, path)
            continue
        cols = line.split(',')
        if len(cols) != 2:
            raise TraceFormatError(f'{path}:{lineno}: expected frame_index,size_bits, got {line!r}')
        try:
            index, size = int(cols[0]), int(cols[1])
        except ValueError as e:
            raise TraceFormatError(f'{path}:{lineno}: non-integer field in {line!r}') from e
        if index != len(sizes):
            raise TraceFormatError(f'{path}:{lineno}: frame index {index}, expected {len(sizes)}')
        if size <= 0:
            raise TraceFormatError(f'{path}:{lineno}: frame size must be positive, got {size}')
        sizes.append(size)
    if header is None:
        raise TraceFormatError(f'{path}: empty trace file')
    try:
        frame_rate = float(header['frame_rate'])
        gop_frames = int(header['gop_frames'])
    except ValueError as e:
        raise TraceFormatError(f'{path}:1: bad frame_rate or gop_frames in header') from e
    if frame_rate <= 0 or gop_frames <= 0:
        raise TraceFormatError(f'{path}:1: frame_rate and gop_frames must be positive')
    return FrameTrace(
        label=header['label'],
        frame_rate=frame_rate,
        gop_frames=gop_frames,
        sizes_bits=tuple(sizes),
        qp=header.get('qp'),
    )


def write_trace(trace: FrameTrace, path: Path | str) -> None:
    '''Write the canonical format read by load_trace.'''
    path = Path(path)
    header = f'frame_rate={trace.frame_rate:g},gop_frames={trace.gop_frames},label={trace.label}'
    if trace.qp is not None:
        header += f',qp={trace.qp}'
    rows = [header] + [f'{i},{size}' for i, size in enumerate(trace.sizes_bits)]
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text('\n'.join(rows) + '\n', encoding='utf-8')


def convert_trace(
    src: Path | str,
    dst: Path | str,
    frame_rate: float = 30.0,
    gop_frames: int = 16,
    label: str = '',
    unit: str = 'bits',
) -> FrameTrace:
    '''
    Convert a two-column whitespace trace (`index size`, # comments allowed) to canonical form.

    unit is 'bits' or 'bytes' for the size column. Indices are renumbered from 0 in
    file order.
    '''
    src = Path(src)
    if unit not in ('bits', 'bytes'):
        raise ValueError(f'unit must be bits or bytes, got {unit!r}')
    scale = 8 if unit == 'bytes' else 1
    sizes = []
    for lineno, raw in enumerate(src.read_text(encoding='utf-8').splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        cols = line.split()
        if len(cols) != 2:
            raise TraceFormatError(f'{src}:{lineno}: expected two columns, got {len(cols)}')
        try:
            size = int(float(cols[1]) * scale)
        except ValueError as e:
            raise TraceFormatError(f'{src}:{lineno}: non-numeric size {cols[1]!r}') from e
        if size <= 0:
            raise TraceFormatError(f'{src}:{lineno}: frame size must be positive, got {size}')
        sizes.append(size)
    trace = FrameTrace(
        label=label or src.stem,
        frame_rate=float(frame_rate),
        gop_frames=int(gop_frames),
        sizes_bits=tuple(sizes),
    )
    write_trace(trace, dst)
    structlog.get_logger().info('trace converted', src=str(src), dst=str(dst), frames=len(sizes))
    return trace


def to_gops(
    trace: FrameTrace,
    gop_frames: int | None = None,
    packet_size_L: int = 1500,
    duration_slots: int = 1,
) -> VideoTrace:
    '''
    Group frames into GoPs of gop_frames (default: the trace's own) frames.

    A trailing partial GoP is dropped with a warning. duration_slots is usually a
    placeholder until the channel rate is known; the engine retimes the GoPs.
    '''
    g = gop_frames or trace.gop_frames
    n_gops = len(trace.sizes_bits) // g
    if n_gops == 0:
        raise ValueError(f'trace {trace.label!r}: {len(trace.sizes_bits)} frames is less than one GoP of {g}')
    leftover = len(trace.sizes_bits) - n_gops * g
    if leftover:
        structlog.get_logger().warning(
            'partial GoP dropped', label=trace.label, frames=leftover, gop_frames=g)
    gops = []
    for i in range(n_gops):
        bits = sum(trace.sizes_bits[i * g:(i + 1) * g])
        gops.append(GopRecord(i, bits, packets_of_gop(bits, packet_size_L), duration_slots))
    return VideoTrace(
        label=trace.label,
        frame_rate=trace.frame_rate,
        gop_frames=g,
        gops=tuple(gops),
        packet_size=packet_size_L,
    )


def mean_rate(trace: VideoTrace, packet_size_L: int | None = None) -> float:
    '''Average packet rate λ in packets/s: total packets over total display time.'''
    L = packet_size_L or trace.packet_size
    packets = sum(packets_of_gop(g.size_bits, L) for g in trace.gops)
    return packets / (len(trace.gops) * trace.gop_duration_s)


def synth_trace(
    rng: np.random.Generator,
    mean_bits: float,
    cv: float,
    n_gops: int,
    *,
    label: str = 'synthetic',
    frame_rate: float = 30.0,
    gop_frames: int = 16,
    packet_size_L: int = 1500,
    duration_slots: int = 1,
) -> VideoTrace:
    '''Lognormal GoP sizes with the given mean and coefficient of variation.'''
    if cv < 0:
        raise ValueError(f'cv must be non-negative, got {cv}')
    if mean_bits <= 0 or n_gops < 1:
        raise ValueError('mean_bits and n_gops must be positive')
    if cv == 0:
        draws = np.full(n_gops, float(mean_bits))
    else:
        sigma2 = math.log1p(cv * cv)
        mu = math.log(mean_bits) - sigma2 / 2
        draws = rng.lognormal(mu, math.sqrt(sigma2), size=n_gops)
    gops = []
    for i, x in enumerate(draws.tolist()):
        bits = max(1, math.floor(x + 0.5))
        gops.append(GopRecord(i, bits, packets_of_gop(bits, packet_size_L), duration_slots))
    return VideoTrace(
        label=label,
        frame_rate=frame_rate,
        gop_frames=gop_frames,
        gops=tuple(gops),
        packet_size=packet_size_L,
    )
