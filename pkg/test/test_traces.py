'''Unit tests for traces.py: canonical trace files, conversion, GoP grouping, synthetic traces.'''

import math

import numpy as np
import pytest
import structlog

from dashsched.quality import apply_quality
from dashsched.rng import episode_rng
from dashsched.traces import (
    FrameTrace,
    TraceFormatError,
    convert_trace,
    load_trace,
    mean_rate,
    synth_trace,
    to_gops,
    write_trace,
)


def _write(tmp_path, text, name='t.trace'):
    p = tmp_path / name
    p.write_text(text, encoding='utf-8')
    return p


def test_load_trace_minimal(tmp_path):
    p = _write(tmp_path, 'frame_rate=30,gop_frames=16,label=x\n0,100\n1,200\n2,300\n')
    trace = load_trace(p)
    assert trace.label == 'x'
    assert trace.frame_rate == 30.0
    assert trace.gop_frames == 16
    assert trace.frames == [(0, 100), (1, 200), (2, 300)]
    assert trace.qp is None


def test_load_trace_comments_blank_lines_and_qp(tmp_path):
    p = _write(tmp_path, '# encoded with x264\n\nframe_rate=25,gop_frames=8,label=y,qp=28\n# first\n0,10\n\n1,20\n')
    trace = load_trace(p)
    assert trace.qp == '28'
    assert trace.sizes_bits == (10, 20)


def test_load_trace_missing_header(tmp_path):
    p = _write(tmp_path, '0,100\n1,200\n')
    with pytest.raises(TraceFormatError, match=r't\.trace:1: missing header'):
        load_trace(p)


def test_load_trace_header_missing_key(tmp_path):
    p = _write(tmp_path, 'frame_rate=30,label=x\n0,100\n')
    with pytest.raises(TraceFormatError, match='missing gop_frames'):
        load_trace(p)


def test_load_trace_noncontiguous_index_names_line(tmp_path):
    p = _write(tmp_path, 'frame_rate=30,gop_frames=16,label=x\n0,100\n2,200\n')
    with pytest.raises(TraceFormatError, match=r't\.trace:3: frame index 2, expected 1'):
        load_trace(p)


@pytest.mark.parametrize('row,fragment', [
    ('0,abc', 'non-integer'),
    ('0,1,2', 'expected frame_index,size_bits'),
    ('0,0', 'must be positive'),
])
def test_load_trace_bad_rows(tmp_path, row, fragment):
    p = _write(tmp_path, f'frame_rate=30,gop_frames=16,label=x\n{row}\n')
    with pytest.raises(TraceFormatError, match=fragment):
        load_trace(p)


def test_load_trace_empty_file(tmp_path):
    p = _write(tmp_path, '# nothing here\n')
    with pytest.raises(TraceFormatError, match='empty trace file'):
        load_trace(p)


def test_trace_format_error_is_value_error():
    assert issubclass(TraceFormatError, ValueError)


def test_write_then_load(tmp_path):
    trace = FrameTrace('clip', 24.0, 12, (5, 6, 7), qp='22')
    write_trace(trace, tmp_path / 'sub' / 'clip.trace')
    assert load_trace(tmp_path / 'sub' / 'clip.trace') == trace


def test_convert_trace_bytes(tmp_path):
    src = _write(tmp_path, '# idx size\n0 100\n1   250\n\n2\t75\n', name='raw.txt')
    dst = tmp_path / 'out.trace'
    with structlog.testing.capture_logs() as logs:
        trace = convert_trace(src, dst, frame_rate=25, gop_frames=3, unit='bytes')
    assert trace.sizes_bits == (800, 2000, 600)
    assert trace.label == 'raw'
    assert load_trace(dst) == trace
    assert any(e['event'] == 'trace converted' for e in logs)


def test_convert_trace_bad_column_count(tmp_path):
    src = _write(tmp_path, '0 100\n1 2 3\n', name='raw.txt')
    with pytest.raises(TraceFormatError, match=r'raw\.txt:2: expected two columns'):
        convert_trace(src, tmp_path / 'out.trace')


def test_convert_trace_bad_unit(tmp_path):
    src = _write(tmp_path, '0 100\n', name='raw.txt')
    with pytest.raises(ValueError, match='unit'):
        convert_trace(src, tmp_path / 'out.trace', unit='kb')


def test_to_gops_sums_frames():
    trace = FrameTrace('x', 30.0, 16, (1000,) * 16)
    video = to_gops(trace, packet_size_L=1500)
    assert len(video.gops) == 1
    assert video.gops[0].size_bits == 16000
    assert video.gops[0].size_packets == 2


def test_to_gops_two_gops():
    trace = FrameTrace('x', 30.0, 16, tuple(range(1, 33)))
    video = to_gops(trace)
    assert [g.size_bits for g in video.gops] == [sum(range(1, 17)), sum(range(17, 33))]
    assert [g.index for g in video.gops] == [0, 1]


def test_to_gops_drops_partial_gop_with_warning():
    trace = FrameTrace('x', 30.0, 16, (1000,) * 17)
    with structlog.testing.capture_logs() as logs:
        video = to_gops(trace)
    assert len(video.gops) == 1
    warnings = [e for e in logs if e['event'] == 'partial GoP dropped']
    assert warnings and warnings[0]['log_level'] == 'warning'
    assert warnings[0]['frames'] == 1


def test_to_gops_override_gop_length():
    trace = FrameTrace('x', 30.0, 16, (1000,) * 16)
    video = to_gops(trace, gop_frames=8)
    assert video.gop_frames == 8
    assert len(video.gops) == 2


def test_to_gops_too_short():
    with pytest.raises(ValueError, match='less than one GoP'):
        to_gops(FrameTrace('x', 30.0, 16, (1000,) * 5))


def test_mean_rate():
    # 2 GoPs of 3 packets, each GoP 16/30 s
    trace = FrameTrace('x', 30.0, 16, (2250,) * 32)
    video = to_gops(trace, packet_size_L=1500)
    assert video.packets == [3, 3]
    assert mean_rate(video) == pytest.approx(6 / (2 * 16 / 30))
    assert mean_rate(video) == pytest.approx(5.625)


def test_mean_rate_scales_with_quality_level():
    trace = FrameTrace('x', 30.0, 16, (120_000,) * 160)
    video = to_gops(trace, packet_size_L=1500)
    low = apply_quality(video, 1)
    ratio = mean_rate(low) / mean_rate(video)
    # packets round up, so the ratio sits a little above the level weight
    assert 0.05 - 1e-12 <= ratio <= 0.05 + 1 / min(video.packets)


def test_synth_trace_constant_when_cv_zero():
    video = synth_trace(np.random.default_rng(0), 96000, 0.0, 10, label='c')
    assert {g.size_bits for g in video.gops} == {96000}
    assert video.packets == [8] * 10


def test_synth_trace_mean_within_four_sigma():
    mean, cv, n = 200_000.0, 0.5, 10_000
    video = synth_trace(episode_rng(5, 0, 'trace'), mean, cv, n)
    bits = np.array([g.size_bits for g in video.gops], dtype=float)
    assert abs(bits.mean() - mean) < 4 * mean * cv / math.sqrt(n)


def test_synth_trace_seeds_differ():
    a = synth_trace(episode_rng(1, 0, 'trace'), 96000, 0.5, 20)
    b = synth_trace(episode_rng(2, 0, 'trace'), 96000, 0.5, 20)
    c = synth_trace(episode_rng(1, 0, 'trace'), 96000, 0.5, 20)
    assert a.packets != b.packets
    assert a == c


def test_synth_trace_rejects_bad_args():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match='cv'):
        synth_trace(rng, 96000, -0.1, 5)
    with pytest.raises(ValueError):
        synth_trace(rng, 0, 0.5, 5)
