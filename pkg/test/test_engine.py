'''Tests for engine.py: slot timing, scenario preparation, and the per-slot episode loop.'''

from dataclasses import replace

import pytest
import structlog

from dashsched.config import (
    ChannelConfig,
    ConfigError,
    DashConfig,
    QualityConfig,
    SchedulerConfig,
    SimConfig,
    SyntheticTraceSpec,
    TracesConfig,
)
from dashsched.channel import BernoulliErasure
from dashsched.engine import load_traces, prepare_scenario, resolve_timing, retime, run_episode
from dashsched.model import GopRecord, VideoTrace
from dashsched.scheduler import SchedulerKind
from dashsched.traces import FrameTrace, write_trace


def _hand_trace():
    gops = (GopRecord(0, 48000, 4, 1), GopRecord(1, 48000, 4, 1))
    return VideoTrace('hand', 30.0, 16, gops)


def _hand_scenario(**sim):
    params = dict(gops_per_segment=2, segments=1, inverse_utilization=0.5, initial_buffer=0.0, rebuffer=2.0)
    params.update(sim)
    cfg = DashConfig(sim=SimConfig(**params), channel=ChannelConfig(loss=0.0))
    return prepare_scenario(cfg, [_hand_trace()])


def _cfg(
    n_users=3,
    *,
    loss=0.2,
    rho=1.2,
    kind='bdra',
    mode='gop',
    adaptation=False,
    segments=2,
    G=5,
    ib=0.5,
    model='bernoulli',
    cv=0.5,
    tiebreak='index',
):
    specs = tuple(
        SyntheticTraceSpec(f'u{i}', 48000.0 * (i + 1), cv, segments * G, seed=i) for i in range(n_users))
    return DashConfig(
        sim=SimConfig(gops_per_segment=G, segments=segments, inverse_utilization=rho,
                      initial_buffer=ib, rebuffer=1.0, request_mode=mode, seed=5),
        scheduler=SchedulerConfig(kind=kind, tiebreak=tiebreak),
        channel=ChannelConfig(model=model, loss=loss),
        quality=QualityConfig(adaptation=adaptation),
        traces=TracesConfig(synthetic=specs),
    )


def _scenario(**kw):
    cfg = _cfg(**kw)
    return prepare_scenario(cfg, load_traces(cfg))


def test_hand_case_timing():
    sc = _hand_scenario()
    assert sc.timing.channel_rate == pytest.approx(5625.0)
    assert sc.timing.duration_slots == 2
    assert sc.timing.rebuffer_slots == 8
    assert sc.timing.initial_buffer_slots == 0
    assert sc.timing.inverse_utilization == pytest.approx(0.5)
    assert sc.horizon_T == 4


def test_hand_case_episode():
    '''One user, two 4-packet GoPs, 2-slot GoPs, lossless: one stall, then on time.'''
    result = run_episode(_hand_scenario(), record_events=True)
    assert result.metrics.stalls == [[1]]
    assert result.end_slot == 8
    assert result.segment_levels == [[6]]
    assert result.metrics.level_tallies[0][5] == 1
    key = [e for e in result.events if e[1] in ('stall', 'gop_complete')]
    assert key == [(2, 'stall', 0, '0'), (3, 'gop_complete', 0, '0'), (7, 'gop_complete', 0, '1')]


def test_rate_error_is_reported():
    with structlog.testing.capture_logs() as logs:
        sc = _hand_scenario(inverse_utilization=0.6)
    # 4.5 slots/s: a 16/30 s GoP is 2.4 slots, rounded to 2
    assert sc.timing.duration_slots == 2
    assert sc.timing.rate_error == pytest.approx(-1 / 6)
    resolved = [e for e in logs if e['event'] == 'slot timing resolved']
    assert resolved and resolved[0]['duration_slots'] == 2


def test_fixed_channel_rate_overrides_rho():
    cfg = DashConfig(sim=SimConfig(gops_per_segment=2, channel_rate=11250.0))
    timing = resolve_timing(cfg.sim, [_hand_trace()], 0.5)
    assert timing.inverse_utilization == pytest.approx(1.0)
    assert timing.duration_slots == 4


def test_episode_is_deterministic():
    sc = _scenario()
    a = run_episode(sc, 3, record_events=True)
    b = run_episode(sc, 3, record_events=True)
    assert a.events == b.events
    assert a.metrics.stalls == b.metrics.stalls
    assert a.end_slot == b.end_slot


@pytest.mark.parametrize('mode', ['gop', 'supergop'])
def test_bdra_decisions_ignore_channel_model(monkeypatch, mode):
    '''Same delivery outcomes under different channel models give the same BDRA decisions.'''
    def fixed_outcome(model, user, rng):
        return rng.random() < 0.6

    monkeypatch.setattr('dashsched.engine.sample_channel', fixed_outcome)
    base = _scenario(rho=0.9, mode=mode)
    channels = [
        BernoulliErasure((0.3, 0.3, 0.3)),
        BernoulliErasure((0.95, 0.5, 0.1)),
        _scenario(rho=0.9, mode=mode, model='markov').channel,
    ]
    runs = [run_episode(replace(base, channel=ch), 1, record_events=True) for ch in channels]
    assert any(e[1] == 'loss' for e in runs[0].events)
    for other in runs[1:]:
        assert other.events == runs[0].events
        assert other.metrics.stalls == runs[0].metrics.stalls


def test_episodes_differ():
    sc = _scenario()
    assert run_episode(sc, 0, record_events=True).events != run_episode(sc, 1, record_events=True).events


def test_episode_bookkeeping_invariants():
    sc = _scenario(rho=1.0, loss=0.3)
    for ep in range(5):
        result = run_episode(sc, ep, record_events=True)
        m = result.metrics
        assert sum(m.histogram.values()) == sc.num_users * sc.segments
        assert sum(1 for e in result.events if e[1] == 'stall') == m.total_stalls
        for tallies in m.level_tallies:
            assert sum(tallies) == sc.segments
        completes = [e for e in result.events if e[1] == 'gop_complete']
        assert len(completes) == sc.num_users * sc.segments * sc.gops_per_segment


@pytest.mark.parametrize('kind', ['bdra', 'rfra', 'wrfra', 'dwrfra', 'random'])
@pytest.mark.parametrize('mode', ['gop', 'supergop'])
def test_lossless_schedulers_never_idle(kind, mode):
    '''With every packet delivered, an episode lasts exactly as many slots as it has packets.'''
    sc = _scenario(kind=kind, mode=mode, loss=0.0)
    total = sum(sum(levels[-1]) for levels in sc.level_packets)
    result = run_episode(sc, 0)
    assert result.end_slot == total


def test_random_tiebreak_runs():
    sc = _scenario(tiebreak='random', loss=0.0)
    assert run_episode(sc, 0).end_slot > 0


def test_ample_capacity_never_stalls():
    for kind in ('bdra', 'rfra', 'wrfra', 'dwrfra'):
        cfg = _cfg(rho=3.0, loss=0.0, cv=0.0, kind=kind)
        sc = prepare_scenario(cfg, load_traces(cfg))
        assert run_episode(sc, 0).metrics.total_stalls == 0


def test_markov_channel_episode_is_deterministic():
    sc = _scenario(model='markov')
    a = run_episode(sc, 2, record_events=True)
    b = run_episode(sc, 2, record_events=True)
    assert a.events == b.events


def test_supergop_records_deadline_extensions():
    sc = _scenario(mode='supergop', rho=0.7, loss=0.3)
    result = run_episode(sc, 0, record_events=True)
    assert result.metrics.total_stalls > 0
    assert any(e[1] == 'extend' for e in result.events)


def test_adaptation_moves_one_level_at_a_time():
    sc = _scenario(rho=0.8, loss=0.1, adaptation=True, segments=4)
    result = run_episode(sc, 0, record_events=True)
    for levels in result.segment_levels:
        assert len(levels) == sc.segments
        assert all(1 <= lv <= 6 for lv in levels)
        assert all(abs(b - a) <= 1 for a, b in zip(levels, levels[1:]))
    assert any(lv < 6 for levels in result.segment_levels for lv in levels)
    assert any(e[1] == 'adapt' for e in result.events)


def test_adaptation_off_keeps_initial_level():
    sc = _scenario(rho=0.8, loss=0.1, segments=3)
    result = run_episode(sc, 0)
    assert result.segment_levels == [[6, 6, 6]] * sc.num_users


def test_wrfra_weights_default_to_source_rates():
    sc = _scenario(kind='wrfra')
    assert sc.scheduler is SchedulerKind.WRFRA
    assert sc.weights == sc.timing.lambdas


def test_users_cycle_through_traces():
    cfg = _cfg(n_users=2)
    cfg = replace(cfg, sim=replace(cfg.sim, num_users=5))
    sc = prepare_scenario(cfg, load_traces(cfg))
    assert [t.label for t in sc.traces] == ['u0', 'u1', 'u0', 'u1', 'u0']


def test_prepare_rejects_no_traces():
    with pytest.raises(ConfigError, match='traces'):
        prepare_scenario(DashConfig(), [])


def test_prepare_rejects_segment_longer_than_trace():
    cfg = DashConfig(sim=SimConfig(gops_per_segment=3))
    with pytest.raises(ConfigError, match='sim.gops_per_segment'):
        prepare_scenario(cfg, [_hand_trace()])


def test_prepare_rejects_too_many_segments():
    cfg = DashConfig(sim=SimConfig(gops_per_segment=1, segments=3))
    with pytest.raises(ConfigError, match='sim.segments'):
        prepare_scenario(cfg, [_hand_trace()])


def test_prepare_rejects_loss_list_mismatch():
    cfg = DashConfig(sim=SimConfig(gops_per_segment=2), channel=ChannelConfig(loss=(0.1, 0.2)))
    with pytest.raises(ConfigError, match='channel.loss'):
        prepare_scenario(cfg, [_hand_trace()])


def test_prepare_rejects_weight_count_mismatch():
    cfg = DashConfig(sim=SimConfig(gops_per_segment=2), scheduler=SchedulerConfig(kind='wrfra', weights=(1.0, 2.0)))
    with pytest.raises(ConfigError, match='scheduler.weights'):
        prepare_scenario(cfg, [_hand_trace()])


def test_prepare_rejects_mixed_gop_durations():
    other = VideoTrace('other', 25.0, 16, _hand_trace().gops)
    cfg = DashConfig(sim=SimConfig(gops_per_segment=2))
    with pytest.raises(ConfigError, match='GoP duration'):
        prepare_scenario(cfg, [_hand_trace(), other])


def test_retime_recomputes_packets():
    trace = retime(_hand_trace(), 7, packet_size_L=1000)
    assert trace.duration_slots == 7
    assert trace.packets == [6, 6]


def test_load_traces_files_and_synthetic(tmp_path):
    write_trace(FrameTrace('clip', 30.0, 16, (12000,) * 32), tmp_path / 'clip.trace')
    cfg = DashConfig(traces=TracesConfig(
        files=('clip.trace',),
        synthetic=(SyntheticTraceSpec('s', 96000.0, 0.0, 4),),
    ))
    traces = load_traces(cfg, base_dir=tmp_path)
    assert [t.label for t in traces] == ['clip', 's']
    assert traces[0].packets == [16, 16]
    assert traces[1].packets == [8] * 4


def test_load_traces_missing_file(tmp_path):
    cfg = DashConfig(traces=TracesConfig(files=('nope.trace',)))
    with pytest.raises(FileNotFoundError, match='nope.trace'):
        load_traces(cfg, base_dir=tmp_path)
