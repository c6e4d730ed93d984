'''
Slot-driven episode simulator.

An episode plays every user's video from the first GoP to the last. Each slot:

0. Markov channels step at dwell boundaries.
1. Expired client deadlines with packets still owed count as stalls and are pushed
   out by the rebuffer duration.
2. The scheduler picks a user from the edge server's deadline table.
3. One channel draw decides whether the packet got through.
4. A delivered packet that completes a GoP stands for the client's GET of the next
   one. At a segment boundary the client may switch quality before requesting the
   next segment.

In per-GoP request mode the edge server's table is the client's own GoP table. In
super-GoP mode the server only learns one deadline per segment (that of the
segment's first GoP) and schedules against that, while stalls are still measured
against the client's true GoP deadlines.
'''

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import structlog

from dashsched.channel import (
    BernoulliErasure,
    ChannelModel,
    MarkovModulated,
    advance_channel,
    initial_states,
    sample_channel,
)
from dashsched.config import ConfigError, DashConfig, SimConfig
from dashsched.metrics import EpisodeMetrics
from dashsched.model import (
    PlayoutCurve,
    VideoTrace,
    gop_duration_slots,
    inverse_utilization,
    packets_of_gop,
    seconds_to_slots,
)
from dashsched.quality import MAX_LEVEL, ClientState, adapt_quality, apply_quality
from dashsched.rng import UniformStream, episode_rng
from dashsched.scheduler import (
    DeadlineTracker,
    SchedulerKind,
    get_scheduler,
    on_deadline_expiry,
    on_gop_complete,
)
from dashsched.traces import load_trace, mean_rate, synth_trace, to_gops


@dataclass(frozen=True)
class Timing:
    '''Slot mapping derived from the traces and the channel rate.'''

    channel_rate: float  # bytes/s
    slots_per_second: float
    duration_slots: int
    initial_buffer_slots: int
    rebuffer_slots: int
    dwell_slots: int
    rate_error: float  # (rounded − exact) / exact GoP duration in slots
    inverse_utilization: float
    lambdas: tuple[float, ...]  # packets/s per user


@dataclass(frozen=True)
class Scenario:
    '''Everything an episode needs, resolved once per run.'''

    traces: tuple[VideoTrace, ...]  # source level, retimed to duration_slots
    level_packets: tuple[tuple[tuple[int, ...], ...], ...]  # [user][level - 1][gop]
    timing: Timing
    gops_per_segment: int
    segments: int
    gop_seconds: float
    scheduler: SchedulerKind
    channel: ChannelModel
    request_mode: str = 'gop'
    tiebreak: str = 'index'
    quantum: float = 1.0
    weights: tuple[float, ...] = ()
    adaptation: bool = False
    initial_level: int = MAX_LEVEL
    threshold_gops: int = 3
    seed: int = 0

    @property
    def num_users(self) -> int:
        return len(self.traces)

    @property
    def horizon_T(self) -> int:
        '''Slots per segment.'''
        return self.gops_per_segment * self.timing.duration_slots


@dataclass
class EpisodeResult:
    metrics: EpisodeMetrics
    end_slot: int
    segment_levels: list[list[int]]  # [user][segment] requested quality level
    events: list[tuple[int, str, int, str]] = field(default_factory=list)


def retime(trace: VideoTrace, duration_slots: int, packet_size_L: int | None = None) -> VideoTrace:
    '''trace with every GoP set to duration_slots (and packets recomputed for packet_size_L).'''
    L = packet_size_L or trace.packet_size
    gops = tuple(
        replace(g, duration_slots=duration_slots, size_packets=packets_of_gop(g.size_bits, L))
        for g in trace.gops)
    return replace(trace, gops=gops, packet_size=L)


def resolve_timing(sim: SimConfig, traces: list[VideoTrace], dwell_s: float) -> Timing:
    '''
    Channel rate r = ρ⁻¹ · L · Σλ (unless sim.channel_rate fixes it), one slot = L / r s.

    GoP durations are rounded to whole slots; the induced relative error is logged
    and carried in the manifest.
    '''
    L = sim.packet_size
    durations = {round(t.gop_duration_s, 12) for t in traces}
    if len(durations) != 1:
        raise ConfigError(f'traces: all traces must share one GoP duration, got {sorted(durations)} s')
    gop_s = durations.pop()
    lambdas = tuple(mean_rate(t, L) for t in traces)
    r = sim.channel_rate or sim.inverse_utilization * L * sum(lambdas)
    slots_per_s = r / L
    exact = gop_s * slots_per_s
    dur = gop_duration_slots(gop_s, r, L)
    timing = Timing(
        channel_rate=r,
        slots_per_second=slots_per_s,
        duration_slots=dur,
        initial_buffer_slots=seconds_to_slots(sim.initial_buffer, r, L),
        rebuffer_slots=max(1, seconds_to_slots(sim.rebuffer, r, L)),
        dwell_slots=max(1, seconds_to_slots(dwell_s, r, L)),
        rate_error=(dur - exact) / exact,
        inverse_utilization=inverse_utilization(r, L, list(lambdas)),
        lambdas=lambdas,
    )
    structlog.get_logger().info(
        'slot timing resolved', slots_per_s=round(slots_per_s, 3), duration_slots=dur,
        rate_error=timing.rate_error, rho=timing.inverse_utilization)
    return timing


def load_traces(cfg: DashConfig, base_dir: Path | None = None) -> list[VideoTrace]:
    '''
    Traces named by [traces]: files first, then synthetic entries.

    A trace file's own header fixes its frame rate and GoP length; [traces]
    frame_rate and gop_frames apply to the synthetic traces.
    '''
    L = cfg.sim.packet_size
    out = []
    for name in cfg.traces.files:
        path = Path(name)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise FileNotFoundError(f'trace file not found: {path}')
        out.append(to_gops(load_trace(path), packet_size_L=L))
    for spec in cfg.traces.synthetic:
        out.append(synth_trace(
            episode_rng(spec.seed, 0, 'trace'), spec.mean_bits, spec.cv, spec.n_gops,
            label=spec.label, frame_rate=cfg.traces.frame_rate,
            gop_frames=cfg.traces.gop_frames, packet_size_L=L))
    return out


def _build_channel(cfg: DashConfig, num_users: int, timing: Timing) -> ChannelModel:
    ch = cfg.channel
    if ch.model == 'markov':
        return MarkovModulated(ch.drop_probs, np.asarray(ch.gamma, dtype=float), timing.dwell_slots)
    try:
        return BernoulliErasure.from_loss(ch.loss if isinstance(ch.loss, float) else list(ch.loss), num_users)
    except ValueError as e:
        raise ConfigError(f'channel.loss: {e}') from e


def prepare_scenario(cfg: DashConfig, traces: list[VideoTrace]) -> Scenario:
    '''Resolve timing, segments, per-level packet tables and the channel for a run.'''
    if not traces:
        raise ConfigError('traces: no traces configured (set traces.files or [[traces.synthetic]])')
    sim = cfg.sim
    n = sim.num_users or len(traces)
    user_traces = [traces[i % len(traces)] for i in range(n)]
    timing = resolve_timing(sim, user_traces, cfg.channel.dwell)
    G = sim.gops_per_segment
    segments = sim.segments or min(len(t.gops) for t in user_traces) // G
    if segments < 1:
        raise ConfigError(f'sim.gops_per_segment: {G} GoPs is longer than the shortest trace')
    short = [t.label for t in user_traces if len(t.gops) < segments * G]
    if short:
        raise ConfigError(f'sim.segments: {segments} segments of {G} GoPs exceed trace(s) {short}')

    retimed = tuple(retime(t, timing.duration_slots, sim.packet_size) for t in user_traces)
    level_packets = tuple(
        tuple(tuple(apply_quality(t, level).packets[:segments * G]) for level in range(1, MAX_LEVEL + 1))
        for t in retimed)

    kind = SchedulerKind(cfg.scheduler.kind)
    weights = cfg.scheduler.weights
    if weights and len(weights) != n:
        raise ConfigError(f'scheduler.weights: {len(weights)} weights for {n} users')
    if kind is SchedulerKind.WRFRA and not weights:
        weights = timing.lambdas
    return Scenario(
        traces=retimed,
        level_packets=level_packets,
        timing=timing,
        gops_per_segment=G,
        segments=segments,
        gop_seconds=user_traces[0].gop_duration_s,
        scheduler=kind,
        channel=_build_channel(cfg, n, timing),
        request_mode=sim.request_mode,
        tiebreak=cfg.scheduler.tiebreak,
        quantum=cfg.scheduler.rfra_quantum,
        weights=tuple(weights),
        adaptation=cfg.quality.adaptation,
        initial_level=cfg.quality.initial_level,
        threshold_gops=cfg.quality.threshold_gops,
        seed=sim.seed,
    )


def run_episode(scenario: Scenario, episode: int = 0, *, record_events: bool = False) -> EpisodeResult:
    '''Simulate one episode; deterministic given (scenario.seed, episode).'''
    sc = scenario
    n = sc.num_users
    G = sc.gops_per_segment
    S = sc.segments
    dur = sc.timing.duration_slots
    rebuffer = sc.timing.rebuffer_slots
    supergop = sc.request_mode == 'supergop'

    chan_u = UniformStream(episode_rng(sc.seed, episode, 'channel'))
    tie_u = UniformStream(episode_rng(sc.seed, episode, 'tiebreak'))
    channel = sc.channel
    markov_u = None
    if isinstance(channel, MarkovModulated):
        markov_rng = episode_rng(sc.seed, episode, 'markov')
        channel = channel.with_states(initial_states(channel, n, markov_rng))
        markov_u = UniformStream(markov_rng)
    use_tiebreak = sc.tiebreak == 'random' or sc.scheduler is SchedulerKind.RANDOM
    policy = get_scheduler(
        sc.scheduler, n, weights=sc.weights or None, quantum=sc.quantum,
        rng=tie_u if use_tiebreak else None)

    metrics = EpisodeMetrics.empty(n, S, G * sc.gop_seconds / 60.0)
    clients = [ClientState(quality_level=sc.initial_level) for _ in range(n)]
    levels: list[list[int]] = [[] for _ in range(n)]
    client_tr = DeadlineTracker(n)
    server_tr = DeadlineTracker(n) if supergop else client_tr
    first_deadline = sc.timing.initial_buffer_slots + dur

    def segment_sizes(user: int, j: int, level: int) -> list[int]:
        return list(sc.level_packets[user][level - 1][j * G:(j + 1) * G])

    for u in range(n):
        sizes = segment_sizes(u, 0, sc.initial_level)
        levels[u].append(sc.initial_level)
        client_tr.start(u, first_deadline, sizes)
        if supergop:
            server_tr.start(u, first_deadline, [sum(sizes)])

    events: list[tuple[int, str, int, str]] = []
    record = events.append if record_events else None
    remaining = n
    slot = 0
    while remaining:
        if markov_u is not None:
            advance_channel(channel, slot, markov_u)

        for u in range(n):
            if client_tr.done[u] or slot < client_tr.next_deadline[u]:
                continue
            seg = clients[u].segment_cursor
            _, stall = on_deadline_expiry(client_tr, u, rebuffer, slot, seg)
            if stall is not None:
                clients[u].stall_count += 1
                metrics.stalls[u][seg] += 1
                if record:
                    record((slot, 'stall', u, str(seg)))
        if supergop:
            for u in range(n):
                if server_tr.done[u] or slot < server_tr.next_deadline[u]:
                    continue
                _, late = on_deadline_expiry(server_tr, u, rebuffer, slot, clients[u].segment_cursor)
                if late is not None and record:
                    record((slot, 'extend', u, str(server_tr.next_deadline[u])))

        user = policy.decide(server_tr, slot)
        if user is None:
            chan_u.random()  # keeps channel draws aligned slot for slot across schedulers
            slot += 1
            continue
        if record:
            record((slot, 'decide', user, ''))
        if not sample_channel(channel, user, chan_u):
            if record:
                record((slot, 'loss', user, ''))
            slot += 1
            continue
        if record:
            record((slot, 'deliver', user, ''))

        gop_done = client_tr.deliver(user)
        seg_done = server_tr.deliver(user) if supergop else False
        if gop_done:
            c = clients[user]
            c.last_delivery_lead = client_tr.next_deadline[user] - (slot + 1)
            if record:
                record((slot, 'gop_complete', user, str(c.gop_cursor)))
            c.gop_cursor += 1
            if c.gop_cursor % G == 0:
                j = c.segment_cursor
                metrics.level_tallies[user][c.quality_level - 1] += 1
                if j + 1 < S:
                    if sc.adaptation:
                        new_level = adapt_quality(
                            c, metrics.stalls[user][j] > 0, c.last_delivery_lead, sc.threshold_gops, dur)
                        if new_level != c.quality_level and record:
                            record((slot, 'adapt', user, f'{c.quality_level}->{new_level}'))
                        c.quality_level = new_level
                    levels[user].append(c.quality_level)
                    sizes = segment_sizes(user, j + 1, c.quality_level)
                    client_tr.enqueue(user, sizes)
                    if supergop:
                        server_tr.enqueue(user, [sum(sizes)])
                c.segment_cursor = j + 1
            on_gop_complete(client_tr, user, dur)
            if client_tr.done[user]:
                c.done = True
                remaining -= 1
            if not supergop:
                policy.on_unit_complete(client_tr, user)
        if seg_done:
            prev = server_tr.next_deadline[user]
            on_gop_complete(server_tr, user, G * dur)
            if not server_tr.done[user]:
                # the segment request carries the deadline of its first GoP
                server_tr.next_deadline[user] = max(prev, client_tr.next_deadline[user])
            policy.on_unit_complete(server_tr, user)
        slot += 1

    return EpisodeResult(metrics=metrics, end_slot=slot, segment_levels=levels, events=events)


def run_segment_trials(
    curves: list[PlayoutCurve],
    beta: list[float] | tuple[float, ...],
    episodes: int,
    rng: np.random.Generator,
) -> np.ndarray:
    '''
    Non-stalling indicator per episode for one segment under BDRA, vectorized over episodes.

    Segment semantics: a missed deadline is absorbing (no rebuffer). Returns a bool
    array of length episodes.
    '''
    n = len(curves)
    T = max(c.horizon_T for c in curves)
    beta_arr = np.asarray(beta, dtype=float)
    max_m = max(len(c.increments) for c in curves)
    big = np.iinfo(np.int64).max
    # per user, padded arrays of deadlines, cumulative demand and jump heights
    dl = np.full((n, max_m + 1), big, dtype=np.int64)
    cum = np.full((n, max_m + 1), big, dtype=np.int64)
    jump = np.zeros((n, max_m + 1), dtype=np.int64)
    demand = np.zeros((n, T + 1), dtype=np.int64)
    for u, c in enumerate(curves):
        m = len(c.increments)
        if m:
            dl[u, :m] = c.deadlines
            cum[u, :m] = [x for _, x in c.increments]
            jump[u, :m] = c.jumps
        for d, x in c.increments:
            demand[u, d:] = x
    key_scale = int(jump.max()) + 1

    delivered = np.zeros((episodes, n), dtype=np.int64)
    failed = np.zeros(episodes, dtype=bool)
    rows = np.arange(episodes)
    for k in range(T):
        failed |= np.any(delivered < demand[:, k], axis=1)
        # index of the earliest increment not yet covered by the deliveries
        idx = np.stack([np.searchsorted(cum[u], delivered[:, u], side='right') for u in range(n)], axis=1)
        users = np.arange(n)
        owed_deadline = dl[users, idx]
        owed_jump = jump[users, idx]
        active = owed_deadline != big
        key = np.where(active, np.where(active, owed_deadline, 0) * key_scale + owed_jump, big)
        chosen = np.argmin(key, axis=1)
        any_active = active[rows, chosen]
        success = rng.random(episodes) < beta_arr[chosen]
        step = success & any_active & ~failed
        delivered[rows[step], chosen[step]] += 1
    failed |= np.any(delivered < demand[:, T], axis=1)
    return ~failed
