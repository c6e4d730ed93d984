'''
Monte Carlo runs, paired scheduler comparisons and ρ⁻¹ sweeps.

Episodes draw from streams keyed by (seed, episode, role), so the same episode index
sees the same channel realization under every scheduler: comparisons across a lineup
are paired (common random numbers) without any extra bookkeeping. Episodes fan out
over a process pool; results are reduced in episode order, whatever order workers
finish in.
'''

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import structlog

from dashsched.config import ConfigError, DashConfig
from dashsched.engine import EpisodeResult, Scenario, prepare_scenario, run_episode
from dashsched.metrics import AggregateMetrics, EpisodeMetrics, aggregate
from dashsched.model import VideoTrace
from dashsched.scheduler import SchedulerKind


# Lineup names beyond the plain scheduler kinds: (kind, request_mode)
LINEUP_VARIANTS = {'bdra-supergop': (SchedulerKind.BDRA, 'supergop')}
DEFAULT_LINEUP = ('bdra', 'rfra', 'wrfra', 'dwrfra')


@dataclass
class MonteCarloResult:
    name: str
    request_mode: str
    rho: float
    aggregate: AggregateMetrics
    episodes: list[EpisodeMetrics] = field(default_factory=list)
    events: dict[int, list] = field(default_factory=dict)


@dataclass(frozen=True)
class SweepPoint:
    rho: float
    rebuffer: float
    result: MonteCarloResult


def parse_lineup(names: str | list[str] | tuple[str, ...]) -> list[str]:
    if isinstance(names, str):
        names = [n.strip() for n in names.split(',') if n.strip()]
    known = {k.value for k in SchedulerKind} | set(LINEUP_VARIANTS)
    out = []
    for name in names:
        name = str(name).strip().lower()
        if name not in known:
            raise ConfigError(f'scheduler.kind: unknown scheduler {name!r} (known: {", ".join(sorted(known))})')
        out.append(name)
    if not out:
        raise ConfigError('scheduler.kind: empty scheduler lineup')
    return out


def lineup_scenario(scenario: Scenario, name: str) -> Scenario:
    '''scenario rerouted to one lineup entry, e.g. "rfra" or "bdra-supergop".'''
    if name in LINEUP_VARIANTS:
        kind, mode = LINEUP_VARIANTS[name]
    else:
        kind, mode = SchedulerKind(name), scenario.request_mode
    weights = scenario.weights
    if kind is SchedulerKind.WRFRA and not weights:
        weights = scenario.timing.lambdas
    return replace(scenario, scheduler=kind, request_mode=mode, weights=weights)


def _episode_task(task: tuple[Scenario, int, bool]) -> tuple[int, EpisodeResult]:
    scenario, episode, record = task
    return episode, run_episode(scenario, episode, record_events=record)


def run_episodes(
    scenario: Scenario,
    episodes: int,
    *,
    jobs: int = 1,
    record_events: bool = False,
) -> list[EpisodeResult]:
    '''Episodes 0..episodes-1, in episode order.'''
    tasks = [(scenario, ep, record_events) for ep in range(episodes)]
    if jobs <= 1 or episodes <= 1:
        done = [_episode_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_episode_task, tasks, chunksize=max(1, episodes // (4 * jobs))))
    done.sort(key=lambda pair: pair[0])
    return [result for _, result in done]


def run_monte_carlo(
    scenario: Scenario,
    episodes: int,
    *,
    jobs: int = 1,
    record_events: bool = False,
    name: str | None = None,
) -> MonteCarloResult:
    '''Independent seeded episodes reduced to mean and standard error per metric.'''
    if episodes < 1:
        raise ValueError(f'episodes must be ≥ 1, got {episodes}')
    name = name or scenario.scheduler.value
    results = run_episodes(scenario, episodes, jobs=jobs, record_events=record_events)
    metrics = [r.metrics for r in results]
    agg = aggregate(metrics)
    structlog.get_logger().info(
        'monte carlo done', scheduler=name, request_mode=scenario.request_mode,
        rho=round(scenario.timing.inverse_utilization, 4), episodes=episodes,
        stalls_per_minute=agg.summaries['stalls_per_minute'].mean)
    return MonteCarloResult(
        name=name,
        request_mode=scenario.request_mode,
        rho=scenario.timing.inverse_utilization,
        aggregate=agg,
        episodes=metrics,
        events={ep: r.events for ep, r in enumerate(results)} if record_events else {},
    )


def run_paired(
    scenario: Scenario,
    lineup: list[str],
    episodes: int,
    *,
    jobs: int = 1,
    record_events: bool = False,
) -> dict[str, MonteCarloResult]:
    '''Every lineup entry over the same episode indices (common random numbers).'''
    return {
        name: run_monte_carlo(
            lineup_scenario(scenario, name), episodes, jobs=jobs, record_events=record_events, name=name)
        for name in lineup
    }


def run_sweep(
    cfg: DashConfig,
    traces: list[VideoTrace],
    rhos: list[float],
    lineup: list[str],
    repeats: int,
    *,
    rebuffers: list[float] | None = None,
    jobs: int = 1,
) -> list[SweepPoint]:
    '''Paired lineup runs at every (ρ⁻¹, rebuffer) point; the channel rate follows ρ⁻¹.'''
    log = structlog.get_logger()
    rebuffers = rebuffers or [cfg.sim.rebuffer]
    points = []
    for rho in rhos:
        if rho <= 0:
            raise ConfigError(f'sim.inverse_utilization: sweep value must be positive, got {rho}')
        if rho < 1:
            log.warning('overloaded sweep point', rho=rho)
        for rebuffer in rebuffers:
            point_cfg = replace(cfg, sim=replace(
                cfg.sim, inverse_utilization=float(rho), channel_rate=0.0, rebuffer=float(rebuffer)))
            scenario = prepare_scenario(point_cfg, traces)
            for result in run_paired(scenario, lineup, repeats, jobs=jobs).values():
                points.append(SweepPoint(float(rho), float(rebuffer), result))
    return points
