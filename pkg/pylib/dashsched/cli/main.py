'''CLI for the dashsched simulator and BDRA optimality verifier.'''

import functools
import json
import time
from dataclasses import asdict, replace
from pathlib import Path

import fire
import structlog
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from dashsched.__about__ import __version__
from dashsched.config import ConfigError, DashConfig, config_to_dict, get_config, set_config
from dashsched.engine import Scenario, load_traces, prepare_scenario
from dashsched.oracle import OracleLimitError, UnsupportedChannelError, random_instance, verify_bdra
from dashsched.report import (
    OutputLockError,
    append_events,
    histogram_rows,
    metrics_rows,
    sweep_rows,
    write_histogram,
    write_manifest,
    write_metrics,
    write_sweep,
)
from dashsched.rng import episode_rng
from dashsched.runner import DEFAULT_LINEUP, parse_lineup, run_paired, run_sweep
from dashsched.traces import TraceFormatError, convert_trace


EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3

DEFAULT_RHOS = '1.0,1.1,1.2,1.3,1.4,1.5'


def _configure_plain_tracebacks() -> None:
    '''Use standard Python tracebacks instead of Rich's fancy format.'''
    from structlog.contextvars import merge_contextvars
    from structlog.dev import ConsoleRenderer, plain_traceback, set_exc_info
    from structlog.processors import StackInfoRenderer, TimeStamper, add_log_level

    structlog.configure(
        processors=[
            merge_contextvars,
            add_log_level,
            StackInfoRenderer(),
            set_exc_info,
            TimeStamper(fmt='%Y-%m-%d %H:%M:%S', utc=False),
            ConsoleRenderer(exception_formatter=plain_traceback),
        ],
    )


def main() -> None:
    '''dashsched: multiuser DASH edge-scheduling simulator.'''
    _configure_plain_tracebacks()
    fire.Fire({
        'verify': verify,
        'simulate': simulate,
        'sweep': sweep,
        'trace': {'convert': trace_convert},
    })


def _exit_codes(fn):
    '''Map failures onto the exit-code contract, reporting them in a panel.'''
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        console = Console(stderr=True)
        try:
            return fn(*args, **kwargs)
        except (TraceFormatError, OutputLockError, OSError) as e:
            console.print(Panel(str(e), title='dashsched: I/O error', border_style='red'))
            raise SystemExit(EXIT_IO) from e
        except (ConfigError, OracleLimitError, UnsupportedChannelError) as e:
            console.print(Panel(str(e), title='dashsched: config error', border_style='red'))
            raise SystemExit(EXIT_CONFIG) from e
    return wrapper


def _floats(value, name: str) -> list[float]:
    '''Flag value as floats: fire hands over '1.0,1.1' as a tuple, a lone number as a number.'''
    if isinstance(value, (int, float)):
        return [float(value)]
    items = value.split(',') if isinstance(value, str) else list(value)
    try:
        return [float(v) for v in items if str(v).strip()]
    except ValueError as e:
        raise ConfigError(f'{name}: expected comma-separated numbers, got {value!r}') from e


def _manifest_run(config: str) -> dict:
    '''The "run" record of a manifest passed as --config, so a manifest alone reproduces a run.'''
    if not config or not config.endswith('.json'):
        return {}
    return json.loads(Path(config).read_text(encoding='utf-8')).get('run', {})


def _load(config: str, seed) -> DashConfig:
    cfg = get_config(Path(config) if config else None, reload=True)
    if seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, seed=int(seed)))
    return set_config(cfg)


def _traces_summary(scenario: Scenario) -> list[dict]:
    return [
        {
            'label': t.label,
            'gops': len(t.gops),
            'frame_rate': t.frame_rate,
            'gop_frames': t.gop_frames,
            'mean_rate_pps': lam,
        }
        for t, lam in zip(scenario.traces, scenario.timing.lambdas)
    ]


def _manifest(command: str, cfg: DashConfig, scenario: Scenario | None, run: dict, started: float) -> dict:
    return {
        'version': __version__,
        'command': command,
        'config': config_to_dict(cfg),
        'seed': cfg.sim.seed,
        'run': run,
        'timing': asdict(scenario.timing) if scenario else None,
        'segments': scenario.segments if scenario else None,
        'traces': _traces_summary(scenario) if scenario else [],
        'transport': cfg.sim.transport,
        'wall_time_s': round(time.perf_counter() - started, 3),
    }


@_exit_codes
def verify(
    instances: int = 200,
    max_users: int = 3,
    max_T: int = 10,
    seed=None,
    policy: str = 'bdra',
    config: str = '',
    out: str = '',
) -> None:
    '''
    Check BDRA against the DP optimum on random segment instances.

    Prints one JSON line per instance (descriptor, optimum, max_gap, exchange_ok, wall time).
    Exits 0 iff every instance passes, 1 otherwise.

    instances: number of random instances (0 passes vacuously)
    max_users / max_T: instance size bounds
    seed: base seed (default: config / DASH_SIM_SEED)
    policy: rule to verify: bdra, or ldf (latest deadline first, for debugging)
    out: also write verify.jsonl here
    '''
    if policy not in ('bdra', 'ldf'):
        raise ConfigError(f'policy: must be bdra or ldf, got {policy!r}')
    cfg = _load(config, seed)
    started = time.perf_counter()
    lines = []
    failing = []
    interior = 0
    for i in range(int(instances)):
        curves, beta = random_instance(episode_rng(cfg.sim.seed, i, 'instance'), int(max_users), int(max_T))
        report = verify_bdra(curves, beta, rule=policy)
        record = {
            'instance': i,
            **report.descriptor,
            'optimum': report.optimum,
            'max_gap': report.max_gap,
            'exchange_ok': report.exchange_ok,
            'states': report.states_checked,
            'wall_time_s': round(report.wall_time, 6),
        }
        lines.append(json.dumps(record, sort_keys=True))
        print(lines[-1])
        interior += report.interior
        if not report.ok:
            failing.append(record)
    if out:
        path = Path(out) / 'verify.jsonl'
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text('\n'.join(lines) + ('\n' if lines else ''), encoding='utf-8')

    console = Console(stderr=True)
    elapsed = time.perf_counter() - started
    if failing:
        listing = '\n'.join(json.dumps({k: r[k] for k in ('instance', 'beta', 'increments', 'max_gap')})
                            for r in failing[:10])
        console.print(Panel(
            f'{len(failing)} of {instances} instances failed ({policy}).\n{listing}',
            title='dashsched verify: FAILED', border_style='red'))
        raise SystemExit(EXIT_VERIFY_FAILED)
    console.print(Panel(
        f'{instances} instances, N ≤ {max_users}, T ≤ {max_T}: {policy} optimal on all ({elapsed:.2f}s)\n'
        f'{interior} of {instances} with 0 < u* < 1',
        title='dashsched verify', border_style='green'))


@_exit_codes
def simulate(
    config: str = '',
    seed=None,
    jobs: int = 1,
    out: str = '',
    scheduler='',
    rho=None,
    episodes=None,
    events=None,
) -> None:
    '''
    Monte Carlo run of one or more schedulers over paired episodes.

    Writes metrics.csv, histogram.csv, manifest.json and (with --events) events.log
    to the output directory.

    config: TOML config, or a manifest.json to reproduce a run
    scheduler: comma-separated lineup (bdra, rfra, wrfra, dwrfra, random, bdra-supergop);
      default: [scheduler] kind
    rho: inverse utilization ρ⁻¹ (overrides [sim] inverse_utilization and channel_rate)
    episodes: episodes per scheduler (default: [sim] episodes)
    jobs: worker processes
    '''
    started = time.perf_counter()
    cfg = _load(config, seed)
    run = _manifest_run(config)
    lineup = parse_lineup(scheduler or run.get('lineup') or cfg.scheduler.kind)
    sim = cfg.sim
    if rho is not None:
        sim = replace(sim, inverse_utilization=float(rho), channel_rate=0.0)
    if episodes is not None:
        sim = replace(sim, episodes=int(episodes))
    output = cfg.output
    if out:
        output = replace(output, dir=str(out))
    if events is not None:
        output = replace(output, events=bool(events))
    cfg = set_config(replace(cfg, sim=sim, output=output))

    scenario = prepare_scenario(cfg, load_traces(cfg))
    results = run_paired(scenario, lineup, sim.episodes, jobs=int(jobs), record_events=output.events)

    out_dir = Path(output.dir)
    m_rows, h_rows = [], []
    for name, res in results.items():
        m_rows += metrics_rows(name, res.request_mode, sim.inverse_utilization, res.aggregate)
        h_rows += histogram_rows(name, res.request_mode, res.aggregate)
    write_metrics(out_dir / 'metrics.csv', m_rows)
    write_histogram(out_dir / 'histogram.csv', h_rows)
    if output.events:
        events_path = out_dir / 'events.log'
        events_path.unlink(missing_ok=True)
        for name, res in results.items():
            for ep, evs in res.events.items():
                append_events(events_path, evs, tag=f'{name}/{ep}')
    write_manifest(out_dir / 'manifest.json', _manifest(
        'simulate', cfg, scenario, {'lineup': lineup, 'jobs': int(jobs)}, started))

    table = Table(title=f'ρ⁻¹={scenario.timing.inverse_utilization:.3f}, {sim.episodes} episodes')
    for col in ('scheduler', 'stalls/min', 'stalls/user', 'zero-stall', 'quality'):
        table.add_column(col)
    for name, res in results.items():
        s = res.aggregate.summaries
        table.add_row(
            name,
            f'{s["stalls_per_minute"].mean:.4f}',
            f'{s["stalls_per_user"].mean:.3f}',
            f'{s["zero_stall"].mean:.3f}',
            f'{s["average_quality"].mean:.3f}',
        )
    console = Console()
    console.print(table)
    console.print(f'Wrote {out_dir}/')


@_exit_codes
def sweep(
    config: str = '',
    rho=None,
    rebuffers=None,
    schedulers='',
    repeats=None,
    seed=None,
    jobs: int = 1,
    out: str = '',
) -> None:
    '''
    Paired-seed sweep over ρ⁻¹ (and optionally the rebuffer duration).

    Writes sweep.csv (rho,rebuffer,scheduler,metric,mean,stderr) and manifest.json.

    rho: comma-separated ρ⁻¹ values (default 1.0..1.5 step 0.1)
    rebuffers: comma-separated rebuffer durations in seconds (default: [sim] rebuffer)
    schedulers: comma-separated lineup (default: bdra,rfra,wrfra,dwrfra)
    repeats: episodes per point (default: [sim] episodes)
    '''
    started = time.perf_counter()
    cfg = _load(config, seed)
    run = _manifest_run(config)
    rhos = _floats(rho if rho is not None else run.get('rho', DEFAULT_RHOS), 'rho')
    rebuffer_values = _floats(rebuffers if rebuffers is not None else run.get('rebuffers', [cfg.sim.rebuffer]),
                              'rebuffers')
    lineup = parse_lineup(schedulers or run.get('schedulers') or list(DEFAULT_LINEUP))
    n_repeats = int(repeats if repeats is not None else run.get('repeats', cfg.sim.episodes))
    if n_repeats < 1:
        raise ConfigError('sim.episodes: repeats must be ≥ 1')
    if out:
        cfg = set_config(replace(cfg, output=replace(cfg.output, dir=str(out))))

    traces = load_traces(cfg)
    points = run_sweep(cfg, traces, rhos, lineup, n_repeats, rebuffers=rebuffer_values, jobs=int(jobs))
    out_dir = Path(cfg.output.dir)
    write_sweep(out_dir / 'sweep.csv', sweep_rows(points))
    scenario = prepare_scenario(cfg, traces)
    write_manifest(out_dir / 'manifest.json', _manifest(
        'sweep', cfg, scenario,
        {'rho': rhos, 'rebuffers': rebuffer_values, 'schedulers': lineup, 'repeats': n_repeats,
         'jobs': int(jobs)},
        started))
    Console().print(Panel(
        f'{len(rhos)} ρ⁻¹ × {len(rebuffer_values)} rebuffer × {len(lineup)} schedulers, '
        f'{n_repeats} repeats → {out_dir}/sweep.csv',
        title='dashsched sweep'))


@_exit_codes
def trace_convert(
    src: str,
    dst: str,
    frame_rate: float = 30.0,
    gop_frames: int = 16,
    label: str = '',
    unit: str = 'bits',
) -> None:
    '''
    Convert a two-column whitespace frame-size trace (index size) to the canonical format.

    unit: bits or bytes, for the size column
    '''
    if unit not in ('bits', 'bytes'):
        raise ConfigError(f'unit: must be bits or bytes, got {unit!r}')
    trace = convert_trace(src, dst, frame_rate=frame_rate, gop_frames=gop_frames, label=label, unit=unit)
    Console().print(f'{len(trace.sizes_bits)} frames → {dst}')
