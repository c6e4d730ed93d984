'''
Run config: the single source of truth for simulation settings.

dashsched.toml layout (every key optional; shown with defaults):

    [sim]
    num_users = 0                 # 0: one user per trace
    gops_per_segment = 20
    segments = 0                  # 0: every whole segment the traces hold
    packet_size = 1500            # bytes per packet (one packet per slot)
    inverse_utilization = 1.3     # channel rate / aggregate source rate
    channel_rate = 0              # bytes/s; 0: derived from inverse_utilization
    initial_buffer = 4.0          # seconds
    rebuffer = 2.0                # seconds
    seed = 0                      # DASH_SIM_SEED overrides, --seed overrides both
    episodes = 10
    transport = "ideal"
    request_mode = "gop"          # gop | supergop

    [scheduler]
    kind = "bdra"                 # bdra | rfra | wrfra | dwrfra | random
    tiebreak = "index"            # index | random
    rfra_quantum = 1
    weights = []                  # WRFRA weights; empty: trace mean rates

    [channel]
    model = "bernoulli"           # bernoulli | markov
    loss = 0.2                    # per-packet loss, scalar or one per user
    drop_probs = [0.001, 0.002, 0.005]
    gamma = [[0.3, 0.6, 0.1], [0.2, 0.6, 0.2], [0.1, 0.6, 0.3]]
    dwell = 0.5                   # seconds between Markov transitions

    [quality]
    adaptation = false
    initial_level = 6
    threshold_gops = 3

    [traces]
    files = []
    frame_rate = 30
    gop_frames = 16

    [[traces.synthetic]]
    label = "u0"
    mean_bits = 96000
    cv = 0.5
    n_gops = 20
    seed = 1

    [output]
    dir = "out"
    events = false
    lock_timeout = 30

A run's manifest.json (its "config" key) is accepted in place of a TOML file.
'''

from __future__ import annotations

import json
import os
import tomllib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from dashsched.channel import DEFAULT_DROP_PROBS, DEFAULT_DWELL_S, DEFAULT_GAMMA
from dashsched.quality import MAX_LEVEL, MIN_LEVEL
from dashsched.scheduler.base import SchedulerKind


CONFIG_ENV = 'DASHSCHED_CONFIG_FILE'
SEED_ENV = 'DASH_SIM_SEED'
DEFAULT_CONFIG_NAME = 'dashsched.toml'


class ConfigError(ValueError):
    '''Invalid configuration; the message starts with the dotted field path.'''


@dataclass(frozen=True)
class SimConfig:
    num_users: int = 0
    gops_per_segment: int = 20
    segments: int = 0
    packet_size: int = 1500
    inverse_utilization: float = 1.3
    channel_rate: float = 0.0
    initial_buffer: float = 4.0
    rebuffer: float = 2.0
    seed: int = 0
    episodes: int = 10
    transport: str = 'ideal'
    request_mode: str = 'gop'


@dataclass(frozen=True)
class SchedulerConfig:
    kind: str = 'bdra'
    tiebreak: str = 'index'
    rfra_quantum: float = 1.0
    weights: tuple[float, ...] = ()


@dataclass(frozen=True)
class ChannelConfig:
    model: str = 'bernoulli'
    loss: float | tuple[float, ...] = 0.2
    drop_probs: tuple[float, ...] = DEFAULT_DROP_PROBS
    gamma: tuple[tuple[float, ...], ...] = DEFAULT_GAMMA
    dwell: float = DEFAULT_DWELL_S


@dataclass(frozen=True)
class QualityConfig:
    adaptation: bool = False
    initial_level: int = MAX_LEVEL
    threshold_gops: int = 3


@dataclass(frozen=True)
class SyntheticTraceSpec:
    label: str
    mean_bits: float
    cv: float = 0.5
    n_gops: int = 20
    seed: int = 0


@dataclass(frozen=True)
class TracesConfig:
    files: tuple[str, ...] = ()
    frame_rate: float = 30.0
    gop_frames: int = 16
    synthetic: tuple[SyntheticTraceSpec, ...] = ()


@dataclass(frozen=True)
class OutputConfig:
    dir: str = 'out'
    events: bool = False
    lock_timeout: float = 30.0


@dataclass(frozen=True)
class DashConfig:
    '''Top-level run config.'''

    sim: SimConfig = field(default_factory=SimConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    quality: QualityConfig = field(default_factory=QualityConfig)
    traces: TracesConfig = field(default_factory=TracesConfig)
    output: OutputConfig = field(default_factory=OutputConfig)


def _fail(path: str, msg: str) -> ConfigError:
    return ConfigError(f'{path}: {msg}')


def _section(data: dict, name: str, cls: type) -> dict:
    section = data.get(name, {})
    if not isinstance(section, dict):
        raise _fail(name, 'must be a table')
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(section) - known)
    if unknown:
        raise _fail(f'{name}.{unknown[0]}', f'unknown key (known: {", ".join(sorted(known))})')
    return section


def _num(section: dict, name: str, key: str, default, kind=float):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise _fail(f'{name}.{key}', f'must be a number, got {value!r}')
    if kind is int and value != int(value):
        raise _fail(f'{name}.{key}', f'must be an integer, got {value!r}')
    return kind(value)


def _choice(section: dict, name: str, key: str, default: str, allowed) -> str:
    value = str(section.get(key, default)).lower()
    if value not in allowed:
        raise _fail(f'{name}.{key}', f'must be one of {"|".join(allowed)}, got {value!r}')
    return value


def _probs(values, path: str) -> tuple[float, ...]:
    out = []
    for i, p in enumerate(values):
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0.0 <= p < 1.0:
            raise _fail(f'{path}[{i}]', f'must lie in [0, 1), got {p!r}')
        out.append(float(p))
    return tuple(out)


def _parse_sim(data: dict) -> SimConfig:
    s = _section(data, 'sim', SimConfig)
    d = SimConfig()
    cfg = SimConfig(
        num_users=_num(s, 'sim', 'num_users', d.num_users, int),
        gops_per_segment=_num(s, 'sim', 'gops_per_segment', d.gops_per_segment, int),
        segments=_num(s, 'sim', 'segments', d.segments, int),
        packet_size=_num(s, 'sim', 'packet_size', d.packet_size, int),
        inverse_utilization=_num(s, 'sim', 'inverse_utilization', d.inverse_utilization),
        channel_rate=_num(s, 'sim', 'channel_rate', d.channel_rate),
        initial_buffer=_num(s, 'sim', 'initial_buffer', d.initial_buffer),
        rebuffer=_num(s, 'sim', 'rebuffer', d.rebuffer),
        seed=_num(s, 'sim', 'seed', d.seed, int),
        episodes=_num(s, 'sim', 'episodes', d.episodes, int),
        transport=_choice(s, 'sim', 'transport', d.transport, ('ideal',)),
        request_mode=_choice(s, 'sim', 'request_mode', d.request_mode, ('gop', 'supergop')),
    )
    for key in ('num_users', 'segments'):
        if getattr(cfg, key) < 0:
            raise _fail(f'sim.{key}', 'must be non-negative')
    for key in ('gops_per_segment', 'packet_size', 'episodes'):
        if getattr(cfg, key) < 1:
            raise _fail(f'sim.{key}', 'must be positive')
    if cfg.inverse_utilization <= 0:
        raise _fail('sim.inverse_utilization', 'must be positive')
    if cfg.channel_rate < 0:
        raise _fail('sim.channel_rate', 'must be non-negative')
    if cfg.initial_buffer < 0:
        raise _fail('sim.initial_buffer', 'must be non-negative')
    if cfg.rebuffer <= 0:
        raise _fail('sim.rebuffer', 'must be positive')
    return cfg


def _parse_scheduler(data: dict) -> SchedulerConfig:
    s = _section(data, 'scheduler', SchedulerConfig)
    d = SchedulerConfig()
    weights = s.get('weights', [])
    if not isinstance(weights, list):
        raise _fail('scheduler.weights', 'must be a list')
    for i, w in enumerate(weights):
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not 0 < w < float('inf'):
            raise _fail(f'scheduler.weights[{i}]', f'must be positive and finite, got {w!r}')
    cfg = SchedulerConfig(
        kind=_choice(s, 'scheduler', 'kind', d.kind, tuple(k.value for k in SchedulerKind)),
        tiebreak=_choice(s, 'scheduler', 'tiebreak', d.tiebreak, ('index', 'random')),
        rfra_quantum=_num(s, 'scheduler', 'rfra_quantum', d.rfra_quantum),
        weights=tuple(float(w) for w in weights),
    )
    if cfg.rfra_quantum < 1:
        raise _fail('scheduler.rfra_quantum', 'must be at least one packet')
    return cfg


def _parse_channel(data: dict) -> ChannelConfig:
    s = _section(data, 'channel', ChannelConfig)
    d = ChannelConfig()
    loss = s.get('loss', d.loss)
    if isinstance(loss, list):
        loss = _probs(loss, 'channel.loss')
    else:
        loss = _probs([loss], 'channel.loss')[0]
    drop_probs = _probs(s.get('drop_probs', list(d.drop_probs)), 'channel.drop_probs')
    gamma_raw = s.get('gamma', [list(r) for r in d.gamma])
    try:
        gamma = np.asarray(gamma_raw, dtype=float)
    except (TypeError, ValueError) as e:
        raise _fail('channel.gamma', 'must be a numeric matrix') from e
    k = len(drop_probs)
    if gamma.shape != (k, k):
        raise _fail('channel.gamma', f'must be {k}x{k} to match drop_probs, got shape {gamma.shape}')
    if np.any(gamma < 0) or np.any(np.abs(gamma.sum(axis=1) - 1.0) > 1e-12):
        raise _fail('channel.gamma', 'rows must be non-negative and sum to 1')
    cfg = ChannelConfig(
        model=_choice(s, 'channel', 'model', d.model, ('bernoulli', 'markov')),
        loss=loss,
        drop_probs=drop_probs,
        gamma=tuple(tuple(row) for row in gamma.tolist()),
        dwell=_num(s, 'channel', 'dwell', d.dwell),
    )
    if cfg.dwell <= 0:
        raise _fail('channel.dwell', 'must be positive')
    return cfg


def _parse_quality(data: dict) -> QualityConfig:
    s = _section(data, 'quality', QualityConfig)
    d = QualityConfig()
    adaptation = s.get('adaptation', d.adaptation)
    if not isinstance(adaptation, bool):
        raise _fail('quality.adaptation', f'must be true or false, got {adaptation!r}')
    cfg = QualityConfig(
        adaptation=adaptation,
        initial_level=_num(s, 'quality', 'initial_level', d.initial_level, int),
        threshold_gops=_num(s, 'quality', 'threshold_gops', d.threshold_gops, int),
    )
    if not MIN_LEVEL <= cfg.initial_level <= MAX_LEVEL:
        raise _fail('quality.initial_level', f'must lie in [{MIN_LEVEL}, {MAX_LEVEL}]')
    if cfg.threshold_gops < 0:
        raise _fail('quality.threshold_gops', 'must be non-negative')
    return cfg


def _parse_synthetic(entries, index: int) -> SyntheticTraceSpec:
    path = f'traces.synthetic[{index}]'
    if not isinstance(entries, dict):
        raise _fail(path, 'must be a table')
    unknown = sorted(set(entries) - set(SyntheticTraceSpec.__dataclass_fields__))
    if unknown:
        raise _fail(f'{path}.{unknown[0]}', 'unknown key')
    if 'mean_bits' not in entries:
        raise _fail(f'{path}.mean_bits', 'required')
    spec = SyntheticTraceSpec(
        label=str(entries.get('label', f'synthetic-{index}')),
        mean_bits=_num(entries, path, 'mean_bits', 0.0),
        cv=_num(entries, path, 'cv', 0.5),
        n_gops=_num(entries, path, 'n_gops', 20, int),
        seed=_num(entries, path, 'seed', index, int),
    )
    if spec.mean_bits <= 0:
        raise _fail(f'{path}.mean_bits', 'must be positive')
    if spec.cv < 0:
        raise _fail(f'{path}.cv', 'must be non-negative')
    if spec.n_gops < 1:
        raise _fail(f'{path}.n_gops', 'must be positive')
    return spec


def _parse_traces(data: dict) -> TracesConfig:
    s = _section(data, 'traces', TracesConfig)
    d = TracesConfig()
    files = s.get('files', [])
    if isinstance(files, str):
        files = [files]
    synthetic = s.get('synthetic', [])
    if not isinstance(synthetic, list):
        raise _fail('traces.synthetic', 'must be an array of tables')
    cfg = TracesConfig(
        files=tuple(str(f) for f in files),
        frame_rate=_num(s, 'traces', 'frame_rate', d.frame_rate),
        gop_frames=_num(s, 'traces', 'gop_frames', d.gop_frames, int),
        synthetic=tuple(_parse_synthetic(e, i) for i, e in enumerate(synthetic)),
    )
    if cfg.frame_rate <= 0:
        raise _fail('traces.frame_rate', 'must be positive')
    if cfg.gop_frames < 1:
        raise _fail('traces.gop_frames', 'must be positive')
    return cfg


def _parse_output(data: dict) -> OutputConfig:
    s = _section(data, 'output', OutputConfig)
    d = OutputConfig()
    return OutputConfig(
        dir=str(s.get('dir', d.dir)),
        events=bool(s.get('events', d.events)),
        lock_timeout=_num(s, 'output', 'lock_timeout', d.lock_timeout),
    )


def parse_config(data: dict[str, Any]) -> DashConfig:
    '''Build a DashConfig from the nested dict shape of the TOML file.'''
    known = set(DashConfig.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise _fail(unknown[0], f'unknown section (known: {", ".join(sorted(known))})')
    cfg = DashConfig(
        sim=_parse_sim(data),
        scheduler=_parse_scheduler(data),
        channel=_parse_channel(data),
        quality=_parse_quality(data),
        traces=_parse_traces(data),
        output=_parse_output(data),
    )
    if cfg.scheduler.weights and cfg.sim.num_users and len(cfg.scheduler.weights) != cfg.sim.num_users:
        raise _fail('scheduler.weights', f'{len(cfg.scheduler.weights)} weights for {cfg.sim.num_users} users')
    return cfg


def _resolve_config_path(path: str | Path | None) -> Path | None:
    '''Resolve the config path: explicit arg, then $DASHSCHED_CONFIG_FILE, then ./dashsched.toml.'''
    if path is not None:
        return Path(path)
    env_path = os.environ.get(CONFIG_ENV)
    if env_path:
        return Path(env_path)
    candidate = Path(DEFAULT_CONFIG_NAME)
    return candidate if candidate.exists() else None


def _apply_seed_env(cfg: DashConfig) -> DashConfig:
    raw = os.environ.get(SEED_ENV)
    if not raw:
        return cfg
    try:
        seed = int(raw)
    except ValueError as e:
        raise _fail('sim.seed', f'{SEED_ENV}={raw!r} is not an integer') from e
    return replace(cfg, sim=replace(cfg.sim, seed=seed))


def load_config(path: str | Path | None = None) -> DashConfig:
    '''
    Load the run config. If path is None, looks for $DASHSCHED_CONFIG_FILE, then
    ./dashsched.toml; with neither, every default applies. A .json path is read as a
    run manifest. $DASH_SIM_SEED overrides the file's seed.
    '''
    resolved = _resolve_config_path(path)
    if resolved is None:
        data: dict[str, Any] = {}
    elif not resolved.exists():
        raise FileNotFoundError(f'config file not found: {resolved}')
    elif resolved.suffix == '.json':
        manifest = json.loads(resolved.read_text(encoding='utf-8'))
        if 'config' not in manifest:
            raise ConfigError(f'config: {resolved} is JSON but has no "config" key')
        data = manifest['config']
    else:
        with resolved.open('rb') as f:
            try:
                data = tomllib.load(f)
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f'config: {resolved}: {e}') from e
    return _apply_seed_env(parse_config(data))


def config_to_dict(cfg: DashConfig) -> dict[str, Any]:
    '''Fully defaulted config in the nested shape load_config reads.'''
    data = asdict(cfg)
    data['scheduler']['weights'] = list(cfg.scheduler.weights)
    loss = cfg.channel.loss
    data['channel']['loss'] = list(loss) if isinstance(loss, tuple) else loss
    data['channel']['drop_probs'] = list(cfg.channel.drop_probs)
    data['channel']['gamma'] = [list(r) for r in cfg.channel.gamma]
    data['traces']['files'] = list(cfg.traces.files)
    data['traces']['synthetic'] = [asdict(s) for s in cfg.traces.synthetic]
    return data


_config_cache: DashConfig | None = None


def get_config(path: str | Path | None = None, *, reload: bool = False) -> DashConfig:
    '''
    Return the process-wide config, loading (and caching) it on first use.

    The CLI primes the cache once with the resolved path; report writers read their
    lock timeout from it. Pass reload=True to force a re-read.
    '''
    global _config_cache
    if _config_cache is None or reload:
        _config_cache = load_config(path)
    return _config_cache


def set_config(cfg: DashConfig) -> DashConfig:
    '''Replace the cached config (after CLI overrides such as --seed).'''
    global _config_cache
    _config_cache = cfg
    return cfg
