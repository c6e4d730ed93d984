'''
Output files: metrics, histograms, sweeps, the run manifest and the event log.

Every write takes a file lock beside its target so concurrent runs sharing an
output directory never interleave. The event log is append-only.

Column orders are fixed:

    metrics.csv    scheduler,request_mode,rho,episodes,metric,mean,stderr
    histogram.csv  scheduler,request_mode,kind,stalls,count
    sweep.csv      rho,rebuffer,scheduler,metric,mean,stderr
    events.log     slot,event,user,detail
'''

from __future__ import annotations

import csv
import io
import json
from collections.abc import Iterable, Sequence
from pathlib import Path

from filelock import FileLock, Timeout

from dashsched.config import get_config
from dashsched.metrics import SCALAR_METRICS, AggregateMetrics


METRICS_COLUMNS = ('scheduler', 'request_mode', 'rho', 'episodes', 'metric', 'mean', 'stderr')
HISTOGRAM_COLUMNS = ('scheduler', 'request_mode', 'kind', 'stalls', 'count')
SWEEP_COLUMNS = ('rho', 'rebuffer', 'scheduler', 'metric', 'mean', 'stderr')
EVENT_COLUMNS = ('slot', 'event', 'user', 'detail')


class OutputLockError(Exception):
    '''Raised when an output file's lock cannot be acquired within the timeout.'''


def _lock_path(path: Path) -> Path:
    '''Path for the lock file (beside the output).'''
    return path.with_suffix(path.suffix + '.lock')


def _lock_timeout() -> float:
    '''Lock timeout in seconds ([output] lock_timeout, default 30).'''
    return get_config().output.lock_timeout


def _locked_write(path: Path, text: str, mode: str = 'w') -> None:
    lock_path = _lock_path(path)
    timeout = _lock_timeout()
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        with FileLock(lock_path, timeout=timeout):
            with path.open(mode, encoding='utf-8', newline='') as f:
                f.write(text)
    except Timeout as e:
        raise OutputLockError(
            f'Could not acquire output lock within {timeout:.0f}s. '
            f'Another run may be writing {path}. Investigate stale lock at {lock_path}'
        ) from e


def _csv_text(header: Sequence[str] | None, rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    if header:
        writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(value: float | None) -> str:
    return '' if value is None else repr(float(value))


def metrics_rows(
    scheduler: str,
    request_mode: str,
    rho: float,
    agg: AggregateMetrics,
) -> list[tuple]:
    return [
        (scheduler, request_mode, _fmt(rho), agg.episodes, name,
         _fmt(agg.summaries[name].mean), _fmt(agg.summaries[name].stderr))
        for name in SCALAR_METRICS
    ]


def histogram_rows(scheduler: str, request_mode: str, agg: AggregateMetrics) -> list[tuple]:
    rows = [(scheduler, request_mode, 'user_segment', k, agg.histogram[k]) for k in sorted(agg.histogram)]
    rows += [
        (scheduler, request_mode, 'segment_total', k, agg.segment_total_histogram[k])
        for k in sorted(agg.segment_total_histogram)
    ]
    return rows


def write_metrics(path: Path, rows: Iterable[Sequence]) -> None:
    _locked_write(path, _csv_text(METRICS_COLUMNS, rows))


def write_histogram(path: Path, rows: Iterable[Sequence]) -> None:
    _locked_write(path, _csv_text(HISTOGRAM_COLUMNS, rows))


def write_sweep(path: Path, rows: Iterable[Sequence]) -> None:
    _locked_write(path, _csv_text(SWEEP_COLUMNS, rows))


def append_events(path: Path, events: Iterable[tuple[int, str, int, str]], *, tag: str = '') -> None:
    '''
    Append event records. With tag (e.g. "bdra/7" for scheduler and episode), a
    `# tag` line precedes them. The header is written once, on first creation.
    '''
    header = EVENT_COLUMNS if not path.exists() else None
    text = (f'# {tag}\n' if tag else '') + _csv_text(None, events)
    if header:
        text = _csv_text(header, []) + text
    _locked_write(path, text, mode='a')


def write_manifest(path: Path, manifest: dict) -> None:
    _locked_write(path, json.dumps(manifest, indent=2, sort_keys=True) + '\n')


def sweep_rows(points) -> list[tuple]:
    '''Long-format rows from runner.SweepPoint values.'''
    rows = []
    for p in points:
        agg = p.result.aggregate
        for name in SCALAR_METRICS:
            s = agg.summaries[name]
            rows.append((_fmt(p.rho), _fmt(p.rebuffer), p.result.name, name, _fmt(s.mean), _fmt(s.stderr)))
    return rows
