'''CLI commands called directly: outputs written, manifests reproducing runs, exit codes.'''

import csv
import json

import pytest

from dashsched import config as cfgmod
from dashsched.cli.main import EXIT_CONFIG, EXIT_IO, EXIT_VERIFY_FAILED, simulate, sweep, trace_convert, verify
from dashsched.metrics import SCALAR_METRICS
from dashsched.report import EVENT_COLUMNS, SWEEP_COLUMNS
from dashsched.traces import load_trace

SMALL = '''
[sim]
gops_per_segment = 4
segments = 2
initial_buffer = 0.5
rebuffer = 1.0
episodes = 3
seed = 11

[channel]
loss = 0.2

[[traces.synthetic]]
label = "a"
mean_bits = 48000
n_gops = 8
seed = 1

[[traces.synthetic]]
label = "b"
mean_bits = 120000
n_gops = 8
seed = 2
'''


@pytest.fixture(autouse=True)
def _isolated(tmp_path, monkeypatch):
    monkeypatch.delenv(cfgmod.CONFIG_ENV, raising=False)
    monkeypatch.delenv(cfgmod.SEED_ENV, raising=False)
    monkeypatch.chdir(tmp_path)


def _config(tmp_path, text=SMALL):
    p = tmp_path / 'dashsched.toml'
    p.write_text(text, encoding='utf-8')
    return str(p)


def test_verify_passes(capsys):
    verify(instances=5)
    captured = capsys.readouterr()
    lines = [json.loads(line) for line in captured.out.splitlines()]
    assert len(lines) == 5
    assert all(r['exchange_ok'] and r['max_gap'] <= 1e-9 for r in lines)
    assert all(0.0 < r['optimum'] < 1.0 for r in lines)
    assert '5 of 5 with 0 < u* < 1' in captured.err


def test_verify_writes_jsonl(tmp_path):
    verify(instances=3, out=str(tmp_path / 'v'))
    assert len((tmp_path / 'v' / 'verify.jsonl').read_text(encoding='utf-8').splitlines()) == 3


def test_verify_latest_deadline_first_fails():
    with pytest.raises(SystemExit) as exc:
        verify(policy='ldf', instances=50, max_users=2, max_T=6)
    assert exc.value.code == EXIT_VERIFY_FAILED


def test_verify_unknown_policy():
    with pytest.raises(SystemExit) as exc:
        verify(policy='sjf', instances=1)
    assert exc.value.code == EXIT_CONFIG


def test_simulate_writes_outputs(tmp_path):
    out = tmp_path / 'out'
    simulate(config=_config(tmp_path), out=str(out), scheduler='bdra,rfra', events=True)
    with (out / 'metrics.csv').open(encoding='utf-8', newline='') as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 2 * len(SCALAR_METRICS)
    assert {r['scheduler'] for r in rows} == {'bdra', 'rfra'}
    assert all(r['episodes'] == '3' for r in rows)
    assert (out / 'histogram.csv').exists()
    events = (out / 'events.log').read_text(encoding='utf-8').splitlines()
    assert events[0] == ','.join(EVENT_COLUMNS)
    assert '# rfra/2' in events
    manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['command'] == 'simulate'
    assert manifest['seed'] == 11
    assert manifest['run']['lineup'] == ['bdra', 'rfra']
    assert [t['label'] for t in manifest['traces']] == ['a', 'b']


def test_manifest_reproduces_metrics(tmp_path):
    first, second = tmp_path / 'one', tmp_path / 'two'
    simulate(config=_config(tmp_path), out=str(first), scheduler='bdra,dwrfra')
    simulate(config=str(first / 'manifest.json'), out=str(second))
    assert (first / 'metrics.csv').read_text(encoding='utf-8') == (second / 'metrics.csv').read_text(encoding='utf-8')


def test_seed_flag_overrides_config(tmp_path):
    a, b = tmp_path / 'a', tmp_path / 'b'
    simulate(config=_config(tmp_path), out=str(a), seed=1)
    simulate(config=_config(tmp_path), out=str(b), seed=1)
    assert (a / 'metrics.csv').read_text(encoding='utf-8') == (b / 'metrics.csv').read_text(encoding='utf-8')
    assert json.loads((a / 'manifest.json').read_text(encoding='utf-8'))['seed'] == 1


def test_simulate_missing_trace_is_io_error(tmp_path):
    text = '[traces]\nfiles = ["absent.trace"]\n'
    with pytest.raises(SystemExit) as exc:
        simulate(config=_config(tmp_path, text), out=str(tmp_path / 'out'))
    assert exc.value.code == EXIT_IO


def test_simulate_bad_config_is_config_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        simulate(config=_config(tmp_path, '[sim]\ngops_per_segment = 0\n'))
    assert exc.value.code == EXIT_CONFIG


def test_simulate_unknown_scheduler(tmp_path):
    with pytest.raises(SystemExit) as exc:
        simulate(config=_config(tmp_path), scheduler='fifo')
    assert exc.value.code == EXIT_CONFIG


def test_sweep_writes_rows(tmp_path):
    out = tmp_path / 'sw'
    sweep(config=_config(tmp_path), rho='1.0,1.2', schedulers='bdra,rfra', repeats=2, out=str(out))
    with (out / 'sweep.csv').open(encoding='utf-8', newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = list(reader)
    assert tuple(header) == SWEEP_COLUMNS
    assert len(rows) == 2 * 2 * len(SCALAR_METRICS)
    assert {r[0] for r in rows} == {'1.0', '1.2'}
    manifest = json.loads((out / 'manifest.json').read_text(encoding='utf-8'))
    assert manifest['run']['rho'] == [1.0, 1.2]
    assert manifest['run']['repeats'] == 2


def test_trace_convert(tmp_path):
    src = tmp_path / 'raw.txt'
    src.write_text('0 100\n1 200\n', encoding='utf-8')
    trace_convert(str(src), str(tmp_path / 'raw.trace'), frame_rate=25, gop_frames=2, unit='bytes')
    trace = load_trace(tmp_path / 'raw.trace')
    assert trace.sizes_bits == (800, 1600)
    assert trace.frame_rate == 25.0


def test_trace_convert_bad_unit(tmp_path):
    src = tmp_path / 'raw.txt'
    src.write_text('0 100\n', encoding='utf-8')
    with pytest.raises(SystemExit) as exc:
        trace_convert(str(src), str(tmp_path / 'raw.trace'), unit='kb')
    assert exc.value.code == EXIT_CONFIG
