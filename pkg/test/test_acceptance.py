'''
Acceptance-scale statistical checks: stall histograms, ordering of the schedulers
across ρ⁻¹, quality adaptation, and Monte Carlo agreement with the exact DP value.

Run with `pytest -m slow`.
'''

import numpy as np
import pytest
from scipy.stats import ttest_rel

from dashsched.config import (
    ChannelConfig,
    DashConfig,
    QualityConfig,
    SimConfig,
    SyntheticTraceSpec,
    TracesConfig,
)
from dashsched.engine import load_traces, prepare_scenario, run_episode, run_segment_trials
from dashsched.oracle import FromScheduler, policy_value, random_instance
from dashsched.runner import run_paired

pytestmark = pytest.mark.slow

PACKET_BITS = 1500 * 8


def _scenario(sizes, *, rho, G, segments, model='bernoulli', loss=0.2, rebuffer=2.0, adaptation=False, cv=0.0):
    '''User i sends sizes[i] packets per GoP on average; cv > 0 draws lognormal GoP sizes.'''
    specs = tuple(
        SyntheticTraceSpec(f'p{m}', float(m * PACKET_BITS), cv, G * segments, seed=i)
        for i, m in enumerate(sizes))
    cfg = DashConfig(
        sim=SimConfig(gops_per_segment=G, segments=segments, inverse_utilization=rho,
                      initial_buffer=0.0, rebuffer=rebuffer, seed=3),
        channel=ChannelConfig(model=model, loss=loss),
        quality=QualityConfig(adaptation=adaptation),
        traces=TracesConfig(synthetic=specs),
    )
    return prepare_scenario(cfg, load_traces(cfg))


def _not_greater(a, b) -> bool:
    '''Paired samples: a is not significantly greater than b.'''
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if np.all(d == d[0]):
        return bool(d[0] <= 0)
    return ttest_rel(a, b, alternative='greater').pvalue > 0.05


def _paired_less(a, b) -> bool:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if np.all(d == d[0]):
        return bool(d[0] < 0)
    return ttest_rel(a, b, alternative='less').pvalue < 0.05


def _mode(hist) -> int:
    return max(sorted(hist), key=lambda k: hist[k])


def test_segment_stall_histograms():
    '''Six users, one 20-GoP segment: BDRA mostly stall-free, RFRA stalls repeatedly.'''
    sizes = (6, 8, 9, 17, 20, 30)
    sc = _scenario(sizes, rho=1.3, G=20, segments=1)
    results = run_paired(sc, ['bdra', 'rfra'], 1000)
    bdra, rfra = results['bdra'].aggregate, results['rfra'].aggregate
    assert _mode(bdra.segment_total_histogram) <= 1
    assert _mode(rfra.segment_total_histogram) >= 4
    assert _mode(rfra.segment_total_histogram) > _mode(bdra.segment_total_histogram)
    assert _paired_less(bdra.samples['stalls_per_user'], rfra.samples['stalls_per_user'])

    near = run_paired(_scenario(sizes, rho=1.35, G=20, segments=1), ['bdra'], 1000)['bdra'].aggregate
    assert near.summaries['zero_stall'].mean > 0.15


ORDER_SIZES = (20, 10, 40)
RHOS = (1.0, 1.1, 1.2, 1.3, 1.4, 1.5)
LINEUP = ['bdra', 'rfra', 'wrfra', 'dwrfra', 'bdra-supergop']


@pytest.fixture(scope='module', params=[0.0, 0.5], ids=['constant', 'lognormal'])
def ordering_runs(request):
    cv = request.param
    return {
        rho: run_paired(_scenario(ORDER_SIZES, rho=rho, G=5, segments=4, model='markov', cv=cv), LINEUP, 30)
        for rho in RHOS
    }


def test_stalls_fall_as_capacity_grows(ordering_runs):
    for name in LINEUP:
        stats = [ordering_runs[rho][name].aggregate.summaries['stalls_per_minute'] for rho in RHOS]
        for lo, hi in zip(stats, stats[1:]):
            band = 3 * np.hypot(lo.stderr or 0.0, hi.stderr or 0.0)
            assert hi.mean <= lo.mean + band, name


def test_bdra_never_worse_than_round_robin(ordering_runs):
    for rho in RHOS:
        runs = ordering_runs[rho]
        bdra = runs['bdra'].aggregate.samples['stalls_per_minute']
        for other in ('rfra', 'wrfra', 'dwrfra'):
            assert _not_greater(bdra, runs[other].aggregate.samples['stalls_per_minute']), (rho, other)


def test_bdra_beats_equal_share_round_robin(ordering_runs):
    for rho in RHOS[1:]:
        runs = ordering_runs[rho]
        assert _paired_less(
            runs['bdra'].aggregate.samples['stalls_per_minute'],
            runs['rfra'].aggregate.samples['stalls_per_minute'],
        ), rho


def test_per_gop_requests_never_worse_than_supergop(ordering_runs):
    for rho in RHOS:
        runs = ordering_runs[rho]
        assert _not_greater(
            runs['bdra'].aggregate.samples['stalls_per_minute'],
            runs['bdra-supergop'].aggregate.samples['stalls_per_minute'],
        ), rho


def test_rate_weights_never_worse_than_equal_shares(ordering_runs):
    for rho in RHOS:
        runs = ordering_runs[rho]
        assert _not_greater(
            runs['wrfra'].aggregate.samples['stalls_per_minute'],
            runs['rfra'].aggregate.samples['stalls_per_minute'],
        ), rho


@pytest.mark.parametrize('rho', [1.0, 1.1])
def test_quality_adaptation_ordering(rho):
    '''Lognormal GoPs over a lossy channel: BDRA stalls strictly less and holds quality.'''
    sc = _scenario(ORDER_SIZES, rho=rho, G=5, segments=6, loss=0.2, cv=0.5, adaptation=True)
    runs = run_paired(sc, ['bdra', 'rfra', 'wrfra'], 60)
    bdra = runs['bdra'].aggregate.samples
    for other in ('rfra', 'wrfra'):
        assert _paired_less(bdra['stalls_per_user'], runs[other].aggregate.samples['stalls_per_user']), other
    assert _not_greater(runs['rfra'].aggregate.samples['average_quality'], bdra['average_quality'])


def test_quality_levels_step_by_one():
    sc = _scenario(ORDER_SIZES, rho=1.0, G=5, segments=6, model='markov', adaptation=True)
    for ep in range(10):
        for levels in run_episode(sc, ep).segment_levels:
            assert all(1 <= lv <= 6 for lv in levels)
            assert all(abs(b - a) <= 1 for a, b in zip(levels, levels[1:]))


def test_monte_carlo_agrees_with_dp_value():
    '''Each instance within 3 binomial standard errors; one of 20 may stray as far as 4.'''
    rng = np.random.default_rng(909)
    trials = 100_000
    bdra = FromScheduler('bdra')
    outside = []
    for i in range(20):
        curves, beta = random_instance(rng, 3, 10)
        exact = policy_value(bdra, curves, beta)
        assert 0.0 < exact < 1.0
        hits = run_segment_trials(curves, beta, trials, np.random.default_rng(1000 + i))
        z = abs(hits.mean() - exact) / np.sqrt(exact * (1 - exact) / trials)
        assert z <= 4, (i, exact, hits.mean())
        if z > 3:
            outside.append(i)
    assert len(outside) <= 1, outside
