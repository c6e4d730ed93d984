'''
Exact finite-horizon dynamic programming over one segment.

The state at slot k is the vector s of packets delivered so far. Scheduling user a
delivers one more packet to a with probability β_a. A state that falls short of the
playout curves at slot k (s ⪰ p(k) fails) is absorbing with value 0; at the horizon
the value is 1 iff s ⪰ p(T). u_k(s) is therefore the probability that no user
stalls over [k, T].

Only Bernoulli channels are supported, and only states reachable from the start
state are evaluated. Delivered counts are capped at each user's total demand,
since packets beyond it never change a value.
'''

from __future__ import annotations

import itertools
import math
import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import structlog
from scipy.stats import nbinom

from dashsched.channel import BernoulliErasure, MarkovModulated
from dashsched.model import PlayoutCurve, SystemState, playout_at
from dashsched.scheduler import bdra_decide, latest_deadline_first, tracker_from_curves
from dashsched.scheduler.tracker import DeadlineTracker


STATE_GUARD = 10**7
POLICY_GUARD = 2**20
TOL = 1e-12

State = tuple[int, ...]


class OracleLimitError(ValueError):
    '''The instance is too large to tabulate.'''


class UnsupportedChannelError(ValueError):
    '''The oracle only handles memoryless (Bernoulli) channels.'''


@dataclass(frozen=True)
class Tabular:
    '''Explicit decision (user index) per (slot, state).'''

    decisions: Mapping[tuple[int, State], int]


@dataclass(frozen=True)
class FromScheduler:
    '''
    Decisions of a memoryless scheduling rule, read off the deadline table the
    curves imply at each (slot, state). kind: bdra, or ldf (latest deadline first).
    '''

    kind: str = 'bdra'


PolicySpec = Tabular | FromScheduler

_RULES: dict[str, Callable[[DeadlineTracker, int], int | None]] = {
    'bdra': bdra_decide,
    'ldf': latest_deadline_first,
}


@dataclass
class ValueTable:
    '''values[k][s] for reachable s; actions[k][s] holds a maximizer (optimal tables only).'''

    horizon_T: int
    start_slot: int
    values: list[dict[State, float]]
    actions: list[dict[State, int]] = field(default_factory=list)

    def value(self, k: int, s: Sequence[int]) -> float:
        return self.values[k][tuple(s)]

    def states(self, k: int) -> list[State]:
        return list(self.values[k])


@dataclass(frozen=True)
class VerifyReport:
    descriptor: dict
    max_gap: float
    exchange_ok: bool
    states_checked: int
    wall_time: float
    optimum: float = 0.0  # u* at the root

    @property
    def interior(self) -> bool:
        '''Root value strictly inside (0, 1): neither certain success nor certain stall.'''
        return TOL < self.optimum < 1.0 - TOL

    @property
    def ok(self) -> bool:
        return self.max_gap <= TOL and self.exchange_ok


@dataclass(frozen=True)
class _Instance:
    curves: tuple[PlayoutCurve, ...]
    beta: tuple[float, ...]
    horizon_T: int
    demand: tuple[State, ...]  # p(k) for k = 0..T
    totals: State

    @property
    def n(self) -> int:
        return len(self.curves)


def _instance(curves: Sequence[PlayoutCurve], beta) -> _Instance:
    if isinstance(beta, MarkovModulated):
        raise UnsupportedChannelError('the oracle needs a Bernoulli channel; Markov channels are simulation-only')
    if isinstance(beta, BernoulliErasure):
        beta = beta.beta
    beta = tuple(float(b) for b in beta)
    if len(beta) != len(curves) or not curves:
        raise ValueError(f'{len(beta)} success probabilities for {len(curves)} users')
    for i, b in enumerate(beta):
        if not 0.0 <= b <= 1.0:
            raise ValueError(f'beta[{i}] must lie in [0, 1], got {b}')
    T = max(c.horizon_T for c in curves)
    demand = tuple(
        tuple(playout_at(c, min(k, c.horizon_T)) for c in curves) for k in range(T + 1))
    return _Instance(tuple(curves), beta, T, demand, tuple(c.total for c in curves))


def _dominates(s: State, p: State) -> bool:
    return all(a >= b for a, b in zip(s, p))


def _bump(s: State, a: int, totals: State) -> State:
    if s[a] >= totals[a]:
        return s
    return s[:a] + (s[a] + 1,) + s[a + 1:]


def _compositions(total: int, n: int):
    if n == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, n - 1):
            yield (first,) + rest


def _check_guard(n: int, T: int) -> None:
    size = math.comb(T + n, n)
    if size > STATE_GUARD:
        raise OracleLimitError(f'{size} states for N={n}, T={T} exceeds the guard of {STATE_GUARD}')


def enumerate_states(N: int, T: int) -> list[State]:
    '''All non-negative N-vectors with sum ≤ T, by increasing sum.'''
    if N < 1 or T < 0:
        raise ValueError(f'need N ≥ 1 and T ≥ 0, got N={N}, T={T}')
    _check_guard(N, T)
    return [s for total in range(T + 1) for s in _compositions(total, N)]


def _start(inst: _Instance, k: int, s: Sequence[int] | None) -> tuple[int, State]:
    if not 0 <= k <= inst.horizon_T:
        raise ValueError(f'slot {k} outside [0, {inst.horizon_T}]')
    if s is None:
        return k, (0,) * inst.n
    s0 = tuple(int(x) for x in s)
    if len(s0) != inst.n or any(x < 0 for x in s0):
        raise ValueError(f'infeasible state {s0} for {inst.n} users')
    return k, tuple(min(x, t) for x, t in zip(s0, inst.totals))


def _layers(inst: _Instance, k0: int, s0: State) -> list[list[State]]:
    '''Reachable states per slot; violating states are kept (value 0) but not expanded.'''
    _check_guard(inst.n, inst.horizon_T - k0)
    layers: list[list[State]] = [[] for _ in range(inst.horizon_T + 1)]
    layers[k0] = [s0]
    for k in range(k0, inst.horizon_T):
        nxt: dict[State, None] = {}
        for s in layers[k]:
            if not _dominates(s, inst.demand[k]):
                continue
            nxt[s] = None
            for a in range(inst.n):
                nxt[_bump(s, a, inst.totals)] = None
        layers[k + 1] = list(nxt)
    return layers


def _q(inst: _Instance, nxt: dict[State, float], s: State, a: int) -> float:
    b = inst.beta[a]
    return (1.0 - b) * nxt[s] + b * nxt[_bump(s, a, inst.totals)]


def _decision(policy: PolicySpec, inst: _Instance, k: int, s: State) -> int:
    if isinstance(policy, Tabular):
        try:
            return policy.decisions[(k, s)]
        except KeyError as e:
            raise ValueError(f'tabular policy has no decision at slot {k}, state {s}') from e
    rule = _RULES.get(policy.kind)
    if rule is None:
        raise ValueError(f'no memoryless rule {policy.kind!r}; known: {sorted(_RULES)}')
    user = rule(tracker_from_curves(list(inst.curves), SystemState(k, list(s))), k)
    return 0 if user is None else user


def _terminal(inst: _Instance, layer: list[State]) -> dict[State, float]:
    p = inst.demand[inst.horizon_T]
    return {s: 1.0 if _dominates(s, p) else 0.0 for s in layer}


def _evaluate(inst: _Instance, policy: PolicySpec, k0: int, layers: list[list[State]]) -> ValueTable:
    T = inst.horizon_T
    values: list[dict[State, float]] = [{} for _ in range(T + 1)]
    values[T] = _terminal(inst, layers[T])
    for k in range(T - 1, k0 - 1, -1):
        nxt = values[k + 1]
        cur = values[k]
        for s in layers[k]:
            if not _dominates(s, inst.demand[k]):
                cur[s] = 0.0
                continue
            a = _decision(policy, inst, k, s)
            if not 0 <= a < inst.n:
                raise ValueError(f'decision {a} at slot {k} outside the action set')
            cur[s] = _q(inst, nxt, s, a)
    return ValueTable(T, k0, values)


def evaluate_policy(
    policy: PolicySpec,
    curves: Sequence[PlayoutCurve],
    beta,
    k: int = 0,
    s: Sequence[int] | None = None,
) -> ValueTable:
    '''Policy values u^π over every state reachable from (k, s).'''
    inst = _instance(curves, beta)
    k0, s0 = _start(inst, k, s)
    return _evaluate(inst, policy, k0, _layers(inst, k0, s0))


def policy_value(
    policy: PolicySpec,
    curves: Sequence[PlayoutCurve],
    beta,
    k: int = 0,
    s: Sequence[int] | None = None,
) -> float:
    '''u^π_k(s): probability that no curve is violated over [k, T] under policy.'''
    inst = _instance(curves, beta)
    k0, s0 = _start(inst, k, s)
    return _evaluate(inst, policy, k0, _layers(inst, k0, s0)).value(k0, s0)


def optimal_value(
    curves: Sequence[PlayoutCurve],
    beta,
    k: int = 0,
    s: Sequence[int] | None = None,
) -> ValueTable:
    '''Backward induction for u*; actions[k][s] is the lowest-index maximizer.'''
    inst = _instance(curves, beta)
    k0, s0 = _start(inst, k, s)
    layers = _layers(inst, k0, s0)
    T = inst.horizon_T
    values: list[dict[State, float]] = [{} for _ in range(T + 1)]
    actions: list[dict[State, int]] = [{} for _ in range(T + 1)]
    values[T] = _terminal(inst, layers[T])
    for kk in range(T - 1, k0 - 1, -1):
        nxt = values[kk + 1]
        for st in layers[kk]:
            if not _dominates(st, inst.demand[kk]):
                values[kk][st] = 0.0
                actions[kk][st] = 0
                continue
            best_a, best_v = 0, -1.0
            for a in range(inst.n):
                v = _q(inst, nxt, st, a)
                if v > best_v:
                    best_a, best_v = a, v
            values[kk][st] = best_v
            actions[kk][st] = best_a
    return ValueTable(T, k0, values, actions)


def describe_instance(curves: Sequence[PlayoutCurve], beta) -> dict:
    beta = beta.beta if isinstance(beta, BernoulliErasure) else beta
    return {
        'N': len(curves),
        'T': max(c.horizon_T for c in curves),
        'beta': [round(float(b), 6) for b in beta],
        'increments': [[list(inc) for inc in c.increments] for c in curves],
    }


def verify_bdra(curves: Sequence[PlayoutCurve], beta, *, rule: str = 'bdra') -> VerifyReport:
    '''
    Check a memoryless rule (BDRA by default) against the optimum.

    max_gap is the largest u* − u^rule over reachable states. exchange_ok holds when
    no single deviation from the rule at any reachable (k, s), followed by the rule
    again, does better than following the rule throughout.
    '''
    start = time.perf_counter()
    inst = _instance(curves, beta)
    k0, s0 = _start(inst, 0, None)
    layers = _layers(inst, k0, s0)
    opt = optimal_value(curves, beta)
    pol = _evaluate(inst, FromScheduler(rule), k0, layers)
    max_gap = 0.0
    exchange_ok = True
    checked = 0
    for k in range(k0, inst.horizon_T + 1):
        for s in layers[k]:
            checked += 1
            u = pol.values[k][s]
            max_gap = max(max_gap, opt.values[k][s] - u)
            if k == inst.horizon_T or not _dominates(s, inst.demand[k]):
                continue
            nxt = pol.values[k + 1]
            if any(_q(inst, nxt, s, a) > u + TOL for a in range(inst.n)):
                exchange_ok = False
    report = VerifyReport(
        descriptor=describe_instance(curves, inst.beta),
        max_gap=max_gap,
        exchange_ok=exchange_ok,
        states_checked=checked,
        wall_time=time.perf_counter() - start,
        optimum=opt.value(k0, s0),
    )
    if not report.ok:
        structlog.get_logger().error(
            'verification failed', rule=rule, max_gap=max_gap, exchange_ok=exchange_ok,
            instance=report.descriptor)
    return report


def single_user_closed_form(curve: PlayoutCurve, beta: float) -> float:
    '''
    Non-stalling probability of one user served every slot.

    The slot of the n-th success is n plus a negative-binomial number of failures;
    the completion time of each increment is the previous one plus the trials its
    jump needs, and must not exceed its deadline.
    '''
    if not curve.increments:
        return 1.0
    if beta <= 0.0:
        return 0.0
    dist = np.array([1.0])
    for (deadline, _), q in zip(curve.increments, curve.jumps):
        trials = np.arange(deadline + 1)
        pmf = nbinom.pmf(trials - q, q, beta)
        dist = np.convolve(dist, pmf)[:deadline + 1]
    return float(dist.sum())


def brute_force_optimal(curves: Sequence[PlayoutCurve], beta) -> float:
    '''
    Best u_0 over every deterministic tabular policy; tiny instances only.

    A choice of a user with nothing owed leaves the state unchanged, and values are
    monotone in the state, so each state only ranges over its owed users.
    '''
    inst = _instance(curves, beta)
    k0, s0 = _start(inst, 0, None)
    layers = _layers(inst, k0, s0)
    points = [
        (k, s) for k in range(inst.horizon_T) for s in layers[k] if _dominates(s, inst.demand[k])]
    options = [[a for a in range(inst.n) if s[a] < inst.totals[a]] or [0] for _, s in points]
    count = math.prod(len(o) for o in options)
    if count > POLICY_GUARD:
        raise OracleLimitError(f'{count} tabular policies exceeds the guard of {POLICY_GUARD}')
    best = 0.0
    for combo in itertools.product(*options):
        table = _evaluate(inst, Tabular(dict(zip(points, combo))), k0, layers)
        best = max(best, table.value(k0, s0))
    return best


def random_instance(
    rng: np.random.Generator,
    max_users: int = 3,
    max_T: int = 10,
) -> tuple[list[PlayoutCurve], list[float]]:
    '''
    Random feasible segment: N in [2, max_users] (capped at max_T), T in [N, max_T],
    β uniform in [0.1, 0.95].

    Demand is built from one serial schedule: D ≤ T packets take slots 1..D, each
    owned by a random user (every user owns at least one). A user's packets are cut
    into 1–3 increments, and each increment's deadline is drawn no earlier than the
    slot of its last packet. Serving that schedule meets every deadline when nothing
    is lost, so with 0 < β < 1 every instance has a value strictly inside (0, 1).
    '''
    if max_users < 1 or max_T < 1:
        raise ValueError('max_users and max_T must be positive')
    n = min(int(rng.integers(min(2, max_users), max_users + 1)), max_T)
    T = int(rng.integers(n, max_T + 1))
    D = int(rng.integers(n, T + 1))
    owners = np.concatenate([np.arange(n), rng.integers(0, n, size=D - n)])
    rng.shuffle(owners)
    curves = []
    for u in range(n):
        slots = (np.flatnonzero(owners == u) + 1).tolist()
        c = len(slots)
        m = int(rng.integers(1, min(3, c) + 1))
        cuts = sorted(int(x) for x in rng.choice(np.arange(1, c), size=m - 1, replace=False)) if m > 1 else []
        ends = cuts + [c]
        increments = []
        prev = 0
        for j, end in enumerate(ends):
            lo = max(slots[end - 1], prev + 1)
            hi = T - (m - 1 - j)
            deadline = int(rng.integers(lo, hi + 1))
            increments.append((deadline, end))
            prev = deadline
        curves.append(PlayoutCurve(T, tuple(increments)))
    beta = rng.uniform(0.1, 0.95, size=n).tolist()
    return curves, beta
