'''
Rate-fair round-robin baselines.

All three share one deficit round robin: users are visited cyclically, and a user
starting its turn is credited quantum_i = base_quantum · w_i / min(w), then served
one packet per slot while its deficit covers a packet. Users owed nothing are
skipped and their deficit cleared.

- RFRA: equal weights, so every user gets base_quantum packets per turn.
- WRFRA: fixed weights, by default the trace mean bit-rates.
- DWRFRA: each user's weight is the size of its current GoP, refreshed when the
  user moves on to its next GoP and never in the middle of one.
'''

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

from dashsched.scheduler.base import Scheduler, SchedulerKind
from dashsched.scheduler.tracker import DeadlineTracker


@dataclass
class RoundRobinState:
    '''Cursor, per-user deficits, and the weights the deficits are credited with.'''

    cursor: int = 0
    deficits: list[float] = field(default_factory=list)
    weights: list[float] = field(default_factory=list)
    in_turn: bool = False

    @classmethod
    def for_users(cls, num_users: int, weights: Sequence[float] | None = None) -> RoundRobinState:
        w = list(weights) if weights is not None else [1.0] * num_users
        if len(w) != num_users:
            raise ValueError(f'{len(w)} weights for {num_users} users')
        return cls(deficits=[0.0] * num_users, weights=w)


def _check_weights(weights: Sequence[float]) -> None:
    for i, w in enumerate(weights):
        if not (w > 0 and w != float('inf')):
            raise ValueError(f'weight[{i}] must be positive and finite, got {w}')


def _drr_pick(rr: RoundRobinState, weights: Sequence[float], active: Sequence[bool], quantum: float) -> int | None:
    if not (quantum > 0 and quantum != float('inf')):
        raise ValueError(f'quantum must be positive and finite, got {quantum}')
    if not any(active):
        return None
    positive = [w for w, a in zip(weights, active) if a and w > 0]
    floor_w = min(positive) if positive else 1.0
    n = len(active)
    while True:
        user = rr.cursor
        if active[user]:
            if not rr.in_turn:
                rr.deficits[user] += quantum * max(weights[user], floor_w) / floor_w
                rr.in_turn = True
            if rr.deficits[user] >= 1.0:
                rr.deficits[user] -= 1.0
                return user
        else:
            rr.deficits[user] = 0.0
        rr.in_turn = False
        rr.cursor = (user + 1) % n


def wrfra_decide(
    rr: RoundRobinState,
    weights: Sequence[float],
    active: Sequence[bool],
    quantum: float = 1.0,
) -> int | None:
    '''Deficit round robin with per-user quanta proportional to weights.'''
    _check_weights(weights)
    return _drr_pick(rr, weights, active, quantum)


def rfra_decide(rr: RoundRobinState, active: Sequence[bool], quantum: float = 1.0) -> int | None:
    '''Strict round robin, quantum packets per turn, skipping users owed nothing.'''
    return _drr_pick(rr, [1.0] * len(active), active, quantum)


def dwrfra_decide(rr: RoundRobinState, tracker: DeadlineTracker, quantum: float = 1.0) -> int | None:
    '''Deficit round robin weighted by the GoP sizes held in rr.weights.'''
    active = [not tracker.done[u] and tracker.residual[u] > 0 for u in range(tracker.num_users)]
    return _drr_pick(rr, rr.weights, active, quantum)


def refresh_gop_weight(rr: RoundRobinState, tracker: DeadlineTracker, user: int) -> None:
    '''At user's GoP boundary: its weight becomes the size of its new current GoP.'''
    if not tracker.done[user]:
        rr.weights[user] = float(tracker.total[user])


def _active(tracker: DeadlineTracker) -> list[bool]:
    return [not tracker.done[u] and tracker.residual[u] > 0 for u in range(tracker.num_users)]


class RfraScheduler(Scheduler):
    kind = SchedulerKind.RFRA

    def __init__(self, num_users: int, quantum: float = 1.0) -> None:
        self.state = RoundRobinState.for_users(num_users)
        self._quantum = quantum

    def decide(self, tracker: DeadlineTracker, slot_k: int) -> int | None:
        return rfra_decide(self.state, _active(tracker), self._quantum)


class WrfraScheduler(Scheduler):
    kind = SchedulerKind.WRFRA

    def __init__(self, weights: Sequence[float], quantum: float = 1.0) -> None:
        _check_weights(weights)
        self.state = RoundRobinState.for_users(len(weights), weights)
        self._quantum = quantum

    def decide(self, tracker: DeadlineTracker, slot_k: int) -> int | None:
        return wrfra_decide(self.state, self.state.weights, _active(tracker), self._quantum)


class DwrfraScheduler(Scheduler):
    kind = SchedulerKind.DWRFRA

    def __init__(self, num_users: int, quantum: float = 1.0) -> None:
        self.state = RoundRobinState.for_users(num_users)
        self._quantum = quantum
        self._primed = False

    def decide(self, tracker: DeadlineTracker, slot_k: int) -> int | None:
        if not self._primed:
            for user in range(tracker.num_users):
                refresh_gop_weight(self.state, tracker, user)
            self._primed = True
        return dwrfra_decide(self.state, tracker, self._quantum)

    def on_unit_complete(self, tracker: DeadlineTracker, user: int) -> None:
        refresh_gop_weight(self.state, tracker, user)
