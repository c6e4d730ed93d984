'''
Blind deadline-based resource allocation (BDRA).

Per slot, serve the user whose current GoP has the earliest deadline. Equal deadlines
go to the smaller GoP first, then to the lower user index (or to a random pick among
the tied users, when a tie-break stream is supplied). The rule reads nothing but the
deadline table: no channel statistics, no client buffer levels.
'''

from __future__ import annotations

from dashsched.channel import UniformSource
from dashsched.scheduler.base import Scheduler, SchedulerKind
from dashsched.scheduler.tracker import DeadlineTracker


def bdra_decide(
    tracker: DeadlineTracker,
    slot_k: int,
    tiebreak: UniformSource | None = None,
) -> int | None:
    '''Earliest-deadline-first over users still owed packets; None iff nobody is.'''
    deadlines = tracker.next_deadline
    totals = tracker.total
    residual = tracker.residual
    done = tracker.done
    best = None
    best_key: tuple[int, int] | None = None
    ties: list[int] = []
    for user in range(tracker.num_users):
        if done[user] or residual[user] <= 0:
            continue
        key = (deadlines[user], totals[user])
        if best_key is None or key < best_key:
            best, best_key = user, key
            ties = [user]
        elif key == best_key:
            ties.append(user)
    if tiebreak is not None and len(ties) > 1:
        return ties[int(tiebreak.random() * len(ties))]
    return best


def latest_deadline_first(tracker: DeadlineTracker, slot_k: int) -> int | None:
    '''Deliberately wrong ordering (latest deadline first), kept for oracle self-checks.'''
    best = None
    best_deadline = None
    for user in range(tracker.num_users):
        if tracker.done[user] or tracker.residual[user] <= 0:
            continue
        if best_deadline is None or tracker.next_deadline[user] > best_deadline:
            best, best_deadline = user, tracker.next_deadline[user]
    return best


class BdraScheduler(Scheduler):
    kind = SchedulerKind.BDRA

    def __init__(self, tiebreak: UniformSource | None = None) -> None:
        self._tiebreak = tiebreak

    def decide(self, tracker: DeadlineTracker, slot_k: int) -> int | None:
        return bdra_decide(tracker, slot_k, self._tiebreak)
