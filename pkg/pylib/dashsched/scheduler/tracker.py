'''
Edge-server deadline table, driven by the clients' HTTP-GET requests.

Per user the server knows one outstanding unit (a GoP, or a whole segment in
super-GoP mode): its deadline, its size and how many of its packets are still owed.
A completed unit stands for the client's GET of the next one, which pushes the
deadline out by one unit duration; an expired deadline with packets still owed
means the client stalled, and pushes it out by the rebuffer duration. Later
deadlines are relative to the current one, so they shift with it.
'''

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import structlog

from dashsched.model import PlayoutCurve, SystemState, residual_deadlines


@dataclass(frozen=True)
class StallEvent:
    '''A deadline expired with packets still owed.'''

    user: int
    slot: int
    segment: int = 0


class DeadlineTracker:
    '''
    Struct-of-lists table, one column per user.

    next_deadline[u] is the slot by which the current unit must be complete;
    residual[u] counts its packets still owed, total[u] its size; pending[u]
    queues the sizes of the units already known to follow.
    '''

    def __init__(self, num_users: int) -> None:
        self.num_users = num_users
        self.next_deadline = [0] * num_users
        self.residual = [0] * num_users
        self.total = [0] * num_users
        self.pending: list[deque[int]] = [deque() for _ in range(num_users)]
        self.done = [True] * num_users
        self.last_served_deadline = [-1] * num_users

    def start(self, user: int, first_deadline: int, sizes: list[int]) -> None:
        '''Begin serving user: first unit due at first_deadline, the rest queued.'''
        if not sizes:
            raise ValueError(f'user {user}: nothing to serve')
        self.pending[user] = deque(sizes[1:])
        self.next_deadline[user] = first_deadline
        self.residual[user] = self.total[user] = sizes[0]
        self.done[user] = False

    def enqueue(self, user: int, sizes: list[int]) -> None:
        self.pending[user].extend(sizes)

    def is_active(self, user: int) -> bool:
        return not self.done[user] and self.residual[user] > 0

    def active_users(self) -> list[int]:
        return [u for u in range(self.num_users) if not self.done[u] and self.residual[u] > 0]

    def deliver(self, user: int) -> bool:
        '''Count one delivered packet; True when it completes the current unit.'''
        if self.residual[user] <= 0:
            raise ValueError(f'user {user}: delivery with nothing owed')
        self.residual[user] -= 1
        return self.residual[user] == 0

    def snapshot(self) -> tuple:
        return (tuple(self.next_deadline), tuple(self.residual), tuple(self.total), tuple(self.done))


def on_gop_complete(tracker: DeadlineTracker, user: int, gop_duration_slots: int) -> DeadlineTracker:
    '''
    The client acknowledged its current unit with a GET for the next one.

    The deadline moves out by one unit duration and the next queued unit becomes
    current; with nothing queued the user is done and never scheduled again.
    '''
    if tracker.residual[user] > 0:
        raise ValueError(
            f'user {user}: unit completion with {tracker.residual[user]} packets still owed')
    tracker.last_served_deadline[user] = tracker.next_deadline[user]
    if tracker.pending[user]:
        size = tracker.pending[user].popleft()
        tracker.residual[user] = tracker.total[user] = size
        tracker.next_deadline[user] += gop_duration_slots
    else:
        tracker.done[user] = True
        tracker.total[user] = 0
    return tracker


def on_deadline_expiry(
    tracker: DeadlineTracker,
    user: int,
    rebuffer_slots: int,
    now: int,
    segment: int = 0,
) -> tuple[DeadlineTracker, StallEvent | None]:
    '''
    Deadline check for user at slot now.

    With packets still owed at or past the deadline the client is frozen for the
    rebuffer duration: the deadline moves out by rebuffer_slots and a StallEvent is
    returned. Otherwise nothing changes.
    '''
    if rebuffer_slots < 1:
        raise ValueError(f'rebuffer must be at least one slot, got {rebuffer_slots}')
    if tracker.done[user] or tracker.residual[user] <= 0 or now < tracker.next_deadline[user]:
        return tracker, None
    tracker.next_deadline[user] += rebuffer_slots
    return tracker, StallEvent(user=user, slot=now, segment=segment)


def on_request(tracker: DeadlineTracker, user: int, deadline_slot: int) -> bool:
    '''
    A (possibly redundant) chunk request naming the deadline it is for.

    Requests for a deadline already served are discarded at the edge; returns
    whether the request was accepted.
    '''
    if deadline_slot <= tracker.last_served_deadline[user]:
        structlog.get_logger().debug(
            'redundant request discarded', user=user, deadline=deadline_slot,
            served=tracker.last_served_deadline[user])
        return False
    return True


def tracker_from_curves(curves: list[PlayoutCurve], state: SystemState) -> DeadlineTracker:
    '''
    Deadline table equivalent to playout curves at a given state.

    Each user's current unit is its earliest increment still owed (total = that
    increment's jump height); later owed increments are queued. Users owing
    nothing are done.
    '''
    tracker = DeadlineTracker(len(curves))
    schedule = residual_deadlines(curves, state)
    for user, curve in enumerate(curves):
        jumps = dict(zip(curve.deadlines, curve.jumps))
        owed = [(t.deadline_slot, t.residuals[user]) for t in schedule if user in t.residuals]
        if not owed:
            continue
        deadline, residual = owed[0]
        tracker.next_deadline[user] = deadline
        tracker.residual[user] = residual
        tracker.total[user] = jumps[deadline]
        tracker.pending[user] = deque(r for _, r in owed[1:])
        tracker.done[user] = False
    return tracker
