'''Uniformly random choice among users still owed packets.'''

from __future__ import annotations

from dashsched.channel import UniformSource
from dashsched.scheduler.base import Scheduler, SchedulerKind
from dashsched.scheduler.tracker import DeadlineTracker


class RandomScheduler(Scheduler):
    kind = SchedulerKind.RANDOM

    def __init__(self, rng: UniformSource) -> None:
        self._rng = rng

    def decide(self, tracker: DeadlineTracker, slot_k: int) -> int | None:
        active = tracker.active_users()
        if not active:
            return None
        return active[int(self._rng.random() * len(active))]
