'''Pluggable per-slot scheduling policies. Implementations pick one user per slot, or none.'''

from abc import ABC, abstractmethod
from enum import StrEnum

from dashsched.scheduler.tracker import DeadlineTracker


class SchedulerKind(StrEnum):
    BDRA = 'bdra'
    RFRA = 'rfra'
    WRFRA = 'wrfra'
    DWRFRA = 'dwrfra'
    RANDOM = 'random'


class Scheduler(ABC):
    '''Abstract scheduler. Reads the edge-server deadline table, never the channel.'''

    kind: SchedulerKind

    @abstractmethod
    def decide(self, tracker: DeadlineTracker, slot_k: int) -> int | None:
        '''User to transmit to in slot_k, or None (idle) when nobody is owed anything.'''

    def on_unit_complete(self, tracker: DeadlineTracker, user: int) -> None:
        '''Hook fired after user's current GoP (or super-GoP) completed and the next one loaded.'''
