'''Scheduler implementations. Swap via scheduler= config key or --scheduler flag.'''

from collections.abc import Sequence

from dashsched.channel import UniformSource
from dashsched.scheduler.base import Scheduler, SchedulerKind
from dashsched.scheduler.bdra import BdraScheduler, bdra_decide, latest_deadline_first
from dashsched.scheduler.random_policy import RandomScheduler
from dashsched.scheduler.roundrobin import (
    DwrfraScheduler,
    RfraScheduler,
    RoundRobinState,
    WrfraScheduler,
    dwrfra_decide,
    rfra_decide,
    wrfra_decide,
)
from dashsched.scheduler.tracker import (
    DeadlineTracker,
    StallEvent,
    on_deadline_expiry,
    on_gop_complete,
    on_request,
    tracker_from_curves,
)

__all__ = [
    'BdraScheduler',
    'DeadlineTracker',
    'DwrfraScheduler',
    'RandomScheduler',
    'RfraScheduler',
    'RoundRobinState',
    'Scheduler',
    'SchedulerKind',
    'StallEvent',
    'WrfraScheduler',
    'bdra_decide',
    'dwrfra_decide',
    'get_scheduler',
    'latest_deadline_first',
    'on_deadline_expiry',
    'on_gop_complete',
    'on_request',
    'rfra_decide',
    'tracker_from_curves',
    'wrfra_decide',
]


def get_scheduler(
    kind: str | SchedulerKind,
    num_users: int,
    *,
    weights: Sequence[float] | None = None,
    quantum: float = 1.0,
    rng: UniformSource | None = None,
) -> Scheduler:
    '''
    Factory for schedulers. kind: bdra, rfra, wrfra, dwrfra, random.

    rng is the episode's tie-break stream: BDRA uses it for random tie-breaks when
    given, Random requires it. WRFRA requires weights.
    '''
    kind = SchedulerKind(kind)
    if kind is SchedulerKind.BDRA:
        return BdraScheduler(tiebreak=rng)
    if kind is SchedulerKind.RFRA:
        return RfraScheduler(num_users, quantum)
    if kind is SchedulerKind.WRFRA:
        if weights is None:
            raise ValueError('wrfra needs weights')
        return WrfraScheduler(weights, quantum)
    if kind is SchedulerKind.DWRFRA:
        return DwrfraScheduler(num_users, quantum)
    if rng is None:
        raise ValueError('random scheduler needs a tie-break stream')
    return RandomScheduler(rng)
