'''Multiuser DASH edge-scheduling simulator and exact verifier for deadline-based scheduling.'''

from dashsched.__about__ import __version__
from dashsched.config import ConfigError
from dashsched.oracle import OracleLimitError, UnsupportedChannelError
from dashsched.report import OutputLockError
from dashsched.traces import TraceFormatError

__all__ = [
    'ConfigError',
    'OracleLimitError',
    'OutputLockError',
    'TraceFormatError',
    'UnsupportedChannelError',
    '__version__',
]
