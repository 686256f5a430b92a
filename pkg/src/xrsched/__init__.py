"""PDU-set aware downlink scheduling for XR traffic in multi-cell, multi-service networks."""

from .scheduler import SchedulerKind
from .sim import KpiRecord, SimConfig, run_drop

__all__ = ["KpiRecord", "SchedulerKind", "SimConfig", "run_drop"]
__version__ = "0.1.0"
