"""Deterministic micro-data-center scaling engine.

Admits, prices, schedules, deploys and recovers reserved and real-time edge
resource requests on a 15-minute time lattice, with a capacity planner and a
synthetic workload generator for desk-scale experiments.
"""

from .model import (
    Allocation,
    AllocationState,
    CONTAINER_TYPES,
    ContainerType,
    LARGE,
    MEDIUM,
    Money,
    Placement,
    Recurrence,
    Request,
    RequestKind,
    ResourceVector,
    SMALL,
    Slo,
    TimeUnit,
    TimeWindow,
    UNITS_PER_DAY,
    UNITS_PER_WEEK,
    expand_recurrence,
    validate_request,
)
from .timeline import FreeList, MachineSpec
from .pricing import (
    Invoice,
    PriceBook,
    quote_realtime,
    quote_reserved,
    realtime_rate,
    settle,
)
from .scheduler import Admission, RejectionReason, SchedulePlan, Scheduler
from .deployer import DeployerSim, FaultEvent, FaultKind, FaultPlan
from .planner import (
    CapacityReport,
    RecordOutcome,
    RequestRecord,
    RequestStore,
    build_report,
    peak_analysis,
    recommend,
    trigger_check,
)
from .workload import EnterpriseProfile, ScenarioConfig, arrival_rate, generate
from .harness import Hooks, SimulationMetrics, SimulationResult, run_simulation

__version__ = "0.1.0"
