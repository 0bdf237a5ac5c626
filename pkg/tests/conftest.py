from __future__ import annotations

import pytest

from bene.deployer import DeployerSim, FaultPlan
from bene.model import (
    Recurrence,
    Request,
    RequestKind,
    ResourceVector,
    SMALL,
    Slo,
    TimeWindow,
)
from bene.pricing import PriceBook
from bene.scheduler import Admission, Scheduler
from bene.timeline import FreeList, MachineSpec


def make_machines(n, cpu=4000, mem=8192):
    return [MachineSpec(f"m{i:02d}", ResourceVector(cpu, mem)) for i in range(n)]


_SEQ = {"n": 0}


def make_request(kind=RequestKind.RESERVED, count=1, ctype=SMALL, start=2, end=6,
                 submitted_at=0, enterprise="acme", recurrence=Recurrence.NONE,
                 rid=None, latency=50, rps=100):
    if rid is None:
        _SEQ["n"] += 1
        rid = f"r{_SEQ['n']:05d}"
    return Request(
        id=rid, enterprise=enterprise, kind=kind, count=count, ctype=ctype,
        window=TimeWindow(start, end), slo=Slo(latency, rps),
        recurrence=recurrence, submitted_at=submitted_at)


class Rig:
    """Scheduler + deployer stepped like the harness, with captured invoices."""

    def __init__(self, machines=2, n_units=96, faults=None, recovery_hook=None,
                 mutation_hook=None, machine_list=None):
        self.fl = FreeList(machine_list or make_machines(machines), n_units,
                           mutation_hook=mutation_hook)
        self.records = []
        self.sched = Scheduler(self.fl, PriceBook(), record_sink=self.records.append,
                               recovery_hook=recovery_hook)
        self.invoices = []
        self.dep = DeployerSim(self.sched, faults or FaultPlan.empty(),
                               invoice_sink=lambda a, i, o: self.invoices.append((a, i, o)))
        self.now = -1

    def step(self):
        self.now += 1
        plan = self.sched.tick(self.now)
        self.dep.apply_plan(plan, self.now)
        for fault in self.dep.ping_sweep(self.now):
            self.dep.handle_failure(fault, self.now)

    def run_until(self, unit):
        while self.now < unit:
            self.step()

    def admit_reserved(self, **kw):
        res = self.sched.admit_reserved(make_request(**kw), now=max(self.now, 0))
        assert isinstance(res, Admission)
        return res.allocation

    def admit_realtime(self, **kw):
        kw.setdefault("submitted_at", self.now)
        req = make_request(kind=RequestKind.REAL_TIME, **kw)
        res = self.sched.admit_realtime(req, now=self.now)
        assert isinstance(res, Admission)
        return res.allocation


@pytest.fixture
def machines2():
    return make_machines(2)


@pytest.fixture
def fl2(machines2):
    return FreeList(machines2, 64)


@pytest.fixture
def book():
    return PriceBook()
