"""Wall-clock accounting per algorithm block.

Blocks nest; time is attributed exclusively to the innermost active block,
so e.g. the ghost-exchange phase inside a Krylov matvec is not double
counted.  Based on a monotonic clock.
"""

import time
from contextlib import contextmanager
from dataclasses import dataclass, field

BLOCKS = ("explicit_residual", "implicit_fixed_point", "krylov",
          "ghost_exchange", "output")


@dataclass
class TimerReport:
    blocks: dict
    total: float
    per_step: list = field(default_factory=list)

    def __post_init__(self):
        for name in BLOCKS:
            self.blocks.setdefault(name, 0.0)

    @property
    def accounted(self):
        return sum(self.blocks.values())

    def csv_header(self):
        return "step," + ",".join(BLOCKS)

    def csv_rows(self):
        rows = []
        for i, snap in enumerate(self.per_step):
            rows.append(f"{i}," + ",".join(f"{snap.get(b, 0.0):.9f}" for b in BLOCKS))
        return rows


class BlockTimer:
    def __init__(self, clock=time.perf_counter):
        self.clock = clock
        self.totals = {}
        self._stack = []
        self._t0 = clock()
        self._last_snapshot = {}

    @contextmanager
    def block(self, name):
        now = self.clock()
        if self._stack:
            pname, pt = self._stack[-1]
            self.totals[pname] = self.totals.get(pname, 0.0) + (now - pt)
        self._stack.append((name, now))
        try:
            yield
        finally:
            now = self.clock()
            bname, bt = self._stack.pop()
            self.totals[bname] = self.totals.get(bname, 0.0) + (now - bt)
            if self._stack:
                self._stack[-1] = (self._stack[-1][0], now)

    def step_snapshot(self):
        """Per-block time since the previous snapshot."""
        snap = {k: v - self._last_snapshot.get(k, 0.0)
                for k, v in self.totals.items()}
        self._last_snapshot = dict(self.totals)
        return snap

    def report(self, per_step=None):
        return TimerReport(blocks=dict(self.totals),
                           total=self.clock() - self._t0,
                           per_step=per_step or [])


class NullTimer:
    @contextmanager
    def block(self, name):
        yield

    def step_snapshot(self):
        return {}

    def report(self, per_step=None):
        return TimerReport(blocks={}, total=0.0, per_step=per_step or [])
