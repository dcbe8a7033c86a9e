"""Wall-time bookkeeping split into the reported categories.

Categories: computation (solves), reduction (intersections, averaging,
consensus merges), distribution (resample construction and problem
assembly), data_io (file reads/writes).  Sections run inside parallel
tasks are accumulated as busy time and rescaled to their share of the
phase wall clock when the phase closes, so per-phase categories always
sum to the phase total regardless of worker count.
"""

from __future__ import annotations

import time
from contextlib import contextmanager
from dataclasses import dataclass, field, asdict

CATEGORIES = ("computation", "reduction", "distribution", "data_io")

__all__ = ["PhaseTiming", "TimingBreakdown", "TaskClock", "PhaseClock"]


@dataclass
class PhaseTiming:
    computation_s: float = 0.0
    reduction_s: float = 0.0
    distribution_s: float = 0.0
    data_io_s: float = 0.0
    total_s: float = 0.0

    def category_sum(self) -> float:
        return (
            self.computation_s
            + self.reduction_s
            + self.distribution_s
            + self.data_io_s
        )

    def validate(self):
        vals = asdict(self)
        for name, v in vals.items():
            if v < 0:
                raise ValueError(f"{name} is negative: {v}")
        # 1% slack for timer overlap
        if self.total_s < self.category_sum() * 0.99 - 1e-9:
            raise ValueError(
                f"category sum {self.category_sum():.6f}s exceeds "
                f"phase total {self.total_s:.6f}s"
            )


@dataclass
class TimingBreakdown:
    selection: PhaseTiming = field(default_factory=PhaseTiming)
    estimation: PhaseTiming = field(default_factory=PhaseTiming)

    def validate(self):
        self.selection.validate()
        self.estimation.validate()

    def as_dict(self) -> dict:
        return {"selection": asdict(self.selection), "estimation": asdict(self.estimation)}

    @classmethod
    def from_dict(cls, d: dict) -> "TimingBreakdown":
        return cls(
            selection=PhaseTiming(**d["selection"]),
            estimation=PhaseTiming(**d["estimation"]),
        )


class TaskClock:
    """Category stopwatch local to one task; merged into a PhaseClock."""

    __slots__ = ("times",)

    def __init__(self):
        self.times: dict[str, float] = {}

    @contextmanager
    def section(self, category: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.times[category] = (
                self.times.get(category, 0.0) + time.perf_counter() - t0
            )


class PhaseClock:
    """Collects serial sections and task clocks for one pipeline phase."""

    def __init__(self):
        self._wall0 = time.perf_counter()
        self._serial: dict[str, float] = {}
        self._tasks: dict[str, float] = {}

    @contextmanager
    def serial(self, category: str):
        """Time a section running on the coordinating thread (not rescaled)."""
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self._serial[category] = (
                self._serial.get(category, 0.0) + time.perf_counter() - t0
            )

    def absorb(self, task_times: dict[str, float]):
        for cat, v in task_times.items():
            self._tasks[cat] = self._tasks.get(cat, 0.0) + v

    def close(self) -> PhaseTiming:
        wall = time.perf_counter() - self._wall0
        serial_total = sum(self._serial.values())
        busy = sum(self._tasks.values())
        budget = max(wall - serial_total, 0.0)
        scale = budget / busy if busy > 0.0 else 0.0
        cats = {
            c: self._serial.get(c, 0.0) + self._tasks.get(c, 0.0) * scale
            for c in CATEGORIES
        }
        return PhaseTiming(
            computation_s=cats["computation"],
            reduction_s=cats["reduction"],
            distribution_s=cats["distribution"],
            data_io_s=cats["data_io"],
            total_s=wall,
        )
