"""Timing reports for the benchmark command."""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass
from typing import Callable


@dataclass(frozen=True)
class BenchReport:
    """Summary statistics over one operation's samples, all in milliseconds."""

    operation: str
    iterations: int
    samples: tuple[float, ...]

    @property
    def count(self) -> int:
        return len(self.samples)

    @property
    def mean(self) -> float:
        return statistics.fmean(self.samples)

    @property
    def median(self) -> float:
        return statistics.median(self.samples)

    @property
    def p25(self) -> float:
        if len(self.samples) < 2:
            return self.samples[0]
        return statistics.quantiles(self.samples, n=4, method="inclusive")[0]

    @property
    def p75(self) -> float:
        if len(self.samples) < 2:
            return self.samples[0]
        return statistics.quantiles(self.samples, n=4, method="inclusive")[2]

    @property
    def min(self) -> float:
        return min(self.samples)

    @property
    def max(self) -> float:
        return max(self.samples)

    def summary_line(self) -> str:
        return (f"{self.operation} t={self.iterations} n={self.count}: "
                f"mean {self.mean:.3f} ms, median {self.median:.3f} ms, "
                f"p25 {self.p25:.3f} ms, p75 {self.p75:.3f} ms, "
                f"min {self.min:.3f} ms, max {self.max:.3f} ms")


def time_operation(operation: str, iterations: int, fn: Callable[[], object],
                   samples: int) -> BenchReport:
    """Run fn() repeatedly under a wall clock and collect a report."""
    measured = []
    for _ in range(samples):
        start = time.perf_counter()
        fn()
        measured.append((time.perf_counter() - start) * 1000.0)
    return BenchReport(operation=operation, iterations=iterations,
                       samples=tuple(measured))


def reports_to_csv(reports: list[BenchReport]) -> str:
    """Per-sample rows, one block per operation label."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["operation", "iterations", "sample", "elapsed_ms"])
    for report in reports:
        for index, value in enumerate(report.samples):
            writer.writerow([report.operation, report.iterations, index,
                             f"{value:.6f}"])
    return buf.getvalue()
