"""Apdex latency scoring.

A request is Satisfied when its latency is at most T, Tolerating up to 4T
and Frustrated beyond that; errored requests are Failed whatever their
latency. ``Apdex = (satisfied + tolerating / 2) / total``.
"""
import enum
import time
from dataclasses import dataclass, field

from ..errors import NoSamples

DEFAULT_T = 0.5
TOLERATING_FACTOR = 4.0


class Outcome(enum.Enum):
    SATISFIED = "Satisfied"
    TOLERATING = "Tolerating"
    FRUSTRATED = "Frustrated"
    FAILED = "Failed"


@dataclass
class RequestTimer:
    kind: str
    start: float = None
    end: float = None
    threshold: float = DEFAULT_T
    failed: bool = False
    clock: object = field(default=time.monotonic, repr=False)

    def __post_init__(self):
        if self.start is None:
            self.start = self.clock()

    def stop(self, failed=False, extra_latency=0.0):
        """Close the timer; ``extra_latency`` adds injected delay in seconds."""
        self.end = self.clock() + extra_latency
        self.failed = self.failed or failed
        return self

    @property
    def latency(self):
        if self.end is None:
            raise ValueError("timer has not been stopped")
        if self.end < self.start:
            raise ValueError(f"end {self.end} precedes start {self.start}")
        return self.end - self.start


def classify_latency(latency, threshold=DEFAULT_T, failed=False):
    if failed:
        return Outcome.FAILED
    if latency <= threshold:
        return Outcome.SATISFIED
    if latency <= TOLERATING_FACTOR * threshold:
        return Outcome.TOLERATING
    return Outcome.FRUSTRATED


def classify_request(timer):
    return classify_latency(timer.latency, timer.threshold, timer.failed)


@dataclass
class ApdexCounters:
    satisfied: int = 0
    tolerating: int = 0
    frustrated: int = 0
    failed: int = 0

    @property
    def total(self):
        return self.satisfied + self.tolerating + self.frustrated + self.failed

    def add(self, outcome):
        name = Outcome(outcome).name.lower()
        setattr(self, name, getattr(self, name) + 1)
        return self


def apdex(c):
    if c.total == 0:
        raise NoSamples("Apdex of zero samples is undefined")
    return (c.satisfied + c.tolerating / 2) / c.total


class ApdexCollector:
    """Per-request-kind counters, as kept by the metrics actor."""

    def __init__(self, threshold=DEFAULT_T):
        self.threshold = threshold
        self.counters = {}

    def record(self, kind, latency, failed=False):
        outcome = classify_latency(latency, self.threshold, failed)
        self.counters.setdefault(kind, ApdexCounters()).add(outcome)
        return outcome

    def record_timer(self, timer):
        outcome = classify_request(timer)
        self.counters.setdefault(timer.kind, ApdexCounters()).add(outcome)
        return outcome

    def rows(self):
        """(request, C_s, C_t, C_total, score) per kind in insertion order."""
        return [(k, c.satisfied, c.tolerating, c.total, apdex(c)) for k, c in self.counters.items()]

    def table(self):
        lines = [f"{'Request':<16}{'C_s':>6}{'C_t':>6}{'C_total':>9}{'Apdex Score':>13}"]
        for k, cs, ct, tot, score in self.rows():
            lines.append(f"{k:<16}{cs:>6}{ct:>6}{tot:>9}{score:>13.4g}")
        return "\n".join(lines)
