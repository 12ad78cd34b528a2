import pytest

from mlai.errors import NoSamples
from mlai.protocol.apdex import (
    ApdexCollector,
    ApdexCounters,
    Outcome,
    RequestTimer,
    apdex,
    classify_latency,
    classify_request,
)


class Clock:
    def __init__(self, *ticks):
        self.ticks = list(ticks)

    def __call__(self):
        return self.ticks.pop(0)


def timer(latency, failed=False):
    t = RequestTimer("x", clock=Clock(10.0, 10.0 + latency))
    return t.stop(failed=failed)


def test_classification():
    assert classify_request(timer(0.3)) == Outcome.SATISFIED
    assert classify_request(timer(0.5)) == Outcome.SATISFIED
    assert classify_request(timer(1.2)) == Outcome.TOLERATING
    assert classify_request(timer(2.0)) == Outcome.TOLERATING
    assert classify_request(timer(2.5)) == Outcome.FRUSTRATED
    assert classify_request(timer(0.1, failed=True)) == Outcome.FAILED


def test_timer_validation():
    with pytest.raises(ValueError):
        RequestTimer("x", clock=Clock(1.0)).latency
    t = RequestTimer("x", clock=Clock(5.0, 4.0)).stop()
    with pytest.raises(ValueError):
        t.latency


def test_injected_latency():
    t = RequestTimer("x", clock=Clock(1.0, 1.1)).stop(extra_latency=1.0)
    assert t.latency == pytest.approx(1.1)


def test_table_values():
    assert apdex(ApdexCounters(97, 3, 0, 0)) == 0.985
    assert apdex(ApdexCounters(98, 2, 0, 0)) == 0.99
    assert apdex(ApdexCounters(0, 0, 6, 4)) == 0


def test_no_samples():
    with pytest.raises(NoSamples):
        apdex(ApdexCounters())


def test_bounds_and_monotone():
    for s in range(6):
        for t in range(6 - s):
            for f in range(6 - s - t):
                c = ApdexCounters(s, t, f, 5 - s - t - f)
                score = apdex(c)
                assert 0 <= score <= 1
                if c.failed + c.frustrated:
                    # turning a bad request into a satisfied one never lowers the score
                    better = ApdexCounters(s + 1, t, f - (f > 0), c.failed - (f == 0))
                    assert apdex(better) >= score


def test_failed_never_counts():
    c = ApdexCounters()
    for o in [Outcome.FAILED] * 3 + [Outcome.SATISFIED]:
        c.add(o)
    assert (c.satisfied, c.failed, c.total) == (1, 3, 4)
    assert apdex(c) == 0.25


def test_collector():
    col = ApdexCollector(0.5)
    for lat in [0.1] * 97 + [1.5] * 3:
        col.record("Object Detect", lat)
    for lat in [0.2] * 98 + [1.9] * 2:
        col.record("Object Track", lat)
    assert col.rows() == [("Object Detect", 97, 3, 100, 0.985), ("Object Track", 98, 2, 100, 0.99)]
    assert "0.985" in col.table()


def test_threshold_scales():
    assert classify_latency(3.9, threshold=1.0) == Outcome.TOLERATING
    assert classify_latency(4.01, threshold=1.0) == Outcome.FRUSTRATED
