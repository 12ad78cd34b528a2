"""Scheduling actors over a scenario and recording what happened."""
import csv
import io
import json
import threading

from ..errors import ScenarioInvalid
from ..protocol.transport import loopback_pair, socket_pair
from .actors import COORDINATOR_ID, Coordinator, Event, Link, Phase, SensorActor

CSV_COLUMNS = ("frame", "sensor", "event_kind", "object_id", "cosine", "phi", "latency_s")


class EventLog:
    """Ordered record of a run plus its outcome."""

    def __init__(self, scenario):
        self.scenario = scenario
        self.events = []
        self.final_phases = {}
        self.handovers = []
        self.decisions = []
        self.quiescent_checks = 0
        self.frames_run = 0

    def extend(self, events):
        self.events.extend(events)

    def of_kind(self, *kinds):
        return [e for e in self.events if e.kind in kinds]

    @property
    def outcome(self):
        """Last HANDOVER / NO_HANDOVER event, or None."""
        for e in reversed(self.events):
            if e.kind in ("HANDOVER", "NO_HANDOVER", "END"):
                return e
        return None

    @property
    def handover_assistant(self):
        return self.handovers[-1][2] if self.handovers else None

    def decision(self, method):
        """Assistant chosen by ``method`` in the first decided episode, or None."""
        for d in self.decisions:
            if d[method] is not None:
                return d[method]
        return None

    def tracking_sensors(self):
        return sorted(sid for sid, p in self.final_phases.items() if p == Phase.TRACKING.value)

    def to_jsonl(self):
        return "".join(json.dumps(e.as_dict(), sort_keys=True) + "\n" for e in self.events)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for e in self.events:
            sensor = e.detail.get("sensor", e.actor) if e.kind == "TELEMETRY" else e.actor
            w.writerow(
                [e.frame, sensor, e.kind]
                + ["" if v is None else repr(v) for v in (e.object_id, e.cosine, e.phi, e.latency_s)]
            )
        return buf.getvalue()


def _transports(kind, seed, sensor_id):
    if kind == "loopback":
        return loopback_pair(chunking=(seed * 65537 + sensor_id * 2) % 2**32)
    if kind == "socket":
        return socket_pair()
    raise ValueError(f"unknown transport {kind!r}")


def _quiescent(coord, links):
    return coord.episode is None and all(l.idle for l in links)


class _Run:
    def __init__(self, scenario, transport):
        self.scenario = scenario
        self.links = [Link(s.id, _transports(transport, scenario.seed, s.id), scenario.frame_rate) for s in scenario.sensors]
        self.sensors = [SensorActor(scenario, s, l.sensor_end) for s, l in zip(scenario.sensors, self.links)]
        self.sensors.sort(key=lambda a: a.id)
        self.coord = Coordinator(scenario, self.links)
        self.log = EventLog(scenario)
        self.done_handovers = 0

    def flush(self):
        for a in self.sensors + [self.coord]:
            self.log.extend(a.events)
            a.events = []

    def after_frame(self, frame):
        """Quiescence bookkeeping; True when the run should stop."""
        self.flush()
        log = self.log
        log.frames_run = frame + 1
        if not _quiescent(self.coord, self.links):
            return False
        trackers = [a.id for a in self.sensors if a.phase == Phase.TRACKING]
        log.quiescent_checks += 1
        if len(trackers) != 1:
            log.extend([_event(frame, "INVARIANT_VIOLATION", trackers=trackers)])
        if len(self.coord.handovers) > self.done_handovers:
            ep, old, new, obj = self.coord.handovers[-1]
            self.done_handovers = len(self.coord.handovers)
            log.extend([_event(frame, "HANDOVER", object_id=obj, episode=ep, sensor=new, previous=old)])
            return True
        return False

    def finish(self, frame, stopped):
        log = self.log
        if not stopped:
            log.extend([_event(frame, "END", sensor=None)])
        log.final_phases = {a.id: a.phase.value for a in self.sensors}
        log.handovers = list(self.coord.handovers)
        log.decisions = list(self.coord.decisions)
        return log


def _event(frame, kind, object_id=None, **detail):
    return Event(frame, COORDINATOR_ID, kind, object_id=object_id, detail=detail)


def run_scenario(scenario, mode="deterministic", transport=None, stop_on_handover=True):
    """Run every actor until the first handover settles or the duration ends.

    ``mode="deterministic"`` steps the sensors in id order and then the
    coordinator, once per simulated frame, on one thread. ``mode="threads"``
    runs each actor on its own worker over real sockets, with a frame
    barrier so the log stays identical to the deterministic one.
    """
    scenario.validate()
    if mode not in ("deterministic", "threads"):
        raise ScenarioInvalid(f"unknown run mode {mode!r}")
    transport = transport or ("loopback" if mode == "deterministic" else "socket")
    run = _Run(scenario, transport)
    if mode == "threads":
        return _run_threaded(run, stop_on_handover)
    stopped = False
    frame = 0
    for frame in range(scenario.duration):
        for a in run.sensors:
            a.step(frame)
        run.coord.step(frame)
        if run.after_frame(frame) and stop_on_handover:
            stopped = True
            break
    return run.finish(frame, stopped)


def _run_threaded(run, stop_on_handover):
    n = len(run.sensors)
    sensors_done = threading.Barrier(n + 1)
    frame_done = threading.Barrier(n + 1)
    state = {"frame": 0, "stop": False}
    errors = []

    def worker(actor):
        while True:
            frame_done.wait()
            if state["stop"]:
                return
            try:
                actor.step(state["frame"])
            except Exception as exc:  # surfaced on the scheduler thread
                errors.append(exc)
            sensors_done.wait()

    threads = [threading.Thread(target=worker, args=(a,), daemon=True) for a in run.sensors]
    for t in threads:
        t.start()
    stopped = False
    frame = 0
    try:
        for frame in range(run.scenario.duration):
            state["frame"] = frame
            frame_done.wait()
            sensors_done.wait()
            if errors:
                raise errors[0]
            run.coord.step(frame)
            if run.after_frame(frame) and stop_on_handover:
                stopped = True
                break
    finally:
        state["stop"] = True
        frame_done.wait()
        for t in threads:
            t.join(timeout=5)
        for l in run.links:
            l.sensor_end.channel.transport.close()
            l.coord_end.channel.transport.close()
    return run.finish(frame, stopped)
