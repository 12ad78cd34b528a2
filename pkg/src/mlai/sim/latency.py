"""Request/response latency benchmark scored with Apdex.

A ground-station requester asks a sensor for detections and track updates
over a framed channel; each round trip is timed and classified. Optional
injected delays let a run reproduce a chosen counter mix exactly.
"""
from dataclasses import dataclass, field

import numpy as np

from ..detection import Detection, scripted_detect
from ..errors import EmptyIntersection, TargetLost
from ..imaging import Frame
from ..protocol.apdex import DEFAULT_T, ApdexCollector, RequestTimer
from ..protocol.messages import (
    Command,
    MessageKind,
    Verb,
    decode_command,
    decode_detections,
    encode_command,
    encode_detections,
)
from ..protocol.transport import Channel, loopback_pair
from ..tracking import dcf_init, dcf_update
from .render import render_array

DETECT = "Object Detect"
TRACK = "Object Track"


@dataclass
class Injection:
    """Extra latency added to chosen requests: {kind: (count, seconds)}."""

    plan: dict = field(default_factory=dict)
    seed: int = 0

    def delays(self, kind, n):
        count, seconds = self.plan.get(kind, (0, 0.0))
        if count > n:
            raise ValueError(f"cannot delay {count} of {n} {kind} requests")
        out = np.zeros(n)
        rng = np.random.default_rng([self.seed, len(kind)])
        out[rng.choice(n, size=count, replace=False)] = seconds
        return out


class _SensorServer:
    def __init__(self, scenario, channel):
        self.scenario = scenario
        self.sensor = scenario.tracking_sensor
        self.channel = channel
        self.model = None
        self.frame_index = 0

    def _frame(self):
        i = self.frame_index % self.scenario.duration
        self.frame_index += 1
        return i, Frame.from_array(render_array(self.scenario, self.sensor, i))

    def serve(self):
        for msg in self.channel.poll():
            cmd = decode_command(msg.payload)
            i, img = self._frame()
            if cmd.verb == Verb.START_DETECT:
                dets = scripted_detect(self.scenario.state(i), self.sensor.id, self.scenario.noise, [self.scenario.seed, i])
            else:
                try:
                    if self.model is None or cmd.box is not None:
                        # (re)start from the given box, else from the scene truth
                        box = cmd.box or self.sensor.to_local(self.scenario.tracked_target.box(i))
                        self.model = dcf_init(img, box)
                    else:
                        box, self.model = dcf_update(self.model, img)
                    dets = [Detection(box, 1.0)]
                except (TargetLost, EmptyIntersection):
                    self.model = None
                    dets = []
            self.channel.send(MessageKind.DETECTIONS, encode_detections(i, dets))


def run_latency_bench(scenario, samples=100, threshold=DEFAULT_T, injection=None, chunking=None):
    """Time ``samples`` detect and ``samples`` track round trips; returns the collector."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    injection = injection or Injection()
    a, b = loopback_pair(chunking)
    client = Channel(a, 0xFFFE)
    server = _SensorServer(scenario, Channel(b, scenario.tracking_sensor.id))
    collector = ApdexCollector(threshold)
    start_box = scenario.tracking_sensor.to_local(scenario.tracked_target.box(0))
    for kind in (DETECT, TRACK):
        extra = injection.delays(kind, samples)
        server.frame_index = 0
        server.model = None
        for i in range(samples):
            if kind == DETECT:
                cmd = Command(Verb.START_DETECT)
            else:
                cmd = Command(Verb.START_TRACK, start_box if i == 0 else None)
            timer = RequestTimer(kind, threshold=threshold)
            client.send(MessageKind.COMMAND, encode_command(cmd))
            server.serve()
            replies = client.poll()
            failed = len(replies) != 1
            if not failed:
                decode_detections(replies[0].payload)
            collector.record_timer(timer.stop(failed=failed, extra_latency=float(extra[i])))
    return collector
