"""Sensor and coordinator actors of the handover protocol.

Every actor owns its state; the only way actors affect each other is a
message on their link. Links form a star around the coordinator, which
relays probes and candidates between the tracking sensor and assistants.
"""
import collections
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..detection import iou, scripted_detect
from ..errors import DegenerateFeature, Deadlock, EmptyIntersection, TargetLost, TooShort
from ..features import cosine_similarity, extract_feature
from ..geo import TelemetryRecord, bearing, offset
from ..imaging import Frame, crop
from ..protocol.messages import (
    Command,
    FeaturePayload,
    MessageKind,
    Verb,
    decode_payload,
    encode_command,
    encode_detections,
    encode_feature,
    encode_score,
    encode_start_tracking,
    encode_stop_reid,
    encode_telemetry,
)
from ..protocol.transport import Channel
from ..reid import EvidenceBook, Gallery, decide_handover, gallery_add, one_way_decide, rank_gallery
from ..tracking import TrackState, assign_ids, dcf_init, dcf_update
from .render import render_array

COORDINATOR_ID = 0xFFFF
WATCHDOG_S = 10.0
MAX_TRACK_DIST = 40.0
MAX_MISSED = 5
LOST_AFTER = 3
REACQUIRE_IOU = 0.3


class Phase(str, enum.Enum):
    IDLE = "IDLE"
    TRACKING = "TRACKING"
    AWAITING_ASSIST = "AWAITING_ASSIST"
    HANDING_OVER = "HANDING_OVER"
    ASSISTING = "ASSISTING"


def _plain(v):
    if isinstance(v, (np.generic,)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    return v


@dataclass
class Event:
    frame: int
    actor: int
    kind: str
    object_id: int = None
    cosine: float = None
    phi: float = None
    latency_s: float = None
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in ("object_id", "cosine", "phi", "latency_s"):
            setattr(self, k, _plain(getattr(self, k)))
        self.detail = {k: _plain(v) for k, v in self.detail.items()}

    def as_dict(self):
        d = {"frame": self.frame, "actor": self.actor, "kind": self.kind}
        for k in ("object_id", "cosine", "phi", "latency_s"):
            v = getattr(self, k)
            if v is not None:
                d[k] = v
        if self.detail:
            d["detail"] = self.detail
        return d


class Endpoint:
    """One side of a link: a channel plus the send-frame FIFO used for latency."""

    def __init__(self, channel, outbox, inbox, fps):
        self.channel = channel
        self._outbox = outbox
        self._inbox = inbox
        self.fps = fps

    def send(self, kind, payload, frame):
        self._outbox.append(frame)
        return self.channel.send(kind, payload)

    def receive(self, frame):
        """(message, simulated latency in seconds) for everything delivered so far."""
        out = []
        for msg in self.channel.poll():
            sent = self._inbox.popleft()
            out.append((msg, (frame - sent) / self.fps))
        return out

    @property
    def idle(self):
        return self.channel.idle


class Link:
    def __init__(self, sensor_id, transports, fps):
        a, b = transports
        up, down = collections.deque(), collections.deque()
        self.sensor_id = sensor_id
        self.sensor_end = Endpoint(Channel(a, sensor_id), up, down, fps)
        self.coord_end = Endpoint(Channel(b, COORDINATOR_ID), down, up, fps)

    @property
    def idle(self):
        return self.sensor_end.idle and self.coord_end.idle


class Actor:
    def __init__(self, actor_id):
        self.id = actor_id
        self.events = []

    def log(self, frame, kind, **kw):
        detail = {k: kw.pop(k) for k in list(kw) if k not in ("object_id", "cosine", "phi", "latency_s")}
        self.events.append(Event(frame, self.id, kind, detail=detail, **kw))

    def log_message(self, frame, msg, latency):
        self.log(frame, "MSG", latency_s=latency, msg=msg.kind.name, sender=msg.sender, seq=msg.sequence)


def _near_edge(box, width, height, margin):
    x0, y0, x1, y1 = box.corners
    return x0 <= margin or y0 <= margin or x1 >= width - margin or y1 >= height - margin


class SensorActor(Actor):
    def __init__(self, scenario, sensor, endpoint):
        super().__init__(sensor.id)
        self.scenario = scenario
        self.sensor = sensor
        self.end = endpoint
        self.cfg = scenario.reid
        self.phase = Phase.TRACKING if sensor.role == "tracking" else Phase.IDLE
        self.tracks = TrackState()
        self.gallery = Gallery(sensor.id)
        self.latest = {}
        self.dcf = None
        self.target = None
        self.target_missed = 0
        self._start_box = None
        self.probe_feature = None
        self.probe = None
        self.book = None
        self.cooldown_until = 0
        self.armed = True
        self.telemetry_every = max(1, math.ceil(0.1 * scenario.frame_rate - 1e-9))

    # -- bookkeeping --

    def set_phase(self, frame, phase, reason):
        if phase != self.phase:
            self.log(frame, "PHASE", old=self.phase.value, new=phase.value, reason=reason)
            self.phase = phase

    def send(self, frame, kind, payload=b""):
        self.end.send(kind, payload, frame)

    @property
    def active(self):
        return self.phase in (Phase.TRACKING, Phase.AWAITING_ASSIST, Phase.ASSISTING)

    def _reset_vision(self):
        self.tracks = TrackState()
        self.latest = {}
        self.dcf = None
        self.target = None
        self.target_missed = 0
        self.probe_feature = None
        self.probe = None
        self.book = None

    # -- protocol --

    def handle(self, frame, msg):
        body = decode_payload(msg)
        kind = msg.kind
        if kind == MessageKind.COMMAND:
            if body.verb == Verb.START_DETECT and self.phase == Phase.IDLE:
                self._reset_vision()
                self.gallery = Gallery(self.id)
                self.set_phase(frame, Phase.ASSISTING, "start_detect")
            elif body.verb == Verb.STOP_VISION and self.phase == Phase.ASSISTING:
                self._reset_vision()
                self.set_phase(frame, Phase.IDLE, "stop_vision")
                self.send(frame, MessageKind.ACK)
            elif body.verb == Verb.START_TRACK and self.phase == Phase.AWAITING_ASSIST:
                # episode aborted without a winner: keep the target
                self.book = None
                self.cooldown_until = frame + self.cfg.retrigger_frames
                # no second episode until the target is seen clear of the border again
                self.armed = False
                self.set_phase(frame, Phase.TRACKING, "resume")
                self.send(frame, MessageKind.ACK)
        elif kind == MessageKind.FEATURE:
            if self.phase == Phase.ASSISTING and self.probe is None:
                self.probe = body.feature
            elif self.phase == Phase.AWAITING_ASSIST:
                score = self.book.record(body.origin, body.object_id, body.feature, self.gallery)
                self.log(
                    frame,
                    "SCORE",
                    object_id=body.object_id,
                    cosine=score.cosine,
                    phi=score.phi,
                    assistant=body.origin,
                )
                self.send(frame, MessageKind.SCORE, encode_score(score))
        elif kind == MessageKind.STOP_REID:
            if self.phase == Phase.AWAITING_ASSIST:
                self.set_phase(frame, Phase.HANDING_OVER, "stop_reid")
                self.send(frame, MessageKind.ACK)
                self._reset_vision()
                self.set_phase(frame, Phase.IDLE, "handed_over")
        elif kind == MessageKind.START_TRACKING:
            episode, object_id, box = body
            if self.phase == Phase.ASSISTING:
                self.target = object_id
                self.target_missed = 0
                self.dcf = None
                self._start_box = box
                self.probe = None
                self.cooldown_until = frame + self.cfg.retrigger_frames
                self.set_phase(frame, Phase.TRACKING, "start_tracking")
                self.send(frame, MessageKind.ACK)

    # -- perception --

    def perceive(self, frame_index):
        sc = self.scenario
        w, h = self.sensor.frame_size
        img = Frame.from_array(render_array(sc, self.sensor, frame_index))
        dets = scripted_detect(sc.state(frame_index), self.id, sc.noise, [sc.seed % 2**63, self.id, frame_index])
        self.tracks, pairs = assign_ids(self.tracks, dets, MAX_TRACK_DIST, MAX_MISSED)
        fresh = []
        for tid, det in pairs:
            self.log(frame_index, "DETECTION", object_id=tid, box=[det.box.b_x, det.box.b_y, det.box.b_w, det.box.b_h])
            try:
                fv = extract_feature(crop(img, det.box))
            except (TooShort, DegenerateFeature, EmptyIntersection):
                continue
            self.gallery = gallery_add(self.gallery, tid, fv, frame_index)
            self.latest[tid] = (fv, det.box)
            fresh.append((tid, det, fv))
        self.send(frame_index, MessageKind.DETECTIONS, encode_detections(frame_index, [d for _, d in pairs]))
        if self.phase in (Phase.TRACKING, Phase.AWAITING_ASSIST):
            self._follow_target(frame_index, img, dict(pairs), w, h)
        return fresh

    def _follow_target(self, frame_index, img, by_id, w, h):
        dcf_box = None
        if self.dcf is not None:
            try:
                dcf_box, self.dcf = dcf_update(self.dcf, img)
            except TargetLost:
                dcf_box = None
        if self.target is None:
            # the initial tracker picks the detection closest to the tracked target
            truth = self.scenario.sensor(self.id).to_local(self.scenario.tracked_target.box(frame_index))
            best = max(by_id.items(), key=lambda kv: iou(kv[1].box, truth), default=None)
            if best is not None and iou(best[1].box, truth) > 0:
                self.target = best[0]
        elif self.target not in by_id:
            ref = dcf_box or self._start_box
            if ref is not None:
                cands = [(iou(d.box, ref), tid) for tid, d in by_id.items() if tid != self.target]
                if cands and max(cands)[0] >= REACQUIRE_IOU:
                    new = max(cands)[1]
                    self.log(frame_index, "REACQUIRE", object_id=new, previous=self.target)
                    self.target = new
        det = by_id.get(self.target)
        if det is None:
            self.target_missed += 1
            return
        self.target_missed = 0
        self._start_box = None
        if self.dcf is None or dcf_box is None:
            try:
                self.dcf = dcf_init(img, det.box)
            except EmptyIntersection:
                self.dcf = None
        if self.target in self.latest and not _near_edge(det.box, w, h, self.cfg.edge_margin):
            self.probe_feature = self.latest[self.target][0]
            self.armed = True
        self.log(frame_index, "TRACK", object_id=self.target, dcf_peak=None if self.dcf is None else self.dcf.last_response)

    def _maybe_trigger(self, frame_index):
        if not self.armed or frame_index < self.cooldown_until or self.probe_feature is None:
            return
        w, h = self.sensor.frame_size
        det_box = None
        track = self.tracks.tracks.get(self.target)
        if track is not None and track.missed == 0:
            det_box = track.last_box
        at_edge = det_box is not None and _near_edge(det_box, w, h, self.cfg.edge_margin)
        lost = self.target_missed >= LOST_AFTER
        if not (at_edge or lost):
            return
        self.book = EvidenceBook(self.target, self.cfg.top_k)
        payload = FeaturePayload(self.id, self.target, frame_index, 1.0, self.probe_feature, det_box)
        self.log(frame_index, "PROBE", object_id=self.target, reason="edge" if at_edge else "lost")
        self.send(frame_index, MessageKind.FEATURE, encode_feature(payload))
        self.set_phase(frame_index, Phase.AWAITING_ASSIST, "edge" if at_edge else "lost")

    def _send_candidates(self, frame_index, fresh):
        for tid, det, fv in fresh:
            cos = cosine_similarity(self.probe, fv)
            if cos >= self.cfg.threshold:
                self.log(frame_index, "CANDIDATE", object_id=tid, cosine=cos)
                payload = FeaturePayload(self.id, tid, frame_index, cos, fv, det.box)
                self.send(frame_index, MessageKind.FEATURE, encode_feature(payload))

    def _telemetry(self, frame_index):
        sc = self.scenario
        s = self.sensor
        tx, ty = sc.tracked_target.position(frame_index)
        cx, cy = s.fov[0] + s.fov[2] / 2.0, s.fov[1] + s.fov[3] / 2.0
        mpp = sc.meters_per_pixel
        goal = offset(s.geo, -(ty - cy) * mpp, (tx - cx) * mpp)
        heading = bearing(s.geo, goal) if goal != s.geo else 0.0
        rec = TelemetryRecord(s.id, s.geo, s.altitude, 0.0, heading, True, s.geo, frame_index / sc.frame_rate)
        self.send(frame_index, MessageKind.TELEMETRY, encode_telemetry(rec))

    def step(self, frame_index):
        for msg, latency in self.end.receive(frame_index):
            self.log_message(frame_index, msg, latency)
            self.handle(frame_index, msg)
        if self.active:
            fresh = self.perceive(frame_index)
            if self.phase == Phase.TRACKING:
                self._maybe_trigger(frame_index)
            elif self.phase == Phase.ASSISTING and self.probe is not None:
                self._send_candidates(frame_index, fresh)
        if frame_index % self.telemetry_every == 0:
            self._telemetry(frame_index)


@dataclass
class Episode:
    id: int
    tracker: int
    probe: object
    opened: int
    assistants: tuple
    last_progress: int
    first_candidate: int = None
    scores: dict = field(default_factory=dict)
    boxes: dict = field(default_factory=dict)
    shadow: dict = field(default_factory=dict)
    decided: bool = False
    winner: int = None
    winner_object: int = None
    pending_acks: set = field(default_factory=set)


class Coordinator(Actor):
    """Core system: opens episodes, relays features, decides the handover."""

    def __init__(self, scenario, links):
        super().__init__(COORDINATOR_ID)
        self.scenario = scenario
        self.cfg = scenario.reid
        self.fps = scenario.frame_rate
        self.links = {l.sensor_id: l.coord_end for l in links}
        self.next_episode = 1
        self.episode = None
        self.handovers = []
        self.decisions = []

    def send(self, frame, sensor_id, kind, payload=b""):
        self.links[sensor_id].send(kind, payload, frame)

    def handle(self, frame, sensor_id, msg):
        kind = msg.kind
        if kind in (MessageKind.DETECTIONS, MessageKind.ACK, MessageKind.SCORE, MessageKind.FEATURE, MessageKind.TELEMETRY):
            body = decode_payload(msg)
        ep = self.episode
        if kind == MessageKind.TELEMETRY:
            self.log(frame, "TELEMETRY", sensor=body.sensor, heading=body.heading, timestamp=body.timestamp)
        elif kind == MessageKind.FEATURE:
            if ep is None and body.origin == sensor_id:
                self._open(frame, sensor_id, body)
            elif ep is not None and not ep.decided and sensor_id in ep.assistants:
                key = (sensor_id, body.object_id)
                ep.boxes[key] = body.box
                g = ep.shadow.get(sensor_id, Gallery(sensor_id))
                ep.shadow[sensor_id] = gallery_add(g, body.object_id, body.feature, body.frame_index)
                if ep.first_candidate is None:
                    ep.first_candidate = frame
                ep.last_progress = frame
                self.send(frame, ep.tracker, MessageKind.FEATURE, msg.payload)
        elif kind == MessageKind.SCORE:
            if ep is not None and not ep.decided and sensor_id == ep.tracker:
                ep.scores[(body.assistant, body.object_id)] = body
                ep.last_progress = frame
        elif kind == MessageKind.ACK:
            if ep is not None and ep.decided and sensor_id in ep.pending_acks:
                ep.pending_acks.discard(sensor_id)
                ep.last_progress = frame
                if not ep.pending_acks:
                    self._close(frame)

    def _open(self, frame, tracker, probe):
        ep = Episode(
            self.next_episode,
            tracker,
            probe.feature,
            frame,
            tuple(sid for sid in sorted(self.links) if sid != tracker),
            frame,
        )
        self.next_episode += 1
        self.episode = ep
        self.log(frame, "EPISODE_OPEN", object_id=probe.object_id, episode=ep.id, tracker=tracker)
        start = encode_command(Command(Verb.START_DETECT))
        fwd = encode_feature(probe)
        for sid in ep.assistants:
            self.send(frame, sid, MessageKind.COMMAND, start)
            self.send(frame, sid, MessageKind.FEATURE, fwd)

    def _decide(self, frame):
        ep = self.episode
        ep.decided = True
        ep.last_progress = frame
        scores = sorted(ep.scores.values(), key=lambda s: (s.assistant, s.object_id))
        two_way = decide_handover(scores)
        best = None
        for s in scores:
            if s.assistant == two_way and (best is None or s.phi > best.phi):
                best = s
        one_way = one_way_decide(ep.probe, ep.shadow, self.cfg.threshold)
        one_obj = None
        if one_way is not None:
            one_obj = rank_gallery(ep.probe, ep.shadow[one_way])[0][0]
        self.log(frame, "REID_DECISION", phi=None if best is None else best.phi, method="two_way", assistant=two_way, episode=ep.id)
        self.log(frame, "REID_DECISION", method="one_way", assistant=one_way, episode=ep.id)
        self.decisions.append({"episode": ep.id, "two_way": two_way, "one_way": one_way})
        if self.cfg.method == "two_way":
            winner, obj = two_way, None if best is None else best.object_id
        else:
            winner, obj = one_way, one_obj
        ep.winner, ep.winner_object = winner, obj
        ep.pending_acks = {ep.tracker, *ep.assistants}
        stop = encode_command(Command(Verb.STOP_VISION))
        if winner is None:
            self.send(frame, ep.tracker, MessageKind.COMMAND, encode_command(Command(Verb.START_TRACK)))
        else:
            self.send(frame, ep.tracker, MessageKind.STOP_REID, encode_stop_reid(ep.id))
            self.send(frame, winner, MessageKind.START_TRACKING, encode_start_tracking(ep.id, obj, ep.boxes[(winner, obj)]))
        for sid in ep.assistants:
            if sid != winner:
                self.send(frame, sid, MessageKind.COMMAND, stop)

    def _close(self, frame):
        ep = self.episode
        self.log(frame, "EPISODE_CLOSE", episode=ep.id, assistant=ep.winner)
        if ep.winner is None:
            self.log(frame, "NO_HANDOVER", episode=ep.id)
        else:
            self.handovers.append((ep.id, ep.tracker, ep.winner, ep.winner_object))
        self.episode = None

    def step(self, frame):
        for sid in sorted(self.links):
            for msg, latency in self.links[sid].receive(frame):
                self.log_message(frame, msg, latency)
                self.handle(frame, sid, msg)
        ep = self.episode
        if ep is None:
            return
        if not ep.decided:
            waited = ep.first_candidate is not None and frame - ep.first_candidate >= self.cfg.decision_frames
            timed_out = (frame - ep.opened) / self.fps >= self.cfg.episode_timeout_s
            if waited or timed_out:
                self._decide(frame)
        if (frame - ep.last_progress) / self.fps > WATCHDOG_S:
            raise Deadlock(f"episode {ep.id} made no progress for {WATCHDOG_S} simulated seconds at frame {frame}")
