"""Scenario model and its YAML file format.

A scenario is a flat pixel world with moving targets and rectangular
sensor footprints. Example::

    name: handover_basic
    seed: 7
    duration: 100          # frames
    frame_rate: 10         # Hz
    expected_assistant: 1  # ground truth for compare-reid, null if none
    reid: {threshold: 0.6, top_k: 20, decision_frames: 20, episode_timeout_s: 8.0, method: two_way}
    noise: {box_sigma: 1.0, miss_rate: 0.0, false_positive_rate: 0.0, objectness_sigma: 0.05, pixel_sigma: 6.0}
    targets:
      - id: 0
        label: person
        tracked: true
        size: [24, 64]
        appearance: {head: [200, 160, 130], shirt: [200, 30, 30], pants: [30, 30, 120], pattern: plain}
        trajectory: [[0, 160, 120], [40, 330, 120], [100, 500, 120]]   # frame, x, y
    sensors:
      - id: 0
        role: tracking
        fov: [0, 0, 320, 240]                 # x, y, w, h in world pixels
        geo: [45.6500, 13.7700]
        altitude: 30.0
        illumination: {gain: 1.0, cast: [1.0, 1.0, 1.0], drift: 0.0, period_s: 6.0}
    topology:
      - [drone0, rc0, wireless]
"""
import math
from dataclasses import asdict, dataclass, replace

import numpy as np
import yaml

from ..detection import LABELS, BoundingBox, NoiseConfig
from ..errors import ScenarioInvalid, UnknownSensor
from ..geo import GeoPoint

LINK_KINDS = ("wireless", "usb", "wifi", "hdmi")
ROLES = ("tracking", "assistant")
METHODS = ("two_way", "one_way")
MIN_VISIBLE = 0.5


@dataclass(frozen=True)
class Appearance:
    head: tuple = (200, 160, 130)
    shirt: tuple = (200, 30, 30)
    pants: tuple = (30, 30, 120)
    pattern: str = "plain"
    accent: tuple = (240, 240, 240)


@dataclass(frozen=True)
class Target:
    id: int
    trajectory: tuple
    size: tuple = (24, 64)
    label: str = "person"
    appearance: Appearance = Appearance()
    tracked: bool = False

    def position(self, frame):
        """Piecewise-linear centre at ``frame``; clamped outside the waypoints."""
        pts = self.trajectory
        if frame <= pts[0][0]:
            return (float(pts[0][1]), float(pts[0][2]))
        for (f0, x0, y0), (f1, x1, y1) in zip(pts, pts[1:]):
            if frame <= f1:
                u = (frame - f0) / (f1 - f0)
                return (x0 + u * (x1 - x0), y0 + u * (y1 - y0))
        return (float(pts[-1][1]), float(pts[-1][2]))

    def box(self, frame):
        x, y = self.position(frame)
        return BoundingBox(x, y, self.size[0], self.size[1])


@dataclass(frozen=True)
class Illumination:
    gain: float = 1.0
    cast: tuple = (1.0, 1.0, 1.0)
    drift: float = 0.0
    period_s: float = 6.0

    def factors(self, t):
        g = self.gain * (1.0 + self.drift * math.sin(2.0 * math.pi * t / self.period_s))
        return np.asarray(self.cast, dtype=np.float64) * g


@dataclass(frozen=True)
class Sensor:
    id: int
    fov: tuple
    role: str = "assistant"
    geo: GeoPoint = GeoPoint(45.65, 13.77)
    altitude: float = 30.0
    illumination: Illumination = Illumination()
    name: str = ""

    @property
    def frame_size(self):
        return (int(self.fov[2]), int(self.fov[3]))

    def to_local(self, box):
        return BoundingBox(box.b_x - self.fov[0], box.b_y - self.fov[1], box.b_w, box.b_h)


@dataclass(frozen=True)
class ReidConfig:
    threshold: float = 0.60
    top_k: int = 20
    decision_frames: int = 20
    episode_timeout_s: float = 8.0
    method: str = "two_way"
    edge_margin: int = 4
    retrigger_frames: int = 20


@dataclass(frozen=True)
class Scenario:
    seed: int
    duration: int
    frame_rate: float
    targets: tuple
    sensors: tuple
    topology: tuple = ()
    noise: NoiseConfig = NoiseConfig()
    reid: ReidConfig = ReidConfig()
    expected_assistant: int = None
    name: str = "scenario"
    meters_per_pixel: float = 0.05

    def sensor(self, sensor_id):
        for s in self.sensors:
            if s.id == sensor_id:
                return s
        raise UnknownSensor(sensor_id)

    @property
    def tracking_sensor(self):
        return next(s for s in self.sensors if s.role == "tracking")

    @property
    def tracked_target(self):
        return next(t for t in self.targets if t.tracked)

    def state(self, frame):
        return ScenarioState(self, frame)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def validate(self):
        problems = []
        if self.duration < 1:
            problems.append("duration must be >= 1 frame")
        if not self.frame_rate > 0:
            problems.append("frame_rate must be positive")
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            problems.append(f"duplicate sensor ids {ids}")
        if any(not 0 <= i < 2**16 for i in ids):
            problems.append("sensor ids must fit in 16 bits")
        roles = [s.role for s in self.sensors]
        if any(r not in ROLES for r in roles):
            problems.append(f"unknown role in {roles}")
        if roles.count("tracking") != 1:
            problems.append(f"exactly one tracking sensor required, found {roles.count('tracking')}")
        for s in self.sensors:
            if len(s.fov) != 4 or s.fov[2] < 16 or s.fov[3] < 16:
                problems.append(f"sensor {s.id}: fov must be [x, y, w, h] with w, h >= 16")
        tids = [t.id for t in self.targets]
        if len(set(tids)) != len(tids):
            problems.append(f"duplicate target ids {tids}")
        if sum(t.tracked for t in self.targets) != 1:
            problems.append("exactly one target must be marked tracked")
        for t in self.targets:
            frames = [p[0] for p in t.trajectory]
            if not frames or frames[0] != 0 or frames[-1] < self.duration - 1:
                problems.append(f"target {t.id}: trajectory must span frames [0, {self.duration - 1}]")
            if any(b <= a for a, b in zip(frames, frames[1:])):
                problems.append(f"target {t.id}: waypoint frames must increase")
            if t.label not in LABELS:
                problems.append(f"target {t.id}: unknown label {t.label!r}")
            if t.size[1] < 7 or t.size[0] < 2:
                problems.append(f"target {t.id}: too small to describe")
        for link in self.topology:
            if len(link) != 3 or link[2] not in LINK_KINDS:
                problems.append(f"bad topology link {link!r}")
        if self.expected_assistant is not None and self.expected_assistant not in ids:
            problems.append(f"expected_assistant {self.expected_assistant} is not a sensor")
        if self.reid.method not in METHODS:
            problems.append(f"unknown reid method {self.reid.method!r}")
        if self.reid.episode_timeout_s >= 10.0:
            problems.append("episode_timeout_s must stay below the 10 s watchdog")
        if not 0.0 <= self.reid.threshold <= 1.0 or self.reid.top_k < 1:
            problems.append("reid threshold must lie in [0, 1] and top_k >= 1")
        if not problems and self.sensors:
            trk = self.tracking_sensor
            box = trk.to_local(self.tracked_target.box(0))
            if box.clipped(*trk.frame_size) is None:
                problems.append("tracked target is not visible to the tracking sensor at frame 0")
        if problems:
            raise ScenarioInvalid("; ".join(problems))
        return self


class ScenarioState:
    """Ground truth of one scenario frame, as seen by the detectors."""

    def __init__(self, scenario, frame):
        self.scenario = scenario
        self.frame = frame

    def frame_size(self, sensor_id):
        return self.scenario.sensor(sensor_id).frame_size

    def visible(self, sensor_id):
        """(target, local clipped box) for targets at least half inside the sensor view."""
        s = self.scenario.sensor(sensor_id)
        w, h = s.frame_size
        out = []
        for t in self.scenario.targets:
            local = s.to_local(t.box(self.frame))
            clipped = local.clipped(w, h)
            if clipped is not None and clipped.area >= MIN_VISIBLE * local.area:
                out.append((t, clipped))
        return out

    def ground_truth(self, sensor_id):
        return [(LABELS.index(t.label), box) for t, box in self.visible(sensor_id)]


# -- YAML ---------------------------------------------------------------------


def _tuple(v):
    return tuple(_tuple(x) for x in v) if isinstance(v, (list, tuple)) else v


def scenario_from_dict(d):
    try:
        targets = tuple(
            Target(
                id=int(t["id"]),
                trajectory=_tuple(t["trajectory"]),
                size=_tuple(t.get("size", (24, 64))),
                label=t.get("label", "person"),
                appearance=Appearance(**{k: _tuple(v) for k, v in t.get("appearance", {}).items()}),
                tracked=bool(t.get("tracked", False)),
            )
            for t in d["targets"]
        )
        sensors = tuple(
            Sensor(
                id=int(s["id"]),
                fov=_tuple(s["fov"]),
                role=s.get("role", "assistant"),
                geo=GeoPoint(*s.get("geo", (45.65, 13.77))),
                altitude=float(s.get("altitude", 30.0)),
                illumination=Illumination(**{k: _tuple(v) for k, v in s.get("illumination", {}).items()}),
                name=s.get("name", ""),
            )
            for s in d["sensors"]
        )
        sc = Scenario(
            seed=int(d.get("seed", 0)),
            duration=int(d["duration"]),
            frame_rate=float(d.get("frame_rate", 10.0)),
            targets=targets,
            sensors=sensors,
            topology=_tuple(d.get("topology", ())),
            noise=NoiseConfig(**d.get("noise", {})),
            reid=ReidConfig(**d.get("reid", {})),
            expected_assistant=d.get("expected_assistant"),
            name=d.get("name", "scenario"),
            meters_per_pixel=float(d.get("meters_per_pixel", 0.05)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioInvalid(f"malformed scenario: {exc!r}") from None
    return sc.validate()


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def scenario_to_dict(sc):
    d = {
        "name": sc.name,
        "seed": sc.seed,
        "duration": sc.duration,
        "frame_rate": sc.frame_rate,
        "expected_assistant": sc.expected_assistant,
        "meters_per_pixel": sc.meters_per_pixel,
        "reid": asdict(sc.reid),
        "noise": asdict(sc.noise),
        "targets": [],
        "sensors": [],
        "topology": [list(link) for link in sc.topology],
    }
    for t in sc.targets:
        d["targets"].append(
            {
                "id": t.id,
                "label": t.label,
                "tracked": t.tracked,
                "size": list(t.size),
                "appearance": asdict(t.appearance),
                "trajectory": [list(p) for p in t.trajectory],
            }
        )
    for s in sc.sensors:
        d["sensors"].append(
            {
                "id": s.id,
                "name": s.name,
                "role": s.role,
                "fov": list(s.fov),
                "geo": [s.geo.latitude, s.geo.longitude],
                "altitude": s.altitude,
                "illumination": asdict(s.illumination),
            }
        )
    return _plain(d)


def load_scenario(path):
    try:
        with open(path) as fh:
            d = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ScenarioInvalid(f"scenario file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ScenarioInvalid(f"{path}: not valid YAML ({exc})") from None
    if not isinstance(d, dict):
        raise ScenarioInvalid(f"{path}: expected a mapping at top level")
    return scenario_from_dict(d)


def dump_scenario(sc, path):
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(sc), fh, sort_keys=False, default_flow_style=None)
