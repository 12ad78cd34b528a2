"""Seeded handover scenarios and the one-way / two-way ReID comparison."""
import os
from dataclasses import dataclass, field

import numpy as np

from ..detection import NoiseConfig
from ..features import cosine_similarity, extract_feature
from ..geo import GeoPoint, offset
from ..imaging import Frame
from .render import prototype
from .runner import run_scenario
from .scenario import Appearance, Illumination, ReidConfig, Scenario, Sensor, Target, dump_scenario, load_scenario

FOV_W, FOV_H = 320, 240
ANCHOR = GeoPoint(45.6500, 13.7700)
PATTERNS = ("plain", "stripes", "checks", "vest")
CROWD_MAX_COSINE = 0.40

# tracking sensor, an assistant to its right and one below it, 40 px gaps
LAYOUT = {0: (0, 0), 1: (FOV_W + 40, 0), 2: (0, FOV_H + 60)}
TOPOLOGY = (
    ("drone0", "rc0", "wireless"),
    ("rc0", "phone0", "usb"),
    ("phone0", "router", "wifi"),
    ("router", "laptop", "wifi"),
    ("laptop", "display", "hdmi"),
)


def _sensor(sid, role, illumination=Illumination(), mpp=0.05):
    x, y = LAYOUT[sid]
    geo = offset(ANCHOR, -(y + FOV_H / 2) * mpp, (x + FOV_W / 2) * mpp)
    return Sensor(sid, (x, y, FOV_W, FOV_H), role, geo, 30.0, illumination, f"drone{sid}")


def _colour(rng, lo=20, hi=235):
    return tuple(int(v) for v in rng.integers(lo, hi, 3))


def _jitter(rng, c, amount):
    return tuple(int(np.clip(v + rng.integers(-amount, amount + 1), 0, 255)) for v in c)


def _far_from(rng, ref, min_dist):
    while True:
        c = _colour(rng)
        if np.abs(np.subtract(c, ref)).sum() >= min_dist:
            return c


def _route(dest, duration, speed, start_margin):
    """Waypoints from inside the tracking view, through its border, to ``dest``'s centre."""
    dx, dy = LAYOUT[dest]
    goal = (dx + FOV_W / 2, dy + FOV_H / 2)
    if dest == 1:
        start = (FOV_W - start_margin, FOV_H / 2)
    else:
        start = (FOV_W / 2, FOV_H - start_margin)
    dist = float(np.hypot(goal[0] - start[0], goal[1] - start[1]))
    arrive = max(1, int(round(dist / speed)))
    arrive = min(arrive, duration - 2)
    return ((0, start[0], start[1]), (arrive, goal[0], goal[1]), (duration - 1, goal[0] + 8, goal[1] + 4))


def _cameo(sensor_id, first, visible, duration, rng):
    """A figure that steps into ``sensor_id``'s view for ``visible`` frames and leaves."""
    x, y = LAYOUT[sensor_id]
    cx = x + rng.uniform(60, FOV_W - 60)
    cy = y + rng.uniform(70, FOV_H - 70)
    if sensor_id == 1:
        hidden = (cx, y - 80.0)  # just above the view, outside every FoV
    else:
        hidden = (cx, y + FOV_H + 80.0)
    pts = [(0, *hidden), (first, *hidden), (first + 1, cx, cy), (first + visible, cx + 4, cy), (first + visible + 1, *hidden)]
    if pts[-1][0] < duration - 1:
        pts.append((duration - 1, *hidden))
    return tuple(pts)


def _look_feature(look, rng=None, sigma=0.0):
    img = prototype(look, (24, 64), "person")
    if sigma > 0:
        img = img + rng.normal(0.0, sigma, img.shape)
    return extract_feature(Frame.from_array(np.clip(np.rint(img), 0, 255).astype(np.uint8)))


def _stranger(rng, target_look, sigma, max_cosine=CROWD_MAX_COSINE, tries=500):
    """An appearance whose descriptor stays far from the target's under pixel noise."""
    refs = [_look_feature(target_look, rng, sigma) for _ in range(2)]
    best = None
    for _ in range(tries):
        look = Appearance(
            head=_colour(rng, 150, 220),
            shirt=_far_from(rng, target_look.shirt, 200),
            pants=_far_from(rng, target_look.pants, 150),
            pattern=PATTERNS[int(rng.integers(len(PATTERNS)))],
            accent=_colour(rng),
        )
        c = max(cosine_similarity(r, _look_feature(look, rng, sigma)) for r in refs)
        if c < max_cosine:
            return look
        if best is None or c < best[0]:
            best = (c, look)
    return best[1]


def _crowd(rng, sensor_id, n, target_look, start_id, duration, sigma):
    x, y = LAYOUT[sensor_id]
    out = []
    for i in range(n):
        look = _stranger(rng, target_look, sigma)
        px = x + rng.uniform(40, FOV_W - 40)
        py = y + rng.uniform(50, FOV_H - 50)
        vx, vy = rng.uniform(-1.0, 1.0, 2)
        px1 = float(np.clip(px + vx * duration, x + 30, x + FOV_W - 30))
        py1 = float(np.clip(py + vy * duration, y + 40, y + FOV_H - 40))
        out.append(Target(start_id + i, ((0, px, py), (duration - 1, px1, py1)), (24, 64), "person", look))
    return out


def make_handover_scenario(
    seed,
    correct=1,
    distractor=True,
    shift=True,
    crowd=1,
    duration=60,
    name=None,
    noise=None,
):
    """Target leaves the tracking view for assistant ``correct``.

    With ``distractor`` a near-lookalike briefly walks through the other
    assistant's view; with ``shift`` the correct assistant sees the scene
    under different light than the tracking sensor.
    """
    rng = np.random.default_rng([seed, 0x5CE])
    wrong = 2 if correct == 1 else 1
    look = Appearance(
        head=_colour(rng, 150, 220),
        shirt=_colour(rng),
        pants=_colour(rng),
        pattern=PATTERNS[int(rng.integers(len(PATTERNS)))],
        accent=_colour(rng),
    )
    speed = float(rng.uniform(7.0, 9.0))
    targets = [Target(0, _route(correct, duration, speed, float(rng.uniform(50, 70))), (24, 64), "person", look, True)]
    if distractor:
        twin = Appearance(
            head=_jitter(rng, look.head, 20),
            shirt=_jitter(rng, look.shirt, int(rng.integers(10, 40))),
            pants=_jitter(rng, look.pants, int(rng.integers(20, 70))),
            pattern=look.pattern,
            accent=_jitter(rng, look.accent, 30),
        )
        first = int(rng.integers(6, 12))
        visible = int(rng.integers(3, 7))
        targets.append(Target(1, _cameo(wrong, first, visible, duration, rng), (24, 64), "person", twin))
    noise = noise or NoiseConfig(box_sigma=1.0, objectness_sigma=0.05, pixel_sigma=6.0)
    nid = len(targets)
    for sid in (0, 1, 2):
        people = _crowd(rng, sid, crowd, look, nid, duration, max(noise.pixel_sigma, 6.0))
        targets.extend(people)
        nid += len(people)
    if shift:
        gain = float(rng.uniform(0.55, 0.75))
        cast = tuple(float(v) for v in rng.uniform(0.8, 1.15, 3))
        light = {0: Illumination(1.0, (1.0, 1.0, 1.0), 0.08, 6.0), correct: Illumination(gain, cast), wrong: Illumination()}
    else:
        light = {0: Illumination(), 1: Illumination(), 2: Illumination()}
    sensors = (
        _sensor(0, "tracking", light[0]),
        _sensor(1, "assistant", light[1]),
        _sensor(2, "assistant", light[2]),
    )
    return Scenario(
        seed=int(seed),
        duration=duration,
        frame_rate=10.0,
        targets=tuple(targets),
        sensors=sensors,
        topology=TOPOLOGY,
        noise=noise,
        # an unanswered episode must time out while the scenario still runs
        reid=ReidConfig(episode_timeout_s=min(8.0, (duration - 15) / 10.0)),
        expected_assistant=correct,
        name=name or f"handover_{seed}",
    ).validate()


def make_no_handover_scenario(seed=11, duration=120):
    """Target walks out of the tracking view where no assistant looks."""
    sc = make_handover_scenario(seed, correct=1, distractor=False, shift=False, duration=duration)
    tgt = sc.tracked_target
    lost = Target(
        tgt.id,
        ((0, 70.0, FOV_H / 2), (20, -60.0, FOV_H / 2), (duration - 1, -400.0, FOV_H / 2)),
        tgt.size,
        tgt.label,
        tgt.appearance,
        True,
    )
    targets = (lost,) + tuple(t for t in sc.targets if t.id != tgt.id)
    return Scenario(**{**sc.__dict__, "targets": targets, "expected_assistant": None, "name": "no_handover"}).validate()


def generate_suite(n=50, seed=0, clean=False):
    """``n`` seeded scenarios; ``clean`` drops the distractors and light changes."""
    rng = np.random.default_rng([seed, 0xBE4C])
    out = []
    for i in range(n):
        s = int(rng.integers(0, 2**31))
        out.append(
            make_handover_scenario(
                s,
                correct=1 + i % 2,
                distractor=not clean,
                shift=not clean,
                name=f"{'clean' if clean else 'bench'}_{i:03d}",
            )
        )
    return out


def write_suite(scenarios, directory):
    os.makedirs(directory, exist_ok=True)
    paths = []
    for sc in scenarios:
        p = os.path.join(directory, f"{sc.name}.yaml")
        dump_scenario(sc, p)
        paths.append(p)
    return paths


def load_suite(directory):
    names = sorted(f for f in os.listdir(directory) if f.endswith((".yaml", ".yml")))
    return [load_scenario(os.path.join(directory, f)) for f in names]


@dataclass
class ComparisonReport:
    rows: list = field(default_factory=list)

    @property
    def n(self):
        return len(self.rows)

    def _accuracy(self, key):
        if not self.rows:
            return None
        return sum(r[key] == r["expected"] for r in self.rows) / len(self.rows)

    @property
    def one_way_accuracy(self):
        return self._accuracy("one_way")

    @property
    def two_way_accuracy(self):
        return self._accuracy("two_way")

    @property
    def delta(self):
        if not self.rows:
            return None
        return self.two_way_accuracy - self.one_way_accuracy

    def summary(self):
        def pct(v):
            return "n/a" if v is None else f"{100 * v:.1f}%"

        return (
            f"scenarios {self.n}\n"
            f"one_way accuracy {pct(self.one_way_accuracy)}\n"
            f"two_way accuracy {pct(self.two_way_accuracy)}\n"
            f"delta {'n/a' if self.delta is None else f'{100 * self.delta:+.1f} pp'}"
        )

    def to_dict(self):
        return {
            "scenarios": self.n,
            "one_way_accuracy": self.one_way_accuracy,
            "two_way_accuracy": self.two_way_accuracy,
            "delta": self.delta,
            "rows": self.rows,
        }


def compare_reid(scenarios):
    """Handover accuracy of both decision rules over a suite.

    Each scenario runs once; the coordinator evaluates the one-way rule on
    the same candidates it receives for the two-way rule, so both see
    identical evidence.
    """
    report = ComparisonReport()
    for sc in scenarios:
        log = run_scenario(sc)
        report.rows.append(
            {
                "scenario": sc.name,
                "seed": sc.seed,
                "expected": sc.expected_assistant,
                "one_way": log.decision("one_way"),
                "two_way": log.decision("two_way"),
            }
        )
    return report
