"""YOLOv3-style output decoding and a scripted stand-in detector.

Box parameterisation (grid units)::

    b_x = sigmoid(t_x) + c_x        b_w = p_w * exp(t_w)
    b_y = sigmoid(t_y) + c_y        b_h = p_h * exp(t_h)

Class scores are independent logistic outputs, never a softmax.
"""
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import OutOfCell

LABELS = ("person", "vehicle")
OBJECTNESS_THRESHOLD = 0.5
BCE_EPS = 1e-12


@dataclass(frozen=True)
class BoxPrediction:
    t_x: float
    t_y: float
    t_w: float
    t_h: float
    c_x: float = 0.0
    c_y: float = 0.0
    p_w: float = 1.0
    p_h: float = 1.0

    def __post_init__(self):
        if not (self.p_w > 0 and self.p_h > 0):
            raise ValueError(f"priors must be positive, got ({self.p_w}, {self.p_h})")

    @property
    def offsets(self):
        return np.array([self.t_x, self.t_y, self.t_w, self.t_h])


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box given by its centre and size."""

    b_x: float
    b_y: float
    b_w: float
    b_h: float

    def __post_init__(self):
        if not (self.b_w > 0 and self.b_h > 0):
            raise ValueError(f"box size must be positive, got ({self.b_w}, {self.b_h})")

    @classmethod
    def from_corners(cls, x0, y0, x1, y1):
        return cls((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0)

    @property
    def corners(self):
        return (
            self.b_x - self.b_w / 2.0,
            self.b_y - self.b_h / 2.0,
            self.b_x + self.b_w / 2.0,
            self.b_y + self.b_h / 2.0,
        )

    @property
    def center(self):
        return (self.b_x, self.b_y)

    @property
    def area(self):
        return self.b_w * self.b_h

    def scaled(self, sx, sy=None):
        """Same box with every coordinate multiplied (grid -> pixel units)."""
        sy = sx if sy is None else sy
        return BoundingBox(self.b_x * sx, self.b_y * sy, self.b_w * sx, self.b_h * sy)

    def clipped(self, width, height):
        """Intersection with [0, width) x [0, height), or None when empty."""
        x0, y0, x1, y1 = self.corners
        x0, y0 = max(x0, 0.0), max(y0, 0.0)
        x1, y1 = min(x1, float(width)), min(y1, float(height))
        if x1 <= x0 or y1 <= y0:
            return None
        return BoundingBox.from_corners(x0, y0, x1, y1)


def iou(a, b):
    ax0, ay0, ax1, ay1 = a.corners
    bx0, by0, bx1, by1 = b.corners
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    objectness: float
    class_probs: tuple = field(default=(1.0, 0.0))
    label: int = 0

    def __post_init__(self):
        if not 0.0 <= self.objectness <= 1.0:
            raise ValueError(f"objectness {self.objectness} outside [0, 1]")
        if any(not 0.0 <= p <= 1.0 for p in self.class_probs):
            raise ValueError("class probabilities must lie in [0, 1]")


# -- logistic head ----------------------------------------------------------


def sigmoid(v):
    """Numerically stable logistic function; works on scalars and arrays."""
    v = np.asarray(v, dtype=np.float64)
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return float(out) if out.ndim == 0 else out


def logit(p):
    return math.log(p) - math.log1p(-p)


def decode_box(p):
    return BoundingBox(
        sigmoid(p.t_x) + p.c_x,
        sigmoid(p.t_y) + p.c_y,
        p.p_w * math.exp(p.t_w),
        p.p_h * math.exp(p.t_h),
    )


def encode_box(b, cell, priors):
    """Invert :func:`decode_box` for box ``b`` in the cell at ``cell`` with anchor ``priors``."""
    c_x, c_y = cell
    p_w, p_h = priors
    fx, fy = b.b_x - c_x, b.b_y - c_y
    if not (0.0 < fx < 1.0 and 0.0 < fy < 1.0):
        raise OutOfCell(f"centre offset ({fx}, {fy}) not strictly inside the cell")
    return BoxPrediction(
        logit(fx), logit(fy), math.log(b.b_w / p_w), math.log(b.b_h / p_h), c_x, c_y, p_w, p_h
    )


def regression_gradient(t_hat, t):
    """Squared-error gradient ``t_hat - t`` for (x, y, w, h)."""
    return t_hat.offsets - t.offsets


def class_probabilities(logits):
    return sigmoid(np.asarray(logits, dtype=np.float64).reshape(-1))


def binary_cross_entropy(pred, target):
    if target not in (0, 1):
        raise ValueError(f"target must be 0 or 1, got {target!r}")
    p = min(max(float(pred), BCE_EPS), 1.0 - BCE_EPS)
    loss = -(target * math.log(p) + (1 - target) * math.log1p(-p))
    return max(loss, 0.0)


# -- scripted detector -------------------------------------------------------


@dataclass(frozen=True)
class NoiseConfig:
    """Sensor and detector corruption knobs.

    box_sigma jitters detection centres/sizes (pixels), miss_rate drops
    true targets, false_positive_rate is the Poisson mean of spurious boxes
    per frame, objectness_sigma perturbs confidence, pixel_sigma is the
    per-frame rendering noise on targets.
    """

    box_sigma: float = 0.0
    miss_rate: float = 0.0
    false_positive_rate: float = 0.0
    objectness_sigma: float = 0.0
    pixel_sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.miss_rate <= 1.0:
            raise ValueError("miss_rate must lie in [0, 1]")
        for name in ("box_sigma", "false_positive_rate", "objectness_sigma", "pixel_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


_CLASS_LOGIT = 6.0


def scripted_detect(scene, sensor, noise, rng_seed):
    """Noisy detections of the ground-truth targets a sensor can see.

    ``scene`` must provide ``ground_truth(sensor)`` -> list of
    ``(label, BoundingBox)`` in sensor pixel coordinates (raising
    UnknownSensor for unknown ids) and ``frame_size(sensor)`` -> (w, h).
    Every random draw comes from ``rng_seed``, so the output is a pure
    function of the arguments.
    """
    truth = scene.ground_truth(sensor)
    width, height = scene.frame_size(sensor)
    rng = np.random.default_rng(rng_seed)
    n_labels = len(LABELS)
    out = []
    for label, box in truth:
        # fixed draw count per target keeps the stream aligned whatever is missed
        miss, jitter, obj_noise, cls_noise = (
            rng.random(),
            rng.normal(0.0, 1.0, 4),
            rng.normal(0.0, 1.0),
            rng.normal(0.0, 1.0, n_labels),
        )
        if miss < noise.miss_rate:
            continue
        if noise.box_sigma > 0:
            s = noise.box_sigma
            box = BoundingBox(
                box.b_x + s * jitter[0],
                box.b_y + s * jitter[1],
                max(2.0, box.b_w + s * jitter[2]),
                max(2.0, box.b_h + s * jitter[3]),
            )
            box = box.clipped(width, height)
            if box is None:
                continue
        objectness = 1.0 - min(1.0, abs(noise.objectness_sigma * obj_noise))
        if objectness < OBJECTNESS_THRESHOLD:
            continue
        logits = np.full(n_labels, -_CLASS_LOGIT)
        logits[label] = _CLASS_LOGIT
        probs = class_probabilities(logits + noise.objectness_sigma * cls_noise)
        out.append(Detection(box, objectness, tuple(float(p) for p in probs), int(np.argmax(probs))))
    for _ in range(rng.poisson(noise.false_positive_rate) if noise.false_positive_rate > 0 else 0):
        w = rng.uniform(8, max(9.0, width / 8))
        h = rng.uniform(8, max(9.0, height / 4))
        box = BoundingBox(rng.uniform(w / 2, width - w / 2), rng.uniform(h / 2, height - h / 2), w, h)
        objectness = rng.uniform(OBJECTNESS_THRESHOLD, 0.8)
        probs = class_probabilities(rng.normal(0.0, 1.0, n_labels))
        out.append(Detection(box, float(objectness), tuple(float(p) for p in probs), int(np.argmax(probs))))
    return out


# -- wire format --------------------------------------------------------------

_DET = struct.Struct(">Hddddd")
DETECTION_SIZE = _DET.size  # 42


def pack_detection(d):
    b = d.box
    return _DET.pack(d.label, d.objectness, b.b_x, b.b_y, b.b_w, b.b_h)


def unpack_detection(data, offset=0):
    label, obj, x, y, w, h = _DET.unpack_from(data, offset)
    probs = tuple(1.0 if i == label else 0.0 for i in range(max(len(LABELS), label + 1)))
    return Detection(BoundingBox(x, y, w, h), obj, probs, label)
