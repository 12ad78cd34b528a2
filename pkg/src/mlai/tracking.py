"""Centroid ID assignment and a single-target correlation filter tracker."""
import math
from dataclasses import dataclass, field, replace

import cv2
import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_frame, check_unit_interval
from .detection import BoundingBox
from .errors import EmptyIntersection, TargetLost
from .imaging import to_gray

# -- centroid tracker ----------------------------------------------------------


@dataclass(frozen=True)
class Track:
    centroid: tuple
    last_box: BoundingBox
    age: int = 1
    missed: int = 0


@dataclass(frozen=True)
class TrackState:
    tracks: dict = field(default_factory=dict)
    next_id: int = 0


def _distance_matrix(tracks, detections):
    tc = np.array([t.centroid for t in tracks], dtype=np.float64).reshape(-1, 2)
    dc = np.array([d.box.center for d in detections], dtype=np.float64).reshape(-1, 2)
    return np.sqrt(((tc[:, None, :] - dc[None, :, :]) ** 2).sum(axis=-1))


def _match_greedy(dist, max_dist):
    order = sorted(
        ((dist[i, j], i, j) for i in range(dist.shape[0]) for j in range(dist.shape[1]) if dist[i, j] <= max_dist)
    )
    used_t, used_d, pairs = set(), set(), []
    for _, i, j in order:
        if i not in used_t and j not in used_d:
            used_t.add(i)
            used_d.add(j)
            pairs.append((i, j))
    return pairs


def _match_optimal(dist, max_dist):
    """Most admissible pairs, then least total distance."""
    if dist.size == 0:
        return []
    admissible = dist <= max_dist
    if not admissible.any():
        return []
    # an inadmissible pair must never be worth trading for a shorter total
    big = dist[admissible].sum() + 1.0
    cost = np.where(admissible, dist, big * (1 + min(dist.shape)))
    rows, cols = linear_sum_assignment(cost)
    return [(i, j) for i, j in zip(rows, cols) if admissible[i, j]]


def assign_ids(state, detections, max_dist, max_missed, method="optimal"):
    """Associate detections with existing tracks by centroid distance.

    Pairs further apart than ``max_dist`` are never matched. ``method``
    "optimal" maximises the number of matches and then minimises the summed
    distance; "greedy" takes pairs in ascending distance. Unmatched
    detections open new tracks in detection order; unmatched tracks age and
    are dropped once ``missed`` exceeds ``max_missed``.

    Returns the new state and ``(track_id, detection)`` pairs in detection
    order.
    """
    if not max_dist > 0:
        raise ValueError(f"max_dist must be positive, got {max_dist}")
    ids = sorted(state.tracks)
    tracks = [state.tracks[i] for i in ids]
    dist = _distance_matrix(tracks, detections)
    if method == "optimal":
        pairs = _match_optimal(dist, max_dist)
    elif method == "greedy":
        pairs = _match_greedy(dist, max_dist)
    else:
        raise ValueError(f"unknown method {method!r}")

    new_tracks = {}
    assigned = {}
    for i, j in pairs:
        det = detections[j]
        old = tracks[i]
        new_tracks[ids[i]] = Track(det.box.center, det.box, old.age + 1, 0)
        assigned[j] = ids[i]
    matched = {i for i, _ in pairs}
    for i, tid in enumerate(ids):
        if i in matched:
            continue
        old = tracks[i]
        if old.missed + 1 <= max_missed:
            new_tracks[tid] = replace(old, missed=old.missed + 1, age=old.age + 1)
    next_id = state.next_id
    for j, det in enumerate(detections):
        if j not in assigned:
            assigned[j] = next_id
            new_tracks[next_id] = Track(det.box.center, det.box)
            next_id += 1
    out = [(assigned[j], detections[j]) for j in range(len(detections))]
    return TrackState(dict(sorted(new_tracks.items())), next_id), out


class CentroidTracker(BaseEstimator):
    """Stateful wrapper around :func:`assign_ids`."""

    def __init__(self, max_dist=50.0, max_missed=5, method="optimal"):
        self.max_dist = max_dist
        self.max_missed = max_missed
        self.method = method

    def fit(self, detections=(), y=None):
        self.state_ = TrackState()
        if detections:
            self.update(detections)
        return self

    def update(self, detections):
        if not hasattr(self, "state_"):
            self.state_ = TrackState()
        self.state_, pairs = assign_ids(self.state_, list(detections), self.max_dist, self.max_missed, self.method)
        return pairs


# -- correlation filter ---------------------------------------------------------


def gaussian_label(size, bandwidth_fraction, target_size):
    """Gaussian response of side ``size`` peaked (value 1) at the array centre.

    The standard deviation is ``bandwidth_fraction * sqrt(w * h)`` for
    ``target_size = (w, h)``. The centre sits at ``(size - 1) / 2`` so the
    label is mirror symmetric; even sizes are rescaled so the four central
    samples equal 1.
    """
    if size < 1:
        raise ValueError(f"size must be >= 1, got {size}")
    w, h = target_size
    sigma = bandwidth_fraction * math.sqrt(w * h)
    c = (size - 1) / 2.0
    d = (np.arange(size) - c) ** 2
    g = np.exp(-(d[:, None] + d[None, :]) / (2.0 * sigma**2))
    return g / g.max()


@dataclass(frozen=True)
class DcfHyper:
    lambda_: float = 1e-4
    online_lr: float = 0.008
    gaussian_bandwidth: float = 0.1
    scales: tuple = (1 / 1.03, 1.0, 1.03)
    padding: float = 2.0
    template_size: int = 64
    loss_threshold: float = 0.3

    def __post_init__(self):
        if not self.lambda_ > 0:
            raise ValueError("lambda_ must be positive")
        check_unit_interval(self.online_lr, "online_lr", open_low=True)
        if not any(math.isclose(s, 1.0) for s in self.scales):
            raise ValueError("the scale list must contain 1.0")
        t = self.template_size
        if t < 4 or t & (t - 1):
            raise ValueError(f"template_size must be a power of two >= 4, got {t}")
        object.__setattr__(self, "scales", tuple(float(s) for s in self.scales))


@dataclass(frozen=True, eq=False)
class DcfModel:
    template_size: int
    filter_numerator: np.ndarray
    filter_denominator: np.ndarray
    target_size: tuple
    center: tuple
    hyper: DcfHyper
    label_fft: np.ndarray
    window: np.ndarray
    last_response: float = 1.0

    @property
    def box(self):
        return BoundingBox(self.center[0], self.center[1], self.target_size[0], self.target_size[1])

    def response(self, feats):
        """Spatial correlation response of the filter over a (C, T, T) feature patch."""
        zf = np.fft.fft2(feats, axes=(-2, -1))
        num = (self.filter_numerator * zf).sum(axis=0)
        return np.fft.ifft2(num / (self.filter_denominator + self.hyper.lambda_))


def _patch(gray, center, size, template_size):
    pw = max(2, int(round(size[0])))
    ph = max(2, int(round(size[1])))
    p = cv2.getRectSubPix(gray, (pw, ph), (float(center[0]), float(center[1])))
    return cv2.resize(p, (template_size, template_size), interpolation=cv2.INTER_LINEAR)


def _features(patch, window):
    """(C, T, T) windowed zero-mean intensity on the 0-255 scale; extra
    channels stack on axis 0."""
    x = patch.astype(np.float64) * 255.0
    return ((x - x.mean()) * window)[None]


def _train(feats, label_fft):
    xf = np.fft.fft2(feats, axes=(-2, -1))
    return np.conj(xf) * label_fft, (np.conj(xf) * xf).real.sum(axis=0)


def _subpixel(resp, r, c):
    """Parabolic refinement of an argmax along each axis (circular neighbours)."""
    n, m = resp.shape

    def vertex(left, mid, right):
        den = left - 2 * mid + right
        return 0.0 if den >= 0 else 0.5 * (left - right) / den

    dy = vertex(resp[(r - 1) % n, c], resp[r, c], resp[(r + 1) % n, c])
    dx = vertex(resp[r, (c - 1) % m], resp[r, c], resp[r, (c + 1) % m])
    return r + dy, c + dx


def dcf_init(frame, box, hyper=None):
    hyper = hyper or DcfHyper()
    check_frame(frame)
    if box.clipped(frame.width, frame.height) is None:
        raise EmptyIntersection(f"box {box} lies outside the frame")
    t = hyper.template_size
    window = np.outer(np.hanning(t), np.hanning(t))
    side = t / hyper.padding
    label = gaussian_label(t, hyper.gaussian_bandwidth, (side, side))
    label_fft = np.fft.fft2(label)
    gray = to_gray(frame)
    size = (box.b_w * hyper.padding, box.b_h * hyper.padding)
    num, den = _train(_features(_patch(gray, box.center, size, t), window), label_fft)
    return DcfModel(t, num, den, (box.b_w, box.b_h), (box.b_x, box.b_y), hyper, label_fft, window)


def ema_update(model, num, den, rate=None):
    """Blend new filter terms into the model at ``rate`` (default: online_lr)."""
    lr = model.hyper.online_lr if rate is None else rate
    return replace(
        model,
        filter_numerator=(1 - lr) * model.filter_numerator + lr * num,
        filter_denominator=(1 - lr) * model.filter_denominator + lr * den,
    )


def dcf_update(model, frame):
    """Locate the target in ``frame`` and adapt the filter.

    Raises TargetLost (leaving ``model`` untouched) when the best response
    over all scales is below ``hyper.loss_threshold``.
    """
    hyper = model.hyper
    t = model.template_size
    gray = to_gray(frame)
    c = (t - 1) / 2.0
    best = None
    for s in hyper.scales:
        size = (model.target_size[0] * hyper.padding * s, model.target_size[1] * hyper.padding * s)
        resp = model.response(_features(_patch(gray, model.center, size, t), model.window)).real
        r, col = np.unravel_index(np.argmax(resp), resp.shape)
        peak = float(resp[r, col])
        if best is None or peak > best[0]:
            best = (peak, s, size, resp, r, col)
    peak, s, size, resp, r, col = best
    if peak < hyper.loss_threshold:
        raise TargetLost(f"peak response {peak:.4f} below {hyper.loss_threshold}")
    py, px = _subpixel(resp, r, col)
    dy = (py - c + t / 2) % t - t / 2
    dx = (px - c + t / 2) % t - t / 2
    center = (model.center[0] + dx * size[0] / t, model.center[1] + dy * size[1] / t)
    target = (model.target_size[0] * s, model.target_size[1] * s)
    train_size = (target[0] * hyper.padding, target[1] * hyper.padding)
    num, den = _train(_features(_patch(gray, center, train_size, t), model.window), model.label_fft)
    model = ema_update(replace(model, center=center, target_size=target, last_response=peak), num, den)
    return model.box, model


class DcfTracker(BaseEstimator):
    """Single-target correlation filter tracker with a scale pyramid.

    ``fit(frame, box)`` learns the filter on the first frame; ``update(frame)``
    returns the new box, raising TargetLost when the response collapses.
    """

    def __init__(
        self,
        lambda_=1e-4,
        online_lr=0.008,
        gaussian_bandwidth=0.1,
        scales=(1 / 1.03, 1.0, 1.03),
        padding=2.0,
        template_size=64,
        loss_threshold=0.3,
    ):
        self.lambda_ = lambda_
        self.online_lr = online_lr
        self.gaussian_bandwidth = gaussian_bandwidth
        self.scales = scales
        self.padding = padding
        self.template_size = template_size
        self.loss_threshold = loss_threshold

    def _hyper(self):
        return DcfHyper(**self.get_params())

    def fit(self, frame, box):
        self.model_ = dcf_init(frame, box, self._hyper())
        return self

    def update(self, frame):
        check_is_fitted(self, "model_")
        box, self.model_ = dcf_update(self.model_, frame)
        return box
