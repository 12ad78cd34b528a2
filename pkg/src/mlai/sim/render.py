"""Deterministic rasterisation of sensor views."""
import functools

import numpy as np

from ..imaging import Frame

_BG_TAG = 0xB6
_NOISE_TAG = 0x7E


@functools.lru_cache(maxsize=256)
def prototype(appearance, size, label):
    """Clean (h, w, 3) float texture of a target."""
    w, h = int(size[0]), int(size[1])
    img = np.empty((h, w, 3), dtype=np.float64)
    if label == "vehicle":
        img[:] = appearance.shirt
        top = max(1, h // 4)
        img[:top, w // 6 : w - w // 6] = appearance.accent
        img[h - max(1, h // 6) :] = (25, 25, 25)
    else:
        head = max(1, h // 6)
        waist = max(head + 1, int(round(h * 0.55)))
        img[:head] = (60, 40, 30)
        img[:head, w // 4 : w - w // 4] = appearance.head
        img[head:waist] = appearance.shirt
        img[waist:] = appearance.pants
        torso = img[head:waist]
        if appearance.pattern == "stripes":
            torso[::4] = appearance.accent
        elif appearance.pattern == "checks":
            yy, xx = np.indices(torso.shape[:2])
            torso[((yy // 4) + (xx // 4)) % 2 == 1] = appearance.accent
        elif appearance.pattern == "vest":
            torso[:, w // 3 : w - w // 3] = appearance.accent
    # soft left-to-right shading so flat colours still carry some texture
    shade = np.linspace(0.92, 1.08, w)[None, :, None]
    img = np.clip(img * shade, 0, 255)
    img.setflags(write=False)
    return img


@functools.lru_cache(maxsize=64)
def background(seed, sensor):
    w, h = sensor.frame_size
    rng = np.random.default_rng([seed & 0xFFFFFFFF, sensor.id, _BG_TAG])
    base = rng.integers(40, 100, size=(h, w, 3)).astype(np.float64)
    tint = rng.uniform(0.85, 1.15, size=3)
    bg = np.clip(base * tint * sensor.illumination.factors(0.0), 0, 255).astype(np.uint8)
    bg.setflags(write=False)
    return bg


def render_array(scenario, sensor, frame_index, with_noise=True):
    img = background(scenario.seed, sensor).copy()
    h, w = img.shape[:2]
    t = frame_index / scenario.frame_rate
    light = sensor.illumination.factors(t)
    sigma = scenario.noise.pixel_sigma if with_noise else 0.0
    for target in scenario.targets:
        box = sensor.to_local(target.box(frame_index))
        tw, th = int(target.size[0]), int(target.size[1])
        x0 = int(round(box.b_x - tw / 2.0))
        y0 = int(round(box.b_y - th / 2.0))
        cx0, cy0 = max(x0, 0), max(y0, 0)
        cx1, cy1 = min(x0 + tw, w), min(y0 + th, h)
        if cx1 <= cx0 or cy1 <= cy0:
            continue
        patch = prototype(target.appearance, target.size, target.label) * light
        if sigma > 0:
            rng = np.random.default_rng([scenario.seed & 0xFFFFFFFF, sensor.id, frame_index, target.id, _NOISE_TAG])
            patch = patch + rng.normal(0.0, sigma, patch.shape)
        sub = patch[cy0 - y0 : cy1 - y0, cx0 - x0 : cx1 - x0]
        img[cy0:cy1, cx0:cx1] = np.clip(np.rint(sub), 0, 255).astype(np.uint8)
    return img


def render_sensor_view(scenario, sensor_id, frame_index):
    """The frame ``sensor_id`` captures at ``frame_index``; bit-identical on every call."""
    if not 0 <= frame_index < scenario.duration:
        raise ValueError(f"frame {frame_index} outside [0, {scenario.duration})")
    sensor = scenario.sensor(sensor_id)
    return Frame.from_array(render_array(scenario, sensor, frame_index))
