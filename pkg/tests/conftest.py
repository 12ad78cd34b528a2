import os

import numpy as np
import pytest

from mlai.imaging import Frame

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")
ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCENARIOS = os.path.join(ROOT, "scenarios")


def fixture_bytes(name):
    with open(os.path.join(FIXTURES, name), "rb") as fh:
        return fh.read()


def random_frame(rng, max_side=16, rgb=None):
    w, h = (int(v) for v in rng.integers(1, max_side + 1, 2))
    if rgb is None:
        rgb = bool(rng.integers(2))
    shape = (h, w, 3) if rgb else (h, w)
    return Frame.from_array(rng.integers(0, 256, shape, dtype=np.uint8))


def solid(rgb, h=8, w=4):
    return Frame.from_array(np.tile(np.array(rgb, dtype=np.uint8), (h, w, 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def square_sequence(n=100, step=2.0, side=32, size=(240, 320), seed=3):
    """Textured square translating ``step`` px/frame over a smooth background.

    Returns (frames, boxes) with boxes in pixel coordinates.
    """
    rng = np.random.default_rng(seed)
    h, w = size
    yy, xx = np.mgrid[0:h, 0:w]
    bg = (60 + 20 * np.sin(xx / 23.0) + 20 * np.cos(yy / 31.0)).astype(np.float64)
    tex = rng.integers(120, 256, (side, side)).astype(np.float64)
    frames, boxes = [], []
    from mlai.detection import BoundingBox

    for i in range(n):
        img = bg.copy()
        x0, y0 = 40 + step * i, 60 + 0.5 * step * i
        xi, yi = int(round(x0)), int(round(y0))
        img[yi : yi + side, xi : xi + side] = tex
        img = np.clip(img + rng.normal(0, 3, img.shape), 0, 255).astype(np.uint8)
        frames.append(Frame.from_array(np.repeat(img[..., None], 3, axis=2)))
        boxes.append(BoundingBox(xi + side / 2, yi + side / 2, side, side))
    return frames, boxes
