"""Frames, the MLF1 lossless frame codec and the colour conversions used by
the appearance features.

MLF1 layout (all integers big-endian)::

    offset  size  field
    0       4     magic b"MLF1"
    4       4     width   (uint32)
    8       4     height  (uint32)
    12      1     channels (1 or 3)
    13      1     color_model (1 = GRAY8, 2 = RGB8)
    14      W*H*C raw pixels, row-major, channels interleaved
"""
import enum
import math
import struct
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import EmptyIntersection, LengthMismatch, MalformedHeader

MAGIC = b"MLF1"
_HEADER = struct.Struct(">4sIIBB")
HEADER_SIZE = _HEADER.size  # 14


class ColorModel(enum.IntEnum):
    GRAY8 = 1
    RGB8 = 2


_CHANNELS = {ColorModel.GRAY8: 1, ColorModel.RGB8: 3}


@dataclass(frozen=True, eq=False)
class Frame:
    """An H x W x C image of 8-bit samples.

    ``pixels`` is the raw row-major byte string; use :meth:`array` for a
    zero-copy read-only numpy view.
    """

    width: int
    height: int
    channels: int
    pixels: bytes
    color_model: ColorModel

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"frame dimensions must be positive, got {self.width}x{self.height}")
        model = ColorModel(self.color_model)
        object.__setattr__(self, "color_model", model)
        if _CHANNELS[model] != self.channels:
            raise ValueError(f"{model.name} frames need {_CHANNELS[model]} channels, got {self.channels}")
        if not isinstance(self.pixels, bytes):
            object.__setattr__(self, "pixels", bytes(self.pixels))
        expected = self.width * self.height * self.channels
        if len(self.pixels) != expected:
            raise LengthMismatch(f"pixel buffer holds {len(self.pixels)} bytes, expected {expected}")

    @classmethod
    def from_array(cls, arr):
        """Build a frame from an (H, W) or (H, W, 3) uint8 array."""
        arr = np.asarray(arr)
        if arr.dtype != np.uint8:
            raise TypeError(f"expected uint8 samples, got {arr.dtype}")
        if arr.ndim == 2:
            return cls(arr.shape[1], arr.shape[0], 1, arr.tobytes(), ColorModel.GRAY8)
        if arr.ndim == 3 and arr.shape[2] == 3:
            return cls(arr.shape[1], arr.shape[0], 3, np.ascontiguousarray(arr).tobytes(), ColorModel.RGB8)
        if arr.ndim == 3 and arr.shape[2] == 1:
            return cls(arr.shape[1], arr.shape[0], 1, arr.tobytes(), ColorModel.GRAY8)
        raise ValueError(f"unsupported array shape {arr.shape}")

    def array(self):
        """Read-only (H, W, C) view of the pixel buffer."""
        return np.frombuffer(self.pixels, dtype=np.uint8).reshape(self.height, self.width, self.channels)

    @property
    def shape(self):
        return (self.height, self.width, self.channels)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.color_model == other.color_model
            and self.pixels == other.pixels
        )

    def __hash__(self):
        return hash((self.width, self.height, int(self.color_model), self.pixels))

    def __repr__(self):
        return f"Frame({self.width}x{self.height}, {self.color_model.name})"


def encode_frame(frame):
    return _HEADER.pack(MAGIC, frame.width, frame.height, frame.channels, int(frame.color_model)) + frame.pixels


def decode_frame(data):
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise MalformedHeader(f"need {HEADER_SIZE} header bytes, got {len(data)}")
    magic, width, height, channels, model = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MalformedHeader(f"bad magic {magic!r}")
    try:
        model = ColorModel(model)
    except ValueError:
        raise MalformedHeader(f"unknown color model {model}") from None
    if width == 0 or height == 0 or channels != _CHANNELS[model]:
        raise MalformedHeader(f"inconsistent header {width}x{height}x{channels} {model.name}")
    payload = data[HEADER_SIZE:]
    expected = width * height * channels
    if len(payload) != expected:
        raise LengthMismatch(f"payload holds {len(payload)} bytes, header declares {expected}")
    return Frame(width, height, channels, payload, model)


# -- colour -----------------------------------------------------------------


@dataclass(frozen=True)
class HsvPixel:
    h: float
    s: float
    v: float


@dataclass(frozen=True)
class LabPixel:
    L: float
    a: float
    b: float


def hsv_array(rgb):
    """Hexcone HSV for an (..., 3) uint8 array.

    Returns (h, s, v) arrays with h in degrees [0, 360) and s, v in [0, 1].
    Achromatic pixels get h = 0.
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    mx = rgb.max(axis=-1)
    mn = rgb.min(axis=-1)
    delta = mx - mn
    v = mx / 255.0
    s = np.divide(delta, mx, out=np.zeros_like(mx), where=mx > 0)
    safe = np.where(delta > 0, delta, 1.0)
    h = np.where(
        mx == r,
        np.mod((g - b) / safe, 6.0),
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    h = np.where(delta > 0, h * 60.0, 0.0)
    # mod 6 of a tiny negative can round to exactly 6
    h = np.where(h >= 360.0, h - 360.0, h)
    return h, s, v


# sRGB primaries, D65
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# white point taken as the image of RGB (1, 1, 1) so white maps to a* = b* = 0 exactly
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_DELTA = 6.0 / 29.0

# sRGB decoding is a function of the byte value only
_LINEAR_LUT = np.array(
    [c / 12.92 if c <= 0.04045 else ((c + 0.055) / 1.055) ** 2.4 for c in np.arange(256) / 255.0]
)


def _lab_f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def lab_array(rgb):
    """CIELab (D65) for an (..., 3) uint8 array; returns (L, a, b) arrays."""
    rgb = np.asarray(rgb)
    lin = _LINEAR_LUT[rgb.astype(np.intp)]
    xyz = lin @ _RGB_TO_XYZ.T / _WHITE
    fx, fy, fz = (_lab_f(xyz[..., i]) for i in range(3))
    L = np.clip(116.0 * fy - 16.0, 0.0, 100.0)
    return L, 500.0 * (fx - fy), 200.0 * (fy - fz)


def _check_byte(*vals):
    for v in vals:
        if not 0 <= int(v) <= 255 or int(v) != v:
            raise ValueError(f"channel value {v!r} is not a byte")


def rgb_to_hsv(r, g, b):
    _check_byte(r, g, b)
    h, s, v = hsv_array(np.array([r, g, b], dtype=np.uint8))
    return HsvPixel(float(h), float(s), float(v))


def rgb_to_lab(r, g, b):
    _check_byte(r, g, b)
    L, a, bb = lab_array(np.array([r, g, b], dtype=np.uint8))
    return LabPixel(float(L), float(a), float(bb))


def to_gray(frame):
    """Float32 luma in [0, 1] as an (H, W) array."""
    arr = frame.array()
    if frame.channels == 1:
        return arr[..., 0].astype(np.float32) / 255.0
    return cv2.cvtColor(np.ascontiguousarray(arr), cv2.COLOR_RGB2GRAY).astype(np.float32) / 255.0


# -- geometry ---------------------------------------------------------------


def box_pixel_bounds(box):
    """Integer pixel span [x0, x1) x [y0, y1) touched by a centre-size box."""
    x0 = math.floor(box.b_x - box.b_w / 2.0)
    x1 = math.ceil(box.b_x + box.b_w / 2.0)
    y0 = math.floor(box.b_y - box.b_h / 2.0)
    y1 = math.ceil(box.b_y + box.b_h / 2.0)
    return x0, y0, x1, y1


def crop(frame, box):
    """Pixels of ``frame`` covered by ``box``, clamped to the frame."""
    x0, y0, x1, y1 = box_pixel_bounds(box)
    x0, x1 = max(x0, 0), min(x1, frame.width)
    y0, y1 = max(y0, 0), min(y1, frame.height)
    if x1 <= x0 or y1 <= y0:
        raise EmptyIntersection(f"box {box} does not intersect a {frame.width}x{frame.height} frame")
    return Frame.from_array(frame.array()[y0:y1, x0:x1])


def resize(frame, width, height):
    out = cv2.resize(np.ascontiguousarray(frame.array()), (width, height), interpolation=cv2.INTER_AREA)
    return Frame.from_array(out)


def read_image(path):
    """Load an MLF1 file or a binary/ASCII PPM/PGM as a Frame."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == MAGIC:
        return decode_frame(data)
    if data[:2] in (b"P2", b"P3", b"P5", b"P6"):
        img = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
        if img is None:
            raise MalformedHeader(f"{path}: undecodable PNM image")
        if img.dtype != np.uint8:
            raise MalformedHeader(f"{path}: only 8-bit PNM images are supported")
        if img.ndim == 3:
            img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
        return Frame.from_array(img)
    raise MalformedHeader(f"{path}: neither MLF1 nor PPM/PGM")
