"""Pyramid-stripe colour histogram descriptor.

The crop is cut into horizontal stripes at several pyramid levels
(default 3, 5 and 7 stripes). Each stripe contributes four hard-binned
histograms: hue, saturation, a* and b*. The concatenation is power-law
compressed and L2-normalised, so two descriptors compare by cosine.
"""
import struct
import zlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_frame, check_frames, check_positive_int, check_same_dim, check_unit_interval
from .errors import DegenerateFeature, DimensionMismatch, TooShort, ZeroVector
from .imaging import ColorModel, Frame, hsv_array, lab_array

# value ranges binned per channel, in (H, S, a*, b*) order
CHANNEL_RANGES = ((0.0, 360.0), (0.0, 1.0), (-128.0, 128.0), (-128.0, 128.0))


@dataclass(frozen=True)
class FeatureConfig:
    pyramid_stripes: tuple = (3, 5, 7)
    bins_per_channel: int = 16
    power_exponent: float = 0.5

    def __post_init__(self):
        stripes = tuple(int(n) for n in self.pyramid_stripes)
        if not stripes or any(n < 1 for n in stripes):
            raise ValueError(f"stripe counts must be >= 1, got {self.pyramid_stripes!r}")
        object.__setattr__(self, "pyramid_stripes", stripes)
        if int(self.bins_per_channel) < 2:
            raise ValueError(f"need at least 2 bins, got {self.bins_per_channel}")
        check_unit_interval(self.power_exponent, "power_exponent", open_low=True)

    @property
    def dimension(self):
        return sum(self.pyramid_stripes) * 4 * self.bins_per_channel

    @property
    def config_id(self):
        key = f"{self.pyramid_stripes}|{self.bins_per_channel}|{float(self.power_exponent)!r}"
        return zlib.crc32(key.encode()) & 0xFFFF


DEFAULT_CONFIG = FeatureConfig()


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    config_id: int

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dimension(self):
        return self.values.shape[0]

    @property
    def valid(self):
        return bool(np.any(self.values))

    def __eq__(self, other):
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return self.config_id == other.config_id and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash((self.config_id, self.values.tobytes()))

    def __len__(self):
        return self.dimension


def stripe_bounds(height, n):
    """Row ranges [start, stop) of ``n`` stripes over ``height`` rows."""
    if height < n:
        raise TooShort(f"cannot cut {height} rows into {n} stripes")
    return [(i * height // n, (i + 1) * height // n) for i in range(n)]


def split_stripes(frame, n):
    n = check_positive_int(n, "n")
    arr = frame.array()
    return [Frame.from_array(arr[a:b]) for a, b in stripe_bounds(frame.height, n)]


def _bin_indices(frame, bins):
    """Per-pixel bin index for each of the four channels, shape (4, H, W)."""
    if frame.color_model != ColorModel.RGB8:
        raise ValueError("colour histograms need an RGB8 frame")
    rgb = frame.array()
    h, s, _ = hsv_array(rgb)
    _, a, b = lab_array(rgb)
    out = np.empty((4,) + h.shape, dtype=np.intp)
    for i, (vals, (lo, hi)) in enumerate(zip((h, s, a, b), CHANNEL_RANGES)):
        # top of the S range is closed; a*/b* are clamped into range
        idx = np.floor((vals - lo) * (bins / (hi - lo))).astype(np.intp)
        np.clip(idx, 0, bins - 1, out=out[i])
    return out


def _row_histograms(idx, bins):
    """Histogram of every row: (4, H, bins) counts."""
    _, height, width = idx.shape
    flat = idx + (np.arange(4)[:, None, None] * height + np.arange(height)[None, :, None]) * bins
    counts = np.bincount(flat.reshape(-1), minlength=4 * height * bins)
    return counts.reshape(4, height, bins)


def stripe_histograms(stripe, bins):
    """Counts of H, S, a*, b* over ``bins`` buckets each; every histogram sums to the pixel count."""
    bins = check_positive_int(bins, "bins", minimum=2)
    rows = _row_histograms(_bin_indices(stripe, bins), bins)
    return tuple(rows[c].sum(axis=0) for c in range(4))


def power_normalize(v, alpha):
    v = np.asarray(v, dtype=np.float64)
    v = np.sign(v) * np.abs(v) ** alpha
    norm = np.linalg.norm(v)
    if norm == 0:
        raise DegenerateFeature("descriptor is all zero")
    return v / norm


def raw_descriptor(frame, cfg=DEFAULT_CONFIG):
    """Concatenated stripe histograms before normalisation."""
    check_frame(frame, min_height=max(cfg.pyramid_stripes), rgb=True)
    bins = cfg.bins_per_channel
    rows = _row_histograms(_bin_indices(frame, bins), bins)
    cum = np.concatenate([np.zeros((4, 1, bins), dtype=np.int64), np.cumsum(rows, axis=1)], axis=1)
    parts = []
    for n in cfg.pyramid_stripes:
        for a, b in stripe_bounds(frame.height, n):
            parts.append((cum[:, b] - cum[:, a]).reshape(-1))
    return np.concatenate(parts).astype(np.float64)


def extract_feature(frame, cfg=DEFAULT_CONFIG):
    if frame.height < max(cfg.pyramid_stripes):
        raise TooShort(f"frame height {frame.height} < {max(cfg.pyramid_stripes)} stripes")
    values = power_normalize(raw_descriptor(frame, cfg), cfg.power_exponent)
    return FeatureVector(values, cfg.config_id)


def _values(x):
    return x.values if isinstance(x, FeatureVector) else x


def cosine_similarity(x, y):
    if isinstance(x, FeatureVector) and isinstance(y, FeatureVector) and x.config_id != y.config_id:
        raise DimensionMismatch(f"config ids differ: {x.config_id} vs {y.config_id}")
    a, b = check_same_dim(_values(x), _values(y))
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    c = float(a @ b) / (na * nb)
    return min(1.0, max(-1.0, c))


# -- wire format --------------------------------------------------------------

_FV_HEADER = struct.Struct(">HI")


def pack_feature(fv):
    return _FV_HEADER.pack(fv.config_id, fv.dimension) + fv.values.astype(">f8").tobytes()


def unpack_feature(data, offset=0):
    """Parse a feature vector; returns (FeatureVector, bytes consumed)."""
    if len(data) - offset < _FV_HEADER.size:
        raise ValueError(f"feature header needs {_FV_HEADER.size} bytes, got {len(data) - offset}")
    config_id, dim = _FV_HEADER.unpack_from(data, offset)
    start = offset + _FV_HEADER.size
    end = start + 8 * dim
    if len(data) < end:
        raise ValueError(f"feature declares {dim} entries but only {len(data) - start} bytes follow")
    values = np.frombuffer(data, dtype=">f8", count=dim, offset=start).astype(np.float64)
    return FeatureVector(values, config_id), end - offset


class PyramidStripeFeatures(TransformerMixin, BaseEstimator):
    """scikit-learn transformer mapping RGB8 frames to descriptor rows.

    Parameters
    ----------
    pyramid_stripes : tuple of int, default=(3, 5, 7)
        Stripe count of each pyramid level.
    bins_per_channel : int, default=16
    power_exponent : float, default=0.5
        Exponent of the signed power law applied before L2 normalisation.

    Attributes
    ----------
    config_ : FeatureConfig
    n_features_out_ : int
    """

    def __init__(self, pyramid_stripes=(3, 5, 7), bins_per_channel=16, power_exponent=0.5):
        self.pyramid_stripes = pyramid_stripes
        self.bins_per_channel = bins_per_channel
        self.power_exponent = power_exponent

    def fit(self, X=None, y=None):
        self.config_ = FeatureConfig(tuple(self.pyramid_stripes), self.bins_per_channel, self.power_exponent)
        self.n_features_out_ = self.config_.dimension
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        frames = check_frames(X, rgb=True)
        out = np.empty((len(frames), self.n_features_out_))
        for i, f in enumerate(frames):
            out[i] = extract_feature(f, self.config_).values
        return out

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "config_")
        names = []
        for n in self.config_.pyramid_stripes:
            for s in range(n):
                for ch in ("h", "s", "a", "b"):
                    names.extend(f"L{n}_s{s}_{ch}{k}" for k in range(self.config_.bins_per_channel))
        return np.asarray(names, dtype=object)
