"""Input checks shared by the estimators and the functional API."""
import numbers

import numpy as np

from .errors import DimensionMismatch
from .imaging import ColorModel, Frame


def check_frame(frame, min_height=1, rgb=False):
    if not isinstance(frame, Frame):
        raise TypeError(f"expected a Frame, got {type(frame).__name__}")
    if frame.height < min_height:
        raise ValueError(f"frame height {frame.height} < required {min_height}")
    if rgb and frame.color_model != ColorModel.RGB8:
        raise ValueError(f"expected an RGB8 frame, got {frame.color_model.name}")
    return frame


def check_frames(frames, **kw):
    if isinstance(frames, Frame):
        raise TypeError("expected a sequence of Frames, got a single Frame")
    frames = list(frames)
    for f in frames:
        check_frame(f, **kw)
    return frames


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or isinstance(value, bool) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_unit_interval(value, name, open_low=False):
    v = float(value)
    low_ok = v > 0.0 if open_low else v >= 0.0
    if not (low_ok and v <= 1.0):
        bracket = "(0, 1]" if open_low else "[0, 1]"
        raise ValueError(f"{name} must lie in {bracket}, got {value!r}")
    return v


def check_same_dim(x, y):
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DimensionMismatch(f"dimensions differ: {x.shape[0]} vs {y.shape[0]}")
    return x, y
