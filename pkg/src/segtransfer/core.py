"""Shared array conventions, validation, and derived prediction maps.

All spatial data is row-major numpy with channel-last layout:

* probability map -- (H, W, K) floats, per-pixel softmax vector
* label mask      -- (H, W) uint16 class indices, IGNORE = 65535 marks
                     pixels without supervision
* image           -- (H, W) or (H, W, C) uint8, C in {1, 3}
* feature map     -- (H, W, D) floats

Class indices are 0-based.  All operations here are pure functions.
"""

import numpy as np

from .errors import (
    DimensionMismatchError,
    NotNormalizedError,
    OutOfRangeError,
)

IGNORE = 65535
PROB_SUM_TOL = 1e-4


def as_prob_map(p) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 3:
        raise DimensionMismatchError(f"probability map must be (H, W, K), got shape {p.shape}")
    return p


def validate_prob_map(p) -> None:
    """Raise unless every value is in [0, 1] and every pixel sums to 1
    within PROB_SUM_TOL.  Range is checked before normalization so that
    e.g. (1.2, -0.2) reports the range violation."""
    p = as_prob_map(p)
    if np.any(p < 0.0) or np.any(p > 1.0):
        bad = p[(p < 0.0) | (p > 1.0)].flat[0]
        raise OutOfRangeError(f"probability {bad} outside [0, 1]")
    sums = p.sum(axis=-1)
    dev = np.abs(sums - 1.0)
    if np.any(dev > PROB_SUM_TOL):
        worst = float(sums.flat[int(np.argmax(dev))])
        raise NotNormalizedError(f"pixel sum {worst} deviates from 1 by more than {PROB_SUM_TOL}")


def argmax_map(p) -> np.ndarray:
    """Per-pixel index of the maximum probability; ties break to the
    lowest class index."""
    p = as_prob_map(p)
    return np.argmax(p, axis=-1).astype(np.uint16)


def max_map(p) -> np.ndarray:
    """Per-pixel maximum probability."""
    p = as_prob_map(p)
    return np.max(p, axis=-1)


def as_label_mask(m) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise DimensionMismatchError(f"label mask must be (H, W), got shape {m.shape}")
    return m.astype(np.uint16, copy=False)


def validate_label_mask(m, num_classes: int) -> None:
    """Raise unless every non-IGNORE value is a valid class index."""
    m = as_label_mask(m)
    vals = m[m != IGNORE]
    if vals.size and int(vals.max()) >= num_classes:
        raise OutOfRangeError(f"label {int(vals.max())} >= num_classes {num_classes}")


def check_same_shape(a, b, what="inputs") -> None:
    if a.shape[:2] != b.shape[:2]:
        raise DimensionMismatchError(f"{what} disagree: {a.shape[:2]} vs {b.shape[:2]}")
