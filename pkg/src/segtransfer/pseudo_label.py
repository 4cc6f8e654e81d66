"""Pseudo pixel-label assignment and superpixel-gated refinement.

Stage one assigns each pixel the class maximizing prob/threshold, kept
only when the winning probability strictly exceeds its class threshold;
everything else stays IGNORE.  Stage two fills IGNORE pixels by a
majority vote over their 8-neighborhood, counting only neighbors that
share the pixel's superpixel, and only when the winning vote count
exceeds 4.  The vote reads a frozen copy of the stage-one mask, so the
result is independent of scan order.
"""

import numpy as np

from .core import IGNORE, as_label_mask, as_prob_map, check_same_shape
from .errors import ClassMismatchError, DimensionMismatchError
from .thresholds import ClassThresholds

_NEIGHBOR_OFFSETS = [(-1, -1), (-1, 0), (-1, 1),
                     (0, -1), (0, 1),
                     (1, -1), (1, 0), (1, 1)]


def assign_initial(p, t: ClassThresholds) -> np.ndarray:
    """Closed-form per-pixel assignment.

    k* = argmax_k prob[k] / t[k] (ties to the lowest index); the pixel gets
    k* iff prob[k*] > t[k*], else IGNORE.
    """
    p = as_prob_map(p)
    if p.shape[2] != t.num_classes:
        raise ClassMismatchError(f"map has K={p.shape[2]}, thresholds have K={t.num_classes}")
    thr = t.thresholds
    ratio = p / thr[None, None, :]
    best = np.argmax(ratio, axis=-1)
    best_prob = np.take_along_axis(p, best[..., None], axis=-1)[..., 0]
    selected = best_prob > thr[best]
    mask = np.where(selected, best, IGNORE).astype(np.uint16)
    return mask


def refine_with_superpixels(m, sp) -> np.ndarray:
    """Fill IGNORE pixels by same-superpixel 8-neighborhood voting.

    Labeled pixels are never modified.  A pixel is filled with the class
    holding the most votes (ties to the lowest index) iff that count > 4.
    Out-of-bounds and IGNORE neighbors contribute no votes.
    """
    m = as_label_mask(m)
    sp = np.asarray(sp)
    if m.shape != sp.shape:
        raise DimensionMismatchError(f"mask {m.shape} vs superpixel map {sp.shape}")
    h, w = m.shape
    frozen = m.copy()
    labeled = frozen != IGNORE
    if not labeled.any():
        return frozen

    num_classes = int(frozen[labeled].max()) + 1
    counts = np.zeros((h, w, num_classes), dtype=np.int32)
    for dy, dx in _NEIGHBOR_OFFSETS:
        ys0, ys1 = max(dy, 0), h + min(dy, 0)
        yd0, yd1 = max(-dy, 0), h + min(-dy, 0)
        xs0, xs1 = max(dx, 0), w + min(dx, 0)
        xd0, xd1 = max(-dx, 0), w + min(-dx, 0)
        nb_label = frozen[ys0:ys1, xs0:xs1]
        nb_sp = sp[ys0:ys1, xs0:xs1]
        same_sp = nb_sp == sp[yd0:yd1, xd0:xd1]
        for k in range(num_classes):
            counts[yd0:yd1, xd0:xd1, k] += ((nb_label == k) & same_sp).astype(np.int32)

    winner = np.argmax(counts, axis=-1)
    winner_count = np.take_along_axis(counts, winner[..., None], axis=-1)[..., 0]
    fill = (frozen == IGNORE) & (winner_count > 4)
    out = frozen.copy()
    out[fill] = winner[fill].astype(np.uint16)
    return out


def generate(p, t: ClassThresholds, sp) -> np.ndarray:
    """Initial assignment followed by one superpixel-gated refinement pass."""
    p = as_prob_map(p)
    check_same_shape(p, np.asarray(sp), "probability map and superpixel map")
    return refine_with_superpixels(assign_initial(p, t), sp)
