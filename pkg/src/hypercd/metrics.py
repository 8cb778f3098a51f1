"""Pixel-level scoring: paint node decisions back and count agreement.

The change map convention is uint8 with 0 = unchanged and 255 = changed;
"changed" is the positive class of the confusion counts.  Besides the
false-alarm rate, missed-alarm rate and overall accuracy this reports the
chance-corrected Kappa coefficient:

    Kappa = (OA - PRE) / (1 - PRE)
    PRE = [(TP + FN)(TP + FP) + (TN + FP)(TN + FN)] / total^2
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, ParameterError
from .raster import Raster
from .segmentation import Segmentation

CHANGED = 255
UNCHANGED = 0


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    far: float
    mar: float
    oa: float
    kappa: float


def paint(node_probs: np.ndarray, seg: Segmentation, threshold: float = 0.5) -> Raster:
    """Transfer node probabilities to a pixel change map.

    A pixel is marked changed iff its fine region's probability is at or
    above the threshold.
    """
    node_probs = np.asarray(node_probs, dtype=np.float64)
    if node_probs.shape != (seg.n_regions,):
        raise DimensionError(
            f"got {node_probs.shape[0] if node_probs.ndim else 0} probabilities "
            f"for {seg.n_regions} regions"
        )
    if not 0 < threshold < 1:
        raise ParameterError(f"threshold must be in (0, 1), got {threshold}")
    labels = seg.label_map.plane(0)
    changed = node_probs[labels] >= threshold
    data = np.where(changed, CHANGED, UNCHANGED).astype(np.uint8)
    return Raster(seg.label_map.height, seg.label_map.width, 1, "uint8", data[:, :, None])


def confusion(pred: Raster, reference: Raster) -> ConfusionCounts:
    """Per-pixel confusion tally; changed (255) is the positive class."""
    if (pred.height, pred.width) != (reference.height, reference.width):
        raise DimensionError(
            f"prediction {pred.height}x{pred.width} does not match "
            f"reference {reference.height}x{reference.width}"
        )
    p = pred.plane(0)
    r = reference.plane(0)
    for name, arr in (("prediction", p), ("reference", r)):
        bad = ~np.isin(arr, (UNCHANGED, CHANGED))
        if bad.any():
            raise FormatError(f"{name} contains values outside {{0, 255}}")
    pc = p == CHANGED
    rc = r == CHANGED
    return ConfusionCounts(
        tp=int(np.sum(pc & rc)),
        fp=int(np.sum(pc & ~rc)),
        tn=int(np.sum(~pc & ~rc)),
        fn=int(np.sum(~pc & rc)),
    )


def metrics(c: ConfusionCounts) -> Metrics:
    """FAR, MAR, OA and Kappa with explicit zero-denominator conventions.

    FAR = 0 when FP + TN = 0; MAR = 0 when FN + TP = 0; when PRE = 1 the
    Kappa ratio is 0/0, resolved to 1 for a perfect map and 0 otherwise,
    so degenerate single-class references never crash a sweep.
    """
    if c.total <= 0:
        raise ParameterError("confusion counts are empty")
    far = c.fp / (c.fp + c.tn) if (c.fp + c.tn) > 0 else 0.0
    mar = c.fn / (c.fn + c.tp) if (c.fn + c.tp) > 0 else 0.0
    oa = (c.tp + c.tn) / c.total
    pre = (
        (c.tp + c.fn) * (c.tp + c.fp) + (c.tn + c.fp) * (c.tn + c.fn)
    ) / c.total**2
    if pre == 1.0:
        kappa = 1.0 if oa == 1.0 else 0.0
    else:
        kappa = (oa - pre) / (1.0 - pre)
    return Metrics(far=far, mar=mar, oa=oa, kappa=kappa)


def metrics_json(c: ConfusionCounts, m: Metrics) -> str:
    """The canonical JSON object with counts and rates."""
    return json.dumps(
        {
            "TP": c.tp,
            "FP": c.fp,
            "TN": c.tn,
            "FN": c.fn,
            "FAR": m.far,
            "MAR": m.mar,
            "OA": m.oa,
            "Kappa": m.kappa,
        },
        indent=2,
    )


def metrics_table(c: ConfusionCounts, m: Metrics) -> str:
    """Aligned text table mirroring the JSON content."""
    rows = [
        ("TP", c.tp),
        ("FP", c.fp),
        ("TN", c.tn),
        ("FN", c.fn),
        ("FAR", f"{m.far:.6f}"),
        ("MAR", f"{m.mar:.6f}"),
        ("OA", f"{m.oa:.6f}"),
        ("Kappa", f"{m.kappa:.6f}"),
    ]
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)
