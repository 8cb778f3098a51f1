"""Per-object node features: region mean-pooling and a windowed baseline.

Nodes of the hypergraph are the fine-scale regions; their feature vectors
are the mean of a pixel-wise feature map over each region's pixels.  The
feature map normally comes from the external deep extractor (a DNHG
float32 raster), but `baseline_features` provides a self-contained
fallback of local windowed statistics so the engine runs stand-alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ParameterError
from .raster import Raster
from .segmentation import Segmentation


@dataclass(frozen=True)
class NodeFeatures:
    """N x d matrix of per-region feature vectors."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise DimensionError(f"feature matrix must be 2-D, got ndim={m.ndim}")
        if not np.isfinite(m).all():
            raise ParameterError("feature matrix contains non-finite entries")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def to_raster(self) -> Raster:
        """Export as an N x d x 1 float32 DNHG-compatible raster."""
        return Raster(
            self.n, self.d, 1, "float32",
            self.matrix.astype(np.float32).reshape(self.n, self.d, 1),
        )

    @classmethod
    def from_raster(cls, r: Raster) -> "NodeFeatures":
        return cls(r.data.reshape(r.height, r.width).astype(np.float64))


def pool(feature_map: Raster, seg: Segmentation) -> NodeFeatures:
    """Mean-pool a pixel feature map over each fine region.

    v_i = sum of M(y, x, :) over the region's pixels, divided by the
    region's pixel count.

    Raises DimensionError if the map and label map differ in height/width.
    """
    lm = seg.label_map
    if (feature_map.height, feature_map.width) != (lm.height, lm.width):
        raise DimensionError(
            f"feature map {feature_map.height}x{feature_map.width} does not match "
            f"label map {lm.height}x{lm.width}"
        )
    labels = lm.plane(0).ravel()
    values = feature_map.data.reshape(-1, feature_map.channels).astype(np.float64)
    n = seg.n_regions
    acc = np.zeros((n, feature_map.channels), dtype=np.float64)
    np.add.at(acc, labels, values)
    counts = np.bincount(labels, minlength=n).astype(np.float64)
    return NodeFeatures(acc / counts[:, None])


def baseline_features(stacked: Raster, radius: int = 2) -> Raster:
    """Windowed statistics as a stand-in pixel feature map.

    For every input channel, emits [value, local mean, local std, local
    range] over the (2*radius+1)^2 window with replicate-border clamping,
    giving an H x W x 4C float32 raster.
    """
    if radius < 0:
        raise ParameterError(f"radius must be >= 0, got {radius}")
    values = np.asarray(stacked.data, dtype=np.float64)
    h, w, c = values.shape
    size = 2 * radius + 1
    out = np.empty((h, w, 4 * c), dtype=np.float64)
    for ch in range(c):
        plane = values[:, :, ch]
        mean = ndimage.uniform_filter(plane, size=size, mode="nearest")
        mean_sq = ndimage.uniform_filter(plane * plane, size=size, mode="nearest")
        std = np.sqrt(np.maximum(mean_sq - mean * mean, 0.0))
        hi = ndimage.maximum_filter(plane, size=size, mode="nearest")
        lo = ndimage.minimum_filter(plane, size=size, mode="nearest")
        out[:, :, 4 * ch + 0] = plane
        out[:, :, 4 * ch + 1] = mean
        out[:, :, 4 * ch + 2] = std
        out[:, :, 4 * ch + 3] = hi - lo
    return Raster(h, w, 4 * c, "float32", out.astype(np.float32))


def zscore(features: NodeFeatures, eps: float = 1e-12) -> NodeFeatures:
    """Optional per-column standardization.

    Columns with near-zero spread are centered and left unscaled;
    useful when raw feature scales saturate the exp(-distance) hyperedge
    weights.
    """
    m = features.matrix
    mu = m.mean(axis=0)
    sigma = m.std(axis=0)
    sigma = np.where(sigma < eps, 1.0, sigma)
    return NodeFeatures((m - mu) / sigma)
