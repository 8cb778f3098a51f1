"""Two-scale bottom-up region-merging segmentation with exact nesting.

The merger starts from single-pixel regions and repeatedly fuses the pair
of adjacent regions that mutually prefer each other, as long as the fused
region's heterogeneity increase stays below the squared scale parameter.
The coarse segmentation continues merging from the fine result instead of
re-segmenting, so every coarse region is exactly a union of fine regions
(the father-child relationship downstream stages rely on).

Heterogeneity of a merge combines a spectral term (growth of
pixel-count-weighted per-channel standard deviation) and a shape term
(compactness and smoothness, from region perimeter and bounding box), as
in classic multiresolution segmentation:

    df = (1 - shape) * dh_color + shape * dh_shape
    dh_color = sum_c [n_m * sigma_c(m) - n_a * sigma_c(a) - n_b * sigma_c(b)]
    dh_shape = compactness * dh_cmpct + (1 - compactness) * dh_smooth
    h_cmpct  = sqrt(n) * l          (l = perimeter in pixel edges)
    h_smooth = n * l / b            (b = bounding-box perimeter)

A merge is allowed iff df < scale**2.  Standard deviations are population
values from sum / sum-of-squares accumulators; 4-connectivity throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .errors import DimensionError, ParameterError
from .raster import Raster


@dataclass(frozen=True)
class SegParams:
    """Merge-threshold and heterogeneity weights.

    Attributes:
        scale: Positive merge threshold; merges need df < scale**2.
        shape: Weight of the shape term in [0, 1).
        compactness: Weight of compactness within the shape term, in [0, 1].
    """

    scale: float
    shape: float = 0.1
    compactness: float = 0.5

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ParameterError(f"scale must be > 0, got {self.scale}")
        if not 0 <= self.shape < 1:
            raise ParameterError(f"shape must be in [0, 1), got {self.shape}")
        if not 0 <= self.compactness <= 1:
            raise ParameterError(
                f"compactness must be in [0, 1], got {self.compactness}"
            )


@dataclass(frozen=True)
class Region:
    """Accumulated statistics of one segmented region."""

    id: int
    pixel_count: int
    sums: np.ndarray  # per-channel value sum
    sumsq: np.ndarray  # per-channel sum of squared values
    perimeter: int  # boundary pixel edges, image border included
    bbox: tuple[int, int, int, int]  # min_y, min_x, max_y, max_x inclusive

    @property
    def mean(self) -> np.ndarray:
        return self.sums / self.pixel_count

    @property
    def std(self) -> np.ndarray:
        var = self.sumsq / self.pixel_count - self.mean**2
        return np.sqrt(np.maximum(var, 0.0))


@dataclass(frozen=True)
class Segmentation:
    """A full partition of the pixel grid into connected regions.

    Attributes:
        label_map: uint32 single-channel raster of region ids in [0, N).
        regions: Region statistics indexed by id.
        adjacency: Per-region sorted tuple of 4-adjacent region ids.
        params: Parameters the segmentation was produced with.
    """

    label_map: Raster
    regions: list[Region]
    adjacency: list[tuple[int, ...]]
    params: SegParams

    @property
    def n_regions(self) -> int:
        return len(self.regions)


@dataclass(frozen=True)
class Hierarchy:
    """Fine-to-coarse region containment: parent[fine_id] = coarse_id."""

    parent: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "parent", np.asarray(self.parent, dtype=np.uint32))


# ---------------------------------------------------------------------------
# Adjacency from a label map (shared boundary lengths)
# ---------------------------------------------------------------------------


def _boundary_pairs(labels: np.ndarray) -> dict[tuple[int, int], int]:
    """Count 4-adjacent pixel pairs with different labels.

    Returns a dict (lo_id, hi_id) -> number of shared boundary edges.
    """
    pairs: dict[tuple[int, int], int] = {}
    base = int(labels.max()) + 1
    for a, b in (
        (labels[:, :-1], labels[:, 1:]),
        (labels[:-1, :], labels[1:, :]),
    ):
        mask = a != b
        if not mask.any():
            continue
        lo = np.minimum(a[mask], b[mask]).astype(np.int64)
        hi = np.maximum(a[mask], b[mask]).astype(np.int64)
        uniq, counts = np.unique(lo * base + hi, return_counts=True)
        for k, cnt in zip(uniq.tolist(), counts.tolist()):
            pair = (k // base, k % base)
            pairs[pair] = pairs.get(pair, 0) + cnt
    return pairs


def _adjacency_sets(labels: np.ndarray, n: int) -> list[tuple[int, ...]]:
    nbrs: list[set[int]] = [set() for _ in range(n)]
    for (a, b) in _boundary_pairs(labels):
        nbrs[a].add(b)
        nbrs[b].add(a)
    return [tuple(sorted(s)) for s in nbrs]


def region_adjacency(seg: Segmentation) -> list[tuple[int, ...]]:
    """Recompute 4-connectivity region adjacency from the label map.

    Two regions are adjacent iff some pixel of one is 4-adjacent to some
    pixel of the other; the relation is symmetric and irreflexive.
    """
    return _adjacency_sets(seg.label_map.plane(0), seg.n_regions)


# ---------------------------------------------------------------------------
# Merge engine
# ---------------------------------------------------------------------------


class _MergeState:
    """Mutable region statistics during bottom-up merging.

    Regions are addressed by their initial ids; a merge keeps the smaller
    id alive and retires the larger one.  Best-merge proposals are cached
    per region and invalidated (dirty flag) whenever the region or one of
    its neighbours changes, which makes the sequential mutual-best pass
    equivalent to recomputing every proposal from scratch.
    """

    def __init__(
        self,
        n: list[int],
        sums: list[list[float]],
        sumsq: list[list[float]],
        perim: list[int],
        bbox: list[list[int]],
        adj: list[dict[int, int]],
        params: SegParams,
    ):
        self.n = n
        self.sums = sums
        self.sumsq = sumsq
        self.perim = perim
        self.bbox = bbox
        self.adj = adj
        self.params = params
        self.channels = len(sums[0])
        r = len(n)
        self.alive = bytearray([1]) * r
        self.uf_parent = list(range(r))
        self.h_color = [self._color_h(i) for i in range(r)]
        self.h_shape = [self._shape_h(i) for i in range(r)]
        self.best_nbr = [-1] * r
        self.best_cost = [0.0] * r
        self.dirty = bytearray([1]) * r

    def _color_h(self, i: int) -> float:
        n = self.n[i]
        total = 0.0
        s, q = self.sums[i], self.sumsq[i]
        for c in range(self.channels):
            var = q[c] / n - (s[c] / n) ** 2
            if var > 0.0:
                total += sqrt(var)
        return n * total

    def _shape_h(self, i: int) -> float:
        n = self.n[i]
        l = self.perim[i]
        y0, x0, y1, x1 = self.bbox[i]
        b = 2 * ((y1 - y0 + 1) + (x1 - x0 + 1))
        p = self.params
        return p.compactness * (sqrt(n) * l) + (1.0 - p.compactness) * (n * l / b)

    def merge_cost(self, a: int, b: int) -> float:
        """Heterogeneity increase df of fusing adjacent regions a and b."""
        na, nb = self.n[a], self.n[b]
        nm = na + nb
        sa, sb = self.sums[a], self.sums[b]
        qa, qb = self.sumsq[a], self.sumsq[b]
        sigma_sum = 0.0
        for c in range(self.channels):
            s = sa[c] + sb[c]
            q = qa[c] + qb[c]
            var = q / nm - (s / nm) ** 2
            if var > 0.0:
                sigma_sum += sqrt(var)
        d_color = nm * sigma_sum - self.h_color[a] - self.h_color[b]

        lm = self.perim[a] + self.perim[b] - 2 * self.adj[a][b]
        ya, xa, yb, xb = self.bbox[a]
        yc, xc, yd, xd = self.bbox[b]
        y0 = ya if ya < yc else yc
        x0 = xa if xa < xc else xc
        y1 = yb if yb > yd else yd
        x1 = xb if xb > xd else xd
        bper = 2 * ((y1 - y0 + 1) + (x1 - x0 + 1))
        p = self.params
        hm = p.compactness * (sqrt(nm) * lm) + (1.0 - p.compactness) * (nm * lm / bper)
        d_shape = hm - self.h_shape[a] - self.h_shape[b]

        return (1.0 - p.shape) * d_color + p.shape * d_shape

    def _recompute_best(self, a: int) -> None:
        best_b = -1
        best = 0.0
        for b in self.adj[a]:
            cost = self.merge_cost(a, b)
            if best_b < 0 or cost < best or (cost == best and b < best_b):
                best_b, best = b, cost
        self.best_nbr[a] = best_b
        self.best_cost[a] = best
        self.dirty[a] = 0

    def _merge(self, a: int, b: int) -> None:
        s, t = (a, b) if a < b else (b, a)
        shared = self.adj[s].pop(t)
        del self.adj[t][s]

        self.n[s] += self.n[t]
        ss, st = self.sums[s], self.sums[t]
        qs, qt = self.sumsq[s], self.sumsq[t]
        for c in range(self.channels):
            ss[c] += st[c]
            qs[c] += qt[c]
        self.perim[s] = self.perim[s] + self.perim[t] - 2 * shared
        bs, bt = self.bbox[s], self.bbox[t]
        if bt[0] < bs[0]:
            bs[0] = bt[0]
        if bt[1] < bs[1]:
            bs[1] = bt[1]
        if bt[2] > bs[2]:
            bs[2] = bt[2]
        if bt[3] > bs[3]:
            bs[3] = bt[3]

        for x, blen in self.adj[t].items():
            del self.adj[x][t]
            merged = self.adj[s].get(x, 0) + blen
            self.adj[s][x] = merged
            self.adj[x][s] = merged
        self.adj[t] = {}

        self.h_color[s] = self._color_h(s)
        self.h_shape[s] = self._shape_h(s)
        self.alive[t] = 0
        self.uf_parent[t] = s
        self.dirty[s] = 1
        for x in self.adj[s]:
            self.dirty[x] = 1

    def run(self, scale: float) -> None:
        """Mutual-best-fitting passes until a full pass merges nothing."""
        threshold = scale * scale
        r = len(self.n)
        alive = self.alive
        dirty = self.dirty
        best_nbr = self.best_nbr
        best_cost = self.best_cost
        while True:
            merged_any = False
            for a in range(r):
                if not alive[a]:
                    continue
                if dirty[a]:
                    self._recompute_best(a)
                b = best_nbr[a]
                if b < 0 or best_cost[a] >= threshold:
                    continue
                if dirty[b]:
                    self._recompute_best(b)
                if best_nbr[b] != a:
                    continue
                self._merge(a, b)
                merged_any = True
            if not merged_any:
                break

    def find(self, i: int) -> int:
        uf = self.uf_parent
        root = i
        while uf[root] != root:
            root = uf[root]
        while uf[i] != root:
            uf[i], i = root, uf[i]
        return root


def _finalize(
    state: _MergeState, raw_labels: np.ndarray, params: SegParams
) -> tuple[Segmentation, np.ndarray]:
    """Relabel surviving regions contiguously by first row-major appearance.

    raw_labels holds, per pixel, the initial merge-state region id.
    Returns the Segmentation and the root -> new-id mapping.
    """
    h, w = raw_labels.shape
    roots_of_initial = np.fromiter(
        (state.find(i) for i in range(len(state.n))), dtype=np.int64
    )
    root_per_pixel = roots_of_initial[raw_labels.ravel()]
    uniq, first_pos, inverse = np.unique(
        root_per_pixel, return_index=True, return_inverse=True
    )
    order = np.argsort(first_pos, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(len(order))
    labels_flat = rank[inverse].astype(np.uint32)
    label_map = Raster(h, w, 1, "uint32", labels_flat.reshape(h, w, 1))

    new_id_of_root = np.full(len(state.n), -1, dtype=np.int64)
    new_id_of_root[uniq] = rank
    regions = []
    for new_id, root in enumerate(uniq[order].tolist()):
        regions.append(
            Region(
                id=new_id,
                pixel_count=state.n[root],
                sums=np.array(state.sums[root], dtype=np.float64),
                sumsq=np.array(state.sumsq[root], dtype=np.float64),
                perimeter=state.perim[root],
                bbox=tuple(state.bbox[root]),
            )
        )
    adjacency = _adjacency_sets(label_map.plane(0), len(regions))
    return Segmentation(label_map, regions, adjacency, params), new_id_of_root


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def segment(image: Raster, params: SegParams, seed: int = 0) -> Segmentation:
    """Segment an image by bottom-up region merging from single pixels.

    Args:
        image: Stacked float32 raster (any dtype is accepted and widened).
        params: Scale / shape / compactness parameters.
        seed: Accepted for interface uniformity; the mutual-best merge
            order is fully deterministic, so the value is unused.

    Returns:
        A Segmentation whose labels are contiguous 0..N-1 in first-appearance
        order, with no remaining mutual-best pair below the merge threshold.
    """
    del seed
    values = np.asarray(image.data, dtype=np.float64)
    h, w, c = values.shape
    flat = values.reshape(h * w, c)

    n = [1] * (h * w)
    sums = flat.tolist()
    sumsq = (flat * flat).tolist()
    perim = [4] * (h * w)
    bbox = [[i // w, i % w, i // w, i % w] for i in range(h * w)]
    adj: list[dict[int, int]] = [{} for _ in range(h * w)]
    for i in range(h * w):
        y, x = divmod(i, w)
        if x + 1 < w:
            adj[i][i + 1] = 1
            adj[i + 1][i] = 1
        if y + 1 < h:
            adj[i][i + w] = 1
            adj[i + w][i] = 1

    state = _MergeState(n, sums, sumsq, perim, bbox, adj, params)
    state.run(params.scale)

    raw = np.arange(h * w, dtype=np.int64).reshape(h, w)
    seg, _ = _finalize(state, raw, params)
    return seg


def segmentation_from_label_map(
    label_map: Raster, image: Raster, params: SegParams
) -> Segmentation:
    """Rebuild a Segmentation from a persisted label map.

    Region statistics are recomputed from the image; labels must already
    be contiguous 0..N-1 (the form this package writes).  Connectivity is
    trusted, not re-verified.
    """
    if label_map.dtype != "uint32" or label_map.channels != 1:
        raise DimensionError("label map must be a single-channel uint32 raster")
    if (image.height, image.width) != (label_map.height, label_map.width):
        raise DimensionError(
            f"image {image.height}x{image.width} does not match label map "
            f"{label_map.height}x{label_map.width}"
        )
    labels = label_map.plane(0).astype(np.int64)
    n = int(labels.max()) + 1
    counts = np.bincount(labels.ravel(), minlength=n)
    if (counts == 0).any():
        raise ParameterError("label map ids are not contiguous")

    values = np.asarray(image.data, dtype=np.float64)
    c = values.shape[2]
    flat_labels = labels.ravel()
    sums = np.zeros((n, c))
    sumsq = np.zeros((n, c))
    np.add.at(sums, flat_labels, values.reshape(-1, c))
    np.add.at(sumsq, flat_labels, values.reshape(-1, c) ** 2)

    ys, xs = np.divmod(np.arange(labels.size), labels.shape[1])
    bbox = np.zeros((n, 4), dtype=np.int64)
    bbox[:, 0] = bbox[:, 1] = np.iinfo(np.int64).max
    np.minimum.at(bbox[:, 0], flat_labels, ys)
    np.minimum.at(bbox[:, 1], flat_labels, xs)
    np.maximum.at(bbox[:, 2], flat_labels, ys)
    np.maximum.at(bbox[:, 3], flat_labels, xs)

    # perimeter = 4n - 2 * (same-label 4-adjacent pixel pairs inside the region)
    perim = 4 * counts.copy()
    for a, b in ((labels[:, :-1], labels[:, 1:]), (labels[:-1, :], labels[1:, :])):
        same = a == b
        internal = np.bincount(a[same].ravel(), minlength=n)
        perim -= 2 * internal

    regions = [
        Region(
            id=i,
            pixel_count=int(counts[i]),
            sums=sums[i],
            sumsq=sumsq[i],
            perimeter=int(perim[i]),
            bbox=tuple(int(v) for v in bbox[i]),
        )
        for i in range(n)
    ]
    return Segmentation(label_map, regions, _adjacency_sets(labels, n), params)


def write_hierarchy(hier: Hierarchy, path: str) -> None:
    """One line per fine region: "fine_id coarse_id"."""
    with open(path, "w") as f:
        for fine_id, coarse_id in enumerate(hier.parent.tolist()):
            f.write(f"{fine_id} {coarse_id}\n")


def read_hierarchy(path: str) -> Hierarchy:
    parent = []
    with open(path) as f:
        for line_no, line in enumerate(f):
            if not line.strip():
                continue
            toks = line.split()
            if len(toks) != 2 or int(toks[0]) != len(parent):
                raise ParameterError(
                    f"bad hierarchy line {line_no + 1} in {path}: {line.rstrip()!r}"
                )
            parent.append(int(toks[1]))
    return Hierarchy(np.array(parent, dtype=np.uint32))


def coarsen(
    fine: Segmentation, image: Raster, coarse_params: SegParams
) -> tuple[Segmentation, Hierarchy]:
    """Continue region merging from a fine segmentation at a coarser scale.

    Keeping shape/compactness fixed and merging onward from the fine regions
    makes every coarse region an exact union of fine regions; the returned
    Hierarchy records that containment.

    Raises ParameterError if the coarse scale does not exceed the fine one
    or the shape/compactness weights differ.
    """
    if coarse_params.scale <= fine.params.scale:
        raise ParameterError(
            f"coarse scale must exceed fine scale "
            f"({coarse_params.scale} <= {fine.params.scale})"
        )
    if (
        coarse_params.shape != fine.params.shape
        or coarse_params.compactness != fine.params.compactness
    ):
        raise ParameterError("shape/compactness must match the fine segmentation")
    if (image.height, image.width) != (fine.label_map.height, fine.label_map.width):
        raise DimensionError(
            f"image {image.height}x{image.width} does not match label map "
            f"{fine.label_map.height}x{fine.label_map.width}"
        )

    regions = fine.regions
    n = [r.pixel_count for r in regions]
    sums = [r.sums.tolist() for r in regions]
    sumsq = [r.sumsq.tolist() for r in regions]
    perim = [r.perimeter for r in regions]
    bbox = [list(r.bbox) for r in regions]
    adj: list[dict[int, int]] = [{} for _ in regions]
    for (a, b), blen in _boundary_pairs(fine.label_map.plane(0)).items():
        adj[a][b] = blen
        adj[b][a] = blen

    state = _MergeState(n, sums, sumsq, perim, bbox, adj, coarse_params)
    state.run(coarse_params.scale)

    raw = fine.label_map.plane(0).astype(np.int64)
    coarse, new_id_of_root = _finalize(state, raw, coarse_params)
    parent = np.array(
        [new_id_of_root[state.find(i)] for i in range(fine.n_regions)],
        dtype=np.uint32,
    )
    return coarse, Hierarchy(parent)
