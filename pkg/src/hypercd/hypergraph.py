"""Dual-neighborhood hypergraph and its normalized propagation operator.

One hyperedge is grown around every fine-scale region (vertex): the edge
contains the vertex itself, its spatial neighborhood (regions 4-adjacent
to it at the fine scale) and its structural neighborhood (regions sharing
the same coarse-scale parent).  The number of hyperedges therefore equals
the number of vertices.

From the 0/1 incidence matrix H, per-edge similarity weights w, the
weighted vertex degrees d and the edge degrees delta, the propagation
operator is

    P = Dv^{-1/2} H W De^{-1} H^T Dv^{-1/2},    Lambda = I - P

assembled as P = C C^T with C = Dv^{-1/2} H sqrt(W De^{-1}), which makes
symmetry and positive semi-definiteness of Lambda hold by construction.
P is precomputed once per graph; it is constant across layers and epochs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import DegenerateGraphError, DimensionError, FormatError, ParameterError
from .features import NodeFeatures
from .segmentation import Hierarchy


@dataclass(frozen=True)
class Hypergraph:
    """Incidence structure plus weights and degrees.

    Attributes:
        n: Vertex count N (also the hyperedge count L).
        incidence: Sparse 0/1 CSR matrix H of shape (N, L).
        weights: Positive per-edge weights w, shape (L,).
        vertex_degrees: d_i = sum_j w_j H(i, j), shape (N,).
        edge_degrees: delta_j = sum_i H(i, j), integer, shape (L,).
    """

    n: int
    incidence: sparse.csr_matrix
    weights: np.ndarray
    vertex_degrees: np.ndarray
    edge_degrees: np.ndarray

    @property
    def l(self) -> int:
        return self.incidence.shape[1]


@dataclass(frozen=True)
class PropagationOperator:
    """Precomputed P and Laplacian = I - P, both sparse CSR."""

    p: sparse.csr_matrix
    laplacian: sparse.csr_matrix

    @property
    def n(self) -> int:
        return self.p.shape[0]


# ---------------------------------------------------------------------------
# Neighborhoods and incidence
# ---------------------------------------------------------------------------


def spatial_neighborhood(adjacency: list[tuple[int, ...]], i: int) -> set[int]:
    """Vertices whose fine regions are 4-adjacent to region i (excludes i)."""
    if not 0 <= i < len(adjacency):
        raise ParameterError(f"vertex id {i} out of range [0, {len(adjacency)})")
    return set(adjacency[i])


def structural_neighborhood(hier: Hierarchy, i: int) -> set[int]:
    """Sibling vertices: regions with the same coarse parent as i (excludes i)."""
    parent = hier.parent
    if not 0 <= i < len(parent):
        raise ParameterError(f"vertex id {i} out of range [0, {len(parent)})")
    siblings = np.nonzero(parent == parent[i])[0]
    return {int(j) for j in siblings if j != i}


def build_hyperedges(
    adjacency: list[tuple[int, ...]], hier: Hierarchy
) -> sparse.csr_matrix:
    """Assemble the incidence matrix of the dual-neighborhood hyperedges.

    Column j is the indicator of E_j = {j} | spatial(j) | structural(j).
    """
    n = len(adjacency)
    if len(hier.parent) != n:
        raise DimensionError(
            f"adjacency covers {n} vertices but hierarchy covers {len(hier.parent)}"
        )
    children: dict[int, list[int]] = {}
    for v, p in enumerate(hier.parent.tolist()):
        children.setdefault(p, []).append(v)

    indptr = [0]
    indices: list[int] = []
    for j in range(n):
        members = set(adjacency[j])
        members.update(children[int(hier.parent[j])])
        members.add(j)
        ordered = sorted(members)
        indices.extend(ordered)
        indptr.append(len(indices))
    data = np.ones(len(indices), dtype=np.float64)
    # sorted members per column: build CSC then convert
    h = sparse.csc_matrix(
        (data, np.array(indices, dtype=np.int32), np.array(indptr, dtype=np.int32)),
        shape=(n, n),
    )
    return h.tocsr()


# ---------------------------------------------------------------------------
# Weights, degrees, operator
# ---------------------------------------------------------------------------


def edge_members(h: sparse.csr_matrix) -> list[np.ndarray]:
    """Member vertex ids of every hyperedge (column of H), ascending."""
    hc = h.tocsc()
    return [
        np.sort(hc.indices[hc.indptr[j] : hc.indptr[j + 1]]).astype(np.int64)
        for j in range(hc.shape[1])
    ]


def hyperedge_weights(
    h: sparse.csr_matrix, features: NodeFeatures, bandwidth: float = 1.0
) -> np.ndarray:
    """Mean pairwise similarity of the vertices inside each hyperedge.

    w_i = 2 / (n_i (n_i - 1)) * sum over unordered distinct pairs {j, k}
    of exp(-||v_j - v_k||_2 / bandwidth); single-member edges get w_i = 1.
    The result is bounded in (0, 1].
    """
    if not bandwidth > 0:
        raise ParameterError(f"bandwidth must be > 0, got {bandwidth}")
    v = features.matrix
    weights = np.empty(h.shape[1], dtype=np.float64)
    for j, members in enumerate(edge_members(h)):
        m = len(members)
        if m == 1:
            weights[j] = 1.0
            continue
        pts = v[members]
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        iu = np.triu_indices(m, k=1)
        weights[j] = np.exp(-dist[iu] / bandwidth).sum() * 2.0 / (m * (m - 1))
    return weights


def auto_bandwidth(h: sparse.csr_matrix, features: NodeFeatures) -> float:
    """Median pairwise feature distance inside hyperedges; 1.0 if degenerate."""
    v = features.matrix
    dists: list[np.ndarray] = []
    for members in edge_members(h):
        if len(members) < 2:
            continue
        pts = v[members]
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff * diff).sum(axis=2))
        dists.append(dist[np.triu_indices(len(members), k=1)])
    if not dists:
        return 1.0
    med = float(np.median(np.concatenate(dists)))
    return med if med > 0 else 1.0


def degrees(h: sparse.csr_matrix, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted vertex degrees and integer edge degrees."""
    if h.shape[1] != len(w):
        raise DimensionError(f"H has {h.shape[1]} edges but w has {len(w)}")
    d = np.asarray(h @ w, dtype=np.float64).ravel()
    delta = np.asarray(h.sum(axis=0), dtype=np.int64).ravel()
    return d, delta


def propagation_operator(
    h: sparse.csr_matrix,
    w: np.ndarray,
    d: np.ndarray,
    delta: np.ndarray,
) -> PropagationOperator:
    """Assemble P = Dv^{-1/2} H W De^{-1} H^T Dv^{-1/2} and Lambda = I - P.

    Cannot degenerate while H keeps its unit diagonal and w > 0; asserted
    anyway via DegenerateGraphError.
    """
    if (d <= 0).any():
        raise DegenerateGraphError("zero vertex degree")
    if (delta <= 0).any():
        raise DegenerateGraphError("zero edge degree")
    if (w <= 0).any():
        raise DegenerateGraphError("non-positive hyperedge weight")
    n = h.shape[0]
    row_scale = sparse.diags(1.0 / np.sqrt(d))
    col_scale = sparse.diags(np.sqrt(w / delta))
    c = (row_scale @ h @ col_scale).tocsr()
    p = (c @ c.T).tocsr()
    lam = (sparse.identity(n, format="csr") - p).tocsr()
    return PropagationOperator(p=p, laplacian=lam)


def build_hypergraph(
    adjacency: list[tuple[int, ...]],
    hier: Hierarchy,
    features: NodeFeatures,
    bandwidth: float | None = 1.0,
) -> tuple[Hypergraph, PropagationOperator]:
    """One-call construction: incidence, weights, degrees, operator.

    bandwidth=None selects the auto mode (median within-edge distance).
    """
    h = build_hyperedges(adjacency, hier)
    if features.n != h.shape[0]:
        raise DimensionError(
            f"features cover {features.n} vertices but graph has {h.shape[0]}"
        )
    bw = auto_bandwidth(h, features) if bandwidth is None else bandwidth
    w = hyperedge_weights(h, features, bw)
    d, delta = degrees(h, w)
    hg = Hypergraph(
        n=h.shape[0], incidence=h, weights=w, vertex_degrees=d, edge_degrees=delta
    )
    return hg, propagation_operator(h, w, d, delta)


# ---------------------------------------------------------------------------
# Text serialization
# ---------------------------------------------------------------------------


def write_hypergraph(hg: Hypergraph, path: str) -> None:
    """Write header "N L" then one line per edge: id, weight, member ids."""
    lines = [f"{hg.n} {hg.l}"]
    for j, members in enumerate(edge_members(hg.incidence)):
        ids = " ".join(str(i) for i in members.tolist())
        lines.append(f"{j} {float(hg.weights[j])!r} {ids}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def read_hypergraph(path: str) -> Hypergraph:
    """Parse the text form back into a Hypergraph (degrees recomputed)."""
    with open(path) as f:
        lines = [ln for ln in f.read().splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"empty hypergraph file {path}")
    try:
        n, l = (int(tok) for tok in lines[0].split())
    except ValueError as exc:
        raise FormatError(f"bad hypergraph header {lines[0]!r}") from exc
    if len(lines) - 1 != l:
        raise FormatError(f"expected {l} edge lines, found {len(lines) - 1}")
    weights = np.empty(l, dtype=np.float64)
    indptr = [0]
    indices: list[int] = []
    for j, line in enumerate(lines[1:]):
        toks = line.split()
        if int(toks[0]) != j:
            raise FormatError(f"edge ids out of order at line {j + 2}")
        weights[j] = float(toks[1])
        members = sorted(int(t) for t in toks[2:])
        if not members:
            raise FormatError(f"edge {j} has no members")
        if members[0] < 0 or members[-1] >= n:
            raise FormatError(f"edge {j} has member ids outside [0, {n})")
        indices.extend(members)
        indptr.append(len(indices))
    h = sparse.csc_matrix(
        (
            np.ones(len(indices), dtype=np.float64),
            np.array(indices, dtype=np.int32),
            np.array(indptr, dtype=np.int32),
        ),
        shape=(n, l),
    ).tocsr()
    d, delta = degrees(h, weights)
    return Hypergraph(
        n=n, incidence=h, weights=weights, vertex_degrees=d, edge_degrees=delta
    )
