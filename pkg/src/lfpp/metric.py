"""Weighted shortest-path metrics on the 8-neighbor grid graph.

Vertex v carries weight exp(xi * field(v)); the edge between neighbors u, v
costs step(u, v) * (w(u) + w(v)) / 2 with step = delta on axis moves and
delta * sqrt(2) on diagonal moves.  Queries run a label-setting search
(scipy's C implementation over a CSR adjacency built per query) restricted
to an optional vertex mask.  Reported values are re-accumulated over the
witness path with exact summation, so reversing a query is bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import DataError, GeometryError, RangeError, StateError
from .field import EXP_GUARD, Field, GridSpec

_SQRT2 = math.sqrt(2.0)
# (di, dj, step factor); the first four double as the undirected edge set
_OFFSETS = (
    (1, 0, 1.0),
    (0, 1, 1.0),
    (1, 1, _SQRT2),
    (1, -1, _SQRT2),
    (-1, 0, 1.0),
    (0, -1, 1.0),
    (-1, -1, _SQRT2),
    (-1, 1, _SQRT2),
)


@dataclass
class WeightedGrid:
    """Immutable vertex-weighted grid; safe to share across queries."""

    spec: GridSpec
    xi: float
    vertex_weight: np.ndarray
    eps: float

    def __post_init__(self):
        self.vertex_weight.flags.writeable = False


@dataclass(frozen=True)
class AnnulusSpec:
    """Open annulus r1 < |p - center| < r2."""

    center: tuple[float, float]
    r1: float
    r2: float

    def validate(self, spec: GridSpec) -> None:
        if not (0 < self.r1 < self.r2):
            raise GeometryError(f"need 0 < r1 < r2, got r1={self.r1}, r2={self.r2}")
        if self.r2 - self.r1 < 4 * spec.delta:
            raise GeometryError(
                f"annulus width {self.r2 - self.r1} below resolution (needs >= 4*delta)"
            )
        lim = spec.half_width - spec.delta
        if abs(self.center[0]) + self.r2 + 2 * spec.delta > lim or \
           abs(self.center[1]) + self.r2 + 2 * spec.delta > lim:
            raise GeometryError("outer circle exits the grid (margin 2*delta)")


@dataclass
class DistanceResult:
    """A shortest-path value with its witness.

    ``value`` is in weighted length units; ``path`` lists (i, j) grid nodes
    (closed, first == last, for separating cycles).  ``reachable`` is the
    explicit finiteness marker; when False, value is math.inf and path is
    empty.  ``relaxations`` counts nodes reached by the search.
    """

    value: float
    path: list[tuple[int, int]] | None
    relaxations: int
    reachable: bool = True


def build_weighted_grid(mfield: Field, xi: float) -> WeightedGrid:
    """Exponentiate a mollified field into vertex weights."""
    if mfield.kind != "mollified":
        raise StateError("weighted grid wants a mollified field")
    if xi <= 0:
        raise DataError(f"xi must be positive, got {xi}")
    logw = xi * mfield.values
    amax = np.unravel_index(np.argmax(np.abs(logw)), logw.shape)
    if abs(logw[amax]) > EXP_GUARD:
        raise RangeError(
            f"xi*field = {logw[amax]:.3g} at node {tuple(int(a) for a in amax)} "
            f"exceeds the exp() guard ({EXP_GUARD})"
        )
    return WeightedGrid(spec=mfield.spec, xi=float(xi),
                        vertex_weight=np.exp(logw), eps=float(mfield.eps or 0.0))


# ---------------------------------------------------------------------------
# masks and boundary rasterization


def full_mask(spec: GridSpec) -> np.ndarray:
    return np.ones((spec.n, spec.n), dtype=bool)


def _radial(spec: GridSpec, center) -> np.ndarray:
    ax = spec.axis()
    dx = ax[:, None] - center[0]
    dy = ax[None, :] - center[1]
    return np.sqrt(dx * dx + dy * dy)


def annulus_region(spec: GridSpec, ann: AnnulusSpec, *, fatten: float = 0.0,
                   open_annulus: bool = False) -> np.ndarray:
    """Vertex mask of the annulus, optionally fattened by ``fatten`` so the
    rasterized boundary circles are included."""
    rr = _radial(spec, ann.center)
    if open_annulus:
        return (rr > ann.r1) & (rr < ann.r2)
    return (rr >= ann.r1 - fatten) & (rr <= ann.r2 + fatten)


def circle_band(spec: GridSpec, center, radius: float) -> np.ndarray:
    """All nodes within delta/sqrt(2) of the circle."""
    rr = _radial(spec, center)
    return np.abs(rr - radius) <= spec.delta / _SQRT2


def square_region(spec: GridSpec, square) -> np.ndarray:
    """Vertex mask of an axis-aligned square (x0, y0, side), fattened by
    delta/2 so the rasterized edge segments are included."""
    x0, y0, side = square
    if side < 4 * spec.delta:
        raise GeometryError(f"square side {side} below resolution (needs >= 4*delta)")
    lo, hi = -spec.half_width, spec.half_width - spec.delta
    if min(x0, y0) < lo or max(x0 + side, y0 + side) > hi:
        raise GeometryError("square exits the grid")
    ax = spec.axis()
    h = spec.delta / 2
    in_x = (ax >= x0 - h) & (ax <= x0 + side + h)
    in_y = (ax >= y0 - h) & (ax <= y0 + side + h)
    return in_x[:, None] & in_y[None, :]


def segment_band(spec: GridSpec, p0, p1) -> np.ndarray:
    """Nodes within delta/2 of an axis-aligned segment."""
    ax = spec.axis()
    h = spec.delta / 2
    (x0, y0), (x1, y1) = p0, p1
    if x0 == x1:
        near_x = np.abs(ax - x0) <= h
        in_y = (ax >= min(y0, y1) - h) & (ax <= max(y0, y1) + h)
        return near_x[:, None] & in_y[None, :]
    if y0 == y1:
        near_y = np.abs(ax - y0) <= h
        in_x = (ax >= min(x0, x1) - h) & (ax <= max(x0, x1) + h)
        return in_x[:, None] & near_y[None, :]
    raise GeometryError("only axis-aligned segments are rasterized")


def points_mask(spec: GridSpec, points) -> np.ndarray:
    mask = np.zeros((spec.n, spec.n), dtype=bool)
    for p in points:
        mask[spec.node_of(p)] = True
    return mask


# ---------------------------------------------------------------------------
# graph assembly


class _MaskedGraph:
    """Compact CSR view of the masked grid graph."""

    def __init__(self, grid: WeightedGrid, mask: np.ndarray | None,
                 drop_edges: set | None = None):
        spec = grid.spec
        n = spec.n
        if mask is None:
            mask = full_mask(spec)
        if not mask.any():
            raise GeometryError("mask is empty")
        self.mask = mask
        self.node_flat = np.flatnonzero(mask.ravel())
        self.m = len(self.node_flat)
        self.compact = np.full(n * n, -1, dtype=np.int64)
        self.compact[self.node_flat] = np.arange(self.m)
        w = grid.vertex_weight
        delta = spec.delta
        rows, cols, data = [], [], []
        for di, dj, s in _OFFSETS:
            src = mask[max(0, -di): n + min(0, -di), max(0, -dj): n + min(0, -dj)]
            dst = mask[max(0, di): n + min(0, di), max(0, dj): n + min(0, dj)]
            both = src & dst
            if not both.any():
                continue
            si, sj = np.nonzero(both)
            si = si + max(0, -di)
            sj = sj + max(0, -dj)
            ti, tj = si + di, sj + dj
            sflat = si * n + sj
            tflat = ti * n + tj
            if drop_edges:
                keep = np.fromiter(
                    ((a, b) not in drop_edges for a, b in zip(sflat, tflat)),
                    dtype=bool, count=len(sflat),
                )
                sflat, tflat = sflat[keep], tflat[keep]
                si, sj, ti, tj = si[keep], sj[keep], ti[keep], tj[keep]
            edge_w = (delta * s) * 0.5 * (w[si, sj] + w[ti, tj])
            rows.append(self.compact[sflat])
            cols.append(self.compact[tflat])
            data.append(edge_w)
        if rows:
            rows = np.concatenate(rows)
            cols = np.concatenate(cols)
            data = np.concatenate(data)
        self.csr = csr_matrix((data, (rows, cols)), shape=(self.m, self.m))

    def compact_of_nodes(self, node_mask: np.ndarray) -> np.ndarray:
        ids = self.compact[np.flatnonzero((node_mask & self.mask).ravel())]
        return ids[ids >= 0]

    def node_ij(self, cid: int) -> tuple[int, int]:
        flat = self.node_flat[cid]
        return int(flat // self.mask.shape[1]), int(flat % self.mask.shape[1])


def _edge_length(grid: WeightedGrid, a: tuple[int, int], b: tuple[int, int]) -> float:
    di, dj = b[0] - a[0], b[1] - a[1]
    if max(abs(di), abs(dj)) != 1:
        raise DataError(f"nodes {a} and {b} are not grid neighbors")
    step = grid.spec.delta * (_SQRT2 if di and dj else 1.0)
    w = grid.vertex_weight
    return step * 0.5 * (w[a] + w[b])


def path_length(grid: WeightedGrid, path) -> float:
    """Exactly accumulated weighted length of a node path."""
    return math.fsum(_edge_length(grid, a, b) for a, b in zip(path, path[1:]))


def _shortest_between(grid: WeightedGrid, graph: _MaskedGraph,
                      sources: np.ndarray, targets: np.ndarray) -> DistanceResult:
    """Multi-source/multi-sink shortest path on a prepared graph."""
    if len(sources) == 0 or len(targets) == 0:
        raise GeometryError("empty source or target set after rasterization")
    shared = np.intersect1d(sources, targets)
    if len(shared):
        node = graph.node_ij(int(shared[0]))
        return DistanceResult(value=0.0, path=[node], relaxations=0)
    dist, pred, _src_of = _csgraph_dijkstra(
        graph.csr, directed=True, indices=sources,
        return_predecessors=True, min_only=True,
    )
    tvals = dist[targets]
    best = int(np.argmin(tvals))
    if not np.isfinite(tvals[best]):
        return DistanceResult(value=math.inf, path=[], relaxations=int(np.isfinite(dist).sum()),
                              reachable=False)
    cur = int(targets[best])
    chain = [cur]
    while pred[cur] >= 0:
        cur = int(pred[cur])
        chain.append(cur)
    path = [graph.node_ij(c) for c in reversed(chain)]
    return DistanceResult(
        value=path_length(grid, path),
        path=path,
        relaxations=int(np.isfinite(dist).sum()),
    )


def _as_node_mask(spec: GridSpec, obj) -> np.ndarray:
    if isinstance(obj, np.ndarray) and obj.dtype == bool:
        return obj
    return points_mask(spec, obj)


# ---------------------------------------------------------------------------
# queries


def distance(grid: WeightedGrid, a, b, mask: np.ndarray | None = None) -> DistanceResult:
    """Shortest weighted path between the nodes nearest two continuum points,
    restricted to the mask (full grid if absent)."""
    na, nb = grid.spec.node_of(a), grid.spec.node_of(b)
    if mask is not None:
        for name, node in (("a", na), ("b", nb)):
            if not mask[node]:
                raise GeometryError(f"endpoint {name} at node {node} is outside the mask")
    graph = _MaskedGraph(grid, mask)
    sa = graph.compact[na[0] * grid.spec.n + na[1]]
    sb = graph.compact[nb[0] * grid.spec.n + nb[1]]
    return _shortest_between(grid, graph,
                             np.array([sa], dtype=np.int64),
                             np.array([sb], dtype=np.int64))


def distance_sets(grid: WeightedGrid, a_set, b_set,
                  mask: np.ndarray | None = None) -> DistanceResult:
    """min over (a, b) of distance, in one multi-source sweep.

    Sets may be boolean node masks or iterables of continuum points.
    """
    spec = grid.spec
    a_mask = _as_node_mask(spec, a_set)
    b_mask = _as_node_mask(spec, b_set)
    graph = _MaskedGraph(grid, mask)
    return _shortest_between(
        grid, graph,
        graph.compact_of_nodes(a_mask),
        graph.compact_of_nodes(b_mask),
    )


def across_annulus(grid: WeightedGrid, ann: AnnulusSpec) -> DistanceResult:
    """Distance between the rasterized boundary circles inside the annulus.

    The mask is the closed annulus fattened by the rasterization half-width
    delta/sqrt(2), so both boundary bands belong to it; this makes
    across(r, 4r) >= across(r, 2r) + across(2r, 4r) exact (any path crossing
    an intermediate circle owns a node in its band).
    """
    spec = grid.spec
    ann.validate(spec)
    fat = spec.delta / _SQRT2
    mask = annulus_region(spec, ann, fatten=fat)
    inner = circle_band(spec, ann.center, ann.r1)
    outer = circle_band(spec, ann.center, ann.r2)
    graph = _MaskedGraph(grid, mask)
    return _shortest_between(
        grid, graph,
        graph.compact_of_nodes(inner),
        graph.compact_of_nodes(outer),
    )


def _cut_edges(spec: GridSpec, mask: np.ndarray, center) -> list[tuple[int, int]]:
    """Directed grid edges (below -> above) crossing the rightward slit.

    The slit is the horizontal ray from the center; the cut line runs between
    the node row nearest the center ordinate and the row below it, over
    x > center_x, so no vertex sits on the cut.
    """
    n = spec.n
    cx, cy = center
    jc = round((cy + spec.half_width) / spec.delta)
    if not (1 <= jc < n):
        raise GeometryError("slit row outside the grid")
    ax = spec.axis()
    pairs = []
    for di in (-1, 0, 1):
        i_lo = max(0, -di)
        i_hi = n - max(0, di)
        src_i = np.arange(i_lo, i_hi)
        dst_i = src_i + di
        ok = mask[src_i, jc - 1] & mask[dst_i, jc]
        cross_x = ax[src_i] + di * spec.delta / 2.0
        ok &= cross_x > cx
        for s, d in zip(src_i[ok], dst_i[ok]):
            pairs.append((int(s) * n + (jc - 1), int(d) * n + jc))
    return pairs


def around_annulus(grid: WeightedGrid, ann: AnnulusSpec) -> DistanceResult:
    """Shortest cycle in the open annulus separating inner from outer.

    Cuts the annulus along the rightward slit; for every grid edge crossing
    the slit, the cheapest once-crossing cycle through that edge is the edge
    plus the shortest path between its endpoints in the slit-cut graph.  The
    minimum over crossing edges is returned, with search limits tightened as
    better cycles are found.
    """
    spec = grid.spec
    ann.validate(spec)
    mask = annulus_region(spec, ann, open_annulus=True)
    if not mask.any():
        raise GeometryError("annulus contains no grid nodes")
    cut = _cut_edges(spec, mask, ann.center)
    if not cut:
        raise GeometryError("annulus too thin for a separating cycle at this resolution")
    drop = set(cut) | {(b, a) for a, b in cut}
    graph = _MaskedGraph(grid, mask, drop_edges=drop)
    n = spec.n
    w = grid.vertex_weight

    def flat_ij(flat):
        return flat // n, flat % n

    # inner crossings first: short separating cycles hug the inner boundary
    cut.sort(key=lambda ab: _radial_of(spec, ann.center, flat_ij(ab[0])))
    best = math.inf
    best_path = None
    reached = 0
    for a_flat, b_flat in cut:
        a_ij, b_ij = flat_ij(a_flat), flat_ij(b_flat)
        wedge = _edge_length(grid, a_ij, b_ij)
        if wedge >= best:
            continue
        ca, cb = int(graph.compact[a_flat]), int(graph.compact[b_flat])
        limit = best - wedge if math.isfinite(best) else np.inf
        dist, pred = _csgraph_dijkstra(
            graph.csr, directed=True, indices=cb,
            return_predecessors=True, limit=limit,
        )
        reached += int(np.isfinite(dist).sum())
        if not math.isfinite(dist[ca]):
            continue
        cand = wedge + dist[ca]
        if cand < best:
            chain = [ca]
            cur = ca
            while pred[cur] >= 0:
                cur = int(pred[cur])
                chain.append(cur)
            nodes = [graph.node_ij(c) for c in reversed(chain)]  # b .. a
            cycle = nodes + [nodes[0]]
            best = path_length(grid, cycle)
            best_path = cycle
    if best_path is None:
        raise GeometryError("no separating cycle exists in the annulus mask")
    return DistanceResult(value=best, path=best_path, relaxations=reached)


def _radial_of(spec: GridSpec, center, ij) -> float:
    x, y = spec.coord_of(*ij)
    return math.hypot(x - center[0], y - center[1])


def crossing_length(grid: WeightedGrid, square) -> DistanceResult:
    """Shortest left-to-right crossing of an axis-aligned square
    (x0, y0, side), masked to the square."""
    spec = grid.spec
    x0, y0, side = square
    mask = square_region(spec, square)
    left = segment_band(spec, (x0, y0), (x0, y0 + side)) & mask
    right = segment_band(spec, (x0 + side, y0), (x0 + side, y0 + side)) & mask
    graph = _MaskedGraph(grid, mask)
    return _shortest_between(
        grid, graph,
        graph.compact_of_nodes(left),
        graph.compact_of_nodes(right),
    )


def witnesses_intersect(path_a, path_b) -> bool:
    """Whether two witness polylines meet: a shared node, or a transversal
    crossing of opposite cell diagonals (the one node-free crossing the
    8-neighbor lattice admits)."""
    if not path_a or not path_b:
        return False
    set_a = set(path_a)
    if set_a & set(path_b):
        return True
    diag_a = _diagonal_cells(path_a)
    for (i, j), sgn in _diagonal_cells(path_b):
        if ((i, j), -sgn) in diag_a:
            return True
    return False


def _diagonal_cells(path) -> set:
    """Cells crossed diagonally, keyed by lower-left corner and direction."""
    out = set()
    for (i0, j0), (i1, j1) in zip(path, path[1:]):
        di, dj = i1 - i0, j1 - j0
        if di and dj:
            cell = (min(i0, i1), min(j0, j1))
            out.add((cell, di * dj))
    return out
