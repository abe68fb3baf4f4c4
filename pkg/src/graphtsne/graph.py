"""Graph ingestion, shortest paths, kNN construction and neighbor subsampling.

Node ids are dense 0-based integers. Graphs are undirected, stored in a
CSR-style layout (offsets + sorted neighbor lists). Unreachable node pairs
are reported with the :data:`UNREACHABLE` sentinel so downstream affinity
code can branch on them exactly.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .affinity import pairwise_sq_euclidean
from .errors import MalformedInputError

logger = logging.getLogger(__name__)

#: Distance sentinel for node pairs with no connecting path (or beyond a hop cap).
UNREACHABLE = np.inf


def thread_cap() -> int:
    """Worker thread budget: cpu count, capped by the GRAPHTSNE_THREADS env var."""
    cap = os.cpu_count() or 1
    raw = os.environ.get("GRAPHTSNE_THREADS", "").strip()
    if raw:
        try:
            cap = min(cap, max(1, int(raw)))
        except ValueError:
            logger.warning("ignoring non-integer GRAPHTSNE_THREADS=%r", raw)
    return cap


@dataclass
class Graph:
    """Immutable undirected graph over nodes 0..num_nodes-1.

    ``edge_pairs`` holds each undirected edge once as (i, j) with i < j.
    ``offsets``/``neighbors`` is the CSR adjacency; neighbor lists are sorted
    and contain no self-loops or duplicates.
    """

    num_nodes: int
    edge_pairs: np.ndarray
    offsets: np.ndarray
    neighbors: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.edge_pairs.shape[0])

    def degree(self, node: int) -> int:
        return int(self.offsets[node + 1] - self.offsets[node])

    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def adj(self, node: int) -> np.ndarray:
        """Sorted neighbor ids of ``node`` (a read-only view)."""
        return self.neighbors[self.offsets[node]:self.offsets[node + 1]]

    @classmethod
    def from_edges(cls, num_nodes: int, pairs) -> "Graph":
        """Build a graph from an iterable of (i, j) pairs.

        Self-loops and duplicate edges (in either orientation) are dropped;
        a count of each is logged as a warning. Raises ValueError on
        out-of-range endpoints.
        """
        if num_nodes < 0:
            raise ValueError("num_nodes must be nonnegative")
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs,
                         dtype=np.int64)
        if arr.size == 0:
            arr = arr.reshape(0, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError("edge pairs must be of shape (E, 2)")
        if arr.size and (arr.min() < 0 or arr.max() >= num_nodes):
            raise ValueError("edge endpoint out of range [0, num_nodes)")

        loops = arr[:, 0] == arr[:, 1]
        n_loops = int(loops.sum())
        arr = arr[~loops]
        lo = np.minimum(arr[:, 0], arr[:, 1])
        hi = np.maximum(arr[:, 0], arr[:, 1])
        undirected = np.stack([lo, hi], axis=1)
        if undirected.shape[0]:
            undirected = np.unique(undirected, axis=0)
        n_dupes = int(arr.shape[0] - undirected.shape[0])
        if n_loops or n_dupes:
            logger.warning("dropped %d self-loop(s) and %d duplicate edge(s)",
                           n_loops, n_dupes)

        both = np.concatenate([undirected, undirected[:, ::-1]], axis=0)
        order = np.lexsort((both[:, 1], both[:, 0]))
        both = both[order]
        counts = np.bincount(both[:, 0], minlength=num_nodes)
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(num_nodes=num_nodes, edge_pairs=undirected,
                   offsets=offsets, neighbors=both[:, 1].copy())


@dataclass
class LabeledDataset:
    """A graph paired with node features and optional class labels."""

    graph: Graph
    features: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.features.shape[0] != self.graph.num_nodes:
            raise ValueError(
                f"feature rows ({self.features.shape[0]}) != graph nodes "
                f"({self.graph.num_nodes})")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.graph.num_nodes,):
                raise ValueError("labels must have one entry per node")

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes


def load_edge_list(path, num_nodes: int) -> Graph:
    """Read an undirected edge list from a text file.

    Format: two whitespace-separated integer node ids per line; anything
    after a '#' is a comment; blank lines are skipped. Edges are
    symmetrized and deduplicated, self-loops dropped with a warning.

    Raises MalformedInputError (naming the line) on parse errors or
    endpoints outside [0, num_nodes); OSError if the file is unreadable.
    """
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise MalformedInputError(
                    f"{path}: line {lineno}: expected two node ids, got {len(parts)} fields")
            try:
                i, j = int(parts[0]), int(parts[1])
            except ValueError:
                raise MalformedInputError(
                    f"{path}: line {lineno}: non-integer node id") from None
            if not (0 <= i < num_nodes and 0 <= j < num_nodes):
                raise MalformedInputError(
                    f"{path}: line {lineno}: node id out of range [0, {num_nodes})")
            pairs.append((i, j))
    return Graph.from_edges(num_nodes, pairs)


def load_features_csv(path) -> np.ndarray:
    """Read a headerless CSV of N rows x n numeric columns as float64.

    Raises MalformedInputError naming the (1-based) row on ragged rows,
    non-numeric cells, or non-finite values.
    """
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for rowno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise MalformedInputError(
                    f"{path}: row {rowno}: expected {width} columns, got {len(cells)}")
            try:
                values = [float(c) for c in cells]
            except ValueError:
                raise MalformedInputError(
                    f"{path}: row {rowno}: non-numeric cell") from None
            if not all(np.isfinite(values)):
                raise MalformedInputError(
                    f"{path}: row {rowno}: non-finite value")
            rows.append(values)
    if not rows:
        raise MalformedInputError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def load_labels_csv(path) -> np.ndarray:
    """Read a headerless CSV with one integer class id per row."""
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for rowno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                value = float(line)
            except ValueError:
                raise MalformedInputError(
                    f"{path}: row {rowno}: non-integer label") from None
            if not value.is_integer():
                raise MalformedInputError(
                    f"{path}: row {rowno}: non-integer label")
            labels.append(int(value))
    if not labels:
        raise MalformedInputError(f"{path}: no data rows")
    return np.asarray(labels, dtype=np.int64)


def _bfs_distances(graph: Graph, source: int, target_mask: np.ndarray | None,
                   n_targets: int, hop_cap: int | None) -> np.ndarray:
    """Hop distances from ``source`` to every node (UNREACHABLE where none).

    Stops early once all masked targets are found, or when the hop cap is
    reached; nodes beyond the cap keep the sentinel.
    """
    n = graph.num_nodes
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    remaining = n_targets - (1 if target_mask is not None and target_mask[source] else 0)
    frontier = np.array([source], dtype=np.int64)
    level = 0
    offsets, neighbors = graph.offsets, graph.neighbors
    while frontier.size and remaining != 0:
        if hop_cap is not None and level >= hop_cap:
            break
        starts = offsets[frontier]
        counts = offsets[frontier + 1] - starts
        total = int(counts.sum())
        if total == 0:
            break
        base = np.repeat(starts, counts)
        step = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
        neigh = neighbors[base + step]
        fresh = neigh[dist[neigh] < 0]
        if fresh.size == 0:
            break
        frontier = np.unique(fresh)
        level += 1
        dist[frontier] = level
        if target_mask is not None:
            remaining -= int(target_mask[frontier].sum())
    out = dist.astype(np.float64)
    out[dist < 0] = UNREACHABLE
    return out


def bfs_shortest_paths(graph: Graph, sources, targets,
                       hop_cap: int | None = None) -> np.ndarray:
    """Shortest-path hop distances for every (source, target) pair.

    Returns a float64 matrix of shape (len(sources), len(targets));
    unreachable pairs (or pairs beyond ``hop_cap``) hold UNREACHABLE.
    BFS runs per source and terminates early once all targets are found.
    Rows may be computed in parallel (bounded by GRAPHTSNE_THREADS).
    """
    sources = np.asarray(sources, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    n = graph.num_nodes
    for name, ids in (("sources", sources), ("targets", targets)):
        if ids.size and (ids.min() < 0 or ids.max() >= n):
            raise ValueError(f"{name} contain a node id outside [0, {n})")

    full_targets = targets.size == n and np.array_equal(targets, np.arange(n))
    if full_targets:
        mask, n_targets = None, n
    else:
        mask = np.zeros(n, dtype=bool)
        mask[targets] = True
        n_targets = int(mask.sum())

    out = np.empty((sources.size, targets.size), dtype=np.float64)

    def fill(row: int) -> None:
        dist = _bfs_distances(graph, int(sources[row]), mask, n_targets, hop_cap)
        out[row] = dist[targets]

    workers = thread_cap()
    if workers > 1 and sources.size >= 64:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, range(sources.size)))
    else:
        for row in range(sources.size):
            fill(row)
    return out


def all_pairs_distances(graph: Graph, hop_cap: int | None = None) -> np.ndarray:
    """All-pairs shortest-path distance matrix (N x N, UNREACHABLE sentinel)."""
    ids = np.arange(graph.num_nodes)
    return bfs_shortest_paths(graph, ids, ids, hop_cap=hop_cap)


def knn_graph(x: np.ndarray, k: int) -> np.ndarray:
    """Directed k-nearest-neighbor pairs over feature rows.

    Returns an (N*k, 2) int array of pairs (i, j) where j is among the k
    nearest rows to i by squared Euclidean distance, self excluded, ties
    broken by the smaller node index. Rows are ordered by source node,
    then by (distance, index) rank.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of rows ({n})")
    if k < 1:
        raise ValueError("k must be >= 1")
    d = pairwise_sq_euclidean(x)
    idx = np.broadcast_to(np.arange(n), (n, n))
    order = np.lexsort((idx, d), axis=-1)
    keep = order != np.arange(n)[:, None]
    ranked = order[keep].reshape(n, n - 1)[:, :k]
    src = np.repeat(np.arange(n), k)
    return np.stack([src, ranked.reshape(-1)], axis=1)


@dataclass
class SubsampledBatch:
    """Layered neighbor expansion of a mini-batch for a multi-layer GCN.

    ``frontiers[0]`` is the batch itself; ``frontiers[i]`` extends
    ``frontiers[i-1]`` (prefix-nested) with the neighbors sampled for the
    i-th expansion step, so ``frontiers[-1]`` is the full set of nodes whose
    input features the forward pass reads. ``layer_edges[l-1]`` holds the
    sampled (dst, src) pairs used by conv layer l; the top layer is expanded
    first, so layer L draws from frontiers[0] -> frontiers[1], layer 1 from
    frontiers[L-1] -> frontiers[L].
    """

    batch_nodes: np.ndarray
    frontiers: list = field(default_factory=list)
    layer_edges: list = field(default_factory=list)
    fanouts: tuple = ()

    @property
    def num_layers(self) -> int:
        return len(self.layer_edges)

    def receptive_field_sizes(self) -> np.ndarray:
        """Distinct nodes reached per batch node along sampled edge chains.

        Follows one sampled edge per conv layer from each batch node down to
        the input level and counts the distinct endpoints (the leaves of the
        sampling tree). With fanouts d, this is bounded by prod(d).
        """
        maps = []
        for dst, src in reversed(self.layer_edges):  # top layer first
            table: dict[int, list] = {}
            for d, s in zip(dst.tolist(), src.tolist()):
                table.setdefault(d, []).append(s)
            maps.append(table)
        sizes = np.zeros(self.batch_nodes.size, dtype=np.int64)
        for pos, node in enumerate(self.batch_nodes.tolist()):
            current = {node}
            for table in maps:
                nxt = set()
                for u in current:
                    nxt.update(table.get(u, ()))
                current = nxt
            sizes[pos] = len(current)
        return sizes


def neighbor_subsample(graph: Graph, batch_nodes, fanouts, seed: int) -> SubsampledBatch:
    """Expand a mini-batch layer by layer, sampling at most d(l) neighbors per node.

    ``fanouts`` holds one fan-out per GCN layer (layer 1 first). Expansion
    starts at the top layer: the batch is grown with up to fanouts[-1]
    sampled neighbors per node, then the result with up to fanouts[-2], and
    so on. Sampling is without replacement and deterministic for a fixed
    seed; nodes with degree <= d(l) keep all neighbors.
    """
    rng = np.random.default_rng(seed)
    batch = np.asarray(batch_nodes, dtype=np.int64)
    if batch.size != np.unique(batch).size:
        raise ValueError("batch_nodes must be unique")
    if batch.size and (batch.min() < 0 or batch.max() >= graph.num_nodes):
        raise ValueError("batch node id out of range")

    fanouts = tuple(int(d) for d in fanouts)
    frontiers = [batch]
    edges_by_step = []
    in_frontier = set(batch.tolist())
    for step in range(len(fanouts)):
        fanout = fanouts[len(fanouts) - 1 - step]
        current = frontiers[step]
        dst_list, src_list = [], []
        for node in current.tolist():
            neigh = graph.adj(node)
            if neigh.size > fanout:
                picked = np.sort(rng.choice(neigh, size=fanout, replace=False))
            else:
                picked = neigh
            dst_list.append(np.full(picked.size, node, dtype=np.int64))
            src_list.append(picked.astype(np.int64))
        dst = np.concatenate(dst_list) if dst_list else np.empty(0, np.int64)
        src = np.concatenate(src_list) if src_list else np.empty(0, np.int64)
        edges_by_step.append((dst, src))
        new_nodes = np.array(sorted(set(src.tolist()) - in_frontier), dtype=np.int64)
        in_frontier.update(new_nodes.tolist())
        frontiers.append(np.concatenate([current, new_nodes]))
    return SubsampledBatch(batch_nodes=batch, frontiers=frontiers,
                           layer_edges=edges_by_step[::-1], fanouts=fanouts)
