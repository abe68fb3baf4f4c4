"""Layout quality metrics and the alpha-sweep harness.

Five quantities: feature trustworthiness T_X(k), graph trustworthiness
T_G(r), distance metrics P_G and P_X over a standardized map, and
cross-validated 1-NN label accuracy. The sweep trains one model per alpha
and selects alpha* minimizing P_G + P_X.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .affinity import pairwise_sq_euclidean
from .errors import TrainingError
from .graph import Graph, LabeledDataset, bfs_shortest_paths, knn_graph
from .trainer import TrainConfig, embed, train

DEFAULT_KNN_K = 10
DEFAULT_T_KS = (6, 12, 18)
DEFAULT_T_RS = (1, 2)
DEFAULT_FOLDS = 10


def standardize_map(y: np.ndarray) -> np.ndarray:
    """Translate to zero mean and scale to unit mean squared point norm.

    A degenerate map (all points coincident) is returned unchanged, so its
    pairwise distances stay zero.
    """
    y = np.asarray(y, dtype=np.float64)
    centered = y - y.mean(axis=0)
    mean_sq = float(np.mean(np.sum(centered * centered, axis=1)))
    if mean_sq <= 0.0:
        return y.copy()
    return centered / np.sqrt(mean_sq)


def _rank_orders(distances: np.ndarray) -> np.ndarray:
    """Per-row orderings by (distance, index) with self pushed to the end.

    Row i of the result lists all other points from nearest to farthest;
    ties broken by smaller index. Shape (N, N-1).
    """
    d = np.array(distances, dtype=np.float64)
    n = d.shape[0]
    np.fill_diagonal(d, np.inf)
    idx = np.broadcast_to(np.arange(n), (n, n))
    order = np.lexsort((idx, d), axis=1)
    return order[:, :-1]  # drop self (always last: inf distance)


def feature_trustworthiness(x: np.ndarray, y: np.ndarray, k: int) -> float:
    """Penalty-weighted agreement between feature-space and map k-NN sets.

    T_X(k) = 1 - 2/(N k (2N - 3k - 1)) sum_i sum_{j in U(i,k)} (r(i,j) - k)
    where U(i,k) are map neighbors of i that are not feature neighbors and
    r(i,j) is j's rank by feature-space distance from i (rank 1 = nearest,
    self excluded, ties by smaller index).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("x and y must have the same number of rows")
    if k < 1 or 3 * k + 1 >= 2 * n:
        raise ValueError(f"k={k} too large for N={n} (need 3k + 1 < 2N)")
    feat_order = _rank_orders(pairwise_sq_euclidean(x))
    map_order = _rank_orders(pairwise_sq_euclidean(y))
    ranks = np.empty((n, n), dtype=np.int64)
    rows = np.arange(n)[:, None]
    ranks[rows, feat_order] = np.arange(1, n)
    penalty = 0.0
    for i in range(n):
        s_x = set(feat_order[i, :k].tolist())
        for j in map_order[i, :k].tolist():
            if j not in s_x:
                penalty += ranks[i, j] - k
    return 1.0 - 2.0 * penalty / (n * k * (2 * n - 3 * k - 1))


def graph_trustworthiness(graph: Graph, y: np.ndarray, r: int) -> float:
    """Mean Jaccard similarity between r-hop graph neighborhoods and
    equally-sized map nearest-neighbor sets.

    Nodes whose r-hop neighborhood is empty contribute similarity 1.
    """
    if r < 1:
        raise ValueError(f"hop radius must be >= 1, got {r}")
    y = np.asarray(y, dtype=np.float64)
    n = graph.num_nodes
    if y.shape[0] != n:
        raise ValueError("y row count must match graph size")
    hops = bfs_shortest_paths(graph, np.arange(n), np.arange(n), hop_cap=r)
    map_order = _rank_orders(pairwise_sq_euclidean(y))
    total = 0.0
    for i in range(n):
        row = hops[i]
        s_g = np.flatnonzero((row <= r) & (np.arange(n) != i))
        k = s_g.size
        if k == 0:
            total += 1.0
            continue
        s_y = map_order[i, :k]
        inter = np.intersect1d(s_g, s_y, assume_unique=True).size
        total += inter / (2 * k - inter)  # |union| = |A| + |B| - |inter|
    return total / n


def distance_metrics(graph: Graph, knn_pairs: np.ndarray,
                     y: np.ndarray) -> tuple[float, float]:
    """Mean squared map distance over graph edges (P_G) and over feature-space
    k-NN pairs (P_X), both computed on the standardized map."""
    edges = graph.edge_pairs
    knn_pairs = np.asarray(knn_pairs, dtype=np.int64)
    if edges.shape[0] == 0:
        raise ValueError("graph has no edges")
    if knn_pairs.shape[0] == 0:
        raise ValueError("empty k-NN pair set")
    s = standardize_map(y)
    diff_g = s[edges[:, 0]] - s[edges[:, 1]]
    diff_x = s[knn_pairs[:, 0]] - s[knn_pairs[:, 1]]
    p_g = float(np.mean(np.sum(diff_g * diff_g, axis=1)))
    p_x = float(np.mean(np.sum(diff_x * diff_x, axis=1)))
    return p_g, p_x


def knn_1_accuracy(y: np.ndarray, labels: np.ndarray, folds: int = DEFAULT_FOLDS,
                   seed: int = 0) -> float:
    """Mean k-fold generalization accuracy of a 1-nearest-neighbor classifier
    in the map. Folds are a seeded random partition; nearest-neighbor ties go
    to the smaller node index."""
    y = np.asarray(y, dtype=np.float64)
    labels = np.asarray(labels)
    n = y.shape[0]
    if labels.shape[0] != n:
        raise ValueError("labels must match y rows")
    if folds < 2:
        raise ValueError(f"folds must be >= 2, got {folds}")
    if n < folds:
        raise ValueError(f"need at least {folds} points for {folds} folds, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    accuracies = []
    for fold in np.array_split(perm, folds):
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        train_idx = np.flatnonzero(mask)  # ascending, so argmin ties pick smaller index
        d = pairwise_sq_euclidean(np.vstack([y[fold], y[train_idx]]))
        d_test_train = d[:fold.size, fold.size:]
        nearest = train_idx[np.argmin(d_test_train, axis=1)]
        accuracies.append(float(np.mean(labels[nearest] == labels[fold])))
    return float(np.mean(accuracies))


@dataclass
class MetricsReport:
    alpha: float | None
    t_feature: dict            # k -> T_X(k)
    t_graph: dict              # r -> T_G(r)
    p_graph: float
    p_feature: float
    knn_accuracy: float | None
    runtime_s: float

    @property
    def combined(self) -> float:
        return self.p_graph + self.p_feature

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "t_feature": {str(k): v for k, v in self.t_feature.items()},
            "t_graph": {str(r): v for r, v in self.t_graph.items()},
            "p_graph": self.p_graph,
            "p_feature": self.p_feature,
            "combined": self.combined,
            "knn_accuracy": self.knn_accuracy,
            "runtime_s": self.runtime_s,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MetricsReport":
        return cls(alpha=data["alpha"],
                   t_feature={int(k): v for k, v in data["t_feature"].items()},
                   t_graph={int(r): v for r, v in data["t_graph"].items()},
                   p_graph=data["p_graph"], p_feature=data["p_feature"],
                   knn_accuracy=data.get("knn_accuracy"),
                   runtime_s=data.get("runtime_s", 0.0))


def evaluate_layout(data: LabeledDataset, y: np.ndarray, alpha: float | None = None,
                    knn_k: int = DEFAULT_KNN_K, t_ks=DEFAULT_T_KS,
                    t_rs=DEFAULT_T_RS, folds: int = DEFAULT_FOLDS,
                    seed: int = 0) -> MetricsReport:
    """Full metric suite for one layout of the given dataset."""
    start = time.perf_counter()
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != data.graph.num_nodes:
        raise ValueError(f"layout has {y.shape[0]} rows for a graph of "
                         f"{data.graph.num_nodes} nodes")
    t_feature = {int(k): feature_trustworthiness(data.features, y, int(k))
                 for k in t_ks}
    t_graph = {int(r): graph_trustworthiness(data.graph, y, int(r))
               for r in t_rs}
    knn_pairs = knn_graph(data.features, knn_k)
    p_g, p_x = distance_metrics(data.graph, knn_pairs, y)
    accuracy = None
    if data.labels is not None:
        accuracy = knn_1_accuracy(y, data.labels, folds=folds, seed=seed)
    return MetricsReport(alpha=alpha, t_feature=t_feature, t_graph=t_graph,
                         p_graph=p_g, p_feature=p_x, knn_accuracy=accuracy,
                         runtime_s=time.perf_counter() - start)


@dataclass
class SweepResult:
    reports: list
    alpha_star: float
    embeddings: dict = field(default_factory=dict)   # alpha -> N x 2 layout


def alpha_sweep(data: LabeledDataset, cfg: TrainConfig, grid,
                knn_k: int = DEFAULT_KNN_K, t_ks=DEFAULT_T_KS,
                t_rs=DEFAULT_T_RS, folds: int = DEFAULT_FOLDS) -> SweepResult:
    """Train one model per alpha on the grid, evaluate each layout, and pick
    alpha* = argmin of P_G + P_X (ties toward smaller alpha).

    Each grid point gets a fresh init seeded from (cfg.seed, grid index), so
    sweeps are deterministic but runs do not share initialization. Training
    failures are re-raised annotated with the failing alpha.
    """
    grid = [float(a) for a in grid]
    if not grid:
        raise ValueError("alpha grid must be non-empty")
    if any(not 0.0 <= a <= 1.0 for a in grid):
        raise ValueError(f"alpha grid values must lie in [0, 1]: {grid}")
    reports = []
    embeddings = {}
    for i, a in enumerate(grid):
        run_seed = int(np.random.SeedSequence([cfg.seed, i]).generate_state(1)[0])
        cfg_a = replace(cfg, alpha=a, seed=run_seed)
        try:
            model, _ = train(data, cfg_a)
        except TrainingError as exc:
            raise TrainingError(f"alpha={a}: {exc}") from exc
        y = embed(model, data)
        embeddings[a] = y
        reports.append(evaluate_layout(data, y, alpha=a, knn_k=knn_k,
                                       t_ks=t_ks, t_rs=t_rs, folds=folds,
                                       seed=cfg.seed))
    best = min(range(len(grid)), key=lambda i: (reports[i].combined, grid[i]))
    return SweepResult(reports=reports, alpha_star=grid[best],
                       embeddings=embeddings)
