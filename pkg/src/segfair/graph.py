"""Weighted undirected graphs and their sensitive-attribute partition.

The graph is stored as a canonical edge list (``u < v``, lexicographically
sorted) with a parallel weight vector, so that per-edge trainable parameters
elsewhere in the package stay aligned with a stable edge indexing.  Instances
are immutable after construction; every operation returns a new graph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GraphError(ValueError):
    """Inconsistent graph construction input (self-loop, duplicate, ...)."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class WeightedGraph:
    """Undirected graph with nonnegative edge weights and node attributes.

    Attributes:
        n: node count.
        edge_u, edge_v: endpoint arrays of the canonical edge list (u < v).
        weights: per-edge nonnegative weights, aligned with the edge list.
        features: (n, d) feature matrix.
        labels: (n,) binary task labels.
        sensitive: (n,) binary group ids.
        degrees: cached weighted degrees, d_v = sum of incident weights.
    """

    n: int
    edge_u: np.ndarray
    edge_v: np.ndarray
    weights: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    sensitive: np.ndarray
    degrees: np.ndarray

    @property
    def m(self) -> int:
        return self.weights.shape[0]

    @property
    def volume(self) -> float:
        """vol(G) = sum of degrees = 2 * total edge weight."""
        return float(self.degrees.sum())

    def dense_adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        a[self.edge_u, self.edge_v] = self.weights
        a[self.edge_v, self.edge_u] = self.weights
        return a

    def neighbors(self, v: int) -> np.ndarray:
        """Neighbor ids of node v (from the adjacency index)."""
        out = np.concatenate(
            [self.edge_v[self.edge_u == v], self.edge_u[self.edge_v == v]]
        )
        out.sort()
        return out


def _compute_degrees(n, edge_u, edge_v, weights) -> np.ndarray:
    deg = np.bincount(edge_u, weights=weights, minlength=n)
    deg += np.bincount(edge_v, weights=weights, minlength=n)
    return deg


def build_graph(n, edges, features=None, labels=None, sensitive=None) -> WeightedGraph:
    """Validate and canonicalize a graph.

    ``edges`` is an iterable of (i, j, w) with 0 <= i, j < n, i != j and
    w >= 0.  Endpoints are normalized to i < j and the list is sorted; the
    original unweighted graph is expressed with weight 1.0 per edge.

    Raises:
        GraphError: naming the offending entry for self-loops, duplicate
            pairs, out-of-range indices, negative weights, or node-attribute
            length mismatches.
    """
    if n < 0:
        raise GraphError(f"node count must be nonnegative, got {n}")
    edges = list(edges)
    m = len(edges)
    edge_u = np.empty(m, dtype=np.int64)
    edge_v = np.empty(m, dtype=np.int64)
    weights = np.empty(m, dtype=np.float64)
    for k, (i, j, w) in enumerate(edges):
        if i == j:
            raise GraphError(f"self-loop ({i}, {j}) at edge {k}")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) references a node outside [0, {n})")
        if w < 0:
            raise GraphError(f"negative weight {w} on edge ({i}, {j})")
        edge_u[k], edge_v[k] = (i, j) if i < j else (j, i)
        weights[k] = w
    order = np.lexsort((edge_v, edge_u))
    edge_u, edge_v, weights = edge_u[order], edge_v[order], weights[order]
    if m > 1:
        dup = (np.diff(edge_u) == 0) & (np.diff(edge_v) == 0)
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise GraphError(f"duplicate edge ({edge_u[k]}, {edge_v[k]})")

    if features is None:
        features = np.zeros((n, 0))
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] != n:
        raise GraphError(
            f"feature matrix has {features.shape[0] if features.ndim == 2 else '?'}"
            f" rows, expected {n}"
        )
    labels = _node_vector(labels, n, "labels")
    sensitive = _node_vector(sensitive, n, "sensitive")

    degrees = _compute_degrees(n, edge_u, edge_v, weights)
    return WeightedGraph(
        n=n,
        edge_u=_freeze(edge_u),
        edge_v=_freeze(edge_v),
        weights=_freeze(weights),
        features=_freeze(features),
        labels=_freeze(labels),
        sensitive=_freeze(sensitive),
        degrees=_freeze(degrees),
    )


def _node_vector(values, n, name) -> np.ndarray:
    if values is None:
        return np.zeros(n, dtype=np.int64)
    values = np.asarray(values, dtype=np.int64)
    if values.shape != (n,):
        raise GraphError(f"{name} has length {values.shape}, expected ({n},)")
    if not np.isin(values, (0, 1)).all():
        bad = values[~np.isin(values, (0, 1))][0]
        raise GraphError(f"{name} must be binary, found {bad}")
    return values


def reweight(g: WeightedGraph, new_weights) -> WeightedGraph:
    """Same topology with new weights; degree caches are refreshed."""
    new_weights = np.asarray(new_weights, dtype=np.float64)
    if new_weights.shape != (g.m,):
        raise GraphError(
            f"weight vector has shape {new_weights.shape}, expected ({g.m},)"
        )
    if (new_weights < 0).any():
        k = int(np.flatnonzero(new_weights < 0)[0])
        raise GraphError(
            f"negative weight {new_weights[k]} on edge ({g.edge_u[k]}, {g.edge_v[k]})"
        )
    new_weights = new_weights.copy()
    degrees = _compute_degrees(g.n, g.edge_u, g.edge_v, new_weights)
    return WeightedGraph(
        n=g.n,
        edge_u=g.edge_u,
        edge_v=g.edge_v,
        weights=_freeze(new_weights),
        features=g.features,
        labels=g.labels,
        sensitive=g.sensitive,
        degrees=_freeze(degrees),
    )


@dataclass(frozen=True)
class SensitivePartition:
    """Two-block node partition by sensitive attribute, with cached sums.

    ``volumes[i]`` is the sum of member degrees and ``cuts[i]`` the total
    weight of edges with exactly one endpoint in block i.  For a two-block
    partition both cuts are equal (each crossing edge touches both blocks).
    """

    blocks: tuple
    sizes: np.ndarray
    volumes: np.ndarray
    cuts: np.ndarray
    membership: np.ndarray
    crossing: np.ndarray

    @property
    def n(self) -> int:
        return self.membership.shape[0]


def partition_by_sensitive(g: WeightedGraph) -> SensitivePartition:
    """Split nodes into the two sensitive groups and cache volumes/cuts.

    An empty block is allowed here (vol = cut = 0); entropy operations
    reject it downstream.
    """
    member = g.sensitive.astype(np.int64)
    blocks = (np.flatnonzero(member == 0), np.flatnonzero(member == 1))
    sizes = np.array([blocks[0].size, blocks[1].size], dtype=np.int64)
    volumes = np.array([g.degrees[blocks[0]].sum(), g.degrees[blocks[1]].sum()])
    crossing = member[g.edge_u] != member[g.edge_v]
    cut = float(g.weights[crossing].sum())
    cuts = np.array([cut, cut])
    return SensitivePartition(
        blocks=blocks,
        sizes=_freeze(sizes),
        volumes=_freeze(volumes),
        cuts=_freeze(cuts),
        membership=_freeze(member),
        crossing=_freeze(crossing),
    )
