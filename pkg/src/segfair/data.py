"""Dataset ingestion and synthetic biased-graph generation.

On-disk schema: an edge list as text (one ``i j w`` per line) plus a single
node CSV with a header; the node index is implicit in the row order.  A
manifest (JSON) names the files and columns, carries optional expected
counts for validation, and owns any binarization thresholds so the loader
stays dataset-agnostic.  Feature min-max normalization is a single pass
applied at load when the manifest asks for it; the raw save/load round trip
is bit-exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .graph import WeightedGraph, build_graph

EDGE_FILE = "edges.txt"
NODE_FILE = "nodes.csv"


class DataError(ValueError):
    """File, schema, or manifest-validation failure."""


@dataclass(frozen=True)
class DatasetManifest:
    """Where a dataset lives and how to interpret its columns.

    ``label_threshold`` / ``sensitive_threshold``: when given, the column is
    binarized as value > threshold; otherwise it must already be 0/1.
    """

    name: str
    edge_file: str = EDGE_FILE
    feature_file: str = NODE_FILE
    label_column: str | None = "label"  # None: no labels (entropy-only graphs)
    sensitive_column: str = "sensitive"
    expected_nodes: int | None = None
    expected_edges: int | None = None
    expected_feature_dim: int | None = None
    label_threshold: float | None = None
    sensitive_threshold: float | None = None
    normalize_features: bool = False

    @classmethod
    def from_file(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            blob = json.loads(path.read_text())
        except FileNotFoundError:
            raise DataError(f"manifest file not found: {path}")
        except json.JSONDecodeError as e:
            raise DataError(f"manifest {path} is not valid JSON: {e}")
        try:
            return cls(**blob)
        except TypeError as e:
            raise DataError(f"manifest {path}: {e}")


def load_dataset(manifest: DatasetManifest, base_dir=".") -> WeightedGraph:
    """Load and validate a dataset described by its manifest."""
    base = Path(base_dir)
    edges = _read_edges(base / manifest.edge_file)
    header, rows = _read_node_csv(base / manifest.feature_file)
    for col in (manifest.label_column, manifest.sensitive_column):
        if col is not None and col not in header:
            raise DataError(
                f"{manifest.feature_file}: missing column {col!r} (header: {header})"
            )
    label_i = header.index(manifest.label_column) if manifest.label_column else None
    sens_i = header.index(manifest.sensitive_column)
    feat_is = [i for i in range(len(header)) if i not in (label_i, sens_i)]
    n = len(rows)
    features = rows[:, feat_is]
    if label_i is None:
        labels = np.zeros(n, dtype=np.int64)
    else:
        labels = _binarize(rows[:, label_i], manifest.label_threshold, manifest.label_column)
    sensitive = _binarize(
        rows[:, sens_i], manifest.sensitive_threshold, manifest.sensitive_column
    )
    if manifest.normalize_features and features.size:
        lo = features.min(axis=0)
        span = features.max(axis=0) - lo
        span[span == 0.0] = 1.0  # constant columns map to 0
        features = (features - lo) / span
    g = build_graph(n, edges, features=features, labels=labels, sensitive=sensitive)
    _check_expectation(manifest.expected_nodes, g.n, "nodes", manifest.name)
    _check_expectation(manifest.expected_edges, g.m, "edges", manifest.name)
    _check_expectation(
        manifest.expected_feature_dim, g.features.shape[1], "feature dim", manifest.name
    )
    return g


def _check_expectation(expected, got, what, name):
    if expected is not None and expected != got:
        raise DataError(f"dataset {name}: expected {expected} {what}, loaded {got}")


def _binarize(column, threshold, name) -> np.ndarray:
    if threshold is not None:
        return (column > threshold).astype(np.int64)
    values = np.unique(column)
    if not np.isin(values, (0.0, 1.0)).all():
        raise DataError(
            f"column {name!r} is not binary and no threshold was given"
            f" (values include {values[~np.isin(values, (0.0, 1.0))][0]})"
        )
    return column.astype(np.int64)


def _read_edges(path: Path):
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise DataError(f"edge file not found: {path}")
    edges = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'i j w', got {line!r}")
        try:
            edges.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError:
            raise DataError(f"{path}:{lineno}: could not parse {line!r}")
    return edges


def _read_node_csv(path: Path):
    try:
        f = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"feature file not found: {path}")
    with f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{lineno}: {len(row)} cells, header has {len(header)}"
                )
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell in {row}")
    if not rows:
        raise DataError(f"{path}: no node rows")
    return header, np.asarray(rows, dtype=np.float64)


def save_graph(directory, g: WeightedGraph) -> None:
    """Write a graph as the edge-list/CSV pair; floats round-trip exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / EDGE_FILE, "w") as f:
        for u, v, w in zip(g.edge_u, g.edge_v, g.weights):
            f.write(f"{u} {v} {w!r}\n")
    d = g.features.shape[1]
    with open(directory / NODE_FILE, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"feat_{i}" for i in range(d)] + ["label", "sensitive"])
        for i in range(g.n):
            row = [repr(float(x)) for x in g.features[i]]
            writer.writerow(row + [int(g.labels[i]), int(g.sensitive[i])])


def read_graph(directory, label_column="label", sensitive_column="sensitive") -> WeightedGraph:
    """Load a graph dir written by :func:`save_graph` (no normalization)."""
    manifest = DatasetManifest(
        name=str(directory),
        label_column=label_column,
        sensitive_column=sensitive_column,
    )
    return load_dataset(manifest, base_dir=directory)


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of the two-group stochastic block model generator."""

    n: int = 400
    group_split: float = 0.5
    label_group_correlation: float = 0.8
    homophily: float = 0.05
    heterophily: float = 0.005
    feature_dim: int = 8
    feature_signal: float = 0.5
    seed: int = 1

    def validate(self) -> None:
        if self.n < 2:
            raise DataError(f"need at least 2 nodes, got {self.n}")
        for name in ("group_split", "label_group_correlation", "homophily", "heterophily"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name} must be a probability, got {v}")
        if self.feature_dim < 1:
            raise DataError(f"feature_dim must be >= 1, got {self.feature_dim}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, blob: dict) -> "SynthSpec":
        try:
            spec = cls(**blob)
        except TypeError as e:
            raise DataError(f"synthetic spec: {e}")
        spec.validate()
        return spec


def generate_synthetic(spec: SynthSpec) -> WeightedGraph:
    """Two-block SBM with group-correlated labels and class-shifted features.

    Node labels equal the group-aligned label (group id) with probability
    ``label_group_correlation``; features are standard Gaussian shifted by
    ``feature_signal`` for the positive class.  Every node is guaranteed at
    least one incident edge (an isolated node draws one uniform partner) so
    the entropy formulas stay defined downstream.  Deterministic per seed.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    sensitive = np.ones(n, dtype=np.int64)
    order = rng.permutation(n)
    sensitive[order[: round(n * spec.group_split)]] = 0
    aligned = sensitive.copy()
    labels = np.where(rng.random(n) < spec.label_group_correlation, aligned, 1 - aligned)
    iu, ju = np.triu_indices(n, k=1)
    p_edge = np.where(sensitive[iu] == sensitive[ju], spec.homophily, spec.heterophily)
    picked = rng.random(iu.shape[0]) < p_edge
    eu, ev = iu[picked], ju[picked]
    degree = np.bincount(eu, minlength=n) + np.bincount(ev, minlength=n)
    extra = []
    for v in np.flatnonzero(degree == 0):
        partner = int(rng.integers(0, n - 1))
        if partner >= v:
            partner += 1
        extra.append((int(v), partner))
    edges = [(int(u), int(v), 1.0) for u, v in zip(eu, ev)]
    edges += [(u, v, 1.0) for u, v in extra]
    features = rng.standard_normal((n, spec.feature_dim))
    features += spec.feature_signal * labels[:, None]
    return build_graph(n, edges, features=features, labels=labels, sensitive=sensitive)


def random_weighted_graph(
    rng: np.random.Generator,
    n_low: int = 5,
    n_high: int = 30,
    edge_prob: float = 0.3,
    weight_low: float = 0.5,
    weight_high: float = 2.0,
) -> WeightedGraph:
    """One random graph for the gradient-verification suite.

    Rejection-samples until every node has an edge and both sensitive
    groups are nonempty, so the entropy assumptions hold by construction.
    """
    while True:
        n = int(rng.integers(n_low, n_high + 1))
        iu, ju = np.triu_indices(n, k=1)
        picked = rng.random(iu.shape[0]) < edge_prob
        sensitive = rng.integers(0, 2, size=n)
        eu, ev = iu[picked], ju[picked]
        if eu.shape[0] == 0 or sensitive.min() == sensitive.max():
            continue
        degree = np.bincount(eu, minlength=n) + np.bincount(ev, minlength=n)
        if (degree == 0).any():
            continue
        weights = rng.uniform(weight_low, weight_high, size=eu.shape[0])
        edges = [(int(u), int(v), float(w)) for u, v, w in zip(eu, ev, weights)]
        return build_graph(n, edges, sensitive=sensitive)
