"""The four parameterized components: GCN encoder, projector, classifier,
and the per-edge structure learner.

The encoder propagates with the symmetrically normalized adjacency
(self-loops added), recomputed from the current edge weights on every
forward pass so gradients reach the structure learner's logits.  The
classifier always consumes anchor-view representations; the projector
feeds the contrastive loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .autodiff import Tape, Value
from .graph import WeightedGraph, reweight

HIDDEN_DIM = 64
PROJ_DIM = 32
CLF_HIDDEN = 32

# sigmoid(7) ~= 0.999089: the learner view starts within 1e-3 of the
# original unit-weight graph.
INIT_LOGIT = 7.0


@dataclass
class GCNEncoder:
    """Two-layer GCN, hidden size 64: H = A_hat @ relu(A_hat @ X @ w1) @ w2."""

    w1: Value
    w2: Value


@dataclass
class Projector:
    """2-layer MLP 64 -> 32 -> 32 with ReLU between layers."""

    w1: Value
    b1: Value
    w2: Value
    b2: Value


@dataclass
class Classifier:
    """2-layer MLP 64 -> 32 -> 1, ReLU then sigmoid output in (0, 1)."""

    w1: Value
    b1: Value
    w2: Value
    b2: Value


@dataclass
class StructureLearner:
    """One trainable logit per undirected edge; weights are sigmoid(logits)."""

    logits: Value  # (m, 1)


@dataclass
class ModelParams:
    encoder: GCNEncoder
    projector: Projector
    classifier: Classifier
    learner: StructureLearner

    def trainable(self) -> list[Value]:
        e, p, c = self.encoder, self.projector, self.classifier
        return [e.w1, e.w2, p.w1, p.b1, p.w2, p.b2, c.w1, c.b1, c.w2, c.b2, self.learner.logits]

    def snapshot(self) -> list[np.ndarray]:
        return [v.data.copy() for v in self.trainable()]

    def restore(self, arrays) -> None:
        for v, a in zip(self.trainable(), arrays):
            v.data[...] = a


def _xavier(rng, rows, cols) -> np.ndarray:
    limit = np.sqrt(6.0 / (rows + cols))
    return rng.uniform(-limit, limit, size=(rows, cols))


def init_model(rng: np.random.Generator, feature_dim: int, n_edges: int) -> ModelParams:
    enc = GCNEncoder(
        w1=Value.param(_xavier(rng, feature_dim, HIDDEN_DIM)),
        w2=Value.param(_xavier(rng, HIDDEN_DIM, HIDDEN_DIM)),
    )
    proj = Projector(
        w1=Value.param(_xavier(rng, HIDDEN_DIM, PROJ_DIM)),
        b1=Value.param(np.zeros((1, PROJ_DIM))),
        w2=Value.param(_xavier(rng, PROJ_DIM, PROJ_DIM)),
        b2=Value.param(np.zeros((1, PROJ_DIM))),
    )
    clf = Classifier(
        w1=Value.param(_xavier(rng, HIDDEN_DIM, CLF_HIDDEN)),
        b1=Value.param(np.zeros((1, CLF_HIDDEN))),
        w2=Value.param(_xavier(rng, CLF_HIDDEN, 1)),
        b2=Value.param(np.zeros((1, 1))),
    )
    learner = StructureLearner(logits=Value.param(np.full((n_edges, 1), INIT_LOGIT)))
    return ModelParams(encoder=enc, projector=proj, classifier=clf, learner=learner)


def normalize_adjacency(g: WeightedGraph) -> np.ndarray:
    """A_hat = D~^{-1/2} (A + I) D~^{-1/2} with D~ the degree matrix of A + I."""
    return normalize_dense(g.dense_adjacency())


def normalize_dense(a: np.ndarray) -> np.ndarray:
    a_tilde = a + np.eye(a.shape[0])
    d_inv_sqrt = a_tilde.sum(axis=1) ** -0.5
    return d_inv_sqrt[:, None] * a_tilde * d_inv_sqrt[None, :]


def normalized_adjacency_value(tape: Tape, weights: Value, g: WeightedGraph) -> Value:
    """Tape version of :func:`normalize_adjacency` over live edge weights."""
    a = tape.symmetric_adjacency(weights, g.edge_u, g.edge_v, g.n)
    a_tilde = tape.add(a, np.eye(g.n))
    deg = tape.sum(a_tilde, axis=1)  # (n, 1); >= 1 thanks to self-loops
    d_inv_sqrt = tape.exp(tape.scale(tape.log(deg), -0.5))
    return tape.mul(tape.mul(a_tilde, d_inv_sqrt), tape.transpose(d_inv_sqrt))


class LearnerView(NamedTuple):
    graph: WeightedGraph  # weights mirrored for entropy bookkeeping
    weights: Value  # (m, 1) tape node carrying the gradients


def learner_view(tape: Tape, learner: StructureLearner, g: WeightedGraph) -> LearnerView:
    """The sigmoid-weighted view of ``g``; weights stay in (0, 1) on the tape."""
    if learner.logits.shape != (g.m, 1):
        raise ValueError(
            f"learner has {learner.logits.shape[0]} logits, graph has {g.m} edges"
        )
    weights = tape.sigmoid(learner.logits)
    return LearnerView(graph=reweight(g, weights.data[:, 0]), weights=weights)


def encode(tape: Tape, enc: GCNEncoder, adjacency, features) -> Value:
    """Shared-encoder forward pass; ``adjacency`` is a Value or a constant."""
    a_hat = tape.constant(adjacency)
    x = tape.constant(features)
    if x.shape[1] != enc.w1.shape[0]:
        raise ValueError(f"feature dim {x.shape[1]} != encoder input {enc.w1.shape[0]}")
    h1 = tape.relu(tape.matmul(tape.matmul(a_hat, x), enc.w1))
    return tape.matmul(tape.matmul(a_hat, h1), enc.w2)


def project(tape: Tape, proj: Projector, h: Value) -> Value:
    z1 = tape.relu(tape.add(tape.matmul(h, proj.w1), proj.b1))
    return tape.add(tape.matmul(z1, proj.w2), proj.b2)


def classify(tape: Tape, clf: Classifier, h: Value) -> Value:
    """Positive-class probabilities, shape (n, 1)."""
    z1 = tape.relu(tape.add(tape.matmul(h, clf.w1), clf.b1))
    return tape.sigmoid(tape.add(tape.matmul(z1, clf.w2), clf.b2))


def save_checkpoint(path, params: ModelParams, anchor_weights: np.ndarray, config_hash: str) -> None:
    """Versioned binary blob: all weight matrices, edge logits, anchor weights."""
    arrays = {f"param_{i}": a for i, a in enumerate(params.snapshot())}
    np.savez(
        path,
        version=np.int64(1),
        config_hash=np.str_(config_hash),
        anchor_weights=anchor_weights,
        n_params=np.int64(len(arrays)),
        **arrays,
    )


def load_checkpoint(path, params: ModelParams) -> tuple[np.ndarray, str]:
    """Restore ``params`` in place; returns (anchor weights, config hash)."""
    with np.load(path) as blob:
        version = int(blob["version"])
        if version != 1:
            raise ValueError(f"unsupported checkpoint version {version}")
        arrays = [blob[f"param_{i}"] for i in range(int(blob["n_params"]))]
        params.restore(arrays)
        return blob["anchor_weights"], str(blob["config_hash"])
