"""Losses, the joint objective, structure bootstrapping, and the fit loop.

Sign conventions: the task loss is standard negative-log-likelihood BCE;
the contrastive term is -log(softmax) so minimizing it maximizes cross-view
agreement; the entropy loss is the negative entropy, entering the total as
``task + lambda1 * contrastive + lambda2 * entropy_loss`` so that
minimizing the total maximizes the partition entropy.

The task loss is averaged over training nodes only; the contrastive and
entropy terms use the full graph.  The anchor view starts at the original
graph and, unless bootstrapping is ablated, moves once per epoch (after
the optimizer step) by an exponential moving average toward the learner's
weights.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import fairness
from .autodiff import Adam, Tape, Value
from .entropy import LN2, EntropyDomainError, two_dim_se
from .fairness import PredictionSet
from .graph import WeightedGraph, partition_by_sensitive, reweight
from .model import (
    ModelParams,
    classify,
    encode,
    init_model,
    learner_view,
    normalize_dense,
    normalized_adjacency_value,
    project,
)

ABLATIONS = ("full", "no_gsl", "no_cl", "no_sbm")

# Named training variants used by the experiment harness: the vanilla
# baseline is the exact reduction of fit() to plain GCN training.
VARIANT_PRESETS = {
    "vanilla": {"lambda1": 0.0, "lambda2": 0.0, "ablation": "no_sbm"},
    "full": {"ablation": "full"},
    "no_gsl": {"ablation": "no_gsl"},
    "no_cl": {"ablation": "no_cl"},
    "no_sbm": {"ablation": "no_sbm"},
}

# GraphCL-style random view used when the structure learner is ablated.
AUG_EDGE_DROP = 0.2
AUG_FEATURE_MASK = 0.2
AUG_NODE_DROP = 0.1


class ConfigError(ValueError):
    """A training-configuration field is out of its valid range."""


class TrainingError(RuntimeError):
    """Training aborted (e.g. a loss went non-finite)."""


@dataclass(frozen=True)
class TrainConfig:
    """Run configuration; field-for-field mirror of the config file."""

    lambda1: float = 0.5
    lambda2: float = 1.0
    tau: float = 0.9999
    temperature: float = 0.5
    lr: float = 0.001
    weight_decay: float = 1e-5
    epochs: int = 300
    seed: int = 0
    split: tuple = (0.5, 0.25, 0.25)
    ablation: str = "full"

    def validate(self) -> None:
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError(f"lambda1/lambda2 must be >= 0, got {self.lambda1}, {self.lambda2}")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {self.tau}")
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if len(self.split) != 3 or abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split must be three fractions summing to 1, got {self.split}")
        if any(f < 0 for f in self.split):
            raise ConfigError(f"split fractions must be nonnegative, got {self.split}")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"ablation must be one of {ABLATIONS}, got {self.ablation!r}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["split"] = list(self.split)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        d = dict(d)
        if "split" in d:
            d["split"] = tuple(d["split"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    def with_overrides(self, **kwargs) -> "TrainConfig":
        cfg = replace(self, **kwargs)
        cfg.validate()
        return cfg


# -- losses ----------------------------------------------------------------


def bce_loss(tape: Tape, scores: Value, labels: np.ndarray, indices=None) -> Value:
    """Mean binary cross-entropy of (n, 1) scores, optionally on a node subset."""
    if not np.isfinite(scores.data).all():
        raise TrainingError("non-finite classifier score")
    y = np.asarray(labels, dtype=np.float64)
    if indices is not None:
        scores = tape.gather_rows(scores, indices)
        y = y[indices]
    y = y.reshape(-1, 1)
    log_p = tape.log(scores)
    log_q = tape.log(tape.sub(1.0, scores))
    ll = tape.add(tape.mul(y, log_p), tape.mul(1.0 - y, log_q))
    return tape.scale(tape.mean(ll), -1.0)


def nt_xent(tape: Tape, z_a: Value, z_l: Value, temperature: float) -> Value:
    """Symmetric temperature-scaled cross-entropy over cosine similarities.

    For each node the positive pair is its own row in the other view; the
    softmax denominator runs over the n cross-view pairs of that direction.
    """
    if z_a.shape != z_l.shape:
        raise ValueError(f"view shapes differ: {z_a.shape} vs {z_l.shape}")
    for name, z in (("anchor", z_a), ("learner", z_l)):
        norms = np.linalg.norm(z.data, axis=1)
        if (norms == 0.0).any():
            row = int(np.flatnonzero(norms == 0.0)[0])
            raise ValueError(f"zero-norm row {row} in {name} projections; cosine undefined")
    n = z_a.shape[0]
    sim = tape.matmul(tape.normalize_rows(z_a), tape.transpose(tape.normalize_rows(z_l)))
    logits = tape.scale(sim, 1.0 / temperature)
    diag_sum = tape.sum(tape.mul(logits, np.eye(n)))
    lse_ab = _logsumexp_rows(tape, logits)
    lse_ba = _logsumexp_rows(tape, tape.transpose(logits))
    total = tape.sub(tape.add(tape.sum(lse_ab), tape.sum(lse_ba)), tape.scale(diag_sum, 2.0))
    return tape.scale(total, 1.0 / (2.0 * n))


def _logsumexp_rows(tape: Tape, x: Value) -> Value:
    # The detached row max is an exact shift: lse(x) = m + lse(x - m).
    shift = x.data.max(axis=1, keepdims=True)
    e = tape.exp(tape.sub(x, shift))
    return tape.add(tape.log(tape.sum(e, axis=1)), shift)


class _EntropyConstants:
    """Topology/partition constants reused by every se_loss evaluation."""

    def __init__(self, g: WeightedGraph, p):
        inc = np.zeros((g.n, g.m))
        inc[g.edge_u, np.arange(g.m)] = 1.0
        inc[g.edge_v, np.arange(g.m)] = 1.0
        self.incidence = inc
        self.crossing = p.crossing.astype(np.float64).reshape(g.m, 1)
        self.masks = [(p.membership == i).astype(np.float64).reshape(g.n, 1) for i in (0, 1)]
        for i in (0, 1):
            if p.volumes[i] <= 0.0:
                raise EntropyDomainError(
                    f"vol(block {i}) > 0 is violated; entropy loss undefined"
                )


def se_loss(tape: Tape, weights: Value, constants: _EntropyConstants) -> Value:
    """Negative partition entropy (bits) of the live edge weights.

    Backward through the tape reproduces the closed-form per-edge gradient
    composed with the sigmoid derivative on the logits.
    """
    d = tape.matmul(constants.incidence, weights)  # (n, 1) degrees
    if (d.data <= 0.0).any():
        v = int(np.flatnonzero(d.data[:, 0] <= 0.0)[0])
        raise EntropyDomainError(f"node {v} has zero degree under the learner weights")
    vol_total = tape.sum(d)
    cut = tape.sum(tape.mul(constants.crossing, weights))
    h_nats = None
    for mask in constants.masks:
        vol_i = tape.sum(tape.mul(mask, d))
        ratio = tape.div(d, vol_i)
        plogp = tape.mul(ratio, tape.log(ratio))
        intra = tape.scale(tape.sum(tape.mul(mask, plogp)), -1.0)
        term = tape.sub(
            tape.mul(tape.div(vol_i, vol_total), intra),
            tape.mul(tape.div(cut, vol_total), tape.log(tape.div(vol_i, vol_total))),
        )
        h_nats = term if h_nats is None else tape.add(h_nats, term)
    return tape.scale(h_nats, -1.0 / LN2)


# -- splits and bootstrapping ------------------------------------------------


def split_nodes(labels, fractions=(0.5, 0.25, 0.25), seed: int = 0):
    """Disjoint covering (train, val, test) index sets, label-stratified.

    Global sizes follow the fractions exactly (largest-remainder rounding);
    within each label class the allocation is proportional to within +-1.
    Deterministic for a given seed.
    """
    labels = np.asarray(labels)
    n = labels.shape[0]
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must be three values summing to 1, got {fractions}")
    targets = _largest_remainder(n, fractions)
    capacity = targets.copy()
    rng = np.random.default_rng(seed)
    parts = [[], [], []]
    classes = sorted(np.unique(labels).tolist())
    allocations = []
    for cls in classes:
        idx = np.flatnonzero(labels == cls)
        count = idx.shape[0]
        exact = count * np.asarray(fractions)
        base = np.floor(exact).astype(np.int64)
        allocations.append((idx, base, exact - base))
        capacity -= base
    for idx, base, remainder in allocations:
        extras = idx.shape[0] - int(base.sum())
        take = base.copy()
        for _ in range(extras):
            order = sorted(range(3), key=lambda s: (-remainder[s], s))
            chosen = next(s for s in order if capacity[s] > 0)
            take[chosen] += 1
            capacity[chosen] -= 1
            remainder[chosen] = -1.0
        shuffled = idx.copy()
        rng.shuffle(shuffled)
        bounds = np.cumsum(take)
        parts[0].append(shuffled[: bounds[0]])
        parts[1].append(shuffled[bounds[0] : bounds[1]])
        parts[2].append(shuffled[bounds[1] : bounds[2]])
    return tuple(np.sort(np.concatenate(p)).astype(np.int64) for p in parts)


def _largest_remainder(n: int, fractions) -> np.ndarray:
    exact = n * np.asarray(fractions, dtype=np.float64)
    base = np.floor(exact).astype(np.int64)
    leftover = n - int(base.sum())
    order = np.lexsort((np.arange(len(fractions)), -(exact - base)))
    base[order[:leftover]] += 1
    return base


def bootstrap_update(anchor_weights: np.ndarray, learner_weights: np.ndarray, tau: float) -> np.ndarray:
    """A_anchor <- tau * A_anchor + (1 - tau) * A_learner, outside the tape."""
    if anchor_weights.shape != learner_weights.shape:
        raise ValueError(
            f"weight vectors misaligned: {anchor_weights.shape} vs {learner_weights.shape}"
        )
    if not 0.0 <= tau <= 1.0:
        raise ConfigError(f"tau must be in [0, 1], got {tau}")
    return tau * anchor_weights + (1.0 - tau) * learner_weights


# -- reports and state --------------------------------------------------------

METRIC_COLUMNS = ("acc", "auc", "f1", "fpr", "d_sp", "d_eo")
REPORT_COLUMNS = METRIC_COLUMNS + (
    "sp_eo_bound",
    "fpr_bound",
    "h",
    "h_max",
    "gap",
    "fpr_shortcut",
)


@dataclass(frozen=True)
class MetricsReport:
    """Test-set metrics plus entropy quantities of the trained structure."""

    acc: float
    auc: float
    f1: float
    fpr: float
    d_sp: float
    d_eo: float
    sp_eo_bound: float
    fpr_bound: float
    h: float
    h_max: float
    gap: float
    fpr_shortcut: bool
    best_epoch: int

    def csv_row(self) -> str:
        cells = [f"{getattr(self, c) * 100.0:.2f}" for c in METRIC_COLUMNS]
        cells += [f"{self.sp_eo_bound:.6f}", f"{self.fpr_bound:.6f}"]
        cells += [f"{self.h:.6f}", f"{self.h_max:.6f}", f"{self.gap:.6f}"]
        cells += ["1" if self.fpr_shortcut else "0"]
        return ",".join(cells)

    @staticmethod
    def csv_header() -> str:
        return ",".join(REPORT_COLUMNS)


@dataclass
class EpochRecord:
    epoch: int
    loss_task: float
    loss_cont: float
    loss_se: float
    loss_total: float
    h_learner: float
    val_acc: float


@dataclass
class TrainState:
    params: ModelParams
    anchor_weights: np.ndarray
    optimizer: Adam
    epoch: int
    history: list = field(default_factory=list)
    train_idx: np.ndarray | None = None
    val_idx: np.ndarray | None = None
    test_idx: np.ndarray | None = None
    best_epoch: int = -1
    best_val_acc: float = -np.inf


# -- the fit loop -------------------------------------------------------------


def fit(g: WeightedGraph, cfg: TrainConfig) -> tuple[TrainState, MetricsReport]:
    """Train the full pipeline (or an ablation) and evaluate on test nodes.

    Each epoch builds the learner view, encodes both views with the shared
    encoder, combines the three losses on the tape, takes one Adam step and
    then applies the bootstrap update.  Model selection keeps the epoch with
    the best validation accuracy; entropy quantities in the report come from
    the final learner view (the anchor view when the learner is ablated).
    """
    cfg.validate()
    if len(np.unique(g.sensitive)) < 2:
        raise ValueError("graph must contain both sensitive groups")
    if len(np.unique(g.labels)) < 2:
        raise ValueError("graph must contain both label classes")
    p = partition_by_sensitive(g)
    rng = np.random.default_rng(cfg.seed)
    params = init_model(rng, g.features.shape[1], g.m)
    train_idx, val_idx, test_idx = split_nodes(g.labels, cfg.split, cfg.seed)

    use_gsl = cfg.ablation != "no_gsl"
    use_bootstrap = cfg.ablation in ("full", "no_cl")
    lambda1 = 0.0 if cfg.ablation == "no_cl" else cfg.lambda1
    lambda2 = cfg.lambda2 if use_gsl else 0.0

    trainable = [params.encoder.w1, params.encoder.w2]
    clf = params.classifier
    trainable += [clf.w1, clf.b1, clf.w2, clf.b2]
    if lambda1 > 0.0:
        proj = params.projector
        trainable += [proj.w1, proj.b1, proj.w2, proj.b2]
    if use_gsl and (lambda1 > 0.0 or lambda2 > 0.0):
        # with both loss paths off the logits receive no gradient and are
        # left out so weight decay cannot drift an unused learner
        trainable.append(params.learner.logits)
    optimizer = Adam(trainable, lr=cfg.lr, weight_decay=cfg.weight_decay)

    se_constants = _EntropyConstants(g, p) if lambda2 > 0.0 else None
    if lambda2 > 0.0 and (g.degrees <= 0.0).any():
        v = int(np.flatnonzero(g.degrees <= 0.0)[0])
        raise EntropyDomainError(f"node {v} is isolated; entropy loss undefined")

    state = TrainState(
        params=params,
        anchor_weights=g.weights.copy(),
        optimizer=optimizer,
        epoch=0,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
    )
    anchor_hat_cache = None  # valid while the anchor weights do not move
    best_arrays = params.snapshot()
    best_anchor = state.anchor_weights.copy()

    for epoch in range(cfg.epochs + 1):
        final_eval = epoch == cfg.epochs
        tape = Tape()
        if anchor_hat_cache is None:
            anchor_graph = reweight(g, state.anchor_weights)
            anchor_hat_cache = normalize_dense(anchor_graph.dense_adjacency())
        h_anchor = encode(tape, params.encoder, anchor_hat_cache, g.features)
        scores = classify(tape, params.classifier, h_anchor)
        val_acc = float(
            ((scores.data[val_idx, 0] >= 0.5).astype(np.int64) == g.labels[val_idx]).mean()
        )

        loss_task = bce_loss(tape, scores, g.labels, train_idx)
        view = learner_view(tape, params.learner, g) if use_gsl else None
        loss_se = se_loss(tape, view.weights, se_constants) if lambda2 > 0.0 else None
        loss_cont = None
        if lambda1 > 0.0:
            if use_gsl:
                hat_other = normalized_adjacency_value(tape, view.weights, g)
                feats_other = g.features
            else:
                hat_other, feats_other = _augmented_view(rng, g)
            h_other = encode(tape, params.encoder, hat_other, feats_other)
            z_anchor = project(tape, params.projector, h_anchor)
            z_other = project(tape, params.projector, h_other)
            loss_cont = nt_xent(tape, z_anchor, z_other, cfg.temperature)

        total = loss_task
        if loss_cont is not None:
            total = tape.add(total, tape.scale(loss_cont, lambda1))
        if loss_se is not None:
            total = tape.add(total, tape.scale(loss_se, lambda2))

        record = EpochRecord(
            epoch=epoch,
            loss_task=loss_task.item(),
            loss_cont=loss_cont.item() if loss_cont is not None else 0.0,
            loss_se=loss_se.item() if loss_se is not None else 0.0,
            loss_total=total.item(),
            h_learner=-loss_se.item() if loss_se is not None else np.nan,
            val_acc=val_acc,
        )
        if not np.isfinite(record.loss_total):
            raise TrainingError(
                f"non-finite loss at epoch {epoch}: task={record.loss_task},"
                f" cont={record.loss_cont}, se={record.loss_se}"
            )
        if val_acc > state.best_val_acc:
            state.best_val_acc = val_acc
            state.best_epoch = epoch
            best_arrays = params.snapshot()
            best_anchor = state.anchor_weights.copy()
        if final_eval:
            break
        state.history.append(record)
        tape.backward(total)
        optimizer.step()
        optimizer.zero_grad()
        if use_bootstrap:
            state.anchor_weights = bootstrap_update(
                state.anchor_weights, view.weights.data[:, 0], cfg.tau
            )
            anchor_hat_cache = None
        state.epoch = epoch + 1

    # Entropy quantities of the final structure (learner view, or the anchor
    # view when the learner is ablated).
    if use_gsl:
        final_weights = _sigmoid(params.learner.logits.data[:, 0])
        entropy_graph = reweight(g, final_weights)
    else:
        entropy_graph = reweight(g, state.anchor_weights)
    entropy_report = two_dim_se(entropy_graph, partition_by_sensitive(entropy_graph))

    params.restore(best_arrays)
    state.anchor_weights = best_anchor
    report = _final_report(g, state, cfg, entropy_report)
    return state, report


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _augmented_view(rng, g: WeightedGraph):
    """Random edge-dropout / feature-mask / node-drop view of the graph."""
    weights = np.where(rng.random(g.m) < AUG_EDGE_DROP, 0.0, g.weights)
    feats = np.where(rng.random(g.features.shape) < AUG_FEATURE_MASK, 0.0, g.features)
    dropped = rng.random(g.n) < AUG_NODE_DROP
    weights = np.where(dropped[g.edge_u] | dropped[g.edge_v], 0.0, weights)
    feats[dropped] = 0.0
    return normalize_dense(reweight(g, weights).dense_adjacency()), feats


def predict_scores(params: ModelParams, g: WeightedGraph, anchor_weights: np.ndarray) -> np.ndarray:
    """Positive-class probabilities of the classifier on the anchor view."""
    tape = Tape()
    a_hat = normalize_dense(reweight(g, anchor_weights).dense_adjacency())
    h = encode(tape, params.encoder, a_hat, g.features)
    return classify(tape, params.classifier, h).data[:, 0]


def _final_report(g, state: TrainState, cfg, entropy_report) -> MetricsReport:
    scores = predict_scores(state.params, g, state.anchor_weights)
    val_hard = (scores[state.val_idx] >= 0.5).astype(np.int64)
    shortcut = bool(val_hard.min() == val_hard.max())
    test = PredictionSet(
        scores[state.test_idx], g.labels[state.test_idx], g.sensitive[state.test_idx]
    )
    neg_ratio = float((g.labels == 0).mean())
    fr = fairness.evaluate(test, entropy_report.gap, neg_ratio)
    return MetricsReport(
        acc=fr.acc,
        auc=fr.auc,
        f1=fr.f1,
        fpr=fr.fpr,
        d_sp=fr.d_sp,
        d_eo=fr.d_eo,
        sp_eo_bound=fr.sp_bound,
        fpr_bound=fr.fpr_bound,
        h=entropy_report.h,
        h_max=entropy_report.h_max,
        gap=entropy_report.gap,
        fpr_shortcut=shortcut,
        best_epoch=state.best_epoch,
    )
