"""Two-dimensional structural entropy over the sensitive partition.

The entropy of a weighted graph under the two-block partition combines a
within-group degree-entropy term with a cross-partition cut term, both in
bits (base-2 logs):

    h = - sum_i (vol_i / vol) * sum_{v in block i} (d_v / vol_i) * log2(d_v / vol_i)
        - sum_i (cut_i / vol) * log2(vol_i / vol)

Its maximum over graphs with this partition, reached by a fully random
graph with uniform degrees, is

    h_max = log2(n) - sum_i (|block i| / n) * log2(|block i| / n),

and the gap ``h_max - h`` (clamped at zero) drives the fairness and
false-positive-rate bound calculators in :mod:`segfair.fairness`.

Alongside the closed-form per-edge gradient of h, this module ships an
independent central finite-difference oracle used by the verification
harness.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .graph import SensitivePartition, WeightedGraph, partition_by_sensitive, reweight

logger = logging.getLogger(__name__)

LN2 = float(np.log(2.0))

# Logit clamp for the sigmoid reparameterization used by the ascent loop;
# sigmoid(7) ~= 0.999089 keeps a unit-weight start within 1e-3 of 1.0.
LOGIT_CLIP = 7.0


class EntropyDomainError(ValueError):
    """An entropy-formula assumption (positive volumes/degrees) is violated."""


@dataclass(frozen=True)
class EntropyReport:
    """2D structural entropy in bits, split into its two summands.

    ``h = intra_term + inter_term``; ``gap = max(0, h_max - h)``.
    """

    h: float
    intra_term: float
    inter_term: float
    h_max: float
    gap: float


@dataclass(frozen=True)
class EdgeGradient:
    """Per-edge entropy gradient, aligned with the canonical edge list.

    ``per_edge[e]`` is dh/dw_e in bits per unit weight.  For the analytic
    route, ``per_group_terms[e, i]`` holds the (alpha, beta) pair of block i
    in nats: alpha collects the within-group entropy derivative, beta the
    cut/volume derivative, and

        per_edge[e] = (1 / ln 2) * sum_i (alpha[e, i] + beta[e, i]).

    The finite-difference route carries no decomposition (None).
    """

    per_edge: np.ndarray
    per_group_terms: np.ndarray | None = None


def _check_assumptions(g: WeightedGraph, p: SensitivePartition) -> None:
    if g.volume <= 0.0:
        raise EntropyDomainError("vol(G) > 0 is violated (total volume is zero)")
    for i in (0, 1):
        if p.volumes[i] <= 0.0:
            raise EntropyDomainError(
                f"vol(block {i}) > 0 is violated (empty or zero-weight group)"
            )
    if (g.degrees <= 0.0).any():
        v = int(np.flatnonzero(g.degrees <= 0.0)[0])
        raise EntropyDomainError(
            f"node {v} has zero degree; d_v/vol * log(d_v/vol) is undefined"
        )


def _entropy_terms(degrees, volumes, cut, member):
    """(intra, inter) in bits; dtype follows the inputs (used by the oracle)."""
    vol_total = volumes[0] + volumes[1]
    intra = degrees.dtype.type(0.0)
    inter = degrees.dtype.type(0.0)
    for i in (0, 1):
        ratio = degrees[member == i] / volumes[i]
        intra -= (volumes[i] / vol_total) * np.sum(ratio * np.log2(ratio))
        inter -= (cut / vol_total) * np.log2(volumes[i] / vol_total)
    return intra, inter


def partition_h_max(p: SensitivePartition) -> float:
    """Maximum achievable entropy for this partition (uniform-degree case)."""
    n = p.n
    h = np.log2(n)
    for size in p.sizes:
        if size > 0:  # 0 * log2(0) -> 0 for an empty block
            frac = size / n
            h -= frac * np.log2(frac)
    return float(h)


def two_dim_se(g: WeightedGraph, p: SensitivePartition | None = None) -> EntropyReport:
    """Entropy of ``g`` under its sensitive partition, in bits.

    Requires vol(G) > 0, both block volumes > 0 and every degree > 0;
    violations raise :class:`EntropyDomainError` naming the assumption.
    The gap is clamped at zero: the uniform-degree maximum is not proven
    to dominate every weighted instance, so an excess is logged rather
    than treated as impossible.
    """
    if p is None:
        p = partition_by_sensitive(g)
    _check_assumptions(g, p)
    intra, inter = _entropy_terms(g.degrees, p.volumes, p.cuts[0], p.membership)
    h = float(intra + inter)
    h_max = partition_h_max(p)
    gap = h_max - h
    if gap < 0.0:
        logger.warning("entropy %.6f exceeds partition maximum %.6f; clamping gap", h, h_max)
        gap = 0.0
    return EntropyReport(h=h, intra_term=float(intra), inter_term=float(inter), h_max=h_max, gap=gap)


def se_gradient(g: WeightedGraph, p: SensitivePartition | None = None) -> EdgeGradient:
    """Closed-form per-edge gradient of the entropy, in bits per unit weight.

    Assembled from the partial derivatives of the volume ratios
    (dvol_i/dw = endpoint-membership count, dvol/dw = 2), the within-group
    entropy product rule, and the cut derivative (dcut_i/dw = 1 iff exactly
    one endpoint lies in block i).  Requires strictly positive weights.
    """
    if p is None:
        p = partition_by_sensitive(g)
    _check_assumptions(g, p)
    if (g.weights <= 0.0).any():
        k = int(np.flatnonzero(g.weights <= 0.0)[0])
        raise EntropyDomainError(
            f"edge ({g.edge_u[k]}, {g.edge_v[k]}) has weight {g.weights[k]};"
            " the gradient requires every weight > 0"
        )
    vol_total = g.volume
    member = p.membership
    su, sv = member[g.edge_u], member[g.edge_v]
    crossing = p.crossing.astype(np.float64)
    terms = np.empty((g.m, 2, 2))
    for i in (0, 1):
        vol_i = float(p.volumes[i])
        cut_i = float(p.cuts[i])
        in_u = (su == i).astype(np.float64)
        in_v = (sv == i).astype(np.float64)
        m_i = in_u + in_v  # dvol_i/dw per edge
        # Within-group entropy in nats and the log-ratio of each endpoint.
        ratio = g.degrees / vol_i
        log_ratio = np.log(ratio)
        intra_i = -float(np.sum(ratio[member == i] * log_ratio[member == i]))
        endpoint_sum = in_u * log_ratio[g.edge_u] + in_v * log_ratio[g.edge_v]
        alpha = -2.0 * vol_i * intra_i / vol_total**2 - endpoint_sum / vol_total
        log_vol = np.log(vol_i / vol_total)
        beta = (
            -(crossing / vol_total) * log_vol
            + (2.0 * cut_i / vol_total**2) * log_vol
            - cut_i * m_i / (vol_total * vol_i)
            + 2.0 * cut_i / vol_total**2
        )
        terms[:, i, 0] = alpha
        terms[:, i, 1] = beta
    per_edge = terms.sum(axis=(1, 2)) / LN2
    return EdgeGradient(per_edge=per_edge, per_group_terms=terms)


def se_gradient_fd(g: WeightedGraph, p: SensitivePartition | None = None, eps: float = 1e-5) -> EdgeGradient:
    """Independent oracle: central finite difference of the entropy per edge.

    Evaluates (h(w + eps) - h(w - eps)) / (2 eps) through two entropy
    evaluations per edge.  The evaluations run in extended precision so the
    oracle's own round-off stays well below the tolerances it is used to
    enforce; eps must keep both perturbed weights positive.
    """
    if p is None:
        p = partition_by_sensitive(g)
    _check_assumptions(g, p)
    if eps <= 0.0:
        raise EntropyDomainError(f"finite-difference step must be positive, got {eps}")
    if (g.weights <= eps).any():
        k = int(np.flatnonzero(g.weights <= eps)[0])
        raise EntropyDomainError(
            f"edge ({g.edge_u[k]}, {g.edge_v[k]}) has weight {g.weights[k]} <= eps={eps};"
            " the central difference would leave the positive-weight domain"
        )
    step = np.longdouble(eps)
    degrees = g.degrees.astype(np.longdouble)
    member = p.membership
    vol0 = degrees[member == 0].sum()
    vol1 = degrees[member == 1].sum()
    cut = g.weights.astype(np.longdouble)[p.crossing].sum()
    per_edge = np.empty(g.m)
    for e in range(g.m):
        u, v = int(g.edge_u[e]), int(g.edge_v[e])
        du = step * np.array([member[u] == 0, member[u] == 1], dtype=np.longdouble)
        dv = step * np.array([member[v] == 0, member[v] == 1], dtype=np.longdouble)
        dcut = step if p.crossing[e] else np.longdouble(0.0)
        h_pm = []
        for sign in (1.0, -1.0):
            deg = degrees.copy()
            deg[u] += sign * step
            deg[v] += sign * step
            vols = np.array([vol0, vol1]) + sign * (du + dv)
            intra, inter = _entropy_terms(deg, vols, cut + sign * dcut, member)
            h_pm.append(intra + inter)
        per_edge[e] = float((h_pm[0] - h_pm[1]) / (2.0 * step))
    return EdgeGradient(per_edge=per_edge, per_group_terms=None)


@dataclass(frozen=True)
class AscentResult:
    """Outcome of the standalone entropy-ascent loop."""

    graph: WeightedGraph
    history: np.ndarray  # entropy in bits per step, length steps + 1


def entropy_ascent(g: WeightedGraph, p: SensitivePartition | None = None, steps: int = 200, lr: float = 0.1) -> AscentResult:
    """Gradient ascent of the entropy on sigmoid-parameterized edge weights.

    Each edge weight is reparameterized as sigmoid(a); steps update the
    logits with the chain-rule factor sigmoid'(a).  Logits are initialized
    from the inverse sigmoid of the current weights, clamped to
    [-LOGIT_CLIP, LOGIT_CLIP] (weights at or above 1 start saturated near
    1).  ``history`` traces h before each step and after the last one.
    """
    if p is None:
        p = partition_by_sensitive(g)
    if steps == 0:
        return AscentResult(graph=g, history=np.array([two_dim_se(g, p).h]))
    lo, hi = _sigmoid(-LOGIT_CLIP), _sigmoid(LOGIT_CLIP)
    w = np.clip(g.weights, lo, hi)
    logits = np.log(w / (1.0 - w))
    history = np.empty(steps + 1)
    current = reweight(g, _sigmoid(logits))
    for step in range(steps):
        history[step] = two_dim_se(current, p).h
        grad = se_gradient(current, p).per_edge
        sig = _sigmoid(logits)
        logits = logits + lr * grad * sig * (1.0 - sig)
        current = reweight(g, _sigmoid(logits))
    history[steps] = two_dim_se(current, p).h
    return AscentResult(graph=current, history=history)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))
