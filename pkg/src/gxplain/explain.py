"""Mask-based explanation of a trained classifier.

Edge and attribute masks are real-valued logits pushed through stochastic
hard-concrete gates during learning and through ``sigmoid(m / beta)`` when
read out as importance scores.  The objective keeps the model's own
unmasked prediction while size and binary-entropy penalties drive the
masks toward a small, near-binary selection.

Node importance is assembled bottom-up: attribute scores combine into a
per-node geometric mean, each arc carries its edge score times the source
node's attribute score, and per-node aggregation over outgoing and
incoming arcs yields the final node score.
"""

import dataclasses
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    IndexOutOfRange,
    NonFiniteLoss,
    NotUndirected,
    ParseError,
    ShapeMismatch,
    VersionMismatch,
)
from .graphs import AttributedGraph
from .model import (
    PROBABILITY_FLOOR,
    GnnModel,
    MaskedInput,
    _backward,
    _forward_trace,
    forward,
    normalize_adjacency,
)
from .optim import Adam

EXPLANATION_FORMAT_VERSION = 1
SCORE_FLOOR = 1e-12

MODES = ("full", "edge_only", "attribute_only")
SHARING_MODES = (
    "independent",
    "undirected_pair_shared",
    "per_node_attr_shared",
    "global_attr_shared",
)
NODE_AGGS = ("max", "mean")
PAIR_AGGS = ("mean", "max", "min")

_AGG = {"max": np.max, "mean": np.mean, "min": np.min}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    return np.where(x >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))


def _binary_entropy_of_logit(m: np.ndarray, p: np.ndarray) -> np.ndarray:
    # H(sigmoid(m)) written with softplus so saturated logits stay finite
    return p * np.logaddexp(0.0, -m) + (1.0 - p) * np.logaddexp(0.0, m)


@dataclass(frozen=True)
class HardConcreteConfig:
    """Stretched binary-concrete gate parameters."""

    beta: float = 0.5
    stretch_low: float = -0.1
    stretch_high: float = 1.1
    stochastic: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.beta > 0.0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not self.stretch_low < 0.0 < 1.0 < self.stretch_high:
            raise DomainError(
                f"stretch interval ({self.stretch_low}, {self.stretch_high})"
                " must strictly contain [0, 1]"
            )


@dataclass(frozen=True)
class ExplainConfig:
    """Hyperparameters of mask learning and score aggregation."""

    epochs: int = 300
    learning_rate: float = 0.01
    lambda_edge_size: float = 0.005
    lambda_attr_size: float = 0.05
    lambda_edge_entropy: float = 1.0
    lambda_attr_entropy: float = 0.1
    agg1: str = "max"
    agg2: str = "max"
    pair_agg: str = "mean"
    mode: str = "full"
    sharing: str = "independent"
    hard_concrete: HardConcreteConfig = field(
        default_factory=HardConcreteConfig
    )

    def __post_init__(self):
        if self.epochs < 0:
            raise DomainError(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate > 0.0:
            raise DomainError(
                f"learning rate must be positive, got {self.learning_rate}"
            )
        for name in (
            "lambda_edge_size",
            "lambda_attr_size",
            "lambda_edge_entropy",
            "lambda_attr_entropy",
        ):
            if getattr(self, name) < 0.0:
                raise DomainError(f"{name} must be >= 0")
        if self.agg1 not in NODE_AGGS or self.agg2 not in NODE_AGGS:
            raise DomainError(
                f"node aggregators must be one of {NODE_AGGS}"
            )
        if self.pair_agg not in PAIR_AGGS:
            raise DomainError(f"pair_agg must be one of {PAIR_AGGS}")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if self.sharing not in SHARING_MODES:
            raise DomainError(f"sharing must be one of {SHARING_MODES}")


def _hard_concrete_with_grad(
    logits: np.ndarray, config: HardConcreteConfig, u: np.ndarray
):
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise DomainError("u must lie strictly inside (0, 1)")
    logits = np.asarray(logits, dtype=np.float64)
    span = config.stretch_high - config.stretch_low
    s = _sigmoid((np.log(u) - np.log1p(-u) + logits) / config.beta)
    raw = s * span + config.stretch_low
    gate = np.clip(raw, 0.0, 1.0)
    # clamped samples sit on a constant piece, so their gradient is zero
    interior = (raw > 0.0) & (raw < 1.0)
    grad = np.where(interior, span * s * (1.0 - s) / config.beta, 0.0)
    return gate, grad


def sample_hard_concrete(
    logits, config: HardConcreteConfig, u
) -> np.ndarray:
    """Stretched-and-clamped concrete gate for logits ``logits`` and draws ``u``."""
    gate, _ = _hard_concrete_with_grad(logits, config, u)
    return gate


def importance_from_mask(mask_logits, beta: float) -> np.ndarray:
    """Deterministic importance score ``sigmoid(m / beta)``."""
    if not beta > 0.0:
        raise DomainError(f"beta must be positive, got {beta}")
    return _sigmoid(np.asarray(mask_logits, dtype=np.float64) / beta)


@dataclass
class MaskSet:
    """Learnable mask logits plus the arc/cell -> parameter-slot maps.

    Sharing modes collapse several arcs or attribute cells onto one slot;
    slot arrays expand parameters back to per-arc and per-cell views.
    """

    edge_logits: np.ndarray
    attr_logits: np.ndarray
    edge_slot: np.ndarray
    attr_slot: np.ndarray
    sharing: str

    def edge_logit_per_arc(self) -> np.ndarray:
        return self.edge_logits[self.edge_slot]

    def attr_logit_matrix(self) -> np.ndarray:
        return self.attr_logits[self.attr_slot]

    def copy(self) -> "MaskSet":
        return MaskSet(
            self.edge_logits.copy(),
            self.attr_logits.copy(),
            self.edge_slot.copy(),
            self.attr_slot.copy(),
            self.sharing,
        )


def _resolved_sharing(config: ExplainConfig) -> str:
    # attribute-only explanation always learns one shared logit per node
    if config.mode == "attribute_only":
        return "per_node_attr_shared"
    return config.sharing


def init_masks(
    g: AttributedGraph, config: ExplainConfig, seed: int
) -> MaskSet:
    """Draw mask logits from Normal(0, 0.1) in the sharing layout of ``config``."""
    sharing = _resolved_sharing(config)
    n, d, n_arcs = g.node_count, g.attr_dim, g.arc_count
    if sharing == "undirected_pair_shared":
        if g.directed:
            raise NotUndirected(
                "pair-shared masks need an undirected graph"
            )
        # mates are adjacent, so consecutive arcs share a slot
        edge_slot = np.arange(n_arcs, dtype=np.int64) // 2
        edge_params = n_arcs // 2
    else:
        edge_slot = np.arange(n_arcs, dtype=np.int64)
        edge_params = n_arcs
    if sharing == "per_node_attr_shared":
        attr_slot = np.repeat(np.arange(n, dtype=np.int64), d).reshape(n, d)
        attr_params = n
    elif sharing == "global_attr_shared":
        attr_slot = np.tile(np.arange(d, dtype=np.int64), (n, 1))
        attr_params = d
    else:
        attr_slot = np.arange(n * d, dtype=np.int64).reshape(n, d)
        attr_params = n * d
    rng = np.random.default_rng(seed)
    edge_logits = rng.normal(0.0, 0.1, edge_params)
    attr_logits = rng.normal(0.0, 0.1, attr_params)
    return MaskSet(edge_logits, attr_logits, edge_slot, attr_slot, sharing)


@dataclass(frozen=True, eq=False)
class Explanation:
    """Importance scores of one graph under one trained model."""

    graph_id: str
    arcs: tuple[tuple[int, int], ...]
    original_prediction: int
    original_probability: float
    edge_score: np.ndarray
    attr_score: np.ndarray
    node_attr_score: np.ndarray
    node_score: np.ndarray
    node_ranking: tuple[int, ...]

    @property
    def node_count(self) -> int:
        return len(self.node_score)


def _geometric_mean_rows(scores: np.ndarray) -> np.ndarray:
    if scores.shape[1] == 0:
        return np.ones(scores.shape[0])
    clipped = np.maximum(scores, SCORE_FLOOR)
    return np.exp(np.mean(np.log(clipped), axis=1))


def _pair_aggregated(scores: np.ndarray, pair_agg: str) -> np.ndarray:
    pairs = scores.reshape(-1, 2)
    if pair_agg == "mean":
        values = pairs.mean(axis=1)
    elif pair_agg == "max":
        values = pairs.max(axis=1)
    else:
        values = pairs.min(axis=1)
    return np.repeat(values, 2)


def _node_scores_from_messages(
    node_count: int,
    src: np.ndarray,
    dst: np.ndarray,
    message_score: np.ndarray,
    node_attr_score: np.ndarray,
    agg1: str,
    agg2: str,
) -> np.ndarray:
    f1, f2 = _AGG[agg1], _AGG[agg2]
    out = np.empty(node_count)
    for i in range(node_count):
        sides = []
        outgoing = message_score[src == i]
        if outgoing.size:
            sides.append(f1(outgoing))
        incoming = message_score[dst == i]
        if incoming.size:
            sides.append(f1(incoming))
        # an isolated node falls back to its own attribute score
        out[i] = f2(np.asarray(sides)) if sides else node_attr_score[i]
    return out


def _rank_nodes(node_score: np.ndarray) -> tuple[int, ...]:
    return tuple(
        sorted(range(len(node_score)), key=lambda i: (-node_score[i], i))
    )


def _epoch_uniforms(seed: int, epoch: int, count: int) -> np.ndarray:
    # one independent Philox stream per (seed, epoch); position = parameter index
    key = (epoch << 64) | (seed & 0xFFFFFFFFFFFFFFFF)
    u = np.random.Generator(np.random.Philox(key=key)).random(count)
    return np.clip(u, 1e-12, 1.0 - 1e-12)


def _build_explanation(
    model: GnnModel,
    g: AttributedGraph,
    config: ExplainConfig,
    masks: MaskSet,
    base,
) -> Explanation:
    beta = config.hard_concrete.beta
    if config.mode == "attribute_only":
        edge_score = np.ones(g.arc_count)
    else:
        edge_score = importance_from_mask(masks.edge_logit_per_arc(), beta)
        if not g.directed and g.arc_count:
            edge_score = _pair_aggregated(edge_score, config.pair_agg)
    if config.mode == "edge_only":
        attr_score = np.ones((g.node_count, g.attr_dim))
    else:
        attr_score = importance_from_mask(masks.attr_logit_matrix(), beta)
    if config.mode != "edge_only" and masks.sharing == "per_node_attr_shared":
        node_attr_score = importance_from_mask(masks.attr_logits, beta)
    else:
        node_attr_score = _geometric_mean_rows(attr_score)
    if config.mode == "attribute_only":
        node_score = node_attr_score.copy()
    else:
        src, dst = g.arc_index_arrays()
        message_score = edge_score * node_attr_score[src]
        node_score = _node_scores_from_messages(
            g.node_count,
            src,
            dst,
            message_score,
            node_attr_score,
            config.agg1,
            config.agg2,
        )
    return Explanation(
        graph_id=g.graph_id,
        arcs=g.arcs,
        original_prediction=base.predicted_class,
        original_probability=float(
            base.probabilities[base.predicted_class]
        ),
        edge_score=edge_score,
        attr_score=attr_score,
        node_attr_score=node_attr_score,
        node_score=node_score,
        node_ranking=_rank_nodes(node_score),
    )


def learn_masks(
    model: GnnModel,
    g: AttributedGraph,
    config: ExplainConfig,
    initial_masks: MaskSet | None = None,
    on_epoch=None,
) -> tuple[MaskSet, Explanation]:
    """Optimize mask logits to preserve the model's own prediction.

    Each epoch samples hard-concrete gates (one fresh uniform per parameter;
    0.5 in deterministic mode), runs the masked forward pass, and takes one
    Adam step on cross-entropy toward the original predicted class plus
    size and entropy penalties on the sigmoided masks.  A pinned side
    (edges in ``attribute_only``, attributes in ``edge_only``) keeps gate
    and score fixed at 1.

    ``on_epoch(epoch, masks)`` is called after each update with the live
    mask object.
    """
    hc = config.hard_concrete
    adjacency = normalize_adjacency(g)
    base = forward(model, g, None, adjacency)
    target = base.predicted_class
    if initial_masks is None:
        masks = init_masks(g, config, hc.seed)
    else:
        masks = initial_masks.copy()

    learn_edges = config.mode != "attribute_only"
    learn_attrs = config.mode != "edge_only"
    n, d, n_arcs = g.node_count, g.attr_dim, g.arc_count
    edge_params = len(masks.edge_logits)
    attr_params = len(masks.attr_logits)
    ones_edge = np.ones(n_arcs)
    ones_attr = np.ones((n, d))
    attr_slot_flat = masks.attr_slot.ravel()

    optimized: list[np.ndarray] = []
    if learn_edges:
        optimized.append(masks.edge_logits)
    if learn_attrs:
        optimized.append(masks.attr_logits)
    optimizer = Adam(optimized, config.learning_rate)

    for epoch in range(config.epochs):
        if hc.stochastic:
            u = _epoch_uniforms(hc.seed, epoch, edge_params + attr_params)
        else:
            u = np.full(edge_params + attr_params, 0.5)

        if learn_edges:
            gate_e_slots, dgate_e_slots = _hard_concrete_with_grad(
                masks.edge_logits, hc, u[:edge_params]
            )
            gate_e = gate_e_slots[masks.edge_slot]
        else:
            gate_e = ones_edge
        if learn_attrs:
            gate_x_slots, dgate_x_slots = _hard_concrete_with_grad(
                masks.attr_logits, hc, u[edge_params:]
            )
            gate_x = gate_x_slots[attr_slot_flat].reshape(n, d)
        else:
            gate_x = ones_attr

        masked = MaskedInput(gate_e, gate_x)
        tr = _forward_trace(model, g, masked, adjacency)
        p_target = max(float(tr.probabilities[target]), PROBABILITY_FLOOR)
        objective = -math.log(p_target)
        _, ce_edge, ce_attr = _backward(
            model, g, tr, target, want_weights=False, want_gates=True
        )

        grads: list[np.ndarray] = []
        if learn_edges:
            g_edge = np.zeros(edge_params)
            np.add.at(g_edge, masks.edge_slot, ce_edge)
            g_edge *= dgate_e_slots
            if n_arcs:
                m_exp = masks.edge_logit_per_arc()
                p = _sigmoid(m_exp)
                objective += config.lambda_edge_size * p.mean()
                objective += (
                    config.lambda_edge_entropy
                    * _binary_entropy_of_logit(m_exp, p).mean()
                )
                reg = (
                    config.lambda_edge_size * p * (1.0 - p)
                    - config.lambda_edge_entropy * m_exp * p * (1.0 - p)
                ) / n_arcs
                np.add.at(g_edge, masks.edge_slot, reg)
            grads.append(g_edge)
        if learn_attrs:
            g_attr = np.zeros(attr_params)
            np.add.at(g_attr, attr_slot_flat, ce_attr.ravel())
            g_attr *= dgate_x_slots
            if n * d:
                m_exp = masks.attr_logit_matrix().ravel()
                p = _sigmoid(m_exp)
                objective += config.lambda_attr_size * p.mean()
                objective += (
                    config.lambda_attr_entropy
                    * _binary_entropy_of_logit(m_exp, p).mean()
                )
                reg = (
                    config.lambda_attr_size * p * (1.0 - p)
                    - config.lambda_attr_entropy * m_exp * p * (1.0 - p)
                ) / (n * d)
                np.add.at(g_attr, attr_slot_flat, reg)
            grads.append(g_attr)

        if not math.isfinite(objective):
            raise NonFiniteLoss(f"epoch {epoch}: objective {objective}")
        optimizer.step(grads)
        if on_epoch is not None:
            on_epoch(epoch, masks)

    return masks, _build_explanation(model, g, config, masks, base)


def explain(
    model: GnnModel, g: AttributedGraph, config: ExplainConfig | None = None
) -> Explanation:
    """Learn masks for ``g`` and aggregate them into an Explanation."""
    if config is None:
        config = ExplainConfig()
    _, explanation = learn_masks(model, g, config)
    return explanation


def pair_aggregate_edge_scores(
    explanation: Explanation, g: AttributedGraph, pair_agg: str = "mean"
) -> np.ndarray:
    """Collapse the two directions of every undirected edge to one score."""
    if g.directed:
        raise NotUndirected("pair aggregation needs an undirected graph")
    if pair_agg not in PAIR_AGGS:
        raise DomainError(f"pair_agg must be one of {PAIR_AGGS}")
    if len(explanation.edge_score) != g.arc_count:
        raise ShapeMismatch(
            f"explanation scores {len(explanation.edge_score)} arcs, graph"
            f" has {g.arc_count}"
        )
    if not g.arc_count:
        return np.zeros(0)
    return _pair_aggregated(explanation.edge_score, pair_agg)


def node_attr_importance(explanation: Explanation, node: int) -> float:
    """Geometric mean of one node's attribute scores, floored at 1e-12."""
    if not 0 <= node < explanation.node_count:
        raise IndexOutOfRange(f"node {node} out of range")
    row = explanation.attr_score[node : node + 1]
    return float(_geometric_mean_rows(row)[0])


def message_importance(explanation: Explanation, src: int, dst: int) -> float:
    """Edge score of arc (src, dst) weighted by the source attribute score."""
    try:
        idx = explanation.arcs.index((src, dst))
    except ValueError:
        raise IndexOutOfRange(f"no arc ({src}, {dst}) in explanation") from None
    return float(
        explanation.edge_score[idx] * explanation.node_attr_score[src]
    )


def node_importance(
    explanation: Explanation,
    g: AttributedGraph,
    agg1: str = "max",
    agg2: str = "max",
) -> np.ndarray:
    """Recompute per-node scores from stored edge and attribute scores."""
    if agg1 not in NODE_AGGS or agg2 not in NODE_AGGS:
        raise DomainError(f"node aggregators must be one of {NODE_AGGS}")
    if g.arcs != explanation.arcs:
        raise ShapeMismatch("graph arcs do not match the explanation")
    src, dst = g.arc_index_arrays()
    messages = explanation.edge_score * explanation.node_attr_score[src]
    return _node_scores_from_messages(
        g.node_count,
        src,
        dst,
        messages,
        explanation.node_attr_score,
        agg1,
        agg2,
    )


def explanation_to_dict(
    explanation: Explanation, config: ExplainConfig
) -> dict:
    return {
        "format_version": EXPLANATION_FORMAT_VERSION,
        "graph_id": explanation.graph_id,
        "predicted_class": explanation.original_prediction,
        "probability": explanation.original_probability,
        "node_scores": [float(v) for v in explanation.node_score],
        "node_attr_scores": [float(v) for v in explanation.node_attr_score],
        "node_ranking": list(explanation.node_ranking),
        "edge_scores": [
            {"src": int(s), "dst": int(d), "score": float(v)}
            for (s, d), v in zip(explanation.arcs, explanation.edge_score)
        ],
        "attr_scores": [
            [float(v) for v in row] for row in explanation.attr_score
        ],
        "config": dataclasses.asdict(config),
        "seed": config.hard_concrete.seed,
    }


def save_explanation(
    explanation: Explanation, config: ExplainConfig, path
) -> None:
    """Write one explanation as JSON (atomic replace, stable key order)."""
    text = json.dumps(
        explanation_to_dict(explanation, config), indent=2, allow_nan=False
    )
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
    os.replace(tmp, path)


def load_explanation(path) -> tuple[Explanation, dict]:
    """Read an explanation written by :func:`save_explanation`.

    Returns the explanation and the configuration echo as a plain dict.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object at top level")
    for key in (
        "format_version",
        "graph_id",
        "predicted_class",
        "probability",
        "node_scores",
        "node_attr_scores",
        "node_ranking",
        "edge_scores",
        "attr_scores",
    ):
        if key not in doc:
            raise ParseError(f"{path}: missing field {key!r}")
    if doc["format_version"] != EXPLANATION_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format_version {doc['format_version']!r}, expected"
            f" {EXPLANATION_FORMAT_VERSION}"
        )
    arcs = tuple(
        (int(e["src"]), int(e["dst"])) for e in doc["edge_scores"]
    )
    attr_score = np.asarray(doc["attr_scores"], dtype=np.float64)
    if attr_score.ndim != 2:
        attr_score = attr_score.reshape(len(doc["node_scores"]), 0)
    explanation = Explanation(
        graph_id=str(doc["graph_id"]),
        arcs=arcs,
        original_prediction=int(doc["predicted_class"]),
        original_probability=float(doc["probability"]),
        edge_score=np.asarray(
            [e["score"] for e in doc["edge_scores"]], dtype=np.float64
        ),
        attr_score=attr_score,
        node_attr_score=np.asarray(
            doc["node_attr_scores"], dtype=np.float64
        ),
        node_score=np.asarray(doc["node_scores"], dtype=np.float64),
        node_ranking=tuple(int(i) for i in doc["node_ranking"]),
    )
    return explanation, doc.get("config", {})
