"""Fidelity metrics: does a budgeted piece of the explanation keep the
model's original prediction?

All comparisons target the model's own unmasked prediction, never the
ground-truth label.  Node budgets resolve round-half-up with a floor of
one node; a fixed budget larger than a graph skips that graph entirely.
"""

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidBudget,
    MissingAttributeScores,
    MissingExplanation,
)
from .explain import Explanation
from .graphs import AttributedGraph, NodeSet, complement_set, node_induced_subgraph
from .model import GnnModel, forward


@dataclass
class GraphVerdict:
    """Per-graph evaluation row."""

    graph_id: str
    budget: int | None
    retained_explained: bool | None
    retained_remaining: bool | None
    eligible: bool
    min_k: int | None


@dataclass
class EvalReport:
    ep_explained: float | None
    ep_remaining: float | None
    ep_attribute: float | None
    sparsity: float | None
    eligible_count: int
    evaluated_count: int
    per_graph: list[GraphVerdict]


def resolve_budget(
    node_count: int, k: int | None = None, rate: float | None = None
) -> int | None:
    """Node budget for one graph; ``None`` means the graph is skipped.

    Exactly one of ``k`` (absolute, >= 1) and ``rate`` (fraction in (0, 1])
    must be given.  Fractional budgets round half up and keep at least one
    node; an absolute budget larger than the graph yields ``None``.
    """
    if (k is None) == (rate is None):
        raise InvalidBudget("give exactly one of k and rate")
    if rate is not None:
        if not 0.0 < rate <= 1.0:
            raise InvalidBudget(f"rate must lie in (0, 1], got {rate}")
        return max(1, int(math.floor(rate * node_count + 0.5)))
    if k < 1:
        raise InvalidBudget(f"k must be at least 1, got {k}")
    return None if k > node_count else int(k)


def extract_topk_nodes(
    explanation: Explanation,
    k: int | None = None,
    rate: float | None = None,
) -> NodeSet | None:
    """The budget-many highest-ranked nodes, or ``None`` when skipped."""
    budget = resolve_budget(explanation.node_count, k, rate)
    if budget is None:
        return None
    return NodeSet(explanation.node_ranking[:budget])


def default_prediction(model: GnnModel) -> int:
    """Prediction on the empty graph (the zero-readout output)."""
    empty = AttributedGraph(
        0, (), np.zeros((0, model.attr_dim)), directed=True
    )
    return forward(model, empty).predicted_class


def keep_top_attributes(
    g: AttributedGraph, attr_score: np.ndarray, top_t: int
) -> AttributedGraph:
    """Zero all but each node's ``top_t`` highest-scored attributes."""
    if top_t < 1:
        raise InvalidBudget(f"top_t must be at least 1, got {top_t}")
    keep = np.zeros_like(g.attributes)
    order = np.argsort(-attr_score, axis=1, kind="stable")
    cols = order[:, : min(top_t, g.attr_dim)]
    rows = np.arange(g.node_count)[:, None]
    keep[rows, cols] = 1.0
    return AttributedGraph(
        g.node_count,
        g.arcs,
        g.attributes * keep,
        g.directed,
        g.label,
        g.graph_id,
    )


def _graph_list(dataset) -> list[AttributedGraph]:
    if hasattr(dataset, "graphs"):
        return list(dataset.graphs)
    return list(dataset)


def _lookup_all(graphs, explanations) -> None:
    missing = [g.graph_id for g in graphs if g.graph_id not in explanations]
    if missing:
        raise MissingExplanation(
            f"no explanation for graphs: {', '.join(sorted(missing))}"
        )


def _require_attr_scores(g: AttributedGraph, expl: Explanation) -> None:
    empty = expl.attr_score is None or (
        g.node_count > 0 and expl.attr_score.size == 0
    )
    if empty:
        raise MissingAttributeScores(
            f"explanation for {g.graph_id!r} has no attribute scores"
        )


def _retains(
    model: GnnModel, g: AttributedGraph, keep: NodeSet, original: int
) -> bool:
    sub = node_induced_subgraph(g, keep)
    return forward(model, sub).predicted_class == original


def _min_retaining_prefix(
    model: GnnModel, g: AttributedGraph, explanation: Explanation
) -> int:
    # the full ranking reproduces the graph, so the scan always terminates
    for k in range(1, g.node_count + 1):
        keep = NodeSet(explanation.node_ranking[:k])
        if _retains(model, g, keep, explanation.original_prediction):
            return k
    return g.node_count


def evaluate(
    model: GnnModel,
    dataset,
    explanations: dict[str, Explanation],
    k: int | None = None,
    rate: float | None = None,
    attr_top: int | None = None,
    compute_sparsity: bool = True,
) -> EvalReport:
    """Full evaluation pass; per-graph rows come out sorted by graph id.

    Raises:
        MissingExplanation: some selected graph has no explanation.
        InvalidBudget: malformed node or attribute budget.
    """
    graphs = sorted(_graph_list(dataset), key=lambda g: g.graph_id)
    _lookup_all(graphs, explanations)
    resolve_budget(1, k, rate)  # validate the budget form once up front

    default = default_prediction(model)
    rows: list[GraphVerdict] = []
    explained_hits = remaining_hits = evaluated = 0
    attribute_hits = attribute_total = 0
    min_ks: list[int] = []
    for g in graphs:
        expl = explanations[g.graph_id]
        original = expl.original_prediction
        budget = resolve_budget(g.node_count, k, rate)
        retained_explained = retained_remaining = None
        if budget is not None:
            keep = NodeSet(expl.node_ranking[:budget])
            retained_explained = _retains(model, g, keep, original)
            rest = complement_set(g, keep)
            retained_remaining = _retains(model, g, rest, original)
            evaluated += 1
            explained_hits += retained_explained
            remaining_hits += retained_remaining
        if attr_top is not None:
            _require_attr_scores(g, expl)
            masked = keep_top_attributes(g, expl.attr_score, attr_top)
            attribute_hits += (
                forward(model, masked).predicted_class == original
            )
            attribute_total += 1
        eligible = original != default
        min_k = None
        if compute_sparsity and eligible:
            min_k = _min_retaining_prefix(model, g, expl)
            min_ks.append(min_k)
        rows.append(
            GraphVerdict(
                g.graph_id,
                budget,
                retained_explained,
                retained_remaining,
                eligible,
                min_k,
            )
        )
    return EvalReport(
        ep_explained=explained_hits / evaluated if evaluated else None,
        ep_remaining=remaining_hits / evaluated if evaluated else None,
        ep_attribute=(
            attribute_hits / attribute_total if attribute_total else None
        ),
        sparsity=float(np.mean(min_ks)) if min_ks else None,
        eligible_count=sum(r.eligible for r in rows),
        evaluated_count=evaluated,
        per_graph=rows,
    )


def ep_explained(
    model: GnnModel,
    dataset,
    explanations: dict[str, Explanation],
    k: int | None = None,
    rate: float | None = None,
) -> float | None:
    """Fraction of budgeted subgraphs that keep the original prediction."""
    return evaluate(
        model, dataset, explanations, k=k, rate=rate, compute_sparsity=False
    ).ep_explained


def ep_remaining(
    model: GnnModel,
    dataset,
    explanations: dict[str, Explanation],
    k: int | None = None,
    rate: float | None = None,
) -> float | None:
    """Same as :func:`ep_explained` but on the complement node set."""
    return evaluate(
        model, dataset, explanations, k=k, rate=rate, compute_sparsity=False
    ).ep_remaining


def ep_attribute(
    model: GnnModel,
    dataset,
    explanations: dict[str, Explanation],
    top_t: int,
) -> float | None:
    """Retention when keeping each node's top ``top_t`` attributes only."""
    graphs = _graph_list(dataset)
    _lookup_all(graphs, explanations)
    if not graphs:
        return None
    hits = 0
    for g in graphs:
        expl = explanations[g.graph_id]
        _require_attr_scores(g, expl)
        masked = keep_top_attributes(g, expl.attr_score, top_t)
        hits += forward(model, masked).predicted_class == expl.original_prediction
    return hits / len(graphs)


def sparsity(
    model: GnnModel, dataset, explanations: dict[str, Explanation]
) -> tuple[float | None, int]:
    """Mean minimal retaining ranking prefix over eligible graphs.

    Graphs whose original prediction equals the empty-graph default are
    excluded; the second return value counts the eligible graphs.
    """
    report = evaluate(
        model, dataset, explanations, rate=1.0, compute_sparsity=True
    )
    return report.sparsity, report.eligible_count


def write_eval_csv(path, rows: list[GraphVerdict]) -> None:
    """One CSV row per verdict: graph_id, budget, retentions, min_k."""

    def cell(value):
        if value is None:
            return ""
        if isinstance(value, bool):
            return int(value)
        return value

    path = os.fspath(path)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "graph_id",
                "budget",
                "retained_explained",
                "retained_remaining",
                "min_k",
            ]
        )
        for r in rows:
            writer.writerow(
                [
                    r.graph_id,
                    cell(r.budget),
                    cell(r.retained_explained),
                    cell(r.retained_remaining),
                    cell(r.min_k),
                ]
            )
    os.replace(tmp, path)


def report_to_dict(report: EvalReport) -> dict:
    return {
        "ep_explained": report.ep_explained,
        "ep_remaining": report.ep_remaining,
        "ep_attribute": report.ep_attribute,
        "sparsity": report.sparsity,
        "eligible_count": report.eligible_count,
        "evaluated_count": report.evaluated_count,
        "per_graph": [
            {
                "graph_id": r.graph_id,
                "budget": r.budget,
                "retained_explained": r.retained_explained,
                "retained_remaining": r.retained_remaining,
                "eligible": r.eligible,
                "min_k": r.min_k,
            }
            for r in report.per_graph
        ],
    }


def save_report(report: EvalReport, path) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(report_to_dict(report), indent=2) + "\n")
    os.replace(tmp, path)
