"""Synthetic benchmark generation and dataset (de)serialization.

The motif benchmark attaches a 5-node house or a 5-node cycle to a random
preferential-attachment base graph; the motif kind is the class label.
"""

import gzip
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InvalidCount,
    ParseError,
    ValidationError,
    VersionMismatch,
)
from .graphs import AttributedGraph, build_graph, graphs_equal

DATASET_FORMAT_VERSION = 1
SPLIT_NAMES = ("train", "validation", "test")

# motif templates on local nodes 0..4
HOUSE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (1, 4))
CYCLE_EDGES = ((0, 1), (1, 2), (2, 3), (3, 4), (4, 0))


@dataclass
class Dataset:
    """A named list of labeled graphs plus index-based splits."""

    name: str
    graphs: list[AttributedGraph]
    attr_dim: int
    num_classes: int
    splits: dict[str, list[int]] = field(default_factory=dict)
    generation_seed: int | None = None

    def __post_init__(self):
        for g in self.graphs:
            if g.attr_dim != self.attr_dim:
                raise ValidationError(
                    f"graph {g.graph_id!r} has {g.attr_dim} attributes,"
                    f" dataset declares {self.attr_dim}"
                )
            if g.label is not None and not 0 <= g.label < self.num_classes:
                raise ValidationError(
                    f"graph {g.graph_id!r} labeled {g.label}, dataset has"
                    f" {self.num_classes} classes"
                )
        seen: set[int] = set()
        for split, indices in self.splits.items():
            for i in indices:
                if not 0 <= i < len(self.graphs):
                    raise ValidationError(
                        f"split {split!r} references graph {i}, only"
                        f" {len(self.graphs)} exist"
                    )
                if i in seen:
                    raise ValidationError(
                        f"graph {i} appears in more than one split"
                    )
                seen.add(i)

    def split_graphs(self, split: str) -> list[AttributedGraph]:
        return [self.graphs[i] for i in self.splits.get(split, [])]


def _preferential_attachment_edges(size: int, rng) -> list[tuple[int, int]]:
    # attachment parameter 1: each new node wires to one existing endpoint
    # drawn with probability proportional to current degree
    edges = [(0, 1)]
    endpoints = [0, 1]
    for new in range(2, size):
        target = endpoints[int(rng.integers(len(endpoints)))]
        edges.append((target, new))
        endpoints.extend((target, new))
    return edges


def generate_motif_graphs(
    n_graphs: int,
    seed: int,
    base_size: int = 20,
    attr_dim: int = 10,
    attr_value: float = 0.1,
    name: str = "ba2motifs",
) -> Dataset:
    """Generate the two-motif benchmark with an 80/10/10 contiguous split.

    Labels alternate house (0), cycle (1), so every contiguous slice of even
    length is class-balanced.

    Raises:
        InvalidCount: ``n_graphs`` is smaller than 2 or odd.
    """
    if n_graphs < 2 or n_graphs % 2:
        raise InvalidCount(
            f"need an even n_graphs >= 2 for balanced classes, got {n_graphs}"
        )
    if base_size < 2:
        raise InvalidCount(f"base_size must be at least 2, got {base_size}")
    rng = np.random.default_rng(seed)
    node_count = base_size + 5
    attributes = np.full((node_count, attr_dim), attr_value)
    graphs = []
    for i in range(n_graphs):
        label = i % 2
        motif = HOUSE_EDGES if label == 0 else CYCLE_EDGES
        edges = _preferential_attachment_edges(base_size, rng)
        edges.extend((base_size + u, base_size + v) for u, v in motif)
        motif_node = base_size + int(rng.integers(5))
        base_node = int(rng.integers(base_size))
        edges.append((motif_node, base_node))
        graphs.append(
            build_graph(
                node_count,
                edges,
                attributes,
                directed=False,
                label=label,
                graph_id=f"{name}-{i:04d}",
            )
        )
    train_end = int(n_graphs * 0.8)
    val_end = int(n_graphs * 0.9)
    splits = {
        "train": list(range(0, train_end)),
        "validation": list(range(train_end, val_end)),
        "test": list(range(val_end, n_graphs)),
    }
    return Dataset(name, graphs, attr_dim, 2, splits, generation_seed=seed)


def generate_ba2motifs(n_graphs: int, seed: int) -> Dataset:
    """25-node instances: 20-node preferential-attachment base plus motif."""
    return generate_motif_graphs(n_graphs, seed)


def _open_text(path, mode: str):
    if str(path).endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def _graph_to_dict(g: AttributedGraph) -> dict:
    if g.directed:
        edges = [list(a) for a in g.arcs]
    else:
        # mates are adjacent, so the even positions are the representatives
        edges = [list(a) for a in g.arcs[0::2]]
    return {
        "id": g.graph_id,
        "n": g.node_count,
        "directed": g.directed,
        "edges": edges,
        "x": g.attributes.tolist(),
        "y": g.label,
    }


def save_dataset(dataset: Dataset, path) -> None:
    """Write the dataset as JSON, gzip-compressed when the path ends .gz."""
    doc = {
        "format_version": DATASET_FORMAT_VERSION,
        "name": dataset.name,
        "attr_dim": dataset.attr_dim,
        "num_classes": dataset.num_classes,
        "generation_seed": dataset.generation_seed,
        "splits": {k: list(v) for k, v in dataset.splits.items()},
        "graphs": [_graph_to_dict(g) for g in dataset.graphs],
    }
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    if str(path).endswith(".gz"):
        with gzip.open(tmp, "wt", encoding="utf-8") as fh:
            fh.write(text)
    else:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
    os.replace(tmp, path)


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ParseError(f"{where}: missing field {key!r}")
    return doc[key]


def load_dataset(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset`.

    Raises:
        ParseError: unreadable or truncated JSON, or missing fields.
        VersionMismatch: unknown format version.
        ValidationError: internally inconsistent content.
    """
    try:
        with _open_text(path, "r") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    except (EOFError, gzip.BadGzipFile) as exc:
        raise ParseError(f"{path}: truncated or corrupt ({exc})") from exc
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: expected a JSON object at top level")
    version = _require(doc, "format_version", str(path))
    if version != DATASET_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format_version {version!r}, expected"
            f" {DATASET_FORMAT_VERSION}"
        )
    graphs = []
    for i, entry in enumerate(_require(doc, "graphs", str(path))):
        where = f"{path}: graphs[{i}]"
        if not isinstance(entry, dict):
            raise ParseError(f"{where}: expected an object")
        label = entry.get("y")
        graphs.append(
            build_graph(
                int(_require(entry, "n", where)),
                _require(entry, "edges", where),
                _require(entry, "x", where),
                directed=bool(_require(entry, "directed", where)),
                label=None if label is None else int(label),
                graph_id=str(_require(entry, "id", where)),
            )
        )
    return Dataset(
        name=str(_require(doc, "name", str(path))),
        graphs=graphs,
        attr_dim=int(_require(doc, "attr_dim", str(path))),
        num_classes=int(_require(doc, "num_classes", str(path))),
        splits={
            str(k): [int(i) for i in v]
            for k, v in _require(doc, "splits", str(path)).items()
        },
        generation_seed=doc.get("generation_seed"),
    )


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    """Deep equality over every field and every graph."""
    return (
        a.name == b.name
        and a.attr_dim == b.attr_dim
        and a.num_classes == b.num_classes
        and a.splits == b.splits
        and a.generation_seed == b.generation_seed
        and len(a.graphs) == len(b.graphs)
        and all(graphs_equal(x, y) for x, y in zip(a.graphs, b.graphs))
    )
