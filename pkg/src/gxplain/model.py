"""Graph-convolution classifier: masked forward pass, exact mask gradients,
and JSON serialization.

Conventions used throughout:

* An arc ``(s, t)`` carries a message from ``s`` to ``t``.
* Normalization coefficients are computed once from the unmasked graph and
  stay fixed while gates vary; an edge gate scales its arc's message term
  only, and self-loop terms are never gated.
* Attribute gates apply to the input layer only.
* The readout concatenates max pooling and mean pooling over nodes; on an
  empty graph it is the zero vector, so every model still emits a prediction.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import (
    IndexOutOfRange,
    ParseError,
    ShapeMismatch,
    UnsupportedActivation,
    VersionMismatch,
)
from .graphs import AttributedGraph

MODEL_FORMAT_VERSION = 1
READOUT_MAX_MEAN = "max_mean_concat"
PROBABILITY_FLOOR = 1e-12

_ACTIVATIONS = ("relu", "identity")


@dataclass(frozen=True, eq=False)
class Layer:
    """One dense transform: ``act(input @ weight + bias)``."""

    weight: np.ndarray
    bias: np.ndarray
    activation: str

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64)
        if w.ndim != 2 or b.ndim != 1 or b.shape[0] != w.shape[1]:
            raise ShapeMismatch(
                f"layer weight {w.shape} incompatible with bias {b.shape}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ShapeMismatch("layer parameters must be finite")
        if self.activation not in _ACTIVATIONS:
            raise UnsupportedActivation(
                f"unknown activation {self.activation!r}"
            )
        w.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True, eq=False)
class GnnModel:
    """Stack of graph-convolution layers, pooling readout, and a dense head."""

    attr_dim: int
    num_classes: int
    gcn_layers: tuple[Layer, ...]
    head_layers: tuple[Layer, ...]
    readout: str = READOUT_MAX_MEAN

    def __post_init__(self):
        object.__setattr__(self, "gcn_layers", tuple(self.gcn_layers))
        object.__setattr__(self, "head_layers", tuple(self.head_layers))
        if self.num_classes < 2:
            raise ShapeMismatch(
                f"need at least 2 classes, got {self.num_classes}"
            )
        if self.readout != READOUT_MAX_MEAN:
            raise ShapeMismatch(f"unknown readout {self.readout!r}")
        if not self.head_layers:
            raise ShapeMismatch("model needs at least one head layer")
        dim = self.attr_dim
        for i, layer in enumerate(self.gcn_layers):
            if layer.in_dim != dim:
                raise ShapeMismatch(
                    f"gcn layer {i} expects {layer.in_dim} inputs, chain"
                    f" provides {dim}"
                )
            dim = layer.out_dim
        dim = 2 * dim
        for i, layer in enumerate(self.head_layers):
            if layer.in_dim != dim:
                raise ShapeMismatch(
                    f"head layer {i} expects {layer.in_dim} inputs, chain"
                    f" provides {dim}"
                )
            dim = layer.out_dim
        if dim != self.num_classes:
            raise ShapeMismatch(
                f"head emits {dim} logits for {self.num_classes} classes"
            )


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """Fixed propagation coefficients of one graph.

    ``arc_coeff[a] = 1 / sqrt(deg(src) * deg(dst))`` and
    ``self_coeff[i] = 1 / deg(i)`` where ``deg`` counts received messages
    plus the implicit self-loop (in-degree + 1) on the unmasked graph.
    """

    arc_coeff: np.ndarray
    self_coeff: np.ndarray


def normalize_adjacency(g: AttributedGraph) -> NormalizedAdjacency:
    """Symmetric GCN coefficients of ``g`` with implicit self-loops."""
    src, dst = g.arc_index_arrays()
    deg = np.bincount(dst, minlength=g.node_count).astype(np.float64) + 1.0
    inv_sqrt = 1.0 / np.sqrt(deg)
    return NormalizedAdjacency(inv_sqrt[src] * inv_sqrt[dst], 1.0 / deg)


@dataclass(frozen=True, eq=False)
class MaskedInput:
    """Per-arc edge gates and per-(node, attribute) gates, clamped to [0, 1]."""

    edge_gate: np.ndarray
    attribute_gate: np.ndarray

    def __post_init__(self):
        eg = np.clip(np.asarray(self.edge_gate, dtype=np.float64), 0.0, 1.0)
        ag = np.clip(
            np.asarray(self.attribute_gate, dtype=np.float64), 0.0, 1.0
        )
        if eg.ndim != 1 or ag.ndim != 2:
            raise ShapeMismatch(
                f"edge gate must be a vector and attribute gate a matrix,"
                f" got {eg.shape} and {ag.shape}"
            )
        eg.flags.writeable = False
        ag.flags.writeable = False
        object.__setattr__(self, "edge_gate", eg)
        object.__setattr__(self, "attribute_gate", ag)

    @staticmethod
    def all_ones(g: AttributedGraph) -> "MaskedInput":
        return MaskedInput(
            np.ones(g.arc_count), np.ones((g.node_count, g.attr_dim))
        )


@dataclass(frozen=True)
class ForwardResult:
    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: int


@dataclass(frozen=True)
class MaskGradients:
    """Exact loss gradients with respect to each gate, weights held fixed."""

    edge_gate: np.ndarray
    attribute_gate: np.ndarray


@dataclass
class _Trace:
    adjacency: NormalizedAdjacency
    a_eff: np.ndarray
    node_h: list[np.ndarray]
    node_m: list[np.ndarray]
    node_z: list[np.ndarray]
    max_index: np.ndarray | None
    head_u: list[np.ndarray]
    head_z: list[np.ndarray]
    logits: np.ndarray
    probabilities: np.ndarray
    predicted_class: int


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _activate(layer: Layer, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if layer.activation == "relu" else z


def _activation_grad(layer: Layer, z: np.ndarray) -> np.ndarray:
    # relu subgradient at 0 is taken as 0
    if layer.activation == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def _check_mask(g: AttributedGraph, mask: MaskedInput) -> None:
    if mask.edge_gate.shape != (g.arc_count,):
        raise ShapeMismatch(
            f"edge gate shape {mask.edge_gate.shape} does not match"
            f" {g.arc_count} arcs"
        )
    if mask.attribute_gate.shape != (g.node_count, g.attr_dim):
        raise ShapeMismatch(
            f"attribute gate shape {mask.attribute_gate.shape} does not"
            f" match ({g.node_count}, {g.attr_dim})"
        )


def _forward_trace(
    model: GnnModel,
    g: AttributedGraph,
    mask: MaskedInput | None,
    adjacency: NormalizedAdjacency | None = None,
) -> _Trace:
    if g.attr_dim != model.attr_dim:
        raise ShapeMismatch(
            f"graph has {g.attr_dim} attributes, model expects"
            f" {model.attr_dim}"
        )
    if mask is not None:
        _check_mask(g, mask)
    adj = adjacency if adjacency is not None else normalize_adjacency(g)
    n = g.node_count
    src, dst = g.arc_index_arrays()

    a_eff = np.zeros((n, n))
    if mask is None:
        a_eff[dst, src] = adj.arc_coeff
    else:
        a_eff[dst, src] = adj.arc_coeff * mask.edge_gate
    idx = np.arange(n)
    a_eff[idx, idx] = adj.self_coeff

    if mask is None:
        h = np.asarray(g.attributes)
    else:
        h = g.attributes * mask.attribute_gate
    node_h = [h]
    node_m = []
    node_z = []
    for layer in model.gcn_layers:
        m = a_eff @ h
        z = m @ layer.weight + layer.bias
        h = _activate(layer, z)
        node_m.append(m)
        node_z.append(z)
        node_h.append(h)

    width = h.shape[1]
    if n > 0:
        max_index = h.argmax(axis=0)
        readout = np.concatenate([h.max(axis=0), h.mean(axis=0)])
    else:
        max_index = None
        readout = np.zeros(2 * width)

    head_u = [readout]
    head_z = []
    u = readout
    for layer in model.head_layers:
        z = u @ layer.weight + layer.bias
        u = _activate(layer, z)
        head_z.append(z)
        head_u.append(u)

    probabilities = _softmax(u)
    return _Trace(
        adjacency=adj,
        a_eff=a_eff,
        node_h=node_h,
        node_m=node_m,
        node_z=node_z,
        max_index=max_index,
        head_u=head_u,
        head_z=head_z,
        logits=u,
        probabilities=probabilities,
        predicted_class=int(np.argmax(probabilities)),
    )


def forward(
    model: GnnModel,
    g: AttributedGraph,
    mask: MaskedInput | None = None,
    adjacency: NormalizedAdjacency | None = None,
) -> ForwardResult:
    """Run the classifier on ``g``, optionally through a ``MaskedInput``."""
    tr = _forward_trace(model, g, mask, adjacency)
    return ForwardResult(tr.logits, tr.probabilities, tr.predicted_class)


def _check_target(model: GnnModel, target_class: int) -> None:
    if not 0 <= target_class < model.num_classes:
        raise IndexOutOfRange(
            f"target class {target_class} outside [0, {model.num_classes})"
        )


def loss(
    model: GnnModel,
    g: AttributedGraph,
    mask: MaskedInput | None,
    target_class: int,
    adjacency: NormalizedAdjacency | None = None,
) -> float:
    """Cross-entropy toward ``target_class`` with the probability floored."""
    _check_target(model, target_class)
    tr = _forward_trace(model, g, mask, adjacency)
    p = max(float(tr.probabilities[target_class]), PROBABILITY_FLOOR)
    return -float(np.log(p))


def _backward(
    model: GnnModel,
    g: AttributedGraph,
    tr: _Trace,
    target_class: int,
    want_weights: bool,
    want_gates: bool,
):
    """Reverse-mode gradients of the floored cross-entropy.

    Returns ``(weight_grads, edge_gate_grad, attribute_gate_grad)`` where
    ``weight_grads`` lists ``dW, db`` per layer in forward order.
    """
    n = g.node_count
    p = tr.probabilities
    d_logits = np.zeros_like(p)
    if p[target_class] >= PROBABILITY_FLOOR:
        d_logits = p.copy()
        d_logits[target_class] -= 1.0
    # else the loss sits on the floor and every gradient is zero

    head_w: list[tuple[np.ndarray, np.ndarray]] = []
    du = d_logits
    for j in reversed(range(len(model.head_layers))):
        layer = model.head_layers[j]
        dz = du * _activation_grad(layer, tr.head_z[j])
        if want_weights:
            head_w.append((np.outer(tr.head_u[j], dz), dz.copy()))
        du = dz @ layer.weight.T

    width = tr.node_h[-1].shape[1]
    dh = np.zeros((n, width))
    if n > 0:
        d_max = du[:width]
        d_mean = du[width:]
        dh[tr.max_index, np.arange(width)] += d_max
        dh += d_mean / n

    gcn_w: list[tuple[np.ndarray, np.ndarray]] = []
    da = np.zeros((n, n)) if want_gates else None
    for l in reversed(range(len(model.gcn_layers))):
        layer = model.gcn_layers[l]
        dz = dh * _activation_grad(layer, tr.node_z[l])
        if want_weights:
            gcn_w.append((tr.node_m[l].T @ dz, dz.sum(axis=0)))
        dm = dz @ layer.weight.T
        if want_gates:
            da += dm @ tr.node_h[l].T
        dh = tr.a_eff.T @ dm

    weight_grads = None
    if want_weights:
        weight_grads = []
        for dw, db in reversed(gcn_w):
            weight_grads.extend((dw, db))
        for dw, db in reversed(head_w):
            weight_grads.extend((dw, db))

    edge_grad = None
    attr_grad = None
    if want_gates:
        src, dst = g.arc_index_arrays()
        edge_grad = da[dst, src] * tr.adjacency.arc_coeff
        attr_grad = dh * g.attributes
    return weight_grads, edge_grad, attr_grad


def mask_gradients(
    model: GnnModel,
    g: AttributedGraph,
    mask: MaskedInput,
    target_class: int,
    adjacency: NormalizedAdjacency | None = None,
) -> MaskGradients:
    """Exact d loss / d gate for every edge and attribute gate."""
    _check_target(model, target_class)
    tr = _forward_trace(model, g, mask, adjacency)
    _, edge_grad, attr_grad = _backward(
        model, g, tr, target_class, want_weights=False, want_gates=True
    )
    return MaskGradients(edge_grad, attr_grad)


def _layer_to_dict(layer: Layer) -> dict:
    return {
        "weight": layer.weight.tolist(),
        "bias": layer.bias.tolist(),
        "activation": layer.activation,
    }


def _layer_from_dict(doc: dict, where: str) -> Layer:
    for key in ("weight", "bias", "activation"):
        if key not in doc:
            raise ParseError(f"{where}: missing field {key!r}")
    try:
        weight = np.asarray(doc["weight"], dtype=np.float64)
        bias = np.asarray(doc["bias"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: non-numeric layer data ({exc})") from exc
    return Layer(weight, bias, doc["activation"])


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_model(model: GnnModel, path) -> None:
    """Write the model as JSON; floats round-trip exactly."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "attr_dim": model.attr_dim,
        "num_classes": model.num_classes,
        "readout": model.readout,
        "gcn_layers": [_layer_to_dict(l) for l in model.gcn_layers],
        "head_layers": [_layer_to_dict(l) for l in model.head_layers],
    }
    _atomic_write_text(
        path, json.dumps(doc, indent=2, allow_nan=False) + "\n"
    )


def load_model(path) -> GnnModel:
    """Read a model written by :func:`save_model`.

    Raises:
        ParseError: the file is not valid JSON or misses required fields.
        VersionMismatch: the file declares an unknown format version.
        ShapeMismatch: the dimension chain is inconsistent.
        UnsupportedActivation: a layer names an unknown activation.
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
        "attr_dim",
        "num_classes",
        "readout",
        "gcn_layers",
        "head_layers",
    ):
        if key not in doc:
            raise ParseError(f"{path}: missing field {key!r}")
    if doc["format_version"] != MODEL_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format_version {doc['format_version']!r}, expected"
            f" {MODEL_FORMAT_VERSION}"
        )
    gcn = tuple(
        _layer_from_dict(d, f"{path}: gcn_layers[{i}]")
        for i, d in enumerate(doc["gcn_layers"])
    )
    head = tuple(
        _layer_from_dict(d, f"{path}: head_layers[{i}]")
        for i, d in enumerate(doc["head_layers"])
    )
    return GnnModel(
        attr_dim=int(doc["attr_dim"]),
        num_classes=int(doc["num_classes"]),
        gcn_layers=gcn,
        head_layers=head,
        readout=doc["readout"],
    )
