"""Graph classifier training and mask-based prediction explanation."""

from .datasets import (
    Dataset,
    datasets_equal,
    generate_ba2motifs,
    generate_motif_graphs,
    load_dataset,
    save_dataset,
)
from .errors import (
    DomainError,
    EmptyDataset,
    GxplainError,
    IndexOutOfRange,
    InvalidBudget,
    InvalidCount,
    InvalidGraph,
    MissingAttributeScores,
    MissingExplanation,
    NonFiniteLoss,
    NotUndirected,
    ParseError,
    ShapeMismatch,
    TooLarge,
    UnsupportedActivation,
    ValidationError,
    VersionMismatch,
)
from .explain import (
    ExplainConfig,
    Explanation,
    HardConcreteConfig,
    MaskSet,
    explain,
    explanation_to_dict,
    importance_from_mask,
    init_masks,
    learn_masks,
    load_explanation,
    message_importance,
    node_attr_importance,
    node_importance,
    pair_aggregate_edge_scores,
    sample_hard_concrete,
    save_explanation,
)
from .graphs import (
    AttributedGraph,
    NodeSet,
    build_graph,
    complement_set,
    graphs_equal,
    node_induced_subgraph,
)
from .metrics import (
    EvalReport,
    GraphVerdict,
    default_prediction,
    ep_attribute,
    ep_explained,
    ep_remaining,
    evaluate,
    extract_topk_nodes,
    keep_top_attributes,
    resolve_budget,
    sparsity,
    write_eval_csv,
)
from .model import (
    ForwardResult,
    GnnModel,
    Layer,
    MaskGradients,
    MaskedInput,
    NormalizedAdjacency,
    forward,
    load_model,
    loss,
    mask_gradients,
    normalize_adjacency,
    save_model,
)
from .oracle import (
    MAX_ORACLE_NODES,
    OracleResult,
    brute_force_best_subset,
    exhaustive_sparsity,
    occlusion_scores,
    oracle_report,
)
from .training import TrainResult, evaluate_accuracy, train_model

__version__ = "0.1.0"
