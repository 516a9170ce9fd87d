"""Tree decoding and molecular graph assembly."""

from .assembly import (
    AssemblyFailed,
    AssemblyPlan,
    AssemblyResult,
    AssemblyState,
    CandidateSubgraph,
    EmptyCandidates,
    GraphLossStats,
    GroundTruthNotInCandidates,
    assemble,
    enumerate_candidates,
    graph_loss,
    assembly_plan,
    preorder,
    score_candidate,
    score_candidates,
)
from .catalog import LabelCatalog, aromatic_satisfied, compatible_labels, joint_merges
from .treegen import (
    DecodeState,
    TreeLossStats,
    decode_tree,
    decoded_to_tree,
    label_logits,
    ordered_children,
    topo_logit,
    tree_loss,
)

__all__ = [
    "AssemblyFailed",
    "AssemblyPlan",
    "AssemblyResult",
    "AssemblyState",
    "CandidateSubgraph",
    "DecodeState",
    "EmptyCandidates",
    "GraphLossStats",
    "GroundTruthNotInCandidates",
    "LabelCatalog",
    "TreeLossStats",
    "aromatic_satisfied",
    "assemble",
    "assembly_plan",
    "compatible_labels",
    "decode_tree",
    "decoded_to_tree",
    "enumerate_candidates",
    "graph_loss",
    "joint_merges",
    "label_logits",
    "ordered_children",
    "preorder",
    "score_candidate",
    "score_candidates",
    "topo_logit",
    "tree_loss",
]
