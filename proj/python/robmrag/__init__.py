"""Retrieval-augmented grasp pose pipeline: knowledge base, hybrid retrieval,
IMD matching, splat rendering and pose refinement."""

from ._core import (
    DataError,
    KnowledgeBase,
    imd,
    mask_pose_parameters,
    pose_loss,
    query,
    read_tensor,
    render,
    rotation_candidates,
    tokenize,
    unmask,
    write_fixtures,
    write_tensor,
)

__all__ = [
    "DataError",
    "KnowledgeBase",
    "imd",
    "mask_pose_parameters",
    "pose_loss",
    "query",
    "read_tensor",
    "render",
    "rotation_candidates",
    "tokenize",
    "unmask",
    "write_fixtures",
    "write_tensor",
]
