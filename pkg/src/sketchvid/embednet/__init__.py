"""Two-stream embedding networks, relation heads and checkpoints."""
from .checkpoint import CheckpointError, copy_params, load_checkpoint, read_checkpoint, save_checkpoint
from .nets import (
    EMBED_DIM,
    MAX_FLOW,
    ModelParams,
    RelationNet,
    RelationNetConfig,
    StreamConfig,
    StreamNet,
    embed_appearance,
    embed_flow,
    embed_motion_sketch,
    flow_input,
    relation_scores,
    sketch_input,
)

__all__ = ["CheckpointError", "EMBED_DIM", "MAX_FLOW", "ModelParams", "RelationNet",
           "RelationNetConfig", "StreamConfig", "StreamNet", "copy_params", "embed_appearance",
           "embed_flow", "embed_motion_sketch", "flow_input", "load_checkpoint", "read_checkpoint",
           "relation_scores", "save_checkpoint", "sketch_input"]
