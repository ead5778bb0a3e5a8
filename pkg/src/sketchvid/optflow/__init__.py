"""TV-L1 optical flow and stacked flow inputs for the motion stream."""
from .stack import (
    FlowCache,
    FlowCacheWarning,
    clip_flows,
    position_stacks,
    stack_flows,
    stack_from_flows,
)
from .tvl1 import FlowError, FlowField, FlowParams, relaxed_energy, to_gray, tv_l1_energy, tvl1_flow

__all__ = ["FlowCache", "FlowCacheWarning", "FlowError", "FlowField", "FlowParams", "clip_flows",
           "position_stacks", "relaxed_energy", "stack_flows", "stack_from_flows", "to_gray",
           "tv_l1_energy", "tvl1_flow"]
