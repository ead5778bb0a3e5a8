"""Strong- and weak-supervision training of the two streams."""
from .data import PageRef, StreamData
from .strong import (
    STREAMS,
    TrainConfig,
    TrainingError,
    TrainResult,
    build_triplets_strong,
    train_step,
    train_stream,
)
from .weak import (
    Bag,
    WeakResult,
    bag_window,
    flip_count,
    init_bags_weak,
    mil_label_inference,
    train_weak,
)

__all__ = ["Bag", "PageRef", "STREAMS", "StreamData", "TrainConfig", "TrainResult", "TrainingError",
           "WeakResult", "bag_window", "build_triplets_strong", "flip_count", "init_bags_weak",
           "mil_label_inference", "train_step", "train_stream", "train_weak"]
