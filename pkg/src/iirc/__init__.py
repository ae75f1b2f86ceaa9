"""Incremental implicitly-refined classification engine."""

from .hierarchy import ClassId, Hierarchy, build_hierarchy
from .data import RawDataset, RawSample, SynthSpec, generate_synthetic, load_external
from .stream import (
    AssignmentRule,
    CompleteView,
    IncompleteView,
    LabeledStore,
    SplitSpec,
    TaskConfiguration,
    build_labeled_store,
    build_streams,
    generate_task_configuration,
    split,
)

__all__ = [
    "AssignmentRule", "ClassId", "CompleteView", "Hierarchy", "IncompleteView", "LabeledStore",
    "RawDataset", "RawSample", "SplitSpec", "SynthSpec", "TaskConfiguration", "build_hierarchy",
    "build_labeled_store", "build_streams", "generate_synthetic", "generate_task_configuration",
    "load_external", "split",
]
__version__ = "0.1.0"
