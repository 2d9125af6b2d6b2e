"""Desk-scale relevance grading pipeline.

Three training stages around a tiny autoregressive classifier: selective
supervised fine-tuning, closed-vocabulary reasoning-trace tuning, and
preference-pair de-biasing, plus the synthetic corpus and evaluation
harness that make the whole thing verifiable end to end.
"""

from relgrade.schema import (
    BinaryLabel,
    Dataset,
    Example,
    Facets,
    Label,
    QuerySpec,
    Tier,
    collapse_to_binary,
    read_dataset,
    stratified_sample,
    write_dataset,
)

__all__ = [
    "BinaryLabel",
    "Dataset",
    "Example",
    "Facets",
    "Label",
    "QuerySpec",
    "Tier",
    "collapse_to_binary",
    "read_dataset",
    "stratified_sample",
    "write_dataset",
]

__version__ = "0.1.0"
