"""Python interface to the fttab C++ core.

Command functions take a dict of config overrides keyed like the CLI flags,
e.g. ``pretrain({"output_dir": "out", "model.d": 16})``.
"""

from ._core import (
    ConfigError,
    DimensionError,
    Error,
    IndexError,
    NumericError,
    ParseError,
    PreconditionError,
    SchemaError,
    UndefinedMetricError,
    accuracy,
    category_gram,
    checkpoint_kind,
    config_keys,
    evaluate,
    export_heatmaps,
    finetune,
    grad_check,
    identifier_cosine,
    mean_abs_offdiag,
    pretrain,
    resolve_config,
    roc_auc_ovo,
    sample_task,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "Error",
    "IndexError",
    "NumericError",
    "ParseError",
    "PreconditionError",
    "SchemaError",
    "UndefinedMetricError",
    "accuracy",
    "category_gram",
    "checkpoint_kind",
    "config_keys",
    "evaluate",
    "export_heatmaps",
    "finetune",
    "grad_check",
    "identifier_cosine",
    "mean_abs_offdiag",
    "pretrain",
    "resolve_config",
    "roc_auc_ovo",
    "sample_task",
]
