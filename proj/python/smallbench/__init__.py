"""Python bindings for the smallbench C++ core."""

from ._smallbench import (
    Checkpoint,
    CheckpointError,
    ConfigError,
    TrainingError,
    Vocab,
    accuracy,
    average_score,
    build_vocab,
    build_vocab_from_text,
    decode,
    encode,
    evaluate,
    finetune,
    format_score,
    matthews_corrcoef,
    parameter_count,
    pretrain,
    render_leaderboard,
    run_cli,
    spearman,
    task_names,
    tokenize,
)

__all__ = [
    "Checkpoint",
    "CheckpointError",
    "ConfigError",
    "TrainingError",
    "Vocab",
    "accuracy",
    "average_score",
    "build_vocab",
    "build_vocab_from_text",
    "decode",
    "encode",
    "evaluate",
    "finetune",
    "format_score",
    "matthews_corrcoef",
    "parameter_count",
    "pretrain",
    "render_leaderboard",
    "run_cli",
    "spearman",
    "task_names",
    "tokenize",
]
