"""Sequential patient-state encoders and batch-constrained treatment policies."""

from ._core import (
    Cohort,
    analyze,
    bcq_filter,
    cli,
    encode,
    gen_data,
    kinds,
    load_cohort,
    parameter_count,
    paper_dims,
    signature,
    stream_signature,
    sweep,
    train_encoder,
    train_policy,
    wis_estimate,
)

__all__ = [
    "Cohort",
    "analyze",
    "bcq_filter",
    "cli",
    "encode",
    "gen_data",
    "kinds",
    "load_cohort",
    "parameter_count",
    "paper_dims",
    "signature",
    "stream_signature",
    "sweep",
    "train_encoder",
    "train_policy",
    "wis_estimate",
]
