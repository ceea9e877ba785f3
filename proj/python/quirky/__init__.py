"""Python bindings for the quirky probing toolkit."""

from ._core import (
    ActivationStore,
    DataError,
    NumericError,
    QuirkyError,
    WorldConfig,
    anomaly_auroc,
    auroc,
    build_describe,
    cli,
    earliest_informative_layer,
    erase_binary_concept,
    gen_world,
    householder_reflect,
    mahalanobis,
    oracle_auroc,
    pgr,
    planted_directions,
    probe_scores,
    run_transfer,
    train_probe,
)

__all__ = [
    "ActivationStore",
    "DataError",
    "NumericError",
    "QuirkyError",
    "WorldConfig",
    "anomaly_auroc",
    "auroc",
    "build_describe",
    "cli",
    "earliest_informative_layer",
    "erase_binary_concept",
    "gen_world",
    "householder_reflect",
    "mahalanobis",
    "oracle_auroc",
    "pgr",
    "planted_directions",
    "probe_scores",
    "run_transfer",
    "train_probe",
]
