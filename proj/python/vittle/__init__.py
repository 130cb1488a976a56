# SPDX-License-Identifier: Apache-2.0
"""Toy multimodal instruction tuning with an information bottleneck."""

from ._vittle import (
    ConfigError,
    DivergenceError,
    RunConfig,
    Sample,
    Trainer,
    build_suite,
    cosine_distances,
    entropy,
    eval_dataset,
    jsd,
    keyed_copy_answer,
    keyed_copy_dataset,
    kl,
    mutual_information,
    pca2,
    repr_jsd,
    train,
    verify_bound,
)

__all__ = [
    "ConfigError",
    "DivergenceError",
    "RunConfig",
    "Sample",
    "Trainer",
    "build_suite",
    "cosine_distances",
    "entropy",
    "eval_dataset",
    "jsd",
    "keyed_copy_answer",
    "keyed_copy_dataset",
    "kl",
    "mutual_information",
    "pca2",
    "repr_jsd",
    "train",
    "verify_bound",
]
