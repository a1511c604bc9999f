"""Deep autoregressive acoustic models for singing voice synthesis."""

from ._core import (
    ConfigError,
    DataError,
    DimensionError,
    DomainError,
    MetricError,
    TrainingError,
    build_corpus,
    default_config,
    dequantize,
    evaluate,
    f0_corr,
    f0_rmse,
    hz_to_mel,
    mcd,
    mel_to_hz,
    mlpg,
    moving_average,
    postprocess_f0,
    quantize,
    synthesize,
    train,
    vuv_error,
)

__all__ = [
    "ConfigError",
    "DataError",
    "DimensionError",
    "DomainError",
    "MetricError",
    "TrainingError",
    "build_corpus",
    "default_config",
    "dequantize",
    "evaluate",
    "f0_corr",
    "f0_rmse",
    "hz_to_mel",
    "mcd",
    "mel_to_hz",
    "mlpg",
    "moving_average",
    "postprocess_f0",
    "quantize",
    "synthesize",
    "train",
    "vuv_error",
]
