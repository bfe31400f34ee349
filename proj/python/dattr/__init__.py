"""Python bindings for the dattr attribution library."""

from ._dattr import (
    Dataset,
    Error,
    ImageLayout,
    Key,
    NoiseModel,
    WatermarkModel,
    __version__,
    dataio,
    derive_seed,
    keygen,
    metrics,
    registry,
    theory,
    watermark,
)

__all__ = [
    "Dataset",
    "Error",
    "ImageLayout",
    "Key",
    "NoiseModel",
    "WatermarkModel",
    "dataio",
    "derive_seed",
    "keygen",
    "metrics",
    "registry",
    "theory",
    "watermark",
]
