"""Source-free open compound domain adaptation on a synthetic benchmark."""

from ._core import (
    IGNORE_LABEL,
    ConfigError,
    ContractError,
    DataError,
    ShapeError,
    adain,
    adapt_target,
    config_hash,
    cpss,
    evaluate,
    gen_data,
    miou,
    mpt,
    patch_style,
    style_embed,
    stylize,
    train_source,
)

__version__ = "0.1.0"

__all__ = [
    "IGNORE_LABEL",
    "ConfigError",
    "ContractError",
    "DataError",
    "ShapeError",
    "adain",
    "adapt_target",
    "config_hash",
    "cpss",
    "evaluate",
    "gen_data",
    "miou",
    "mpt",
    "patch_style",
    "style_embed",
    "stylize",
    "train_source",
]
