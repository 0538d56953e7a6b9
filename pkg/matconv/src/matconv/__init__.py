"""MATLAB hyperspectral scene archives -> cube directories."""

from . import cli
from .convert import (
    ConversionManifest,
    ConverterError,
    ManifestError,
    MatKeyError,
    ShapeMismatchError,
    convert,
    read_mat_variable,
)

__all__ = [
    "ConversionManifest",
    "ConverterError",
    "ManifestError",
    "MatKeyError",
    "ShapeMismatchError",
    "cli",
    "convert",
    "read_mat_variable",
]
