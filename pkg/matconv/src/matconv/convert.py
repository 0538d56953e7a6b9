"""Convert a MATLAB scene archive pair into a cube directory.

Public hyperspectral scenes usually ship as two MAT files: one holding the
radiance cube under some variable name, one holding an integer ground-truth
raster (0 = unlabeled, 1..n = classes). `convert` reads both, casts the cube
to 32-bit floats, and writes the three-file cube directory consumed by
downstream tooling:

  <name>.json    metadata (dims, ordered class names, encoding tags)
  <name>.cube    band-sequential float32 little-endian pixel values
  <name>.labels  row-major int32 little-endian label raster

Source band orientation is declared in the manifest (`band_axis`), never
inferred from the array shape.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import loadmat
from scipy.io.matlab import MatReadError


class ConverterError(Exception):
    """Base class for conversion failures."""


class ManifestError(ConverterError):
    """Invalid manifest contents or label/class-list disagreement."""


class MatKeyError(ConverterError):
    """Requested variable is absent from the MAT file; names the ones present."""


class ShapeMismatchError(ConverterError):
    """Data cube and ground-truth raster disagree on spatial dimensions."""


BAND_AXES = ("last", "first")


@dataclass(frozen=True)
class ConversionManifest:
    """Everything needed to turn one MAT pair into a cube directory.

    band_axis declares where the spectral axis sits in the source cube:
    "last" for (rows, cols, bands), "first" for (bands, rows, cols).
    """

    data_path: Path
    gt_path: Path
    cube_key: str
    gt_key: str
    class_names: tuple[str, ...]
    output_dir: Path
    name: str
    band_axis: str = "last"

    def __post_init__(self):
        if not self.name or not all(c.isalnum() or c in "_-" for c in self.name):
            raise ManifestError(
                f"cube name must be non-empty alphanumeric/_/-, got {self.name!r}"
            )
        if self.band_axis not in BAND_AXES:
            raise ManifestError(
                f"band_axis must be one of {BAND_AXES}, got {self.band_axis!r}"
            )
        if not self.class_names:
            raise ManifestError("class_names must not be empty")
        if len(set(self.class_names)) != len(self.class_names):
            raise ManifestError("class_names contains duplicates")
        if any(not n.strip() for n in self.class_names):
            raise ManifestError("class_names contains blank entries")


def read_mat_variable(path, key: str) -> np.ndarray:
    """Load one variable from a MAT file, naming the available keys on a miss."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"MAT file not found: {p}")
    # scipy surfaces corrupt files as a grab-bag of exception types
    try:
        contents = loadmat(p)
    except (MatReadError, ValueError, TypeError, NotImplementedError,
            OSError, IndexError, KeyError) as e:
        raise ConverterError(f"cannot read MAT file {p}: {e}") from e
    if key not in contents:
        available = sorted(k for k in contents if not k.startswith("__"))
        raise MatKeyError(
            f"variable {key!r} not found in {p.name}; available: {available}"
        )
    return np.asarray(contents[key])


def _validated_labels(gt: np.ndarray, class_names: tuple[str, ...]) -> np.ndarray:
    gt = np.squeeze(gt)
    if gt.ndim != 2:
        raise ManifestError(f"ground truth must be a 2-D raster, got shape {gt.shape}")
    if not np.isfinite(gt.astype(np.float64)).all():
        raise ManifestError("ground truth contains non-finite values")
    if np.any(np.mod(gt, 1) != 0):
        raise ManifestError("ground truth contains non-integer labels")
    labels = gt.astype(np.int64)
    if labels.min() < 0:
        raise ManifestError(f"ground truth contains negative label {int(labels.min())}")
    present = set(np.unique(labels).tolist()) - {0}
    expected = set(range(1, len(class_names) + 1))
    if present != expected:
        missing = sorted(expected - present)
        extra = sorted(present - expected)
        raise ManifestError(
            f"ground-truth labels do not match the {len(class_names)} declared "
            f"classes: missing {missing}, unexpected {extra}"
        )
    return labels.astype("<i4")


def convert(manifest: ConversionManifest) -> Path:
    """Convert one MAT pair; writes the cube directory and prints class counts."""
    values = read_mat_variable(manifest.data_path, manifest.cube_key)
    gt = read_mat_variable(manifest.gt_path, manifest.gt_key)

    if values.ndim != 3:
        raise ManifestError(f"data cube must be 3-D, got shape {values.shape}")
    if manifest.band_axis == "first":
        values = values.transpose(1, 2, 0)

    labels = _validated_labels(gt, manifest.class_names)
    if values.shape[:2] != labels.shape:
        raise ShapeMismatchError(
            f"data cube spatial dims {values.shape[:2]} do not match "
            f"ground-truth dims {labels.shape}"
        )

    h, w, b = values.shape
    out = Path(manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": manifest.name,
        "height": h,
        "width": w,
        "bands": b,
        "classes": list(manifest.class_names),
        "dtype": "f32le",
        "layout": "bsq",
    }
    (out / f"{manifest.name}.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )
    bsq = np.ascontiguousarray(values.astype("<f4").transpose(2, 0, 1))
    (out / f"{manifest.name}.cube").write_bytes(bsq.tobytes())
    (out / f"{manifest.name}.labels").write_bytes(
        np.ascontiguousarray(labels).tobytes()
    )

    counts = np.bincount(labels.ravel(), minlength=len(manifest.class_names) + 1)
    width = max(len(n) for n in ("unlabeled", *manifest.class_names))
    print(f"wrote cube {manifest.name} ({h}x{w}x{b}) to {out}")
    print(f"  {'unlabeled':<{width}}  {int(counts[0])}")
    for i, cname in enumerate(manifest.class_names, start=1):
        print(f"  {cname:<{width}}  {int(counts[i])}")
    return out
