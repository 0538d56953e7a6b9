"""Hyperspectral cube model, file ingestion, synthesis, patches, and splits.

Cube directory format (all little-endian, bit-exact round trip):
  <name>.json    UTF-8 JSON: {"name", "height", "width", "bands",
                 "classes": [...], "dtype": "f32le", "layout": "bsq"}
  <name>.cube    H*W*B float32, band-sequential (band-major, then row-major)
  <name>.labels  H*W int32, row-major, 0 = unlabeled

Label rasters use 0 for unlabeled pixels and 1..|D| for classes, matching the
public HSI ground-truth convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distill import ClassPartition
from .errors import FormatError, GenerationError, SplitError, ValidationError
from .numkit import PcaModel, pca_project


@dataclass
class HsiCube:
    """A (height, width, bands) radiance cube with a per-pixel label raster."""

    name: str
    values: np.ndarray  # (H, W, B) float32
    labels: np.ndarray  # (H, W) int32
    class_names: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        if self.values.ndim != 3:
            raise ValidationError("values must be (height, width, bands)")
        if self.labels.shape != self.values.shape[:2]:
            raise ValidationError("label raster shape does not match values")
        if not np.isfinite(self.values).all():
            raise ValidationError("cube contains non-finite values")
        n = len(self.class_names)
        if self.labels.min() < 0 or self.labels.max() > n:
            raise ValidationError(f"labels must lie in 0..{n}")
        present = np.unique(self.labels)
        for c in range(1, n + 1):
            if c not in present:
                raise ValidationError(f"declared class {c} has no labeled pixel")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def bands(self) -> int:
        return self.values.shape[2]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass
class PatchSet:
    """Flattened PCA-reduced patches: one row per labeled pixel."""

    patches: np.ndarray  # (n, s*s*k) float64
    labels: np.ndarray  # (n,) int32, 1-based
    patch_size: int
    pca_components: int
    split_tag: str = "all"  # "all" | "train" | "test"

    def __post_init__(self):
        self.patches = np.asarray(self.patches, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int32)
        s, k = self.patch_size, self.pca_components
        if s % 2 == 0:
            raise ValidationError("patch size must be odd")
        if self.patches.ndim != 2 or self.patches.shape[1] != s * s * k:
            raise ValidationError(
                f"patches must be (n, {s * s * k}) for s={s}, k={k}"
            )
        if self.labels.shape != (self.patches.shape[0],):
            raise ValidationError("one label per patch required")
        if self.labels.size and self.labels.min() < 1:
            raise ValidationError("patch labels must be nonzero class ids")

    def __len__(self) -> int:
        return self.patches.shape[0]


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int
    partition: ClassPartition

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValidationError("train_fraction must be in (0, 1)")


def write_cube(cube: HsiCube, out_dir) -> Path:
    """Write the three-file cube directory; returns the directory path."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": cube.name,
        "height": cube.height,
        "width": cube.width,
        "bands": cube.bands,
        "classes": list(cube.class_names),
        "dtype": "f32le",
        "layout": "bsq",
    }
    (d / f"{cube.name}.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )
    # band-sequential: band-major, then row-major within each band
    bsq = np.ascontiguousarray(cube.values.transpose(2, 0, 1), dtype="<f4")
    (d / f"{cube.name}.cube").write_bytes(bsq.tobytes())
    (d / f"{cube.name}.labels").write_bytes(
        np.ascontiguousarray(cube.labels, dtype="<i4").tobytes()
    )
    return d


def load_cube(path) -> HsiCube:
    """Load and validate a cube directory written by write_cube or the converter."""
    d = Path(path)
    if not d.is_dir():
        raise FileNotFoundError(f"cube directory not found: {d}")
    metas = sorted(d.glob("*.json"))
    if len(metas) != 1:
        raise FormatError(f"expected exactly one .json in {d}, found {len(metas)}")
    try:
        meta = json.loads(metas[0].read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"bad cube metadata {metas[0].name}: {e}") from e
    for key in ("name", "height", "width", "bands", "classes", "dtype", "layout"):
        if key not in meta:
            raise FormatError(f"cube metadata missing key {key!r}")
    if meta["dtype"] != "f32le" or meta["layout"] != "bsq":
        raise FormatError(
            f"unsupported cube encoding dtype={meta['dtype']} layout={meta['layout']}"
        )
    name = meta["name"]
    h, w, b = int(meta["height"]), int(meta["width"]), int(meta["bands"])

    cube_path = d / f"{name}.cube"
    labels_path = d / f"{name}.labels"
    for p in (cube_path, labels_path):
        if not p.exists():
            raise FileNotFoundError(f"missing cube component: {p}")

    raw = cube_path.read_bytes()
    expected = h * w * b * 4
    if len(raw) != expected:
        raise FormatError(
            f"{cube_path.name} holds {len(raw)} bytes, expected {expected}"
        )
    values = (
        np.frombuffer(raw, dtype="<f4").reshape(b, h, w).transpose(1, 2, 0).copy()
    )

    raw = labels_path.read_bytes()
    expected = h * w * 4
    if len(raw) != expected:
        raise FormatError(
            f"{labels_path.name} holds {len(raw)} bytes, expected {expected}"
        )
    labels = np.frombuffer(raw, dtype="<i4").reshape(h, w).copy()

    n = len(meta["classes"])
    if labels.max(initial=0) > n:
        raise FormatError(
            f"label raster references class {int(labels.max())} "
            f"but only {n} classes are declared"
        )
    return HsiCube(
        name=name,
        values=values,
        labels=labels,
        class_names=[str(c) for c in meta["classes"]],
    )


def synth_cube(
    n_classes: int, size: int, bands: int, seed: int, noise_sigma: float
) -> HsiCube:
    """Deterministic synthetic cube: Voronoi label regions, smooth class spectra.

    Each class mean spectrum is a cumulative sum of Gaussian increments
    rescaled to [0, 1]; pairwise mean distances are kept at or above
    4 * noise_sigma * sqrt(bands) by redrawing. Pixels are the class mean plus
    independent per-band Gaussian noise.
    """
    if n_classes < 2:
        raise ValidationError("need at least 2 classes")
    if size < 16:
        raise ValidationError("size must be at least 16")
    if bands < 8:
        raise ValidationError("bands must be at least 8")
    if noise_sigma < 0:
        raise ValidationError("noise_sigma must be non-negative")

    rng = np.random.default_rng(seed)
    min_dist = 4.0 * noise_sigma * np.sqrt(bands)
    means = []
    redraws = 0
    while len(means) < n_classes:
        walk = np.cumsum(rng.normal(size=bands))
        lo, hi = walk.min(), walk.max()
        if hi - lo < 1e-12:
            spectrum = np.zeros(bands)
        else:
            spectrum = (walk - lo) / (hi - lo)
        if all(np.linalg.norm(spectrum - m) >= min_dist for m in means):
            means.append(spectrum)
        else:
            redraws += 1
            if redraws > 1000:
                raise GenerationError(
                    "could not find sufficiently separated class spectra "
                    "after 1000 redraws"
                )

    # Voronoi tessellation of distinct seeded sites; ties go to the lower class.
    flat_sites = rng.choice(size * size, size=n_classes, replace=False)
    sites = np.stack([flat_sites // size, flat_sites % size], axis=1)
    rows, cols = np.mgrid[0:size, 0:size]
    d2 = (rows[..., None] - sites[:, 0]) ** 2 + (cols[..., None] - sites[:, 1]) ** 2
    labels = (np.argmin(d2, axis=2) + 1).astype(np.int32)

    mean_stack = np.stack(means)  # (n_classes, bands)
    values = mean_stack[labels - 1].astype(np.float64)
    if noise_sigma > 0:
        values = values + rng.normal(0.0, noise_sigma, size=values.shape)
    return HsiCube(
        name=f"synth{n_classes}c{size}px{bands}b",
        values=values.astype(np.float32),
        labels=labels,
        class_names=[f"region_{i}" for i in range(1, n_classes + 1)],
    )


def slice_patches(cube: HsiCube, pca: PcaModel, s: int) -> PatchSet:
    """Extract the s-by-s neighborhood of every labeled pixel.

    The whole cube is PCA-projected pixel-wise first; windows are taken in the
    projected space with mirror padding at the borders. Patches are flattened
    row-major as (row, col, component); the label is the center pixel's label.
    """
    if s % 2 == 0:
        raise ValidationError("patch size must be odd")
    if not (3 <= s <= min(cube.height, cube.width)):
        raise ValidationError(
            f"patch size must lie in 3..{min(cube.height, cube.width)}"
        )
    if pca.n_bands != cube.bands:
        raise ValidationError(
            f"PCA expects {pca.n_bands} bands, cube has {cube.bands}"
        )

    h, w, b = cube.values.shape
    proj = pca_project(pca, cube.values.reshape(h * w, b).astype(np.float64))
    proj = proj.reshape(h, w, pca.n_components)

    r = s // 2
    padded = np.pad(proj, ((r, r), (r, r), (0, 0)), mode="reflect")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (s, s), axis=(0, 1))
    # windows: (h, w, k, s, s) -> flatten per pixel in (row, col, component) order
    ii, jj = np.nonzero(cube.labels > 0)  # row-major raster order
    flat = windows[ii, jj].transpose(0, 2, 3, 1).reshape(ii.size, s * s * pca.n_components)
    return PatchSet(
        patches=np.ascontiguousarray(flat),
        labels=cube.labels[ii, jj].astype(np.int32),
        patch_size=s,
        pca_components=pca.n_components,
        split_tag="all",
    )


def split(
    ps: PatchSet, spec: SplitSpec
) -> tuple[PatchSet, PatchSet, PatchSet, PatchSet]:
    """Per-class seeded shuffle-and-split into the four phase sets.

    Returns (base_train, base_test, incr_train, incr_test). Train counts per
    class are round(train_fraction * |c|) (half away from zero); test sets keep
    their true labels.
    """
    part = spec.partition
    present = set(np.unique(ps.labels).tolist())
    for c in part.base + part.incremental:
        if c not in present:
            raise ValidationError(f"partition class {c} has no samples")
    extra = present - set(part.base) - set(part.incremental)
    if extra:
        raise ValidationError(f"samples carry classes outside the partition: {sorted(extra)}")

    rng = np.random.default_rng(spec.seed)
    train_idx: dict[int, np.ndarray] = {}
    test_idx: dict[int, np.ndarray] = {}
    for c in sorted(present):
        idx = np.nonzero(ps.labels == c)[0]
        if idx.size < 2:
            raise SplitError(f"class {c} has {idx.size} sample(s); need at least 2")
        perm = rng.permutation(idx.size)
        n_train = int(np.floor(spec.train_fraction * idx.size + 0.5))
        shuffled = idx[perm]
        train_idx[c] = shuffled[:n_train]
        test_idx[c] = shuffled[n_train:]

    def gather(classes, index_map, tag):
        chunks = [index_map[c] for c in classes]
        sel = np.sort(np.concatenate(chunks)) if chunks else np.empty(0, dtype=np.intp)
        return PatchSet(
            patches=ps.patches[sel],
            labels=ps.labels[sel],
            patch_size=ps.patch_size,
            pca_components=ps.pca_components,
            split_tag=tag,
        )

    return (
        gather(part.base, train_idx, "train"),
        gather(part.base, test_idx, "test"),
        gather(part.incremental, train_idx, "train"),
        gather(part.incremental, test_idx, "test"),
    )
