"""Command-line entry point: MAT scene pair -> cube directory."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .convert import (
    BAND_AXES,
    ConversionManifest,
    ConverterError,
    ManifestError,
    MatKeyError,
    ShapeMismatchError,
    convert,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; map them onto the validation code
    def error(self, message):
        raise ManifestError(message)


def read_class_names(path) -> tuple[str, ...]:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"class-name file not found: {p}")
    names = tuple(
        line.strip() for line in p.read_text(encoding="utf-8").splitlines()
        if line.strip()
    )
    if not names:
        raise ManifestError(f"class-name file {p} is empty")
    return names


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(
        prog="matconv",
        description="Convert a MATLAB hyperspectral scene (data + ground-truth "
        "MAT files) into a cube directory.",
    )
    ap.add_argument("--data", required=True, help="MAT file holding the data cube")
    ap.add_argument("--gt", required=True, help="MAT file holding the label raster")
    ap.add_argument("--cube-key", required=True, help="variable name of the cube")
    ap.add_argument("--gt-key", required=True, help="variable name of the labels")
    ap.add_argument("--classes", required=True,
                    help="text file, one class name per line, ordered by label")
    ap.add_argument("--out", required=True, help="output cube directory")
    ap.add_argument("--name", default=None,
                    help="cube name (default: data file stem)")
    ap.add_argument("--band-axis", choices=BAND_AXES, default="last",
                    help="spectral axis position in the source cube "
                    "(last = rows,cols,bands; first = bands,rows,cols)")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
        name = args.name if args.name is not None else Path(args.data).stem
        manifest = ConversionManifest(
            data_path=Path(args.data),
            gt_path=Path(args.gt),
            cube_key=args.cube_key,
            gt_key=args.gt_key,
            class_names=read_class_names(args.classes),
            output_dir=Path(args.out),
            name=name,
            band_axis=args.band_axis,
        )
        convert(manifest)
        return 0
    except ManifestError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (MatKeyError, ShapeMismatchError, ConverterError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
