"""Command-line entry point.

Subcommands cover the whole workflow: ``synth`` writes a synthetic cube,
``train``/``eval``/``ablate``/``sweep-patch`` run the pipeline and emit the
result tables, and ``gradcheck``/``verify-losses`` machine-check the gradient
and loss-decomposition invariants without any input data.

Exit codes are a stable scripting contract: 0 success, 1 validation error,
2 IO/format error, 3 numeric failure. Every table is printed human-readable
and written as CSV with identical cell values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import load_cube, slice_patches, split, synth_cube, write_cube
from .data import SplitSpec
from .distill import ClassPartition, DistillConfig, kl_coupled, kl_decoupled, loss_grads
from .errors import (
    ConvergenceError,
    FormatError,
    GenerationError,
    HsikdError,
    UndefinedKappaError,
    UpdateError,
    ValidationError,
)
from .metrics import format_mean_std
from .net import backward, forward, forward_logits, init_model, load_checkpoint
from .numkit import pca_fit
from .trainer import (
    ExperimentResult,
    config_from_dict,
    config_to_dict,
    evaluate_model,
    run_ablation,
    run_experiment,
    run_patch_sweep,
)
from . import metrics as metrics_mod

GRADCHECK_TOL = 1e-4
IDENTITY_TOL = 1e-9


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; map them onto the validation code
    def error(self, message):
        raise ValidationError(message)


def _fmt(pair: tuple[float, float]) -> str:
    return format_mean_std(pair[0], pair[1])


# ---------------------------------------------------------------------------
# table rendering


def render_results_table(res: ExperimentResult, class_names) -> tuple[str, str]:
    """Per-class accuracy table, grouped into base and incremental blocks.

    Returns (human_text, csv_text) carrying identical formatted values.
    """
    part = res.config.partition
    width = max(len(n) for n in class_names) + 2
    width = max(width, len("Incremental Classes"))

    human = [f"{'Class':<{width}}  Accuracy"]
    csv_lines = ["section,class,accuracy"]

    def block(title: str, tag: str, ids) -> None:
        human.append(title)
        for c in ids:
            cell = _fmt(res.per_class[c])
            human.append(f"  {class_names[c - 1]:<{width - 2}}  {cell:>12}")
            csv_lines.append(f"{tag},{class_names[c - 1]},{cell}")

    block("Base Classes", "base", part.base)
    block("Incremental Classes", "incremental", part.incremental)

    human.append("-" * (width + 14))
    for label, pair in (("OA", res.oa), ("AA", res.aa), ("Kappa", res.kappa)):
        cell = _fmt(pair)
        human.append(f"  {label:<{width - 2}}  {cell:>12}")
        csv_lines.append(f"summary,{label},{cell}")

    return "\n".join(human) + "\n", "\n".join(csv_lines) + "\n"


ABLATION_HEADER = "Baseline,Review labels,Mask labels,OA,AA,Kappa"


def render_ablation_table(rows) -> tuple[str, str]:
    """Four-row flag-combination table with checkmark booleans."""
    cells = []
    for row in rows:
        r = row.result
        cells.append(
            (
                "✓",
                "✓" if row.review else "",
                "✓" if row.mask else "",
                _fmt(r.oa),
                _fmt(r.aa),
                _fmt(r.kappa),
            )
        )
    headers = ABLATION_HEADER.split(",")
    widths = [
        max(len(headers[i]), max(len(c[i]) for c in cells)) for i in range(6)
    ]
    human = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
    for c in cells:
        human.append("  ".join(c[i].ljust(widths[i]) for i in range(6)))
    csv_lines = [ABLATION_HEADER] + [",".join(c) for c in cells]
    return "\n".join(human) + "\n", "\n".join(csv_lines) + "\n"


def render_sweep_table(rows) -> tuple[str, str]:
    human = [f"{'patch_size':<12}{'OA':>12}"]
    csv_lines = ["patch_size,OA"]
    for row in rows:
        cell = _fmt(row.result.oa)
        human.append(f"{row.patch_size:<12}{cell:>12}")
        csv_lines.append(f"{row.patch_size},{cell}")
    return "\n".join(human) + "\n", "\n".join(csv_lines) + "\n"


# ---------------------------------------------------------------------------
# config plumbing


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ValidationError(f"override must look like key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings (e.g. class names) need no quoting
    return key, value


def _load_config(args, class_names):
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"config {args.config} is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    for item in args.override or []:
        key, value = _parse_override(item)
        doc[key] = value
    return config_from_dict(doc, class_names)


def _stage(name: str, fn):
    """Run one pipeline stage, prefixing any package error with its name."""
    try:
        return fn()
    except HsikdError as e:
        raise type(e)(f"{name}: {e}") from e


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    cube = synth_cube(
        n_classes=args.classes,
        size=args.size,
        bands=args.bands,
        seed=args.seed,
        noise_sigma=args.noise_sigma,
    )
    d = write_cube(cube, args.out)
    print(f"wrote cube {cube.name} ({cube.height}x{cube.width}x{cube.bands}) to {d}")
    return 0


def cmd_train(args) -> int:
    cube = _stage("load-cube", lambda: load_cube(args.cube))
    cfg = _stage("resolve-config", lambda: _load_config(args, cube.class_names))
    res = _stage("pipeline", lambda: run_experiment(cfg, cube, out_dir=args.out))
    human, csv_text = render_results_table(res, cube.class_names)
    (Path(args.out) / "results.csv").write_text(csv_text, encoding="utf-8")
    print(human, end="")
    return 0


def cmd_eval(args) -> int:
    """Re-derive features and the test split from config, score a checkpoint.

    The pipeline is deterministic, so PCA and the split reconstruct exactly
    the state the checkpointed model was evaluated against at training time.
    """
    cube = _stage("load-cube", lambda: load_cube(args.cube))
    cfg = _stage("resolve-config", lambda: _load_config(args, cube.class_names))
    model, ckpt_classes = _stage("load-checkpoint", lambda: load_checkpoint(args.checkpoint))
    if list(ckpt_classes) != list(cube.class_names):
        raise ValidationError(
            f"checkpoint classes {list(ckpt_classes)} do not match cube classes "
            f"{list(cube.class_names)}"
        )

    def prepare():
        spectra = cube.values.reshape(-1, cube.bands).astype(np.float64)
        pca = pca_fit(spectra, cfg.pca_components)
        ps = slice_patches(cube, pca, cfg.patch_size)
        return split(ps, SplitSpec(cfg.train_fraction, cfg.seed, cfg.partition))

    _, base_test, _, incr_test = _stage("features", prepare)
    if model.n_inputs != base_test.patches.shape[1]:
        raise ValidationError(
            f"checkpoint expects {model.n_inputs} features, cube/config yields "
            f"{base_test.patches.shape[1]}"
        )
    cm = _stage(
        "evaluate",
        lambda: evaluate_model(model, [base_test, incr_test], cfg.partition.n_classes),
    )

    per_class = metrics_mod.per_class_accuracy(cm)
    # single model: reuse the mean±std table with zero spread
    fake = ExperimentResult(
        config=cfg,
        runs=[],
        oa=(metrics_mod.overall_accuracy(cm), 0.0),
        aa=(metrics_mod.average_accuracy(cm), 0.0),
        kappa=(metrics_mod.kappa(cm), 0.0),
        per_class={c: (v, 0.0) for c, v in per_class.items()},
    )
    human, csv_text = render_results_table(fake, cube.class_names)
    print(human, end="")
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "results.csv").write_text(csv_text, encoding="utf-8")
        header = ",".join(cube.class_names)
        rows = [",".join(str(int(v)) for v in row) for row in cm]
        (out / "confusion.csv").write_text(
            header + "\n" + "\n".join(rows) + "\n", encoding="utf-8"
        )
    return 0


def cmd_ablate(args) -> int:
    cube = _stage("load-cube", lambda: load_cube(args.cube))
    cfg = _stage("resolve-config", lambda: _load_config(args, cube.class_names))
    rows = _stage("pipeline", lambda: run_ablation(cfg, cube))
    human, csv_text = render_ablation_table(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.csv").write_text(csv_text, encoding="utf-8")
    (out / "config.json").write_text(
        json.dumps(config_to_dict(cfg, cube.class_names), indent=2) + "\n",
        encoding="utf-8",
    )
    print(human, end="")
    return 0


def cmd_sweep_patch(args) -> int:
    cube = _stage("load-cube", lambda: load_cube(args.cube))
    cfg = _stage("resolve-config", lambda: _load_config(args, cube.class_names))
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError:
        raise ValidationError(f"--sizes must be comma-separated integers, got {args.sizes!r}")
    if not sizes:
        raise ValidationError("--sizes is empty")
    rows = _stage("pipeline", lambda: run_patch_sweep(cfg, cube, sizes))
    human, csv_text = render_sweep_table(rows)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.csv").write_text(csv_text, encoding="utf-8")
    for row in rows:
        for r in row.result.runs:
            header = ",".join(cube.class_names)
            body = "\n".join(",".join(str(int(v)) for v in line) for line in r.confusion)
            (out / f"confusion_s{row.patch_size}_run{r.run}.csv").write_text(
                header + "\n" + body + "\n", encoding="utf-8"
            )
    print(human, end="")
    return 0


# ---------------------------------------------------------------------------
# self-verification


def _loss_for_params(model, x, labels, zt, part, dcfg, phase):
    logits = forward_logits(model, x)
    loss, _ = loss_grads(zt, logits, labels, part, dcfg, phase)
    return loss


def run_gradcheck(seed: int = 0, n_batches: int = 10, h: float = 1e-5):
    """Finite-difference check of every parameter gradient of a 3-layer net.

    Batches alternate between the plain cross-entropy loss and the combined
    incremental loss (mask on/off), so both gradient paths are exercised.
    Returns (max_relative_error, failures) where failures lists
    (batch, layer, kind, index) tuples exceeding the tolerance.
    """
    dims = [12, 16, 10, 6]
    part = ClassPartition(n_classes=6, base=(1, 2, 3), incremental=(4, 5, 6))
    max_err = 0.0
    failures = []
    for b in range(n_batches):
        rng = np.random.default_rng(seed * 1000 + b)
        model = init_model(dims, seed=seed * 1000 + b)
        x = rng.normal(size=(8, dims[0]))
        if b % 3 == 0:
            phase, dcfg, zt = "base", None, None
            labels = rng.integers(1, 7, size=8)
        else:
            mask = b % 3 == 1
            phase = "incremental"
            dcfg = DistillConfig(temperature=2.0, lambda_kd=1.0, mask_enabled=mask)
            teacher = init_model(dims, seed=seed * 1000 + b + 500)
            zt = forward_logits(teacher, x)
            labels = rng.integers(4, 7, size=8)

        logits, cache = forward(model, x)
        _, d_logits = loss_grads(zt, logits, labels, part, dcfg, phase)
        grads = backward(model, cache, d_logits)

        for layer in range(model.n_layers):
            for kind, params, analytic in (
                ("W", model.weights[layer], grads.d_weights[layer]),
                ("b", model.biases[layer], grads.d_biases[layer]),
            ):
                it = np.nditer(params, flags=["multi_index"])
                while not it.finished:
                    idx = it.multi_index
                    keep = params[idx]
                    params[idx] = keep + h
                    up = _loss_for_params(model, x, labels, zt, part, dcfg, phase)
                    params[idx] = keep - h
                    down = _loss_for_params(model, x, labels, zt, part, dcfg, phase)
                    params[idx] = keep
                    fd = (up - down) / (2 * h)
                    a = analytic[idx]
                    rel = abs(a - fd) / max(abs(a), abs(fd), 1e-8)
                    if rel > max_err:
                        max_err = rel
                    if rel > GRADCHECK_TOL:
                        failures.append((b, layer, kind, idx))
                    it.iternext()
    return max_err, failures


def run_loss_identity(cases: int = 1000, inject_bug: bool = False):
    """Coupled-vs-decomposed KL agreement over seeded random logit pairs.

    Each case draws teacher and student logits for a 14-class/5-base and a
    16-class/7-base partition and compares the direct restricted-softmax KL
    against the sum of the three decomposition terms. Returns
    (max_abs_error, failures) with the failing seeds.
    """
    setups = [
        ClassPartition(14, tuple(range(1, 6)), tuple(range(6, 15))),
        ClassPartition(16, tuple(range(1, 8)), tuple(range(8, 17))),
    ]
    max_err = 0.0
    failures = []
    for case in range(cases):
        rng = np.random.default_rng(case)
        for part in setups:
            zt = rng.normal(scale=3.0, size=part.n_classes)
            zs = rng.normal(scale=3.0, size=part.n_classes)
            whole = kl_coupled(zt, zs, part, temperature=2.0)
            base, mass, within = kl_decoupled(zt, zs, part, temperature=2.0)
            parts_sum = base + mass + within
            if inject_bug and case == 137:
                parts_sum += 1e-6  # test hook: forces a visible mismatch
            err = abs(whole - parts_sum)
            if err > max_err:
                max_err = err
            if err > IDENTITY_TOL:
                failures.append(case)
    return max_err, failures


def cmd_gradcheck(args) -> int:
    max_err, failures = run_gradcheck(seed=args.seed)
    print(f"gradcheck: max relative error {max_err:.3e} (tolerance {GRADCHECK_TOL:.0e})")
    if failures:
        for b, layer, kind, idx in failures[:10]:
            print(f"  FAIL batch={b} layer={layer} {kind}{idx}", file=sys.stderr)
        raise UpdateError(f"{len(failures)} gradient entries exceed tolerance")
    print("gradcheck: pass")
    return 0


def cmd_verify_losses(args) -> int:
    max_err, failures = run_loss_identity(cases=args.cases, inject_bug=args.inject_bug)
    print(
        f"verify-losses: max decomposition error {max_err:.3e} over "
        f"{args.cases} cases (tolerance {IDENTITY_TOL:.0e})"
    )
    if failures:
        shown = ", ".join(str(s) for s in failures[:10])
        print(f"  failing seeds: {shown}", file=sys.stderr)
        raise UpdateError(f"decomposition identity violated at seed(s) {shown}")
    print("verify-losses: pass")
    return 0


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hsikd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="subcommand", required=True)

    s = sub.add_parser("synth", help="write a synthetic cube directory")
    s.add_argument("--classes", type=int, required=True)
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--bands", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise-sigma", type=float, default=0.02)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    def pipeline_args(sp, out_required=True):
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--cube", required=True, help="cube directory")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE")
        sp.add_argument("--out", required=out_required)

    s = sub.add_parser("train", help="two-phase pipeline, per-class table")
    pipeline_args(s)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score a checkpoint on the test split")
    pipeline_args(s, out_required=False)
    s.add_argument("--checkpoint", required=True)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="review/mask flag ablation table")
    pipeline_args(s)
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("sweep-patch", help="OA versus neighborhood size")
    pipeline_args(s)
    s.add_argument("--sizes", required=True, help="comma-separated odd sizes")
    s.set_defaults(func=cmd_sweep_patch)

    s = sub.add_parser("gradcheck", help="finite-difference gradient check")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("verify-losses", help="loss decomposition identity check")
    s.add_argument("--cases", type=int, default=1000)
    s.add_argument("--inject-bug", action="store_true", help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_verify_losses)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ConvergenceError, UpdateError, GenerationError, UndefinedKappaError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except HsikdError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
