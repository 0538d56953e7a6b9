"""Shared fixtures: synthetic cubes and a trained base-phase teacher.

The teacher fixture is session-scoped because phase-1 training is the single
most expensive setup step and several test modules score against it.
"""

import numpy as np
import pytest

from hsikd.data import SplitSpec, slice_patches, split, synth_cube
from hsikd.distill import ClassPartition
from hsikd.numkit import pca_fit
from hsikd.trainer import RunConfig, train_base

ACCEPTANCE_REPORT: list[str] = []


def record_acceptance(line: str) -> None:
    """Collect one acceptance-criterion verdict for the end-of-run summary."""
    ACCEPTANCE_REPORT.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_REPORT:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_REPORT:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_cube():
    """A quick 4-class cube for data-plumbing tests."""
    return synth_cube(n_classes=4, size=24, bands=16, seed=3, noise_sigma=0.05)


@pytest.fixture(scope="session")
def part22():
    return ClassPartition(n_classes=4, base=(1, 2), incremental=(3, 4))


@pytest.fixture(scope="session")
def teacher_setup():
    """An 8-class cube, its split, and a teacher trained on the base half.

    Uses the full-capacity default architecture so the teacher's base-class
    posteriors are sharp; relabeling tests depend on that.
    """
    cube = synth_cube(n_classes=8, size=64, bands=32, seed=12, noise_sigma=0.02)
    part = ClassPartition(n_classes=8, base=(1, 2, 3, 4), incremental=(5, 6, 7, 8))
    cfg = RunConfig(partition=part, runs=1, seed=0)
    spectra = cube.values.reshape(-1, cube.bands).astype(np.float64)
    pca = pca_fit(spectra, cfg.pca_components)
    ps = slice_patches(cube, pca, cfg.patch_size)
    base_train, base_test, incr_train, incr_test = split(
        ps, SplitSpec(cfg.train_fraction, cfg.seed, part)
    )
    teacher = train_base(base_train, cfg)
    return {
        "cube": cube,
        "part": part,
        "cfg": cfg,
        "teacher": teacher,
        "base_train": base_train,
        "base_test": base_test,
        "incr_train": incr_train,
        "incr_test": incr_test,
    }
