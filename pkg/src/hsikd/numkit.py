"""Dense float64 linear algebra: matmul, a cyclic-Jacobi eigensolver, and PCA.

Matrices are plain 2-D float64 numpy arrays (row-major). Everything here is a
pure function; all public operations validate shapes and reject non-finite
input. Throughput is a non-goal: the largest matrices in this project are a
few hundred on a side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, DimensionError, ValidationError

MAX_JACOBI_SWEEPS = 100


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite 2-D float64 array, raising ValidationError otherwise."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got {m.ndim}-D")
    if not np.isfinite(m).all():
        raise ValidationError(f"{name} contains NaN or Inf entries")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with explicit shape validation."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def eigh_symmetric(m, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Full eigendecomposition of a symmetric matrix via cyclic Jacobi rotations.

    Sweeps row-by-row over the upper triangle, rotating away each off-diagonal
    element, until the largest off-diagonal magnitude is at most ``tol``.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues sorted descending
    and the matching eigenvectors in the columns of an orthonormal matrix Q,
    so that ``m ~= Q @ diag(eigenvalues) @ Q.T``.
    """
    a = as_matrix(m, "m").copy()
    n = a.shape[0]
    if a.shape[0] != a.shape[1]:
        raise ValidationError(f"matrix must be square, got {a.shape}")
    if n > 0 and np.abs(a - a.T).max() > 1e-9:
        raise ValidationError("matrix is not symmetric within 1e-9")
    if not (tol > 0):
        raise ValidationError("tol must be positive")

    q = np.eye(n)
    for _ in range(MAX_JACOBI_SWEEPS):
        if _max_offdiag(a) <= tol:
            break
        for p in range(n - 1):
            for r in range(p + 1, n):
                apq = a[p, r]
                if apq == 0.0:
                    continue
                # Stable rotation angle (Golub & Van Loan style).
                theta = (a[r, r] - a[p, p]) / (2.0 * apq)
                if theta == 0.0:
                    t = 1.0
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_r = a[:, r].copy()
                a[:, p] = c * col_p - s * col_r
                a[:, r] = s * col_p + c * col_r
                row_p = a[p, :].copy()
                row_r = a[r, :].copy()
                a[p, :] = c * row_p - s * row_r
                a[r, :] = s * row_p + c * row_r
                a[p, r] = 0.0
                a[r, p] = 0.0

                q_p = q[:, p].copy()
                q_r = q[:, r].copy()
                q[:, p] = c * q_p - s * q_r
                q[:, r] = s * q_p + c * q_r
    if _max_offdiag(a) > tol:
        raise ConvergenceError(
            f"Jacobi did not reach off-diagonal tolerance {tol} "
            f"within {MAX_JACOBI_SWEEPS} sweeps (residual {_max_offdiag(a)})"
        )

    eigvals = np.diag(a).copy()
    order = np.argsort(-eigvals, kind="stable")
    return eigvals[order], q[:, order]


def _max_offdiag(a: np.ndarray) -> float:
    n = a.shape[0]
    if n < 2:
        return 0.0
    mask = ~np.eye(n, dtype=bool)
    return float(np.abs(a[mask]).max())


@dataclass(frozen=True)
class PcaModel:
    """Principal axes of a spectra matrix.

    ``mean`` has one entry per band, ``components`` holds K orthonormal rows,
    ``eigenvalues`` are the matching variances, sorted non-increasing. Each
    component row is sign-fixed so its largest-magnitude entry is non-negative,
    which makes fits bit-reproducible.
    """

    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def n_bands(self) -> int:
        return self.components.shape[1]


def pca_fit(spectra, k: int) -> PcaModel:
    """Fit a K-component PCA on an (n_pixels, bands) spectra matrix.

    Mean-centers the input, forms the unbiased 1/(n-1) covariance, and keeps
    the top-k eigenpairs of the Jacobi eigensolver. Zero-variance input is
    legal and yields all-zero eigenvalues.
    """
    x = as_matrix(spectra, "spectra")
    n, bands = x.shape
    if n < 2:
        raise ValidationError(f"need at least 2 pixels to fit PCA, got {n}")
    if not (1 <= k <= bands):
        raise ValidationError(f"k must be in 1..{bands}, got {k}")

    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (n - 1)
    cov = 0.5 * (cov + cov.T)  # remove roundoff asymmetry before Jacobi

    scale = float(np.abs(cov).max())
    tol = 1e-11 * max(1.0, scale)
    eigvals, eigvecs = eigh_symmetric(cov, tol=tol)

    components = eigvecs[:, :k].T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0.0:
            components[i] = -components[i]
    return PcaModel(mean=mean, components=components, eigenvalues=eigvals[:k].copy())


def pca_project(model: PcaModel, spectra) -> np.ndarray:
    """Project spectra onto the principal axes: ``(x - mean) @ components.T``."""
    x = as_matrix(spectra, "spectra")
    if x.shape[1] != model.n_bands:
        raise DimensionError(
            f"spectra have {x.shape[1]} bands, model expects {model.n_bands}"
        )
    return (x - model.mean) @ model.components.T
