"""Centering, whitening, PCA and length normalization.

Statistics are fitted on training data only; ``apply`` reuses them for any
other set. Application order is center, whiten, project, length-normalize.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

EIG_FLOOR = 1e-10


class PreprocessError(ValueError):
    pass


@dataclass(frozen=True)
class Pipeline:
    mean: np.ndarray
    whiten: np.ndarray  # (d, d) in full mode, (d,) in diag mode
    pca: np.ndarray | None = None
    length_norm: bool = True

    @property
    def mode(self) -> str:
        return "diag" if self.whiten.ndim == 1 else "full"

    @property
    def in_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def out_dim(self) -> int:
        return self.in_dim if self.pca is None else self.pca.shape[1]


def _sign_fix(vecs: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def fit_pipeline(train_x, mode: str = "full", pca_dim: int | None = None,
                 length_norm: bool = True) -> Pipeline:
    X = np.atleast_2d(np.asarray(train_x, dtype=np.float64))
    n, d = X.shape
    if mode == "full" and n < d + 1:
        raise PreprocessError(f"full whitening needs at least {d + 1} vectors, got {n}")
    if mode == "diag" and n < 2:
        raise PreprocessError("diagonal whitening needs at least 2 vectors")
    if mode not in ("full", "diag"):
        raise ValueError(f"mode must be 'full' or 'diag', got {mode!r}")

    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (n - 1)
    if mode == "full":
        evals, evecs = np.linalg.eigh(cov)
        if evals[-1] <= 0:
            raise PreprocessError("covariance is zero")
        floor = EIG_FLOOR * evals[-1]
        if np.any(evals < -floor):
            raise PreprocessError("covariance has negative eigenvalues")
        evals = np.maximum(evals, floor)
        U = (evecs / np.sqrt(evals)) @ evecs.T
        U = 0.5 * (U + U.T)
    else:
        var = np.diag(cov).copy()
        if np.any(var <= 0):
            raise PreprocessError("a dimension has zero variance")
        U = 1.0 / np.sqrt(var)

    P = None
    if pca_dim is not None:
        if not 1 <= pca_dim <= d:
            raise ValueError(f"pca_dim must lie in [1, {d}], got {pca_dim}")
        Z = Xc @ U if U.ndim == 2 else Xc * U
        evals, evecs = np.linalg.eigh(Z.T @ Z / (n - 1))
        order = np.argsort(evals)[::-1][:pca_dim]
        P = _sign_fix(evecs[:, order])
    return Pipeline(mean, U, P, length_norm)


def apply(pipeline: Pipeline, x) -> np.ndarray:
    """Transform a row (or stack of rows) with fitted statistics."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != pipeline.in_dim:
        raise ValueError(f"expected dimension {pipeline.in_dim}, got {x.shape[-1]}")
    y = x - pipeline.mean
    y = y @ pipeline.whiten if pipeline.whiten.ndim == 2 else y * pipeline.whiten
    if pipeline.pca is not None:
        y = y @ pipeline.pca
    if pipeline.length_norm:
        norms = np.linalg.norm(y, axis=-1, keepdims=True)
        if np.any(norms == 0):
            raise PreprocessError("zero-norm vector")
        y = y / norms
    return y
