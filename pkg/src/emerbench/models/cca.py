"""Linear canonical correlation analysis for two-modality fusion."""
from dataclasses import dataclass

import numpy as np

from ..errors import RankDeficient, ValidationError

DEFAULT_RIDGE = 1e-4


@dataclass(frozen=True)
class CcaProjection:
    wx: np.ndarray  # (dx, k)
    wy: np.ndarray  # (dy, k)
    correlations: np.ndarray  # (k,), descending
    mean_x: np.ndarray
    mean_y: np.ndarray

    def transform(self, X, Y):
        """Fused sample: both projections side by side, (n, 2k)."""
        return np.hstack([(X - self.mean_x) @ self.wx, (Y - self.mean_y) @ self.wy])


def regularized_covariances(X, Y, ridge=DEFAULT_RIDGE):
    """Covariances with ``ridge * trace(C) / dim`` added to each auto-covariance diagonal."""
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    n = X.shape[0]
    cxx = Xc.T @ Xc / n
    cyy = Yc.T @ Yc / n
    cxy = Xc.T @ Yc / n
    cxx = cxx + ridge * np.trace(cxx) / cxx.shape[0] * np.eye(cxx.shape[0])
    cyy = cyy + ridge * np.trace(cyy) / cyy.shape[0] * np.eye(cyy.shape[0])
    return cxx, cyy, cxy


def _inv_sqrt(c, which):
    w, v = np.linalg.eigh(c)
    if w[-1] <= 0 or w[0] <= w[-1] * 1e-12:
        raise RankDeficient(
            f"{which} covariance is rank deficient after ridge (eigenvalues {w[0]:.3g}..{w[-1]:.3g}); increase ridge"
        )
    return (v / np.sqrt(w)) @ v.T


def cca_fuse(X, Y, k, ridge=DEFAULT_RIDGE) -> CcaProjection:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, dx = X.shape
    dy = Y.shape[1]
    if Y.shape[0] != n:
        raise ValidationError(f"X has {n} samples, Y has {Y.shape[0]}")
    if n <= max(dx, dy):
        raise ValidationError(f"CCA needs more samples ({n}) than dimensions ({max(dx, dy)})")
    if not 1 <= k <= min(dx, dy):
        raise ValidationError(f"k={k} must lie in 1..{min(dx, dy)}")
    cxx, cyy, cxy = regularized_covariances(X, Y, ridge)
    kx = _inv_sqrt(cxx, "X")
    ky = _inv_sqrt(cyy, "Y")
    u, s, vt = np.linalg.svd(kx @ cxy @ ky)
    return CcaProjection(
        wx=kx @ u[:, :k],
        wy=ky @ vt.T[:, :k],
        correlations=np.clip(s[:k], 0.0, 1.0),
        mean_x=X.mean(axis=0),
        mean_y=Y.mean(axis=0),
    )
