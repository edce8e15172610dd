"""Canonical correlation analysis via SVD, with spectral-filter regularizers.

The solver never forms covariance matrices: each view is centered, reduced
to its thin SVD, and the canonical system is read off an SVD of the small
correlation operator T = Ux' Uy.  Tikhonov regularization soft-shrinks the
singular values of each view (by sigma / sqrt(sigma^2 + gamma)) and
truncated-SVD regularization hard-prunes them; both act on T through
diagonal scalings only, which is what makes the regularization paths in
:mod:`ccax.selection` cheap.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .io import FeatureMatrix, ModelArchive, format_manifest_value

#: Relative singular-value cutoff: anything below rank_tol * s_max is
#: treated as numerical noise and dropped.
def default_rank_tol(n: int, m: int) -> float:
    return max(n, m) * 2.0 ** -52


@dataclass(frozen=True)
class RegularizationSpec:
    """How a CCA model was (or should be) regularized.

    ``kind`` is one of ``none``, ``tikhonov`` (penalties gamma_x, gamma_y)
    or ``tsvd`` (per-view ranks k_x, k_y).
    """

    kind: str
    gamma_x: float = 0.0
    gamma_y: float = 0.0
    k_x: int = 0
    k_y: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "tikhonov", "tsvd"):
            raise ValueError(f"unknown regularization kind {self.kind!r}")
        if self.kind == "tikhonov" and (self.gamma_x < 0 or self.gamma_y < 0):
            raise ValueError("tikhonov penalties must be >= 0")
        if self.kind == "tsvd" and (self.k_x < 1 or self.k_y < 1):
            raise ValueError("tsvd ranks must be >= 1")

    @classmethod
    def none(cls) -> "RegularizationSpec":
        return cls("none")

    @classmethod
    def tikhonov(cls, gamma_x: float, gamma_y: float) -> "RegularizationSpec":
        return cls("tikhonov", gamma_x=float(gamma_x), gamma_y=float(gamma_y))

    @classmethod
    def tsvd(cls, k_x: int, k_y: int) -> "RegularizationSpec":
        return cls("tsvd", k_x=int(k_x), k_y=int(k_y))


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD of a centered data matrix, cut at numerical rank."""

    u_left: np.ndarray   # (n, r)
    s: np.ndarray        # (r,) nonincreasing, positive
    v_right: np.ndarray  # (m, r)

    @property
    def rank(self) -> int:
        return self.s.shape[0]


@dataclass(frozen=True)
class CcaModel:
    """Canonical weights, correlations, and the training column means.

    ``u`` (m_x, k) and ``v`` (m_y, k) map centered feature vectors into the
    shared space; ``sigma`` holds the k canonical correlations, sorted
    nonincreasing and clamped to [0, 1].
    """

    u: np.ndarray
    v: np.ndarray
    sigma: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    reg: RegularizationSpec
    n: int

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    @property
    def m_x(self) -> int:
        return self.u.shape[0]

    @property
    def m_y(self) -> int:
        return self.v.shape[0]


def center_columns(m: FeatureMatrix) -> tuple[FeatureMatrix, np.ndarray]:
    """Subtract column means; returns the centered matrix and the means.

    The means are what test/validation vectors must be shifted by before
    projecting through a model fit on this data.
    """
    means = m.values.mean(axis=0)
    return FeatureMatrix(m.values - means, ids=m.ids), means


def thin_svd(m: FeatureMatrix, rank_tol: float | None = None) -> SvdFactors:
    """Thin SVD with singular values below rank_tol * s_max discarded."""
    if rank_tol is None:
        rank_tol = default_rank_tol(*m.values.shape)
    u, s, vt = np.linalg.svd(m.values, full_matrices=False)
    if s.size and s[0] > 0:
        r = int(np.count_nonzero(s >= rank_tol * s[0]))
    else:
        r = 0
    return SvdFactors(u[:, :r], s[:r], vt[:r].T)


def spectral_filter_soft(s, alpha: float):
    """Tikhonov shrinkage factor s / sqrt(s^2 + alpha^2), in [0, 1)."""
    if alpha <= 0:
        raise ValueError("soft filter needs alpha > 0")
    s = np.asarray(s, dtype=np.float64)
    out = s / np.sqrt(s * s + alpha * alpha)
    return out if out.ndim else float(out)

def spectral_filter_hard(s, threshold: float):
    """Hard threshold: 1 where s >= threshold, else 0."""
    s = np.asarray(s, dtype=np.float64)
    out = (s >= threshold).astype(np.float64)
    return out if out.ndim else float(out)


def _sign_fix(p_x: np.ndarray, p_y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Largest-magnitude entry of each p_x column made positive; the paired
    # p_y column flips with it so p_x Sigma p_y' is untouched.
    signs = np.ones(p_x.shape[1])
    for j in range(p_x.shape[1]):
        lead = np.argmax(np.abs(p_x[:, j]))
        if p_x[lead, j] < 0:
            signs[j] = -1.0
    return p_x * signs, p_y * signs


def _validate_pair(x: FeatureMatrix, y: FeatureMatrix) -> None:
    if x.rows != y.rows:
        raise ValueError(f"row counts differ: {x.rows} vs {y.rows}")
    if x.rows <= max(x.cols, y.cols):
        warnings.warn(
            f"n={x.rows} <= max feature dimension {max(x.cols, y.cols)}; "
            "covariances are singular and ranks will be truncated",
            stacklevel=3,
        )


def _prepare(x, y, rank_tol):
    """Center both views, take thin SVDs, and form T = Ux' Uy."""
    xc, mean_x = center_columns(x)
    yc, mean_y = center_columns(y)
    fx = thin_svd(xc, rank_tol)
    fy = thin_svd(yc, rank_tol)
    if fx.rank == 0 or fy.rank == 0:
        raise ValueError("zero numerical rank after centering")
    t = fx.u_left.T @ fy.u_left
    return fx, fy, t, mean_x, mean_y


def _finish(u, v, sigma, mean_x, mean_y, reg, n) -> CcaModel:
    sigma = np.clip(sigma, 0.0, 1.0)
    for arr in (u, v, sigma, mean_x, mean_y):
        arr.flags.writeable = False
    return CcaModel(u=u, v=v, sigma=sigma, mean_x=mean_x, mean_y=mean_y,
                    reg=reg, n=n)


def cca_fit(x: FeatureMatrix, y: FeatureMatrix,
            rank_tol: float | None = None) -> CcaModel:
    """Unregularized CCA: SVD both views, SVD of T = Ux' Uy.

    Canonical weights are U = Vx Sx^-1 Px and V = Vy Sy^-1 Py, so that
    U'(Xc'Xc)U = I and V'(Yc'Yc)V = I on the (internally centered)
    training data.
    """
    _validate_pair(x, y)
    fx, fy, t, mean_x, mean_y = _prepare(x, y, rank_tol)
    p_x, sigma, p_yt = np.linalg.svd(t, full_matrices=False)
    p_x, p_y = _sign_fix(p_x, p_yt.T)
    u = (fx.v_right / fx.s) @ p_x
    v = (fy.v_right / fy.s) @ p_y
    return _finish(u, v, sigma, mean_x, mean_y, RegularizationSpec.none(),
                   x.rows)


def cca_fit_tikhonov(x: FeatureMatrix, y: FeatureMatrix,
                     gamma_x: float, gamma_y: float,
                     rank_tol: float | None = None) -> CcaModel:
    """Tikhonov-regularized CCA.

    Solves max Tr(U' Xc'Yc V) under U'(Xc'Xc + gamma_x I)U = I and the
    symmetric constraint on V, by an SVD of the soft-filtered operator
    diag(1/sqrt(s_x^2+gamma_x)) (Sx T Sy) diag(1/sqrt(s_y^2+gamma_y)).
    """
    if gamma_x < 0 or gamma_y < 0:
        raise ValueError("penalties must be >= 0")
    _validate_pair(x, y)
    fx, fy, t, mean_x, mean_y = _prepare(x, y, rank_tol)
    t0 = (fx.s[:, None] * t) * fy.s[None, :]
    dx = 1.0 / np.sqrt(fx.s**2 + gamma_x)
    dy = 1.0 / np.sqrt(fy.s**2 + gamma_y)
    p_x, sigma, p_yt = np.linalg.svd((dx[:, None] * t0) * dy[None, :],
                                     full_matrices=False)
    p_x, p_y = _sign_fix(p_x, p_yt.T)
    u = (fx.v_right * dx) @ p_x
    v = (fy.v_right * dy) @ p_y
    return _finish(u, v, sigma, mean_x, mean_y,
                   RegularizationSpec.tikhonov(gamma_x, gamma_y), x.rows)


def cca_fit_tsvd(x: FeatureMatrix, y: FeatureMatrix,
                 k_x: int, k_y: int,
                 rank_tol: float | None = None) -> CcaModel:
    """Truncated-SVD-regularized CCA.

    Each view's covariance metric is replaced by that of its best rank-k
    approximation; the regularized operator is just the leading k_x x k_y
    block of T.
    """
    _validate_pair(x, y)
    fx, fy, t, mean_x, mean_y = _prepare(x, y, rank_tol)
    if not (1 <= k_x <= fx.rank):
        raise ValueError(f"k_x={k_x} outside [1, rank(X)={fx.rank}]")
    if not (1 <= k_y <= fy.rank):
        raise ValueError(f"k_y={k_y} outside [1, rank(Y)={fy.rank}]")
    p_x, sigma, p_yt = np.linalg.svd(t[:k_x, :k_y], full_matrices=False)
    p_x, p_y = _sign_fix(p_x, p_yt.T)
    u = (fx.v_right[:, :k_x] / fx.s[:k_x]) @ p_x
    v = (fy.v_right[:, :k_y] / fy.s[:k_y]) @ p_y
    return _finish(u, v, sigma, mean_x, mean_y,
                   RegularizationSpec.tsvd(k_x, k_y), x.rows)


def verify_filter_forms(x: FeatureMatrix, y: FeatureMatrix,
                        spec: RegularizationSpec,
                        rank_tol: float | None = None) -> float:
    """Max |difference| between the two constructions of the operator.

    Route one builds the regularized correlation operator from its closed
    form (explicit diagonal matrix products for Tikhonov; the leading
    submatrix of T for T-SVD).  Route two applies the equivalent
    elementwise spectral filter to the singular values.  The two agree to
    rounding error (and exactly, for T-SVD).
    """
    fx, fy, t, _, _ = _prepare(x, y, rank_tol)
    if spec.kind == "tsvd":
        k_x, k_y = spec.k_x, spec.k_y
        if not (1 <= k_x <= fx.rank and 1 <= k_y <= fy.rank):
            raise ValueError("tsvd ranks exceed numerical rank")
        closed = t[:k_x, :k_y]
        f_x = spectral_filter_hard(fx.s, fx.s[k_x - 1])
        f_y = spectral_filter_hard(fy.s, fy.s[k_y - 1])
        filtered = ((f_x[:, None] * t) * f_y[None, :])[:k_x, :k_y]
    else:
        gamma_x = spec.gamma_x if spec.kind == "tikhonov" else 0.0
        gamma_y = spec.gamma_y if spec.kind == "tikhonov" else 0.0
        left = np.diag(1.0 / np.sqrt(fx.s**2 + gamma_x)) @ np.diag(fx.s)
        right = np.diag(fy.s) @ np.diag(1.0 / np.sqrt(fy.s**2 + gamma_y))
        closed = left @ t @ right
        # gamma = 0 keeps the exact ratio s/s rather than the soft filter,
        # whose alpha must be positive
        f_x = (spectral_filter_soft(fx.s, np.sqrt(gamma_x))
               if gamma_x > 0 else fx.s / fx.s)
        f_y = (spectral_filter_soft(fy.s, np.sqrt(gamma_y))
               if gamma_y > 0 else fy.s / fy.s)
        filtered = (f_x[:, None] * t) * f_y[None, :]
    return float(np.max(np.abs(closed - filtered))) if closed.size else 0.0


# ---------------------------------------------------------------------------
# Archive round trip
# ---------------------------------------------------------------------------

def model_to_archive(model: CcaModel) -> ModelArchive:
    manifest = {
        "kind": model.reg.kind,
        "gamma_x": format_manifest_value(model.reg.gamma_x),
        "gamma_y": format_manifest_value(model.reg.gamma_y),
        "k_x": str(model.reg.k_x),
        "k_y": str(model.reg.k_y),
        "n": str(model.n),
        "m_x": str(model.m_x),
        "m_y": str(model.m_y),
    }
    blobs = {
        "U": FeatureMatrix(model.u),
        "V": FeatureMatrix(model.v),
        "SIGMA": FeatureMatrix(model.sigma[None, :]),
        "MEAN_X": FeatureMatrix(model.mean_x[None, :]),
        "MEAN_Y": FeatureMatrix(model.mean_y[None, :]),
    }
    return ModelArchive(manifest, blobs)


def model_from_archive(archive: ModelArchive) -> CcaModel:
    man = archive.manifest
    reg = RegularizationSpec(
        man["kind"],
        gamma_x=float(man["gamma_x"]),
        gamma_y=float(man["gamma_y"]),
        k_x=int(man["k_x"]),
        k_y=int(man["k_y"]),
    )
    u = archive.blobs["U"].values
    v = archive.blobs["V"].values
    sigma = archive.blobs["SIGMA"].values[0]
    mean_x = archive.blobs["MEAN_X"].values[0]
    mean_y = archive.blobs["MEAN_Y"].values[0]
    if u.shape[0] != int(man["m_x"]) or v.shape[0] != int(man["m_y"]):
        raise ValueError("manifest dimensions disagree with blob headers")
    if u.shape[1] != sigma.shape[0] or v.shape[1] != sigma.shape[0]:
        raise ValueError("weight column counts disagree with SIGMA length")
    return CcaModel(u=u, v=v, sigma=sigma, mean_x=mean_x, mean_y=mean_y,
                    reg=reg, n=int(man["n"]))
