"""
Ensembles and their empirical moments.

All moments use the 1/M normalization (not the 1/(M-1) default of most
statistics libraries): with it the ensemble Kalman-Bucy filter reproduces the
Kalman-Bucy mean and covariance exactly for linear models.

Member arrays have shape ``(..., M, d)``; every reduction runs over axis -2 so
the same helpers serve a single ensemble and a ``(K, M, d)`` batch.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg

from .errors import DimensionError, SingularMatrixError
from .linalg import inv_sqrtm_spd, sqrtm_psd, symmetrize
from .model import InitialLaw, ModelSpec


@dataclass(frozen=True, eq=False)
class Ensemble:
    """M members in R^{d_x}, stored row-wise."""

    members: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.members, dtype=float)
        if x.ndim != 2:
            raise DimensionError(f"ensemble members must be (M, d_x), got {x.shape}")
        if x.shape[0] < 2:
            raise DimensionError(f"ensemble needs at least 2 members, got {x.shape[0]}")
        object.__setattr__(self, "members", x)

    @property
    def M(self) -> int:
        return self.members.shape[0]

    @property
    def d_x(self) -> int:
        return self.members.shape[1]

    def mean(self) -> np.ndarray:
        return empirical_mean(self.members)

    def deviations(self) -> np.ndarray:
        return self.members - self.mean()

    def covariance(self) -> np.ndarray:
        return cross_cov(self.members, self.members)

    def law(self) -> InitialLaw:
        """Gaussian law with the ensemble's empirical moments."""
        return InitialLaw(mean=self.mean(), cov=symmetrize(self.covariance()))


def empirical_mean(members: np.ndarray) -> np.ndarray:
    members = np.asarray(members, dtype=float)
    if members.ndim < 2 or members.shape[-2] == 0:
        raise DimensionError("empirical mean of an empty ensemble")
    return members.mean(axis=-2)


def cross_cov(members: np.ndarray, images: np.ndarray) -> np.ndarray:
    """(1/M) Σ (x_j - x̄)(g_j - ḡ)^T, shape ``(..., d_x, d)``."""
    members = np.asarray(members, dtype=float)
    images = np.asarray(images, dtype=float)
    if members.shape[:-1] != images.shape[:-1]:
        raise DimensionError(
            f"members {members.shape} and images {images.shape} disagree on the member count"
        )
    m = members.shape[-2]
    dx = members - empirical_mean(members)[..., None, :]
    dg = images - empirical_mean(images)[..., None, :]
    return np.einsum("...mi,...mj->...ij", dx, dg) / m


class EnsembleMoments(NamedTuple):
    """One-pass statistics of a (batch of) ensemble(s) under a model."""

    f: np.ndarray  # f(X), (..., M, d_x)
    h: np.ndarray  # h(X), (..., M, d_y)
    mean: np.ndarray  # (..., d_x)
    h_mean: np.ndarray  # (..., d_y)
    cov: np.ndarray  # C, (..., d_x, d_x)
    cov_xh: np.ndarray  # C^{xh}, (..., d_x, d_y)
    cov_xf: np.ndarray  # C^{xf}, (..., d_x, d_x)


def ensemble_moments(members: np.ndarray, model: ModelSpec) -> EnsembleMoments:
    fx = model.f(members)
    hx = model.h(members)
    m = members.shape[-2]
    mean = members.mean(axis=-2)
    h_mean = hx.mean(axis=-2)
    dx = members - mean[..., None, :]
    dx_t = np.swapaxes(dx, -1, -2)
    cov = symmetrize(dx_t @ dx / m)
    cov_xh = dx_t @ (hx - h_mean[..., None, :]) / m
    cov_xf = dx_t @ (fx - fx.mean(axis=-2)[..., None, :]) / m
    return EnsembleMoments(fx, hx, mean, h_mean, cov, cov_xh, cov_xf)


def moment_matched_initial(law: InitialLaw, M: int, rng: np.random.Generator) -> Ensemble:
    """
    Draw M members whose empirical mean and covariance equal the law exactly.

    Standard-normal draws are centered, whitened by the inverse square root of
    their own sample covariance, colored by C_0^{1/2} and shifted by m_0.
    """
    d_x = law.d_x
    if M <= d_x:
        raise DimensionError(
            f"moment matching needs M > d_x (got M={M}, d_x={d_x}): sample covariance is singular"
        )
    z = rng.standard_normal((M, d_x))
    z -= z.mean(axis=0)
    try:
        whiten = inv_sqrtm_spd(z.T @ z / M, floor=1e-14)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            "standard-normal draws are degenerate", exc.smallest_eigenvalue
        ) from exc
    members = z @ whiten @ sqrtm_psd(law.cov) + law.mean
    return Ensemble(members)


def tile_or_resample(
    ensemble: Ensemble, K: int, M: int, rng: np.random.Generator
) -> np.ndarray:
    """
    K initial ensembles of size M started from a filter ensemble.

    The ensemble itself is replicated when its size is M; otherwise each copy
    is a moment-matched draw from the ensemble's empirical law.
    """
    if M == ensemble.M:
        return np.broadcast_to(ensemble.members, (K, M, ensemble.d_x)).copy()
    law = ensemble.law()
    return np.stack(
        [moment_matched_initial(law, M, child).members for child in rng.spawn(K)]
    )


def min_eigenvalue(cov: np.ndarray) -> float:
    """Smallest eigenvalue over a (batch of) symmetric matrices."""
    cov = np.asarray(cov, dtype=float)
    if cov.ndim == 2:
        return float(linalg.eigvalsh(cov)[0])
    return float(np.linalg.eigvalsh(cov)[..., 0].min())


__all__ = [
    "Ensemble",
    "EnsembleMoments",
    "empirical_mean",
    "cross_cov",
    "ensemble_moments",
    "moment_matched_initial",
    "tile_or_resample",
    "min_eigenvalue",
    "sqrtm_psd",
    "inv_sqrtm_spd",
]
