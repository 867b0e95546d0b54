"""Background statistics and the spectral matched filter.

The matched filter response of pixel ``b`` to signature ``x`` is::

    (x - mu)' S^-1 (b - mu) / sqrt((x - mu)' S^-1 (x - mu))

with ``mu``/``S`` the background mean and covariance.  ``S^-1`` is never
formed; every quadratic form goes through the lower Cholesky factor ``L`` of
the regularized covariance, ``whiten(s) = L^-1 (s - mu)``, so that the
response is the dot product of the whitened pixel with the unit whitened
signature.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol

import numpy as np
import scipy.linalg as la

from .bags import BagSet, as_spectrum
from .errors import DegenerateSignatureError, InputError, SingularBackgroundError

__all__ = [
    "BackgroundModel",
    "InstanceScorer",
    "MatchedFilter",
    "fit_background",
    "fit_background_from_bags",
    "default_regularization",
    "whiten",
    "matched_filter",
    "DEGENERATE_NORM",
]

# Whitened signature norms below this are treated as "signature == mean".
DEGENERATE_NORM = 1e-12


def default_regularization(covariance: np.ndarray) -> float:
    covariance = np.asarray(covariance)
    return 1e-6 * float(np.trace(covariance)) / covariance.shape[0]


@dataclass(frozen=True)
class BackgroundModel:
    """Background mean/covariance with a cached Cholesky factor.

    Build with :func:`fit_background` or :meth:`from_moments`; the factor
    is of ``covariance + regularization * I``.
    """

    mean: np.ndarray
    covariance: np.ndarray
    factor: np.ndarray
    regularization: float = 0.0

    @classmethod
    def from_moments(cls, mean, covariance, regularization: float = 0.0) -> "BackgroundModel":
        mean = as_spectrum(mean, name="background mean")
        cov = np.array(covariance, dtype=np.float64)
        d = mean.size
        if cov.shape != (d, d):
            raise InputError(f"covariance shape {cov.shape} does not match {d} bands")
        if not np.all(np.isfinite(cov)):
            raise InputError("covariance contains non-finite values")
        scale = max(np.abs(cov).max(), np.finfo(float).tiny)
        if np.abs(cov - cov.T).max() > 1e-10 * scale:
            raise InputError("covariance is not symmetric")
        if regularization < 0 or not np.isfinite(regularization):
            raise InputError(f"regularization must be a finite nonnegative number, got {regularization}")
        cov = 0.5 * (cov + cov.T)
        try:
            factor = la.cholesky(cov + regularization * np.eye(d), lower=True)
        except la.LinAlgError as exc:
            raise SingularBackgroundError(
                f"background covariance is not positive definite (regularization={regularization:g})"
            ) from exc
        cov.setflags(write=False)
        factor.setflags(write=False)
        return cls(mean, cov, factor, float(regularization))

    @property
    def bands(self) -> int:
        return int(self.mean.size)

    def whiten(self, spectra) -> np.ndarray:
        """Whiten one spectrum (D,) or a stack of spectra (N, D)."""
        s = np.asarray(spectra, dtype=np.float64)
        if s.shape[-1] != self.bands:
            raise InputError(f"expected {self.bands} bands, got {s.shape[-1]}")
        centered = s - self.mean
        if s.ndim == 1:
            return la.solve_triangular(self.factor, centered, lower=True)
        return la.solve_triangular(self.factor, centered.T, lower=True).T

    def mahalanobis2(self, s) -> float:
        w = self.whiten(s)
        return float(w @ w)


def fit_background(pixels, regularization: Optional[float] = None) -> BackgroundModel:
    """Fit mean and (N-1)-normalized covariance to ``pixels`` of shape (N, D).

    ``regularization=None`` uses ``1e-6 * trace(cov) / D``.
    """
    X = np.asarray(pixels, dtype=np.float64)
    if X.ndim != 2:
        raise InputError(f"pixels must be an (N, D) array, got shape {X.shape}")
    n, d = X.shape
    if n < d + 1 or n < 2:
        raise InputError(f"need at least {max(d + 1, 2)} pixels to fit {d} bands, got {n}")
    if not np.all(np.isfinite(X)):
        raise InputError("background pixels contain non-finite values")
    mean = X.mean(axis=0)
    cov = np.atleast_2d(np.cov(X, rowvar=False, ddof=1))
    if regularization is None:
        regularization = default_regularization(cov)
    return BackgroundModel.from_moments(mean, cov, regularization)


def fit_background_from_bags(bagset: BagSet, regularization: Optional[float] = None) -> BackgroundModel:
    """Alternative fit that uses only the negative-bag pixels."""
    if bagset.n_negative == 0:
        raise InputError("no negative bags to fit a background from")
    return fit_background(bagset.negative_pixels(), regularization)


def whiten(model: BackgroundModel, s) -> np.ndarray:
    return model.whiten(s)


def _unit_signature(model: BackgroundModel, signature) -> np.ndarray:
    w = model.whiten(signature)
    norm = float(np.sqrt(w @ w))
    if not norm >= DEGENERATE_NORM:
        raise DegenerateSignatureError(
            f"signature whitened norm {norm:.3g} is below {DEGENERATE_NORM:g}"
        )
    return w / norm


def matched_filter(model: BackgroundModel, signature, pixel) -> float:
    """Matched filter response of a single pixel."""
    u = _unit_signature(model, signature)
    return float(model.whiten(pixel) @ u)


class InstanceScorer(Protocol):
    """A bigger-is-better detection statistic.

    ``prepare`` receives the (N, D) pixels that will be scored repeatedly
    and returns a callable mapping an (M, D) stack of signatures to an
    (M, N) score matrix.  Rows for signatures the detector cannot use must
    be NaN.
    """

    def prepare(self, pixels: np.ndarray) -> Callable[[np.ndarray], np.ndarray]: ...


class MatchedFilter:
    """Matched filter as an :class:`InstanceScorer`."""

    def __init__(self, model: BackgroundModel):
        self.model = model

    def __call__(self, signature, pixels) -> np.ndarray:
        u = _unit_signature(self.model, signature)
        return self._dot(self.model.whiten(np.atleast_2d(pixels)), u[None, :])[0]

    def prepare(self, pixels: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        whitened = self.model.whiten(np.atleast_2d(pixels))
        whitened.setflags(write=False)

        def score(signatures: np.ndarray) -> np.ndarray:
            W = self.model.whiten(np.atleast_2d(signatures))
            norms = np.sqrt(np.einsum("md,md->m", W, W))
            bad = ~(norms >= DEGENERATE_NORM)
            U = W / np.where(bad, 1.0, norms)[:, None]
            out = self._dot(whitened, U)
            out[bad] = np.nan
            return out

        return score

    @staticmethod
    def _dot(whitened: np.ndarray, units: np.ndarray) -> np.ndarray:
        # Band-by-band accumulation instead of BLAS: every score is then
        # computed by the same operation sequence whatever its position or
        # the batch size, which keeps scalar and batched results identical.
        out = units[:, 0:1] * whitened[None, :, 0]
        for k in range(1, whitened.shape[1]):
            out += units[:, k:k + 1] * whitened[None, :, k]
        return out
