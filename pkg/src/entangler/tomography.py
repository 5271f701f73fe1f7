"""Two-qubit state tomography from coincidence counts.

Two estimators share the same measurement model, ``lambda_i = t_i * Tr[M Pi_i]``
with ``M = N rho`` the unnormalized state (``N`` the pair flux, ``t_i`` the
acquisition time of setting ``i``):

* ``LinearInversionTomography`` solves the linear system by least squares and
  may return a non-physical matrix;
* ``MaximumLikelihoodTomography`` maximizes the Poisson likelihood over
  ``M = T^dagger T`` with ``T`` lower triangular, which keeps the estimate
  positive semidefinite by construction.

Both follow the scikit-learn estimator conventions: ``fit`` returns ``self``
and fitted attributes end in ``_``.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._optimize import bfgs
from .apparatus import CountRecord
from .core import BASIS, PAULIS, DensityMatrix, ValidationError, as_density_matrix, fidelity
from .measures import StateReport, report
from .settings import ProjectorSetting

_TRIL = np.tril_indices(4, -1)
N_PARAMS = 16

_SINGLE = np.array([np.eye(2), *PAULIS])
# Hermitian operator basis used to vectorize the linear problem
HERMITIAN_BASIS = np.array([np.kron(a, b) / 2 for a in _SINGLE for b in _SINGLE])


def standard_settings(mode="16") -> list[ProjectorSetting]:
    """Product projector designs: ``"16"`` = {H,V,D,R}^2, ``"36"`` = {H,V,D,A,R,L}^2."""
    mode = str(mode)
    if mode in ("16", "16-setting"):
        labels = "HVDR"
    elif mode in ("36", "36-setting"):
        labels = "HVDARL"
    else:
        raise ValidationError(f"unknown tomography design {mode!r}; use '16' or '36'")
    return [ProjectorSetting(a, b) for a, b in itertools.product(labels, repeat=2)]


def _operators(settings) -> np.ndarray:
    return np.array([s.operator() for s in settings])


def design_matrix(settings) -> np.ndarray:
    """Rows map Hermitian-basis coordinates of M to Tr[M Pi_i]."""
    ops = _operators(settings)
    return np.real(np.einsum("ijk,lkj->il", ops, HERMITIAN_BASIS))


def expected_probabilities(rho, settings) -> np.ndarray:
    r = as_density_matrix(rho).entries
    ops = _operators(settings)
    p = np.real(np.einsum("jk,ikj->i", r, ops))
    return np.clip(p, 0.0, 1.0)


def _unpack(records, subtract_accidentals: bool):
    records = list(records)
    if not records:
        raise ValidationError("no count records given")
    for r in records:
        if not isinstance(r, CountRecord):
            raise ValidationError(f"expected CountRecord, got {type(r).__name__}")
    settings = [r.setting for r in records]
    counts = np.array([float(r.coincidences) for r in records])
    if subtract_accidentals:
        counts = np.maximum(counts - np.array([r.accidental_estimate for r in records]), 0.0)
    durations = np.array([float(r.duration) for r in records])
    if counts.sum() <= 0:
        raise ValidationError("all counts are zero; nothing to reconstruct")
    return settings, counts, durations


def _as_records(X, settings) -> list[CountRecord]:
    if isinstance(X, np.ndarray) or (isinstance(X, Sequence) and X and not isinstance(X[0], CountRecord)):
        counts = np.asarray(X, dtype=float).reshape(-1)
        design = standard_settings(settings) if isinstance(settings, (str, int)) else list(settings)
        if len(design) != counts.size:
            raise ValidationError(f"{counts.size} counts given for {len(design)} settings")
        return [CountRecord(s, 1.0, float(n)) for s, n in zip(design, counts)]
    return list(X)


# -- T parameterization ------------------------------------------------------


def params_to_t(x: np.ndarray) -> np.ndarray:
    """16 reals -> lower-triangular T (real diagonal, complex strict lower part)."""
    x = np.asarray(x, dtype=float)
    t = np.diag(x[:4]).astype(complex)
    t[_TRIL] = x[4:10] + 1j * x[10:16]
    return t


def t_to_params(t: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(np.diag(t)), np.real(t[_TRIL]), np.imag(t[_TRIL])])


def params_to_rho(x: np.ndarray) -> np.ndarray:
    t = params_to_t(x)
    m = t.conj().T @ t
    m = 0.5 * (m + m.conj().T)
    return m / np.trace(m).real


def rho_to_params(rho: np.ndarray) -> np.ndarray:
    """Inverse of the parameterization for a positive definite ``rho`` (T^dagger T = rho)."""
    j = np.eye(4)[::-1]
    low = np.linalg.cholesky(j @ np.asarray(rho) @ j)
    t = j @ low.conj().T @ j
    t = t * np.exp(-1j * np.angle(np.diag(t)))[:, None]  # make the diagonal real and positive
    return t_to_params(t)


def log_likelihood(x: np.ndarray, ops: np.ndarray, counts: np.ndarray, weights: np.ndarray) -> float:
    """Poisson log-likelihood (up to a constant) of ``lambda_i = w_i Tr[T^dag T Pi_i]``."""
    t = params_to_t(x)
    m = t.conj().T @ t
    lam = weights * np.real(np.einsum("jk,ikj->i", m, ops))
    pos = counts > 0
    if np.any(lam[pos] <= 0):
        return -math.inf
    return float(np.sum(counts[pos] * np.log(lam[pos])) - np.sum(lam))


def log_likelihood_grad(x: np.ndarray, ops: np.ndarray, counts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    t = params_to_t(x)
    m = t.conj().T @ t
    lam = weights * np.real(np.einsum("jk,ikj->i", m, ops))
    ratio = np.where(counts > 0, counts / np.where(lam > 0, lam, 1.0), 0.0)
    g_m = np.einsum("i,ijk->jk", (ratio - 1.0) * weights, ops)
    k = (g_m @ t.conj().T).T
    grad_t = 2.0 * k
    return np.concatenate([
        np.real(np.diag(grad_t)),
        np.real(grad_t[_TRIL]),
        -np.imag(grad_t[_TRIL]),
    ])


def best_flux(rho, settings, counts, durations) -> float:
    """Flux N maximizing the Poisson likelihood for a fixed normalized ``rho``."""
    p = expected_probabilities(rho, settings)
    denom = float(np.sum(durations * p))
    if denom <= 0:
        raise ValidationError("state predicts no counts for any setting")
    return float(np.sum(counts)) / denom


def poisson_log_likelihood(rho, flux, settings, counts, durations) -> float:
    lam = flux * durations * expected_probabilities(rho, settings)
    pos = counts > 0
    if np.any(lam[pos] <= 0):
        return -math.inf
    return float(np.sum(counts[pos] * np.log(lam[pos])) - np.sum(lam))


def clamp_to_physical(matrix: np.ndarray) -> np.ndarray:
    """Zero negative eigenvalues and renormalize to unit trace."""
    w, v = np.linalg.eigh(0.5 * (matrix + matrix.conj().T))
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise ValidationError("matrix has no positive spectrum to clamp to")
    w = w / w.sum()
    out = (v * w) @ v.conj().T
    return 0.5 * (out + out.conj().T)


# -- estimators --------------------------------------------------------------


class LinearInversionTomography(BaseEstimator):
    """Least-squares inversion of ``rate_i = Tr[M Pi_i]``.

    Fitted attributes: ``rho_`` (Hermitian, unit trace, possibly with negative
    eigenvalues), ``flux_``, ``min_eigenvalue_``, ``is_physical_``.
    """

    def __init__(self, settings="16", subtract_accidentals=True):
        self.settings = settings
        self.subtract_accidentals = subtract_accidentals

    def fit(self, X, y=None):
        records = _as_records(X, self.settings)
        settings, counts, durations = _unpack(records, self.subtract_accidentals)
        a = design_matrix(settings)
        if np.linalg.matrix_rank(a) < 16:
            raise ValidationError("measurement design is not informationally complete (rank < 16)")
        coef, *_ = np.linalg.lstsq(a, counts / durations, rcond=None)
        m = np.einsum("k,kij->ij", coef, HERMITIAN_BASIS)
        flux = float(np.trace(m).real)
        if flux <= 0:
            raise ValidationError("inverted matrix has non-positive trace")
        rho = m / flux
        self.rho_ = 0.5 * (rho + rho.conj().T)
        self.flux_ = flux
        self.min_eigenvalue_ = float(np.linalg.eigvalsh(self.rho_)[0])
        self.is_physical_ = self.min_eigenvalue_ >= -1e-10
        return self

    def physical_estimate(self) -> DensityMatrix:
        check_is_fitted(self, "rho_")
        return DensityMatrix(clamp_to_physical(self.rho_))


class MaximumLikelihoodTomography(BaseEstimator):
    """Poisson maximum-likelihood reconstruction with a PSD-by-construction parameterization.

    The optimizer is BFGS with backtracking on the negative log-likelihood per
    count; ``tol`` applies to both the gradient norm and the per-step change.
    """

    def __init__(self, settings="16", max_iter=5000, tol=1e-9, init="linear", subtract_accidentals=True):
        self.settings = settings
        self.max_iter = max_iter
        self.tol = tol
        self.init = init
        self.subtract_accidentals = subtract_accidentals

    def _initial_rho(self, records) -> np.ndarray:
        if self.init == "mixed":
            return np.eye(4) / 4
        if self.init != "linear":
            return as_density_matrix(self.init).entries
        try:
            li = LinearInversionTomography(subtract_accidentals=self.subtract_accidentals).fit(records)
            return clamp_to_physical(li.rho_)
        except (ValidationError, np.linalg.LinAlgError):
            return np.eye(4) / 4

    def fit(self, X, y=None):
        records = _as_records(X, self.settings)
        settings, counts, durations = _unpack(records, self.subtract_accidentals)
        if np.linalg.matrix_rank(design_matrix(settings)) < 16:
            raise ValidationError("measurement design is not informationally complete (rank < 16)")
        ops = _operators(settings)
        total = counts.sum()

        rho0 = self._initial_rho(records)
        self.initial_rho_ = rho0
        flux0 = best_flux(rho0, settings, counts, durations)
        self.initial_log_likelihood_ = poisson_log_likelihood(rho0, flux0, settings, counts, durations)

        # keep the start strictly inside the cone so T has a finite Cholesky factor
        start = 0.999 * rho0 + 0.001 * np.eye(4) / 4
        weights = durations * flux0
        x0 = rho_to_params(start)

        def objective(x):
            f = log_likelihood(x, ops, counts, weights)
            if not np.isfinite(f):
                return math.inf, np.zeros_like(x)
            return -f / total, -log_likelihood_grad(x, ops, counts, weights) / total

        res = bfgs(objective, x0, gtol=self.tol, ftol=self.tol, max_iter=self.max_iter)

        t = params_to_t(res.x)
        m = t.conj().T @ t
        scale = float(np.trace(m).real)
        self.rho_ = DensityMatrix(params_to_rho(res.x))
        self.flux_ = flux0 * scale
        self.params_ = res.x
        self.log_likelihood_ = poisson_log_likelihood(self.rho_, self.flux_, settings, counts, durations)
        self.history_ = [-f * total for f in res.history]
        self.n_iter_ = res.nit
        self.converged_ = res.converged
        self.message_ = res.message
        return self

    def predict(self, X) -> np.ndarray:
        """Expected coincidences for the settings and durations of ``X``."""
        check_is_fitted(self, "rho_")
        records = _as_records(X, self.settings)
        settings = [r.setting for r in records]
        durations = np.array([r.duration for r in records])
        return self.flux_ * durations * expected_probabilities(self.rho_, settings)

    def score(self, X, y=None) -> float:
        """Poisson log-likelihood of ``X`` under the fitted state and flux."""
        check_is_fitted(self, "rho_")
        records = _as_records(X, self.settings)
        settings, counts, durations = _unpack(records, self.subtract_accidentals)
        return poisson_log_likelihood(self.rho_, self.flux_, settings, counts, durations)


# -- functional front-end ----------------------------------------------------


@dataclass
class TomographyResult:
    rho: DensityMatrix
    log_likelihood: float
    iterations: int
    converged: bool
    fidelity_vs_target: float | None = None
    flux: float | None = None
    history: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "rho": self.rho.to_dict(),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
            "converged": self.converged,
            "fidelity_vs_target": self.fidelity_vs_target,
            "flux": self.flux,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def linear_inversion(records, settings=None, subtract_accidentals: bool = True) -> np.ndarray:
    est = LinearInversionTomography(settings=settings or "16", subtract_accidentals=subtract_accidentals)
    return est.fit(records).rho_


def mle_reconstruct(
    records,
    settings=None,
    max_iters: int = 5000,
    tolerance: float = 1e-9,
    initializer="linear",
    target=None,
    subtract_accidentals: bool = True,
) -> TomographyResult:
    est = MaximumLikelihoodTomography(
        settings=settings or "16",
        max_iter=max_iters,
        tol=tolerance,
        init=initializer,
        subtract_accidentals=subtract_accidentals,
    ).fit(records)
    return TomographyResult(
        rho=est.rho_,
        log_likelihood=est.log_likelihood_,
        iterations=est.n_iter_,
        converged=est.converged_,
        fidelity_vs_target=None if target is None else fidelity(est.rho_, target),
        flux=est.flux_,
        history=est.history_,
    )


def derived_quantities(result: TomographyResult) -> StateReport:
    return report(result.rho)


def matrix_csv(rho) -> str:
    """One row per matrix element: row, col, basis labels, real and imaginary parts."""
    r = np.asarray(rho)
    lines = ["row,col,ket,bra,re,im"]
    for i in range(4):
        for j in range(4):
            lines.append(f"{i},{j},{BASIS[i]},{BASIS[j]},{r[i, j].real!r},{r[i, j].imag!r}")
    return "\n".join(lines) + "\n"
