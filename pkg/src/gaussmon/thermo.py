"""Entropy rate, flux, production and the informational term.

With the Wigner entropy ``S = ln det(sigma)/2 + const`` the entropy rate is
deterministic even under monitoring. Writing ``M = A_irr^T D^-1 A_irr``::

    dS/dt    = Tr[2A + sigma^-1 (D - chi)] / 2
    Phi_uc   = -Tr A_irr - 2 Tr[M sigma_uc] - 2 x_uc^T M x_uc
    Pi_uc    = 2 Tr A_irr + 2 Tr[M sigma_uc] + Tr[sigma_uc^-1 D] / 2 + 2 x_uc^T M x_uc
    Idot     = Tr[sigma^-1 (D - chi) - sigma_uc^-1 D] / 2
    Pi       = Pi_uc + Idot

``Pi_uc`` is the average of a positive quadratic form of the irreversible
phase-space current, so ``Pi_uc >= 0`` and hence ``Pi >= Idot``.

Every function broadcasts over leading batch dimensions of its matrix and
vector arguments.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericDomainError
from .gaussian_core import cholesky_spd, logdet_spd, wigner_entropy
from .measurement import backaction


def _trace_solve(sigma, x):
    """``Tr[sigma^-1 x]`` for SPD ``sigma`` (batched)."""
    chol = cholesky_spd(sigma)
    y = np.linalg.solve(chol, x)
    z = np.linalg.solve(np.swapaxes(chol, -1, -2), y)
    return np.trace(z, axis1=-2, axis2=-1)


def irreversible_metric(model):
    """``M = A_irr^T D^-1 A_irr``; raises for a singular diffusion matrix."""
    d = model.diffusion
    try:
        cholesky_spd(d)
    except NumericDomainError:
        raise NumericDomainError("flux and production need a positive-definite D") from None
    return model.drift_irr.T @ np.linalg.solve(d, model.drift_irr)


def _quad(m, x):
    return np.einsum("...i,ij,...j->...", x, m, x)


def entropy_rate(model, sigma, chi):
    """``dS/dt = Tr[2A + sigma^-1 (D - chi)] / 2``.

    Pass ``chi = 0`` and the unconditional covariance for ``dS_uc/dt``.
    """
    chi = np.asarray(chi, dtype=float)
    return np.trace(model.drift) + 0.5 * _trace_solve(sigma, model.diffusion - chi)


def flux_prod_uc(model, sigma_uc, mean_uc):
    """Unconditional entropy flux and production rates ``(Phi_uc, Pi_uc)``.

    Parameters
    ----------
    model : OpenModel
        Must have a positive-definite diffusion matrix.
    sigma_uc : ndarray, shape (..., 2n, 2n)
    mean_uc : ndarray, shape (..., 2n)

    Returns
    -------
    tuple of ndarray
        ``Phi_uc`` and ``Pi_uc``; they add up to ``dS_uc/dt``.
    """
    m = irreversible_metric(model)
    tr_irr = np.trace(model.drift_irr)
    tr_m = np.trace(m @ np.asarray(sigma_uc), axis1=-2, axis2=-1)
    q = _quad(m, np.asarray(mean_uc, dtype=float))
    phi = -tr_irr - 2.0 * tr_m - 2.0 * q
    pi = 2.0 * tr_irr + 2.0 * tr_m + 0.5 * _trace_solve(sigma_uc, model.diffusion) + 2.0 * q
    return phi, pi


def info_rate(model, sigma, sigma_uc, chi):
    """Informational rate ``Idot = Tr[sigma^-1 (D - chi) - sigma_uc^-1 D] / 2``."""
    chi = np.asarray(chi, dtype=float)
    d = model.diffusion
    return 0.5 * (_trace_solve(sigma, d - chi) - _trace_solve(sigma_uc, d))


def info_integrated(sigma, sigma_uc):
    """``I = ln(P_uc / P) = [ln det sigma - ln det sigma_uc] / 2`` (never positive when sigma_uc >= sigma)."""
    return 0.5 * (logdet_spd(sigma) - logdet_spd(sigma_uc))


def mutual_information(sigma, v, tol=1e-10):
    """Classical mutual information between phase-space position and filtered mean.

    ``I = sum_i ln(1 + lambda_i) / 2`` with ``lambda_i`` the eigenvalues of
    ``sigma^-1/2 V sigma^-1/2``; zero iff ``V = 0``.

    Raises
    ------
    InvalidArgument
        If ``V`` has an eigenvalue below ``-tol``.
    """
    sigma = np.asarray(sigma, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.linalg.eigvalsh(v).min() < -tol:
        raise InvalidArgument("V must be positive semidefinite")
    cholesky_spd(sigma)
    w, u = np.linalg.eigh(sigma)
    isq = (u / np.sqrt(w)[..., None, :]) @ np.swapaxes(u, -1, -2)
    lam = np.linalg.eigvalsh(isq @ v @ isq)
    return 0.5 * np.log1p(np.clip(lam, 0.0, None)).sum(axis=-1)


def stochastic_flux_prod(model, sigma, chi, mean):
    """Trajectory-level flux and production rates ``(dphi/dt, dpi/dt)``.

    ``mean`` is the filtered (stochastic) mean and may carry extra leading
    dimensions, e.g. ``(n_traj, n_times, 2n)`` against ``sigma`` of shape
    ``(n_times, 2n, 2n)``. The two rates add up to :func:`entropy_rate`.
    """
    m = irreversible_metric(model)
    chi = np.asarray(chi, dtype=float)
    tr_irr = np.trace(model.drift_irr)
    tr_m = np.trace(m @ np.asarray(sigma), axis1=-2, axis2=-1)
    q = _quad(m, np.asarray(mean, dtype=float))
    dphi = -tr_irr - 2.0 * tr_m - 2.0 * q
    dpi = 2.0 * tr_irr + 2.0 * tr_m + 2.0 * q + 0.5 * _trace_solve(sigma, model.diffusion - chi)
    return dphi, dpi


@dataclass(frozen=True, eq=False)
class ThermoLedger:
    """Entropic bookkeeping of one monitored run on its output grid."""

    times: np.ndarray
    S: np.ndarray
    S_uc: np.ndarray
    dSdt: np.ndarray
    dSdt_uc: np.ndarray
    Phi_uc: np.ndarray
    Pi_uc: np.ndarray
    Idot: np.ndarray
    I: np.ndarray  # noqa: E741
    Pi: np.ndarray

    #: Column order of the ``ledger.csv`` output.
    COLUMNS = ("t", "S", "S_uc", "dSdt", "Phi_uc", "Pi_uc", "Idot", "I", "Pi")

    def table(self):
        """Columns of :attr:`COLUMNS` stacked into an ``(n_times, 9)`` array."""
        return np.column_stack(
            [self.times, self.S, self.S_uc, self.dSdt, self.Phi_uc, self.Pi_uc, self.Idot, self.I, self.Pi]
        )


def thermo_ledger(model, mm, sigma, uncond):
    """Assemble the ledger from the conditional covariance series and an unconditional record.

    ``sigma`` must live on the grid ``uncond.times``.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != uncond.cov_series.shape:
        raise InvalidArgument("conditional and unconditional series use different grids")
    sigma_uc = uncond.cov_series
    chi = backaction(sigma, mm)
    phi_uc, pi_uc = flux_prod_uc(model, sigma_uc, uncond.mean_series)
    idot = info_rate(model, sigma, sigma_uc, chi)
    return ThermoLedger(
        times=uncond.times,
        S=wigner_entropy(sigma),
        S_uc=wigner_entropy(sigma_uc),
        dSdt=entropy_rate(model, sigma, chi),
        dSdt_uc=entropy_rate(model, sigma_uc, 0.0),
        Phi_uc=phi_uc,
        Pi_uc=pi_uc,
        Idot=idot,
        I=info_integrated(sigma, sigma_uc),
        Pi=pi_uc + idot,
    )


@dataclass(frozen=True, eq=False)
class EnsembleRates:
    """Per-trajectory stochastic rates and their Monte Carlo averages."""

    times: np.ndarray
    dphi: np.ndarray
    dpi: np.ndarray
    Phi_uc: np.ndarray
    Pi_target: np.ndarray

    @property
    def dphi_mean(self):
        return self.dphi.mean(axis=0)

    @property
    def dpi_mean(self):
        return self.dpi.mean(axis=0)

    @property
    def dphi_se(self):
        return self.dphi.std(axis=0, ddof=1) / np.sqrt(self.dphi.shape[0])

    @property
    def dpi_se(self):
        return self.dpi.std(axis=0, ddof=1) / np.sqrt(self.dpi.shape[0])


def ensemble_rates(model, mm, ensemble, uncond):
    """Stochastic flux/production of every trajectory with their unconditional targets.

    The targets are ``Phi_uc`` for the mean flux and ``Pi_uc + Idot`` for the
    mean production. Failed trajectories are dropped.
    """
    if not np.array_equal(ensemble.times, uncond.times):
        raise InvalidArgument("ensemble and unconditional records use different grids")
    sigma = ensemble.cov_series
    chi = backaction(sigma, mm)
    dphi, dpi = stochastic_flux_prod(model, sigma, chi, ensemble.means[ensemble.ok])
    phi_uc, pi_uc = flux_prod_uc(model, uncond.cov_series, uncond.mean_series)
    idot = info_rate(model, sigma, uncond.cov_series, chi)
    return EnsembleRates(ensemble.times, dphi, dpi, phi_uc, pi_uc + idot)
