"""Gaussian states in phase space.

Conventions: quadratures are ordered ``(q1, p1, q2, p2, ...)`` with
``[q, p] = i`` (hbar = 1), and the covariance matrix is
``sigma_ij = <{x_i, x_j}>/2 - <x_i><x_j>``, so the vacuum has
``sigma = I/2`` and every physical state has symplectic eigenvalues
``>= 1/2``.

All functions accept either a :class:`GaussianState` or a bare covariance
array; array inputs may carry leading batch dimensions ``(..., 2n, 2n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericDomainError

#: Tolerance on symplectic eigenvalues when deciding physicality.
PHYSICALITY_TOL = 1e-8

_OMEGA_1 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def symplectic_form(n):
    """Return the ``2n x 2n`` symplectic form, one ``[[0, 1], [-1, 0]]`` block per mode."""
    if int(n) != n or n < 1:
        raise InvalidArgument(f"mode count must be a positive integer, got {n!r}")
    return np.kron(np.eye(int(n)), _OMEGA_1)


@dataclass(frozen=True, eq=False)
class GaussianState:
    """First and second moments of an ``n``-mode Gaussian state.

    The covariance is symmetrized on construction and both arrays are made
    read-only, so instances behave as values.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        mean = np.array(self.mean, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or cov.shape[0] % 2:
            raise InvalidArgument(f"covariance must be 2n x 2n, got shape {cov.shape}")
        if mean.shape != (cov.shape[0],):
            raise InvalidArgument(
                f"mean has shape {mean.shape}, expected ({cov.shape[0]},)"
            )
        cov = 0.5 * (cov + cov.T)
        cov.flags.writeable = False
        mean.flags.writeable = False
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "mean", mean)

    @property
    def n_modes(self):
        return self.cov.shape[0] // 2

    @classmethod
    def vacuum(cls, n=1):
        return cls(np.zeros(2 * n), 0.5 * np.eye(2 * n))

    @classmethod
    def thermal(cls, nbar, n=1, mean=None):
        """Thermal state with occupation ``nbar`` in every mode."""
        if nbar < 0:
            raise InvalidArgument(f"occupation must be >= 0, got {nbar}")
        mean = np.zeros(2 * n) if mean is None else mean
        return cls(mean, (nbar + 0.5) * np.eye(2 * n))

    @classmethod
    def squeezed_vacuum(cls, r, mean=None):
        """Single-mode squeezed vacuum ``diag(e^{2r}, e^{-2r}) / 2``."""
        mean = np.zeros(2) if mean is None else mean
        return cls(mean, 0.5 * np.diag([np.exp(2 * r), np.exp(-2 * r)]))

    def is_physical(self, tol=PHYSICALITY_TOL):
        return bool(physicality_margin(self) >= 0.5 - tol)


def _cov_of(state):
    if isinstance(state, GaussianState):
        return state.cov
    return np.asarray(state, dtype=float)


def cholesky_spd(m):
    """Cholesky factor of a (batched) symmetric positive-definite matrix.

    Raises
    ------
    NumericDomainError
        If any matrix in the batch is not positive definite.
    """
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NumericDomainError("matrix is not positive definite") from exc


def logdet_spd(m):
    """``ln det m`` through the Cholesky factor; works on batches."""
    chol = cholesky_spd(m)
    return 2.0 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(axis=-1)


def purity(state):
    """Purity ``(det 2 sigma)^(-1/2)``; equals 1 exactly for pure states."""
    cov = _cov_of(state)
    return np.exp(-0.5 * logdet_spd(2.0 * cov))


def entropy_constant(n):
    """Additive constant of the Wigner entropy, ``n ln(2 pi e)``.

    Only entropy differences and rates enter the thermodynamic ledger, so the
    value is a convention: it makes the result the differential entropy of a
    Gaussian density.
    """
    return n * np.log(2.0 * np.pi * np.e)


def wigner_entropy(state):
    """Wigner entropy ``ln det(sigma)/2 + n ln(2 pi e)`` of a Gaussian state."""
    cov = _cov_of(state)
    n = cov.shape[-1] // 2
    return 0.5 * logdet_spd(cov) + entropy_constant(n)


def symplectic_eigenvalues(state):
    """Symplectic eigenvalues in descending order, one per mode.

    Computed as the moduli of the eigenvalues of ``i Omega sigma``, which
    come in ``+-nu`` pairs. Batched input gives an array of shape ``(..., n)``.
    """
    cov = _cov_of(state)
    n = cov.shape[-1] // 2
    if n == 1:
        det = cov[..., 0, 0] * cov[..., 1, 1] - cov[..., 0, 1] * cov[..., 1, 0]
        return np.sqrt(np.abs(det))[..., None]
    moduli = np.abs(np.linalg.eigvals(symplectic_form(n) @ cov))
    moduli = -np.sort(-moduli, axis=-1)
    return moduli[..., ::2]


def physicality_margin(state):
    """Smallest symplectic eigenvalue, or ``-inf`` if sigma is not positive definite.

    A state is physical iff this is ``>= 1/2`` (up to tolerance). Batched.
    """
    cov = _cov_of(state)
    nu = symplectic_eigenvalues(cov).min(axis=-1)
    positive = np.linalg.eigvalsh(cov)[..., 0] > 0
    return np.where(positive, nu, -np.inf)


def renyi_entropy(state, alpha):
    """Renyi-alpha entropy of a Gaussian state from its symplectic spectrum.

    Uses ``S_alpha = sum_i ln f_alpha(2 nu_i) / (alpha - 1)`` with
    ``f_alpha(x) = ((x + 1)/2)^alpha - ((x - 1)/2)^alpha``. For ``alpha = 2``
    this is ``-ln purity``.
    """
    if alpha <= 0 or alpha == 1:
        raise InvalidArgument("alpha must be positive and different from 1")
    x = 2.0 * symplectic_eigenvalues(state)
    f = ((x + 1.0) / 2.0) ** alpha - ((x - 1.0) / 2.0) ** alpha
    return np.log(f).sum(axis=-1) / (alpha - 1.0)
