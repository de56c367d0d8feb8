"""General-dyne monitoring of a system through an exchange-coupled bath mode.

A bath mode with covariance ``sigma_B`` interacts with the system through
``H_int = sqrt(gamma) x^T x_B`` and is then measured by a general-dyne
detector described by the covariance ``sigma_m`` of the projected state.
The resulting conditional dynamics is fixed by the matrices ``C`` and
``Gamma``::

    Gamma^T = Omega G sigma_B (sigma_B + sigma_m)^(-1/2)
    C^T     = -G Omega (sigma_B + sigma_m)^(-1/2)

with ``G = sqrt(gamma) I``. These follow from the short-time beam-splitter
exchange followed by a Gaussian update on the detector outcome, and they
make ``sigma = sigma_B`` a fixed point of the back-action: a thermal system
at the bath temperature yields no information.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericDomainError, UnmonitoredLimit
from .gaussian_core import symplectic_form

#: Regularization used for the homodyne limits ``s -> 0`` and ``s -> inf``.
HOMODYNE_EPS = 1e-6

#: Eigenvalue floor for the inverse matrix square root.
EIG_FLOOR = 1e-12


@dataclass(frozen=True)
class GeneralDyne:
    """Parameters of a (noisy) general-dyne detector.

    ``s = 0`` and ``s = inf`` are accepted and mean homodyne detection; they
    are regularized to ``eps`` and ``1/eps`` when the detector covariance is
    built. ``angle`` rotates the detector, ``efficiency`` is in ``[0, 1]`` and
    ``excess_noise`` is an additive Gaussian noise ``>= 0``.
    """

    s: float
    angle: float = 0.0
    efficiency: float = 1.0
    excess_noise: float = 0.0

    def __post_init__(self):
        if math.isnan(self.s) or self.s < 0:
            raise InvalidArgument(f"general-dyne parameter requires s > 0 (or a 0/inf limit), got {self.s}")
        if not 0.0 <= self.efficiency <= 1.0:
            raise InvalidArgument(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if self.excess_noise < 0:
            raise InvalidArgument(f"excess noise must be >= 0, got {self.excess_noise}")

    @classmethod
    def homodyne_x(cls, **kwargs):
        """Homodyne on the output p-quadrature: monitors the system's q."""
        return cls(math.inf, **kwargs)

    @classmethod
    def homodyne_p(cls, **kwargs):
        """Homodyne on the output x-quadrature: monitors the system's p."""
        return cls(0.0, **kwargs)

    @classmethod
    def heterodyne(cls, **kwargs):
        return cls(1.0, **kwargs)

    @classmethod
    def preset(cls, name, **kwargs):
        try:
            return PRESETS[name](**kwargs)
        except KeyError:
            raise InvalidArgument(
                f"unknown measurement preset {name!r}; choose from {sorted(PRESETS)}"
            ) from None

    def regularized_s(self, eps=HOMODYNE_EPS):
        if self.s == 0:
            return eps
        if math.isinf(self.s):
            return 1.0 / eps
        return float(self.s)


PRESETS = {
    "homodyne_x": GeneralDyne.homodyne_x,
    "homodyne_p": GeneralDyne.homodyne_p,
    "heterodyne": GeneralDyne.heterodyne,
}


@dataclass(frozen=True, eq=False)
class BathSpec:
    """Covariance of the monitored bath mode and its coupling matrix ``G``."""

    cov: np.ndarray
    coupling: np.ndarray

    @classmethod
    def thermal(cls, gamma, n_th):
        if gamma < 0 or n_th < 0:
            raise InvalidArgument("gamma and n_th must be >= 0")
        return cls((n_th + 0.5) * np.eye(2), np.sqrt(gamma) * np.eye(2))


@dataclass(frozen=True, eq=False)
class MonitoringMatrices:
    """The ``2l x 2n`` matrices ``C`` and ``Gamma`` of a continuous measurement."""

    c_matrix: np.ndarray
    gamma_matrix: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c_matrix, dtype=float)
        g = np.asarray(self.gamma_matrix, dtype=float)
        if c.ndim != 2 or c.shape != g.shape:
            raise InvalidArgument(f"C {c.shape} and Gamma {g.shape} must share a 2-D shape")
        object.__setattr__(self, "c_matrix", c)
        object.__setattr__(self, "gamma_matrix", g)

    @classmethod
    def unmonitored(cls, n_modes=1, n_outputs=1):
        zeros = np.zeros((2 * n_outputs, 2 * n_modes))
        return cls(zeros, zeros.copy())

    @property
    def is_unmonitored(self):
        return not (self.c_matrix.any() or self.gamma_matrix.any())


def rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, s], [-s, c]])


def measurement_cm(gd, eps=HOMODYNE_EPS):
    """Covariance ``sigma_m`` of the state a general-dyne detector projects on.

    ``2 sigma_m = R^T diag(s/eta, 1/(s eta)) R + ((1 - eta)/eta + Delta) I``.

    Raises
    ------
    UnmonitoredLimit
        For ``eta = 0``; no finite matrix describes a blind detector.
    """
    eta = gd.efficiency
    if eta == 0:
        raise UnmonitoredLimit("zero efficiency: use MonitoringMatrices.unmonitored()")
    s = gd.regularized_s(eps)
    r = rotation(gd.angle)
    ideal = r.T @ np.diag([s / eta, 1.0 / (s * eta)]) @ r
    noise = ((1.0 - eta) / eta + gd.excess_noise) * np.eye(2)
    cm = 0.5 * (ideal + noise)
    return 0.5 * (cm + cm.T)


def inv_sqrtm_spd(m, floor=EIG_FLOOR):
    """Inverse square root of a symmetric positive-definite matrix via ``eigh``."""
    w, u = np.linalg.eigh(m)
    if w.min() <= 0:
        raise NumericDomainError("matrix is singular or indefinite; cannot take m^(-1/2)")
    w = np.maximum(w, floor)
    return (u / np.sqrt(w)) @ u.T


def monitoring_matrices(bath, sigma_m, form="exchange"):
    """Build ``C`` and ``Gamma`` for a single monitored output mode.

    Parameters
    ----------
    bath : BathSpec
    sigma_m : ndarray, shape (2, 2)
        Detector covariance from :func:`measurement_cm`.
    form : {"exchange", "sqrt2"}
        ``"exchange"`` (default) gives the matrices in the module docstring.
        ``"sqrt2"`` rescales ``C`` by ``sqrt(2)`` and ``Gamma`` by
        ``1/sqrt(2)``; that variant does not leave the bath-temperature
        thermal state stationary and is kept only for comparison.
    """
    sigma_b = np.asarray(bath.cov, dtype=float)
    g = np.asarray(bath.coupling, dtype=float)
    omega = symplectic_form(1)
    r = inv_sqrtm_spd(sigma_b + np.asarray(sigma_m, dtype=float))
    gamma_t = omega @ g @ sigma_b @ r
    c_t = -g @ omega @ r
    if form == "sqrt2":
        gamma_t = gamma_t / np.sqrt(2.0)
        c_t = c_t * np.sqrt(2.0)
    elif form != "exchange":
        raise InvalidArgument(f"unknown form {form!r}")
    return MonitoringMatrices(c_t.T, gamma_t.T)


def monitor(bath, gd, form="exchange", eps=HOMODYNE_EPS):
    """Monitoring matrices for a detector, mapping ``eta = 0`` to no monitoring."""
    if gd.efficiency == 0:
        return MonitoringMatrices.unmonitored()
    return monitoring_matrices(bath, measurement_cm(gd, eps), form=form)


def gain(sigma, mm):
    """Noise gain ``sigma C^T + Gamma^T`` of the filtered mean; batched over ``sigma``."""
    sigma = np.asarray(sigma, dtype=float)
    c, g = mm.c_matrix, mm.gamma_matrix
    if sigma.shape[-1] != c.shape[1] or sigma.shape[-2] != c.shape[1]:
        raise InvalidArgument(f"sigma {sigma.shape[-2:]} incompatible with C {c.shape}")
    return sigma @ c.T + g.T


def backaction(sigma, mm):
    """Back-action ``chi(sigma) = (sigma C^T + Gamma^T)(C sigma + Gamma)``.

    Symmetric positive semidefinite by construction (``M M^T``), and exactly
    zero when ``C = Gamma = 0``.
    """
    m = gain(sigma, mm)
    return m @ np.swapaxes(m, -1, -2)
