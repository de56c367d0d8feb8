"""Open-system models: quadratic Hamiltonians, drift and diffusion.

The unconditional moment dynamics is fixed by a drift matrix ``A`` and a
diffusion matrix ``D``. The drift splits as ``A = Omega H_s + A_irr`` into a
unitary part generated by the Hamiltonian matrix and an irreversible part.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .gaussian_core import symplectic_form


@dataclass(frozen=True, eq=False)
class PiecewiseDrive:
    """Drive vector that is constant on ``[times[i], times[i+1])``.

    ``times`` must start at 0 and increase strictly; ``values[i]`` is the
    drive on the i-th interval, the last one extending to infinity.
    """

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if times.ndim != 1 or len(times) != len(values):
            raise InvalidArgument("need one drive vector per breakpoint")
        if times[0] != 0.0 or np.any(np.diff(times) <= 0):
            raise InvalidArgument("breakpoints must start at 0 and increase")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, value):
        return cls(np.zeros(1), np.asarray(value, dtype=float)[None, :])

    @property
    def is_constant(self):
        return len(self.times) == 1

    def at(self, t):
        """Drive at time(s) ``t``; returns shape ``(..., 2n)``."""
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.values[np.clip(idx, 0, None)]


@dataclass(frozen=True, eq=False)
class QuadraticHamiltonian:
    """``H = x^T H_s x / 2 + b^T Omega x`` with a (possibly scheduled) drive ``b``."""

    h_matrix: np.ndarray
    drive: PiecewiseDrive

    def __post_init__(self):
        h = np.asarray(self.h_matrix, dtype=float)
        if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] % 2:
            raise InvalidArgument(f"H_s must be 2n x 2n, got {h.shape}")
        if not np.array_equal(h, h.T):
            raise InvalidArgument("H_s must be symmetric")
        drive = self.drive
        if not isinstance(drive, PiecewiseDrive):
            drive = PiecewiseDrive.constant(np.zeros(h.shape[0]) if drive is None else drive)
        if drive.values.shape[1] != h.shape[0]:
            raise InvalidArgument("drive dimension does not match H_s")
        object.__setattr__(self, "h_matrix", h)
        object.__setattr__(self, "drive", drive)


@dataclass(frozen=True, eq=False)
class OpenModel:
    """Drift/diffusion description of an open Gaussian system."""

    ham: QuadraticHamiltonian
    drift: np.ndarray
    drift_irr: np.ndarray
    diffusion: np.ndarray
    coupling_rate: float = 0.0
    bath_occupation: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.drift, dtype=float)
        a_irr = np.asarray(self.drift_irr, dtype=float)
        d = np.asarray(self.diffusion, dtype=float)
        dim = self.ham.h_matrix.shape[0]
        for name, m in (("drift", a), ("drift_irr", a_irr), ("diffusion", d)):
            if m.shape != (dim, dim):
                raise InvalidArgument(f"{name} must be {dim}x{dim}, got {m.shape}")
        omega = symplectic_form(dim // 2)
        if not np.allclose(omega @ self.ham.h_matrix + a_irr, a, rtol=0, atol=1e-12):
            raise InvalidArgument("drift != Omega H_s + drift_irr")
        if not np.array_equal(d, d.T):
            raise InvalidArgument("diffusion must be symmetric")
        if np.linalg.eigvalsh(d).min() < -1e-12:
            raise InvalidArgument("diffusion must be positive semidefinite")
        for name, m in (("drift", a), ("drift_irr", a_irr), ("diffusion", d)):
            m.flags.writeable = False
            object.__setattr__(self, name, m)

    @property
    def n_modes(self):
        return self.drift.shape[0] // 2

    @property
    def max_real_eig(self):
        return float(np.linalg.eigvals(self.drift).real.max())

    @property
    def is_stable(self):
        """Whether the unconditional dynamics has a steady state (A Hurwitz)."""
        return self.max_real_eig < 0

    def drive_at(self, t):
        return self.ham.drive.at(t)


def decompose_drift(drift, h_matrix):
    """Irreversible part ``A_irr = A - Omega H_s`` of a drift matrix."""
    a = np.asarray(drift, dtype=float)
    h = np.asarray(h_matrix, dtype=float)
    if a.ndim != 2 or a.shape != h.shape or a.shape[0] != a.shape[1] or a.shape[0] % 2:
        raise InvalidArgument(f"shape mismatch: A {a.shape}, H_s {h.shape}")
    if not np.allclose(h, h.T, rtol=0, atol=0):
        raise InvalidArgument("H_s must be symmetric")
    return a - symplectic_form(a.shape[0] // 2) @ h


def _positive(name, value):
    if not value > 0:
        raise InvalidArgument(f"{name} must be > 0, got {value}")


def build_quench_model(omega, gamma, n_th, amplitude=0.0, phase=0.0):
    """Driven, damped harmonic oscillator coupled to a thermal mode.

    Parameters
    ----------
    omega : float
        Oscillator frequency (sets the time unit).
    gamma : float
        Excitation-exchange damping rate.
    n_th : float
        Mean occupation of the bath mode.
    amplitude, phase : float
        Pump amplitude ``E`` and phase ``theta``; the drive vector is
        ``-(sqrt(2) E cos theta, sqrt(2) E sin theta)``.

    Returns
    -------
    OpenModel
        ``A = [[-gamma/2, omega], [-omega, -gamma/2]]`` and
        ``D = gamma (n_th + 1/2) I``.
    """
    _positive("omega", omega)
    _positive("gamma", gamma)
    if n_th < 0:
        raise InvalidArgument(f"n_th must be >= 0, got {n_th}")
    if amplitude < 0:
        raise InvalidArgument(f"drive amplitude must be >= 0, got {amplitude}")
    h = omega * np.eye(2)
    drive = -np.sqrt(2.0) * amplitude * np.array([np.cos(phase), np.sin(phase)])
    a = np.array([[-gamma / 2, omega], [-omega, -gamma / 2]])
    return OpenModel(
        ham=QuadraticHamiltonian(h, PiecewiseDrive.constant(drive)),
        drift=a,
        drift_irr=decompose_drift(a, h),
        diffusion=gamma * (n_th + 0.5) * np.eye(2),
        coupling_rate=float(gamma),
        bath_occupation=float(n_th),
    )


def build_opo_model(kappa, gamma, n_th):
    """Degenerate parametric oscillator with squeezing rate ``kappa``.

    ``H_s = [[0, -kappa], [-kappa, 0]]``, ``A = diag(-kappa - gamma/2,
    kappa - gamma/2)``. The unconditional dynamics is stable only for
    ``gamma > 2 kappa``; see :attr:`OpenModel.is_stable`.
    """
    _positive("kappa", kappa)
    _positive("gamma", gamma)
    if n_th < 0:
        raise InvalidArgument(f"n_th must be >= 0, got {n_th}")
    h = np.array([[0.0, -kappa], [-kappa, 0.0]])
    a = np.diag([-kappa - gamma / 2, kappa - gamma / 2])
    return OpenModel(
        ham=QuadraticHamiltonian(h, PiecewiseDrive.constant(np.zeros(2))),
        drift=a,
        drift_irr=decompose_drift(a, h),
        diffusion=gamma * (n_th + 0.5) * np.eye(2),
        coupling_rate=float(gamma),
        bath_occupation=float(n_th),
    )
