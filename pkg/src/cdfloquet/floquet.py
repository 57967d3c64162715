"""Floquet engineering of counterdiabatic drives.

The oscillating protocol

    H_FE(t) = [1 + (w/w0) cos(w t)] H(lambda)
              + lamdot [sum_k beta_k sin((2k-1) w t)] dH(lambda)

has a leading-order Floquet Hamiltonian H + lamdot * A_F whose off-diagonal
elements carry a Bessel-function prefactor sum_k beta_k J_{2k-1}(w_mn / w0)
(Jacobi-Anger).  Matching its Taylor expansion to the variational
power-series prefactor order by order fixes the harmonic amplitudes beta_k
through a unit-triangular linear system.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .models import HamiltonianFamily
from .operators import PauliSum, SpectralData, ensure_dense_ok, to_matrix

SERIES_CUTOFF = 12.0  # |x| below this: ascending series, <40 terms at 1e-12


def _bessel_series(k: int, x: np.ndarray) -> np.ndarray:
    half = 0.5 * x
    term = half**k / math.factorial(k)
    acc = term.copy()
    for m in range(1, 40):
        term = term * (-(half * half) / (m * (m + k)))
        acc += term
    return acc


def _bessel_miller(k: int, x: float) -> float:
    # backward recurrence with even-order normalisation J_0 + 2 sum J_2m = 1
    top = k + int(math.sqrt(40.0 * max(k, 1))) + int(abs(x)) + 40
    top += top % 2
    jp, j = 0.0, 1e-30
    norm = 0.0
    target = 0.0
    for m in range(top, 0, -1):
        jm = (2.0 * m / x) * j - jp
        jp, j = j, jm
        if abs(j) > 1e60:
            j *= 1e-60
            jp *= 1e-60
            norm *= 1e-60
            target *= 1e-60
        order = m - 1
        if order == k:
            target = j
        if order > 0 and order % 2 == 0:
            norm += 2.0 * j
    norm += j  # J_0 contribution
    return target / norm


def bessel_j(k: int, x) -> np.ndarray | float:
    """Bessel function of the first kind J_k, scalar or elementwise on arrays.

    Ascending series for |x| <= 12, backward (Miller) recurrence beyond;
    absolute error <= 1e-12 on the series branch.
    """
    if k < 0:
        raise ValueError("order must be >= 0")
    arr = np.asarray(x, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    sign = np.where(arr < 0, (-1.0) ** (k % 2), 1.0)
    ax = np.abs(arr)
    small = ax <= SERIES_CUTOFF
    if small.any():
        out[small] = _bessel_series(k, ax[small])
    big = ~small
    if big.any():
        out[big] = [_bessel_miller(k, v) for v in ax[big]]
    out *= sign
    return float(out[0]) if scalar else out


@dataclass
class FloquetDrive:
    """Drive frequency, reference frequency and harmonic amplitudes."""

    omega: float
    omega0: float
    beta: np.ndarray

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float)
        if self.omega <= 0 or self.omega0 <= 0:
            raise ValueError("omega and omega0 must be positive")
        if self.omega / self.omega0 < 10.0:
            warnings.warn(
                "omega/omega0 below 10; the high-frequency construction "
                "degrades at small separation",
                stacklevel=2,
            )

    @property
    def n_harmonics(self) -> int:
        return len(self.beta)

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    def envelope(self, t: float) -> float:
        """Harmonic sum sum_k beta_k sin((2k-1) w t)."""
        acc = 0.0
        for k, b in enumerate(self.beta, start=1):
            acc += b * math.sin((2 * k - 1) * self.omega * t)
        return acc


def _triangular_match(alpha: np.ndarray, omega0: float, n_out: int) -> np.ndarray:
    beta = np.zeros(n_out)
    for j in range(1, n_out + 1):
        target = alpha[j - 1] if j <= len(alpha) else 0.0
        acc = 0.0
        for k in range(1, j):
            acc += (
                beta[k - 1]
                * (-1.0) ** (j - k)
                / (math.factorial(j - k) * math.factorial(j + k - 1))
            )
        beta[j - 1] = (target * (2.0 * omega0) ** (2 * j - 1) - acc) * math.factorial(
            2 * j - 1
        )
    return beta


def match_harmonics(coeffs, omega0: float) -> np.ndarray:
    """Amplitudes beta_1..beta_ell matching the power-series prefactor.

    Taylor-matching sum_k beta_k J_{2k-1}(w/w0) against sum_k alpha_k w^{2k-1}
    at orders w^1, w^3, ..., w^{2 ell - 1} yields a unit-triangular system;
    e.g. beta_1 = 2 alpha_1 w0 and beta_2 = 2 w0 (24 alpha_2 w0^2 + 3 alpha_1).
    """
    alpha = np.asarray(getattr(coeffs, "alpha", coeffs), dtype=float)
    if len(alpha) < 1:
        raise ValueError("need at least one expansion coefficient")
    return _triangular_match(alpha, omega0, len(alpha))


def match_harmonics_compensated(coeffs, omega0: float, extra_orders: int) -> np.ndarray:
    """Extended matching that cancels the Bessel series' spurious higher orders.

    The ell matched amplitudes leave O(w0^-2) residuals from the Taylor tails
    of J_{2k-1}; ``extra_orders`` additional harmonics zero the expansion
    through order w^{2(ell+p)-1}.
    """
    if extra_orders < 0:
        raise ValueError("extra_orders must be >= 0")
    alpha = np.asarray(getattr(coeffs, "alpha", coeffs), dtype=float)
    return _triangular_match(alpha, omega0, len(alpha) + extra_orders)


def make_drive(coeffs, omega: float, omega0: float, extra_orders: int = 0) -> FloquetDrive:
    beta = match_harmonics_compensated(coeffs, omega0, extra_orders)
    return FloquetDrive(omega, omega0, beta)


def bessel_prefactor(drive: FloquetDrive, omega_mn) -> np.ndarray:
    """sum_k beta_k J_{2k-1}(w_mn / w0), elementwise."""
    ratio = np.asarray(omega_mn, dtype=float) / drive.omega0
    acc = np.zeros_like(ratio)
    for k, b in enumerate(drive.beta, start=1):
        if b != 0.0:
            acc += b * bessel_j(2 * k - 1, ratio)
    return acc


def drive_hamiltonian(
    family: HamiltonianFamily,
    drive: FloquetDrive,
    lam: float,
    lamdot: float,
    t: float,
) -> PauliSum:
    """Instantaneous oscillating Hamiltonian of the engineered protocol."""
    a = 1.0 + (drive.omega / drive.omega0) * math.cos(drive.omega * t)
    b = lamdot * drive.envelope(t)
    out = a * family.h(lam)
    if b != 0.0:
        out = out + b * family.dh(lam)
    return out


def stroboscopic_propagator(
    family: HamiltonianFamily,
    drive: FloquetDrive,
    lam: float,
    lamdot: float,
    steps_per_period: int = 4096,
) -> np.ndarray:
    """Time-ordered propagator over one driving cycle with frozen (lam, lamdot).

    Classical fixed-step RK4 on dU/dt = -i H_FE(t) U; the result is unitary
    to well below 1e-9 at the default step count.
    """
    ensure_dense_ok(family.n_sites)
    h_mat = to_matrix(family.h(lam))
    dh_mat = to_matrix(family.dh(lam))
    dim = h_mat.shape[0]
    ratio = drive.omega / drive.omega0

    def rhs(t: float, u: np.ndarray) -> np.ndarray:
        a = 1.0 + ratio * math.cos(drive.omega * t)
        b = lamdot * drive.envelope(t)
        return -1j * (a * (h_mat @ u) + b * (dh_mat @ u))

    u = np.eye(dim, dtype=np.complex128)
    dt = drive.period / steps_per_period
    t = 0.0
    for _ in range(steps_per_period):
        k1 = rhs(t, u)
        k2 = rhs(t + 0.5 * dt, u + 0.5 * dt * k1)
        k3 = rhs(t + 0.5 * dt, u + 0.5 * dt * k2)
        k4 = rhs(t + dt, u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
    return u


def floquet_log_hamiltonian(u: np.ndarray, period: float) -> np.ndarray:
    """Effective generator i log(U)/T, quasi-energies on the principal branch."""
    h_f = 1j * scipy.linalg.logm(u) / period
    return 0.5 * (h_f + h_f.conj().T)


def effective_floquet_elements(
    spectral: SpectralData,
    dh_matrix: np.ndarray,
    drive: FloquetDrive,
    lamdot: float,
) -> np.ndarray:
    """Leading-order Floquet Hamiltonian H + lamdot * A_F, rotated back.

    In the eigenbasis of H the added part has elements
    i lamdot sum_k beta_k J_{2k-1}(w_mn / w0) <m|dH|n>.
    """
    v = spectral.eigenvectors
    e = spectral.eigenvalues
    dh_eig = v.conj().T @ dh_matrix @ v
    omega_mn = e[:, None] - e[None, :]
    pref = bessel_prefactor(drive, omega_mn)
    h_eig = np.diag(e.astype(np.complex128)) + 1j * lamdot * pref * dh_eig
    return v @ h_eig @ v.conj().T
