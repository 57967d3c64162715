"""Floquet-engineering tests: Bessel evaluation, harmonic matching, drives,
stroboscopic propagator vs the Jacobi-Anger prediction."""

import math
import warnings

import numpy as np
import pytest
import scipy.special

from cdfloquet import agp, floquet as fl, models
from cdfloquet.operators import diagonalize, to_matrix

W0 = 10.0 * 2.0 * math.pi


def quiet_drive(omega, omega0, beta):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return fl.FloquetDrive(omega, omega0, beta)


class TestBessel:
    def test_values_at_zero(self):
        assert fl.bessel_j(0, 0.0) == 1.0
        assert fl.bessel_j(1, 0.0) == 0.0

    def test_small_argument_taylor(self):
        for x in (1e-3, 1e-2, 0.1):
            assert np.isclose(fl.bessel_j(1, x), x / 2 - x**3 / 16, atol=1e-9)

    def test_series_branch_absolute_error(self):
        x = np.linspace(-12.0, 12.0, 601)
        for k in range(0, 13):
            assert np.max(np.abs(fl.bessel_j(k, x) - scipy.special.jv(k, x))) <= 1e-12

    def test_recurrence_branch(self):
        x = np.concatenate([np.linspace(12.01, 40.0, 301), -np.linspace(12.01, 40.0, 301)])
        for k in range(0, 13):
            assert np.max(np.abs(fl.bessel_j(k, x) - scipy.special.jv(k, x))) <= 1e-11

    def test_negative_order_rejected(self):
        with pytest.raises(ValueError):
            fl.bessel_j(-1, 1.0)


class TestMatchHarmonics:
    def test_first_order_formula(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            a1 = rng.normal()
            w0 = rng.uniform(1.0, 100.0)
            beta = fl.match_harmonics(np.array([a1]), w0)
            assert abs(beta[0] - 2.0 * a1 * w0) <= 1e-12 * abs(2.0 * a1 * w0)

    def test_second_order_formula(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a1, a2 = rng.normal(size=2)
            w0 = rng.uniform(1.0, 50.0)
            beta = fl.match_harmonics(np.array([a1, a2]), w0)
            ref = 2.0 * w0 * (24.0 * a2 * w0**2 + 3.0 * a1)
            assert abs(beta[1] - ref) <= 1e-12 * abs(ref)

    def test_zero_alpha_gives_zero_beta(self):
        assert np.allclose(fl.match_harmonics(np.zeros(3), 7.0), 0.0)

    def test_taylor_consistency(self):
        # coefficient of x^(2j-1) in sum_k beta_k J_{2k-1}(x) must reproduce
        # alpha_j * w0^(2j-1) for j = 1..ell
        rng = np.random.default_rng(2)
        for ell in (1, 2, 3, 4):
            alpha = rng.normal(size=ell)
            w0 = rng.uniform(0.5, 5.0)
            beta = fl.match_harmonics(alpha, w0)
            for j in range(1, ell + 1):
                c = sum(
                    beta[k - 1]
                    * (-1.0) ** (j - k)
                    / (math.factorial(j - k) * math.factorial(j + k - 1))
                    / 2.0 ** (2 * j - 1)
                    for k in range(1, j + 1)
                )
                assert np.isclose(c / w0 ** (2 * j - 1), alpha[j - 1], rtol=1e-10)

    def test_compensated_p0_identical(self):
        alpha = np.array([-0.2, 0.01])
        assert np.allclose(
            fl.match_harmonics_compensated(alpha, 5.0, 0), fl.match_harmonics(alpha, 5.0)
        )

    def test_compensation_cancels_next_order(self):
        # ell=1, p=1: the residual of the matched Bessel sum drops from
        # O(x^3) to O(x^5)
        alpha = np.array([-0.13])
        w0 = 10.0
        b0 = fl.match_harmonics_compensated(alpha, w0, 0)
        b1 = fl.match_harmonics_compensated(alpha, w0, 1)

        def resid(beta, w):
            drive = quiet_drive(1e4, w0, beta)
            return abs(fl.bessel_prefactor(drive, np.array([w]))[0] - alpha[0] * w)

        w = w0 / 10.0
        assert resid(b1, w) < resid(b0, w)
        assert np.isclose(resid(b0, w) / resid(b0, w / 2), 8.0, rtol=0.01)
        assert np.isclose(resid(b1, w) / resid(b1, w / 2), 32.0, rtol=0.02)

    def test_low_ratio_warns(self):
        with pytest.warns(UserWarning):
            fl.FloquetDrive(5.0, 1.0, np.array([1.0]))


class TestDriveHamiltonian:
    def setup_method(self):
        self.family = models.two_qubit_xxzz(-1.0, 5.0)
        sol = agp.solve_alpha(self.family, 0.4, 1)
        self.drive = quiet_drive(250 * W0, W0, fl.match_harmonics(sol, W0))

    def test_zero_velocity_pure_scaling(self):
        t = 0.37 * self.drive.period
        h_fe = fl.drive_hamiltonian(self.family, self.drive, 0.4, 0.0, t)
        scale = 1.0 + (self.drive.omega / self.drive.omega0) * math.cos(
            self.drive.omega * t
        )
        ref = scale * self.family.h(0.4)
        assert (h_fe - ref).norm() < 1e-12 * abs(scale)

    def test_t_zero(self):
        h_fe = fl.drive_hamiltonian(self.family, self.drive, 0.4, 3.0, 0.0)
        ref = (1.0 + self.drive.omega / self.drive.omega0) * self.family.h(0.4)
        assert (h_fe - ref).norm() < 1e-10

    def test_period_average_recovers_h(self):
        n = 4096
        acc = None
        for i in range(n):
            t = (i + 0.5) * self.drive.period / n
            term = fl.drive_hamiltonian(self.family, self.drive, 0.4, 3.0, t)
            acc = term if acc is None else acc + term
        avg = (1.0 / n) * acc
        assert (avg - self.family.h(0.4)).norm() < 1e-8 * self.family.h(0.4).norm()

    def test_hermitian_at_all_times(self):
        for t in np.linspace(0.0, self.drive.period, 17):
            assert fl.drive_hamiltonian(self.family, self.drive, 0.4, 2.0, t).is_hermitian()


class TestStroboscopicPropagator:
    def test_zero_velocity_matches_free_evolution(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        drive = quiet_drive(250 * W0, W0, np.array([0.7]))
        u = fl.stroboscopic_propagator(family, drive, 0.4, 0.0, steps_per_period=2048)
        spectral = diagonalize(to_matrix(family.h(0.4)))
        v, e = spectral.eigenvectors, spectral.eigenvalues
        ref = v @ np.diag(np.exp(-1j * e * drive.period)) @ v.conj().T
        assert np.max(np.abs(u - ref)) < 1e-9

    def test_unitarity(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        sol = agp.solve_alpha(family, 0.6, 1)
        drive = quiet_drive(250 * W0, W0, fl.match_harmonics(sol, W0))
        u = fl.stroboscopic_propagator(family, drive, 0.6, 1.0)
        assert np.max(np.abs(u.conj().T @ u - np.eye(4))) <= 1e-9

    def test_step_halving_stable(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        sol = agp.solve_alpha(family, 0.6, 1)
        drive = quiet_drive(250 * W0, W0, fl.match_harmonics(sol, W0))
        u1 = fl.stroboscopic_propagator(family, drive, 0.6, 1.0, steps_per_period=2048)
        u2 = fl.stroboscopic_propagator(family, drive, 0.6, 1.0, steps_per_period=4096)
        assert np.linalg.norm(u1 - u2, 2) <= 1e-8


class TestEffectiveFloquet:
    def test_zero_beta_returns_h(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        spectral = diagonalize(to_matrix(family.h(0.3)))
        drive = quiet_drive(250 * W0, W0, np.array([0.0]))
        pred = fl.effective_floquet_elements(
            spectral, to_matrix(family.dh(0.3)), drive, 1.0
        )
        assert np.max(np.abs(pred - to_matrix(family.h(0.3)))) < 1e-10

    def test_matches_log_propagator(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        lam, lamdot = 0.9, 1.0
        sol = agp.solve_alpha(family, lam, 1)
        drive = quiet_drive(250 * W0, W0, fl.match_harmonics(sol, W0))
        u = fl.stroboscopic_propagator(family, drive, lam, lamdot, steps_per_period=4096)
        h_f = fl.floquet_log_hamiltonian(u, drive.period)
        pred = fl.effective_floquet_elements(
            diagonalize(to_matrix(family.h(lam))), to_matrix(family.dh(lam)), drive, lamdot
        )
        a1 = to_matrix(agp.build_agp(family, lam, sol))
        scale = np.linalg.norm(lamdot * a1, 2)
        assert np.linalg.norm(h_f - pred, 2) <= 0.05 * scale

    def test_fourth_order_identity(self):
        # with ell=2 matched amplitudes the analytic CD form H + i lamdot
        # (a1 C1 + a2 C3) agrees with the Bessel prediction up to the first
        # unmatched Taylor order: residual ~ alpha_2 w^5 / w0^2, i.e. exact
        # 1/w0^2 scaling at fixed spectrum
        family = models.ising_uniform(3, 1.0, 0.4, 0.3)
        lam, lamdot = 0.7, 0.8
        sol = agp.solve_alpha(family, lam, 2)
        towers = agp.towers_for(family, lam, 3)
        analytic = to_matrix(family.h(lam)) + lamdot * to_matrix(
            agp.build_agp(family, lam, sol, towers=towers)
        )
        spectral = diagonalize(to_matrix(family.h(lam)))
        dh_mat = to_matrix(family.dh(lam))
        errs = []
        for w0 in (200.0, 400.0):
            drive = quiet_drive(1e4 * w0, w0, fl.match_harmonics(sol, w0))
            pred = fl.effective_floquet_elements(spectral, dh_mat, drive, lamdot)
            errs.append(np.linalg.norm(pred - analytic, 2))
        assert errs[0] <= 1e-5 * np.linalg.norm(analytic, 2)
        assert np.isclose(errs[0] / errs[1], 4.0, rtol=0.1)
