"""Dynamics tests: schedule anchors, protocol evolution, observables."""

import math
import warnings

import numpy as np
import pytest

from cdfloquet import agp, dynamics as dyn, models
from cdfloquet.operators import diagonalize, to_matrix

W0 = 10.0 * 2.0 * math.pi


@pytest.fixture(autouse=True)
def _quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        yield


class TestSchedule:
    def test_endpoints(self):
        for tau in (0.05, 0.1, 1.0, 50.0):
            lam0, dot0 = dyn.schedule_eval(tau, 0.0)
            lam1, dot1 = dyn.schedule_eval(tau, tau)
            assert abs(lam0) <= 1e-12 and abs(dot0) <= 1e-12
            assert abs(lam1 - 1.0) <= 1e-12 and abs(dot1) <= 1e-12

    def test_midpoint(self):
        lam, _ = dyn.schedule_eval(0.1, 0.05)
        assert np.isclose(lam, 0.5)

    def test_velocity_matches_numeric_derivative(self):
        tau = 0.3
        sched = dyn.annealing_schedule(tau)
        for t in np.linspace(0.01, tau - 0.01, 7):
            h = 1e-6
            numeric = (sched.lambda_of(t + h) - sched.lambda_of(t - h)) / (2 * h)
            assert np.isclose(sched.lambda_dot(t), numeric, atol=1e-7)

    def test_acceleration_vanishes_at_ends(self):
        sched = dyn.annealing_schedule(0.2)
        h = 1e-5
        for t0 in (0.0, 0.2):
            tt = max(min(t0, 0.2 - h), h)
            acc = (sched.lambda_dot(tt + h) - sched.lambda_dot(tt - h)) / (2 * h)
            assert abs(acc) < 1e-3

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            dyn.schedule_eval(0.1, 0.2)


class TestObservables:
    def test_fidelity_of_ground_state_is_one(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        spectral = diagonalize(to_matrix(family.h(0.3)))
        assert np.isclose(dyn.fidelity(spectral.eigenvectors[:, 0], family, 0.3), 1.0)

    def test_fidelity_of_orthogonal_state_is_zero(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        spectral = diagonalize(to_matrix(family.h(0.3)))
        assert dyn.fidelity(spectral.eigenvectors[:, 3], family, 0.3) < 1e-20

    def test_degenerate_ground_state_raises(self):
        family = models.ising_uniform(2, 0.0, 0.0, 0.0)  # H = 0 at lambda=0
        psi = np.zeros(4, dtype=complex)
        psi[0] = 1.0
        with pytest.raises(dyn.DegenerateGroundStateError):
            dyn.fidelity(psi, family, 0.0)

    def test_absorbed_energy_ground_state_zero(self):
        family = models.three_level(1.0, 2.0)
        spectral = diagonalize(to_matrix(family.h(0.6)))
        assert abs(dyn.absorbed_energy(spectral.eigenvectors[:, 0], family, 0.6)) < 1e-10

    def test_absorbed_energy_nonnegative(self):
        rng = np.random.default_rng(4)
        family = models.three_level(1.0, 2.0)
        psi = rng.normal(size=4) + 1j * rng.normal(size=4)
        psi /= np.linalg.norm(psi)
        assert dyn.absorbed_energy(psi, family, 0.4) >= 0.0

    def test_spin_profile_product_states(self):
        up = np.zeros(4, dtype=complex)
        up[0] = 1.0
        assert np.allclose(dyn.spin_profile(up), [1.0, 1.0])
        singlet = np.zeros(4, dtype=complex)
        singlet[1], singlet[2] = 1.0 / math.sqrt(2), -1.0 / math.sqrt(2)
        assert np.allclose(dyn.spin_profile(singlet), [0.0, 0.0], atol=1e-12)


class TestGroundCache:
    def test_dense_and_lanczos_agree(self):
        # trap chain at dim 1024 exercises the warm-started Lanczos path;
        # the gap stays O(1) along the whole drag
        family = models.trap_ising(10, -1.0, 0.8, 0.9, models.TrapSpec(8.0, 1.0, 3, 8))
        cache = dyn.GroundCache(family)
        assert cache.dim > dyn.DENSE_GROUND_DIM
        for lam in (0.0, 0.5, 1.0):
            e0, gap, vec = cache.data(lam)
            spectral = diagonalize(to_matrix(family.h(lam)))
            assert np.isclose(e0, spectral.eigenvalues[0], atol=1e-8)
            assert np.isclose(gap, spectral.eigenvalues[1] - spectral.eigenvalues[0], atol=1e-7)
            assert abs(np.vdot(spectral.eigenvectors[:, 0], vec)) ** 2 > 1.0 - 1e-10


class TestEvolve:
    def test_adiabatic_limit_unassisted(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        traj = dyn.evolve(
            family, dyn.UA(), dyn.annealing_schedule(50.0), samples=64, n_steps=64 * 1024
        )
        assert traj.final_fidelity_sq > 0.999

    def test_exact_cd_unit_fidelity_all_times(self):
        # first-order gauge potential is exact for this family
        family = models.two_qubit_xxzz(-1.0, 5.0)
        grids = agp.variational_grids(family, [1], n_grid=201)
        for tau in (0.05, 0.1, 1.0):
            traj = dyn.evolve(
                family, dyn.CD(1), dyn.annealing_schedule(tau), agp_grid=grids[1], samples=64
            )
            assert np.all(traj.fidelity_sq > 1.0 - 1e-7)
            assert abs(traj.final_fidelity_sq - 1.0) < 1e-8

    def test_constant_lambda_protocols_coincide(self):
        # a frozen schedule makes UA, CD and FE all equal bare evolution
        family = models.three_level(1.0, 2.0)
        frozen = dyn.Schedule(0.05, lambda t: 0.4, lambda t: 0.0)
        grids = agp.variational_grids(family, [1], n_grid=11)
        psi0 = diagonalize(to_matrix(family.h(0.4))).eigenvectors[:, 1].astype(complex)
        runs = {}
        for name, proto, grid in (
            ("UA", dyn.UA(), None),
            ("CD", dyn.CD(1), grids[1]),
            ("FE", dyn.FE(1, 250 * W0, W0), grids[1]),
        ):
            runs[name] = dyn.evolve(
                family,
                proto,
                frozen,
                psi0=psi0,
                samples=16,
                agp_grid=grid,
                compute_fidelity=False,
            ).meta["final_state"]
        # UA and CD identical (lamdot = 0 kills the gauge term); FE averages
        # to the same evolution up to Floquet corrections
        assert np.max(np.abs(runs["UA"] - runs["CD"])) < 1e-10
        overlap = abs(np.vdot(runs["UA"], runs["FE"])) ** 2
        assert overlap > 1.0 - 1e-4

    def test_norm_conservation(self):
        family = models.three_level(1.0, 2.0)
        grids = agp.variational_grids(family, [2], n_grid=51)
        traj = dyn.evolve(
            family, dyn.CD(2), dyn.annealing_schedule(0.1), agp_grid=grids[2], samples=64
        )
        assert traj.meta["max_norm_drift"] <= 1e-7

    def test_step_halving_convergence_check(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        traj = dyn.evolve(
            family,
            dyn.UA(),
            dyn.annealing_schedule(0.1),
            samples=32,
            check_convergence=True,
        )
        assert traj.meta["step_halving_deviation"] <= 1e-6

    def test_convergence_error_raised_when_underresolved(self):
        # one step per driving period cannot resolve the oscillating term
        family = models.two_qubit_xxzz(-1.0, 5.0)
        grids = agp.variational_grids(family, [1], n_grid=11)
        with pytest.raises(dyn.ConvergenceError):
            dyn.evolve(
                family,
                dyn.FE(1, 250 * W0, W0),
                dyn.annealing_schedule(0.1),
                samples=8,
                n_steps=256,
                agp_grid=grids[1],
                check_convergence=True,
            )

    def test_fe_limits_to_cd(self):
        # raising the drive frequency suppresses the residual Floquet error
        family = models.two_qubit_xxzz(-1.0, 5.0)
        grids = agp.variational_grids(family, [1], n_grid=201)
        sched = dyn.annealing_schedule(0.1)
        infid = []
        for ratio in (25.0, 100.0, 250.0):
            traj = dyn.evolve(
                family, dyn.FE(1, ratio * W0, W0), sched, agp_grid=grids[1], samples=32
            )
            infid.append(1.0 - traj.final_fidelity_sq)
        assert infid[0] > infid[1] > infid[2]

    def test_requires_grid_for_assisted_protocols(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        with pytest.raises(ValueError):
            dyn.evolve(family, dyn.CD(1), dyn.annealing_schedule(0.1))

    def test_trajectory_sampling_shape(self):
        family = models.two_qubit_xxzz(-1.0, 5.0)
        traj = dyn.evolve(
            family, dyn.UA(), dyn.annealing_schedule(0.1), samples=16, compute_sz=True
        )
        assert len(traj.times) == 17
        assert traj.sz.shape == (17, 2)
        assert traj.times[0] == 0.0 and np.isclose(traj.times[-1], 0.1)
        assert np.isclose(traj.lams[-1], 1.0)
