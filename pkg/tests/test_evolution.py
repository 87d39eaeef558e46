"""Tests for the moment and grid evolution engines.

The closed-system cases have exact references (stationary ground state,
rotating coherent state, conserved energy).  The open cases are checked
engine-against-engine and against the fluctuation-dissipation steady
state, with every literal below frozen from an independent evaluation.
"""

import math
import os

import numpy as np
import pytest

from qbm import _kernels
from qbm.coefficients import OscillatorSpec, compute_coefficients
from qbm.evolution import (
    GridTrajectory,
    MomentTrajectory,
    SingleGaussian,
    SymmetricSuperposition,
    UncertaintyViolation,
    evolve_grid,
    evolve_moments,
    initial_density,
    initial_moments,
    moment_flow,
    packet_width_sq,
    read_snapshot,
    write_snapshot,
    write_trajectory_csv,
)
from qbm.spectral import EnvironmentSpec, HighT, Zero

OSC = OscillatorSpec(1.0, 1.0)


def closed_series(t_max=10.0):
    env = EnvironmentSpec(n=1.0, gamma0=0.0, cutoff=50.0, temperature=Zero())
    return compute_coefficients(env, OSC, t_max, samples=100)


def our_warnings(wlist):
    return [w for w in wlist if "qbm" in getattr(w.filename, "lower", str)()
            or "det sigma" in str(w.message) or "trace" in str(w.message)
            or "boundary" in str(w.message) or "hermiticity" in str(w.message)]


class TestInitialStates:
    def test_default_width_is_ground_state(self):
        sys_ = OscillatorSpec(2.0, 3.0)
        assert packet_width_sq(SingleGaussian(), sys_) == pytest.approx(1.0 / 12.0)

    def test_displaced_gaussian_moments(self):
        m = initial_moments(SingleGaussian(x0=1.5, p0=-0.5, sigma_sq=0.3), OSC)
        assert m[0] == 1.5 and m[1] == -0.5
        assert m[2] == pytest.approx(0.3 + 2.25, rel=1e-14)
        assert m[3] == pytest.approx(-0.75, rel=1e-14)
        assert m[4] == pytest.approx(1.0 / 1.2 + 0.25, rel=1e-14)

    def test_superposition_moments_against_wavefunction(self):
        # integrate |psi|^2 and |psi'|^2 on a fine grid as the oracle
        st = SymmetricSuperposition(half_separation=2.0, sigma_sq=5.0)
        x = np.linspace(-40.0, 40.0, 400001)
        dx = x[1] - x[0]
        s = 5.0
        psi = np.exp(-(x - 2.0) ** 2 / (4 * s)) + np.exp(-(x + 2.0) ** 2 / (4 * s))
        psi /= math.sqrt(float(np.sum(psi ** 2)) * dx)
        xx_ref = float(np.sum(x * x * psi ** 2)) * dx
        dpsi = np.gradient(psi, dx)
        pp_ref = float(np.sum(dpsi ** 2)) * dx
        m = initial_moments(st, OSC)
        assert m[2] == pytest.approx(xx_ref, rel=1e-10)
        assert m[4] == pytest.approx(pp_ref, rel=1e-6)
        assert m[3] == 0.0

    def test_superposition_closed_form_values(self):
        m = initial_moments(SymmetricSuperposition(2.0, 5.0), OSC)
        assert m[2] == pytest.approx(7.39475064, rel=1e-8)
        assert m[4] == pytest.approx(0.0339475064, rel=1e-8)

    def test_density_is_normalized_pure_and_hermitian(self):
        x = np.linspace(-8.0, 8.0, 160)
        dx = x[1] - x[0]
        for st in (SingleGaussian(x0=0.7, p0=0.4),
                   SymmetricSuperposition(2.0)):
            rho = initial_density(st, OSC, x)
            assert np.trace(rho).real * dx == pytest.approx(1.0, abs=1e-12)
            assert np.max(np.abs(rho - rho.conj().T)) < 1e-14
            assert np.sum(np.abs(rho) ** 2) * dx * dx == pytest.approx(1.0, abs=1e-10)

    def test_grid_position_moment_matches_closed_form(self):
        x = np.linspace(-10.0, 10.0, 400)
        dx = x[1] - x[0]
        st = SymmetricSuperposition(2.0, sigma_sq=0.5)
        rho = initial_density(st, OSC, x)
        xx_grid = float(np.sum(x * x * np.real(np.diag(rho)))) * dx
        assert xx_grid == pytest.approx(initial_moments(st, OSC)[2], rel=1e-8)

    def test_invalid_states_rejected(self):
        with pytest.raises(ValueError):
            packet_width_sq(SingleGaussian(sigma_sq=-1.0), OSC)
        with pytest.raises(TypeError):
            initial_moments(object(), OSC)


class TestMomentEngine:
    def test_ground_state_is_stationary(self):
        tr = evolve_moments(closed_series(30.0), SingleGaussian(), 30.0,
                            dt=0.005)
        assert np.max(np.abs(tr.energy - 0.5)) < 1e-12
        assert np.max(np.abs(tr.linear_entropy)) < 1e-12
        assert np.max(tr.denergy) < 1e-9
        assert tr.min_det_sigma == pytest.approx(0.25, abs=1e-12)
        assert tr.uncertainty_time is None

    def test_coherent_state_rotates(self):
        tr = evolve_moments(closed_series(10.0), SingleGaussian(x0=1.0),
                            2.0 * math.pi, dt=0.002)
        assert np.max(np.abs(tr.mean_x - np.cos(tr.times))) < 1e-10
        assert np.max(np.abs(tr.energy - 1.0)) < 1e-12
        assert np.all(np.isnan(tr.denergy))  # displaced: formula not valid

    def test_closed_energy_and_spread_conserved(self):
        # breathing packet: nontrivial xx, pp, xp dynamics
        tr = evolve_moments(closed_series(20.0), SingleGaussian(sigma_sq=1.2),
                            20.0, dt=0.005)
        assert np.max(np.abs(tr.energy - tr.energy[0])) < 1e-8 * tr.energy[0]
        assert np.max(np.abs(tr.denergy - tr.denergy[0])) < 1e-8

    def test_jolt_is_resolved_by_default_steps(self):
        env = EnvironmentSpec(1.0, 0.05, 200.0, HighT(20.0))
        ser = compute_coefficients(env, OSC, 2.0, samples=300)
        a = evolve_moments(ser, SingleGaussian(), 2.0)
        b = evolve_moments(ser, SingleGaussian(), 2.0,
                           dt=a.times[-1] / (4 * a.times.size))
        # default step grid already converged: refining changes < 0.5%
        assert abs(a.xx[-1] / b.xx[-1] - 1.0) < 5e-3
        assert abs(a.pp[-1] / b.pp[-1] - 1.0) < 5e-3
        # and the first steps really are inside the jolt window
        assert a.times[1] <= 0.1 / 200.0 + 1e-12

    def test_hight_equipartition(self):
        # pp_st = M D / (2 gamma) = M kT for the ohmic high-T bath
        env = EnvironmentSpec(1.0, 0.05, 200.0, HighT(20.0))
        ser = compute_coefficients(env, OSC, 60.0, samples=500)
        tr = evolve_moments(ser, SingleGaussian(), 60.0, shift_mode="off")
        assert tr.pp[-1] == pytest.approx(20.0, rel=5e-2)
        assert tr.xx[-1] == pytest.approx(20.0, rel=5e-2)
        assert tr.energy[-1] == pytest.approx(20.0, rel=5e-2)

    def test_energy_flow_identity(self):
        # with the shift off, dE/dt = D - 2 gamma pp (M = 1)
        env = EnvironmentSpec(1.0, 0.05, 200.0, HighT(20.0))
        ser = compute_coefficients(env, OSC, 60.0, samples=500)
        tr = evolve_moments(ser, SingleGaussian(), 60.0, shift_mode="off")
        from qbm.coefficients import interpolate
        i = np.arange(200, tr.times.size - 200, 50)
        de_num = np.gradient(tr.energy, tr.times)[i]
        _, gam, dd, _ = interpolate(ser, tr.times[i])
        de_ref = dd - 2.0 * gam * tr.pp[i]
        # pointwise slopes oscillate at 2 Omega; compare window averages
        assert np.mean(de_num) == pytest.approx(np.mean(de_ref), rel=5e-2)

    def test_uncertainty_monitor_warns(self):
        env = EnvironmentSpec(1.0, 0.3, 100.0, Zero())
        ser = compute_coefficients(env, OSC, 3.0, samples=300)
        with pytest.warns(UserWarning, match="det sigma"):
            tr = evolve_moments(ser, SingleGaussian(), 3.0, shift_mode="off")
        assert tr.min_det_sigma < 0.25
        assert tr.uncertainty_time is not None

    def test_uncertainty_monitor_raises_on_request(self):
        env = EnvironmentSpec(1.0, 0.3, 100.0, Zero())
        ser = compute_coefficients(env, OSC, 3.0, samples=300)
        with pytest.raises(UncertaintyViolation):
            evolve_moments(ser, SingleGaussian(), 3.0, shift_mode="off",
                           uncertainty_action="raise")

    def test_uncertainty_monitor_can_be_silenced(self):
        import warnings
        env = EnvironmentSpec(1.0, 0.3, 100.0, Zero())
        ser = compute_coefficients(env, OSC, 3.0, samples=300)
        with warnings.catch_warnings(record=True) as wlist:
            warnings.simplefilter("always")
            evolve_moments(ser, SingleGaussian(), 3.0, shift_mode="off",
                           uncertainty_action="ignore")
        assert not [w for w in wlist if "det sigma" in str(w.message)]

    def test_invalid_arguments_rejected(self):
        ser = closed_series(10.0)
        with pytest.raises(ValueError):
            evolve_moments(ser, SingleGaussian(), 11.0)   # beyond the table
        with pytest.raises(ValueError):
            evolve_moments(ser, SingleGaussian(), 5.0, shift_mode="half")
        with pytest.raises(ValueError):
            evolve_moments(ser, SingleGaussian(), 5.0, uncertainty_action="x")

    def test_moment_flow_signature(self):
        d = moment_flow(np.array([0.0, 0.0, 0.5, 0.0, 0.5]),
                        1.0, 0.0, 0.0, 0.0, 1.0)
        assert np.allclose(d, [0.0, 0.0, 0.0, 0.0, 0.0])  # ground state


class TestGridEngine:
    def test_closed_system_conservation(self):
        # gently displaced packet over half a period; the energy read off
        # the grid must hold to a part in 1e6
        tr = evolve_grid(closed_series(10.0), SingleGaussian(x0=0.2),
                         math.pi, n_points=192, l_box=5.5)
        assert np.max(np.abs(tr.energy - tr.energy[0])) < 1e-6 * tr.energy[0]
        assert np.max(np.abs(tr.purity - 1.0)) < 1e-10
        assert tr.trace_drift < 1e-10
        assert tr.herm_error < 1e-10
        assert np.max(tr.boundary_mass) < 1e-8

    def test_grid_matches_moments_when_damped(self):
        env = EnvironmentSpec(1.0, 0.02, 20.0, HighT(20.0))
        ser = compute_coefficients(env, OSC, 3.0, samples=200)
        tm = evolve_moments(ser, SingleGaussian(), 3.0, dt=0.002)
        tg = evolve_grid(ser, SingleGaussian(), 3.0, n_points=160, l_box=9.0)
        i = np.argmin(np.abs(tm.times - tg.times[-1]))
        assert tg.xx[-1] == pytest.approx(tm.xx[i], rel=1e-2)
        assert tg.pp[-1] == pytest.approx(tm.pp[i], rel=1e-2)
        assert tg.energy[-1] == pytest.approx(tm.energy[i], rel=1e-2)
        assert tg.denergy[-1] == pytest.approx(tm.denergy[i], rel=1e-2)

    def test_closed_superposition_stays_pure(self):
        tr = evolve_grid(closed_series(10.0), SymmetricSuperposition(2.0),
                         1.0, n_points=224, l_box=8.0)
        assert np.max(np.abs(tr.purity - 1.0)) < 1e-8
        assert tr.trace_drift < 1e-10

    def test_open_superposition_loses_coherence(self):
        env = EnvironmentSpec(1.0, 0.02, 20.0, HighT(20.0))
        ser = compute_coefficients(env, OSC, 1.0, samples=150)
        tr = evolve_grid(ser, SymmetricSuperposition(2.0), 1.0,
                         n_points=224, l_box=8.0, snapshot_times=(0.0, 1.0))
        assert tr.purity[-1] < 0.3
        i_p = np.argmin(np.abs(tr.x - 2.0))
        i_m = np.argmin(np.abs(tr.x + 2.0))
        t0_blob = abs(tr.snapshots[0][1][i_p, i_m])
        t1_blob = abs(tr.snapshots[1][1][i_p, i_m])
        assert t0_blob > 0.2           # fringe weight present initially
        assert t1_blob < 0.005 * t0_blob

    def test_linear_entropy_property(self):
        tr = evolve_grid(closed_series(10.0), SingleGaussian(), 0.1,
                         n_points=64, l_box=6.0)
        assert np.allclose(tr.linear_entropy, 1.0 - tr.purity)

    def test_step_bound_enforced(self):
        with pytest.raises(ValueError, match="stability"):
            evolve_grid(closed_series(10.0), SingleGaussian(), 1.0,
                        n_points=128, l_box=6.0, dt=0.5)

    def test_twin_kernels_agree(self):
        if not _kernels.HAVE_NUMBA:
            pytest.skip("numba not available")
        rng = np.random.default_rng(7)
        n = 48
        x = np.linspace(-3.0, 3.0, n)
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        rho_p = _kernels.padded_zeros(n)
        rho_p[2:-2, 2:-2] = a + a.conj().T
        out_a = _kernels.padded_zeros(n)
        out_b = _kernels.padded_zeros(n)
        args = (x, x[1] - x[0], 0.5, 0.9, 0.1, 0.2, 0.05)
        _kernels.grid_rhs_numba(rho_p, out_a, *args)
        _kernels.grid_rhs_numpy(rho_p, out_b, *args)
        assert np.max(np.abs(out_a - out_b)) < 1e-12

    def test_rhs_preserves_trace_and_hermiticity(self):
        # Tr(drho) = 0 and drho hermitian, term by term
        n = 64
        x = np.linspace(-4.0, 4.0, n)
        dx = x[1] - x[0]
        rho_p = _kernels.padded_zeros(n)
        rho_p[2:-2, 2:-2] = initial_density(SymmetricSuperposition(1.5), OSC, x)
        out = _kernels.padded_zeros(n)
        for coeffs in ((0.5, 1.0, 0.0, 0.0, 0.0),   # kinetic + potential
                       (0.0, 0.0, 0.3, 0.0, 0.0),   # friction
                       (0.0, 0.0, 0.0, 0.7, 0.0),   # decoherence
                       (0.0, 0.0, 0.0, 0.0, 0.4)):  # anomalous
            _kernels.grid_rhs_numpy(rho_p, out, x, dx, *coeffs)
            d = out[2:-2, 2:-2]
            assert abs(np.trace(d)) * dx < 1e-10
            assert np.max(np.abs(d - d.conj().T)) < 1e-10


class TestSnapshotIO:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        rho = (rng.normal(size=(32, 32))
               + 1j * rng.normal(size=(32, 32))).astype(np.complex64)
        path = os.path.join(tmp_path, "state.qbmg")
        write_snapshot(path, rho, 6.5, 1.25)
        back, l_box, t = read_snapshot(path)
        assert np.array_equal(back, rho)
        assert l_box == 6.5 and t == 1.25
        assert os.path.getsize(path) == 32 + 8 * 32 * 32

    def test_bad_magic_rejected(self, tmp_path):
        path = os.path.join(tmp_path, "junk.qbmg")
        with open(path, "wb") as fh:
            fh.write(b"\x00" * 64)
        with pytest.raises(ValueError, match="magic"):
            read_snapshot(path)

    def test_non_square_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="square"):
            write_snapshot(os.path.join(tmp_path, "x.qbmg"),
                           np.zeros((4, 5), dtype=np.complex64), 1.0, 0.0)


class TestTrajectoryCsv:
    def test_columns_and_round_trip(self, tmp_path):
        tr = evolve_moments(closed_series(10.0), SingleGaussian(sigma_sq=0.8),
                            1.0, dt=0.01)
        path = os.path.join(tmp_path, "traj.csv")
        write_trajectory_csv(tr, path)
        lines = open(path).read().splitlines()
        assert lines[0] == "t,xx,pp,xp,E,dE,Sl"
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        assert table.shape == (tr.times.size, 7)
        assert np.array_equal(table[:, 0], tr.times)
        assert np.array_equal(table[:, 4], tr.energy)

    def test_grid_trajectory_also_writes(self, tmp_path):
        tr = evolve_grid(closed_series(10.0), SingleGaussian(), 0.1,
                         n_points=64, l_box=6.0)
        path = os.path.join(tmp_path, "gtraj.csv")
        write_trajectory_csv(tr, path)
        table = np.loadtxt(path, delimiter=",", skiprows=1)
        assert table.shape[1] == 7
