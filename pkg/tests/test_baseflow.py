"""Background flow: solver, eiconal transport, flow map, scenario presets."""

import numpy as np
import pytest

from phasecascade.baseflow import (
    ShearBase,
    TaylorGreenBase,
    ZeroBase,
    eval_at_points,
    flow_map,
    make_base,
    solve_base_flow,
    solve_eiconal,
)
from phasecascade.fields import (
    SpectralField,
    divergence,
    l2_norm,
    random_field,
    to_physical,
    to_spectral,
)
from phasecascade.grid import Grid
from phasecascade.operators import leray_project

GRID = Grid(dim=2, n=32, m_theta=4, dt=0.01, t_end=0.3)


def taylor_green(grid, t, nu):
    x, y = grid.coords()[:2]
    f = np.exp(-2 * nu * t)
    out = np.zeros((2,) + grid.shape)
    out[0] = -np.cos(x) * np.sin(y) * f
    out[1] = np.sin(x) * np.cos(y) * f
    return to_spectral(grid, out)


class TestSolver:
    def test_zero_datum(self):
        traj = solve_base_flow(SpectralField.zeros(GRID, 2), 0.0, GRID)
        assert l2_norm(traj.u(GRID.t_end)) == 0.0

    def test_steady_shear(self):
        base = ShearBase(GRID, amplitude=0.4)
        traj = solve_base_flow(base.u0(0.0), 0.0, GRID)
        drift = l2_norm(traj.u(GRID.t_end) - base.u0(0.0))
        assert drift < 1e-10 * l2_norm(base.u0(0.0))

    def test_taylor_green_decay(self):
        nu = 0.05
        grid = Grid(dim=2, n=32, m_theta=4, dt=0.005, t_end=1.0)
        traj = solve_base_flow(taylor_green(grid, 0.0, nu), nu, grid)
        exact = taylor_green(grid, 1.0, nu)
        err = l2_norm(traj.u(1.0) - exact)
        assert err < 1e-8 * l2_norm(exact)

    def test_energy_conservation_inviscid(self):
        rng = np.random.default_rng(5)
        u00 = leray_project(random_field(GRID, 2, rng, kmax=3, amplitude=0.3))
        traj = solve_base_flow(u00, 0.0, GRID)
        drift = abs(traj.energy[-1] - traj.energy[0]) / traj.energy[0]
        assert drift < 1e-8

    def test_divergence_free_every_step(self):
        rng = np.random.default_rng(6)
        u00 = leray_project(random_field(GRID, 2, rng, kmax=3, amplitude=0.3))
        traj = solve_base_flow(u00, 0.0, GRID)
        for f in traj.fields[:: max(1, len(traj.fields) // 6)]:
            assert l2_norm(divergence(f)) < 1e-12 * max(l2_norm(f), 1e-30)


class TestBaseScenarios:
    @pytest.mark.parametrize("scenario,kwargs", [
        ("zero", {}),
        ("shear", {"amplitude": 0.4}),
        ("taylor-green", {"nu": 0.02}),
    ])
    def test_base_residual(self, scenario, kwargs):
        base = make_base(scenario, GRID, **kwargs)
        nu = kwargs.get("nu", 0.0)
        for t in (0.0, 0.15):
            assert base.residual(t, nu=nu) < 1e-10

    def test_shear_phase_closed_form(self):
        base = ShearBase(GRID, amplitude=0.4)
        t = 0.25
        x2 = GRID.coords()[1]
        X = np.real(np.fft.ifft2(base.X0(t).coeffs * GRID.npoints))
        assert np.max(np.abs(X[0] - 1.0)) < 1e-12
        expected = -0.4 * t * np.cos(x2)
        assert np.max(np.abs(X[1] - np.broadcast_to(expected, GRID.shape))) < 1e-12

    def test_projector_annihilates_gradient(self):
        base = ShearBase(GRID, amplitude=0.4)
        for t in (0.0, 0.2):
            P = base.Pi0(t)
            out = P.apply(base.X0(t))
            assert l2_norm(out) < 1e-10
            M = P.matrix
            MM = np.einsum("ij...,jk...->ik...", M, M)
            assert np.max(np.abs(MM - M)) < 1e-10

    def test_zero_base_for_25d(self):
        base = make_base("shear-layer", GRID)
        assert base.ncomp == 3
        P = base.Pi0(0.0)
        assert P.matrix.shape[0] == 3
        # phase x2: normal is e2, so components 1 and 3 are free
        assert np.allclose(P.matrix[0, 0], 1.0)
        assert np.allclose(P.matrix[1, 1], 0.0)
        assert np.allclose(P.matrix[2, 2], 1.0)


class TestEiconal:
    def test_zero_flow_phase_constant(self):
        traj = solve_base_flow(SpectralField.zeros(GRID, 2), 0.0, GRID)
        rho0 = random_field(GRID, 1, np.random.default_rng(2), kmax=2,
                            amplitude=0.05)
        phase = solve_eiconal([1.0, 0.0], rho0, traj, c=0.25)
        assert phase.achieved_t == GRID.t_end
        drift = np.max(np.abs(phase._rho(GRID.t_end) - rho0.coeffs))
        assert drift < 1e-12

    def test_shear_closed_form(self):
        base = ShearBase(GRID, amplitude=0.4)
        traj = solve_base_flow(base.u0(0.0), 0.0, GRID)
        phase = solve_eiconal([1.0, 0.0], SpectralField.zeros(GRID, 1),
                              traj, c=0.25)
        t = GRID.t_end
        got = SpectralField(GRID, phase._rho(t))
        expected = base.phi0_periodic(t)
        assert l2_norm(got - expected) < 1e-8

    def test_gradient_consistency_generic_flow(self):
        # transported gradient equals the gradient of the transported phase
        rng = np.random.default_rng(11)
        u00 = leray_project(random_field(GRID, 2, rng, kmax=2, amplitude=0.3))
        traj = solve_base_flow(u00, 0.0, GRID)
        phase = solve_eiconal([1.0, 0.0], SpectralField.zeros(GRID, 1),
                              traj, c=0.1)
        from phasecascade.fields import gradient
        t = phase.times[-1]
        X = phase._X(t)
        rho = SpectralField(GRID, phase._rho(t))
        gr = gradient(rho).coeffs.copy()
        gr[(0,) + (0,) * GRID.dim] += 1.0
        assert np.max(np.abs(X - gr)) < 1e-8

    def test_refined_grid_oracle(self):
        # same random flow on n and 2n grids; transported remainder agrees
        coarse = Grid(dim=2, n=32, m_theta=4, dt=0.005, t_end=0.2)
        fine = Grid(dim=2, n=64, m_theta=4, dt=0.0025, t_end=0.2)
        xs_c = coarse.meshgrid()
        xs_f = fine.meshgrid()

        def datum(xs):
            return 0.25 * np.stack([np.sin(xs[1]) + 0.3 * np.cos(2 * xs[0]),
                                    np.sin(xs[0])])

        uc = leray_project(to_spectral(coarse, datum(xs_c)))
        uf = leray_project(to_spectral(fine, datum(xs_f)))
        tc = solve_base_flow(uc, 0.0, coarse)
        tf = solve_base_flow(uf, 0.0, fine)
        pc = solve_eiconal([1.0, 0.0], SpectralField.zeros(coarse, 1), tc, 0.1)
        pf = solve_eiconal([1.0, 0.0], SpectralField.zeros(fine, 1), tf, 0.1)
        rc = to_physical(SpectralField(coarse, pc._rho(0.2)))[0]
        rf = to_physical(SpectralField(fine, pf._rho(0.2)))[0][::2, ::2]
        assert np.max(np.abs(rc - rf)) < 1e-6


class TestFlowMap:
    def test_zero_flow_identity(self):
        base = ZeroBase(GRID)
        seeds = np.random.default_rng(0).uniform(0, 2 * np.pi, size=(20, 2))
        out = flow_map(base, 0.3, seeds)
        assert np.max(np.abs(out - seeds)) < 1e-12

    def test_shear_closed_form(self):
        base = ShearBase(GRID, amplitude=0.4)
        seeds = np.random.default_rng(1).uniform(0, 2 * np.pi, size=(16, 2))
        t = 0.3
        out = flow_map(base, t, seeds, dt=0.01)
        expected = seeds.copy()
        expected[:, 0] += 0.4 * np.sin(seeds[:, 1]) * t
        assert np.max(np.abs(out - expected)) < 1e-9

    def test_phase_constant_along_trajectories(self):
        rng = np.random.default_rng(3)
        grid = Grid(dim=2, n=32, m_theta=4, dt=0.005, t_end=0.2)
        u00 = leray_project(random_field(grid, 2, rng, kmax=2, amplitude=0.3))
        traj = solve_base_flow(u00, 0.0, grid)
        phase = solve_eiconal([1.0, 0.0], SpectralField.zeros(grid, 1),
                              traj, c=0.1)

        class _B(ZeroBase):
            def u0(self, t):
                return traj.u(t)

        base = _B(grid)
        seeds = rng.uniform(0, 2 * np.pi, size=(30, 2))
        t = 0.2
        ends = flow_map(base, t, seeds, dt=0.005)
        rho_t = SpectralField(grid, phase._rho(t))
        # phi(t, Gamma(t, x)) = phi(0, x); remainder plus linear part
        vals_t = eval_at_points(rho_t, ends)[:, 0] + ends[:, 0]
        vals_0 = seeds[:, 0]
        assert np.max(np.abs(vals_t - vals_0)) < 1e-6

    def test_area_preservation(self):
        # divergence-free flow preserves the area of an advected polygon
        rng = np.random.default_rng(4)
        grid = Grid(dim=2, n=32, m_theta=4, dt=0.005, t_end=0.25)
        u00 = leray_project(random_field(grid, 2, rng, kmax=2, amplitude=0.4))
        traj = solve_base_flow(u00, 0.0, grid)

        class _B(ZeroBase):
            def u0(self, t):
                return traj.u(t)

        base = _B(grid)
        npts = 256
        ang = np.linspace(0, 2 * np.pi, npts, endpoint=False)
        poly = np.stack([np.pi + 0.5 * np.cos(ang),
                         np.pi + 0.5 * np.sin(ang)], axis=1)
        out = flow_map(base, 0.25, poly, dt=0.005)

        def area(p):
            x, y = p[:, 0], p[:, 1]
            return 0.5 * abs(np.sum(x * np.roll(y, -1) - y * np.roll(x, -1)))

        a0, a1 = area(poly), area(out)
        assert abs(a1 - a0) / a0 < 1e-4
