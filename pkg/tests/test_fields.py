"""Grid and field layer: transforms, calculus, norms, shells, snapshots."""

import numpy as np
import pytest

from phasecascade.errors import NonZeroThetaMeanError, ShapeMismatchError
from phasecascade.fields import (
    ProfileField,
    SpectralField,
    conj_field,
    curl,
    dealias,
    divergence,
    gradient,
    l2_norm,
    load_field,
    profile_advect,
    profile_product,
    profile_tensor_mean,
    random_field,
    resample,
    save_field,
    save_profile,
    shell_spectrum,
    sobolev_norm,
    spectral_derivative,
    to_physical,
    to_spectral,
)
from phasecascade.grid import Grid

GRID = Grid(dim=2, n=32, m_theta=8)


def _rng():
    return np.random.default_rng(1234)


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValueError):
            Grid(n=48)  # not a power of two
        with pytest.raises(ValueError):
            Grid(n=4)
        with pytest.raises(ValueError):
            Grid(m_theta=0)
        with pytest.raises(ValueError):
            Grid(dt=-1.0)

    def test_cutoff(self):
        assert Grid(n=128).cutoff == 42
        assert Grid(n=32).cutoff == 10

    def test_wavenumbers_are_integers(self):
        ks = GRID.wavenumbers()
        assert ks[0].ravel()[1] == 1.0
        assert ks[0].ravel()[-1] == -1.0


class TestTransforms:
    def test_constant_field(self):
        f = to_spectral(GRID, np.ones(GRID.shape))
        assert abs(f.coeffs[0, 0, 0] - 1.0) < 1e-14
        off = f.coeffs.copy()
        off[0, 0, 0] = 0
        assert np.max(np.abs(off)) < 1e-14

    def test_cosine_coefficients(self):
        x = GRID.coords()[0]
        f = to_spectral(GRID, np.broadcast_to(np.cos(x), GRID.shape))
        assert abs(f.coeffs[0, 1, 0] - 0.5) < 1e-14
        assert abs(f.coeffs[0, -1, 0] - 0.5) < 1e-14

    def test_roundtrip_random(self):
        u = _rng().standard_normal(GRID.shape)
        f = to_spectral(GRID, u)
        back = to_physical(f)[0]
        assert np.max(np.abs(back - u)) < 1e-12 * np.max(np.abs(u))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            to_spectral(GRID, np.ones((7, 5)))

    def test_parseval(self):
        u = _rng().standard_normal(GRID.shape)
        f = to_spectral(GRID, u)
        grid_norm = np.sqrt(np.sum(u ** 2) * GRID.volume / GRID.npoints)
        assert abs(l2_norm(f) - grid_norm) < 1e-12 * grid_norm


class TestDerivatives:
    def test_sin_derivative(self):
        x = GRID.coords()[0]
        f = to_spectral(GRID, np.broadcast_to(np.sin(x), GRID.shape))
        df = to_physical(spectral_derivative(f, 0))[0]
        assert np.max(np.abs(df - np.broadcast_to(np.cos(x), GRID.shape))) < 1e-12

    def test_derivative_other_axis_vanishes(self):
        x = GRID.coords()[0]
        f = to_spectral(GRID, np.broadcast_to(np.sin(x), GRID.shape))
        df = spectral_derivative(f, 1)
        assert np.max(np.abs(df.coeffs)) < 1e-14

    def test_against_finite_differences(self):
        # 4th-order centered stencil as the independent check; the stencil
        # truncation error h^4 k^5/30 needs a fine grid to clear 1e-6
        rng = _rng()
        grid = Grid(dim=2, n=256, m_theta=2)
        f = random_field(grid, 1, rng, kmax=2)
        u = to_physical(f)[0]
        h = 2 * np.pi / grid.n
        fd = (-np.roll(u, -2, 0) + 8 * np.roll(u, -1, 0)
              - 8 * np.roll(u, 1, 0) + np.roll(u, 2, 0)) / (12 * h)
        sp = to_physical(spectral_derivative(f, 0))[0]
        assert np.max(np.abs(sp - fd)) < 1e-6 * max(1.0, np.max(np.abs(sp)))

    def test_derivatives_commute(self):
        f = random_field(GRID, 1, _rng())
        a = spectral_derivative(spectral_derivative(f, 0), 1)
        b = spectral_derivative(spectral_derivative(f, 1), 0)
        # equal up to the last ulp of the float multiply
        scale = np.max(np.abs(a.coeffs))
        assert np.max(np.abs(a.coeffs - b.coeffs)) <= 1e-15 * scale

    def test_dealias_idempotent(self):
        f = to_spectral(GRID, _rng().standard_normal(GRID.shape))
        once = dealias(f)
        twice = dealias(once)
        assert np.array_equal(once.coeffs, twice.coeffs)

    def test_gradient_divergence_consistency(self):
        f = random_field(GRID, 1, _rng())
        from phasecascade.fields import laplacian
        lhs = divergence(gradient(f))
        assert np.max(np.abs(lhs.coeffs - laplacian(f).coeffs)) < 1e-13


class TestCurl:
    def test_irrotational(self):
        p = random_field(GRID, 1, _rng())
        g = gradient(p)
        assert l2_norm(curl(g)) < 1e-12

    def test_single_mode(self):
        x = GRID.coords()[0]
        u = np.zeros((2,) + GRID.shape)
        u[1] = np.broadcast_to(np.cos(x), GRID.shape)
        w = curl(to_spectral(GRID, u))
        expected = -np.sin(x)
        assert np.max(np.abs(to_physical(w)[0] - np.broadcast_to(expected, GRID.shape))) < 1e-12


class TestSobolev:
    def test_zero(self):
        assert sobolev_norm(SpectralField.zeros(GRID, 1), 3) == 0.0

    def test_m0_is_l2(self):
        f = random_field(GRID, 1, _rng())
        assert abs(sobolev_norm(f, 0) - l2_norm(f)) < 1e-12

    def test_single_mode_hand_value(self):
        # harmonic k=1, mode xi=(1,0), unit coefficient, m=1:
        # weight (1+1)(1+1) = 4, norm = sqrt(2 * 4 * volume) over k=+-1
        pf = ProfileField(GRID, 1)
        coeffs = np.zeros((1,) + GRID.shape, dtype=complex)
        coeffs[0, 1, 0] = 1.0
        pf.set_harmonic(1, SpectralField(GRID, coeffs))
        expected = np.sqrt(2.0 * 4.0 * GRID.volume)
        assert abs(sobolev_norm(pf, 1) - expected) < 1e-12


class TestShellSpectrum:
    def test_single_mode(self):
        x = GRID.coords()[0]
        f = to_spectral(GRID, np.broadcast_to(np.cos(x), GRID.shape))
        E = shell_spectrum(f)
        assert E[1] > 0
        assert abs(np.sum(E) - E[1]) < 1e-14

    def test_parseval_sum(self):
        f = to_spectral(GRID, _rng().standard_normal(GRID.shape))
        E = shell_spectrum(f)
        assert abs(np.sum(E) - l2_norm(f) ** 2) < 1e-10 * l2_norm(f) ** 2


class TestProfileField:
    def test_mean_osc_split(self):
        pf = ProfileField(GRID, 1)
        pf.set_harmonic(0, random_field(GRID, 1, _rng()))
        pf.set_harmonic(2, random_field(GRID, 1, _rng(), real=False))
        r = ProfileField(GRID, 1, {0: pf.mean()}) + pf.oscillating()
        for k in pf.harmonics:
            assert np.allclose(r.harmonic(k).coeffs, pf.harmonic(k).coeffs)

    def test_theta_antiderivative_roundtrip(self):
        pf = ProfileField(GRID, 1)
        pf.set_harmonic(1, random_field(GRID, 1, _rng(), real=False))
        pf.set_harmonic(3, random_field(GRID, 1, _rng(), real=False))
        back = pf.theta_antiderivative().theta_derivative()
        for k in (1, 3):
            assert np.allclose(back.harmonic(k).coeffs, pf.harmonic(k).coeffs,
                               atol=1e-14)

    def test_antiderivative_rejects_mean(self):
        pf = ProfileField.from_mean(random_field(GRID, 1, _rng()))
        with pytest.raises(NonZeroThetaMeanError):
            pf.theta_antiderivative()

    def test_cos_harmonic_antiderivative(self):
        # profile cos(theta): harmonic k=1 coefficient 1/2; antiderivative
        # must be sin(theta)
        pf = ProfileField(GRID, 1)
        coeffs = np.zeros((1,) + GRID.shape, dtype=complex)
        coeffs[0, 0, 0] = 0.5
        pf.set_harmonic(1, SpectralField(GRID, coeffs))
        anti = pf.theta_antiderivative()
        val = anti.at_theta(np.pi / 2.0)
        assert abs(val.coeffs[0, 0, 0] - 1.0) < 1e-12  # sin(pi/2)

    def test_at_theta_real(self):
        pf = ProfileField(GRID, 1)
        pf.set_harmonic(1, random_field(GRID, 1, _rng(), real=False))
        v = pf.at_theta(0.7)
        assert v.is_real()

    def test_conj_field(self):
        f = random_field(GRID, 1, _rng(), real=False)
        c = conj_field(f)
        a = np.conj(np.fft.ifftn(f.coeffs[0] * GRID.npoints))
        b = np.fft.ifftn(c.coeffs[0] * GRID.npoints)
        assert np.max(np.abs(a - b)) < 1e-12

    def test_norm_l2_parseval(self):
        pf = ProfileField(GRID, 1)
        pf.set_harmonic(0, random_field(GRID, 1, _rng()))
        pf.set_harmonic(1, random_field(GRID, 1, _rng(), real=False))
        # quadrature over a theta grid as the oracle
        nth = 64
        total = 0.0
        for j in range(nth):
            th = 2 * np.pi * j / nth
            v = to_physical(pf.at_theta(th))
            total += np.sum(v ** 2) / nth
        oracle = np.sqrt(total * GRID.volume / GRID.npoints)
        assert abs(pf.norm_l2() - oracle) < 1e-10 * oracle


class TestProfileProducts:
    def test_scalar_product_against_theta_grid(self):
        # kmax kept low so the product stays inside the dealias band and
        # the pointwise oracle is exact
        rng = _rng()
        a = ProfileField(GRID, 1)
        a.set_harmonic(0, random_field(GRID, 1, rng, kmax=3))
        a.set_harmonic(1, random_field(GRID, 1, rng, kmax=3, real=False))
        b = ProfileField(GRID, 1)
        b.set_harmonic(2, random_field(GRID, 1, rng, kmax=3, real=False))
        prod = profile_product(a, b, lambda xa, xb: xa * xb, 1)
        for th in (0.0, 0.9, 2.5):
            lhs = to_physical(prod.at_theta(th))
            rhs = to_physical(a.at_theta(th)) * to_physical(b.at_theta(th))
            assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_advection_matches_pointwise(self):
        rng = _rng()
        u = ProfileField(GRID, 2)
        u.set_harmonic(0, random_field(GRID, 2, rng, kmax=3))
        f = ProfileField(GRID, 2)
        f.set_harmonic(1, random_field(GRID, 2, rng, kmax=3, real=False))
        adv = profile_advect(u, f)
        th = 1.3
        ux = to_physical(u.at_theta(th))
        lhs = to_physical(adv.at_theta(th))
        rhs = np.zeros_like(lhs)
        for ax in range(2):
            dfx = to_physical(f.map_harmonics(
                lambda h, ax=ax: spectral_derivative(h, ax)).at_theta(th))
            rhs += ux[ax] * dfx
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_tensor_mean_hand_value(self):
        # U = e2 cos(theta) a(x): mean of U (x) U = 1/2 a^2 e2e2^T
        x = GRID.coords()[0]
        a = np.broadcast_to(np.cos(x), GRID.shape)
        U = ProfileField(GRID, 2)
        coeffs = np.zeros((2,) + GRID.shape, dtype=complex)
        coeffs[1] = to_spectral(GRID, a).coeffs[0] * 0.5
        U.set_harmonic(1, SpectralField(GRID, coeffs))
        T = profile_tensor_mean(U, U)
        # component (i=1, j=1) -> index 1*2+1 = 3
        t22 = to_physical(T.component(3))[0]
        assert np.max(np.abs(t22 - 0.5 * a ** 2)) < 1e-12
        for idx in (0, 1, 2):
            assert np.max(np.abs(T.component(idx).coeffs)) < 1e-14


class TestResample:
    def test_upsample_preserves_values(self):
        f = random_field(GRID, 1, _rng(), kmax=5)
        fine = resample(f, 64)
        # values at the coarse points must agree
        coarse = to_physical(f)[0]
        finex = to_physical(fine)[0][::2, ::2]
        assert np.max(np.abs(coarse - finex)) < 1e-12


class TestSnapshotIO:
    def test_field_roundtrip(self, tmp_path):
        f = random_field(GRID, 2, _rng())
        p = tmp_path / "f.phcf"
        save_field(p, f, time=0.25)
        g, t = load_field(p, GRID)
        assert t == 0.25
        assert np.array_equal(f.coeffs, g.coeffs)

    def test_profile_roundtrip(self, tmp_path):
        pf = ProfileField(GRID, 2)
        pf.set_harmonic(0, random_field(GRID, 2, _rng()))
        pf.set_harmonic(2, random_field(GRID, 2, _rng(), real=False))
        p = tmp_path / "pf.phcf"
        save_profile(p, pf, time=1.5)
        q, t = load_field(p, GRID)
        assert t == 1.5
        for k in (0, 1, 2):
            assert np.allclose(q.harmonic(k).coeffs, pf.harmonic(k).coeffs,
                               atol=1e-14)

    def test_header_magic(self, tmp_path):
        p = tmp_path / "f.phcf"
        save_field(p, random_field(GRID, 1, _rng()))
        assert p.read_bytes()[:4] == b"PHCF"
