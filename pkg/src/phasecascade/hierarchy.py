"""Per-instant evaluation of the triangular profile hierarchy.

A Stage takes the prognostic variables at one time (background flow, mean
profiles, polarized oscillating profiles, phase shifts) and derives, in
order of the expansion index m:

  * phase gradients and phase velocities,
  * the gradient-direction completion of each oscillating profile from the
    scalar corrector identities,
  * mean-flow sources and the projected mean evolution with its pressure,
  * the oscillating source sums feeding the polarized transport,
  * time-derivative caches for every object (from the evolution laws, so
    residual evaluation never differences trajectories),
  * the scalar correctors at index m+l and the oscillating pressures from
    the gradient-direction balance.

All consumers (time stepping, residual evaluation, audits) share this one
implementation, which keeps the triangular bookkeeping in a single place.
"""

from __future__ import annotations

import numpy as np

from .errors import MissingDependencyError
from .fields import (
    ProfileField,
    SpectralField,
    dealias,
    divergence,
    gradient,
    laplacian,
    profile_advect,
    profile_divergence,
    profile_dot_x,
    profile_product,
    profile_tensor_mean,
    spectral_derivative,
    tensor_divergence,
    to_physical_complex,
    to_spectral_complex,
)
from .operators import leray_project
from .baseflow import BaseFlow, advect_field


def _laplacian_full(u: ProfileField, nu_axis=True) -> ProfileField:
    out = ProfileField(u.grid, u.ncomp)
    for k, f in u.harmonics.items():
        out.set_harmonic(k, SpectralField(
            u.grid, laplacian(f).coeffs - (k * k) * f.coeffs))
    return out


def _scalar_profile_times_vector(s: ProfileField, vec: np.ndarray) -> ProfileField:
    """Scalar profile times an x-dependent vector block (nc, shape)."""
    out = ProfileField(s.grid, vec.shape[0])
    for k, f in s.harmonics.items():
        sx = to_physical_complex(f)[0]
        out.set_harmonic(k, dealias(to_spectral_complex(s.grid, vec * sx)))
    return out


def _stretch(u: ProfileField, grad_u0: list[np.ndarray]) -> ProfileField:
    """(u . grad) u0 per harmonic; grad_u0[j] holds d_j u0 as (nc, shape)."""
    out = ProfileField(u.grid, grad_u0[0].shape[0])
    for k, f in u.harmonics.items():
        fx = to_physical_complex(f)
        acc = np.zeros_like(fx[:1]).repeat(grad_u0[0].shape[0], axis=0)
        for j in range(len(grad_u0)):
            acc += fx[j] * grad_u0[j]
        out.set_harmonic(k, dealias(to_spectral_complex(u.grid, acc)))
    return out


def _matrix_apply(mat: np.ndarray, u: ProfileField) -> ProfileField:
    out = ProfileField(u.grid, mat.shape[0])
    for k, f in u.harmonics.items():
        fx = to_physical_complex(f)
        out.set_harmonic(k, dealias(to_spectral_complex(
            u.grid, np.einsum("ij...,j...->i...", mat, fx))))
    return out


class Stage:
    """All hierarchy objects derived from prognostic data at one instant.

    Parameters
    ----------
    config : CascadeConfig-like with fields l, N, nu, grid.
    base : BaseFlow.
    t : time.
    Ubar : {m: SpectralField} solenoidal mean profiles, m = 1..N.
    A : {m: ProfileField} polarized oscillating profiles.
    phi : {m: SpectralField} periodic phase shifts.
    """

    def __init__(self, config, base: BaseFlow, t: float,
                 Ubar: dict, A: dict, phi: dict):
        self.config = config
        self.base = base
        self.t = float(t)
        grid = config.grid
        l, N, nu = config.l, config.N, config.nu
        self.Ubar = Ubar
        self.A = A
        self.phi = phi

        for m in range(1, N + 1):
            for name, coll in (("mean", Ubar), ("oscillating", A),
                               ("phase", phi)):
                if m not in coll:
                    raise MissingDependencyError(
                        f"{name} profile at order {m} is absent")

        # -- background objects -------------------------------------------
        self.u0 = base.u0(t)
        self.du0 = base.du0_dt(t)
        self.p0 = base.p0(t)
        X0 = base.X0(t)
        dX0 = base.dX0_dt(t)
        self.X0 = X0
        self.X0x = np.real(to_physical_complex(X0))
        self.dX0x = np.real(to_physical_complex(dX0))
        self.X0n2 = np.sum(self.X0x ** 2, axis=0)
        self.Y0x = self.X0x / self.X0n2
        # d/dt of X0/|X0|^2
        xdot = np.sum(self.X0x * self.dX0x, axis=0)
        self.dY0x = (self.dX0x / self.X0n2
                     - 2.0 * self.X0x * xdot / self.X0n2 ** 2)
        self.Pi0 = base.Pi0(t)
        self.dPi0 = base.dPi0_dt(t)
        self.grad_u0 = [np.real(to_physical_complex(
            spectral_derivative(self.u0, ax))) for ax in range(grid.dim)]
        self.u0x = np.real(to_physical_complex(self.u0))

        ncomp = base.ncomp
        self.ncomp = ncomp

        # -- per-order containers ------------------------------------------
        self.X: dict[int, SpectralField] = {}
        self.Vbar: dict[int, SpectralField] = {}
        self.phi_rhs: dict[int, SpectralField] = {}
        self.dX: dict[int, SpectralField] = {}
        self.S: dict[int, ProfileField] = {}
        self.dS: dict[int, ProfileField] = {}
        self.B: dict[int, ProfileField] = {}
        self.dB: dict[int, ProfileField] = {}
        self.Ustar: dict[int, ProfileField] = {}
        self.dUstar: dict[int, ProfileField] = {}
        self.U: dict[int, ProfileField] = {}
        self.mean_rhs: dict[int, SpectralField] = {}
        self.Pbar: dict[int, SpectralField] = {}
        self.Gsrc: dict[int, ProfileField] = {}
        self.A_rhs: dict[int, ProfileField] = {}
        self.Vstar: dict[int, ProfileField] = {}
        self.dVstar: dict[int, ProfileField] = {}
        self.Pstar: dict[int, ProfileField] = {}
        self.audit: dict[int, list] = {}

        for m in range(1, N + 1):
            self._phase_block(m)
            self._completion_block(m)
            self._mean_block(m)
            self._oscillation_block(m)
            self._corrector_block(m)

    # ------------------------------------------------------------------
    # order-m building blocks
    # ------------------------------------------------------------------

    def _phase_block(self, m: int):
        """Gradient, phase velocity, and transport right-hand side."""
        grid = self.config.grid
        self.X[m] = gradient(self.phi[m])
        # Vbar_m = (u0.grad)phi_m + X0.Ubar_m + sum_{i=1}^{m-1} X_i.Ubar_{m-i}
        acc = advect_field(self.u0, self.phi[m])
        acc = acc + self._dot_field(self.X0, self.Ubar[m])
        for i in range(1, m):
            acc = acc + self._dot_field(self.X[i], self.Ubar[m - i])
        self.Vbar[m] = acc
        self.phi_rhs[m] = acc * (-1.0)
        self.dX[m] = gradient(self.phi_rhs[m])

    def _dot_field(self, v: SpectralField, u: SpectralField) -> SpectralField:
        vx = np.real(to_physical_complex(v))
        ux = to_physical_complex(u)
        prod = np.sum(vx * ux[: v.ncomp], axis=0)
        return dealias(to_spectral_complex(self.config.grid, prod[None]))

    def _completion_block(self, m: int):
        """Gradient-direction completion of the oscillating profile."""
        grid = self.config.grid
        l = self.config.l
        # scalar part S_m = Vstar_m - sum_{i>=1} X_i . Ustar_{m-i}
        S = self.Vstar.get(m)
        S = S.copy() if S is not None else ProfileField(grid, 1)
        for i in range(1, m):
            S = S - profile_dot_x(self.X[i], self.Ustar[m - i])
        self.S[m] = S
        B = _scalar_profile_times_vector(S, self._pad(self.Y0x))
        self.B[m] = B
        self.Ustar[m] = self.A[m] + B
        U = self.Ustar[m].copy()
        U.set_harmonic(0, self.Ubar[m])
        self.U[m] = U

    def _pad(self, vec: np.ndarray) -> np.ndarray:
        """Pad a dim-component block to the velocity component count."""
        if vec.shape[0] == self.ncomp:
            return vec
        out = np.zeros((self.ncomp,) + vec.shape[1:])
        out[: vec.shape[0]] = vec
        return out

    def _mean_block(self, m: int):
        """Mean sources, projected mean evolution, mean pressure."""
        grid = self.config.grid
        src = advect_field(self.u0, self.Ubar[m]) + self._stretch_field(self.Ubar[m])
        terms = [("mean-advection", src)]
        for k in range(1, m):
            a = advect_field(self.Ubar[k], self.Ubar[m - k])
            t = tensor_divergence(
                profile_tensor_mean(self.Ustar[k], self.Ustar[m - k]),
                self.ncomp)
            src = src + a + t
            terms.append((f"mean-mean-advection[{k},{m - k}]", a))
            terms.append((f"oscillation-flux[{k},{m - k}]", t))
        self.audit.setdefault(m, []).append(("mean-sources", terms))
        rhs = leray_project(src * (-1.0))
        if self.config.nu:
            rhs = rhs + laplacian(self.Ubar[m]) * self.config.nu
        self.mean_rhs[m] = rhs
        # lap Pbar = -Div(src)
        d = divergence(src)
        from .grid import k_squared
        k2 = k_squared(grid)
        phat = np.zeros_like(d.coeffs)
        nz = k2 > 0
        phat[0][nz] = d.coeffs[0][nz] / k2[nz]
        self.Pbar[m] = SpectralField(grid, phat)

    def _stretch_field(self, u: SpectralField) -> SpectralField:
        ux = to_physical_complex(u)
        acc = np.zeros((self.ncomp,) + self.config.grid.shape,
                       dtype=np.complex128)
        for j in range(self.config.grid.dim):
            acc += ux[j] * self.grad_u0[j]
        return dealias(to_spectral_complex(self.config.grid, acc))

    def _oscillation_block(self, m: int):
        """Source sums, polarized transport RHS, full profile derivative."""
        grid = self.config.grid
        l, N, nu = self.config.l, self.config.N, self.config.nu
        terms = []
        G = ProfileField(grid, self.ncomp)
        for k in range(1, m):
            adv = profile_advect(self.U[k], self.U[m - k]).oscillating()
            G = G + adv
            terms.append((f"advection[{k},{m - k}]", adv))
        if m > l and (m in self.Pstar):
            gp = self.Pstar[m].map_harmonics(gradient).oscillating()
            G = G + gp
            terms.append((f"oscillating-pressure-gradient[{m}]", gp))
        for k in range(1, m):
            if (l + k) in self.Pstar:
                dth = self.Pstar[l + k].theta_derivative()
                Xblk = self._pad(np.real(to_physical_complex(self.X[m - k])))
                term = _scalar_profile_times_vector(dth, Xblk).oscillating()
                G = G + term
                terms.append((f"pressure-phase[{l + k},{m - k}]", term))
            if (l + k) in self.Vstar:
                conv = profile_product(
                    self.Vstar[l + k], self.U[m - k].theta_derivative(),
                    lambda xa, xb: xa[0] * xb, self.ncomp).oscillating()
                G = G + conv
                terms.append((f"corrector-transport[{l + k},{m - k}]", conv))
        self.Gsrc[m] = G
        self.audit[m].append(("oscillation-sources", terms))

        Ustar = self.Ustar[m]
        adv0 = profile_advect(
            ProfileField.from_mean(self.u0), Ustar).oscillating()
        stretch = _stretch(Ustar, self.grad_u0).oscillating()
        self._adv_stretch = getattr(self, "_adv_stretch", {})
        self._adv_stretch[m] = adv0 + stretch
        inner = adv0 + stretch + G
        if nu:
            inner = inner - _laplacian_full(Ustar) * nu
        rhs = _matrix_apply(self.dPi0, Ustar) - self.Pi0_apply(inner)
        self.A_rhs[m] = rhs

        # scheme derivative of the full oscillating profile
        dB = self._dB(m)
        self.dB[m] = dB
        self.dUstar[m] = rhs + dB

    def Pi0_apply(self, u: ProfileField) -> ProfileField:
        return u.map_harmonics(self.Pi0.apply)

    def _dB(self, m: int) -> ProfileField:
        grid = self.config.grid
        l = self.config.l
        dS = self.dVstar.get(m)
        dS = dS.copy() if dS is not None else ProfileField(grid, 1)
        for i in range(1, m):
            dS = dS - profile_dot_x(self.dX[i], self.Ustar[m - i])
            dS = dS - profile_dot_x(self.X[i], self.dUstar[m - i])
        self.dS[m] = dS
        return (_scalar_profile_times_vector(self.S[m], self._pad(self.dY0x))
                + _scalar_profile_times_vector(dS, self._pad(self.Y0x)))

    def _corrector_block(self, m: int):
        """Scalar corrector at m+l and oscillating pressure at m+l."""
        grid = self.config.grid
        l, nu = self.config.l, self.config.nu
        anti = self.Ustar[m].theta_antiderivative()
        self.Vstar[m + l] = profile_divergence(anti) * (-1.0)
        danti = self.dUstar[m].theta_antiderivative()
        self.dVstar[m + l] = profile_divergence(danti) * (-1.0)

        bal = self.oscillating_balance(m)
        dotted = profile_dot_x(self.X0, bal)
        inv = 1.0 / self.X0n2
        scaled = dotted.map_harmonics(lambda f: dealias(to_spectral_complex(
            grid, inv * to_physical_complex(f))))
        self.Pstar[m + l] = scaled.theta_antiderivative() * (-1.0)

    def oscillating_balance(self, m: int) -> ProfileField:
        """d_t Ustar_m + osc advection + sources - nu lap: the quantity whose
        projected part vanishes by construction and whose gradient-direction
        part defines the oscillating pressure."""
        nu = self.config.nu
        bal = self.dUstar[m] + self._adv_stretch[m] + self.Gsrc[m]
        if nu:
            bal = bal - _laplacian_full(self.Ustar[m]) * nu
        return bal

    # ------------------------------------------------------------------
    # assembled series pieces used by residual evaluation
    # ------------------------------------------------------------------

    def pressure_profile(self, j: int) -> ProfileField:
        """Full pressure coefficient at order j (mean plus oscillating)."""
        grid = self.config.grid
        out = ProfileField(grid, 1)
        if j in self.Pbar:
            out.set_harmonic(0, self.Pbar[j])
        if j in self.Pstar:
            out = out + self.Pstar[j]
        return out

    def dphi_dt(self, j: int) -> SpectralField:
        """Periodic part of the phase-velocity at order j (j=0: background)."""
        if j == 0:
            return self.base.dphi0_dt_periodic(self.t)
        return self.phi_rhs[j]

    def X_at(self, j: int) -> SpectralField:
        return self.X0 if j == 0 else self.X[j]
