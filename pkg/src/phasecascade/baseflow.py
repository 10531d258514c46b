"""Background flow, phase, and characteristic machinery.

A BaseFlow bundles the background velocity/pressure, the transported phase
with nondegenerate gradient, and the projector attached to that gradient.
Closed-form scenarios ("zero", "shear", "taylor-green") evaluate exactly at
any time; "random-2d" integrates numerically and interpolates.  Time
derivatives always come from the evolution equations, never from
differencing stored snapshots.
"""

from __future__ import annotations

import numpy as np

from .errors import CFLError, NondegeneracyLostError
from .fields import (
    SpectralField,
    dealias,
    divergence,
    gradient,
    l2_norm,
    spectral_derivative,
    to_physical_complex,
    to_spectral,
    to_spectral_complex,
)
from .grid import Grid, k_squared, wavenumbers
from .operators import (
    PointwiseProjector,
    leray_project,
    pointwise_projector,
    pressure_from_source,
)

CFL_LIMIT = 1.7


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def advect_field(u: SpectralField, f: SpectralField) -> SpectralField:
    """(u . grad) f, dealiased; only the first dim components of u advect."""
    ux = np.real(to_physical_complex(u))
    out = None
    for ax in range(u.grid.dim):
        dfx = to_physical_complex(spectral_derivative(f, ax))
        term = ux[ax] * dfx
        out = term if out is None else out + term
    return dealias(to_spectral_complex(u.grid, out))


def euler_rhs(u: SpectralField) -> SpectralField:
    """Leray-projected advection term of the incompressible equations."""
    return leray_project(advect_field(u, u) * (-1.0))


def gradient_transport_rhs(u0: SpectralField, X: SpectralField) -> SpectralField:
    """dt X = -(u0.grad) X - (grad u0)^T X (gradient of the phase law)."""
    out = advect_field(u0, X) * (-1.0)
    u0x = np.real(to_physical_complex(u0))
    Xx = to_physical_complex(X)
    grid = u0.grid
    corr = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
    for j in range(grid.dim):
        for i in range(grid.dim):
            du = to_physical_complex(spectral_derivative(u0.component(i), j))[0]
            corr[j] += Xx[i] * du
    del u0x
    return out - dealias(to_spectral_complex(grid, corr))


def projector_rate(Xx: np.ndarray, Yx: np.ndarray, ncomp: int) -> np.ndarray:
    """Derivative of I - X X^T/|X|^2 along a perturbation Y of X,
    padded to ncomp components (phase gradients have no third component)."""
    shape = Xx.shape[1:]
    X = np.zeros((ncomp,) + shape)
    Y = np.zeros((ncomp,) + shape)
    X[: Xx.shape[0]] = Xx
    Y[: Yx.shape[0]] = Yx
    n2 = np.sum(X * X, axis=0)
    xy = np.sum(X * Y, axis=0)
    out = np.empty((ncomp, ncomp) + shape)
    for i in range(ncomp):
        for j in range(ncomp):
            out[i, j] = (-(Y[i] * X[j] + X[i] * Y[j]) / n2
                         + 2.0 * xy * X[i] * X[j] / n2 ** 2)
    return out


def check_cfl(u: SpectralField, dt: float):
    umax = float(np.max(np.abs(np.real(to_physical_complex(u)))))
    if umax * dt * u.grid.cutoff > CFL_LIMIT:
        raise CFLError(
            f"dt={dt:g} too large: max|u|={umax:.3g} at cutoff {u.grid.cutoff}")


# ---------------------------------------------------------------------------
# BaseFlow
# ---------------------------------------------------------------------------

class BaseFlow:
    """Background flow plus phase trajectory on [0, t_end].

    Subclasses implement u0/p0/phase evaluation; derived objects (gradient
    projector and its rates) are assembled here.
    """

    scenario = "abstract"

    def __init__(self, grid: Grid, ncomp: int, c: float = 0.25):
        self.grid = grid
        self.ncomp = ncomp
        self.c = c

    # -- to implement -----------------------------------------------------

    def u0(self, t: float) -> SpectralField:
        raise NotImplementedError

    def p0(self, t: float) -> SpectralField:
        raise NotImplementedError

    def du0_dt(self, t: float) -> SpectralField:
        return euler_rhs(self.u0(t))

    @property
    def phi0_linear(self) -> np.ndarray:
        raise NotImplementedError

    def phi0_periodic(self, t: float) -> SpectralField:
        raise NotImplementedError

    def X0(self, t: float) -> SpectralField:
        raise NotImplementedError

    def dX0_dt(self, t: float) -> SpectralField:
        return gradient_transport_rhs(self.u0(t), self.X0(t))

    # -- derived ----------------------------------------------------------

    def dphi0_dt_periodic(self, t: float) -> SpectralField:
        """dt of the periodic phase remainder: -(u0.grad)phi0."""
        u0 = self.u0(t)
        out = advect_field(u0, self.phi0_periodic(t)) * (-1.0)
        lin = self.phi0_linear
        u0x = np.real(to_physical_complex(u0))
        drift = np.zeros(self.grid.shape)
        for ax in range(self.grid.dim):
            drift = drift + lin[ax] * u0x[ax]
        return out - to_spectral(self.grid, drift[None])

    def Pi0(self, t: float) -> PointwiseProjector:
        return pointwise_projector(self.X0(t), c=self.c, ncomp=self.ncomp)

    def dPi0_dt(self, t: float) -> np.ndarray:
        Xx = np.real(to_physical_complex(self.X0(t)))
        Yx = np.real(to_physical_complex(self.dX0_dt(t)))
        return projector_rate(Xx, Yx, self.ncomp)

    def advected_Pi0(self, t: float) -> np.ndarray:
        """(u0 . grad) Pi0, from the chain rule on X0."""
        X = self.X0(t)
        Xx = np.real(to_physical_complex(X))
        adv = np.real(to_physical_complex(advect_field(self.u0(t), X)))
        return projector_rate(Xx, adv, self.ncomp)

    def min_gradient(self, t: float) -> float:
        Xx = np.real(to_physical_complex(self.X0(t)))
        return float(np.sqrt(np.sum(Xx ** 2, axis=0).min()))

    def residual(self, t: float, nu: float = 0.0) -> float:
        """Norm of dt u0 + (u0.grad)u0 + grad p0 - nu lap u0."""
        u = self.u0(t)
        r = self.du0_dt(t) + advect_field(u, u) + gradient(self.p0(t))
        if nu:
            from .fields import laplacian
            r = r - laplacian(u) * nu
        return l2_norm(r)


# ---------------------------------------------------------------------------
# closed-form scenarios
# ---------------------------------------------------------------------------

class ZeroBase(BaseFlow):
    """Quiescent background with a linear phase."""

    scenario = "zero"

    def __init__(self, grid: Grid, ncomp: int | None = None,
                 phi_linear=(1.0, 0.0), c: float = 0.25):
        super().__init__(grid, ncomp or grid.dim, c=c)
        self._linear = np.asarray(phi_linear, dtype=float)[: grid.dim]

    def u0(self, t):
        return SpectralField.zeros(self.grid, self.ncomp)

    def p0(self, t):
        return SpectralField.zeros(self.grid, 1)

    def du0_dt(self, t):
        return SpectralField.zeros(self.grid, self.ncomp)

    @property
    def phi0_linear(self):
        return self._linear

    def phi0_periodic(self, t):
        return SpectralField.zeros(self.grid, 1)

    def X0(self, t):
        coeffs = np.zeros((self.grid.dim,) + self.grid.shape, dtype=np.complex128)
        origin = (0,) * self.grid.dim
        for ax in range(self.grid.dim):
            coeffs[(ax,) + origin] = self._linear[ax]
        return SpectralField(self.grid, coeffs)

    def dX0_dt(self, t):
        return SpectralField.zeros(self.grid, self.grid.dim)


class ShearBase(BaseFlow):
    """Steady (or viscously decaying) unidirectional shear u0 = (g(t,x2), 0).

    The phase starts from x1, so the transported phase is
    x1 - G(t, x2) with G the time integral of g.  Its gradient never
    degenerates: |X0| >= 1 for all times.
    """

    scenario = "shear"

    def __init__(self, grid: Grid, amplitude: float = 0.5, wavenumber: int = 1,
                 nu: float = 0.0, ncomp: int | None = None):
        super().__init__(grid, ncomp or grid.dim, c=0.5)
        self.a = float(amplitude)
        self.q = int(wavenumber)
        self.nu = float(nu)

    def _decay(self, t):
        return np.exp(-self.nu * self.q ** 2 * t)

    def _time_integral(self, t):
        if self.nu == 0.0:
            return t
        lam = self.nu * self.q ** 2
        return (1.0 - np.exp(-lam * t)) / lam

    def _x2(self):
        return self.grid.coords()[1]

    def g(self, t):
        return self.a * self._decay(t) * np.sin(self.q * self._x2())

    def u0(self, t):
        out = np.zeros((self.ncomp,) + self.grid.shape)
        out[0] = np.broadcast_to(self.g(t), self.grid.shape)
        return to_spectral(self.grid, out)

    def p0(self, t):
        return SpectralField.zeros(self.grid, 1)

    def du0_dt(self, t):
        out = np.zeros((self.ncomp,) + self.grid.shape)
        lam = self.nu * self.q ** 2
        out[0] = np.broadcast_to(-lam * self.g(t), self.grid.shape)
        return to_spectral(self.grid, out)

    @property
    def phi0_linear(self):
        lin = np.zeros(self.grid.dim)
        lin[0] = 1.0
        return lin

    def phi0_periodic(self, t):
        G = self.a * self._time_integral(t) * np.sin(self.q * self._x2())
        return to_spectral(self.grid, -np.broadcast_to(G, self.grid.shape)[None])

    def X0(self, t):
        out = np.zeros((self.grid.dim,) + self.grid.shape)
        out[0] = 1.0
        dG = self.a * self.q * self._time_integral(t) * np.cos(self.q * self._x2())
        out[1] = -np.broadcast_to(dG, self.grid.shape)
        return to_spectral(self.grid, out)

    def dX0_dt(self, t):
        out = np.zeros((self.grid.dim,) + self.grid.shape)
        dg = self.a * self.q * self._decay(t) * np.cos(self.q * self._x2())
        out[1] = -np.broadcast_to(dg, self.grid.shape)
        return to_spectral(self.grid, out)


class TaylorGreenBase(BaseFlow):
    """Decaying Taylor-Green vortex (no phase attached)."""

    scenario = "taylor-green"

    def __init__(self, grid: Grid, nu: float = 0.01):
        super().__init__(grid, grid.dim)
        self.nu = float(nu)

    def _factor(self, t):
        return np.exp(-2.0 * self.nu * t)

    def u0(self, t):
        x, y = self.grid.coords()[:2]
        f = self._factor(t)
        out = np.zeros((self.ncomp,) + self.grid.shape)
        out[0] = -np.cos(x) * np.sin(y) * f
        out[1] = np.sin(x) * np.cos(y) * f
        return to_spectral(self.grid, out)

    def p0(self, t):
        x, y = self.grid.coords()[:2]
        f2 = self._factor(t) ** 2
        p = -0.25 * (np.cos(2 * x) + np.cos(2 * y)) * f2
        return to_spectral(self.grid, np.broadcast_to(p, self.grid.shape)[None])

    def du0_dt(self, t):
        return self.u0(t) * (-2.0 * self.nu)


# ---------------------------------------------------------------------------
# numeric background: solver + eiconal transport
# ---------------------------------------------------------------------------

class _CubicTrack:
    """Catmull-Rom interpolation of a dense trajectory of coefficient arrays."""

    def __init__(self, times, arrays):
        self.times = np.asarray(times)
        self.arrays = arrays
        self.dt = float(self.times[1] - self.times[0]) if len(times) > 1 else 1.0

    def __call__(self, t: float) -> np.ndarray:
        ts = self.times
        if t <= ts[0]:
            return self.arrays[0]
        if t >= ts[-1]:
            return self.arrays[-1]
        j = int(np.clip(np.floor((t - ts[0]) / self.dt), 0, len(ts) - 2))
        s = (t - ts[j]) / self.dt
        p1, p2 = self.arrays[j], self.arrays[j + 1]
        p0 = self.arrays[j - 1] if j > 0 else p1
        p3 = self.arrays[j + 2] if j + 2 < len(ts) else p2
        m1 = 0.5 * (p2 - p0)
        m2 = 0.5 * (p3 - p1)
        h = s * s * (3 - 2 * s)
        return ((1 - h) * p1 + h * p2
                + (s * (1 - s) ** 2) * m1 + (s * s * (s - 1)) * m2)


def _ifrk4_step(u: SpectralField, dt: float, nu: float, rhs) -> SpectralField:
    """One integrating-factor RK4 step; rhs maps SpectralField -> coeffs rhs."""
    grid = u.grid
    if nu:
        e_full = np.exp(-nu * k_squared(grid) * dt)
        e_half = np.exp(-nu * k_squared(grid) * dt / 2)
    else:
        e_full = e_half = 1.0
    y = u.coeffs
    a = rhs(SpectralField(grid, y)).coeffs
    b = rhs(SpectralField(grid, e_half * (y + 0.5 * dt * a))).coeffs
    c = rhs(SpectralField(grid, e_half * y + 0.5 * dt * b)).coeffs
    d = rhs(SpectralField(grid, e_full * y + dt * e_half * c)).coeffs
    new = e_full * y + (dt / 6.0) * (e_full * a + 2.0 * e_half * (b + c) + d)
    return SpectralField(grid, new)


class DirectTrajectory:
    """Dense solution record of a pseudo-spectral incompressible solve."""

    def __init__(self, grid, times, fields, nu, energy, enstrophy):
        self.grid = grid
        self.times = np.asarray(times)
        self.fields = fields
        self.nu = nu
        self.energy = np.asarray(energy)
        self.enstrophy = np.asarray(enstrophy)
        self._track = _CubicTrack(times, [f.coeffs for f in fields])

    def u(self, t: float) -> SpectralField:
        return SpectralField(self.grid, self._track(t).copy())

    def pressure(self, t: float) -> SpectralField:
        u = self.u(t)
        return pressure_from_source(advect_field(u, u))


def solve_base_flow(u00: SpectralField, nu_base: float, grid: Grid,
                    t_end: float | None = None, dt: float | None = None):
    """Integrate the incompressible equations from a solenoidal datum.

    Explicit RK4 on the projected advection with integrating-factor
    viscosity; returns a DirectTrajectory.
    """
    from .fields import l2_norm as _l2
    div0 = _l2(divergence(u00))
    if div0 > 1e-8 * max(_l2(u00), 1.0):
        raise ValueError(f"datum is not divergence free (|Div u|={div0:.2e})")
    t_end = grid.t_end if t_end is None else t_end
    dt = grid.dt if dt is None else dt
    nsteps = int(round(t_end / dt))
    u = dealias(leray_project(u00))
    times = [0.0]
    fields = [u]
    energy = [_l2(u) ** 2]
    from .fields import enstrophy_of
    enst = [enstrophy_of(u)]
    for i in range(nsteps):
        check_cfl(u, dt)
        u = _ifrk4_step(u, dt, nu_base, euler_rhs)
        u = leray_project(u)
        times.append((i + 1) * dt)
        fields.append(u)
        energy.append(_l2(u) ** 2)
        enst.append(enstrophy_of(u))
    return DirectTrajectory(grid, times, fields, nu_base, energy, enst)


class NumericPhase:
    """Transported phase with gradient track, truncated at nondegeneracy loss."""

    def __init__(self, linear, times, rho_track, X_track, achieved_t):
        self.linear = np.asarray(linear, dtype=float)
        self.times = times
        self._rho = rho_track
        self._X = X_track
        self.achieved_t = achieved_t


def solve_eiconal(phi00_linear, phi00_periodic: SpectralField,
                  flow: DirectTrajectory, c: float,
                  dt: float | None = None) -> NumericPhase:
    """Transport the phase and its gradient along a background trajectory.

    The gradient is evolved by its own law and checked against the
    nondegeneracy constant each step; the track is truncated at the first
    violation (the violation time is recorded rather than fatal).
    """
    grid = flow.grid
    dt = (float(flow.times[1] - flow.times[0]) if dt is None else dt)
    linear = np.asarray(phi00_linear, dtype=float)
    rho = phi00_periodic.copy()
    lin_field = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
    for ax in range(grid.dim):
        lin_field[(ax,) + (0,) * grid.dim] = linear[ax]
    X = SpectralField(grid, lin_field) + gradient(rho)
    Xmin0 = float(np.sqrt(np.sum(
        np.real(to_physical_complex(X)) ** 2, axis=0).min()))
    if Xmin0 < 2 * c:
        raise ValueError(f"initial gradient min {Xmin0:.3g} below 2c")
    times = [0.0]
    rhos = [rho.coeffs.copy()]
    Xs = [X.coeffs.copy()]
    t_end = float(flow.times[-1])
    achieved = t_end
    nsteps = int(round(t_end / dt))

    def rho_rhs_at(tau):
        def rhs(r):
            u0 = flow.u(tau)
            out = advect_field(u0, r) * (-1.0)
            u0x = np.real(to_physical_complex(u0))
            drift = np.zeros(grid.shape)
            for ax in range(grid.dim):
                drift = drift + linear[ax] * u0x[ax]
            return out - to_spectral(grid, drift[None])
        return rhs

    for i in range(nsteps):
        t = i * dt
        # joint RK4 over (rho, X); stages share the background at stage times
        def full_rhs(state, tau):
            r, Xf = state
            return (rho_rhs_at(tau)(r),
                    gradient_transport_rhs(flow.u(tau), Xf))

        s1 = full_rhs((rho, X), t)
        s2 = full_rhs((rho + s1[0] * (dt / 2), X + s1[1] * (dt / 2)), t + dt / 2)
        s3 = full_rhs((rho + s2[0] * (dt / 2), X + s2[1] * (dt / 2)), t + dt / 2)
        s4 = full_rhs((rho + s3[0] * dt, X + s3[1] * dt), t + dt)
        rho = rho + (s1[0] + s2[0] * 2 + s3[0] * 2 + s4[0]) * (dt / 6)
        X = X + (s1[1] + s2[1] * 2 + s3[1] * 2 + s4[1]) * (dt / 6)
        Xmin = float(np.sqrt(np.sum(
            np.real(to_physical_complex(X)) ** 2, axis=0).min()))
        if Xmin < c:
            achieved = t
            break
        times.append((i + 1) * dt)
        rhos.append(rho.coeffs.copy())
        Xs.append(X.coeffs.copy())
    return NumericPhase(linear, np.asarray(times), _CubicTrack(times, rhos),
                        _CubicTrack(times, Xs), achieved)


class NumericBase(BaseFlow):
    """Background flow backed by numeric trajectories."""

    scenario = "random-2d"

    def __init__(self, flow: DirectTrajectory, phase: NumericPhase,
                 c: float = 0.25):
        super().__init__(flow.grid, flow.fields[0].ncomp, c=c)
        self.flow = flow
        self.phase = phase

    def u0(self, t):
        return self.flow.u(t)

    def p0(self, t):
        return self.flow.pressure(t)

    @property
    def phi0_linear(self):
        return self.phase.linear

    def phi0_periodic(self, t):
        return SpectralField(self.grid, self.phase._rho(t).copy())

    def X0(self, t):
        return SpectralField(self.grid, self.phase._X(t).copy())


def make_base(scenario: str, grid: Grid, *, ncomp=None, amplitude=0.5,
              wavenumber=1, nu=0.0, phi_linear=None, seed=0,
              c=0.25) -> BaseFlow:
    """Scenario presets named in run configurations."""
    if scenario == "zero":
        lin = phi_linear if phi_linear is not None else [1.0, 0.0]
        return ZeroBase(grid, ncomp=ncomp, phi_linear=lin, c=c)
    if scenario == "shear":
        return ShearBase(grid, amplitude=amplitude, wavenumber=wavenumber,
                         nu=nu, ncomp=ncomp)
    if scenario == "shear-layer":
        # 2.5D: three components on the plane, oscillation direction x2
        return ZeroBase(grid, ncomp=3, phi_linear=[0.0, 1.0], c=c)
    if scenario == "taylor-green":
        return TaylorGreenBase(grid, nu=nu)
    if scenario == "random-2d":
        from .fields import random_field
        rng = np.random.default_rng(seed)
        u00 = leray_project(random_field(grid, grid.dim, rng, kmax=2,
                                         amplitude=amplitude))
        traj = solve_base_flow(u00, nu, grid)
        lin = phi_linear if phi_linear is not None else [1.0, 0.0]
        phase = solve_eiconal(lin, SpectralField.zeros(grid, 1), traj, c)
        return NumericBase(traj, phase, c=c)
    raise ValueError(f"unknown base scenario {scenario!r}")


# ---------------------------------------------------------------------------
# characteristic flow map
# ---------------------------------------------------------------------------

def eval_at_points(f: SpectralField, pts: np.ndarray) -> np.ndarray:
    """Evaluate the Fourier series at arbitrary points, shape (m, dim)."""
    grid = f.grid
    ks = wavenumbers(grid)
    active = np.nonzero(np.sum(np.abs(f.coeffs), axis=0) >
                        1e-15 * max(float(np.max(np.abs(f.coeffs))), 1e-300))
    out = np.zeros((f.ncomp, pts.shape[0]), dtype=np.complex128)
    # explicit integer wavevectors for the active modes
    kcols = []
    for ax in range(grid.dim):
        kfull = np.broadcast_to(ks[ax], grid.shape)
        kcols.append(kfull[active])
    kvecs = np.stack(kcols)  # (dim, nactive)
    phases = np.exp(1j * (pts @ kvecs))  # (m, nactive)
    for c in range(f.ncomp):
        out[c] = phases @ f.coeffs[c][active]
    return np.real(out.T)  # (m, ncomp)


def flow_map(base: BaseFlow, t: float, seeds: np.ndarray,
             dt: float | None = None) -> np.ndarray:
    """Integrate particle positions dt Gamma = u0(t, Gamma) by RK4."""
    dt = base.grid.dt if dt is None else dt
    pts = np.array(seeds, dtype=float)
    nsteps = max(1, int(round(t / dt)))
    h = t / nsteps
    for i in range(nsteps):
        ti = i * h

        def vel(tau, p):
            return eval_at_points(base.u0(tau), p)[:, : base.grid.dim]

        k1 = vel(ti, pts)
        k2 = vel(ti + h / 2, pts + h / 2 * k1)
        k3 = vel(ti + h / 2, pts + h / 2 * k2)
        k4 = vel(ti + h, pts + h * k3)
        pts = pts + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return pts
