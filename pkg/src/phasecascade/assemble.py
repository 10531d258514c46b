"""Turn a completed hierarchy into concrete fields and measurements.

Two complementary representations are used.  Rendering evaluates the
oscillation at theta = phase/eps on a (possibly finer) grid and yields
ordinary velocity/pressure fields; the profile representation keeps theta
symbolic, which is exact at any eps and is what the residual and sweep
norms use.  Fast-variable means and L2 norms agree between the two up to
the usual O(eps) cross terms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .cascade import CascadeState, dictionary
from .errors import EpsilonTooSmallError, UnresolvableEpsilonError
from .fields import (
    ProfileField,
    SpectralField,
    curl,
    dealias,
    divergence,
    enstrophy_of,
    gradient,
    l2_norm,
    laplacian,
    profile_advect,
    profile_divergence,
    profile_dot_x,
    profile_product,
    resample,
    spectral_derivative,
    to_physical_complex,
    to_spectral_complex,
)
from .grid import Grid, k_squared
from .operators import SingularCalculus, ridiv, ridiv_theta, singular_div, singular_grad


# ---------------------------------------------------------------------------
# phases
# ---------------------------------------------------------------------------

def phase_parts(state: CascadeState, eps: float, t: float, which: str):
    """Linear coefficient and periodic remainder of the evaluation phase.

    which = "geometric" sums the k < l shifts; "complete" includes every
    computed shift.  The background linear part is carried separately.
    """
    snap = state.at_time(t)
    base = state.base
    l, N = state.config.l, state.config.N
    delta = eps ** (1.0 / l)
    rho = base.phi0_periodic(t).copy()
    kmax = l - 1 if which == "geometric" else N
    for k in range(1, kmax + 1):
        rho = rho + snap.phi[k] * (delta ** k)
    return np.asarray(base.phi0_linear, dtype=float), rho


def geometric_phase(state, eps, t) -> tuple[np.ndarray, SpectralField]:
    return phase_parts(state, eps, t, "geometric")


def complete_phase(state, eps, t) -> tuple[np.ndarray, SpectralField]:
    return phase_parts(state, eps, t, "complete")


# ---------------------------------------------------------------------------
# numeric profile sums
# ---------------------------------------------------------------------------

def velocity_profile(state: CascadeState, eps: float, t: float,
                     which: str = "complete") -> ProfileField:
    """u0 + sum_k eps^{k/l} U_k as a single numeric profile."""
    st = state.stage(t)
    cfg = state.config
    delta = eps ** (1.0 / cfg.l)
    if which == "complete":
        U = {k: st.U[k] for k in range(1, cfg.N + 1)}
    else:
        U = dictionary(state, t)["U"]
    out = ProfileField.from_mean(st.u0)
    for k, pf in U.items():
        if pf is not None:
            out = out + pf * (delta ** k)
    return out


def pressure_profile_sum(state: CascadeState, eps: float, t: float,
                         which: str = "complete") -> ProfileField:
    st = state.stage(t)
    cfg = state.config
    delta = eps ** (1.0 / cfg.l)
    if which == "complete":
        P = {k: st.pressure_profile(k) for k in range(1, cfg.N + cfg.l + 1)}
    else:
        P = dictionary(state, t)["P"]
    out = ProfileField.from_mean(st.p0)
    for k, pf in P.items():
        if pf is not None:
            out = out + pf * (delta ** k)
    return out


def velocity_profile_dt(state: CascadeState, eps: float, t: float) -> ProfileField:
    """Time derivative of the complete-phase velocity profile, from the
    stored evolution right-hand sides."""
    st = state.stage(t)
    cfg = state.config
    delta = eps ** (1.0 / cfg.l)
    out = ProfileField.from_mean(st.du0)
    for k in range(1, cfg.N + 1):
        term = st.dUstar[k].copy()
        term.set_harmonic(0, st.mean_rhs[k])
        out = out + term * (delta ** k)
    return out


def singular_calculus(state: CascadeState, eps: float, t: float,
                      which: str = "complete") -> SingularCalculus:
    """Scaled calculus attached to the evaluation phase at numeric eps."""
    st = state.stage(t)
    cfg = state.config
    delta = eps ** (1.0 / cfg.l)
    lin, rho = phase_parts(state, eps, t, which)
    X = st.X0.copy()
    kmax = cfg.l - 1 if which == "geometric" else cfg.N
    for k in range(1, kmax + 1):
        X = X + st.X[k] * (delta ** k)
    return SingularCalculus(cfg.grid, eps, X, lin, rho)


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

@dataclass
class AssembledSnapshot:
    """Concrete fields at one (eps, t), possibly on a finer render grid."""

    epsilon: float
    time: float
    u: SpectralField
    p: SpectralField
    provenance: str = ""
    f_residual: SpectralField | None = None
    g_residual: SpectralField | None = None

    @property
    def grid(self) -> Grid:
        return self.u.grid


def _render_resolution(profile: ProfileField, calc: SingularCalculus,
                       n_base: int, n_cap: int = 4096) -> int:
    kmax = max([abs(k) for k in profile.harmonics if k != 0], default=0)
    if kmax == 0:
        return n_base
    Xmax = float(np.max(np.abs(np.real(to_physical_complex(calc.X)))))
    need = 2 * int(np.ceil(kmax * Xmax / calc.epsilon + n_base / 2.0))
    n = n_base
    while n < need:
        n *= 2
        if n > n_cap:
            raise EpsilonTooSmallError(
                f"rendering at eps={calc.epsilon:g} needs n={need}, "
                f"beyond the cap {n_cap}")
    return n


def render_profile(profile: ProfileField, calc: SingularCalculus,
                   n_render: int | None = None) -> SpectralField:
    """Evaluate a profile at theta = phase/eps on a grid that resolves the
    modulation; the linear phase part must give integer wavenumbers."""
    grid = profile.grid
    lin_ratio = np.asarray(calc.phase_linear, float) / calc.epsilon
    if np.max(np.abs(lin_ratio - np.rint(lin_ratio))) > 1e-8:
        raise UnresolvableEpsilonError(
            f"linear phase over eps = {lin_ratio} is not an integer wavevector")
    n_out = n_render or _render_resolution(profile, calc, grid.n)
    fine = grid.with_resolution(n_out)
    xs = fine.coords()
    arg_lin = np.zeros(fine.shape)
    for ax in range(grid.dim):
        arg_lin = arg_lin + np.rint(lin_ratio[ax]) * xs[ax]
    rho = np.real(to_physical_complex(resample(calc.phase_periodic, n_out)))[0]
    acc = np.zeros((profile.ncomp,) + fine.shape)
    for k, f in profile.harmonics.items():
        fx = to_physical_complex(resample(f, n_out))
        if k == 0:
            acc += np.real(fx)
        else:
            mod = np.exp(1j * k * (arg_lin + rho / calc.epsilon))
            acc += 2.0 * np.real(mod * fx)
    from .fields import to_spectral
    return to_spectral(fine, acc)


def assemble(state: CascadeState, eps: float, t: float,
             which: str = "complete", n_render: int | None = None,
             with_residual: bool = False) -> AssembledSnapshot:
    """Velocity/pressure fields at one (eps, t).

    which selects the phase and matching profile family; the two agree to
    the truncation order of the dictionary.
    """
    uprof = velocity_profile(state, eps, t, which)
    pprof = pressure_profile_sum(state, eps, t, which)
    calc = singular_calculus(state, eps, t, which)
    u = render_profile(uprof, calc, n_render)
    p = render_profile(pprof, calc, n_render or u.grid.n)
    prov = provenance(state)
    snapshot = AssembledSnapshot(eps, t, u, p, prov)
    if with_residual:
        fprof, gprof = profile_residual(state, eps, t)
        snapshot.f_residual = render_profile(fprof, calc, u.grid.n) * (1.0 / eps)
        snapshot.g_residual = render_profile(gprof, calc, u.grid.n) * (1.0 / eps)
    return snapshot


def provenance(state: CascadeState) -> str:
    cfg = state.config
    text = (f"l={cfg.l};N={cfg.N};nu={cfg.nu};n={cfg.grid.n};"
            f"scenario={cfg.scenario};t_end={cfg.grid.t_end};dt={cfg.grid.dt}")
    return hashlib.sha256(text.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# profile residual (theta symbolic)
# ---------------------------------------------------------------------------

def profile_residual(state: CascadeState, eps: float, t: float,
                     which: str = "complete"):
    """Momentum and divergence residuals of the profile representation.

    Time derivatives come from the stored right-hand sides.  Returns the
    pair (f, g) of ProfileFields:
        f = d_{0,eps} u + (u . grad_eps) u + grad_eps p - nu eps lap u
        g = div_eps u
    """
    cfg = state.config
    st = state.stage(t)
    u = velocity_profile(state, eps, t, which)
    p = pressure_profile_sum(state, eps, t, which)
    du = velocity_profile_dt(state, eps, t)
    calc = singular_calculus(state, eps, t, which)
    delta = eps ** (1.0 / cfg.l)

    # d_{0,eps} u = eps dt u + (dt phase) d_theta u
    dphi = st.dphi_dt(0)
    for k in range(1, cfg.N + 1):
        dphi = dphi + st.dphi_dt(k) * (delta ** k)
    dth_u = u.theta_derivative()
    f = du * eps + _scalar_field_times_profile(dphi, dth_u)

    # (u . grad_eps) u = eps (u.grad)u + (X.u) d_theta u
    f = f + profile_advect(u, u) * eps
    xu = profile_dot_x(calc.X, u)
    f = f + profile_product(xu, dth_u, lambda xa, xb: xa[0] * xb, u.ncomp)

    f = f + _pad_profile(singular_grad(p, calc), u.ncomp)
    if cfg.nu:
        from .hierarchy import _laplacian_full
        f = f - _laplacian_full(u) * (cfg.nu * eps)
    g = singular_div(u, calc)
    return f, g


def _scalar_field_times_profile(s: SpectralField, u: ProfileField) -> ProfileField:
    sx = np.real(to_physical_complex(s))[0]
    return u.map_harmonics(lambda f: dealias(to_spectral_complex(
        u.grid, sx * to_physical_complex(f))))


def _pad_profile(p: ProfileField, ncomp: int) -> ProfileField:
    if p.ncomp == ncomp:
        return p
    out = ProfileField(p.grid, ncomp)
    for k, f in p.harmonics.items():
        blk = np.zeros((ncomp,) + p.grid.shape, dtype=np.complex128)
        blk[: p.ncomp] = f.coeffs
        out.set_harmonic(k, SpectralField(p.grid, blk))
    return out


# ---------------------------------------------------------------------------
# divergence cleanup
# ---------------------------------------------------------------------------

def divergence_cleanup(state: CascadeState, eps: float, t: float,
                       which: str = "complete"):
    """Subtract the exact divergence corrector from the velocity profile.

    Returns (cleaned profile, corrector profile, relative scaled-divergence
    after cleanup).
    """
    cfg = state.config
    u = velocity_profile(state, eps, t, which)
    calc = singular_calculus(state, eps, t, which)
    g = singular_div(u, calc)
    corrector = ProfileField(u.grid, u.ncomp)
    gbar = g.mean()
    if float(np.max(np.abs(gbar.coeffs))) > 0:
        mean_corr = ridiv(gbar) * (1.0 / eps)
        corrector = corrector + _pad_profile(
            ProfileField.from_mean(mean_corr), u.ncomp)
    gosc = g.oscillating()
    if gosc.active():
        osc_corr = ridiv_theta(gosc, calc)
        corrector = corrector + _pad_profile(osc_corr, u.ncomp)
    cleaned = u - corrector
    g_after = singular_div(cleaned, calc)
    rel = g_after.norm_l2() / max(u.norm_l2(), 1e-300)
    return cleaned, corrector, rel


# ---------------------------------------------------------------------------
# assembled residual (snapshots + time differences)
# ---------------------------------------------------------------------------

def assembled_residual(snapshots: list[AssembledSnapshot], nu_eff: float = 0.0):
    """Euler/NS residual of rendered snapshots at the center time.

    Needs >= 5 equally spaced snapshots; uses the 4th-order centered
    difference in time and spectral space derivatives.
    """
    if len(snapshots) < 5:
        raise ValueError("need at least five consecutive snapshots")
    mid = len(snapshots) // 2
    ts = [s.time for s in snapshots]
    h = ts[1] - ts[0]
    if np.max(np.abs(np.diff(ts) - h)) > 1e-10:
        raise ValueError("snapshots are not equally spaced in time")
    s = snapshots[mid]
    dudt = (snapshots[mid - 2].u * 1.0 + snapshots[mid + 2].u * (-1.0)
            + snapshots[mid + 1].u * 8.0 + snapshots[mid - 1].u * (-8.0)
            ) * (1.0 / (12.0 * h))
    from .baseflow import advect_field
    resid = dudt + advect_field(s.u, s.u) + _grad_padded(s.p, s.u.ncomp)
    if nu_eff:
        resid = resid - laplacian(s.u) * nu_eff
    return resid, s


def _grad_padded(p: SpectralField, ncomp: int) -> SpectralField:
    g = gradient(p)
    if g.ncomp == ncomp:
        return g
    out = np.zeros((ncomp,) + p.grid.shape, dtype=np.complex128)
    out[: g.ncomp] = g.coeffs
    return SpectralField(p.grid, out)


def assembled_residual_exact_dt(state: CascadeState, eps: float, t: float,
                                nu_eff: float = 0.0,
                                n_render: int | None = None) -> SpectralField:
    """Same residual with the time derivative taken from the evolution laws
    (rendered exactly) instead of finite differences."""
    cfg = state.config
    st = state.stage(t)
    calc = singular_calculus(state, eps, t, "complete")
    uprof = velocity_profile(state, eps, t)
    pprof = pressure_profile_sum(state, eps, t)
    duprof = velocity_profile_dt(state, eps, t)
    delta = eps ** (1.0 / cfg.l)
    dphi = st.dphi_dt(0)
    for k in range(1, cfg.N + 1):
        dphi = dphi + st.dphi_dt(k) * (delta ** k)
    # dt of the rendered field: dt profile + (dt phase / eps) d_theta profile
    carrier = _scalar_field_times_profile(dphi * (1.0 / eps),
                                          uprof.theta_derivative())
    du_total = duprof + carrier
    n_out = n_render or _render_resolution(uprof, calc, cfg.grid.n)
    u = render_profile(uprof, calc, n_out)
    p = render_profile(pprof, calc, n_out)
    dudt = render_profile(du_total, calc, n_out)
    from .baseflow import advect_field
    resid = dudt + advect_field(u, u) + _grad_padded(p, u.ncomp)
    if nu_eff:
        resid = resid - laplacian(u) * nu_eff
    return resid


# ---------------------------------------------------------------------------
# vorticity diagnostics
# ---------------------------------------------------------------------------

def vorticity_diagnostics(snapshot: AssembledSnapshot):
    """Vorticity field, its L2 norm, and the enstrophy of the snapshot."""
    w = curl(snapshot.u)
    return w, l2_norm(w), enstrophy_of(snapshot.u)


def vorticity_profile_norm(state: CascadeState, eps: float, t: float) -> float:
    """L2(x, theta) norm of the curl of the oscillation without rendering:
    per harmonic, curl_eps c_j = curl c_j + (i j / eps) X x c_j."""
    u = velocity_profile(state, eps, t)
    calc = singular_calculus(state, eps, t)
    grid = u.grid
    Xx = np.real(to_physical_complex(calc.X))
    out = ProfileField(grid, 3 if u.ncomp == 3 else 1)
    for k, f in u.harmonics.items():
        base = curl(f)
        if k != 0:
            fx = to_physical_complex(f)
            if u.ncomp == 2:
                crossed = Xx[0] * fx[1] - Xx[1] * fx[0]
                extra = to_spectral_complex(grid, crossed[None])
            else:
                crossed = np.stack([
                    Xx[1] * fx[2],
                    -Xx[0] * fx[2],
                    Xx[0] * fx[1] - Xx[1] * fx[0],
                ])
                extra = to_spectral_complex(grid, crossed)
            base = base + dealias(extra) * (1j * k / eps)
        out.set_harmonic(k, base)
    return out.norm_l2()


# ---------------------------------------------------------------------------
# slope fitting
# ---------------------------------------------------------------------------

def order_fit(eps_values, norms):
    """Least squares slope of log(norm) against log(eps).

    Returns (slope, stderr, fit_residual).  Raises on nonpositive data.
    """
    eps_values = np.asarray(eps_values, dtype=float)
    norms = np.asarray(norms, dtype=float)
    if eps_values.size < 2:
        raise ValueError("need at least two sweep points")
    if np.any(norms <= 0) or np.any(eps_values <= 0):
        raise ValueError("order fit needs positive norms and eps")
    x = np.log(eps_values)
    y = np.log(norms)
    n = x.size
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = ym - slope * xm
    resid = y - (slope * x + intercept)
    dof = max(n - 2, 1)
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / sxx))
    return slope, stderr, float(np.sqrt(np.mean(resid ** 2)))


# ---------------------------------------------------------------------------
# expansion-order series (independent extraction oracle)
# ---------------------------------------------------------------------------

class EpsSeries:
    """Finite expansion sum_m delta^m C_m with ProfileField coefficients."""

    def __init__(self, grid: Grid, max_order: int, coeffs: dict | None = None):
        self.grid = grid
        self.max_order = max_order
        self.coeffs: dict[int, ProfileField] = dict(coeffs or {})

    def __add__(self, other: "EpsSeries") -> "EpsSeries":
        out = dict(self.coeffs)
        for m, c in other.coeffs.items():
            out[m] = out[m] + c if m in out else c
        return EpsSeries(self.grid, self.max_order, out)

    def __sub__(self, other: "EpsSeries") -> "EpsSeries":
        return self + other.scale(-1.0)

    def scale(self, a: float) -> "EpsSeries":
        return EpsSeries(self.grid, self.max_order,
                         {m: c * a for m, c in self.coeffs.items()})

    def shift(self, orders: int) -> "EpsSeries":
        return EpsSeries(self.grid, self.max_order,
                         {m + orders: c for m, c in self.coeffs.items()
                          if m + orders <= self.max_order})

    def map(self, fn) -> "EpsSeries":
        return EpsSeries(self.grid, self.max_order,
                         {m: fn(c) for m, c in self.coeffs.items()})

    def mul(self, other: "EpsSeries", op) -> "EpsSeries":
        out: dict[int, ProfileField] = {}
        for i, a in self.coeffs.items():
            for j, b in other.coeffs.items():
                m = i + j
                if m > self.max_order:
                    continue
                term = op(a, b)
                out[m] = out[m] + term if m in out else term
        return EpsSeries(self.grid, self.max_order, out)

    def coeff(self, m: int) -> ProfileField | None:
        return self.coeffs.get(m)


def residual_series(state: CascadeState, t: float, max_order: int | None = None):
    """Expansion coefficients of the momentum and divergence residuals.

    Substitutes the truncated sums into the scaled equations and collects
    powers of delta = eps^(1/l) symbolically; orders at or below the
    construction depth must vanish to round-off.
    """
    cfg = state.config
    st = state.stage(t)
    grid = cfg.grid
    l, N = cfg.l, cfg.N
    M = max_order if max_order is not None else N + l + 1
    ncomp = state.base.ncomp

    def mean_series(fields: dict) -> EpsSeries:
        return EpsSeries(grid, M, {m: ProfileField.from_mean(f)
                                   for m, f in fields.items()})

    u = EpsSeries(grid, M, {0: ProfileField.from_mean(st.u0)})
    du = EpsSeries(grid, M, {0: ProfileField.from_mean(st.du0)})
    for m in range(1, N + 1):
        Um = st.Ustar[m].copy()
        Um.set_harmonic(0, st.Ubar[m])
        u = u + EpsSeries(grid, M, {m: Um})
        dUm = st.dUstar[m].copy()
        dUm.set_harmonic(0, st.mean_rhs[m])
        du = du + EpsSeries(grid, M, {m: dUm})
    p = EpsSeries(grid, M, {0: ProfileField.from_mean(st.p0)})
    for m in range(1, N + l + 1):
        p = p + EpsSeries(grid, M, {m: st.pressure_profile(m)})
    X = mean_series({m: st.X_at(m) for m in range(0, N + 1)})
    dphi = mean_series({m: st.dphi_dt(m) for m in range(0, N + 1)})

    vec_mul = lambda a, b: profile_product(a, b, lambda xa, xb: xa[0] * xb,
                                           ncomp)
    xp_mul = lambda a, b: profile_product(a, b, lambda xa, xb: xa * xb[0],
                                          grid.dim)
    dot_mul = lambda a, b: profile_product(
        a, b, lambda xa, xb: np.sum(xa[: min(xa.shape[0], xb.shape[0])]
                                    * xb[: min(xa.shape[0], xb.shape[0])],
                                    axis=0)[None], 1)
    adv_mul = lambda a, b: profile_advect(a, b)

    dth_u = u.map(lambda c: c.theta_derivative())
    dth_p = p.map(lambda c: c.theta_derivative())

    f = du.shift(l) + dphi.mul(dth_u, vec_mul)
    f = f + u.mul(u, adv_mul).shift(l)
    xu = X.mul(u, dot_mul)
    f = f + xu.mul(dth_u, vec_mul)
    f = f + p.map(lambda c: _pad_profile(c.map_harmonics(gradient), ncomp)).shift(l)
    f = f + X.mul(dth_p, xp_mul).map(lambda c: _pad_profile(c, ncomp))
    if cfg.nu:
        from .hierarchy import _laplacian_full
        f = f - u.map(_laplacian_full).scale(cfg.nu).shift(l)

    g = u.map(lambda c: profile_divergence(c)).shift(l) + X.mul(dth_u, dot_mul)
    return f, g


def eval_series(series: EpsSeries, delta: float) -> ProfileField:
    grid = series.grid
    out: ProfileField | None = None
    for m, c in series.coeffs.items():
        term = c * (delta ** m)
        out = term if out is None else out + term
    return out if out is not None else ProfileField(grid, 1)
