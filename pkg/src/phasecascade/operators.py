"""Projection and inversion toolbox for the oscillatory hierarchy.

Contains the Leray projector, pointwise hyperplane projectors attached to a
phase gradient, exact right inverses of the divergence in x and in the
scaled (x, theta) calculus, the fast-variable antiderivative, the scaled
differential operators, the per-harmonic conjugated Leray projector, and
the linear maps M and ell built from the background flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DegenerateDirectionError,
    DegenerateGradientError,
    EpsilonTooSmallError,
    NonZeroMeanError,
    NonZeroThetaMeanError,
)
from .fields import (
    ProfileField,
    SpectralField,
    dealias,
    divergence,
    gradient,
    laplacian,
    spectral_derivative,
    to_physical_complex,
    to_spectral_complex,
)
from .grid import Grid, dealias_mask, k_squared, wavenumbers


# ---------------------------------------------------------------------------
# Leray projection
# ---------------------------------------------------------------------------

def leray_project(u: SpectralField) -> SpectralField:
    """Project onto divergence-free fields: u_hat -> (I - xi xi^T/|xi|^2) u_hat.

    The xi=0 mode is preserved.  Components beyond the grid dimension
    (2.5D fields) are untouched by construction since xi_3 = 0.
    """
    grid = u.grid
    ks = wavenumbers(grid)
    k2 = k_squared(grid)
    inv = np.zeros_like(k2)
    nz = k2 > 0
    inv[nz] = 1.0 / k2[nz]
    # xi . u over grid axes only
    xi_dot = np.zeros(grid.shape, dtype=np.complex128)
    for ax in range(grid.dim):
        xi_dot += ks[ax] * u.coeffs[ax]
    out = u.coeffs.copy()
    for ax in range(grid.dim):
        out[ax] -= ks[ax] * xi_dot * inv
    return SpectralField(grid, out)


def pressure_from_source(src: SpectralField) -> SpectralField:
    """Solve lap p = -Div src; the pressure making src + grad p solenoidal."""
    d = divergence(src)
    k2 = k_squared(src.grid)
    phat = np.zeros_like(d.coeffs)
    nz = k2 > 0
    phat[0][nz] = d.coeffs[0][nz] / k2[nz]
    return SpectralField(src.grid, phat)


# ---------------------------------------------------------------------------
# pointwise hyperplane projector
# ---------------------------------------------------------------------------

@dataclass
class PointwiseProjector:
    """Orthogonal projector field onto the hyperplane normal to X(x)."""

    grid: Grid
    matrix: np.ndarray  # (nc, nc, *shape) real

    def apply(self, u: SpectralField) -> SpectralField:
        ux = to_physical_complex(u)
        out = np.einsum("ij...,j...->i...", self.matrix, ux)
        return dealias(to_spectral_complex(u.grid, out))

    def apply_physical(self, ux: np.ndarray) -> np.ndarray:
        return np.einsum("ij...,j...->i...", self.matrix, ux)

    def complement(self) -> "PointwiseProjector":
        eye = np.zeros_like(self.matrix)
        for i in range(self.matrix.shape[0]):
            eye[i, i] = 1.0
        return PointwiseProjector(self.grid, eye - self.matrix)


def pointwise_projector(X: SpectralField, c: float = 1e-8,
                        ncomp: int | None = None) -> PointwiseProjector:
    """Projector onto X(x)-perp at every grid point.

    Raises DegenerateGradientError when min |X| < c.  For 2.5D fields pass
    ncomp=3; the extra component is treated as normal to X.
    """
    grid = X.grid
    Xx = np.real(to_physical_complex(X))
    nc = ncomp if ncomp is not None else Xx.shape[0]
    norm2 = np.sum(Xx ** 2, axis=0)
    if float(np.sqrt(norm2.min())) < c:
        raise DegenerateGradientError(
            f"min |X| = {float(np.sqrt(norm2.min())):.3e} < c = {c:.3e}")
    mat = np.zeros((nc, nc) + grid.shape)
    for i in range(nc):
        mat[i, i] = 1.0
    for i in range(Xx.shape[0]):
        for j in range(Xx.shape[0]):
            mat[i, j] -= Xx[i] * Xx[j] / norm2
    return PointwiseProjector(grid, mat)


# ---------------------------------------------------------------------------
# right inverse of Div in x
# ---------------------------------------------------------------------------

def ridiv(g: SpectralField, tol: float = 1e-12) -> SpectralField:
    """Right inverse of the divergence on zero-mean scalars:
    u_hat(xi) = -i xi g_hat(xi)/|xi|^2, so Div(ridiv g) = g exactly."""
    grid = g.grid
    mean = complex(g.coeffs[0][(0,) * grid.dim])
    scale = float(np.max(np.abs(g.coeffs), initial=0.0)) or 1.0
    if abs(mean) > tol * max(scale, 1.0):
        raise NonZeroMeanError(f"g has mean {abs(mean):.3e}")
    ks = wavenumbers(grid)
    k2 = k_squared(grid)
    inv = np.zeros_like(k2)
    nz = k2 > 0
    inv[nz] = 1.0 / k2[nz]
    out = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
    for ax in range(grid.dim):
        out[ax] = -1j * ks[ax] * g.coeffs[0] * inv
    return SpectralField(grid, out)


# ---------------------------------------------------------------------------
# fast-variable antiderivative
# ---------------------------------------------------------------------------

def theta_antiderivative(u: ProfileField) -> ProfileField:
    """Harmonic k -> harmonic/(i k); raises on nonzero fast mean."""
    return u.theta_antiderivative()


# ---------------------------------------------------------------------------
# scaled calculus
# ---------------------------------------------------------------------------

@dataclass
class SingularCalculus:
    """Scaled differential operators attached to epsilon and a phase.

    X is the (full) phase gradient as a vector field; phase_linear is the
    linear coefficient vector of the phase and phase_periodic its periodic
    remainder, needed to form the modulation e^{i k phase / eps}.
    """

    grid: Grid
    epsilon: float
    X: SpectralField
    phase_linear: np.ndarray
    phase_periodic: SpectralField

    def __post_init__(self):
        if not (0 < self.epsilon <= 1):
            raise ValueError("epsilon must lie in (0, 1]")

    def modulation(self, k: int) -> np.ndarray:
        """Physical-space e^{i k phase/eps}; requires k * linear/eps integer."""
        ratio = k * np.asarray(self.phase_linear, dtype=float) / self.epsilon
        if np.max(np.abs(ratio - np.rint(ratio))) > 1e-9:
            raise EpsilonTooSmallError(
                f"k*linear/eps = {ratio} is not an integer wavevector")
        xs = self.grid.coords()
        arg = np.zeros(self.grid.shape)
        for ax in range(self.grid.dim):
            arg = arg + np.rint(ratio[ax]) * xs[ax]
        rem = np.real(to_physical_complex(self.phase_periodic))[0]
        return np.exp(1j * (arg + (k / self.epsilon) * rem))

    def epsilon_min(self, kmax: int = 1) -> float:
        """Smallest epsilon keeping modulated harmonics inside the dealias
        band with a factor-two margin."""
        Xmax = float(np.max(np.abs(np.real(to_physical_complex(self.X)))))
        return 2.0 * kmax * Xmax / self.grid.cutoff

    def check_resolvable(self, kmax: int):
        if self.epsilon < self.epsilon_min(kmax):
            raise EpsilonTooSmallError(
                f"eps = {self.epsilon:.4g} below eps_min = "
                f"{self.epsilon_min(kmax):.4g} for |k| <= {kmax}")


def singular_div(u: ProfileField, calc: SingularCalculus) -> ProfileField:
    """eps Div u + X . d_theta u."""
    out = u.map_harmonics(divergence) * calc.epsilon
    Xx = np.real(to_physical_complex(calc.X))
    for k in list(u.harmonics.keys()):
        if k == 0:
            continue
        f = u.harmonics[k]
        term = dealias(to_spectral_complex(
            u.grid, np.sum(Xx * to_physical_complex(f), axis=0)[None] * (1j * k)))
        out.harmonics[k] = out.harmonics[k] + term if k in out.harmonics else term
    return out


def singular_grad(p: ProfileField, calc: SingularCalculus) -> ProfileField:
    """eps grad p + X d_theta p."""
    out = p.map_harmonics(gradient) * calc.epsilon
    Xx = np.real(to_physical_complex(calc.X))
    for k in list(p.harmonics.keys()):
        if k == 0:
            continue
        f = p.harmonics[k]
        term = dealias(to_spectral_complex(
            p.grid, Xx * to_physical_complex(f)[0] * (1j * k)))
        out.harmonics[k] = out.harmonics[k] + term if k in out.harmonics else term
    return out


# ---------------------------------------------------------------------------
# right inverse of the scaled divergence
# ---------------------------------------------------------------------------

def _modulated_inverse(gk: np.ndarray, k: int, calc: SingularCalculus):
    """Exact inverse via modulation: solve eps Div V = e^{ik phase/eps} g_k
    along e1 plus a transverse completion, then demodulate."""
    grid = calc.grid
    mod = calc.modulation(k)
    H = mod * gk[0]
    Hhat = np.fft.fftn(H) / grid.npoints
    ks = wavenumbers(grid)
    # per-line mean along axis 0 lives on the k1 = 0 plane
    k1 = ks[0]
    line_mean = np.where(k1 == 0, Hhat, 0.0)
    osc = Hhat - line_mean
    nz = np.abs(k1) > 0
    inv1 = np.where(nz, 1.0 / np.where(nz, 1j * k1, 1.0), 0.0)
    V = np.zeros((grid.dim,) + grid.shape, dtype=np.complex128)
    V[0] = osc * inv1 / calc.epsilon
    # transverse part: (d-1)-dimensional ridiv of the line means
    k2t = np.zeros(grid.shape)
    for ax in range(1, grid.dim):
        k2t = k2t + ks[ax] ** 2
    invt = np.zeros_like(k2t)
    nzt = k2t > 0
    invt[nzt] = 1.0 / k2t[nzt]
    for ax in range(1, grid.dim):
        V[ax] = -1j * ks[ax] * line_mean * invt / calc.epsilon
    residual_mean = line_mean[(0,) * grid.dim]
    Vx = np.fft.ifftn(V * grid.npoints, axes=tuple(range(1, grid.dim + 1)))
    vk = np.conj(mod) * Vx
    return vk, abs(residual_mean)


def _scaled_div_apply(v: np.ndarray, k: int, calc: SingularCalculus,
                      Xx: np.ndarray) -> np.ndarray:
    """Apply eps Div + i k X . to a physical vector block, dealiased."""
    grid = calc.grid
    mask = dealias_mask(grid)
    ks = wavenumbers(grid)
    vhat = np.fft.fftn(v, axes=tuple(range(1, grid.dim + 1)))
    vhat *= mask
    vband = np.fft.ifftn(vhat, axes=tuple(range(1, grid.dim + 1)))
    div_hat = np.zeros(grid.shape, dtype=np.complex128)
    for ax in range(grid.dim):
        div_hat += 1j * ks[ax] * vhat[ax]
    div_v = np.fft.ifftn(div_hat)
    prod = np.sum(Xx * vband, axis=0)
    prod_hat = np.fft.fftn(prod) * mask
    prod = np.fft.ifftn(prod_hat)
    return calc.epsilon * div_v + (1j * k) * prod


def _iterative_inverse(gk: np.ndarray, k: int, calc: SingularCalculus,
                       tol: float, max_iter: int = 300):
    """Neumann iteration v <- v + (ik)^{-1} X/|X|^2 (g - A v) with a CGNR
    fallback on the dealiased band when the iteration is not contracting."""
    grid = calc.grid
    Xx = np.real(to_physical_complex(calc.X))
    X2 = np.sum(Xx ** 2, axis=0)
    gnorm = float(np.linalg.norm(gk)) or 1.0
    mask = dealias_mask(grid)
    axes = tuple(range(1, grid.dim + 1))

    def band(v):
        return np.fft.ifftn(np.fft.fftn(v, axes=axes) * mask, axes=axes)

    v = band((Xx / X2) * (gk[0] / (1j * k)))
    best, best_res, prev = None, np.inf, np.inf
    for _ in range(max_iter):
        resid_field = gk[0] - _scaled_div_apply(v, k, calc, Xx)
        res = float(np.linalg.norm(resid_field)) / gnorm
        if res < best_res:
            best_res, best = res, v.copy()
        if res <= tol:
            return v, res
        if res > 2.0 * prev or res > 1e3:
            break  # not contracting; hand off to CGNR
        prev = res
        v = band(v + (Xx / X2) * (resid_field / (1j * k)))
    v, res = _cgnr_inverse(gk, k, calc, Xx, best, tol, max_iter=600)
    if res > max(tol, 1e-9):
        raise ConvergenceError(
            f"scaled-divergence inverse stalled at residual {res:.3e} "
            f"(harmonic {k}, eps {calc.epsilon:g})")
    return v, res


def _cgnr_inverse(gk, k, calc, Xx, v0, tol, max_iter=600):
    """Conjugate gradient on the normal equations A^H A v = A^H g."""
    grid = calc.grid

    def A(v):
        return _scaled_div_apply(v, k, calc, Xx)

    def AH(r):
        mask = dealias_mask(grid)
        ks = wavenumbers(grid)
        rhat = np.fft.fftn(r) * mask
        rband = np.fft.ifftn(rhat)
        out = np.empty((grid.dim,) + grid.shape, dtype=np.complex128)
        for ax in range(grid.dim):
            grad_part = np.fft.ifftn(-1j * calc.epsilon * ks[ax] * rhat)
            cross = np.fft.ifftn(np.fft.fftn(Xx[ax] * rband) * mask)
            out[ax] = grad_part + (-1j * k) * cross
        return out

    gnorm = float(np.linalg.norm(gk)) or 1.0
    v = v0.copy() if v0 is not None else np.zeros(
        (grid.dim,) + grid.shape, dtype=np.complex128)
    r = gk[0] - A(v)
    s = AH(r)
    p = s.copy()
    gamma = float(np.sum(np.abs(s) ** 2))
    best, best_res = v.copy(), float(np.linalg.norm(r)) / gnorm
    for _ in range(max_iter):
        Ap = A(p)
        denom = float(np.sum(np.abs(Ap) ** 2))
        if denom == 0.0:
            break
        alpha = gamma / denom
        v = v + alpha * p
        r = r - alpha * Ap
        res = float(np.linalg.norm(r)) / gnorm
        if res < best_res:
            best_res, best = res, v.copy()
        if res <= tol:
            return v, res
        s = AH(r)
        gamma_new = float(np.sum(np.abs(s) ** 2))
        p = s + (gamma_new / gamma) * p
        gamma = gamma_new
    return best, best_res


def ridiv_theta(g: ProfileField, calc: SingularCalculus, c: float = 0.05,
                tol: float = 1e-11) -> ProfileField:
    """Right inverse of the scaled divergence on its image.

    Defined on fast-mean-free scalars in the range of the scaled
    divergence (per harmonic the modulated mean of e^{ik phase/eps} g_k
    vanishes there; any non-solvable component is dropped).  Requires
    directional nondegeneracy d_1 phase >= c.  Uses the exact modulated
    inverse when the modulation fits the dealias band and a contraction
    iteration otherwise.
    """
    mean_amp = float(np.max(np.abs(g.harmonic(0).coeffs), initial=0.0))
    if mean_amp > 1e-11 * max(g.amplitude(), 1.0):
        raise NonZeroThetaMeanError("scaled inverse needs a fast-mean-free input")
    X1 = np.real(to_physical_complex(calc.X))[0]
    if float(X1.min()) < c:
        raise DegenerateDirectionError(
            f"min d1(phase) = {float(X1.min()):.3e} < c = {c:.3e}")
    out = ProfileField(g.grid, calc.grid.dim)
    for k, f in g.harmonics.items():
        if k == 0:
            continue
        gk = to_physical_complex(f)
        Xmax = float(np.max(np.abs(np.real(to_physical_complex(calc.X)))))
        if calc.epsilon >= 2.0 * abs(k) * Xmax / calc.grid.cutoff:
            vk, _ = _modulated_inverse(gk, k, calc)
        else:
            vk, _ = _iterative_inverse(gk, k, calc, tol)
        out.set_harmonic(k, dealias(to_spectral_complex(g.grid, vk)))
    return out


# ---------------------------------------------------------------------------
# per-harmonic conjugated Leray projector
# ---------------------------------------------------------------------------

def mode_projector(u: ProfileField, calc: SingularCalculus) -> ProfileField:
    """Harmonic k -> e^{-ik phase/eps} P(e^{ik phase/eps} u_k).

    Output lies in the kernel of the scaled divergence.  Raises when the
    modulated harmonics would leave the dealias band.
    """
    ks = [k for k in u.harmonics if k != 0]
    mean_amp = float(np.max(np.abs(u.harmonic(0).coeffs), initial=0.0))
    if mean_amp > 1e-11 * max(u.amplitude(), 1.0):
        raise NonZeroThetaMeanError("mode projector acts on oscillating parts")
    if not ks:
        return ProfileField(u.grid, u.ncomp)
    calc.check_resolvable(max(abs(k) for k in ks))
    out = ProfileField(u.grid, u.ncomp)
    for k in ks:
        mod = calc.modulation(k)
        ux = to_physical_complex(u.harmonics[k])
        modulated = to_spectral_complex(u.grid, mod * ux)
        projected = leray_project(modulated)
        back = np.conj(mod) * to_physical_complex(projected)
        out.set_harmonic(k, dealias(to_spectral_complex(u.grid, back)))
    return out


# ---------------------------------------------------------------------------
# background linear maps
# ---------------------------------------------------------------------------

def apply_M(W: ProfileField, base, t: float) -> ProfileField:
    """M U = (dt Pi0) U + ((u0.grad) Pi0) U - Pi0 (U.grad) u0."""
    grid = W.grid
    dPi = base.dPi0_dt(t)  # (nc, nc, *shape)
    adv_Pi = base.advected_Pi0(t)
    Pi0 = base.Pi0(t)
    grad_u0 = [np.real(to_physical_complex(spectral_derivative(base.u0(t), ax)))
               for ax in range(grid.dim)]

    def act(f: SpectralField) -> SpectralField:
        fx = to_physical_complex(f)
        out = np.einsum("ij...,j...->i...", dPi + adv_Pi, fx)
        stretch = np.zeros_like(fx)
        for ax in range(grid.dim):
            stretch += fx[ax] * grad_u0[ax]
        out -= Pi0.apply_physical(stretch)
        return dealias(to_spectral_complex(grid, out))

    return W.map_harmonics(act)


def apply_ell(U: ProfileField, base, t: float) -> ProfileField:
    """ell U = |X0|^{-2} [dt X0 . U + ((u0.grad) X0) . U - X0 . (U.grad) u0]."""
    grid = U.grid
    X0x = np.real(to_physical_complex(base.X0(t)))
    dX0 = np.real(to_physical_complex(base.dX0_dt(t)))
    u0 = base.u0(t)
    adv_X0 = np.real(to_physical_complex(_advect_field(u0, base.X0(t))))
    grad_u0 = [np.real(to_physical_complex(spectral_derivative(u0, ax)))
               for ax in range(grid.dim)]
    X2 = np.sum(X0x ** 2, axis=0)

    def act(f: SpectralField) -> SpectralField:
        fx = to_physical_complex(f)
        acc = np.sum((dX0 + adv_X0) * fx[:grid.dim], axis=0)
        stretch = np.zeros_like(fx)
        for ax in range(grid.dim):
            stretch += fx[ax] * grad_u0[ax]
        acc -= np.sum(X0x * stretch[:grid.dim], axis=0)
        return dealias(to_spectral_complex(grid, (acc / X2)[None]))

    return U.map_harmonics(act)


def _advect_field(u: SpectralField, f: SpectralField) -> SpectralField:
    ux = np.real(to_physical_complex(u))
    out = None
    for ax in range(u.grid.dim):
        dfx = to_physical_complex(spectral_derivative(f, ax))
        term = ux[ax] * dfx
        out = term if out is None else out + term
    return dealias(to_spectral_complex(u.grid, out))


def laplacian_full(u: ProfileField) -> ProfileField:
    """Spatial Laplacian plus second fast derivative, per harmonic."""
    out = ProfileField(u.grid, u.ncomp)
    for k, f in u.harmonics.items():
        out.set_harmonic(k, SpectralField(
            u.grid, laplacian(f).coeffs - (k * k) * f.coeffs))
    return out
