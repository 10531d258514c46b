"""Spectral fields on the periodic box and profiles carrying fast harmonics.

A SpectralField stores normalized Fourier coefficients (coeff at xi=0 equals
the spatial mean) with an explicit leading component axis.  A ProfileField
is a sparse map {k >= 0 -> SpectralField}: harmonic k holds the coefficient
of e^{i k theta}, negative harmonics are implied by conjugation so the
represented field u(x, theta) = u_0(x) + sum_{k>=1} 2 Re[u_k(x) e^{i k theta}]
is real-valued.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    GridMismatchError,
    NonZeroThetaMeanError,
    ShapeMismatchError,
)
from .grid import Grid, dealias_mask, k_squared, wavenumbers

MAGIC = b"PHCF"
FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# SpectralField
# ---------------------------------------------------------------------------

@dataclass
class SpectralField:
    """Field on the box, stored as normalized FFT coefficients.

    coeffs has shape (ncomp, n, ...) with one spatial axis per grid
    dimension.  Scalars use ncomp=1.  Coefficients are normalized so the
    xi=0 entry is the spatial mean.
    """

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.ndim != self.grid.dim + 1:
            raise ShapeMismatchError(
                f"expected {self.grid.dim + 1} axes, got {self.coeffs.ndim}")
        if self.coeffs.shape[1:] != self.grid.shape:
            raise ShapeMismatchError(
                f"spatial shape {self.coeffs.shape[1:]} != grid {self.grid.shape}")
        if self.coeffs.dtype != np.complex128:
            self.coeffs = self.coeffs.astype(np.complex128)

    @property
    def ncomp(self) -> int:
        return self.coeffs.shape[0]

    # ---- constructors ----

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 1) -> "SpectralField":
        return cls(grid, np.zeros((ncomp,) + grid.shape, dtype=np.complex128))

    @classmethod
    def from_physical(cls, grid: Grid, samples: np.ndarray) -> "SpectralField":
        return to_spectral(grid, samples)

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    # ---- arithmetic (fields are values; operations return new objects) ----

    def _check(self, other: "SpectralField"):
        if not self.grid.compatible(other.grid):
            raise GridMismatchError("fields on incompatible grids")
        if self.ncomp != other.ncomp:
            raise ShapeMismatchError(
                f"component mismatch {self.ncomp} != {other.ncomp}")

    def __add__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs)

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i:i + 1])

    def physical(self) -> np.ndarray:
        return to_physical(self)

    def is_real(self, tol: float = 1e-12) -> bool:
        u = to_physical_complex(self)
        scale = np.max(np.abs(u)) or 1.0
        return float(np.max(np.abs(u.imag))) <= tol * scale


# ---------------------------------------------------------------------------
# transforms, calculus, norms
# ---------------------------------------------------------------------------

def to_spectral(grid: Grid, samples: np.ndarray) -> SpectralField:
    """Forward transform of real (or complex) samples on the grid."""
    arr = np.asarray(samples)
    if arr.shape == grid.shape:
        arr = arr[None]
    if arr.shape[1:] != grid.shape:
        raise ShapeMismatchError(
            f"sample shape {arr.shape} does not match grid {grid.shape}")
    axes = tuple(range(1, grid.dim + 1))
    coeffs = np.fft.fftn(arr, axes=axes) / grid.npoints
    return SpectralField(grid, coeffs)


def to_physical(f: SpectralField) -> np.ndarray:
    """Inverse transform, returning the real part (fields are real-valued)."""
    return to_physical_complex(f).real


def to_physical_complex(f: SpectralField) -> np.ndarray:
    axes = tuple(range(1, f.grid.dim + 1))
    return np.fft.ifftn(f.coeffs * f.grid.npoints, axes=axes)


def spectral_derivative(f: SpectralField, axis: int) -> SpectralField:
    """d/dx_axis, exact in coefficients."""
    if axis >= f.grid.dim:
        raise ValueError(f"axis {axis} out of range for dim {f.grid.dim}")
    k = wavenumbers(f.grid)[axis]
    return SpectralField(f.grid, f.coeffs * (1j * k))


def gradient(f: SpectralField) -> SpectralField:
    """Gradient of a scalar field, stacked into a vector field."""
    if f.ncomp != 1:
        raise ShapeMismatchError("gradient expects a scalar field")
    parts = [spectral_derivative(f, ax).coeffs[0] for ax in range(f.grid.dim)]
    return SpectralField(f.grid, np.stack(parts))


def divergence(u: SpectralField) -> SpectralField:
    """Divergence over the spatial axes (extra components are ignored
    beyond dim, matching 2.5D fields that do not depend on x3)."""
    out = np.zeros((1,) + u.grid.shape, dtype=np.complex128)
    for ax in range(u.grid.dim):
        out[0] += spectral_derivative(u.component(ax), ax).coeffs[0]
    return SpectralField(u.grid, out)


def laplacian(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * (-k_squared(f.grid)))


def dealias(f: SpectralField) -> SpectralField:
    return SpectralField(f.grid, f.coeffs * dealias_mask(f.grid))


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product of a scalar with a field, dealiased."""
    if f.ncomp != 1 and g.ncomp == 1:
        f, g = g, f
    if f.ncomp != 1:
        raise ShapeMismatchError("one factor must be scalar")
    a = to_physical_complex(f)
    b = to_physical_complex(g)
    return dealias(to_spectral_complex(f.grid, a[0] * b))


def to_spectral_complex(grid: Grid, arr: np.ndarray) -> SpectralField:
    if arr.shape == grid.shape:
        arr = arr[None]
    axes = tuple(range(1, grid.dim + 1))
    return SpectralField(grid, np.fft.fftn(arr, axes=axes) / grid.npoints)


def dot(u: SpectralField, v: SpectralField) -> SpectralField:
    """Pointwise scalar product of two vector fields, dealiased."""
    u._check(v)
    a = to_physical_complex(u)
    b = to_physical_complex(v)
    return dealias(to_spectral_complex(u.grid, np.sum(a * b, axis=0)[None]))


def advect(u: SpectralField, f: SpectralField) -> SpectralField:
    """(u . grad) f with spectral derivatives, dealiased."""
    a = to_physical_complex(u)
    out = None
    for ax in range(u.grid.dim):
        df = to_physical_complex(_derivative_all(f, ax))
        term = a[ax] * df
        out = term if out is None else out + term
    return dealias(to_spectral_complex(u.grid, out))


def _derivative_all(f: SpectralField, axis: int) -> SpectralField:
    k = wavenumbers(f.grid)[axis]
    return SpectralField(f.grid, f.coeffs * (1j * k))


def inner_product(u: SpectralField, v: SpectralField) -> float:
    """L2 inner product with box measure, summed over components."""
    u._check(v)
    return float(np.real(np.sum(np.conj(u.coeffs) * v.coeffs)) * u.grid.volume)


def l2_norm(u: SpectralField) -> float:
    return float(np.sqrt(np.sum(np.abs(u.coeffs) ** 2) * u.grid.volume))


def resample(f: SpectralField, n_new: int) -> SpectralField:
    """Transfer to a finer (or coarser) grid by zero padding / truncation."""
    g = f.grid
    if n_new == g.n:
        return f.copy()
    new_grid = g.with_resolution(n_new)
    out = np.zeros((f.ncomp,) + new_grid.shape, dtype=np.complex128)
    half = min(g.n, n_new) // 2
    idx_old = np.r_[0:half, g.n - half:g.n]
    idx_new = np.r_[0:half, n_new - half:n_new]
    if g.dim == 2:
        out[np.ix_(range(f.ncomp), idx_new, idx_new)] = \
            f.coeffs[np.ix_(range(f.ncomp), idx_old, idx_old)]
    else:
        out[np.ix_(range(f.ncomp), idx_new, idx_new, idx_new)] = \
            f.coeffs[np.ix_(range(f.ncomp), idx_old, idx_old, idx_old)]
    return SpectralField(new_grid, out)


def random_field(grid: Grid, ncomp: int, rng, kmax: int = 6,
                 amplitude: float = 1.0, real: bool = True) -> SpectralField:
    """Smooth random band-limited field for tests and presets."""
    samples = np.zeros((ncomp,) + grid.shape)
    xs = grid.coords()
    for c in range(ncomp):
        for _ in range(4):
            kvec = rng.integers(-kmax, kmax + 1, size=grid.dim)
            phase = rng.uniform(0, 2 * np.pi)
            amp = amplitude * rng.uniform(0.2, 1.0)
            arg = phase
            for ax in range(grid.dim):
                arg = arg + kvec[ax] * xs[ax]
            samples[c] += amp * np.cos(arg)
    f = to_spectral(grid, samples)
    if not real:
        g = random_field(grid, ncomp, rng, kmax, amplitude)
        f = SpectralField(grid, f.coeffs + 1j * g.coeffs)
    return dealias(f)


def curl(u: SpectralField) -> SpectralField:
    """Vorticity: scalar in 2D, three components for 2.5D fields."""
    grid = u.grid
    if grid.dim != 2:
        raise ShapeMismatchError("curl is implemented for planar grids")
    d = lambda comp, ax: spectral_derivative(u.component(comp), ax).coeffs[0]
    if u.ncomp == 2:
        return SpectralField(grid, (d(1, 0) - d(0, 1))[None])
    if u.ncomp == 3:
        out = np.stack([d(2, 1), -d(2, 0), d(1, 0) - d(0, 1)])
        return SpectralField(grid, out)
    raise ShapeMismatchError(f"curl undefined for ncomp={u.ncomp}")


def enstrophy_of(u: SpectralField) -> float:
    return l2_norm(curl(u)) ** 2


# ---------------------------------------------------------------------------
# shell spectrum
# ---------------------------------------------------------------------------

def shell_spectrum(u: SpectralField) -> np.ndarray:
    """Shell-averaged energy: E(k) sums |u_hat(xi)|^2 over k-1/2 < |xi| <= k+1/2.

    The box measure weight is included so sum_k E(k) equals the squared
    L2 norm.
    """
    kmag = np.sqrt(k_squared(u.grid))
    shells = np.rint(kmag).astype(int)
    nshell = int(shells.max()) + 1
    energy = np.sum(np.abs(u.coeffs) ** 2, axis=0) * u.grid.volume
    out = np.zeros(nshell)
    np.add.at(out, shells.ravel(), energy.ravel())
    return out


# ---------------------------------------------------------------------------
# ProfileField
# ---------------------------------------------------------------------------

class ProfileField:
    """Sparse fast-harmonic expansion of a real profile u(x, theta).

    harmonics maps k >= 0 to SpectralField; k=0 must be a real field and
    the k<0 coefficients are conj(harmonic[k]) implicitly.
    """

    __slots__ = ("grid", "ncomp", "harmonics")

    def __init__(self, grid: Grid, ncomp: int, harmonics: dict | None = None):
        self.grid = grid
        self.ncomp = ncomp
        self.harmonics: dict[int, SpectralField] = {}
        if harmonics:
            for k, f in harmonics.items():
                self.set_harmonic(k, f)

    @classmethod
    def zeros(cls, grid: Grid, ncomp: int = 1) -> "ProfileField":
        return cls(grid, ncomp)

    @classmethod
    def from_mean(cls, f: SpectralField) -> "ProfileField":
        return cls(f.grid, f.ncomp, {0: f})

    def set_harmonic(self, k: int, f: SpectralField):
        if k < 0:
            raise ValueError("only k >= 0 harmonics are stored")
        if k > self.grid.m_theta:
            raise ValueError(f"harmonic {k} exceeds m_theta={self.grid.m_theta}")
        if f.ncomp != self.ncomp or not f.grid.compatible(self.grid):
            raise GridMismatchError("harmonic does not match profile layout")
        self.harmonics[k] = f

    def harmonic(self, k: int) -> SpectralField:
        """Coefficient of e^{i k theta}, any sign of k."""
        if k >= 0:
            f = self.harmonics.get(k)
            return f if f is not None else SpectralField.zeros(self.grid, self.ncomp)
        f = self.harmonics.get(-k)
        if f is None:
            return SpectralField.zeros(self.grid, self.ncomp)
        return conj_field(f)

    def active(self) -> list[int]:
        return sorted(k for k, f in self.harmonics.items()
                      if np.any(f.coeffs))

    def copy(self) -> "ProfileField":
        return ProfileField(self.grid, self.ncomp,
                            {k: f.copy() for k, f in self.harmonics.items()})

    # ---- algebra ----

    def __add__(self, other: "ProfileField") -> "ProfileField":
        out = self.copy()
        for k, f in other.harmonics.items():
            out.harmonics[k] = (out.harmonics[k] + f) if k in out.harmonics else f.copy()
        return out

    def __sub__(self, other: "ProfileField") -> "ProfileField":
        return self + (other * (-1.0))

    def __mul__(self, scalar) -> "ProfileField":
        return ProfileField(self.grid, self.ncomp,
                            {k: f * scalar for k, f in self.harmonics.items()})

    __rmul__ = __mul__

    def map_harmonics(self, fn) -> "ProfileField":
        """Apply a SpectralField -> SpectralField map to every harmonic."""
        out = {}
        ncomp = None
        for k, f in self.harmonics.items():
            g = fn(f)
            ncomp = g.ncomp
            out[k] = g
        result = ProfileField(self.grid, ncomp if ncomp is not None else self.ncomp)
        for k, g in out.items():
            result.set_harmonic(k, g)
        return result

    # ---- mean / oscillation split ----

    def mean(self) -> SpectralField:
        return self.harmonic(0)

    def oscillating(self) -> "ProfileField":
        return ProfileField(self.grid, self.ncomp,
                            {k: f for k, f in self.harmonics.items() if k != 0})

    # ---- theta calculus ----

    def theta_derivative(self, order: int = 1) -> "ProfileField":
        out = ProfileField(self.grid, self.ncomp)
        for k, f in self.harmonics.items():
            if k == 0:
                continue
            out.set_harmonic(k, f * ((1j * k) ** order))
        return out

    def theta_antiderivative(self) -> "ProfileField":
        """Inverse of theta_derivative on mean-free profiles."""
        mean_size = float(np.max(np.abs(self.harmonic(0).coeffs), initial=0.0))
        scale = max(self.amplitude(), 1.0)
        if mean_size > 1e-12 * scale:
            raise NonZeroThetaMeanError(
                f"profile has fast-variable mean of size {mean_size:.3e}")
        out = ProfileField(self.grid, self.ncomp)
        for k, f in self.harmonics.items():
            if k == 0:
                continue
            out.set_harmonic(k, f * (1.0 / (1j * k)))
        return out

    def amplitude(self) -> float:
        if not self.harmonics:
            return 0.0
        return max(float(np.max(np.abs(f.coeffs), initial=0.0))
                   for f in self.harmonics.values())

    # ---- evaluation ----

    def at_theta(self, theta: float) -> SpectralField:
        """Evaluate at a fixed fast-variable value; returns a real field."""
        acc = np.real(to_physical_complex(self.harmonic(0)))
        for k, f in self.harmonics.items():
            if k == 0:
                continue
            phase = np.exp(1j * k * theta)
            acc = acc + 2.0 * np.real(phase * to_physical_complex(f))
        return to_spectral(self.grid, acc)

    def norm_l2(self) -> float:
        """L2(x, theta) norm with normalized theta measure."""
        total = float(np.sum(np.abs(self.harmonic(0).coeffs) ** 2))
        for k, f in self.harmonics.items():
            if k != 0:
                total += 2.0 * float(np.sum(np.abs(f.coeffs) ** 2))
        return float(np.sqrt(total * self.grid.volume))


def conj_field(f: SpectralField) -> SpectralField:
    """Coefficients of the complex conjugate field."""
    axes = tuple(range(1, f.grid.dim + 1))
    flipped = f.coeffs.copy()
    for ax in axes:
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    return SpectralField(f.grid, np.conj(flipped))


# ---------------------------------------------------------------------------
# profile products
# ---------------------------------------------------------------------------

class PhysicalProfile:
    """Physical-space cache of a profile's harmonics over k in [-m, m].

    Products of profiles are pointwise in x and convolutions in the
    harmonic index; this helper keeps each ifft to one evaluation.
    """

    __slots__ = ("grid", "ncomp", "data")

    def __init__(self, pf: ProfileField):
        self.grid = pf.grid
        self.ncomp = pf.ncomp
        self.data: dict[int, np.ndarray] = {}
        for k, f in pf.harmonics.items():
            arr = to_physical_complex(f)
            if np.any(arr):
                self.data[k] = arr
                if k != 0:
                    self.data[-k] = np.conj(arr)

    def harmonic(self, k: int):
        return self.data.get(k)


def profile_product(a: ProfileField, b: ProfileField, combine,
                    ncomp_out: int) -> ProfileField:
    """Generic dealiased product of two profiles.

    combine(x_a, x_b) maps physical harmonic blocks (ncomp_a, ...) and
    (ncomp_b, ...) to an output block (ncomp_out, ...).  Harmonics above
    m_theta are dropped.
    """
    pa, pb = PhysicalProfile(a), PhysicalProfile(b)
    m = a.grid.m_theta
    acc: dict[int, np.ndarray] = {}
    for ka, xa in pa.data.items():
        for kb, xb in pb.data.items():
            k = ka + kb
            if k < 0 or k > m:
                continue
            term = combine(xa, xb)
            if k in acc:
                acc[k] += term
            else:
                acc[k] = term
    out = ProfileField(a.grid, ncomp_out)
    for k, arr in acc.items():
        f = dealias(to_spectral_complex(a.grid, arr))
        if k == 0:
            f = SpectralField(a.grid, f.coeffs)  # mean harmonic is real up to FP
        out.set_harmonic(k, f)
    return out


def profile_advect(u: ProfileField, f: ProfileField) -> ProfileField:
    """(u . grad_x) f for profiles, dealiased per harmonic pair."""
    grads = [PhysicalProfile(f.map_harmonics(lambda h, ax=ax: _derivative_all(h, ax)))
             for ax in range(u.grid.dim)]
    pu = PhysicalProfile(u)
    m = u.grid.m_theta
    acc: dict[int, np.ndarray] = {}
    for ka, xu in pu.data.items():
        for ax in range(u.grid.dim):
            for kb, xdf in grads[ax].data.items():
                k = ka + kb
                if k < 0 or k > m:
                    continue
                term = xu[ax] * xdf
                if k in acc:
                    acc[k] += term
                else:
                    acc[k] = term
    out = ProfileField(u.grid, f.ncomp)
    for k, arr in acc.items():
        out.set_harmonic(k, dealias(to_spectral_complex(u.grid, arr)))
    return out


def profile_tensor_mean(a: ProfileField, b: ProfileField) -> SpectralField:
    """Theta-mean of the tensor a (x) b, returned as a (d*, d*) block field
    flattened to ncomp = ncomp_a * ncomp_b (row-major)."""
    pa, pb = PhysicalProfile(a), PhysicalProfile(b)
    na, nb = a.ncomp, b.ncomp
    acc = np.zeros((na * nb,) + a.grid.shape, dtype=np.complex128)
    for ka, xa in pa.data.items():
        xb = pb.harmonic(-ka)
        if xb is None:
            continue
        # tensor (u^j v^i): component index i*nb + j to match Div conventions
        for i in range(nb):
            for j in range(na):
                acc[i * na + j] += xa[j] * xb[i]
    return dealias(to_spectral_complex(a.grid, acc))


def tensor_divergence(t: SpectralField, nvec: int) -> SpectralField:
    """Div of a flattened tensor field t[(i*nvec + j)] = T^{ij}:
    out_i = sum_j d_j T^{ij} (derivatives only over grid axes)."""
    out = np.zeros((nvec,) + t.grid.shape, dtype=np.complex128)
    for i in range(nvec):
        for j in range(t.grid.dim):
            out[i] += spectral_derivative(t.component(i * nvec + j), j).coeffs[0]
    return SpectralField(t.grid, out)


def profile_divergence(u: ProfileField) -> ProfileField:
    return u.map_harmonics(divergence)


def profile_gradient(p: ProfileField) -> ProfileField:
    return p.map_harmonics(gradient)


def profile_scalar_mul(s: SpectralField, u: ProfileField) -> ProfileField:
    """Pointwise product of an x-only scalar with every harmonic."""
    sx = to_physical_complex(s)[0]
    return u.map_harmonics(
        lambda f: dealias(to_spectral_complex(u.grid, sx * to_physical_complex(f))))


def profile_dot_x(v: SpectralField, u: ProfileField) -> ProfileField:
    """Pointwise scalar product of an x-only vector with a vector profile.

    Contracts over the components of v, so a planar phase gradient pairs
    with the first two components of a 2.5D velocity profile.
    """
    vx = to_physical_complex(v)
    nv = vx.shape[0]
    return u.map_harmonics(
        lambda f: dealias(to_spectral_complex(
            u.grid, np.sum(vx * to_physical_complex(f)[:nv], axis=0)[None])))


# ---------------------------------------------------------------------------
# Sobolev norms
# ---------------------------------------------------------------------------

def sobolev_norm(f, m: int) -> float:
    """H^m norm; accepts a SpectralField (no theta axis) or a ProfileField."""
    if m < 0:
        raise ValueError("m must be >= 0")
    if isinstance(f, SpectralField):
        w = (1.0 + k_squared(f.grid)) ** m
        total = float(np.sum(w * np.abs(f.coeffs) ** 2))
        return float(np.sqrt(total * f.grid.volume))
    total = 0.0
    w = None
    for k, h in f.harmonics.items():
        if w is None:
            w = (1.0 + k_squared(f.grid)) ** m
        factor = (1.0 + k * k) ** m
        contrib = factor * float(np.sum(w * np.abs(h.coeffs) ** 2))
        total += contrib if k == 0 else 2.0 * contrib
    return float(np.sqrt(total * f.grid.volume))


# ---------------------------------------------------------------------------
# binary snapshots
# ---------------------------------------------------------------------------

def _write_header(fh, grid: Grid, m_theta: int, ncomp: int, time: float):
    fh.write(MAGIC)
    fh.write(struct.pack("<IIIII", FORMAT_VERSION, grid.dim, grid.n,
                         m_theta, ncomp))
    fh.write(struct.pack("<d", time))


def _read_header(fh):
    magic = fh.read(4)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    version, dim, n, m_theta, ncomp = struct.unpack("<IIIII", fh.read(20))
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    (time,) = struct.unpack("<d", fh.read(8))
    return dim, n, m_theta, ncomp, time


def save_field(path, f: SpectralField, time: float = 0.0):
    """Spectral snapshot: header + interleaved complex f64, row-major xi."""
    with open(path, "wb") as fh:
        _write_header(fh, f.grid, 0, f.ncomp, time)
        inter = np.empty(f.coeffs.size * 2)
        inter[0::2] = f.coeffs.real.ravel()
        inter[1::2] = f.coeffs.imag.ravel()
        fh.write(inter.astype("<f8").tobytes())


def load_field(path, grid: Grid | None = None):
    with open(path, "rb") as fh:
        dim, n, m_theta, ncomp, time = _read_header(fh)
        if grid is None:
            grid = Grid(dim=dim, n=n, m_theta=max(m_theta, 1))
        raw = np.frombuffer(fh.read(), dtype="<f8")
        nper = ncomp * n ** dim
        blocks = raw.reshape(-1, 2)
        coeffs = (blocks[:, 0] + 1j * blocks[:, 1])
        if m_theta == 0:
            f = SpectralField(grid, coeffs.reshape((ncomp,) + (n,) * dim))
            return f, time
        pf = ProfileField(grid, ncomp)
        per = coeffs.reshape(2 * m_theta + 1, ncomp, *(n,) * dim)
        for idx in range(m_theta, 2 * m_theta + 1):
            k = idx - m_theta
            block = per[idx]
            if np.any(block):
                pf.set_harmonic(k, SpectralField(grid, block.copy()))
        return pf, time


def save_profile(path, pf: ProfileField, time: float = 0.0):
    """Profile snapshot, k-major from -m to m (negatives via conjugation)."""
    ks = pf.active()
    m = max(ks) if ks else 0
    with open(path, "wb") as fh:
        _write_header(fh, pf.grid, m, pf.ncomp, time)
        for k in range(-m, m + 1):
            coeffs = pf.harmonic(k).coeffs
            inter = np.empty(coeffs.size * 2)
            inter[0::2] = coeffs.real.ravel()
            inter[1::2] = coeffs.imag.ravel()
            fh.write(inter.astype("<f8").tobytes())
