"""Periodic-box fields with spectral operators.

Fields live on ``[0, L)^3`` sampled at ``N^3`` points. Spectral data is kept
in the real-to-complex (``rfftn``) layout, normalized so that

    f(x) = sum_xi  fhat(xi) exp(i xi . x),

i.e. ``fhat = rfftn(f) / N^3``. With this convention the L2 norm over the box
is ``L^3 * sum |fhat|^2`` over the full lattice.
"""

from dataclasses import dataclass, field as dc_field
from functools import cached_property
import itertools
import os
import struct

import numpy as np
import scipy.fft as sfft

AXES = (-3, -2, -1)
MAX_DERIVATIVE_ORDER = 4
ZERO_MODE_TOL = 1e-13
SNAPSHOT_MAGIC = b"LQF1"
_HEADER = struct.Struct("<4sIdB")


class SpectralError(ValueError):
    pass


class IllPosedInversion(SpectralError):
    """Raised when a negative power of Lambda meets a nonzero mean."""


def fft_workers():
    try:
        return max(1, int(os.environ.get("LIQDECAY_THREADS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralGrid:
    points_per_axis: int
    box_length: float

    def __post_init__(self):
        n = self.points_per_axis
        if int(n) != n or n % 2 or n < 8:
            raise SpectralError(f"points_per_axis must be an even integer >= 8, got {n}")
        if not self.box_length > 0:
            raise SpectralError(f"box_length must be positive, got {self.box_length}")

    @property
    def n(self):
        return self.points_per_axis

    @property
    def spectral_shape(self):
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def physical_shape(self):
        return (self.n, self.n, self.n)

    @property
    def scale(self):
        """Wavenumber spacing 2 pi / L."""
        return 2.0 * np.pi / self.box_length

    @property
    def dx(self):
        return self.box_length / self.n

    @property
    def volume(self):
        return self.box_length**3

    @cached_property
    def index(self):
        """Integer lattice indices (kx, ky, kz) broadcastable to spectral_shape."""
        n = self.n
        full = np.fft.fftfreq(n, 1.0 / n)
        half = np.arange(n // 2 + 1, dtype=float)
        return (full[:, None, None], full[None, :, None], half[None, None, :])

    @cached_property
    def xi(self):
        """Physical wavevector components."""
        return tuple(self.scale * k for k in self.index)

    @cached_property
    def xi_odd(self):
        """Wavevector with Nyquist entries zeroed; used for odd derivatives."""
        n = self.n
        out = []
        for k in self.index:
            kk = np.where(np.abs(k) == n // 2, 0.0, k)
            out.append(self.scale * kk)
        return tuple(out)

    @cached_property
    def xi2(self):
        kx, ky, kz = self.xi
        return np.broadcast_to(kx**2 + ky**2 + kz**2, self.spectral_shape).copy()

    @cached_property
    def xi_mag(self):
        return np.sqrt(self.xi2)

    @cached_property
    def weights(self):
        """Multiplicity of each stored half-spectrum mode in the full lattice."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w

    @cached_property
    def dealias_mask(self):
        n = self.n
        kmax = n / 3.0
        kx, ky, kz = self.index
        return (np.abs(kx) < kmax) & (np.abs(ky) < kmax) & (np.abs(kz) < kmax)

    def coordinates(self):
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, x, indexing="ij")

    def min_nonzero_wavenumber(self):
        return self.scale


def make_grid(points_per_axis, box_length):
    return SpectralGrid(int(points_per_axis) if float(points_per_axis).is_integer() else points_per_axis,
                        float(box_length))


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def _rank_of(shape, grid):
    extra = len(shape) - 3
    if tuple(shape[-3:]) != grid.spectral_shape or extra not in (0, 1, 2):
        raise SpectralError(f"coefficient shape {shape} does not match grid {grid.spectral_shape}")
    if any(s != 3 for s in shape[:extra]):
        raise SpectralError(f"component axes must have length 3, got {shape[:extra]}")
    return extra


@dataclass(frozen=True, eq=False)
class Field:
    """Real field on a periodic grid, held by its spectral coefficients."""

    grid: SpectralGrid
    coeffs: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        _rank_of(c.shape, self.grid)
        if not np.all(np.isfinite(c)):
            raise SpectralError("field contains non-finite coefficients")
        c = c.copy() if c is self.coeffs and c.flags.writeable else c
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def rank(self):
        return self.coeffs.ndim - 3

    @property
    def ncomp(self):
        return 3**self.rank

    def physical(self):
        return inverse(self)

    def component(self, *idx):
        return Field(self.grid, self.coeffs[idx])

    def mean(self):
        return self.coeffs[(..., 0, 0, 0)].real.copy()

    def _check(self, other):
        if other.grid != self.grid:
            raise SpectralError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return Field(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return Field(self.grid, self.coeffs - other.coeffs)

    def __neg__(self):
        return Field(self.grid, -self.coeffs)

    def __mul__(self, scalar):
        return Field(self.grid, self.coeffs * float(scalar))

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid, rank=0):
        return cls(grid, np.zeros((3,) * rank + grid.spectral_shape, dtype=complex))

    @classmethod
    def from_physical(cls, grid, values):
        return forward(grid, values)


def forward(grid, values):
    values = np.asarray(values, dtype=float)
    if values.shape[-3:] != grid.physical_shape:
        raise SpectralError(f"physical shape {values.shape} does not match grid")
    if not np.all(np.isfinite(values)):
        raise SpectralError("physical values contain NaN/Inf")
    c = sfft.rfftn(values, axes=AXES, norm="forward", workers=fft_workers())
    return Field(grid, c)


def inverse(f):
    n = f.grid.n
    return sfft.irfftn(f.coeffs, s=(n, n, n), axes=AXES, norm="forward", workers=fft_workers())


def to_physical_array(grid, coeffs):
    n = grid.n
    return sfft.irfftn(coeffs, s=(n, n, n), axes=AXES, norm="forward", workers=fft_workers())


def to_spectral_array(values):
    return sfft.rfftn(values, axes=AXES, norm="forward", workers=fft_workers())


def transform(obj, direction, grid=None):
    """Switch representation: ``"forward"`` takes physical values (needs
    ``grid``) to a Field, ``"inverse"`` takes a Field to physical values."""
    if direction == "forward":
        if grid is None:
            raise SpectralError("forward transform needs a grid")
        return forward(grid, obj)
    if direction == "inverse":
        return inverse(obj)
    raise SpectralError(f"unknown direction {direction!r}")


def full_spectrum(f):
    """Coefficients on the full N^3 lattice in numpy FFT index order."""
    return sfft.fftn(inverse(f), axes=AXES, norm="forward", workers=fft_workers())


def hermitian_defect(f):
    """Max |c(-xi) - conj c(xi)| over the self-conjugate kz=0 and Nyquist planes."""
    n = f.grid.n
    idx = (-np.arange(n)) % n
    worst = 0.0
    for kz in (0, n // 2):
        plane = f.coeffs[..., kz]
        mirrored = plane[..., idx, :][..., idx]
        worst = max(worst, float(np.max(np.abs(plane - np.conj(mirrored)), initial=0.0)))
    return worst


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------

def l2_norm(f):
    g = f.grid
    s = np.sum(g.weights * np.abs(f.coeffs) ** 2)
    return float(np.sqrt(g.volume * s))


def inner(f, h):
    """Real L2 inner product over the box, summed over components."""
    f._check(h)
    g = f.grid
    return float(g.volume * np.sum(g.weights * (f.coeffs * np.conj(h.coeffs)).real))


def sobolev_seminorm(f, k):
    """||grad^k f||_{L2} via the spectral weight |xi|^{2k}."""
    if int(k) != k or not 0 <= k <= MAX_DERIVATIVE_ORDER:
        raise SpectralError(f"derivative order must be in 0..{MAX_DERIVATIVE_ORDER}, got {k}")
    g = f.grid
    s = np.sum(g.weights * g.xi2**k * np.abs(f.coeffs) ** 2)
    return float(np.sqrt(g.volume * s))


def h1_norm(f):
    return float(np.hypot(l2_norm(f), sobolev_seminorm(f, 1)))


# ---------------------------------------------------------------------------
# differential operators
# ---------------------------------------------------------------------------

def derivative(f, alpha):
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != 3 or min(alpha) < 0:
        raise SpectralError(f"multi-index must have three nonnegative entries, got {alpha}")
    if sum(alpha) > MAX_DERIVATIVE_ORDER:
        raise SpectralError(f"|alpha| = {sum(alpha)} exceeds {MAX_DERIVATIVE_ORDER}")
    g = f.grid
    sym = 1.0 + 0j
    for a, xe, xo in zip(alpha, g.xi, g.xi_odd):
        if a:
            sym = sym * (1j * (xo if a % 2 else xe)) ** a
    return Field(g, f.coeffs * sym)


def gradient(f):
    """Gradient; output index 0 is the derivative direction (d_i f_...)."""
    g = f.grid
    return Field(g, np.stack([1j * k * f.coeffs for k in g.xi_odd]))


def divergence(u):
    if u.rank < 1:
        raise SpectralError("divergence needs a vector or tensor field")
    g = u.grid
    return Field(g, sum(1j * k * u.coeffs[i] for i, k in enumerate(g.xi_odd)))


def curl(u):
    if u.rank != 1:
        raise SpectralError("curl needs a vector field")
    g = u.grid
    kx, ky, kz = g.xi_odd
    c = u.coeffs
    return Field(g, 1j * np.stack([
        ky * c[2] - kz * c[1],
        kz * c[0] - kx * c[2],
        kx * c[1] - ky * c[0],
    ]))


def laplacian(f):
    return Field(f.grid, -f.grid.xi2 * f.coeffs)


def hessian(f):
    """Second derivatives d_i d_j f as a rank+2 field."""
    g = f.grid
    rows = []
    for i in range(3):
        rows.append(np.stack([derivative(f, _unit(i, j)).coeffs for j in range(3)]))
    return Field(g, np.stack(rows))


def _unit(i, j=None):
    a = [0, 0, 0]
    a[i] += 1
    if j is not None:
        a[j] += 1
    return tuple(a)


def lambda_power(f, s):
    """Fourier multiplier |xi|^s; the zero mode maps to zero for s != 0."""
    g = f.grid
    s = float(s)
    if s == 0:
        return f
    if s < 0:
        _require_mean_zero(f, "Lambda^s with s < 0")
    mag = g.xi_mag
    sym = np.zeros_like(mag)
    nz = mag > 0
    sym[nz] = mag[nz] ** s
    return Field(g, f.coeffs * sym)


def _require_mean_zero(f, what):
    zero = np.abs(f.coeffs[(..., 0, 0, 0)])
    scale = max(l2_norm(f) / np.sqrt(f.grid.volume), np.finfo(float).tiny)
    if np.any(zero > ZERO_MODE_TOL * scale) and np.any(zero > 0):
        raise IllPosedInversion(f"{what} requires mean-zero input; zero mode is {zero.max():.3e}")


def compressible_part(u):
    """b = Lambda^{-1} div u."""
    _require_mean_zero(u, "compressible_part")
    return lambda_power(divergence(u), -1.0)


def incompressible_part(u):
    """Pu = Lambda^{-1} curl u."""
    _require_mean_zero(u, "incompressible_part")
    return lambda_power(curl(u), -1.0)


def reconstruct(b, pu):
    """Inverse of the Helmholtz split: u = -Lambda^{-1} grad b + Lambda^{-1} curl Pu."""
    return lambda_power(curl(pu), -1.0) - lambda_power(gradient(b), -1.0)


# ---------------------------------------------------------------------------
# frequency decomposition
# ---------------------------------------------------------------------------

def admissible_r0(params):
    """Largest low-frequency radius allowed by the cutoff constraint."""
    from .linear_symbol import default_r0

    return default_r0(params)


def smoothstep(x):
    """C^2 quintic ramp from 0 (x <= 0) to 1 (x >= 1)."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6.0 * x - 15.0) + 10.0)


@dataclass(frozen=True)
class CutoffPair:
    r0: float
    R0: float
    mode: str = "smooth"

    def __post_init__(self):
        if not (0 < self.r0 < self.R0):
            raise SpectralError(f"need 0 < r0 < R0, got r0={self.r0}, R0={self.R0}")
        if self.mode not in ("smooth", "sharp"):
            raise SpectralError(f"mode must be 'smooth' or 'sharp', got {self.mode!r}")

    @classmethod
    def for_params(cls, params, r0=None, R0=None, mode="smooth"):
        bound = admissible_r0(params)
        r0 = bound if r0 is None else float(r0)
        if r0 > bound * (1 + 1e-12):
            raise SpectralError(f"r0={r0} exceeds admissible bound {bound}")
        R0 = 8.0 * r0 if R0 is None else float(R0)
        return cls(r0, R0, mode)

    def chi0(self, r):
        r = np.asarray(r, dtype=float)
        if self.mode == "sharp":
            return (r <= self.r0).astype(float)
        half = 0.5 * self.r0
        return 1.0 - smoothstep((r - half) / half)

    def chi1(self, r):
        r = np.asarray(r, dtype=float)
        if self.mode == "sharp":
            return (r > self.R0).astype(float)
        return smoothstep(r - self.R0)


@dataclass(frozen=True)
class FrequencyParts:
    low: Field
    mid: Field
    high: Field

    @property
    def low_mid(self):
        return self.low + self.mid

    @property
    def mid_high(self):
        return self.mid + self.high


def frequency_split(f, cutoffs):
    r = f.grid.xi_mag
    lo = Field(f.grid, f.coeffs * cutoffs.chi0(r))
    hi = Field(f.grid, f.coeffs * cutoffs.chi1(r))
    mid = Field(f.grid, f.coeffs - lo.coeffs - hi.coeffs)
    return FrequencyParts(lo, mid, hi)


# ---------------------------------------------------------------------------
# products and sampling helpers
# ---------------------------------------------------------------------------

def dealias(f):
    return Field(f.grid, f.coeffs * f.grid.dealias_mask)


def product(a, b):
    """Dealiased pointwise product of two scalar fields."""
    pa = inverse(dealias(a))
    pb = inverse(dealias(b))
    return dealias(forward(a.grid, pa * pb))


def random_field(grid, rank=0, rng=None, kmax=None, mean_zero=True):
    """Band-limited random real field with |xi| <= kmax (default: 2/3 band)."""
    rng = np.random.default_rng(rng)
    shape = (3,) * rank + grid.physical_shape
    c = to_spectral_array(rng.standard_normal(shape))
    if kmax is None:
        c = c * grid.dealias_mask
    else:
        c = c * (grid.xi_mag <= kmax)
    if mean_zero:
        c[(..., 0, 0, 0)] = 0.0
    # round trip through physical space restores exact Hermitian planes
    return forward(grid, to_physical_array(grid, c))


def multi_indices(order):
    """All ordered index tuples of length ``order`` over {0,1,2}."""
    return list(itertools.product(range(3), repeat=order))


# ---------------------------------------------------------------------------
# snapshot files
# ---------------------------------------------------------------------------

def save_snapshot(path, f):
    """Write a field as LQF1: header then full-lattice complex128 coefficients,
    components leading, each component in ascending xi order (-N/2 .. N/2-1)."""
    g = f.grid
    full = np.fft.fftshift(full_spectrum(f), axes=AXES)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, g.n, g.box_length, f.rank))
        fh.write(np.ascontiguousarray(full, dtype="<c16").tobytes())


def load_snapshot(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise SpectralError(f"{path}: truncated header")
        magic, n, length, rank = _HEADER.unpack(head)
        if magic != SNAPSHOT_MAGIC:
            raise SpectralError(f"{path}: bad magic {magic!r}")
        grid = SpectralGrid(int(n), float(length))
        count = 3**rank * n**3
        data = np.frombuffer(fh.read(), dtype="<c16")
    if data.size != count:
        raise SpectralError(f"{path}: expected {count} coefficients, found {data.size}")
    full = np.fft.ifftshift(data.reshape((3,) * rank + (n, n, n)), axes=AXES)
    values = sfft.ifftn(full, axes=AXES, norm="forward").real
    return forward(grid, values)
