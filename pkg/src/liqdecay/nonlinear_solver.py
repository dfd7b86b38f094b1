"""Pseudo-spectral time integration of the perturbed liquid-crystal system.

Unknowns are the density perturbation ``varrho = rho - 1``, the velocity
``u`` and the director perturbation ``n = d - dbar``. The linear part is
propagated exactly per Fourier mode: the density/compressible-velocity pair
through the 2x2 fluid block, the incompressible velocity through
``exp(-mu |xi|^2 t)`` and the director through the heat factor. Nonlinear
sources are formed in physical space with 2/3-rule dealiasing and integrated
by a second-order exponential (ETD2) or IMEX Runge-Kutta scheme.
"""

from dataclasses import dataclass, replace
from functools import lru_cache
import hashlib
import logging

import numpy as np
from scipy.special import gammainc, gamma as gamma_fn

from . import _kernels
from . import spectral_field as sf
from .spectral_field import Field

log = logging.getLogger(__name__)

SCHEMES = ("etd2", "imex-rk2")
# |omega h| below this uses the Taylor form of the phi-integrals
DEGENERATE_CUTOFF = 1e-3


class SolverError(RuntimeError):
    pass


class DensityFloorError(SolverError):
    def __init__(self, minimum, location, floor):
        super().__init__(
            f"density 1 + varrho fell to {minimum:.6g} at grid index {location} (floor {floor})"
        )
        self.minimum = minimum
        self.location = location


class DirectorBreakdown(SolverError):
    pass


class CFLError(SolverError):
    pass


# ---------------------------------------------------------------------------
# state and configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class State:
    varrho: Field
    velocity: Field
    director_pert: Field
    background_director: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.background_director, dtype=float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise SolverError("background director must be a unit 3-vector")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "background_director", d)
        if self.varrho.rank != 0 or self.velocity.rank != 1 or self.director_pert.rank != 1:
            raise SolverError("state needs a scalar density and vector velocity/director")
        g = self.varrho.grid
        if self.velocity.grid != g or self.director_pert.grid != g:
            raise SolverError("state fields must share one grid")

    @property
    def grid(self):
        return self.varrho.grid

    def director(self):
        """Physical director d = n + dbar, shape (3, N, N, N)."""
        return self.director_pert.physical() + self.background_director[:, None, None, None]


@dataclass(frozen=True)
class SourceTerms:
    s1: Field
    s2: Field
    s3: Field


@dataclass(frozen=True)
class StepperConfig:
    dt: float = None
    cfl_number: float = 1.0
    scheme: str = "etd2"
    renormalize_every: int = 1
    dealias: bool = True
    density_floor: float = 0.1
    nonlinear: bool = True
    director_coupling: bool = True
    strict_cfl: bool = False

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise SolverError(f"dt must be positive, got {self.dt}")
        if not 0 < self.cfl_number <= 1:
            raise SolverError(f"cfl_number must lie in (0, 1], got {self.cfl_number}")
        if self.scheme not in SCHEMES:
            raise SolverError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.renormalize_every < 0:
            raise SolverError("renormalize_every must be >= 0 (0 disables)")
        if not 0 < self.density_floor < 1:
            raise SolverError("density floor must lie in (0, 1)")


# ---------------------------------------------------------------------------
# coefficient functions
# ---------------------------------------------------------------------------

def _density_array(varrho):
    return varrho.physical() if isinstance(varrho, Field) else np.asarray(varrho, dtype=float)


def check_density_floor(rho_phys, floor):
    dens = 1.0 + rho_phys
    i = int(np.argmin(dens))
    m = float(dens.flat[i])
    if not m >= floor:
        raise DensityFloorError(m, np.unravel_index(i, dens.shape), floor)


def _wrap(varrho, values):
    if isinstance(varrho, Field):
        return sf.forward(varrho.grid, values)
    return values


def coefficient_h(varrho, floor=0.1):
    """h = varrho / (1 + varrho)."""
    r = _density_array(varrho)
    check_density_floor(r, floor)
    return _wrap(varrho, r / (1.0 + r))


def coefficient_f(varrho, params, floor=0.1):
    """f = P'(1 + varrho) / (1 + varrho) - P'(1) = gamma (1+varrho)^(gamma-2) - gamma."""
    r = _density_array(varrho)
    check_density_floor(r, floor)
    g = params.gamma_a
    return _wrap(varrho, g * (1.0 + r) ** (g - 2.0) - params.p_prime)


def coefficient_g(varrho, floor=0.1):
    """g = 1 / (1 + varrho)."""
    r = _density_array(varrho)
    check_density_floor(r, floor)
    return _wrap(varrho, 1.0 / (1.0 + r))


# ---------------------------------------------------------------------------
# nonlinear terms
# ---------------------------------------------------------------------------

@dataclass
class _Physical:
    rho: np.ndarray
    u: np.ndarray
    n: np.ndarray
    max_speed: float
    min_density: float


def _sources(grid, params, rho_c, u_c, n_c, dbar, config):
    """Spectral sources (N_rho, N_u, N_n) for the conservative stepping form.

    N_rho = -div(varrho u), N_u = S2, N_n = S3, each 2/3-dealiased.
    """
    mask = grid.dealias_mask if config.dealias else 1.0
    K = grid.xi_odd
    xi2 = grid.xi2
    mu, lam = params.mu, params.lambda_v

    couple = config.director_coupling
    iK = [1j * k for k in K]
    buf = np.empty((34 if couple else 19,) + grid.spectral_shape, dtype=complex)
    rho_m = np.multiply(rho_c, mask, out=buf[0])
    u_m = np.multiply(u_c, mask, out=buf[1:4])
    div_u = iK[0] * u_m[0] + iK[1] * u_m[1] + iK[2] * u_m[2]
    for i in range(3):
        np.multiply(iK[i], rho_m, out=buf[4 + i])
        for j in range(3):
            np.multiply(iK[i], u_m[j], out=buf[7 + 3 * i + j])
        buf[16 + i] = -mu * xi2 * u_m[i] + (mu + lam) * iK[i] * div_u
    if couple:
        n_m = np.multiply(n_c, mask, out=buf[19:22])
        for i in range(3):
            for j in range(3):
                np.multiply(iK[i], n_m[j], out=buf[22 + 3 * i + j])
        np.multiply(-xi2, n_m, out=buf[31:34])
    phys = sf.to_physical_array(grid, buf)

    rho = phys[0]
    u = phys[1:4]
    grad_rho = phys[4:7]
    grad_u = phys[7:16].reshape(3, 3, *rho.shape)
    visc = phys[16:19]

    dens = 1.0 + rho
    check_density_floor(rho, config.density_floor)
    h = rho / dens
    f = params.gamma_a * dens ** (params.gamma_a - 2.0) - params.p_prime
    g = 1.0 / dens

    adv = u[0] * grad_u[0] + u[1] * grad_u[1] + u[2] * grad_u[2]
    s2 = -adv - h * visc - f * grad_rho
    if couple:
        n = phys[19:22]
        grad_n = phys[22:31].reshape(3, 3, *rho.shape)
        lap_n = phys[31:34]
        stress = grad_n[:, 0] * lap_n[0] + grad_n[:, 1] * lap_n[1] + grad_n[:, 2] * lap_n[2]
        s2 = s2 - g * stress
        s3 = _kernels.director_source(u, grad_n, n, dbar)
    else:
        n = np.zeros_like(u)
        s3 = np.zeros_like(u)

    if couple:
        out = sf.to_spectral_array(np.concatenate([rho * u, s2, s3])) * mask
        n_n = out[6:9]
    else:
        out = sf.to_spectral_array(np.concatenate([rho * u, s2])) * mask
        n_n = np.zeros_like(out[3:6])
    flux = out[0:3]
    n_rho = -(iK[0] * flux[0] + iK[1] * flux[1] + iK[2] * flux[2])
    n_u = out[3:6]
    speed = float(np.sqrt(np.max(np.sum(u * u, axis=0))))
    return (n_rho, n_u, n_n), _Physical(rho, u, n, speed, float(dens.min()))


def nonlinear_terms(state, params, config=None):
    """S1, S2, S3 of the perturbed system at ``state``.

    S1 is returned in its conservative form -div(varrho u).
    """
    config = config or StepperConfig()
    g = state.grid
    (n_rho, n_u, n_n), _ = _sources(
        g, params, state.varrho.coeffs, state.velocity.coeffs,
        state.director_pert.coeffs, state.background_director, config,
    )
    return SourceTerms(Field(g, n_rho), Field(g, n_u), Field(g, n_n))


def director_stress(state, dealias=True):
    """grad d . Delta d computed directly: sum_j d_i d_j * Delta d_j."""
    n = state.director_pert
    gn = sf.gradient(n)
    ln = sf.laplacian(n)
    if dealias:
        gn, ln = sf.dealias(gn), sf.dealias(ln)
    gp, lp = gn.physical(), ln.physical()
    out = sf.forward(state.grid, np.einsum("ij...,j...->i...", gp, lp))
    return sf.dealias(out) if dealias else out


def director_stress_divergence_form(state, dealias=True):
    """div(grad d (.) grad d) - 1/2 grad |grad d|^2."""
    gn = sf.gradient(state.director_pert)
    if dealias:
        gn = sf.dealias(gn)
    gp = gn.physical()
    gram = np.einsum("ik...,jk...->ij...", gp, gp)
    g2 = np.einsum("ik...,ik...->...", gp, gp)
    grid = state.grid
    gram_f = sf.forward(grid, gram)
    g2_f = sf.forward(grid, g2)
    if dealias:
        gram_f, g2_f = sf.dealias(gram_f), sf.dealias(g2_f)
    div = Field(grid, sum(1j * grid.xi_odd[j] * gram_f.coeffs[:, j] for j in range(3)))
    return div - sf.gradient(g2_f) * 0.5


# ---------------------------------------------------------------------------
# exact linear operators and phi-integrals
# ---------------------------------------------------------------------------

def _scalar_moments(a, h):
    """m0 = int_0^h e^{-a s} ds and m1 = int_0^h (h-s) e^{-a s} ds (complex a)."""
    a = np.asarray(a, dtype=complex)
    z = a * h
    m0 = np.empty(a.shape, dtype=complex)
    m1 = np.empty(a.shape, dtype=complex)
    small = np.abs(z) < 0.5
    zs = -z[small]
    s0 = np.zeros(zs.shape, dtype=complex)
    s1 = np.zeros(zs.shape, dtype=complex)
    term = np.ones(zs.shape, dtype=complex)
    fact0, fact1 = 1.0, 2.0
    for n in range(24):
        s0 += term / fact0
        s1 += term / fact1
        term = term * zs
        fact0 *= n + 2
        fact1 *= n + 3
    m0[small] = h * s0
    m1[small] = h * h * s1
    big = ~small
    ab, zb = a[big], z[big]
    em = np.expm1(-zb)
    m0[big] = -em / ab
    m1[big] = (zb + em) / (ab * ab)
    return m0, m1


def _gauss_moment(n, theta, h):
    """int_0^h s^n e^{-theta s} ds for real theta >= 0."""
    theta = np.asarray(theta, dtype=float)
    out = np.empty(theta.shape)
    tiny = theta * h < 1e-12
    out[tiny] = h ** (n + 1) / (n + 1)
    th = theta[~tiny]
    out[~tiny] = gamma_fn(n + 1) / th ** (n + 1) * gammainc(n + 1, th * h)
    return out


def _fluid_families(xi, h, nu, pp):
    """(c, s) pairs for E(h), P0 = int_0^h E, P1 = int_0^h (h-s) E, where each
    operator is c I + s (theta I - M)."""
    theta = 0.5 * nu * xi * xi
    w2 = theta * theta - pp * xi * xi
    omega = np.sqrt(w2.astype(complex))

    # E(h) via the shared kernel, recovered into (c, s) form
    e11, e12, e21, e22 = _kernels.fluid_propagator(xi, np.full_like(xi, h), nu, pp)
    cE = 0.5 * (e11 + e22)
    sE = np.where(xi > 0, -e12 / np.where(xi > 0, xi, 1.0), h)

    lam_m = theta - omega
    lam_p = theta + omega
    m0m, m1m = _scalar_moments(lam_m, h)
    m0p, m1p = _scalar_moments(lam_p, h)
    c0 = (0.5 * (m0m + m0p)).real
    c1 = (0.5 * (m1m + m1p)).real
    safe = np.where(omega == 0, 1.0, omega)
    q0 = ((m0m - m0p) / (2.0 * safe)).real
    q1 = ((m1m - m1p) / (2.0 * safe)).real

    deg = np.abs(omega) * h < DEGENERATE_CUTOFF
    if np.any(deg):
        th = theta[deg]
        wz = w2[deg]
        moments = {n: _gauss_moment(n, th, h) for n in range(8)}

        def weighted(n, weight):
            if weight == 0:
                return moments[n]
            return h * moments[n] - moments[n + 1]

        for weight, (c_arr, q_arr) in enumerate(((c0, q0), (c1, q1))):
            # cosh(ws) = sum w^{2j} s^{2j}/(2j)!, sinh(ws)/w = sum w^{2j} s^{2j+1}/(2j+1)!
            c_arr[deg] = sum(wz**j * weighted(2 * j, weight) / gamma_fn(2 * j + 1) for j in range(3))
            q_arr[deg] = sum(wz**j * weighted(2 * j + 1, weight) / gamma_fn(2 * j + 2) for j in range(3))
    return (cE, sE), (c0, q0), (c1, q1), theta


class _Block:
    """Fluid-block operator c I + s (theta I - M) with theta I - M = [[th, -xi], [pp xi, -th]]."""

    __slots__ = ("a11", "a12", "a21", "a22")

    def __init__(self, c, s, theta, xi, pp):
        self.a11 = c + s * theta
        self.a12 = -s * xi
        self.a21 = s * pp * xi
        self.a22 = c - s * theta

    def apply(self, x, y):
        return _kernels.apply_block(self.a11, self.a12, self.a21, self.a22, x, y)


@dataclass
class LinearOps:
    """Per-mode exact propagators and phi-integrals for one time step."""

    E: tuple
    P0: tuple
    P1: tuple
    kmag: np.ndarray
    dt: float


@lru_cache(maxsize=8)
def linear_ops(grid, params, dt):
    K = grid.xi_odd
    k2 = sum(np.broadcast_to(k, grid.spectral_shape) ** 2 for k in K)
    kmag = np.sqrt(k2)
    nu, pp, mu = params.nu, params.p_prime, params.mu
    flat = kmag.ravel()
    (cE, sE), (c0, q0), (c1, q1), theta = _fluid_families(flat, dt, nu, pp)
    shape = kmag.shape

    def block(c, s):
        return _Block(c.reshape(shape), s.reshape(shape), theta.reshape(shape), kmag, pp)

    fam = []
    for fblk in (block(cE, sE), block(c0, q0), block(c1, q1)):
        fam.append(fblk)
    mT0, mT1 = (m.real for m in _scalar_moments(mu * k2, dt))
    mN0, mN1 = (m.real for m in _scalar_moments(k2, dt))
    E = (fam[0], np.exp(-mu * k2 * dt), np.exp(-k2 * dt))
    P0 = (fam[1], mT0, mN0)
    P1 = (fam[2], mT1, mN1)
    return LinearOps(E, P0, P1, kmag, dt)


def _split(grid, kmag, u):
    """(b, transverse part) of a spectral velocity; the mean stays transverse."""
    K = grid.xi_odd
    dot = sum(K[i] * u[i] for i in range(3))
    nz = kmag > 0
    inv = np.where(nz, 1.0 / np.where(nz, kmag, 1.0), 0.0)
    b = 1j * dot * inv
    lon = np.stack([K[i] * dot * inv * inv for i in range(3)])
    return b, u - lon


def _merge(grid, kmag, b, trans):
    K = grid.xi_odd
    nz = kmag > 0
    inv = np.where(nz, 1.0 / np.where(nz, kmag, 1.0), 0.0)
    return trans + np.stack([-1j * K[i] * b * inv for i in range(3)])


def _apply_family(fam, rho, b, trans, n):
    blk, ft, fn = fam
    r2, b2 = blk.apply(rho, b)
    return r2, b2, ft * trans, fn * n


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def cfl_bound(grid, params, max_speed, strict=False):
    dx = grid.dx
    bound = np.inf if max_speed <= 0 else dx / max_speed
    if strict:
        bound = min(bound, dx * dx / params.nu, dx * dx)
    return bound


class Stepper:
    """Owns one evolving state; each ``step`` advances it by dt."""

    def __init__(self, state, params, config=None):
        self.params = params
        self.config = config or StepperConfig()
        self.grid = state.grid
        self.dbar = state.background_director
        self.time = float(state.time)
        self.rho = np.array(state.varrho.coeffs)
        self.u = np.array(state.velocity.coeffs)
        self.n = np.array(state.director_pert.coeffs)
        self.steps_taken = 0
        self.last_drift = 0.0
        self.last_dt = None

    @property
    def state(self):
        g = self.grid
        return State(Field(g, self.rho), Field(g, self.u), Field(g, self.n), self.dbar, self.time)

    def _zero(self):
        return (np.zeros_like(self.rho), np.zeros_like(self.u), np.zeros_like(self.n))

    def _sources(self, rho, u, n):
        if not self.config.nonlinear:
            return self._zero(), None
        return _sources(self.grid, self.params, rho, u, n, self.dbar, self.config)

    def _choose_dt(self, phys):
        cfg = self.config
        speed = phys.max_speed if phys is not None else 0.0
        bound = cfl_bound(self.grid, self.params, speed, cfg.strict_cfl)
        if cfg.dt is None:
            if not np.isfinite(bound):
                raise CFLError("cannot derive dt from a CFL bound with zero velocity; set dt")
            return cfg.cfl_number * bound
        if cfg.dt > cfg.cfl_number * bound * (1 + 1e-12):
            raise CFLError(f"dt={cfg.dt:g} exceeds CFL bound {cfg.cfl_number * bound:.4g}")
        return cfg.dt

    def step(self):
        g, cfg = self.grid, self.config
        N0, phys = self._sources(self.rho, self.u, self.n)
        dt = self._choose_dt(phys)
        ops = linear_ops(g, self.params, dt)
        if cfg.scheme == "etd2":
            rho, u, n = self._etd2(ops, N0)
        else:
            rho, u, n = self._imex(ops, N0, dt)
        for arr in (rho, u, n):
            if not np.all(np.isfinite(arr)):
                raise SolverError(f"non-finite values after step at t={self.time + dt:g}")
        self.rho, self.u, self.n = rho, u, n
        self.time += dt
        self.steps_taken += 1
        self.last_dt = dt
        every = cfg.renormalize_every
        if every and self.steps_taken % every == 0:
            self._renormalize()
        return self.state

    def _etd2(self, ops, N0):
        g, km, h = self.grid, ops.kmag, ops.dt
        rho, b, tr = self.rho, *_split(g, km, self.u)
        n = self.n
        nr, nu_, nn = N0
        nb, nt = _split(g, km, nu_)
        Er, Eb, Et, En = _apply_family(ops.E, rho, b, tr, n)
        Pr, Pb, Pt, Pn = _apply_family(ops.P0, nr, nb, nt, nn)
        ar, ab, at, an = Er + Pr, Eb + Pb, Et + Pt, En + Pn
        if not self.config.nonlinear:
            return ar, _merge(g, km, ab, at), an
        (mr, mu_, mn), _ = self._sources(ar, _merge(g, km, ab, at), an)
        mb, mt = _split(g, km, mu_)
        Qr, Qb, Qt, Qn = _apply_family(ops.P1, mr - nr, mb - nb, mt - nt, mn - nn)
        out_r = ar + Qr / h
        out_b = ab + Qb / h
        out_t = at + Qt / h
        out_n = an + Qn / h
        return out_r, _merge(g, km, out_b, out_t), out_n

    def _imex(self, ops, N0, h):
        """ARS(2,2,2): L-stable implicit part, explicit sources."""
        g, km = self.grid, ops.kmag
        p = self.params
        gam = 1.0 - 1.0 / np.sqrt(2.0)
        dlt = 1.0 - 1.0 / (2.0 * gam)
        k2 = km * km
        nu, pp, mu = p.nu, p.p_prime, p.mu

        def gen(r, b, t, n):
            return km * b, -pp * km * r + nu * k2 * b, mu * k2 * t, k2 * n

        a = h * gam
        det = 1.0 + a * nu * k2 + a * a * pp * k2

        def solve(r, b, t, n):
            r2 = ((1.0 + a * nu * k2) * r - a * km * b) / det
            b2 = (a * pp * km * r + b) / det
            return r2, b2, t / (1.0 + a * mu * k2), n / (1.0 + a * k2)

        rho, (b, tr), n = self.rho, _split(g, km, self.u), self.n
        n1r, n1u, n1n = N0
        n1b, n1t = _split(g, km, n1u)
        U2 = solve(rho + h * gam * n1r, b + h * gam * n1b, tr + h * gam * n1t, n + h * gam * n1n)
        (n2r, n2u, n2n), _ = self._sources(U2[0], _merge(g, km, U2[1], U2[2]), U2[3])
        n2b, n2t = _split(g, km, n2u)
        L2 = gen(*U2)
        rhs = [
            x - h * (1 - gam) * l + h * (dlt * s1 + (1 - dlt) * s2)
            for x, l, s1, s2 in zip((rho, b, tr, n), L2, (n1r, n1b, n1t, n1n), (n2r, n2b, n2t, n2n))
        ]
        U3 = solve(*rhs)
        return U3[0], _merge(g, km, U3[1], U3[2]), U3[3]

    def _renormalize(self):
        g = self.grid
        n_phys = sf.to_physical_array(g, self.n)
        d = n_phys + self.dbar[:, None, None, None]
        self.last_drift = float(np.max(np.abs(np.sqrt(np.sum(d * d, axis=0)) - 1.0)))
        new, mmin = _kernels.renormalize(n_phys, self.dbar)
        if mmin < 0.5:
            raise DirectorBreakdown(f"director magnitude dropped to {mmin:.3g}")
        self.n = sf.to_spectral_array(new)

    def run(self, steps, observe=None, observe_every=1):
        """Advance ``steps`` steps; ``observe(state)`` is called on the initial
        state and every ``observe_every`` steps."""
        if observe is not None:
            observe(self.state)
        for i in range(1, steps + 1):
            self.step()
            if observe is not None and (i % observe_every == 0 or i == steps):
                observe(self.state)
        return self.state


def duhamel_step(state, params, config=None):
    """One step of the discrete Duhamel formula; returns the new State."""
    return Stepper(state, params, config).step()


def semigroup_state(state, params, t):
    """Exact linear evolution of ``state`` by time ``t`` (sources dropped)."""
    cfg = StepperConfig(dt=t, nonlinear=False, renormalize_every=0)
    return Stepper(state, params, cfg).step() if t > 0 else state


# ---------------------------------------------------------------------------
# state utilities
# ---------------------------------------------------------------------------

def renormalize_director(state):
    """Project d = n + dbar onto the unit sphere pointwise."""
    n_phys = state.director_pert.physical()
    new, mmin = _kernels.renormalize(n_phys, state.background_director)
    if mmin < 0.5:
        raise DirectorBreakdown(f"director magnitude {mmin:.3g} below 1/2; projection is unsafe")
    return replace(state, director_pert=sf.forward(state.grid, new))


def director_drift(state):
    d = state.director()
    return float(np.max(np.abs(np.sqrt(np.sum(d * d, axis=0)) - 1.0)))


def momentum(state):
    """m = (1 + varrho) u with the product dealiased."""
    u = state.velocity
    rho = state.varrho
    comps = [sf.product(rho, u.component(i)).coeffs for i in range(3)]
    return u + Field(state.grid, np.stack(comps))


def _band_limited(grid, rng, shape, band):
    k_lo, k_hi = band
    c = sf.to_spectral_array(rng.standard_normal(shape + grid.physical_shape))
    sel = (grid.xi_mag >= k_lo) & (grid.xi_mag <= k_hi) & grid.dealias_mask
    c = c * sel
    return sf.to_physical_array(grid, c)


def initial_data_large(grid, amplitude, band, seed, background_director=(0.0, 0.0, 1.0), floor=0.1):
    """Random band-limited state with max|varrho| = max|u| = amplitude.

    The director is the exponential-map image of a random tangent field of
    the same amplitude, so |d| = 1 holds pointwise.
    """
    amplitude = float(amplitude)
    k_lo, k_hi = band
    if not 0 < k_lo <= k_hi:
        raise SolverError("band must satisfy 0 < k_lo <= k_hi")
    kmax = grid.scale * (grid.n / 3.0)
    if k_lo > kmax:
        raise SolverError(f"band starts above the dealiased resolution {kmax:.3g}")
    if amplitude < 0 or 1.0 - amplitude < floor:
        raise SolverError(f"amplitude {amplitude} would push 1 + varrho below the floor {floor}")
    dbar = np.asarray(background_director, dtype=float)
    dbar = dbar / np.linalg.norm(dbar)
    rng = np.random.default_rng(seed)
    rho = _band_limited(grid, rng, (), band)
    u = _band_limited(grid, rng, (3,), band)
    v = _band_limited(grid, rng, (3,), band)

    def scaled(x):
        m = np.max(np.abs(x))
        return x * (amplitude / m) if m > 0 and amplitude > 0 else np.zeros_like(x)

    rho = scaled(rho)
    u = scaled(u)
    v = v - np.einsum("i...,i->...", v, dbar)[None] * dbar[:, None, None, None]
    vmag = np.sqrt(np.sum(v * v, axis=0))
    vmax = vmag.max()
    if amplitude > 0 and vmax > 0:
        v = v * (amplitude / vmax)
        vmag = vmag * (amplitude / vmax)
        safe = np.where(vmag > 0, vmag, 1.0)
        d = np.cos(vmag)[None] * dbar[:, None, None, None] + (np.sin(vmag) / safe)[None] * v
        d = d / np.sqrt(np.sum(d * d, axis=0))
        n = d - dbar[:, None, None, None]
    else:
        n = np.zeros_like(u)
    rho_c = sf.to_spectral_array(rho)
    u_c = sf.to_spectral_array(u)
    rho_c[0, 0, 0] = 0.0
    u_c[:, 0, 0, 0] = 0.0
    return State(Field(grid, rho_c), Field(grid, u_c), sf.forward(grid, n), dbar, 0.0)


# ---------------------------------------------------------------------------
# energy diagnostics
# ---------------------------------------------------------------------------

def _cross(grad_u, hess_rho):
    """int grad u : grad^2 rho dx = sum_ij int d_i u_j d_i d_j rho."""
    return sf.inner(grad_u, hess_rho)


def second_order_energy(state):
    """q = ||grad^2 varrho||^2 + ||grad^2 u||^2 + ||grad^3 n||^2."""
    return (sf.sobolev_seminorm(state.varrho, 2) ** 2
            + sf.sobolev_seminorm(state.velocity, 2) ** 2
            + sf.sobolev_seminorm(state.director_pert, 3) ** 2)


def energy_xh(state, params, delta, cutoffs):
    """(X_h, X_h - delta int grad u : grad^2 varrho^L)."""
    if not 0 < delta <= 0.125 and delta != 0:
        raise SolverError(f"delta must lie in (0, 1/8], got {delta}")
    q = second_order_energy(state)
    grad_u = sf.gradient(state.velocity)
    cross = _cross(grad_u, sf.hessian(state.varrho))
    parts = sf.frequency_split(state.varrho, cutoffs)
    cross_low = _cross(grad_u, sf.hessian(parts.low_mid))
    xh = 0.5 * q + delta * cross
    return xh, xh - delta * cross_low


def energy_equivalence_ratio(state, params, delta, cutoffs):
    """X_h cancelled divided by q/2; lies in [1 - 2 delta, 1 + 2 delta]."""
    q = second_order_energy(state)
    _, xc = energy_xh(state, params, delta, cutoffs)
    return xc / (0.5 * q) if q > 0 else 1.0


def h1_norm_triple(state):
    """||(varrho, u, grad n)||_{H^1} as the sum of the three H^1 norms."""
    gn = sf.gradient(state.director_pert)
    return sf.h1_norm(state.varrho) + sf.h1_norm(state.velocity) + sf.h1_norm(gn)


# ---------------------------------------------------------------------------
# run manifest
# ---------------------------------------------------------------------------

def manifest_text(entries):
    lines = [f"{k} = {entries[k]}" for k in sorted(entries)]
    body = "\n".join(lines) + "\n"
    blob = body.encode("utf-8")
    digest = hashlib.sha1(b"blob %d\0" % len(blob) + blob).hexdigest()
    return body + f"config_hash = {digest}\n"
