"""Per-frequency analysis of the linearized liquid-crystal system.

At a frequency magnitude ``r = |xi|`` the linear dynamics of
``(rho_hat, b_hat, w_hat)`` (density, compressible velocity part, gradient of
the director perturbation) are ``d/dt U + G(r) U = 0`` with

    G(r) = [[0,        r,          0  ],
            [-P'(1) r, (2mu+lam) r^2, 0],
            [0,        0,          r^2]]

The 2x2 fluid block is exponentiated in closed form; the director entry is
a plain heat factor.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


class SymbolError(ValueError):
    pass


@dataclass(frozen=True)
class FluidParams:
    mu: float = 1.0
    lambda_v: float = 0.0
    gamma_a: float = 2.0

    def __post_init__(self):
        mu, lam, gam = self.mu, self.lambda_v, self.gamma_a
        if not mu > 0:
            raise SymbolError(f"mu must be positive, got {mu}")
        if 2 * mu + 3 * lam < 0:
            raise SymbolError(f"need 2 mu + 3 lambda >= 0, got {2 * mu + 3 * lam}")
        if not mu > lam / 2:
            raise SymbolError(f"need mu > lambda / 2, got mu={mu}, lambda={lam}")
        if not gam >= 1:
            raise SymbolError(f"adiabatic exponent must be >= 1, got {gam}")

    @property
    def p_prime(self):
        # P(rho) = rho^gamma, so P'(1) = gamma
        return self.gamma_a * 1.0 ** (self.gamma_a - 1)

    @property
    def nu(self):
        """Longitudinal viscosity 2 mu + lambda."""
        return 2.0 * self.mu + self.lambda_v

    def pressure_derivative(self, density):
        return self.gamma_a * np.asarray(density, dtype=float) ** (self.gamma_a - 1)


@dataclass(frozen=True)
class SymbolMatrix:
    xi_mag: float
    fluid_block: np.ndarray
    heat_entry: float

    def full(self):
        g = np.zeros((3, 3))
        g[:2, :2] = self.fluid_block
        g[2, 2] = self.heat_entry
        return g


@dataclass(frozen=True)
class LyapunovWeights:
    delta1: float

    @classmethod
    def default(cls, params):
        return cls(max_delta1(params))

    def check(self, params):
        bound = max_delta1(params)
        if not 0 < self.delta1 <= bound * (1 + 1e-12):
            raise SymbolError(f"delta1={self.delta1} outside (0, {bound}]")


def max_delta1(params):
    return min(0.5, params.nu / 4.0, np.sqrt(params.p_prime) / 2.0)


def default_r0(params):
    pp = params.p_prime
    return min(0.5, np.sqrt(pp / params.nu), np.sqrt(2.0 * pp) / 2.0)


def _nonneg(xi_mag):
    x = np.asarray(xi_mag, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise SymbolError("frequency magnitude must be finite and >= 0")
    return x


def assemble_symbol(params, xi_mag):
    r = float(_nonneg(xi_mag))
    block = np.array([[0.0, r], [-params.p_prime * r, params.nu * r * r]])
    return SymbolMatrix(r, block, r * r)


def char_coeffs(params, xi_mag):
    """(a1, a2, a3) with det(G - beta I) = -beta^3 + a1 beta^2 - a2 beta + a3."""
    r = _nonneg(xi_mag)
    nu, pp = params.nu, params.p_prime
    r2 = r * r
    a1 = nu * r2 + r2
    a2 = pp * r2 + nu * r2 * r2
    a3 = pp * r2 * r2
    return a1, a2, a3


def lienard_chipart(params, xi_mag):
    """True iff a1 > 0 and a1 a2 - a3 > 0 (all roots in the right half plane)."""
    r = _nonneg(xi_mag)
    if np.any(r == 0):
        raise SymbolError("the stability criterion addresses nonzero frequencies only")
    a1, a2, a3 = char_coeffs(params, r)
    ok = (a1 > 0) & (a1 * a2 - a3 > 0)
    return bool(ok) if np.ndim(ok) == 0 else ok


def discriminant_root(params):
    """Frequency where the fluid eigenvalues coalesce: 2 sqrt(P'(1)) / (2mu + lambda)."""
    return 2.0 * np.sqrt(params.p_prime) / params.nu


def eigenvalues(params, xi_mag):
    """(beta_plus, beta_minus, beta_heat), the roots of det(G - beta I)."""
    r = _nonneg(xi_mag)
    nu, pp = params.nu, params.p_prime
    disc = (nu * r * r) ** 2 - 4.0 * pp * r * r
    root = np.sqrt(disc.astype(complex))
    bp = (nu * r * r + root) / 2.0
    bm = (nu * r * r - root) / 2.0
    bh = r * r
    if np.ndim(r) == 0:
        return complex(bp), complex(bm), float(bh)
    return bp, bm, bh


def fluid_propagator(params, xi_mag, t):
    """Entries (e11, e12, e21, e22) of exp(-t M(|xi|)) for the fluid block."""
    r = _nonneg(xi_mag)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise SymbolError("time must be nonnegative")
    return _kernels.fluid_propagator(r, t, params.nu, params.p_prime)


def semigroup_apply(params, xi_mag, t, state3):
    """Apply exp(-t G(|xi|)) to the triple (rho_hat, b_hat, w_hat)."""
    if np.any(np.asarray(t) < 0):
        raise SymbolError("time must be nonnegative")
    rho, b, w = (np.asarray(v) for v in state3)
    e11, e12, e21, e22 = fluid_propagator(params, xi_mag, t)
    r = np.asarray(xi_mag, dtype=float)
    heat = np.exp(-r * r * np.asarray(t, dtype=float))
    out = (e11 * rho + e12 * b, e21 * rho + e22 * b, heat * w)
    if all(np.ndim(o) == 0 for o in out):
        return tuple(complex(o) for o in out)
    return out


def semigroup_matrix(params, xi_mag, t):
    e11, e12, e21, e22 = (float(e) for e in fluid_propagator(params, xi_mag, t))
    r = float(xi_mag)
    return np.array([[e11, e12, 0.0], [e21, e22, 0.0], [0.0, 0.0, np.exp(-r * r * t)]])


def pincompressible_factor(params, xi_mag, t):
    """Exact decay factor exp(-mu |xi|^2 t) of incompressible velocity modes."""
    r = _nonneg(xi_mag)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise SymbolError("time must be nonnegative")
    out = np.exp(-params.mu * r * r * t)
    return float(out) if np.ndim(out) == 0 else out


def plain_quadratic(params, state3):
    rho, b, w = (np.asarray(v) for v in state3)
    return 0.5 * (params.p_prime * np.abs(rho) ** 2 + np.abs(b) ** 2 + np.abs(w) ** 2)


def lyapunov_low(params, weights, xi_mag, state3, r0=None):
    """Low-band functional 1/2 (P'|rho|^2 + |b|^2 + |w|^2 - 2 delta1 |xi| Re(rho conj b))."""
    r = _nonneg(xi_mag)
    r0 = default_r0(params) if r0 is None else r0
    if np.any(r > r0 * (1 + 1e-12)):
        raise SymbolError(f"|xi| must not exceed r0={r0}")
    rho, b, _ = (np.asarray(v) for v in state3)
    cross = weights.delta1 * r * np.real(rho * np.conj(b))
    out = plain_quadratic(params, state3) - cross
    return float(out) if np.ndim(out) == 0 else out


def medium_band_kappa(params, r, R, samples=10_000):
    """Sampled decay floor over r <= |xi| <= R: min of Re(beta_pm) and |xi|^2."""
    if not 0 < r < R:
        raise SymbolError(f"need 0 < r < R, got r={r}, R={R}")
    if samples < 2:
        raise SymbolError("need at least two samples")
    x = np.linspace(r, R, int(samples))
    bp, bm, bh = eigenvalues(params, x)
    return float(min(bp.real.min(), bm.real.min(), bh.min()))


def envelope_violations(params, xi_mag, t, vectors, kappa, constant=3.0):
    """Count draws where |exp(-tG) v| > constant * exp(-kappa t) |v|.

    ``xi_mag`` and ``t`` are 1-D arrays of equal length; ``vectors`` has shape
    (len, 3) (complex allowed). Returns (violations, worst ratio).
    """
    xi_mag = np.asarray(xi_mag, dtype=float)
    t = np.asarray(t, dtype=float)
    v = np.asarray(vectors)
    out = semigroup_apply(params, xi_mag, t, (v[:, 0], v[:, 1], v[:, 2]))
    num = np.sqrt(sum(np.abs(o) ** 2 for o in out))
    den = np.sqrt(np.sum(np.abs(v) ** 2, axis=1)) * np.exp(-kappa * t)
    ratio = num / den
    return int(np.sum(ratio > constant)), float(ratio.max())
