"""Whole-space L2 norms of the linear flow for radially symmetric data.

For radial Fourier data the 3-D integral collapses to

    N_k(t)^2 = 4 pi  int_0^inf  r^(2k+2) |exp(-t G(r)) U0(r)|^2 dr,

evaluated by composite Gauss-Legendre panels on a logarithmic r grid.
"""

from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import linear_symbol as ls
from .spectral_field import smoothstep

COMPONENTS = ("rho", "b", "w", "pu")
FLUID_COMPONENTS = ("rho", "b")


class QuadratureError(ValueError):
    pass


class QuadratureResolutionError(QuadratureError):
    """Panels are too coarse for the oscillation or decay at the requested time."""

    def __init__(self, message, suggested_node_count):
        super().__init__(message)
        self.suggested_node_count = suggested_node_count


@dataclass(frozen=True)
class RadialProfile:
    """Radial Fourier datum for one unknown.

    Either tabulated (``nodes``/``values`` with ``interpolation``) or given by
    a callable ``func``. The profile vanishes beyond ``support_radius``.
    """

    component: str
    support_radius: float
    nodes: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    interpolation: str = "pchip"
    func: Optional[Callable] = dc_field(default=None, repr=False, compare=False)
    breakpoints: tuple = ()
    admissible: bool = False

    def __post_init__(self):
        if self.component not in COMPONENTS:
            raise QuadratureError(f"unknown component {self.component!r}; expected one of {COMPONENTS}")
        if not self.support_radius > 0:
            raise QuadratureError("support radius must be positive")
        if self.func is None:
            if self.nodes is None or self.values is None:
                raise QuadratureError("tabulated profile needs nodes and values")
            nodes = np.asarray(self.nodes, dtype=float)
            values = np.asarray(self.values, dtype=float)
            if nodes.shape != values.shape or nodes.ndim != 1 or nodes.size < 2:
                raise QuadratureError("nodes and values must be matching 1-D arrays")
            if np.any(np.diff(nodes) <= 0):
                raise QuadratureError("nodes must be strictly increasing")
            if not np.all(np.isfinite(values)):
                raise QuadratureError("profile values must be finite")
            if self.interpolation not in ("linear", "pchip"):
                raise QuadratureError(f"unknown interpolation {self.interpolation!r}")
            object.__setattr__(self, "nodes", nodes)
            object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, component, func, support_radius, breakpoints=(), admissible=False):
        return cls(component, float(support_radius), func=func,
                   breakpoints=tuple(float(b) for b in breakpoints), admissible=admissible)

    @classmethod
    def zero(cls, component):
        return cls.from_function(component, lambda r: np.zeros_like(np.asarray(r, dtype=float)), 1.0)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.func is not None:
            out = np.asarray(self.func(r), dtype=float)
        elif self.interpolation == "linear":
            out = np.interp(r, self.nodes, self.values, left=self.values[0], right=0.0)
        else:
            out = PchipInterpolator(self.nodes, self.values, extrapolate=False)(r)
            out = np.where(r < self.nodes[0], self.values[0], out)
            out = np.nan_to_num(out, nan=0.0)
        return np.where(r > self.support_radius, 0.0, out)

    def all_breakpoints(self):
        pts = list(self.breakpoints) + [self.support_radius]
        return tuple(sorted(set(p for p in pts if p > 0)))


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on log-spaced panels.

    ``node_count`` is the number of nodes per decade of r, split into panels
    of ``order`` nodes each.
    """

    node_count: int = 2048
    r_min: float = 1e-7
    r_max: Optional[float] = None
    order: int = 16
    scheme: str = "gauss-legendre-panels"

    def __post_init__(self):
        if self.node_count < 64:
            raise QuadratureError("node_count must be at least 64 per decade")
        if self.r_min < 0:
            raise QuadratureError("r_min must be nonnegative")
        if self.order < 2 or self.node_count % self.order:
            raise QuadratureError("node_count must be a multiple of the panel order")

    def refined(self, factor=2):
        return QuadratureSpec(self.node_count * factor, self.r_min, self.r_max, self.order, self.scheme)

    @property
    def panels_per_decade(self):
        return self.node_count // self.order


def panel_edges(spec, r_max, breakpoints=()):
    lo = max(spec.r_min, 1e-300)
    if r_max <= lo:
        raise QuadratureError("r_max must exceed r_min")
    decades = np.log10(r_max / lo)
    count = max(1, int(np.ceil(decades * spec.panels_per_decade)))
    edges = np.geomspace(lo, r_max, count + 1)
    extra = [b for b in breakpoints if lo < b < r_max]
    edges = np.unique(np.concatenate([[0.0], edges, extra]))
    return edges


def gauss_nodes(spec, r_max, breakpoints=()):
    edges = panel_edges(spec, r_max, breakpoints)
    x, w = np.polynomial.legendre.leggauss(spec.order)
    a = edges[:-1, None]
    b = edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return edges, nodes, weights


def _profile_map(profiles):
    out = {}
    for p in profiles:
        if p.component in out:
            raise QuadratureError(f"duplicate profile for component {p.component!r}")
        out[p.component] = p
    return out


def evolve_components(profiles, params, r, t):
    """Evolved Fourier amplitudes at nodes ``r`` (any shape) and times ``t``
    (broadcast against ``r``). Returns a dict component -> array."""
    pm = _profile_map(profiles)
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    zero = np.zeros(np.broadcast(r, t).shape)
    rho0 = pm["rho"](r) if "rho" in pm else 0.0
    b0 = pm["b"](r) if "b" in pm else 0.0
    out = {}
    if "rho" in pm or "b" in pm:
        e11, e12, e21, e22 = ls.fluid_propagator(params, r, t)
        out["rho"] = e11 * rho0 + e12 * b0
        out["b"] = e21 * rho0 + e22 * b0
    else:
        out["rho"] = zero
        out["b"] = zero
    out["w"] = np.exp(-r * r * t) * pm["w"](r) if "w" in pm else zero
    out["pu"] = np.exp(-params.mu * r * r * t) * pm["pu"](r) if "pu" in pm else zero
    return out


def _select(comp, component):
    if component == "all":
        return comp["rho"] ** 2 + comp["b"] ** 2 + comp["w"] ** 2
    if component == "fluid":
        return comp["rho"] ** 2 + comp["b"] ** 2
    if component in COMPONENTS:
        return comp[component] ** 2
    raise QuadratureError(f"unknown component selector {component!r}")


def _decay_rates(params, r):
    """Per-node real decay rates of (fluid slow, heat, incompressible) and the
    oscillation frequency of the fluid block."""
    nu, pp = params.nu, params.p_prime
    theta = 0.5 * nu * r * r
    w2 = theta * theta - pp * r * r
    slow = np.where(w2 > 0, theta - np.sqrt(np.maximum(w2, 0.0)), theta)
    freq = np.sqrt(np.maximum(-w2, 0.0))
    return slow, r * r, params.mu * r * r, freq


def check_resolution(profiles, params, k, t, spec, edges):
    """Raise QuadratureResolutionError if any significant panel is too coarse."""
    t = float(t)
    if t == 0:
        return
    a, b = edges[:-1], edges[1:]
    slow_a, heat_a, pu_a, freq_a = _decay_rates(params, a)
    slow_b, heat_b, pu_b, freq_b = _decay_rates(params, b)
    rate_a = np.minimum(np.minimum(slow_a, heat_a), pu_a)
    env = np.where(a > 0, a, b) ** (2 * k + 2) * np.exp(-2.0 * rate_a * t)
    significant = env > 1e-10 * env.max()
    phase = t * np.abs(freq_b - freq_a)
    decay = t * np.maximum.reduce([
        np.abs(slow_b - slow_a), np.abs(heat_b - heat_a), np.abs(pu_b - pu_a)
    ])
    bad = significant & ((phase > spec.order) | (decay > spec.order))
    if np.any(bad):
        worst = float(max(phase[bad].max(), decay[bad].max()))
        factor = int(2 ** np.ceil(np.log2(worst / spec.order)))
        suggested = spec.node_count * max(2, factor)
        raise QuadratureResolutionError(
            f"quadrature too coarse at t={t:g}: panel phase/decay span {worst:.3g} exceeds "
            f"{spec.order}; use node_count >= {suggested}",
            suggested,
        )


def _support(profiles):
    return max(p.support_radius for p in profiles)


def _breakpoints(profiles):
    pts = set()
    for p in profiles:
        pts.update(p.all_breakpoints())
    return tuple(sorted(pts))


def norm_series(profiles, params, k, times, spec=None, component="all", check=True):
    """N_k(t) for each t in ``times`` (vectorized over time)."""
    if int(k) != k or not 0 <= k <= 4:
        raise QuadratureError(f"derivative order must be in 0..4, got {k}")
    spec = spec or QuadratureSpec()
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise QuadratureError("times must be nonnegative")
    r_max = spec.r_max or _support(profiles)
    edges, nodes, weights = gauss_nodes(spec, r_max, _breakpoints(profiles))
    if check:
        for t in times:
            check_resolution(profiles, params, k, t, spec, edges)
    r = nodes.ravel()
    w = weights.ravel() * 4.0 * np.pi * r ** (2 * k + 2)
    out = np.empty(times.size)
    for i, t in enumerate(times):
        comp = evolve_components(profiles, params, r, t)
        out[i] = np.sqrt(np.sum(w * _select(comp, component)))
    return out


def norm_evolution(profiles, params, k, t, spec=None, component="all"):
    """N_k(t) = (4 pi int r^(2k+2) |exp(-tG(r)) U0(r)|^2 dr)^(1/2)."""
    if t < 0:
        raise QuadratureError("time must be nonnegative")
    return float(norm_series(profiles, params, k, [t], spec, component)[0])


def convergence_gap(profiles, params, k, times, spec=None, component="all"):
    """Max relative change of N_k(t) under node doubling."""
    spec = spec or QuadratureSpec()
    base = norm_series(profiles, params, k, times, spec, component)
    fine = norm_series(profiles, params, k, times, spec.refined(), component)
    return float(np.max(np.abs(fine - base) / np.abs(fine)))


def theorem13_profile(c0, inner_radius, outer_radius):
    """Plateau data: rho0 = w0 = c0 on [0, inner], C^2 ramp to 0 at outer; m0 = 0.

    At the linear level m0 = u0, so the compressible velocity datum vanishes.
    """
    if not c0 > 0:
        raise QuadratureError("c0 must be positive")
    if not 0 < inner_radius < outer_radius:
        raise QuadratureError("need 0 < inner_radius < outer_radius")
    width = outer_radius - inner_radius

    def plateau(r):
        r = np.asarray(r, dtype=float)
        return c0 * (1.0 - smoothstep((r - inner_radius) / width))

    bps = (inner_radius, outer_radius)
    rho = RadialProfile.from_function("rho", plateau, outer_radius, bps, admissible=True)
    m = RadialProfile.from_function("b", lambda r: np.zeros_like(np.asarray(r, dtype=float)),
                                    outer_radius, bps, admissible=True)
    w = RadialProfile.from_function("w", plateau, outer_radius, bps, admissible=True)
    return rho, m, w


def plateau_profile(component, c0, inner_radius, outer_radius):
    """Single plateau profile, e.g. for the incompressible velocity datum."""
    rho, _, _ = theorem13_profile(c0, inner_radius, outer_radius)
    return RadialProfile.from_function(component, rho.func, outer_radius,
                                       rho.breakpoints, admissible=True)


def check_admissibility(profiles, c0, r_small, samples=512):
    """Lower-bound hypotheses near the origin: |rho0|, |w0| >= c0 and m0 = 0 on (0, r_small]."""
    pm = _profile_map(profiles)
    r = np.linspace(r_small / samples, r_small, samples)
    problems = []
    for name in ("rho", "w"):
        if name not in pm or np.min(np.abs(pm[name](r))) < c0 * (1 - 1e-12):
            problems.append(f"|{name}0| < c0 near the origin")
    if "b" in pm and np.max(np.abs(pm["b"](r))) > 0:
        problems.append("m0 does not vanish near the origin")
    return problems


def geometric_times(t1, t2, per_decade=16):
    if not 0 < t1 < t2:
        raise QuadratureError("need 0 < t1 < t2")
    count = int(round(np.log10(t2 / t1) * per_decade)) + 1
    return np.geomspace(t1, t2, count)


@dataclass(frozen=True)
class TwoSided:
    c_lower: float
    c_upper: float
    ratio: float
    two_sided: bool


def two_sided_rate_check(series, exponent, window, ratio_bound=3.0):
    """Bracket N(t) (1+t)^exponent over the window by its min and max."""
    t = np.asarray(series.times, dtype=float)
    v = np.asarray(series.values, dtype=float)
    t1, t2 = window
    sel = (t >= t1) & (t <= t2)
    if not np.any(sel):
        raise QuadratureError(f"no samples in window {window}")
    if np.any(v[sel] <= 0):
        raise QuadratureError("series values must be positive on the window")
    scaled = v[sel] * (1.0 + t[sel]) ** exponent
    lo, hi = float(scaled.min()), float(scaled.max())
    ratio = hi / lo
    return TwoSided(lo, hi, ratio, bool(ratio <= ratio_bound))
