import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm

from liqdecay import linear_symbol as ls
from liqdecay import nonlinear_solver as ns
from liqdecay import spectral_field as sf

P2 = ls.FluidParams(1.0, 0.0, 2.0)
P3 = ls.FluidParams(1.0, 0.0, 3.0)
DBAR = np.array([0.0, 0.0, 1.0])


@pytest.fixture
def grid():
    return sf.make_grid(16, 2 * np.pi)


def _state(grid, rho, u, n, dbar=DBAR):
    return ns.State(sf.forward(grid, rho), sf.forward(grid, u), sf.forward(grid, n), dbar)


def _zero_state(grid):
    z = np.zeros(grid.physical_shape)
    return _state(grid, z, np.zeros((3,) + grid.physical_shape), np.zeros((3,) + grid.physical_shape))


# ---------------------------------------------------------------------------
# coefficients and sources
# ---------------------------------------------------------------------------

def test_coefficients_scalar_examples():
    zero = np.zeros(4)
    assert np.all(ns.coefficient_h(zero) == 0)
    assert np.all(ns.coefficient_f(zero, P2) == 0)
    assert np.all(ns.coefficient_g(zero) == 1)
    one = np.ones(4)
    assert np.allclose(ns.coefficient_f(one, P3), 3.0)  # 3 * 2^1 - 3
    assert np.allclose(ns.coefficient_f(one, P2), 0.0)  # vanishes identically for gamma = 2
    assert np.allclose(ns.coefficient_g(np.full(4, -0.5)), 2.0)
    assert np.allclose(ns.coefficient_h(one), 0.5)


def test_coefficients_on_fields(grid):
    x, _, _ = grid.coordinates()
    rho = 0.3 * np.cos(x)
    f = ns.coefficient_f(sf.forward(grid, rho), P3)
    assert np.allclose(f.physical(), 3 * (1 + rho) - 3, atol=1e-13)


def test_density_floor_reports_location():
    rho = np.zeros((8, 8, 8))
    rho[2, 3, 4] = -0.95
    with pytest.raises(ns.DensityFloorError) as info:
        ns.coefficient_h(rho)
    assert info.value.location == (2, 3, 4)
    assert info.value.minimum == pytest.approx(0.05)


def test_equilibrium_sources_vanish(grid):
    src = ns.nonlinear_terms(_zero_state(grid), P3)
    for f in (src.s1, src.s2, src.s3):
        assert np.max(np.abs(f.coeffs)) == 0


def test_single_mode_continuity_source(grid):
    x, _, _ = grid.coordinates()
    eps = 0.1
    zero = np.zeros_like(x)
    st = _state(grid, eps * np.cos(x), np.stack([eps * np.sin(x), zero, zero]), np.zeros((3,) + x.shape))
    src = ns.nonlinear_terms(st, P3)
    # -rho div u - u . grad rho, evaluated pointwise
    oracle = -(eps * np.cos(x)) * (eps * np.cos(x)) - (eps * np.sin(x)) * (-eps * np.sin(x))
    assert np.allclose(src.s1.physical(), oracle, atol=1e-15)
    assert abs(src.s1.mean()) < 1e-18


def test_momentum_source_pointwise_oracle(grid):
    # low modes only; gamma = 2 removes the pressure coefficient, and h is
    # replaced by its value after the same dealiasing the solver applies
    x, y, z = grid.coordinates()
    eps = 0.05
    rho = eps * np.cos(y)
    u = np.stack([eps * np.sin(y), eps * np.cos(z), 0 * x])
    st = _state(grid, rho, u, np.zeros((3,) + x.shape))
    src = ns.nonlinear_terms(st, P2)
    # analytic pieces
    adv = np.stack([u[1] * eps * np.cos(y), u[2] * (-eps * np.sin(z)), 0 * x])
    lap_u = np.stack([-eps * np.sin(y), -eps * np.cos(z), 0 * x])
    visc = 1.0 * lap_u  # div u = 0 for this field
    h = rho / (1 + rho)
    oracle = sf.dealias(sf.forward(grid, -adv - h * visc)).physical()
    assert np.allclose(src.s2.physical(), oracle, atol=1e-14)


def test_director_source_pointwise(grid):
    x, _, _ = grid.coordinates()
    a = 0.2
    # exact unit director rotating in the x1 direction
    d = np.stack([np.sin(a * np.sin(x)), 0 * x, np.cos(a * np.sin(x))])
    n = d - DBAR[:, None, None, None]
    u = np.stack([0.1 + 0 * x, 0 * x, 0 * x])
    st = _state(grid, 0 * x, u, n)
    cfg = ns.StepperConfig(dealias=False)
    src = ns.nonlinear_terms(st, P3, cfg)
    phase = a * np.sin(x)
    dphi = a * np.cos(x)
    grad1 = np.stack([np.cos(phase) * dphi, 0 * x, -np.sin(phase) * dphi])
    oracle = -0.1 * grad1 + (dphi**2) * d
    # the director is not band-limited, so compare at spectral accuracy
    assert np.max(np.abs(src.s3.physical() - oracle)) < 1e-9


def test_director_stress_identity(grid):
    st = ns.initial_data_large(grid, 0.3, (1.0, 3.0), seed=4)
    a = ns.director_stress(st)
    b = ns.director_stress_divergence_form(st)
    assert sf.l2_norm(a - b) < 1e-8 * sf.l2_norm(a)


# ---------------------------------------------------------------------------
# linear part
# ---------------------------------------------------------------------------

def test_phi_integrals_against_expm():
    nu, pp, h = 2.0, 2.0, 0.37
    xi = np.array([0.0, 1e-4, 0.5, 1.0, np.sqrt(2), np.sqrt(2) + 1e-5, 7.0])
    (cE, sE), (c0, q0), (c1, q1), th = ns._fluid_families(xi, h, nu, pp)
    for i, x in enumerate(xi):
        M = np.array([[0, x], [-pp * x, nu * x * x]])
        N = th[i] * np.eye(2) - M
        p0 = quad_vec(lambda s: expm(-s * M), 0, h, epsabs=1e-14, epsrel=1e-13)[0]
        p1 = quad_vec(lambda s: (h - s) * expm(-s * M), 0, h, epsabs=1e-14, epsrel=1e-13)[0]
        for (c, s), ref in (((cE[i], sE[i]), expm(-h * M)), ((c0[i], q0[i]), p0), ((c1[i], q1[i]), p1)):
            assert np.allclose(c * np.eye(2) + s * N, ref, rtol=1e-12, atol=1e-14)


def test_linear_step_matches_symbol_per_mode(grid):
    st = ns.initial_data_large(grid, 0.2, (1.0, 4.0), seed=5)
    t = 0.7
    out = ns.semigroup_state(st, P3, t)
    K = grid.xi_odd
    kmag = np.sqrt(sum(np.broadcast_to(k, grid.spectral_shape) ** 2 for k in K))
    nz = kmag > 0

    def bhat(u):
        return 1j * sum(K[i] * u[i] for i in range(3))[nz] / kmag[nz]

    r = kmag[nz]
    rho1, b1, _ = ls.semigroup_apply(P3, r, t, (st.varrho.coeffs[nz], bhat(st.velocity.coeffs), 0 * r))
    assert np.allclose(out.varrho.coeffs[nz], rho1, atol=1e-12)
    assert np.allclose(bhat(out.velocity.coeffs), b1, atol=1e-12)
    heat = np.exp(-kmag**2 * t)
    assert np.allclose(out.director_pert.coeffs, st.director_pert.coeffs * heat, atol=1e-12)
    # transverse velocity decays with mu |xi|^2
    curl0 = sf.curl(st.velocity).coeffs
    curl1 = sf.curl(out.velocity).coeffs
    assert np.allclose(curl1, curl0 * np.exp(-P3.mu * kmag**2 * t), atol=1e-12)


def test_disabled_sources_give_semigroup(grid):
    st = ns.initial_data_large(grid, 0.2, (1.0, 4.0), seed=6)
    cfg = ns.StepperConfig(dt=0.05, nonlinear=False, renormalize_every=0)
    stepper = ns.Stepper(st, P3, cfg)
    stepper.run(10)
    ref = ns.semigroup_state(st, P3, 0.5)
    assert sf.l2_norm(stepper.state.velocity - ref.velocity) < 1e-12 * sf.l2_norm(ref.velocity)
    assert sf.l2_norm(stepper.state.varrho - ref.varrho) < 1e-12 * sf.l2_norm(ref.varrho)


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def _run(state, params, dt, t_end, scheme="etd2", **kw):
    cfg = ns.StepperConfig(dt=dt, scheme=scheme, renormalize_every=0, **kw)
    s = ns.Stepper(state, params, cfg)
    s.run(int(round(t_end / dt)))
    return s.state


def _distance(a, b):
    return np.sqrt(sum(sf.l2_norm(x - y) ** 2 for x, y in (
        (a.varrho, b.varrho), (a.velocity, b.velocity), (a.director_pert, b.director_pert))))


@pytest.mark.parametrize("scheme", ["etd2", "imex-rk2"])
def test_second_order_in_time(grid, scheme):
    st = ns.initial_data_large(grid, 0.2, (1.0, 3.0), seed=7)
    runs = [_run(st, P3, dt, 0.4, scheme) for dt in (0.04, 0.02, 0.01)]
    ratio = _distance(runs[0], runs[1]) / _distance(runs[1], runs[2])
    assert ratio == pytest.approx(4.0, rel=0.2)


def test_schemes_agree(grid):
    st = ns.initial_data_large(grid, 0.2, (1.0, 3.0), seed=8)
    a = _run(st, P3, 0.005, 0.2, "etd2")
    b = _run(st, P3, 0.005, 0.2, "imex-rk2")
    assert _distance(a, b) < 1e-4 * np.sqrt(sf.l2_norm(a.velocity) ** 2 + sf.l2_norm(a.varrho) ** 2)


def test_mass_is_conserved(grid):
    st = ns.initial_data_large(grid, 0.3, (1.0, 4.0), seed=9)
    m0 = st.varrho.mean()
    out = _run(st, P3, 0.01, 0.5)
    assert abs(out.varrho.mean() - m0) < 1e-14


def test_constant_director_reduction(grid):
    st = ns.initial_data_large(grid, 0.3, (1.0, 4.0), seed=10)
    st = ns.State(st.varrho, st.velocity, sf.Field.zeros(grid, 1), DBAR)
    a = ns.Stepper(st, P3, ns.StepperConfig(dt=0.01))
    b = ns.Stepper(st, P3, ns.StepperConfig(dt=0.01, director_coupling=False))
    for _ in range(5):
        a.step()
        b.step()
        assert np.max(np.abs(a.n)) == 0
        assert sf.l2_norm(a.state.velocity - b.state.velocity) <= 1e-10 * sf.l2_norm(b.state.velocity)
        assert sf.l2_norm(a.state.varrho - b.state.varrho) <= 1e-10 * sf.l2_norm(b.state.varrho)


def test_renormalization_keeps_unit_director(grid):
    st = ns.initial_data_large(grid, 0.5, (1.0, 4.0), seed=11)
    s = ns.Stepper(st, P3, ns.StepperConfig(dt=0.01))
    for _ in range(5):
        out = s.step()
        assert ns.director_drift(out) < 1e-14
    assert 0 < s.last_drift < 1e-3


def test_cfl_and_config_errors(grid):
    st = ns.initial_data_large(grid, 0.5, (1.0, 4.0), seed=12)
    with pytest.raises(ns.CFLError):
        ns.duhamel_step(st, P3, ns.StepperConfig(dt=5.0))
    auto = ns.Stepper(st, P3, ns.StepperConfig(dt=None, cfl_number=0.5))
    auto.step()
    bound = ns.cfl_bound(grid, P3, np.sqrt(np.max(np.sum(st.velocity.physical() ** 2, axis=0))))
    assert auto.last_dt == pytest.approx(0.5 * bound)
    with pytest.raises(ns.SolverError):
        ns.StepperConfig(dt=-1.0)
    with pytest.raises(ns.SolverError):
        ns.StepperConfig(cfl_number=1.5)
    with pytest.raises(ns.SolverError):
        ns.StepperConfig(scheme="rk4")
    with pytest.raises(ns.CFLError):
        ns.duhamel_step(_zero_state(grid), P3, ns.StepperConfig(dt=None))


def test_density_floor_aborts_step(grid):
    x, _, _ = grid.coordinates()
    zero = np.zeros((3,) + x.shape)
    st = _state(grid, -0.95 * (1 + np.cos(x)) / 2, zero, zero)
    with pytest.raises(ns.DensityFloorError):
        ns.duhamel_step(st, P3, ns.StepperConfig(dt=0.01))


def test_state_validation(grid):
    f = sf.Field.zeros(grid)
    v = sf.Field.zeros(grid, 1)
    with pytest.raises(ns.SolverError):
        ns.State(f, v, v, np.array([0.0, 0.0, 2.0]))
    with pytest.raises(ns.SolverError):
        ns.State(v, v, v, DBAR)


# ---------------------------------------------------------------------------
# utilities
# ---------------------------------------------------------------------------

def test_renormalize_director_examples(grid):
    x, _, _ = grid.coordinates()
    phase = 0.3 * np.sin(x)
    d = np.stack([np.sin(phase), 0 * x, np.cos(phase)])
    zero = np.zeros(x.shape)
    st = _state(grid, zero, np.zeros_like(d), d - DBAR[:, None, None, None])
    once = ns.renormalize_director(st)
    twice = ns.renormalize_director(once)
    assert np.allclose(once.director_pert.coeffs, st.director_pert.coeffs, atol=1e-15)
    assert np.allclose(twice.director_pert.coeffs, once.director_pert.coeffs, atol=1e-16)

    big = _state(grid, zero, np.zeros_like(d), np.zeros_like(d) + np.array([0, 0, 0.1])[:, None, None, None])
    fixed = ns.renormalize_director(big)
    assert np.max(np.abs(np.linalg.norm(fixed.director(), axis=0) - 1)) < 1e-14
    assert np.allclose(fixed.director_pert.coeffs, 0, atol=1e-15)

    bad = _state(grid, zero, np.zeros_like(d), np.zeros_like(d) - np.array([0, 0, 0.8])[:, None, None, None])
    with pytest.raises(ns.DirectorBreakdown):
        ns.renormalize_director(bad)


def test_momentum(grid):
    st = ns.initial_data_large(grid, 0.3, (1.0, 4.0), seed=13)
    m = ns.momentum(st)
    rho_max = np.max(np.abs(st.varrho.physical()))
    assert sf.l2_norm(m - st.velocity) <= rho_max * sf.l2_norm(st.velocity) * 1.01
    no_rho = ns.State(sf.Field.zeros(grid), st.velocity, st.director_pert, DBAR)
    assert sf.l2_norm(ns.momentum(no_rho) - st.velocity) == 0
    no_u = ns.State(st.varrho, sf.Field.zeros(grid, 1), st.director_pert, DBAR)
    assert sf.l2_norm(ns.momentum(no_u)) == 0


def test_initial_data_properties(grid):
    zero = ns.initial_data_large(grid, 0.0, (1.0, 4.0), seed=1)
    assert sf.l2_norm(zero.varrho) == 0 and sf.l2_norm(zero.director_pert) == 0
    st = ns.initial_data_large(grid, 0.5, (1.0, 4.0), seed=2)
    assert np.min(1 + st.varrho.physical()) >= 0.5 - 1e-12
    assert np.max(np.abs(st.velocity.physical())) == pytest.approx(0.5, rel=1e-12)
    assert ns.director_drift(st) < 1e-14
    assert st.varrho.mean() == 0 and np.all(st.velocity.mean() == 0)
    again = ns.initial_data_large(grid, 0.5, (1.0, 4.0), seed=2)
    assert np.array_equal(st.velocity.coeffs, again.velocity.coeffs)
    assert np.array_equal(st.director_pert.coeffs, again.director_pert.coeffs)
    with pytest.raises(ns.SolverError):
        ns.initial_data_large(grid, 0.95, (1.0, 4.0), seed=2)
    with pytest.raises(ns.SolverError):
        ns.initial_data_large(grid, 0.1, (9.0, 12.0), seed=2)


def test_energy_functionals(grid):
    cut = sf.CutoffPair.for_params(P3)
    assert ns.energy_xh(_zero_state(grid), P3, 0.125, cut) == (0.0, 0.0)
    st = ns.initial_data_large(grid, 0.3, (1.0, 4.0), seed=14)
    q = ns.second_order_energy(st)
    xh, xc = ns.energy_xh(st, P3, 0.0, cut)
    assert xh == pytest.approx(0.5 * q) and xc == pytest.approx(0.5 * q)
    ratio = ns.energy_equivalence_ratio(st, P3, 0.125, cut)
    assert 0.75 <= ratio <= 1.25
    with pytest.raises(ns.SolverError):
        ns.energy_xh(st, P3, 0.2, cut)


def test_manifest_hash_is_content_addressed():
    a = ns.manifest_text({"mu": 1, "seed": 3})
    b = ns.manifest_text({"seed": 3, "mu": 1})
    c = ns.manifest_text({"seed": 4, "mu": 1})
    assert a == b and a != c
    assert a.splitlines()[-1].startswith("config_hash = ")
