"""Experiment driver: decay-rate series, exponent fits, verdicts and the CLI.

Subcommands of ``liqdecay``:

    linear-decay  radial quadrature of the linear flow, band scan, reports
    simulate      box run of the nonlinear solver with diagnostics
    fit           exponent fits for every series in a CSV
    verify        fits plus two-sided checks for the required series
"""

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import linear_symbol as ls
from . import nonlinear_solver as ns
from . import radial_quadrature as rq
from . import spectral_field as sf
from .timeseries import TimeSeries, SeriesError, fmt, read_series_csv, write_series_csv

log = logging.getLogger("liqdecay")

REPORT_COLUMNS = ("label", "k", "fitted", "theoretical", "r2", "c_lower", "c_upper", "verdict")
BAND_COLUMNS = ("xi_mag", "re_beta_plus", "im_beta_plus", "re_beta_minus",
                "im_beta_minus", "beta_heat", "lc_ok")
DIAG_COLUMNS = ("t", "mass", "drift_before", "drift_after", "min_density",
                "h1", "xh", "xh_cancelled", "xh_ratio")
MODES = ("linear-decay", "simulate", "fit", "verify")
LINEAR_COMPONENTS = ("rho", "b", "w", "pu")
FAILED_MARKER = "_FAILED"


class LabError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# fitting and verdicts
# ---------------------------------------------------------------------------

def fit_exponent(series, window=None):
    """Least-squares slope of log(value) against log(1 + t).

    Returns (alpha, r_squared) with alpha the positive decay exponent.
    """
    if window is None:
        t, v = series.times, series.values
    else:
        t, v = series.window(*window)
    if t.size < 8:
        raise LabError(f"{series.label} k={series.k}: need >= 8 samples in window, got {t.size}")
    if np.any(v <= 0):
        raise LabError(f"{series.label} k={series.k}: values must be positive")
    x = np.log1p(t)
    y = np.log(v)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = np.dot(xc, xc)
    slope = np.dot(xc, yc) / sxx
    ss_tot = np.dot(yc, yc)
    resid = yc - slope * xc
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - np.dot(resid, resid) / ss_tot)
    return float(-slope), float(r2)


def theoretical_exponent(k):
    return 0.75 + 0.5 * k


@dataclass(frozen=True)
class DecayReport:
    label: str
    k: int
    fitted_exponent: float
    theoretical_exponent: float
    r_squared: float
    c_lower: float
    c_upper: float
    verdict: str
    window: tuple

    @property
    def passed(self):
        return self.verdict == "pass"

    def row(self):
        return (self.label, self.k, fmt(self.fitted_exponent), fmt(self.theoretical_exponent),
                fmt(self.r_squared), fmt(self.c_lower), fmt(self.c_upper), self.verdict)


def report_for(series, window, tol=0.05, ratio_bound=3.0):
    theo = theoretical_exponent(series.k)
    alpha, r2 = fit_exponent(series, window)
    two = rq.two_sided_rate_check(series, theo, window, ratio_bound)
    ok = abs(alpha - theo) <= tol and two.two_sided
    return DecayReport(series.label, int(series.k), alpha, theo, r2, two.c_lower,
                       two.c_upper, "pass" if ok else "fail", tuple(window))


def verify_rates(series, required=None, window=(1e2, 1e4), tol=0.05, ratio_bound=3.0):
    """Reports for ``series`` (dict keyed by (component, k)), in stable order.

    ``required`` lists (component, k) keys that must be present; all missing
    labels are named in the error.
    """
    if required is not None:
        missing = [key for key in required if key not in series]
        if missing:
            names = ", ".join(f"{c} k={k}" for c, k in missing)
            raise LabError(f"missing series: {names}")
        keys = list(required)
    else:
        keys = sorted(series)
    return [report_for(series[key], window, tol, ratio_bound) for key in keys]


def write_reports_csv(path, reports):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.row())


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def band_scan(params, xi=None):
    """Rows of eigenvalue data across frequencies, double root included."""
    if xi is None:
        xi = np.geomspace(1e-3, 1e2, 161)
        xi = np.unique(np.append(xi, ls.discriminant_root(params)))
    bp, bm, bh = ls.eigenvalues(params, xi)
    lc = ls.lienard_chipart(params, xi)
    return [(x, p.real, p.imag, m.real, m.imag, h, "true" if ok else "false")
            for x, p, m, h, ok in zip(xi, bp, bm, bh, lc)]


def linear_profiles(c0):
    rho, b, w = rq.theorem13_profile(c0, 1.0, 2.0)
    pu = rq.plateau_profile("pu", c0, 1.0, 2.0)
    return (rho, b, w, pu)


def linear_series(params, c0=1.0, window=(1e2, 1e4), per_decade=16, spec=None, ks=(0, 1, 2)):
    profiles = linear_profiles(c0)
    times = rq.geometric_times(window[0], window[1], per_decade)
    out = {}
    for comp in LINEAR_COMPONENTS:
        for k in ks:
            vals = rq.norm_series(profiles, params, k, times, spec, component=comp)
            out[(comp, k)] = TimeSeries(times, vals, comp, k, "linear")
    return out


@dataclass
class SimulationResult:
    series: dict
    diagnostics: list
    final_state: object
    first_below: float = None


def _norm_rows(state):
    rows = []
    for k in (0, 1, 2):
        rows.append(("rho", k, sf.sobolev_seminorm(state.varrho, k)))
        rows.append(("u", k, sf.sobolev_seminorm(state.velocity, k)))
        rows.append(("grad_n", k, sf.sobolev_seminorm(state.director_pert, k + 1)))
    return rows


def simulate(params, grid, amplitude, seed, t_end=1.0, dt=0.01, band=None, scheme="etd2",
             sample_every=10, delta=0.125, h1_threshold=None, snapshot_dir=None,
             snapshot_every=0, renormalize_every=1):
    """Box run; returns norm series (t > 0 samples) and per-sample diagnostics."""
    if band is None:
        band = (grid.scale, grid.scale * grid.n / 6.0)
    state = ns.initial_data_large(grid, amplitude, band, seed)
    cfg = ns.StepperConfig(dt=dt, scheme=scheme, renormalize_every=renormalize_every)
    stepper = ns.Stepper(state, params, cfg)
    cut = sf.CutoffPair.for_params(params)
    steps = int(round(t_end / dt))
    mass0 = state.varrho.mean()
    norms = {}
    diags = []
    first = [None]

    def observe(s):
        xh, xc = ns.energy_xh(s, params, delta, cut)
        q = ns.second_order_energy(s)
        h1 = ns.h1_norm_triple(s)
        if h1_threshold is not None and first[0] is None and h1 < h1_threshold:
            first[0] = s.time
        diags.append((s.time, s.varrho.mean() - mass0, stepper.last_drift, ns.director_drift(s),
                      1.0 + float(s.varrho.physical().min()), h1, xh, xc,
                      xc / (0.5 * q) if q > 0 else 1.0))
        for comp, k, v in _norm_rows(s):
            norms.setdefault((comp, k), []).append((s.time, v))
        if snapshot_dir and snapshot_every and stepper.steps_taken % snapshot_every == 0:
            tag = f"step_{stepper.steps_taken:06d}"
            sf.save_snapshot(os.path.join(snapshot_dir, f"{tag}_varrho.lqf"), s.varrho)
            sf.save_snapshot(os.path.join(snapshot_dir, f"{tag}_velocity.lqf"), s.velocity)
            sf.save_snapshot(os.path.join(snapshot_dir, f"{tag}_director.lqf"), s.director_pert)

    final = stepper.run(steps, observe, sample_every)
    series = {}
    for key, pairs in norms.items():
        t = np.array([p[0] for p in pairs])
        v = np.array([p[1] for p in pairs])
        series[key] = TimeSeries(t, v, key[0], key[1], "box")
    return SimulationResult(series, diags, final, first[0])


def linear_consistency(params, grid, amplitude, seed, t_end=1.0, dt=0.01, band=None):
    """Relative gap between a small-data nonlinear run and the exact semigroup."""
    if band is None:
        band = (grid.scale, grid.scale * grid.n / 6.0)
    s0 = ns.initial_data_large(grid, amplitude, band, seed)
    cfg = ns.StepperConfig(dt=dt, renormalize_every=0)
    st = ns.Stepper(s0, params, cfg)
    st.run(int(round(t_end / dt)))
    exact = ns.semigroup_state(s0, params, st.time)
    num = 0.0
    den = 0.0
    for a, b in ((st.rho, exact.varrho), (st.u, exact.velocity), (st.n, exact.director_pert)):
        diff = sf.Field(grid, a) - b
        num += sf.l2_norm(diff) ** 2
        den += sf.l2_norm(b) ** 2
    return float(np.sqrt(num / den)) if den > 0 else 0.0


# ---------------------------------------------------------------------------
# configuration and run
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    mode: str
    params: ls.FluidParams = dc_field(default_factory=ls.FluidParams)
    grid: tuple = (32, 2 * np.pi)
    quadrature: rq.QuadratureSpec = dc_field(default_factory=rq.QuadratureSpec)
    window: tuple = None
    tol: float = 0.05
    ratio_bound: float = 3.0
    seed: int = 0
    out: str = "liqdecay_out"
    c0: float = 1.0
    t_decades: tuple = (2.0, 4.0)
    amplitude: float = 0.1
    t_end: float = 1.0
    dt: float = 0.01
    scheme: str = "etd2"
    sample_every: int = 10
    snapshot_every: int = 0
    h1_threshold: float = None
    in_path: str = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise LabError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.window is not None:
            t1, t2 = self.window
            if not 0 <= t1 < t2:
                raise LabError(f"window needs 0 <= t1 < t2, got {self.window}")
        if not self.tol > 0 or not self.ratio_bound >= 1:
            raise LabError("tol must be positive and ratio bound at least 1")

    def effective_window(self):
        if self.window is not None:
            return tuple(self.window)
        if self.mode == "simulate":
            return (0.0, 50.0)
        return (10.0 ** self.t_decades[0], 10.0 ** self.t_decades[1])


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) if isinstance(x, (float, np.floating)) else x for x in row])


def _manifest_entries(cfg):
    p = cfg.params
    return {
        "mode": cfg.mode, "mu": fmt(p.mu), "lambda": fmt(p.lambda_v), "gamma": fmt(p.gamma_a),
        "n": cfg.grid[0], "box": fmt(cfg.grid[1]), "amplitude": fmt(cfg.amplitude),
        "seed": cfg.seed, "scheme": cfg.scheme, "dt": fmt(cfg.dt), "t_end": fmt(cfg.t_end),
        "c0": fmt(cfg.c0), "t_decades": f"{fmt(cfg.t_decades[0])}:{fmt(cfg.t_decades[1])}",
    }


def _run_linear(cfg):
    window = cfg.effective_window()
    _write_rows(os.path.join(cfg.out, "band_scan.csv"), BAND_COLUMNS, band_scan(cfg.params))
    series = linear_series(cfg.params, cfg.c0, window, spec=cfg.quadrature)
    write_series_csv(os.path.join(cfg.out, "series.csv"), series.values())
    reports = verify_rates(series, None, window, cfg.tol, cfg.ratio_bound)
    write_reports_csv(os.path.join(cfg.out, "report.csv"), reports)
    with open(os.path.join(cfg.out, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(ns.manifest_text(_manifest_entries(cfg)))
    return reports


def _run_simulate(cfg):
    n, box = cfg.grid
    grid = sf.make_grid(n, box)
    snap = os.path.join(cfg.out, "snapshots") if cfg.snapshot_every else None
    if snap:
        os.makedirs(snap, exist_ok=True)
    res = simulate(cfg.params, grid, cfg.amplitude, cfg.seed, cfg.t_end, cfg.dt,
                   scheme=cfg.scheme, sample_every=cfg.sample_every,
                   h1_threshold=cfg.h1_threshold, snapshot_dir=snap,
                   snapshot_every=cfg.snapshot_every)
    write_series_csv(os.path.join(cfg.out, "series.csv"), res.series.values())
    _write_rows(os.path.join(cfg.out, "diagnostics.csv"), DIAG_COLUMNS, res.diagnostics)
    entries = _manifest_entries(cfg)
    # algebraic decay on the torus saturates near t ~ (L / 2 pi)^2
    entries["finite_size_time"] = fmt((box / (2 * np.pi)) ** 2)
    entries["first_h1_below_threshold"] = "none" if res.first_below is None else fmt(res.first_below)
    if cfg.amplitude <= 1e-4:
        gap = linear_consistency(cfg.params, grid, cfg.amplitude, cfg.seed, cfg.t_end, cfg.dt)
        entries["linear_consistency_gap"] = fmt(gap)
    with open(os.path.join(cfg.out, "manifest.txt"), "w", encoding="utf-8") as fh:
        fh.write(ns.manifest_text(entries))
    return []


def _load_series(cfg):
    if not cfg.in_path:
        raise LabError("--in is required for fit and verify")
    if not os.path.exists(cfg.in_path):
        raise LabError(f"input {cfg.in_path} not found; missing series: "
                       + ", ".join(f"{c} k={k}" for c in ("rho", "b", "w") for k in (0, 1, 2)))
    return read_series_csv(cfg.in_path)


def _run_fit(cfg):
    series = _load_series(cfg)
    reports = verify_rates(series, None, cfg.effective_window(), cfg.tol, cfg.ratio_bound)
    write_reports_csv(os.path.join(cfg.out, "report.csv"), reports)
    return []  # fits are informational


def _run_verify(cfg):
    series = _load_series(cfg)
    required = [(c, k) for c in ("rho", "b", "w") for k in (0, 1, 2)]
    extra = sorted(key for key in series if key not in required)
    reports = verify_rates(series, required + extra, cfg.effective_window(),
                           cfg.tol, cfg.ratio_bound)
    write_reports_csv(os.path.join(cfg.out, "report.csv"), reports)
    return reports


def run(cfg):
    """Execute one mode; returns 0 on success, 2 on a failing verdict, 1 on error."""
    os.makedirs(cfg.out, exist_ok=True)
    marker = os.path.join(cfg.out, FAILED_MARKER)
    if os.path.exists(marker):
        os.remove(marker)
    handler = {"linear-decay": _run_linear, "simulate": _run_simulate,
               "fit": _run_fit, "verify": _run_verify}[cfg.mode]
    try:
        reports = handler(cfg)
    except (LabError, SeriesError, ValueError, RuntimeError, OSError) as exc:
        with open(marker, "w", encoding="utf-8") as fh:
            fh.write(f"{type(exc).__name__}: {exc}\n")
        print(f"liqdecay {cfg.mode}: error: {exc}", file=sys.stderr)
        return 1
    for r in reports:
        print(f"{r.label} k={r.k}: fitted {r.fitted_exponent:.4f} vs {r.theoretical_exponent:.2f}"
              f" ratio {r.c_upper / r.c_lower:.3f} -> {r.verdict}")
    return 0 if all(r.passed for r in reports) else 2


# ---------------------------------------------------------------------------
# command line
# ---------------------------------------------------------------------------

DEFAULTS = {
    "mu": 1.0, "lambda": 0.0, "gamma": 2.0, "c0": 1.0, "n": 32, "box": 2 * np.pi,
    "amplitude": 0.1, "seed": 0, "out": "liqdecay_out", "window": None, "tol": 0.05,
    "ratio-bound": 3.0, "t-decades": "2:4", "t-end": 1.0, "dt": 0.01, "scheme": "etd2",
    "sample-every": 10, "snapshot-every": 0, "h1-threshold": None, "in": None,
}


def _pair(text):
    try:
        a, b = (float(x) for x in str(text).split(":"))
    except ValueError:
        raise LabError(f"expected 'a:b', got {text!r}") from None
    return a, b


def read_config_file(path):
    """``key = value`` lines; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise LabError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-").replace("_", "-")
            if key not in DEFAULTS:
                raise LabError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


HELP = {
    "mu": "shear viscosity", "lambda": "bulk viscosity coefficient", "gamma": "pressure exponent",
    "c0": "low-frequency amplitude of the lower-bound profile", "box": "periodic box length",
    "amplitude": "initial perturbation size (simulate)", "tol": "exponent tolerance",
    "ratio-bound": "largest allowed c_upper/c_lower", "t-end": "final time (simulate)",
    "dt": "fixed time step (checked against the CFL bound)", "h1-threshold": "report first time H1 drops below",
    "n": "grid points per axis", "seed": "initial-data seed",
    "sample-every": "steps between norm samples", "snapshot-every": "steps between snapshots; 0 = none",
    "out": "output directory", "window": "fit window t1:t2", "t-decades": "linear window as decades a:b",
    "scheme": "etd2 or imex-rk2", "in": "series.csv to read (fit, verify)",
}

MODE_HELP = {
    "linear-decay": "exact linear norm series by radial quadrature",
    "simulate": "nonlinear run on the periodic box",
    "fit": "fit decay exponents to an existing series.csv",
    "verify": "check two-sided rates of an existing series.csv",
}


def build_parser():
    p = argparse.ArgumentParser(prog="liqdecay", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="mode", required=True)
    for mode in MODES:
        s = sub.add_parser(mode, help=MODE_HELP[mode], description=MODE_HELP[mode])
        s.add_argument("--config", help="key = value file; flags override it")

        def opt(key, kind=None):
            default = DEFAULTS[key]
            text = HELP[key] if default is None else f"{HELP[key]} (default {default:g})" \
                if isinstance(default, float) else f"{HELP[key]} (default {default})"
            s.add_argument(f"--{key}", type=kind, help=text)

        for key in ("mu", "lambda", "gamma", "c0", "box", "amplitude", "tol", "ratio-bound",
                    "t-end", "dt", "h1-threshold"):
            opt(key, float)
        for key in ("n", "seed", "sample-every", "snapshot-every"):
            opt(key, int)
        for key in ("out", "window", "t-decades", "scheme", "in"):
            opt(key)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(ns_args):
    given = {k.replace("_", "-"): v for k, v in vars(ns_args).items()}
    merged = dict(DEFAULTS)
    if given.get("config"):
        merged.update(read_config_file(given["config"]))
    for key in DEFAULTS:
        if given.get(key) is not None:
            merged[key] = given[key]
    f = lambda key: None if merged[key] is None else float(merged[key])
    params = ls.FluidParams(f("mu"), f("lambda"), f("gamma"))
    window = None if merged["window"] is None else _pair(merged["window"])
    return RunConfig(
        mode=ns_args.mode, params=params, grid=(int(merged["n"]), f("box")),
        window=window, tol=f("tol"), ratio_bound=f("ratio-bound"), seed=int(merged["seed"]),
        out=str(merged["out"]), c0=f("c0"), t_decades=_pair(merged["t-decades"]),
        amplitude=f("amplitude"), t_end=f("t-end"), dt=f("dt"), scheme=str(merged["scheme"]),
        sample_every=int(merged["sample-every"]), snapshot_every=int(merged["snapshot-every"]),
        h1_threshold=f("h1-threshold"), in_path=merged["in"],
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except (LabError, ValueError, OSError) as exc:
        print(f"liqdecay: error: {exc}", file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
