"""Registry of the built-in experiments.

Each experiment takes an :class:`~stochheat.config.ExperimentConfig` and
returns an :class:`ExperimentResult` whose ``passed`` flag is its
machine-checked assertion.  Ensembles run in fixed-size path blocks through
:func:`~stochheat.ensemble.run_blocks`, so results do not depend on the
number of workers.
"""

from dataclasses import dataclass, field
import math
from typing import Callable

import numpy as np
from scipy import stats

from .config import build_coefficients
from .ensemble import run_blocks
from .estimators import (band_constant, decay_exponent_fit, kde_density, mc_moment,
                         tail_probability, truncation_change)
from .exceptions import ConfigError, EstimatorError
from .grid import FieldState, indicator, project_initial_condition
from .heat_kernel import dirichlet_kernel, semigroup_apply, squared_kernel_integral
from .malliavin import adjoint_sweep, cauchy_schwarz_bound, energy_ensemble
from .noise import sample_white_noise
from .solver import Coefficients, convolution_coefficients, evolve, evolve_ensemble


@dataclass
class Table:
    columns: list
    rows: list


@dataclass
class ExperimentResult:
    passed: bool
    tables: dict = field(default_factory=dict)     # name -> Table
    metrics: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    defaults: dict
    run: Callable


REGISTRY = {}


def register(name, description, defaults):
    def deco(fn):
        REGISTRY[name] = Experiment(name, description, defaults, fn)
        return fn
    return deco


# -- helpers -----------------------------------------------------------------

def _floats(value):
    if isinstance(value, str):
        return [float(v) for v in value.replace(",", " ").split()]
    return [float(value)]


def _ints(value):
    out = _floats(value)
    if any(v != int(v) for v in out):
        raise ConfigError(f"expected integers, got {value!r}")
    return [int(v) for v in out]


def _initial(knobs, grid, prefix=""):
    kind = knobs.get(prefix + "initial", "sine")
    if kind == "sine":
        u0 = lambda x: np.sin(np.pi * np.asarray(x))  # noqa: E731
    elif kind == "indicator":
        u0 = indicator(float(knobs.get("band_a", 0.25)), float(knobs.get("band_b", 0.75)))
    elif kind == "zero":
        u0 = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    else:
        raise ConfigError(f"unknown initial condition {kind!r} (sine, indicator, zero)")
    scale = float(knobs.get(prefix + "initial_scale", 1.0))
    state = project_initial_condition(u0, grid)
    return FieldState(scale * state.values, 0.0)


def _probe(cfg, grid):
    t = grid.horizon if cfg.probe_t is None else cfg.probe_t
    x = 0.5 if cfg.probe_x is None else cfg.probe_x
    return grid.step_index(t), grid.node_index(x)


def _probe_values(cfg, grid, systems, j, i, block_size=None):
    """``u(t_j, x_i)`` per path for noise-coupled systems; shape ``(paths, len(systems))``."""
    def block(paths):
        _, rec = evolve_ensemble(systems, grid, cfg.seed, paths, record_steps=[j])
        return {"u": np.stack([r[:, 0, i] for r in rec], axis=1)}
    return run_blocks(block, cfg.paths, block_size or cfg.block_size, cfg.workers)["u"]


def _linear_spec(spec, **changes):
    out = dict(spec)
    if "B" in changes:
        out.pop("B_bound", None)
    out.update(changes)
    return out


_STOCHASTIC_GRID = {"n_space": 64, "horizon": 0.05, "mesh_ratio": 0.25}
_PROBE = {"t": 0.05, "x": 0.5}
_PAM = {"kind": "linear", "B": 0.0, "H": 1.0}
_NONLINEAR = {"kind": "semilinear", "b": "0.1*u", "sigma": "1 + 0.5*sin(u)"}


# -- experiments ---------------------------------------------------------------

@register(
    "deterministic_limit",
    "Noise-free scheme against the exact heat flow of sin(pi x); second-order in dx.",
    {"experiment": {"paths": 1}, "grid": {"n_space": 128, "horizon": 0.1},
     "coefficients": {"kind": "deterministic"},
     "knobs": {"initial": "sine", "tolerance": 0.02, "ratio_low": 3.5, "ratio_high": 4.5}},
)
def deterministic_limit(cfg):
    k = cfg.knobs
    coeffs = build_coefficients(cfg.coefficients)
    rows = []
    for n in (cfg.n_space // 2, cfg.n_space):
        grid = cfg.grid(n)
        u0 = _initial(k, grid)
        final = evolve(coeffs, u0, grid).final.values
        exact = semigroup_apply(grid.horizon, u0, grid).values
        if k["initial"] == "sine":
            exact = np.exp(-np.pi ** 2 * grid.horizon) * np.sin(np.pi * grid.nodes)
        err = np.max(np.abs(final[1:-1] - exact[1:-1]) / np.abs(exact[1:-1]))
        rows.append([n, grid.dt, grid.n_steps, float(err)])
    err_coarse, err_fine = rows[0][3], rows[1][3]
    ratio = err_coarse / err_fine if err_fine > 0 else math.inf
    passed = (err_fine <= k["tolerance"]) and (k["ratio_low"] <= ratio <= k["ratio_high"])
    return ExperimentResult(
        passed,
        {"errors": Table(["n_space", "dt", "n_steps", "max_rel_error"], rows)},
        {"max_rel_error": err_fine, "refinement_ratio": ratio},
    )


@register(
    "mean_identity",
    "Ensemble mean of the linear equation equals the heat flow of the initial data.",
    {"experiment": {"paths": 2000}, "grid": dict(_STOCHASTIC_GRID), "probe": dict(_PROBE),
     "coefficients": dict(_PAM),
     "knobs": {"initial": "indicator", "band_a": 0.25, "band_b": 0.75, "n_se": 3.0}},
)
def mean_identity(cfg):
    grid = cfg.grid()
    coeffs = build_coefficients(cfg.coefficients)
    u0 = _initial(cfg.knobs, grid)
    j, i = _probe(cfg, grid)
    u = _probe_values(cfg, grid, [(coeffs, u0)], j, i)[:, 0]
    oracle = semigroup_apply(j * grid.dt, u0, grid).values[i]
    mean = float(u.mean())
    se = float(u.std(ddof=1) / math.sqrt(u.size))
    z = float(abs(mean - oracle) / se)
    passed = z <= cfg.knobs["n_se"]
    rows = [[j * grid.dt, i * grid.dx, mean, se, float(oracle), z, u.size]]
    return ExperimentResult(
        passed,
        {"mean": Table(["t", "x", "mean", "std_error", "oracle", "z", "n_samples"], rows),
         "samples": Table(["path", "u"], [[p, float(v)] for p, v in enumerate(u)])},
        {"z": z, "mean": mean, "oracle": float(oracle)},
    )


def _ordering_violations(cfg, grid, lower, upper, tol):
    """Count nodes and paths where ``u_lower > u_upper + tol max(1, |u_upper|)``."""
    def block(paths):
        node_count = np.zeros(paths.size, dtype=np.int64)
        worst = np.full(paths.size, -np.inf)

        def monitor(j, t, states):
            u1, u2 = states
            excess = u1 - u2 - tol * np.maximum(1.0, np.abs(u2))
            node_count[:] += (excess > 0).sum(axis=1)
            np.maximum(worst, (u1 - u2)[:, 1:-1].max(axis=1), out=worst)

        evolve_ensemble([lower, upper], grid, cfg.seed, paths, monitor=monitor)
        return {"nodes": node_count, "worst": worst}
    return run_blocks(block, cfg.paths, cfg.block_size, cfg.workers)


@register(
    "comparison",
    "Ordered drifts or ordered initial data under shared noise give ordered solutions.",
    {"experiment": {"paths": 500}, "grid": {**_STOCHASTIC_GRID, "horizon": 0.1},
     "coefficients": dict(_PAM),
     "knobs": {"B_low": -1.0, "B_high": 1.0, "tolerance": 1e-8,
               "initial": "indicator", "band_a": 0.25, "band_b": 0.75,
               "low_initial": "indicator", "low_initial_scale": 0.5, "high_initial": "sine"}},
)
def comparison(cfg):
    k = cfg.knobs
    grid = cfg.grid()
    spec = cfg.coefficients
    if spec.get("kind") != "linear":
        raise ConfigError("comparison needs linear coefficients")
    u0 = _initial(k, grid)
    cases = {
        "ordered_drift": (
            (build_coefficients(_linear_spec(spec, B=k["B_low"])), u0),
            (build_coefficients(_linear_spec(spec, B=k["B_high"])), u0)),
        "ordered_initial": (
            (build_coefficients(spec), _initial(k, grid, "low_")),
            (build_coefficients(spec), _initial(k, grid, "high_"))),
    }
    if np.any(cases["ordered_initial"][0][1].values > cases["ordered_initial"][1][1].values):
        raise ConfigError("low_initial must lie below high_initial at every node")
    rows, total = [], 0
    for name, (lower, upper) in cases.items():
        out = _ordering_violations(cfg, grid, lower, upper, k["tolerance"])
        nodes = int(out["nodes"].sum())
        bad_paths = int(np.count_nonzero(out["nodes"]))
        total += nodes
        rows.append([name, cfg.paths, nodes, bad_paths, float(out["worst"].max())])
    return ExperimentResult(
        total == 0,
        {"violations": Table(["case", "n_paths", "node_violations", "path_violations",
                              "max_difference"], rows)},
        {"node_violations": total},
    )


@register(
    "positivity_trend",
    "Fraction of paths with a clearly negative node value shrinks under refinement.",
    {"experiment": {"paths": 2000}, "grid": dict(_STOCHASTIC_GRID),
     "coefficients": {"kind": "linear", "B": 0.0, "H": 3.0},
     "knobs": {"levels": "16 32 64", "initial": "indicator", "band_a": 0.25, "band_b": 0.75,
               "threshold": 1e-6}},
)
def positivity_trend(cfg):
    k = cfg.knobs
    coeffs = build_coefficients(cfg.coefficients)
    rows = []
    for n in _ints(k["levels"]):
        grid = cfg.grid(n)
        u0 = _initial(k, grid)

        def block(paths, grid=grid, u0=u0):
            hit = np.zeros(paths.size, dtype=bool)
            peak = np.full(paths.size, np.max(np.abs(u0.values)))

            def monitor(j, t, states):
                u = states[0]
                np.maximum(peak, np.abs(u).max(axis=1), out=peak)
                hit[:] |= (u < -k["threshold"] * peak[:, None]).any(axis=1)

            evolve_ensemble([(coeffs, u0)], grid, cfg.seed, paths, monitor=monitor)
            return {"hit": hit}

        hit = run_blocks(block, cfg.paths, cfg.block_size, cfg.workers)["hit"]
        rows.append([n, grid.dt, int(hit.sum()), cfg.paths, float(hit.mean())])
    fractions = [r[4] for r in rows]
    passed = all(b < a for a, b in zip(fractions, fractions[1:]))
    return ExperimentResult(
        passed,
        {"negativity": Table(["n_space", "dt", "negative_paths", "n_paths", "fraction"], rows)},
        {"fractions": fractions},
    )


@register(
    "large_deviations",
    "Sup of a stochastic convolution with bounded integrand has Gaussian-type tails.",
    {"experiment": {"paths": 4000}, "grid": {**_STOCHASTIC_GRID, "horizon": 0.25},
     "coefficients": {"kind": "additive", "sigma": 1.0},
     "knobs": {"w_bound": 1.0, "q_low": 0.5, "q_high": 0.99, "n_levels": 25, "min_r2": 0.95}},
)
def large_deviations(cfg):
    k = cfg.knobs
    grid = cfg.grid()
    spec = cfg.coefficients
    if spec.get("kind") != "additive":
        raise ConfigError("large_deviations needs additive coefficients (sigma = w)")
    w = build_coefficients(spec).diffusion
    coeffs = convolution_coefficients(w, float(k["w_bound"]))
    zero = FieldState(np.zeros(grid.n_space + 1), 0.0)

    def block(paths):
        sup = np.zeros(paths.size)

        def monitor(j, t, states):
            np.maximum(sup, np.abs(states[0]).max(axis=1), out=sup)

        evolve_ensemble([(coeffs, zero)], grid, cfg.seed, paths, monitor=monitor)
        return {"sup": sup}

    sup = run_blocks(block, cfg.paths, cfg.block_size, cfg.workers)["sup"]
    qs = np.linspace(k["q_low"], k["q_high"], int(k["n_levels"]))
    lam = np.quantile(sup, qs)
    p_hat = np.array([np.mean(sup > v) for v in lam])
    keep = p_hat > 0
    fit = stats.linregress(lam[keep] ** 2, np.log(p_hat[keep]))
    r2 = fit.rvalue ** 2
    passed = fit.slope < 0 and r2 >= k["min_r2"]
    return ExperimentResult(
        passed,
        {"tail": Table(["quantile", "lambda", "p_hat", "n_samples"],
                       [[float(q), float(v), float(p), sup.size] for q, v, p in zip(qs, lam, p_hat)]),
         "fit": Table(["slope", "intercept", "r_squared"],
                      [[float(fit.slope), float(fit.intercept), float(r2)]])},
        {"slope": float(fit.slope), "r_squared": float(r2)},
    )


@register(
    "tail_decay",
    "Probabilities P(u(T,x) < (c/2)^n) decay faster than exponentially in n.",
    {"experiment": {"paths": 100000}, "grid": dict(_STOCHASTIC_GRID), "probe": dict(_PROBE),
     "coefficients": {"kind": "linear", "B": 0.0, "H": 4.0},
     "knobs": {"initial": "indicator", "band_a": 0.25, "band_b": 0.75, "levels": "1 2 3 4 5",
               "min_slope": 0.9}},
)
def tail_decay(cfg):
    k = cfg.knobs
    grid = cfg.grid()
    coeffs = build_coefficients(cfg.coefficients)
    u0 = _initial(k, grid)
    j, i = _probe(cfg, grid)
    a, b = float(k["band_a"]), float(k["band_b"])
    c, where = band_constant(a, b, j * grid.dt)
    u = _probe_values(cfg, grid, [(coeffs, u0)], j, i)[:, 0]
    levels = _ints(k["levels"])
    reports = [tail_probability(u, (c / 2) ** n, seed=cfg.seed) for n in levels]
    rows = [[n, (c / 2) ** n, r.estimate, r.ci_low, r.ci_high, r.n_samples]
            for n, r in zip(levels, reports)]
    metrics = {"c": c, "negative_fraction": float(np.mean(u < 0))}
    notes = []
    try:
        fit = decay_exponent_fit(levels, [r.estimate for r in reports],
                                 [r.ci_low for r in reports], [r.ci_high for r in reports])
    except EstimatorError as exc:
        passed = False
        notes.append(f"decay fit impossible: {exc}")
    else:
        passed = fit.slope_ >= k["min_slope"]
        metrics.update(slope=fit.slope_, slope_stderr=fit.slope_stderr_,
                       excluded_levels=[int(v) for v in fit.excluded_levels_])
    return ExperimentResult(
        passed,
        {"tail_decay": Table(["n", "threshold", "p_hat", "ci_low", "ci_high", "n_samples"], rows)},
        metrics, notes,
    )


def _moment_row(name, u, p, tau, seed):
    rep = mc_moment(u, p, tau=tau, seed=seed)
    change = truncation_change(rep)
    sens = rep.meta["sensitivity"]
    return rep, change, [name, p, tau, rep.estimate, rep.ci_low, rep.ci_high,
                         sens[tau / 2], sens[tau / 4], change,
                         rep.meta["floored_fraction"], rep.n_samples]


_MOMENT_COLUMNS = ["case", "p", "tau", "estimate", "ci_low", "ci_high", "estimate_tau_2",
                   "estimate_tau_4", "relative_change", "floored_fraction", "n_samples"]


@register(
    "negative_moments",
    "Truncated negative moments are insensitive to the truncation level; "
    "a control with vanishing data is not.",
    {"experiment": {"paths": 10000}, "grid": dict(_STOCHASTIC_GRID), "probe": dict(_PROBE),
     "coefficients": dict(_PAM),
     "knobs": {"initial": "indicator", "band_a": 0.25, "band_b": 0.75, "p": -2.0, "tau": 1e-3,
               "max_change": 0.1, "control_sigma": 1.0}},
)
def negative_moments(cfg):
    k = cfg.knobs
    grid = cfg.grid()
    j, i = _probe(cfg, grid)
    u = _probe_values(cfg, grid, [(build_coefficients(cfg.coefficients), _initial(k, grid))], j, i)
    zero = FieldState(np.zeros(grid.n_space + 1), 0.0)
    control = Coefficients.additive(float(k["control_sigma"]))
    v = _probe_values(cfg, grid, [(control, zero)], j, i)
    _, change, row = _moment_row("solution", u[:, 0], k["p"], k["tau"], cfg.seed)
    _, control_change, control_row = _moment_row("control", v[:, 0], k["p"], k["tau"], cfg.seed)
    passed = change < k["max_change"] and control_change >= k["max_change"]
    return ExperimentResult(
        passed,
        {"moments": Table(_MOMENT_COLUMNS, [row, control_row])},
        {"relative_change": change, "control_relative_change": control_change},
    )


def kill_tolerance(K, H, grid, peak):
    """Pathwise bound on ``|exp(-K t) u - w|`` for the two explicit schemes.

    One step of the transformed scheme differs from the scheme with drift
    ``-K w`` by ``(exp(-K dt) - 1)(w_next - w) + (exp(-K dt) - 1 + K dt) w``.
    Summed over the run, the heat part telescopes to at most ``2 peak``, the
    noise part is a martingale with standard deviation ``H peak sqrt(T/dx)``
    (taken at six deviations), and the last term adds ``K T peak / 2``; all
    are multiplied by ``K dt``.
    """
    T = grid.horizon
    return K * grid.dt * peak * (2.0 + 0.5 * K * T + 6.0 * H * math.sqrt(T / grid.dx))


@register(
    "kill_transform",
    "Scaling by exp(-Kt) maps the linear equation onto the one with extra killing -K w.",
    {"experiment": {"paths": 10000}, "grid": dict(_STOCHASTIC_GRID), "probe": dict(_PROBE),
     "coefficients": dict(_PAM),
     "knobs": {"K": 1.0, "p": -2.0, "tau": 1e-3, "initial": "indicator", "band_a": 0.25,
               "band_b": 0.75, "pathwise_paths": 200}},
)
def kill_transform(cfg):
    k = cfg.knobs
    grid = cfg.grid()
    spec = cfg.coefficients
    if spec.get("kind") != "linear":
        raise ConfigError("kill_transform needs linear coefficients")
    K = float(k["K"])
    u_coeffs = build_coefficients(spec)
    B = spec.get("B", 0.0)
    w_coeffs = build_coefficients(_linear_spec(
        spec, B=(B - K) if isinstance(B, (int, float)) else f"({B}) - {K}",
        **({} if isinstance(B, (int, float)) else {"B_bound": float(spec["B_bound"]) + K})))
    u0 = _initial(k, grid)
    j, i = _probe(cfg, grid)
    H_bound = u_coeffs.diffusion_bound or 0.0
    n_check = min(int(k["pathwise_paths"]), cfg.paths)

    def block(paths):
        worst = np.zeros(paths.size)
        peak = np.zeros(paths.size)
        checked = paths < n_check

        def monitor(step, t, states):
            u, w = states
            np.maximum(peak, np.abs(u).max(axis=1), out=peak)
            np.maximum(worst, np.abs(np.exp(-K * t) * u - w).max(axis=1), out=worst)

        _, rec = evolve_ensemble([(u_coeffs, u0), (w_coeffs, u0)], grid, cfg.seed, paths,
                                 monitor=monitor, record_steps=[j])
        tol = kill_tolerance(K, H_bound, grid, peak)
        return {"u": rec[0][:, 0, i], "w": rec[1][:, 0, i], "worst": worst, "tol": tol,
                "checked": checked}

    out = run_blocks(block, cfg.paths, cfg.block_size, cfg.workers)
    checked = out["checked"]
    pathwise_ok = bool(np.all(out["worst"][checked] <= out["tol"][checked]))
    t = j * grid.dt
    p, tau = k["p"], k["tau"]
    ru = mc_moment(out["u"], p, tau=tau, seed=cfg.seed)
    rw = mc_moment(out["w"], p, tau=tau * math.exp(-K * t), seed=cfg.seed)
    factor = math.exp(-K * t * p)
    predicted = factor * ru.estimate
    gap = abs(rw.estimate - predicted)
    allowed = rw.half_width + factor * ru.half_width
    moment_ok = gap <= allowed
    return ExperimentResult(
        pathwise_ok and moment_ok,
        {"pathwise": Table(["path", "max_abs_difference", "tolerance"],
                           [[int(m), float(a), float(b)] for m, (a, b) in
                            enumerate(zip(out["worst"][checked], out["tol"][checked]))]),
         "moments": Table(["quantity", "estimate", "ci_low", "ci_high", "n_samples"],
                          [["E[u^p]", ru.estimate, ru.ci_low, ru.ci_high, ru.n_samples],
                           ["E[w^p]", rw.estimate, rw.ci_low, rw.ci_high, rw.n_samples],
                           ["exp(-Ktp) E[u^p]", predicted, factor * ru.ci_low,
                            factor * ru.ci_high, ru.n_samples]])},
        {"pathwise_ok": pathwise_ok, "moment_gap": gap, "moment_allowed": allowed,
         "max_pathwise_ratio": float(np.max(out["worst"][checked] / out["tol"][checked]))},
    )


@register(
    "malliavin_additive",
    "With additive noise the Malliavin derivative is the heat kernel and the energy "
    "is its squared integral.",
    {"experiment": {"paths": 1}, "grid": dict(_STOCHASTIC_GRID), "probe": dict(_PROBE),
     "coefficients": {"kind": "additive", "sigma": 1.0},
     "knobs": {"initial": "zero", "min_lag": 10.0, "d_tolerance": 0.01, "c_tolerance": 0.05}},
)
def malliavin_additive(cfg):
    k = cfg.knobs
    grid = cfg.grid()
    spec = cfg.coefficients
    if spec.get("kind") != "additive" or not isinstance(spec.get("sigma", 1.0), (int, float)):
        raise ConfigError("malliavin_additive needs additive noise with a constant sigma")
    sigma = float(spec.get("sigma", 1.0))
    coeffs = build_coefficients(spec)
    j, i = _probe(cfg, grid)
    t, x = j * grid.dt, i * grid.dx
    noise = sample_white_noise(grid, cfg.seed, 0)
    traj = evolve(coeffs, _initial(k, grid), grid, noise)
    states = traj.values[None]
    lam = adjoint_sweep(states, j, i, coeffs, grid, lambda s: noise.normals[s][None])[0]
    D = lam * sigma / grid.dx
    xi = grid.nodes[1:-1]
    rows, worst = [], 0.0
    for th in range(j):
        lag = t - th * grid.dt
        if lag < k["min_lag"] * grid.dx ** 2:
            continue
        G = sigma * dirichlet_kernel(lag, x, xi)
        err = float(np.max(np.abs(D[th, 1:-1] - G)) / np.max(np.abs(G)))
        worst = max(worst, err)
        rows.append([th * grid.dt, lag, err])
    profile = grid.dx * (D[:, 1:-1] ** 2).sum(axis=1)
    h = grid.dt
    C = float(h * (profile.sum() - 0.5 * (profile[0] + profile[-1])))
    oracle, tail = squared_kernel_integral(t, x)
    oracle *= sigma ** 2
    c_err = abs(C - oracle) / oracle
    passed = worst <= k["d_tolerance"] and c_err <= k["c_tolerance"]
    return ExperimentResult(
        passed,
        {"derivative": Table(["theta", "lag", "rel_sup_error"], rows),
         "energy": Table(["t", "x", "energy", "oracle", "rel_error"],
                         [[t, x, C, oracle, c_err]])},
        {"max_rel_sup_error": worst, "energy_rel_error": c_err},
    )


def _energy_samples(cfg, grid, coeffs, u0, j, i, band, stride):
    # records and adjoint fields are (paths, steps, nodes); keep blocks small
    block_size = min(cfg.block_size, 256)

    def block(paths):
        eb = energy_ensemble(coeffs, u0, grid, cfg.seed, paths, j, i, band, stride)
        return {"C": eb.energy, "error": eb.error, "Y": eb.integrated, "u": eb.u,
                "weights": np.tile(eb.weights, (paths.size, 1)),
                "theta": np.tile(eb.theta, (paths.size, 1))}
    return run_blocks(block, cfg.paths, block_size, cfg.workers)


@register(
    "malliavin_energy",
    "Malliavin energy in a nonlinear case: positive, with stable inverse moment, above "
    "the Cauchy-Schwarz bound.",
    {"experiment": {"paths": 4000}, "grid": dict(_STOCHASTIC_GRID), "probe": dict(_PROBE),
     "coefficients": dict(_NONLINEAR),
     "knobs": {"initial": "sine", "band_a": 0.25, "band_b": 0.75, "stride": 1,
               "tau": 1e-6, "max_change": 0.2}},
)
def malliavin_energy(cfg):
    k = cfg.knobs
    grid = cfg.grid()
    coeffs = build_coefficients(cfg.coefficients)
    j, i = _probe(cfg, grid)
    band = (float(k["band_a"]), float(k["band_b"]))
    out = _energy_samples(cfg, grid, coeffs, _initial(k, grid), j, i, band, int(k["stride"]))
    C, Y, weights, theta = out["C"], out["Y"], out["weights"][0], out["theta"][0]
    if cfg.paths < 2:
        raise ConfigError("malliavin_energy needs at least two paths")
    half = cfg.paths // 2
    r_half = mc_moment(C[:half], -1, tau=k["tau"], seed=cfg.seed)
    r_full = mc_moment(C, -1, tau=k["tau"], seed=cfg.seed)
    change = abs(r_full.estimate - r_half.estimate) / r_half.estimate
    lower = cauchy_schwarz_bound(Y, weights, band)
    slack = 1.0 + grid.dx / (band[1] - band[0])
    cs_ok = C * slack >= lower
    positive = bool(np.all(C > 0))
    passed = positive and change <= k["max_change"] and bool(cs_ok.all())
    continuity = ((Y - Y[:, :1]) ** 2).mean(axis=0)
    return ExperimentResult(
        passed,
        {"energy": Table(["path", "energy", "quadrature_error", "cs_bound", "u"],
                         [[p, float(c), float(e), float(b), float(v)] for p, (c, e, b, v) in
                          enumerate(zip(C, out["error"], lower, out["u"]))]),
         "inverse_moment": Table(["n_samples", "estimate", "ci_low", "ci_high"],
                                 [[r.n_samples, r.estimate, r.ci_low, r.ci_high]
                                  for r in (r_half, r_full)]),
         "continuity": Table(["theta", "mean_sq_increment"],
                             [[float(a), float(b)] for a, b in zip(theta, continuity)])},
        {"min_energy": float(C.min()), "inverse_moment_change": change,
         "cs_violations": int((~cs_ok).sum())},
    )


@register(
    "density_diagnostic",
    "Qualitative: the kernel density estimate of u(T,x) is positive and single-peaked "
    "at two bandwidths.",
    {"experiment": {"paths": 4000}, "grid": dict(_STOCHASTIC_GRID), "probe": dict(_PROBE),
     "coefficients": dict(_NONLINEAR),
     "knobs": {"initial": "sine", "rel_height": 0.05, "significance": 2.0, "n_grid": 512}},
)
def density_diagnostic(cfg):
    k = cfg.knobs
    grid = cfg.grid()
    j, i = _probe(cfg, grid)
    u = _probe_values(cfg, grid, [(build_coefficients(cfg.coefficients), _initial(k, grid))],
                      j, i)[:, 0]
    base = kde_density(u, n_grid=int(k["n_grid"]))
    q = np.quantile(u, [0.01, 0.99])
    rows, ok = [], True
    for label, h in (("h", base.bandwidth), ("h/2", base.bandwidth / 2)):
        curve = kde_density(u, bandwidth=h, grid=base.grid)
        inner = (curve.grid >= q[0]) & (curve.grid <= q[1])
        positive = bool(np.all(curve.density[inner] > 0))
        modes = curve.n_modes(k["rel_height"], k["significance"])
        ok &= positive and modes == 1
        rows.append([label, h, curve.integral, float(curve.density[inner].min()), modes])
    return ExperimentResult(
        ok,
        {"density": Table(["bandwidth_label", "bandwidth", "integral", "min_density_inner",
                           "n_modes"], rows),
         "curve": Table(["u", "density"],
                        [[float(a), float(b)] for a, b in zip(base.grid, base.density)])},
        {"n_samples": int(u.size)},
        ["qualitative diagnostic: a finite-sample density estimate cannot verify smoothness"],
    )
