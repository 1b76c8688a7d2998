"""Experiment harness: validation against the fine reference solver,
closed-loop control runs, Monte-Carlo bound estimation and the derived
metrics (mean absolute error, reduction rates, drug exposure)."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import qmc

from .controller import (BoundEstimates, FeasibilityResult, control_law,
                         min_feasible_release, steady_gain)
from .errors import SimulationError
from .integrate import ImexStepper, SystemState, Trajectory, _Recorder, _sample_count, integrate
from .model import WallModel
from .params import LAYER_NAMES, Params, SPECIES
from .wall import layer_slices


class RandomHoldInput:
    """Per-node independent uniform draws, piecewise constant over a hold interval.

    Draw k covers [k * hold, (k + 1) * hold).  Blocks are generated in
    index order on demand, so the map from time to input is a pure
    function of the seed.
    """

    def __init__(self, seed: int, node_count: int, hold: float,
                 low: float = 0.0, high: float = 200.0):
        if high < low or low < 0:
            raise ValueError("amplitude range must satisfy 0 <= low <= high")
        self._rng = np.random.default_rng(seed)
        self._q = node_count
        self._hold = float(hold)
        self._low = float(low)
        self._high = float(high)
        self._blocks: list[np.ndarray] = []

    def __call__(self, t: float) -> np.ndarray:
        k = int(math.floor(t / self._hold))
        while len(self._blocks) <= k:
            self._blocks.append(self._rng.uniform(self._low, self._high, self._q))
        return self._blocks[k]


def zero_input(t: float) -> float:
    return 0.0


def mae(series_a: np.ndarray, series_b: np.ndarray) -> float:
    """Mean absolute difference over all samples and nodes."""
    a = np.asarray(series_a)
    b = np.asarray(series_b)
    if a.shape != b.shape:
        raise ValueError(f"misaligned series: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def auc_hours(times_s: np.ndarray, series: np.ndarray) -> float:
    """Trapezoid integral of a time series with time converted to hours."""
    if len(times_s) != len(series):
        raise ValueError("misaligned series")
    return float(np.trapezoid(series, np.asarray(times_s) / 3600.0))


def reduction_rate(uncontrolled: np.ndarray, controlled: np.ndarray,
                   nodes: slice | np.ndarray) -> tuple[float, int]:
    """Layer-mean percentage reduction of controlled vs uncontrolled.

    Nodes whose uncontrolled value is zero are excluded; the count of
    exclusions is returned alongside the percentage.
    """
    unc = np.asarray(uncontrolled)[nodes]
    con = np.asarray(controlled)[nodes]
    if unc.shape != con.shape:
        raise ValueError("profiles must have equal length")
    ok = unc > 0.0
    skipped = int(np.size(unc) - np.count_nonzero(ok))
    if not np.any(ok):
        return 0.0, skipped
    rates = (unc[ok] - con[ok]) / unc[ok]
    return float(rates.mean() * 100.0), skipped


@dataclass
class ValidationReport:
    trajectory: Trajectory
    reference: Trajectory
    mae_abs: dict
    mae_pct: dict
    signal_max: dict
    config_echo: str
    seed: int

    def metrics_rows(self):
        rows = []
        for sp in SPECIES:
            rows.append((f"mae_{sp}", "all", self.mae_abs[sp],
                         "mg/dL" if sp == "ldl" else "ug/mL"))
            rows.append((f"mae_{sp}_pct", "all", self.mae_pct[sp], "%"))
            rows.append((f"max_{sp}", "all", self.signal_max[sp],
                         "mg/dL" if sp == "ldl" else "ug/mL"))
        return rows


def run_validation(params: Params, seed: int | None = None) -> ValidationReport:
    """Drive the lumped and fine reference models with one random input.

    Both models start from their own drug-free LDL equilibrium with zero
    drug and carrier fields.  Mean absolute errors are taken over all
    coarse nodes and samples, absolute and as a percentage of the
    reference signal's maximum.
    """
    cfg = params.validation
    seed = params.seed if seed is None else seed
    coarse = WallModel.from_params(params)
    fine = coarse.refined(cfg.refine)
    rho = cfg.refine

    input_coarse = RandomHoldInput(seed, coarse.q, cfg.input_hold, 0.0, cfg.input_max)
    fine_of_coarse = np.repeat(np.arange(coarse.q), rho)

    def input_fine(t):
        return input_coarse(t)[fine_of_coarse]

    lam = params.controller.lam
    state_c = SystemState(coarse.ldl_equilibrium(), np.zeros(coarse.q), np.zeros(coarse.q))
    state_f = SystemState(fine.ldl_equilibrium(), np.zeros(fine.q), np.zeros(fine.q))
    try:
        traj_c = integrate(coarse, state_c, input_coarse, cfg.horizon, cfg.sample_dt,
                           dt=cfg.dt, options=params.solver, lam=lam)
        traj_f = integrate(fine, state_f, input_fine, cfg.horizon, cfg.sample_dt,
                           dt=cfg.dt, options=params.solver, lam=lam)
    except SimulationError as exc:
        raise SimulationError(f"validation scenario failed: {exc}") from exc

    idx = coarse.restrict_indices(rho)
    restricted = restrict_trajectory(traj_f, idx, coarse.layers)
    mae_abs, mae_pct, signal_max = {}, {}, {}
    for sp, attr in (("ldl", "y"), ("drug", "z"), ("carrier", "n")):
        a = getattr(traj_c, attr)
        b = getattr(restricted, attr)
        mae_abs[sp] = mae(a, b)
        signal_max[sp] = float(np.abs(b).max())
        mae_pct[sp] = 100.0 * mae_abs[sp] / signal_max[sp] if signal_max[sp] > 0 else 0.0
    return ValidationReport(traj_c, restricted, mae_abs, mae_pct, signal_max,
                            params.echo(), seed)


def restrict_trajectory(traj: Trajectory, idx: np.ndarray, layers: np.ndarray) -> Trajectory:
    return Trajectory(traj.times, traj.y[:, idx], traj.z[:, idx], traj.n[:, idx],
                      traj.u[:, idx], traj.s[:, idx], layers, dict(traj.meta))


@dataclass
class ReachabilityStats:
    """Sampled sliding-condition monitor: sign of ds/dt where s exceeds the band."""

    total: int = 0
    negative: int = 0

    @property
    def fraction(self) -> float:
        return self.negative / self.total if self.total else 1.0


@dataclass
class ControlReport:
    trajectory: Trajectory
    uncontrolled: np.ndarray
    desired: np.ndarray
    reductions: dict
    drug_auc: float
    reachability: ReachabilityStats
    node_range: tuple[int, int]
    config_echo: str
    seed: int

    def final_state(self) -> np.ndarray:
        return self.trajectory.y[-1]

    def metrics_rows(self):
        rows = [("drug_auc", "all", self.drug_auc, "ug*h/mL"),
                ("reachability_fraction", "all", self.reachability.fraction, "-"),
                ("reachability_samples", "all", float(self.reachability.total), "-")]
        final = self.trajectory.y[-1]
        sl = layer_slices_from(self.trajectory.layers)
        for name in LAYER_NAMES:
            rows.append((f"reduction", name, self.reductions[name], "%"))
            rows.append((f"final_mean_ldl", name, float(final[sl[name]].mean()), "mg/dL"))
        return rows


def layer_slices_from(layers: np.ndarray) -> dict[str, slice]:
    out = {}
    for k, name in enumerate(LAYER_NAMES, start=1):
        nodes = np.flatnonzero(layers == k)
        out[name] = slice(int(nodes[0]), int(nodes[-1]) + 1)
    return out


def run_control(params: Params, seed: int | None = None,
                u_max: float | None = None) -> ControlReport:
    """Closed-loop run of the release controller against the plant model.

    The plant is the fine reference model by default; every plant node
    runs its own controller and recorded trajectories are restricted to
    the lumped mesh.  The reachability monitor evaluates ds/dt = f +
    lambda*g - b*u at every recorded sample after the initial state, at
    the plant nodes coincident with the configured feasibility range.
    """
    cfg = params.control
    ctrl = params.controller
    if u_max is not None:
        ctrl = replace(ctrl, u_max=u_max)
    seed = params.seed if seed is None else seed
    coarse = WallModel.from_params(params)
    rho = cfg.refine if cfg.plant == "reference" else 1
    plant = coarse.refined(rho)

    idx = coarse.restrict_indices(rho)
    start, end = params.feasibility.resolve_range(params.geometry)
    monitor_idx = idx[start - 1:end]

    state = SystemState(plant.ldl_equilibrium(), np.zeros(plant.q), np.zeros(plant.q))
    n_samples = _sample_count(cfg.horizon, cfg.sample_dt)
    per_sample = round(cfg.sample_dt / cfg.dt)
    stepper = ImexStepper(plant, cfg.dt, params.solver.theta)
    rec = _Recorder(n_samples, coarse.q, coarse.layers)
    reach = ReachabilityStats()
    rng = np.random.default_rng(seed)
    noisy = ctrl.noise_std_y > 0 or ctrl.noise_std_dydt > 0
    prev_y = state.y.copy()

    def sensed(state, prev_y):
        if ctrl.sensor_mode == "backward":
            dydt = (state.y - prev_y) / ctrl.sensor_dt if state.time > 0 \
                else np.zeros_like(state.y)
        else:
            dydt, _, _ = plant.rhs(state.y, state.z, state.n, 0.0)
        y = state.y
        if noisy:
            y = y + rng.normal(0.0, ctrl.noise_std_y, y.shape)
            dydt = dydt + rng.normal(0.0, ctrl.noise_std_dydt, dydt.shape)
        return y, dydt

    def record(state, u_now):
        g, f, b = plant.io_dynamics(state.y, state.z, state.n)
        s = g + ctrl.lam * state.y
        rec.record(SystemState(state.y[idx], state.z[idx], state.n[idx], state.time),
                   u_now[idx], s[idx])
        if state.time > 0:
            sm = s[monitor_idx]
            dsdt = (f + ctrl.lam * g - b * u_now)[monitor_idx]
            above = sm > ctrl.s_margin
            reach.total += int(above.sum())
            reach.negative += int((dsdt[above] < 0.0).sum())

    y_sensed, dydt = sensed(state, prev_y)
    record(state, control_law(y_sensed, dydt + ctrl.lam * y_sensed, ctrl))
    try:
        for _ in range(n_samples - 1):
            for _ in range(per_sample):
                y_sensed, dydt = sensed(state, prev_y)
                u_now = control_law(y_sensed, dydt + ctrl.lam * y_sensed, ctrl)
                prev_y = state.y.copy()
                state = stepper.step(state, u_now)
            y_sensed, dydt = sensed(state, prev_y)
            record(state, control_law(y_sensed, dydt + ctrl.lam * y_sensed, ctrl))
    except SimulationError as exc:
        raise SimulationError(f"control scenario failed: {exc}") from exc

    meta = {"method": "imex", "dt": cfg.dt, "theta": params.solver.theta,
            "plant": cfg.plant, "refine": rho,
            "clamped_mass": stepper.clamp.total_mass,
            "clamp_worst_fraction": stepper.clamp.worst_fraction,
            "min_before_clamp": stepper.clamp.min_value}
    traj = rec.finish(meta)
    uncontrolled = plant.ldl_equilibrium()[idx]
    desired = plant.ldl_equilibrium(cfg.desired_lumen_ldl)[idx]
    sl = layer_slices(params.geometry)
    reductions = {}
    for name in LAYER_NAMES:
        pct, _ = reduction_rate(uncontrolled, traj.y[-1], sl[name])
        reductions[name] = pct
    drug_auc = auc_hours(traj.times, traj.mean_drug_series())
    return ControlReport(traj, uncontrolled, desired, reductions, drug_auc,
                         reach, (start, end), params.echo(), seed)


def _perturbed_params(params: Params, factors: np.ndarray) -> Params:
    """Scale every (species, layer) diffusivity, leakage and reaction rate plus
    the filtration velocity by one multiplicative factor each."""
    overrides = {}
    k = 0
    for sp in SPECIES:
        tr = params.transport[sp]
        for layer in range(4):
            overrides[f"{sp}.layer{layer + 1}.diffusivity"] = tr.diffusivity[layer] * factors[k]
            k += 1
            leak = (1.0 - tr.reflection[layer]) * factors[k]
            overrides[f"{sp}.layer{layer + 1}.reflection"] = min(1.0, max(0.0, 1.0 - leak))
            k += 1
            overrides[f"{sp}.layer{layer + 1}.reaction_rate"] = tr.reaction_rate[layer] * factors[k]
            k += 1
    overrides["env.filtration_velocity"] = params.env.filtration_velocity * factors[k]
    return params.with_overrides(overrides)


N_PERTURBED = 3 * 4 * 3 + 1


def perturbation_factors(seed: int, samples: int, relative_range: float) -> np.ndarray:
    """Latin-hypercube multiplicative factors in [1 - r, 1 + r]."""
    if relative_range == 0.0:
        return np.ones((samples, N_PERTURBED))
    sampler = qmc.LatinHypercube(d=N_PERTURBED, seed=seed)
    unit = sampler.random(n=samples)
    return 1.0 + relative_range * (2.0 * unit - 1.0)


def _sweep_one(args):
    params, factors, horizon, sample_dt, dt, closed_loop = args
    drawn = _perturbed_params(params, factors)
    model = WallModel.from_params(drawn)
    nominal_model = WallModel.from_params(params)
    y0 = nominal_model.ldl_equilibrium()
    q = model.q
    lam = params.controller.lam

    f_max = np.full(q, -np.inf)
    g_max = np.full(q, -np.inf)
    y_max = np.zeros(q)
    z_max = np.zeros(q)

    def collect(state):
        g, f, _ = model.io_dynamics(state.y, state.z, state.n)
        np.maximum(f_max, f, out=f_max)
        np.maximum(g_max, g, out=g_max)
        np.maximum(y_max, state.y, out=y_max)
        np.maximum(z_max, state.z, out=z_max)

    state = SystemState(y0.copy(), np.zeros(q), np.zeros(q))
    per_sample = round(sample_dt / dt)
    n_samples = _sample_count(horizon, sample_dt)
    stepper = ImexStepper(model, dt, params.solver.theta)
    collect(state)
    ctrl = params.controller
    for _ in range(n_samples - 1):
        for _ in range(per_sample):
            if closed_loop:
                dydt, _, _ = model.rhs(state.y, state.z, state.n, 0.0)
                u = control_law(state.y, dydt + lam * state.y, ctrl)
            else:
                u = 0.0
            state = stepper.step(state, u)
        collect(state)
    np.maximum(y_max, model.ldl_equilibrium(), out=y_max)
    return f_max, g_max, y_max, z_max


def estimate_bounds(params: Params, seed: int | None = None) -> BoundEstimates:
    """Monte-Carlo upper bounds of f, g, y and z over parameter uncertainty.

    Runs open-loop (zero release) simulations of the lumped model from the
    nominal equilibrium under Latin-hypercube perturbed parameters, takes
    per-node maxima over all draws and samples (including each draw's own
    equilibrium profile), inflates them by the safety factor, and derives
    the steady gain from the nominal carrier steady state.  Closed-loop
    runs are added when ``sweep.closed_loop`` is set.
    """
    cfg = params.sweep
    seed = params.seed if seed is None else seed
    factors = perturbation_factors(seed, cfg.samples, cfg.relative_range)
    jobs = [(params, factors[k], cfg.horizon, cfg.sample_dt, cfg.dt, False)
            for k in range(cfg.samples)]
    if cfg.closed_loop:
        jobs += [(params, factors[k], cfg.horizon, cfg.sample_dt, cfg.dt, True)
                 for k in range(cfg.samples)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(job) for job in jobs]

    q = params.geometry.node_count
    f_max = np.full(q, -np.inf)
    g_max = np.full(q, -np.inf)
    y_max = np.zeros(q)
    z_max = np.zeros(q)
    for f_m, g_m, y_m, z_m in results:
        np.maximum(f_max, f_m, out=f_max)
        np.maximum(g_max, g_m, out=g_max)
        np.maximum(y_max, y_m, out=y_max)
        np.maximum(z_max, z_m, out=z_max)

    sf = cfg.safety_factor
    nominal = WallModel.from_params(params)
    n_ss, abscissa = nominal.carrier_steady_state()
    y_bar = sf * y_max
    z_bar = sf * z_max
    b_ss = steady_gain(params.kinetics, params.env, n_ss,
                       params.feasibility.eval_fraction_y * y_bar,
                       params.feasibility.eval_fraction_z * z_bar)
    provenance = {"samples": cfg.samples, "relative_range": cfg.relative_range,
                  "safety_factor": sf, "horizon": cfg.horizon, "seed": seed,
                  "closed_loop": cfg.closed_loop, "carrier_abscissa": abscissa,
                  "raw_y_max": y_max}
    return BoundEstimates(sf * f_max, sf * g_max, y_bar, z_bar, b_ss, provenance)


def run_feasibility(params: Params, seed: int | None = None
                    ) -> tuple[BoundEstimates, FeasibilityResult]:
    bounds = estimate_bounds(params, seed)
    node_range = params.feasibility.resolve_range(params.geometry)
    return bounds, min_feasible_release(bounds, params.controller, node_range)
