"""Per-node sliding release controller.

The controller works on the sliding value s = dy/dt + lambda * y.  Output
is a biased proportional law with a proportional band of width s_margin
that removes chattering around s = 0:

    u = (1 - y/160) * u_max              if s > s_margin and y < 160
    u = (1 - y/160) * (s/s_margin) * u_max   if 0 <= s <= s_margin and y < 160
    u = 0                                otherwise

The output is clipped to [0, u_max] so the law is total over all real
(y, s) pairs.  Feasibility of a release capacity u_max over a node range
is checked against simulated upper bounds of the drift terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinetics import ReactionKinetics
from .params import ControllerParams, EnvironmentParams


def sliding_surface(y, dydt, lam: float):
    """s = dy/dt + lam * y."""
    return np.asarray(dydt, dtype=float) + lam * np.asarray(y, dtype=float)


def control_law(y, s, params: ControllerParams):
    """Release rate for each node given LDL level y and sliding value s."""
    y = np.asarray(y, dtype=float)
    s = np.asarray(s, dtype=float)
    cutoff = params.y_cutoff
    scale = (1.0 - y / cutoff) * params.u_max
    band = np.clip(s / params.s_margin, 0.0, 1.0)
    u = np.where((y < cutoff) & (s >= 0.0), scale * band, 0.0)
    return np.clip(u, 0.0, params.u_max)


@dataclass
class SensorReading:
    """LDL level and its rate of change as seen by one node's sensor."""

    y: float
    dydt: float


def read_sensor(model, state, node: int, params: ControllerParams,
                prev_state=None, rng: np.random.Generator | None = None) -> SensorReading:
    """Sense (y, dy/dt) at a 1-based node.

    ``exact`` mode evaluates dy/dt from the model right-hand side;
    ``backward`` mode differences against ``prev_state`` over
    ``params.sensor_dt``.  Optional zero-mean Gaussian noise is drawn from
    ``rng``.
    """
    i = node - 1
    y = float(state.y[i])
    if params.sensor_mode == "backward" and prev_state is not None:
        dydt = (y - float(prev_state.y[i])) / params.sensor_dt
    else:
        dy, _, _ = model.rhs(state.y, state.z, state.n, 0.0)
        dydt = float(dy[i])
    if rng is not None and (params.noise_std_y > 0 or params.noise_std_dydt > 0):
        y += float(rng.normal(0.0, params.noise_std_y)) if params.noise_std_y > 0 else 0.0
        if params.noise_std_dydt > 0:
            dydt += float(rng.normal(0.0, params.noise_std_dydt))
    return SensorReading(y, dydt)


def steady_gain(kinetics: ReactionKinetics, env: EnvironmentParams,
                n_ss, y_star, z_star):
    """Steady value of the release-to-acceleration gain b at an operating point.

    b_ss = m * dR_y/dz |(y*, z*) * n_ss, with m the release gain of the
    environment.  Elementwise over arrays.
    """
    _, dz = kinetics.ldl_loss_partials(y_star, z_star)
    return env.release_gain * dz * np.asarray(n_ss, dtype=float)


@dataclass
class BoundEstimates:
    """Per-node simulated upper bounds and the steady gain used for feasibility."""

    f_bar: np.ndarray
    g_bar: np.ndarray
    y_bar: np.ndarray
    z_bar: np.ndarray
    b_ss: np.ndarray
    provenance: dict = field(default_factory=dict)


@dataclass
class FeasibilityResult:
    """Per-node required release capacity over a 1-based inclusive node range."""

    node_start: int
    node_end: int
    required: np.ndarray
    feasible: np.ndarray          # required is defined and <= u_max
    defined: np.ndarray           # b_ss > 0 and y_bar < cutoff
    u_max: float

    @property
    def passed(self) -> bool:
        return bool(np.all(self.defined) and np.all(self.feasible))

    @property
    def max_required(self) -> float:
        vals = self.required[self.defined]
        return float(vals.max()) if vals.size else 0.0

    def nodes(self) -> np.ndarray:
        return np.arange(self.node_start, self.node_end + 1)


def min_feasible_release(bounds: BoundEstimates, params: ControllerParams,
                         node_range: tuple[int, int]) -> FeasibilityResult:
    """Check u_max against the reaching condition over a node range.

    required_i = (eta + f_bar_i + lambda_bar * g_bar_i)
                 / (b_ss_i * (1 - y_bar_i / cutoff))

    Nodes with b_ss = 0 or y_bar >= cutoff have no defined requirement and
    are reported as infeasible rather than raising.
    """
    start, end = node_range
    sl = slice(start - 1, end)
    f_bar = bounds.f_bar[sl]
    g_bar = bounds.g_bar[sl]
    y_bar = bounds.y_bar[sl]
    b_ss = bounds.b_ss[sl]
    defined = (b_ss > 0.0) & (y_bar < params.y_cutoff)
    required = np.full(f_bar.shape, np.inf)
    margin = np.where(defined, b_ss * (1.0 - y_bar / params.y_cutoff), 1.0)
    num = params.eta + f_bar + params.lambda_bar * g_bar
    required[defined] = (num[defined] / margin[defined])
    feasible = defined & (required <= params.u_max)
    return FeasibilityResult(start, end, required, feasible, defined, params.u_max)
