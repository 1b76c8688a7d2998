"""Parameter file handling and the physical/controller parameter types.

All physical defaults live in a versioned ``params.default`` text file
(shipped in ``arterywall/data``), never in code.  The file format is
line-based ``key = value`` with dotted keys; ``#`` starts a comment.
Valid keys, their types and units are listed in ``params.schema`` next
to the default file and mirrored by `SCHEMA` below.  Unknown keys are
rejected with an error naming the key.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .errors import ConfigError, ParameterError

LAYER_NAMES = ("Endothelium", "Intima", "IEL", "Media")
SPECIES = ("ldl", "drug", "carrier")

# key -> (type, units, description)
SCHEMA: dict[str, tuple[type, str, str]] = {}


def _add(key, typ, units, desc):
    SCHEMA[key] = (typ, units, desc)


for _k, _name in enumerate(LAYER_NAMES, start=1):
    _add(f"geometry.layer{_k}.length", float, "m", f"Thickness of the {_name} layer")
_add("geometry.mesh_size", float, "m", "Radial mesh spacing h of the lumped model")
_add("geometry.symmetric_interfaces", bool, "-",
     "Also apply mixed-diffusivity treatment at the last node before each interface")

_add("env.filtration_velocity", float, "m/s", "Radial plasma filtration velocity, lumen to Media")
_add("env.lumen_ldl", float, "mg/dL", "LDL concentration in the lumen (boundary value)")
_add("env.lumen_drug", float, "ug/mL", "Drug concentration in the lumen; must be 0")
_add("env.lumen_carrier", float, "ug/mL", "Carrier nanoparticle concentration in the lumen")
_add("env.carrier_mass_ratio", float, "-",
     "Carrier particle mass divided by the mass of one drug molecule")

for _sp in SPECIES:
    for _k, _name in enumerate(LAYER_NAMES, start=1):
        _add(f"{_sp}.layer{_k}.diffusivity", float, "m^2/s",
             f"Effective diffusivity of {_sp} in the {_name}")
        _add(f"{_sp}.layer{_k}.reflection", float, "-",
             f"Filtration reflection coefficient of {_sp} in the {_name}")
        _add(f"{_sp}.layer{_k}.reaction_rate", float, "1/s",
             f"First-order consumption rate of {_sp} in the {_name}")

_add("kinetics.ldl_drug_rate", float, "mL/(ug*s)",
     "Rate constant of the LDL loss term k*y^a*z^b (per unit drug concentration)")
_add("kinetics.drug_ldl_rate", float, "dL/(mg*s)",
     "Rate constant of the drug loss term k*y^a*z^b (per unit LDL concentration)")
_add("kinetics.ldl_exponent", int, "-", "LDL exponent a of the bilinear reaction (integer >= 1)")
_add("kinetics.drug_exponent", int, "-", "Drug exponent b of the bilinear reaction (integer >= 1)")

_add("controller.lambda", float, "1/s", "Sliding-surface decay rate")
_add("controller.lambda_bar", float, "1/s", "Implementation upper bound on lambda")
_add("controller.eta", float, "mg/(dL*s^2)", "Reaching-rate margin of the sliding condition")
_add("controller.s_margin", float, "mg/(dL*s)", "Width s_c of the proportional band around s = 0")
_add("controller.u_max", float, "molecule/s", "Maximum per-particle drug release rate u_c")
_add("controller.y_cutoff", float, "mg/dL", "Release is forced to zero at or above this LDL level")
_add("controller.sensor_mode", str, "-", "dy/dt source for the controller: exact | backward")
_add("controller.sensor_dt", float, "s", "Differencing interval of the backward sensor mode")
_add("controller.noise_std_y", float, "mg/dL", "Gaussian noise std of the LDL sensor channel")
_add("controller.noise_std_dydt", float, "mg/(dL*s)", "Gaussian noise std of the rate channel")

_add("solver.method", str, "-", "Time integrator: imex | rk45")
_add("solver.theta", float, "-", "Implicitness of the IMEX transport step (1 = backward Euler)")
_add("solver.rtol", float, "-", "Relative tolerance of the adaptive rk45 integrator")
_add("solver.atol", float, "-", "Absolute tolerance of the adaptive rk45 integrator")

_add("validation.horizon", float, "s", "Horizon of the model-validation run")
_add("validation.sample_dt", float, "s", "Sampling interval of recorded validation trajectories")
_add("validation.dt", float, "s", "IMEX step of the validation run")
_add("validation.refine", int, "-", "Mesh refinement factor of the fine reference solver")
_add("validation.input_hold", float, "s", "Hold interval of the piecewise-constant random input")
_add("validation.input_max", float, "molecule/s", "Upper bound of the uniform random test input")

_add("control.horizon", float, "s", "Horizon of the closed-loop run")
_add("control.sample_dt", float, "s", "Sampling interval of recorded closed-loop trajectories")
_add("control.dt", float, "s", "IMEX step of the closed-loop run")
_add("control.refine", int, "-", "Refinement factor of the plant mesh when control.plant = reference")
_add("control.plant", str, "-", "Plant model for the closed loop: reference | lumped")
_add("control.desired_lumen_ldl", float, "mg/dL", "Lumen LDL defining the desired baseline profile")

_add("sweep.samples", int, "-", "Number of Latin-hypercube parameter draws")
_add("sweep.relative_range", float, "-", "Multiplicative half-range of parameter perturbations")
_add("sweep.safety_factor", float, "-", "Inflation applied to simulated maxima")
_add("sweep.horizon", float, "s", "Horizon of each uncertainty-sweep run")
_add("sweep.sample_dt", float, "s", "Sampling interval used when collecting sweep maxima")
_add("sweep.dt", float, "s", "IMEX step of sweep runs")
_add("sweep.closed_loop", bool, "-", "Also include closed-loop runs in the bound sweep")
_add("sweep.workers", int, "-", "Worker processes for the sweep (1 = serial)")

_add("feasibility.node_start", int, "-", "First node of the feasibility range (-1 = auto)")
_add("feasibility.node_end", int, "-", "Last node of the feasibility range (-1 = auto)")
_add("feasibility.eval_fraction_y", float, "-",
     "Fraction of the per-node LDL bound at which the steady gain is evaluated")
_add("feasibility.eval_fraction_z", float, "-",
     "Fraction of the per-node drug bound at which the steady gain is evaluated")

_add("experiment.seed", int, "-", "Base seed of all randomized scenario machinery")

del _add, _k, _name, _sp


def _parse_scalar(key: str, text: str):
    typ = SCHEMA[key][0]
    if typ is str:
        return text
    try:
        if typ is bool:
            low = text.lower()
            if low in ("true", "1", "yes", "on"):
                return True
            if low in ("false", "0", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {typ.__name__}") from None


def parse_params_text(text: str, source: str = "<string>") -> dict:
    """Parse ``key = value`` lines into a typed dict, validating keys against the schema."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = _parse_scalar(key, val)
    return values


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def echo_params(values: dict) -> str:
    """Canonical text form of a resolved parameter set (schema order, round-trip exact)."""
    lines = [f"{key} = {format_value(values[key])}" for key in SCHEMA if key in values]
    return "\n".join(lines) + "\n"


def default_params_path() -> Path:
    return Path(resources.files("arterywall").joinpath("data/params.default"))


@dataclass(frozen=True)
class WallGeometry:
    """Four-layer wall geometry: layer thicknesses and the radial mesh spacing."""

    layer_lengths: tuple[float, float, float, float]
    mesh_size: float
    symmetric_interfaces: bool = False

    def __post_init__(self):
        if self.mesh_size <= 0:
            raise ParameterError("geometry.mesh_size must be > 0")
        for k, length in enumerate(self.layer_lengths, start=1):
            if length <= 0:
                raise ParameterError(f"geometry.layer{k}.length must be > 0")
            ratio = length / self.mesh_size
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ParameterError(
                    f"geometry.layer{k}.length ({LAYER_NAMES[k - 1]}) is not an integer "
                    f"multiple of mesh_size ({length!r} / {self.mesh_size!r})")

    @property
    def layer_nodes(self) -> tuple[int, int, int, int]:
        return tuple(round(length / self.mesh_size) for length in self.layer_lengths)

    @property
    def node_count(self) -> int:
        return sum(self.layer_nodes)

    @property
    def layer_bounds(self) -> tuple[int, int, int, int]:
        """Cumulative node counts: last 1-based node index of each layer."""
        nodes = self.layer_nodes
        out, total = [], 0
        for count in nodes:
            total += count
            out.append(total)
        return tuple(out)

    def refined(self, factor: int) -> "WallGeometry":
        if factor < 1 or int(factor) != factor:
            raise ParameterError(f"refinement factor must be a positive integer, got {factor}")
        return WallGeometry(self.layer_lengths, self.mesh_size / int(factor),
                            self.symmetric_interfaces)


@dataclass(frozen=True)
class SpeciesTransport:
    """Per-layer reflection, diffusivity and first-order reaction rate for one species."""

    name: str
    reflection: tuple[float, float, float, float]
    diffusivity: tuple[float, float, float, float]
    reaction_rate: tuple[float, float, float, float]

    def __post_init__(self):
        for k in range(4):
            if not 0.0 <= self.reflection[k] <= 1.0:
                raise ParameterError(
                    f"{self.name}.layer{k + 1}.reflection must lie in [0, 1]")
            if self.diffusivity[k] < 0.0:
                raise ParameterError(f"{self.name}.layer{k + 1}.diffusivity must be >= 0")
            if self.reaction_rate[k] < 0.0:
                raise ParameterError(f"{self.name}.layer{k + 1}.reaction_rate must be >= 0")

    def perturbed(self, diff_f, refl_f, react_f) -> "SpeciesTransport":
        """Scale diffusivities, leakages (1 - reflection) and reaction rates per layer."""
        refl = tuple(min(1.0, max(0.0, 1.0 - (1.0 - r) * f))
                     for r, f in zip(self.reflection, refl_f))
        diff = tuple(d * f for d, f in zip(self.diffusivity, diff_f))
        react = tuple(k * f for k, f in zip(self.reaction_rate, react_f))
        return SpeciesTransport(self.name, refl, diff, react)


@dataclass(frozen=True)
class EnvironmentParams:
    """Lumen boundary values and the filtration/release environment."""

    filtration_velocity: float
    lumen_ldl: float
    lumen_drug: float
    lumen_carrier: float
    carrier_mass_ratio: float

    def __post_init__(self):
        if self.filtration_velocity < 0:
            raise ParameterError("env.filtration_velocity must be >= 0")
        if self.lumen_drug != 0.0:
            raise ParameterError("env.lumen_drug must be 0 (lumen drug boundary condition)")
        for key in ("lumen_ldl", "lumen_carrier"):
            if getattr(self, key) < 0:
                raise ParameterError(f"env.{key} must be >= 0")
        if self.carrier_mass_ratio <= 0:
            raise ParameterError("env.carrier_mass_ratio must be > 0")

    @property
    def release_gain(self) -> float:
        """Drug mass-concentration gain of the release source term per (molecule/s).

        One released molecule carries 1/carrier_mass_ratio of a carrier's
        mass, so the source term in the drug equation is
        release_gain * n_i * u_i.
        """
        return 1.0 / self.carrier_mass_ratio

    def lumen(self, species: str) -> float:
        return {"ldl": self.lumen_ldl, "drug": self.lumen_drug,
                "carrier": self.lumen_carrier}[species]


@dataclass(frozen=True)
class ControllerParams:
    """Gains and limits of the per-node sliding release controller."""

    lam: float
    lambda_bar: float
    eta: float
    s_margin: float
    u_max: float
    y_cutoff: float = 160.0
    sensor_mode: str = "exact"
    sensor_dt: float = 1.0
    noise_std_y: float = 0.0
    noise_std_dydt: float = 0.0

    def __post_init__(self):
        for key in ("lam", "lambda_bar", "eta", "s_margin", "u_max"):
            if getattr(self, key) <= 0:
                raise ParameterError(f"controller parameter {key} must be > 0")
        if self.lambda_bar < self.lam:
            raise ParameterError("controller.lambda_bar must be >= controller.lambda")
        if self.y_cutoff != 160.0:
            raise ParameterError("controller.y_cutoff is fixed at 160 mg/dL")
        if self.sensor_mode not in ("exact", "backward"):
            raise ParameterError("controller.sensor_mode must be 'exact' or 'backward'")
        if self.sensor_dt <= 0:
            raise ParameterError("controller.sensor_dt must be > 0")
        if self.noise_std_y < 0 or self.noise_std_dydt < 0:
            raise ParameterError("sensor noise std must be >= 0")


@dataclass(frozen=True)
class SolverOptions:
    method: str = "imex"
    theta: float = 1.0
    rtol: float = 1e-8
    atol: float = 1e-12

    def __post_init__(self):
        if self.method not in ("imex", "rk45"):
            raise ParameterError("solver.method must be 'imex' or 'rk45'")
        if not 0.5 <= self.theta <= 1.0:
            raise ParameterError("solver.theta must lie in [0.5, 1]")
        if self.rtol <= 0 or self.atol <= 0:
            raise ParameterError("solver tolerances must be > 0")


def _check_sampling(prefix: str, horizon: float, sample_dt: float, dt: float):
    if horizon <= 0:
        raise ParameterError(f"{prefix}.horizon must be > 0")
    if sample_dt <= 0 or dt <= 0:
        raise ParameterError(f"{prefix} sampling intervals must be > 0")
    for num, den, what in ((horizon, sample_dt, "sample_dt must divide horizon"),
                           (sample_dt, dt, "dt must divide sample_dt")):
        ratio = num / den
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ParameterError(f"{prefix}: {what} ({num!r} / {den!r})")


@dataclass(frozen=True)
class ValidationConfig:
    horizon: float
    sample_dt: float
    dt: float
    refine: int
    input_hold: float
    input_max: float

    def __post_init__(self):
        _check_sampling("validation", self.horizon, self.sample_dt, self.dt)
        if self.refine < 1:
            raise ParameterError("validation.refine must be >= 1")
        if self.input_max < 0:
            raise ParameterError("validation.input_max must be >= 0")
        if self.input_hold <= 0:
            raise ParameterError("validation.input_hold must be > 0")


@dataclass(frozen=True)
class ControlConfig:
    horizon: float
    sample_dt: float
    dt: float
    refine: int
    plant: str
    desired_lumen_ldl: float

    def __post_init__(self):
        _check_sampling("control", self.horizon, self.sample_dt, self.dt)
        if self.plant not in ("reference", "lumped"):
            raise ParameterError("control.plant must be 'reference' or 'lumped'")
        if self.refine < 1:
            raise ParameterError("control.refine must be >= 1")
        if self.desired_lumen_ldl < 0:
            raise ParameterError("control.desired_lumen_ldl must be >= 0")


@dataclass(frozen=True)
class SweepConfig:
    samples: int
    relative_range: float
    safety_factor: float
    horizon: float
    sample_dt: float
    dt: float
    closed_loop: bool
    workers: int

    def __post_init__(self):
        _check_sampling("sweep", self.horizon, self.sample_dt, self.dt)
        if self.samples < 1:
            raise ParameterError("sweep.samples must be >= 1")
        if not 0.0 <= self.relative_range < 1.0:
            raise ParameterError("sweep.relative_range must lie in [0, 1)")
        if self.safety_factor < 1.0:
            raise ParameterError("sweep.safety_factor must be >= 1")
        if self.workers < 1:
            raise ParameterError("sweep.workers must be >= 1")


@dataclass(frozen=True)
class FeasibilityConfig:
    node_start: int
    node_end: int
    eval_fraction_y: float
    eval_fraction_z: float

    def __post_init__(self):
        for key in ("eval_fraction_y", "eval_fraction_z"):
            if not 0.0 < getattr(self, key) <= 1.0:
                raise ParameterError(f"feasibility.{key} must lie in (0, 1]")

    def resolve_range(self, geometry: WallGeometry) -> tuple[int, int]:
        """Default node range: middle of the Endothelium through the first quarter of the Media."""
        nodes = geometry.layer_nodes
        bounds = geometry.layer_bounds
        start = self.node_start if self.node_start > 0 else math.ceil(nodes[0] / 2)
        end = self.node_end if self.node_end > 0 else bounds[2] + math.ceil(nodes[3] / 4)
        if not 1 <= start <= end <= geometry.node_count:
            raise ParameterError(f"feasibility node range [{start}, {end}] is invalid "
                                 f"for q = {geometry.node_count}")
        return start, end


@dataclass(frozen=True)
class Params:
    """Fully resolved parameter set: typed views plus the raw key/value mapping."""

    geometry: WallGeometry
    transport: dict
    env: EnvironmentParams
    kinetics: "ReactionKinetics"
    controller: ControllerParams
    solver: SolverOptions
    validation: ValidationConfig
    control: ControlConfig
    sweep: SweepConfig
    feasibility: FeasibilityConfig
    seed: int
    raw: dict = field(repr=False)

    def echo(self) -> str:
        return echo_params(self.raw)

    def with_overrides(self, overrides: dict) -> "Params":
        merged = dict(self.raw)
        for key, text in overrides.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown key {key!r} in override")
            merged[key] = _parse_scalar(key, text) if isinstance(text, str) else text
        return params_from_values(merged)


def params_from_values(values: dict) -> Params:
    from .kinetics import ReactionKinetics

    missing = [key for key in SCHEMA if key not in values]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing[:5])}"
                          + (" ..." if len(missing) > 5 else ""))

    def get(key):
        return values[key]

    geometry = WallGeometry(
        tuple(get(f"geometry.layer{k}.length") for k in range(1, 5)),
        get("geometry.mesh_size"),
        get("geometry.symmetric_interfaces"),
    )
    transport = {}
    for sp in SPECIES:
        transport[sp] = SpeciesTransport(
            sp,
            tuple(get(f"{sp}.layer{k}.reflection") for k in range(1, 5)),
            tuple(get(f"{sp}.layer{k}.diffusivity") for k in range(1, 5)),
            tuple(get(f"{sp}.layer{k}.reaction_rate") for k in range(1, 5)),
        )
    env = EnvironmentParams(
        get("env.filtration_velocity"), get("env.lumen_ldl"), get("env.lumen_drug"),
        get("env.lumen_carrier"), get("env.carrier_mass_ratio"),
    )
    kinetics = ReactionKinetics(
        get("kinetics.ldl_drug_rate"), get("kinetics.drug_ldl_rate"),
        get("kinetics.ldl_exponent"), get("kinetics.drug_exponent"),
    )
    controller = ControllerParams(
        get("controller.lambda"), get("controller.lambda_bar"), get("controller.eta"),
        get("controller.s_margin"), get("controller.u_max"), get("controller.y_cutoff"),
        get("controller.sensor_mode"), get("controller.sensor_dt"),
        get("controller.noise_std_y"), get("controller.noise_std_dydt"),
    )
    solver = SolverOptions(get("solver.method"), get("solver.theta"),
                           get("solver.rtol"), get("solver.atol"))
    validation = ValidationConfig(
        get("validation.horizon"), get("validation.sample_dt"), get("validation.dt"),
        get("validation.refine"), get("validation.input_hold"), get("validation.input_max"),
    )
    control = ControlConfig(
        get("control.horizon"), get("control.sample_dt"), get("control.dt"),
        get("control.refine"), get("control.plant"), get("control.desired_lumen_ldl"),
    )
    sweep = SweepConfig(
        get("sweep.samples"), get("sweep.relative_range"), get("sweep.safety_factor"),
        get("sweep.horizon"), get("sweep.sample_dt"), get("sweep.dt"),
        get("sweep.closed_loop"), get("sweep.workers"),
    )
    feasibility = FeasibilityConfig(
        get("feasibility.node_start"), get("feasibility.node_end"),
        get("feasibility.eval_fraction_y"), get("feasibility.eval_fraction_z"),
    )
    return Params(geometry, transport, env, kinetics, controller, solver,
                  validation, control, sweep, feasibility,
                  get("experiment.seed"), dict(values))


def load_params(path: str | Path | None = None) -> Params:
    """Load a parameter file; with no path, the packaged default file is used."""
    if path is None:
        path = default_params_path()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"parameter file not found: {path}")
    return params_from_values(parse_params_text(path.read_text(), source=str(path)))


def schema_text() -> str:
    """Human-readable schema listing committed next to the default parameter file."""
    width = max(len(k) for k in SCHEMA)
    lines = ["# key | type | units | description"]
    for key, (typ, units, desc) in SCHEMA.items():
        lines.append(f"{key:<{width}} | {typ.__name__:<5} | {units:<12} | {desc}")
    return "\n".join(lines) + "\n"
