"""Trial-loop engine, benchmark scenarios, weight sweeps and metrics.

A scenario builds all filters and lifted operators once, starts from zero
parameters, and then alternates between simulating one trial on the true
closed loop and updating the parameters with the selected learning law.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .filters import (
    ConvergenceReport,
    FilterParameterError,
    ZpetcFilter,
    ZeroPhaseFilter,
    check_convergence,
    design_zero_phase_butterworth,
    design_zpetc,
    frequency_grid,
)
from .ilc import (
    CombinedParameters,
    CombinedWeights,
    IlcWeights,
    basis_function_update,
    combined_update,
    freq_ilc_update,
    norm_optimal_update,
    targeted_regularization_term,
    theorem1_weights,
)
from .lti import (
    InsufficientHorizonError,
    RationalTransferFunction,
    lifted,
    load_benchmark,
    process_sensitivity,
    simulate_trial,
)
from .trajectory import (
    BENCHMARK_PROFILES,
    ReferenceProfile,
    basis_matrix,
    fourth_order_reference,
    profile_from_samples,
)

METHODS = ("norm_optimal", "basis_functions", "freq_domain", "combined")
PLANTS = ("benchmark", "perfect", "custom")
CHECKPOINTS = (75, 150, 300)


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


class ConvergenceError(RuntimeError):
    """The frequency-domain convergence condition fails for the configured filters."""


class TrialError(RuntimeError):
    """An update-law failure, tagged with the trial at which it occurred."""

    def __init__(self, trial: int, cause: Exception):
        super().__init__(f"trial {trial}: {type(cause).__name__}: {cause}")
        self.trial = trial
        self.cause = cause


def _fmt(x) -> str:
    return f"{float(x):.17g}"


@dataclass
class ScenarioConfig:
    """Everything needed to reproduce one learning experiment.

    ``schedule`` lists a profile id per trial; an entry may also be
    ``[id, count]`` to repeat it. ``profiles`` maps ids to either
    fourth-order bounds (displacement, v_max, a_max, j_max, s_max) or
    sample counts (displacement, n1, n2, n3, n4).
    """

    name: str = "custom"
    method: str = "freq_domain"
    trials: int = 10
    schedule: list = field(default_factory=lambda: ["ref1"])
    profiles: dict = field(default_factory=lambda: copy.deepcopy(BENCHMARK_PROFILES))
    ts: float = 1e-3
    # plant: benchmark (true != model), perfect (model = true), custom (records below)
    plant: str = "benchmark"
    true_plant: dict | None = None
    model_plant: dict | None = None
    controller: dict | None = None
    # learning filter: zpetc design on J-hat, or the exact lifted inverse
    learning: str = "zpetc"
    alpha: float = 1.0
    # robustness filter: zero-phase Butterworth, or q1 given directly; neither -> Q = I
    q_cutoff: float | None = 40.0
    q_order: int = 2
    q_num: list | None = None
    q_den: list | None = None
    # norm-optimal weights: scalar multiples of I, or the equivalent-weights construction
    weights: str = "scalar"
    exact_inverse: bool = False
    w_e: float = 1.0
    w_f: float = 0.0
    w_df: float = 0.0
    w_theta: float = 0.0
    w_dtheta: float = 0.0
    lam: float = 0.0
    require_convergence: bool = False

    def __post_init__(self):
        self.schedule = self.expand_schedule(self.schedule, self.trials)

    @staticmethod
    def expand_schedule(schedule, trials: int) -> list:
        out = []
        for item in schedule:
            if isinstance(item, (list, tuple)):
                ref, count = item
                out.extend([str(ref)] * int(count))
            else:
                out.append(str(item))
        if len(out) == 1 and trials > 1:
            out = out * trials
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        base = {}
        if "preset" in data:
            raise ConfigError("'preset' is not a config key; use load_config")
        profiles = copy.deepcopy(BENCHMARK_PROFILES)
        profiles.update(data.get("profiles") or {})
        base.update(data)
        base["profiles"] = profiles
        try:
            cfg = cls(**base)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.plant not in PLANTS:
            raise ConfigError(f"plant must be one of {PLANTS}, got {self.plant!r}")
        if self.learning not in ("zpetc", "inverse"):
            raise ConfigError("learning must be 'zpetc' or 'inverse'")
        if self.weights not in ("scalar", "equivalent"):
            raise ConfigError("weights must be 'scalar' or 'equivalent'")
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be a positive integer")
        if len(self.schedule) != self.trials:
            raise ConfigError(f"schedule has {len(self.schedule)} entries for {self.trials} trials")
        missing = sorted(set(self.schedule) - set(self.profiles))
        if missing:
            raise ConfigError(f"schedule references undefined profiles {missing}")
        if not self.ts > 0:
            raise ConfigError("ts must be positive")
        if self.plant == "custom" and not (self.true_plant and self.controller):
            raise ConfigError("custom plant needs 'true_plant' and 'controller' records")
        for name in ("w_e", "w_f", "w_df", "w_theta", "w_dtheta", "lam"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


def load_config(path) -> ScenarioConfig:
    """Read a YAML scenario; a top-level ``preset`` key supplies defaults."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping")
    name = data.pop("preset", None)
    if name is not None:
        base = preset(name).to_dict()
        if "schedule" in data and "trials" not in data:
            data["trials"] = len(ScenarioConfig.expand_schedule(data["schedule"], 1))
        if "trials" in data and "schedule" not in data:
            data["schedule"] = base["schedule"][:1]
        base.update(data)
        data = base
    return ScenarioConfig.from_dict(data)


_SWITCH = [["ref1", 10], ["ref2", 10]]

PRESETS = {
    "benchmark-example1": dict(
        method="norm_optimal", trials=300, schedule=["ref1"], w_e=1.0, w_f=5.2e-9, w_df=0.0,
    ),
    "benchmark-section4-freq": dict(method="freq_domain", trials=20, schedule=_SWITCH),
    "benchmark-section4-bf": dict(
        method="basis_functions", trials=20, schedule=_SWITCH, w_e=1.0, w_f=0.0, w_df=0.0,
    ),
    "benchmark-section4-combined": dict(
        method="combined", trials=20, schedule=_SWITCH, weights="equivalent",
    ),
    "benchmark-equivalence": dict(method="freq_domain", trials=10, schedule=["ref1"]),
    # no feedthrough delay, so the lifted model is invertible and L = J-hat^-1 exists
    "toy-exact-inverse": dict(
        method="freq_domain", trials=10, plant="custom", learning="inverse", exact_inverse=True,
        true_plant={"num": [0.5, 0.2], "den": [1.0, -0.6]},
        model_plant={"num": [0.45, 0.15], "den": [1.0, -0.55]},
        controller={"num": [0.8], "den": [1.0]},
        q_cutoff=None, q_num=[0.8, 0.2], q_den=[1.0], alpha=0.5,
        profiles={"short": dict(displacement=1.0, n1=1, n2=1, n3=2, n4=4)},
        schedule=["short"],
    ),
}


def preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return ScenarioConfig.from_dict(dict(copy.deepcopy(PRESETS[name]), name=name))


def make_profile(spec: dict, ts: float) -> ReferenceProfile:
    spec = dict(spec)
    if "n1" in spec:
        return profile_from_samples(spec.pop("displacement"), spec["n1"], spec["n2"], spec["n3"], spec["n4"], ts)
    return fourth_order_reference(ts=ts, **spec)


@dataclass
class TrialRecord:
    trial: int
    reference_id: str
    f: np.ndarray
    e: np.ndarray
    error_2norm: float
    theta: np.ndarray | None = None
    f_freq: np.ndarray | None = None


@dataclass
class Setup:
    """Filters and lifted operators shared by all trials of a scenario."""

    true_plant: RationalTransferFunction
    model_plant: RationalTransferFunction
    controller: RationalTransferFunction
    profiles: dict
    N: int
    J_hat: np.ndarray
    L: np.ndarray
    Q: np.ndarray
    zpetc: ZpetcFilter | None
    q_filter: ZeroPhaseFilter | None

    def convergence(self, alpha: float, grid=None) -> ConvergenceReport:
        """|Q(1 - alpha J L)| with the true process sensitivity."""
        grid = frequency_grid() if grid is None else grid
        j_true = process_sensitivity(self.true_plant, self.controller).frf(grid)
        if self.zpetc is not None:
            l_frf = self.zpetc.frf(grid)
        else:
            j_hat = process_sensitivity(self.model_plant, self.controller)
            l_frf = 1.0 / j_hat.frf(grid)
        q_frf = self.q_filter.frf(grid) if self.q_filter is not None else np.ones_like(grid, dtype=complex)
        return check_convergence(q_frf, l_frf, j_true, alpha, grid)


def _rtf(rec: dict, ts: float) -> RationalTransferFunction:
    return RationalTransferFunction(rec["num"], rec.get("den", [1.0]), ts)


def build_setup(config: ScenarioConfig) -> Setup:
    config.validate()
    ts = config.ts
    if config.plant == "custom":
        true_p = _rtf(config.true_plant, ts)
        model_p = _rtf(config.model_plant, ts) if config.model_plant else true_p
        ctrl = _rtf(config.controller, ts)
    else:
        bench = load_benchmark(ts)
        true_p, ctrl = bench.true_plant, bench.controller
        model_p = bench.true_plant if config.plant == "perfect" else bench.model_plant
    profiles = {k: make_profile(config.profiles[k], ts) for k in dict.fromkeys(config.schedule)}
    lengths = {p.N for p in profiles.values()}
    if len(lengths) != 1:
        raise ConfigError(f"scheduled profiles differ in length: {sorted(lengths)}")
    N = lengths.pop()

    j_hat_tf = process_sensitivity(model_p, ctrl)
    J_hat = lifted(j_hat_tf, N)
    zpetc = None
    if config.learning == "zpetc":
        zpetc = design_zpetc(j_hat_tf)
        L = zpetc.matrix(N)
    else:
        try:
            L = np.linalg.inv(J_hat)
        except np.linalg.LinAlgError as exc:
            raise ConfigError("lifted model is singular; exact inverse learning needs J(0) != 0") from exc

    q_filter = None
    if config.q_num is not None:
        q1 = RationalTransferFunction(config.q_num, config.q_den or [1.0], ts)
        q_filter = ZeroPhaseFilter(q1, float("nan"), len(q1.num) - 1)
    elif config.q_cutoff is not None:
        q_filter = design_zero_phase_butterworth(config.q_order, config.q_cutoff, 1.0 / ts)
    try:
        Q = q_filter.matrix(N) if q_filter is not None else np.eye(N)
    except InsufficientHorizonError as exc:
        # poles crowd z = -1 as the cutoff approaches Nyquist
        raise FilterParameterError(f"robustness filter cannot be lifted: {exc}") from exc
    return Setup(true_p, model_p, ctrl, profiles, N, J_hat, L, Q, zpetc, q_filter)


def scenario_weights(config: ScenarioConfig, setup: Setup) -> IlcWeights:
    if config.weights == "equivalent":
        return theorem1_weights(setup.J_hat, setup.Q, setup.L, config.alpha, exact_inverse=config.exact_inverse)
    return IlcWeights.scalar(setup.N, config.w_e, config.w_f, config.w_df)


def run_scenario(config: ScenarioConfig, setup: Setup | None = None) -> list[TrialRecord]:
    """Run the configured trials on the true closed loop; deterministic."""
    setup = build_setup(config) if setup is None else setup
    if config.require_convergence:
        rep = setup.convergence(config.alpha)
        if not rep.converges:
            raise ConvergenceError(f"convergence condition fails: max modulus {rep.max_modulus:.4g}")
    N, method = setup.N, config.method
    weights = scenario_weights(config, setup) if method in ("norm_optimal", "combined") else None
    bf_weights = IlcWeights.scalar(N, config.w_e, config.w_f, config.w_df)

    f = np.zeros(N)
    theta = np.zeros(3)
    params = CombinedParameters.zeros(3, N)
    records = []
    for j, ref_id in enumerate(config.schedule, start=1):
        prof = setup.profiles[ref_id]
        psi = basis_matrix(prof).columns
        if method == "basis_functions":
            f = psi @ theta
        elif method == "combined":
            f = params.feedforward(psi)
        e = simulate_trial(setup.true_plant, setup.controller, prof.r, f)
        records.append(TrialRecord(
            j, ref_id, f.copy(), e, error_norm(e),
            theta=(params.theta.copy() if method == "combined" else theta.copy() if method == "basis_functions" else None),
            f_freq=params.f_freq.copy() if method == "combined" else None,
        ))
        if j == config.trials:
            break
        try:
            if method == "freq_domain":
                f = freq_ilc_update(setup.Q, setup.L, config.alpha, f, e)
            elif method == "norm_optimal":
                f = norm_optimal_update(setup.J_hat, weights, f, e)
            elif method == "basis_functions":
                theta = basis_function_update(setup.J_hat, psi, bf_weights, theta, e)
            else:
                n = psi.shape[1]
                penalty = targeted_regularization_term(psi, config.lam) if config.lam else None
                W = CombinedWeights.from_ilc_weights(
                    weights, n, config.w_theta * np.eye(n), config.w_dtheta * np.eye(n), penalty)
                params = combined_update(setup.J_hat, psi, W, params, e)
        except Exception as exc:  # noqa: BLE001 - re-raised with the trial index
            raise TrialError(j, exc) from exc
    return records


# ZPETC learning + symmetric error weight is an approximation; measured deviation
# after 10 benchmark trials is 1.8e-3.
EQUIVALENCE_TOL = 5e-3
EXACT_EQUIVALENCE_TOL = 1e-8


@dataclass
class EquivalenceResult:
    freq: list[TrialRecord]
    norm_optimal: list[TrialRecord]
    weights: IlcWeights
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.deviation < self.tolerance)


def validate_equivalence(config: ScenarioConfig, tolerance: float | None = None) -> EquivalenceResult:
    """Frequency-domain ILC next to its norm-optimal reconstruction on one schedule."""
    freq_cfg = dataclasses.replace(config, method="freq_domain")
    no_cfg = dataclasses.replace(config, method="norm_optimal", weights="equivalent")
    setup = build_setup(freq_cfg)
    a = run_scenario(freq_cfg, setup)
    b = run_scenario(no_cfg, setup)
    ea, eb = a[-1].e, b[-1].e
    dev = error_norm(ea - eb) / max(error_norm(ea), 1e-300)
    if tolerance is None:
        tolerance = EXACT_EQUIVALENCE_TOL if config.exact_inverse else EQUIVALENCE_TOL
    return EquivalenceResult(a, b, scenario_weights(no_cfg, setup), dev, tolerance)


def error_norm(e) -> float:
    return float(np.linalg.norm(np.asarray(e, dtype=float).ravel()))


# --- sweeps ----------------------------------------------------------------------


@dataclass
class SweepResult:
    wf_grid: np.ndarray
    checkpoints: tuple
    max_norm: np.ndarray
    checkpoint_norms: np.ndarray  # (len(grid), len(checkpoints))
    first_norm: np.ndarray
    errors: dict = field(default_factory=dict)  # w_f -> message for failed points

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["w_f", "max_norm"] + [f"norm_{c}" for c in self.checkpoints] + ["error"])
            for i, wf in enumerate(self.wf_grid):
                row = [_fmt(wf), _fmt(self.max_norm[i])] + [_fmt(x) for x in self.checkpoint_norms[i]]
                w.writerow(row + [self.errors.get(float(wf), "")])


def _sweep_point(config: ScenarioConfig, wf: float, checkpoints: tuple):
    cfg = dataclasses.replace(
        config, method="norm_optimal", weights="scalar", w_e=1.0, w_df=0.0, w_f=float(wf),
        trials=max(checkpoints), schedule=[config.schedule[0]], require_convergence=False,
    )
    try:
        norms = np.array([rec.error_2norm for rec in run_scenario(cfg)])
    except Exception as exc:  # noqa: BLE001 - recorded per point
        return None, f"{type(exc).__name__}: {exc}"
    return norms, ""


def sweep_norm_optimal_wf(config: ScenarioConfig, wf_grid, checkpoints=CHECKPOINTS,
                          parallel: int | None = None) -> SweepResult:
    """Norm-optimal ILC with W_e = I, W_df = 0, W_f = w_f I for each grid value."""
    grid = np.sort(np.asarray(list(wf_grid), dtype=float))
    if grid.size == 0:
        raise ConfigError("w_f grid is empty")
    if np.any(~(grid > 0)):
        raise ConfigError("w_f grid entries must be positive")
    checkpoints = tuple(sorted(int(c) for c in checkpoints))
    if not checkpoints or checkpoints[0] < 1:
        raise ConfigError("checkpoints must be positive trial counts")

    if parallel and parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(_sweep_point, [config] * grid.size, grid, [checkpoints] * grid.size))
    else:
        results = [_sweep_point(config, wf, checkpoints) for wf in grid]

    nan = np.full(len(checkpoints), np.nan)
    max_norm, cps, first, errors = [], [], [], {}
    for wf, (norms, msg) in zip(grid, results):
        if norms is None:
            errors[float(wf)] = msg
            max_norm.append(np.nan)
            cps.append(nan)
            first.append(np.nan)
            continue
        max_norm.append(norms.max())
        cps.append(norms[np.array(checkpoints) - 1])
        first.append(norms[0])
    return SweepResult(grid, checkpoints, np.array(max_norm), np.array(cps), np.array(first), errors)


# --- plant estimate --------------------------------------------------------------


def plant_estimate_from_theta(theta, profile: ReferenceProfile | None = None, omega=None, ts: float | None = None):
    """Inverse FRF of the feedforward model theta1 D^2 + theta2 D^3 + theta3 D^4.

    D = (1 - z^-1)/Ts is the backward difference matching how the reference
    derivatives are generated. Returns ``(omega, frf)``; DC is excluded from
    the default grid because the model has a double integrator there.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (3,):
        raise ValueError("theta must hold (acceleration, jerk, snap) coefficients")
    if theta[0] == 0:
        raise ValueError("acceleration coefficient is zero; the fitted model is degenerate")
    ts = ts if ts is not None else (profile.ts if profile is not None else 1e-3)
    omega = frequency_grid()[1:] if omega is None else np.asarray(omega, dtype=float)
    D = (1 - np.exp(-1j * omega)) / ts
    F = theta[0] * D**2 + theta[1] * D**3 + theta[2] * D**4
    return omega, 1.0 / F


# --- output ----------------------------------------------------------------------


def write_trial_records(records: list[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "reference_id", "error_2norm"])
        for rec in records:
            w.writerow([rec.trial, rec.reference_id, _fmt(rec.error_2norm)])


def write_trial_signals(rec: TrialRecord, profile: ReferenceProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "t", "r", "f", "e"])
        for k in range(profile.N):
            w.writerow([k, _fmt(profile.t[k]), _fmt(profile.r[k]), _fmt(rec.f[k]), _fmt(rec.e[k])])


def write_frf_csv(path, omega, values, ts: float) -> None:
    values = np.asarray(values, dtype=complex)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["freq_hz", "magnitude", "phase_rad", "real", "imag"])
        for om, v in zip(omega, values):
            w.writerow([_fmt(om / (2 * np.pi * ts)), _fmt(abs(v)), _fmt(np.angle(v)), _fmt(v.real), _fmt(v.imag)])
