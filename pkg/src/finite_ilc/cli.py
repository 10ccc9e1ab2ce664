"""Finite-time iterative learning control: filter design, experiments, sweeps.

    finite-ilc design               --config cfg.yaml --out out/
    finite-ilc run                  --config cfg.yaml --out out/
    finite-ilc sweep                --config cfg.yaml --out out/ --parallel 4
    finite-ilc validate-equivalence --config cfg.yaml --out out/

``--config`` takes a YAML file or the name of a built-in preset. Exit codes:
0 success, 1 usage or configuration error, 2 numerical or design failure.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .experiment import (
    CHECKPOINTS,
    PRESETS,
    ConfigError,
    ConvergenceError,
    TrialError,
    build_setup,
    load_config,
    preset,
    run_scenario,
    sweep_norm_optimal_wf,
    validate_equivalence,
    write_frf_csv,
    write_trial_records,
    write_trial_signals,
)
from .filters import FilterParameterError, frequency_grid
from .lti import process_sensitivity

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    config_path: str
    output_dir: str
    command: str
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())
    exit_status: int | None = None
    message: str = ""
    files: list = field(default_factory=list)

    def add(self, path: Path) -> Path:
        self.files.append(str(path))
        return path

    def write(self) -> Path:
        out = Path(self.output_dir) / "manifest.json"
        missing = [f for f in self.files if not Path(f).exists()]
        if missing:
            raise RuntimeError(f"manifest lists missing files: {missing}")
        out.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return out


_ERROR_PLOT = '''"""Error 2-norm per trial."""
import csv
import matplotlib.pyplot as plt

with open("trials.csv") as fh:
    rows = list(csv.DictReader(fh))
plt.semilogy([int(r["trial"]) for r in rows], [float(r["error_2norm"]) for r in rows], "o-")
plt.xlabel("trial")
plt.ylabel("error 2-norm [m]")
plt.grid(True, which="both")
plt.savefig("error_norm.png", dpi=150)
'''

_FINAL_PLOT = '''"""Tracking error of the last trial."""
import csv
import matplotlib.pyplot as plt

with open("{name}") as fh:
    rows = list(csv.DictReader(fh))
plt.plot([float(r["t"]) for r in rows], [float(r["e"]) for r in rows])
plt.xlabel("time [s]")
plt.ylabel("error [m]")
plt.grid(True)
plt.savefig("final_error.png", dpi=150)
'''

_SWEEP_PLOT = '''"""Maximum and steady-state error 2-norm versus w_f."""
import csv
import matplotlib.pyplot as plt

with open("sweep.csv") as fh:
    rows = [r for r in csv.DictReader(fh) if not r["error"]]
wf = [float(r["w_f"]) for r in rows]
plt.loglog(wf, [float(r["max_norm"]) for r in rows], "k-", label="max over trials")
for key in [k for k in rows[0] if k.startswith("norm_")]:
    plt.loglog(wf, [float(r[key]) for r in rows], "--", label=key.replace("norm_", "after ") + " trials")
plt.xlabel("w_f")
plt.ylabel("error 2-norm [m]")
plt.legend()
plt.grid(True, which="both")
plt.savefig("sweep.png", dpi=150)
'''

_EQUIV_PLOT = '''"""Final-trial error of frequency-domain ILC and its norm-optimal reconstruction."""
import csv
import matplotlib.pyplot as plt

with open("equivalence_e_final.csv") as fh:
    rows = list(csv.DictReader(fh))
t = [float(r["t"]) for r in rows]
plt.plot(t, [float(r["e_freq"]) for r in rows], label="frequency-domain")
plt.plot(t, [float(r["e_norm_optimal"]) for r in rows], "--", label="norm-optimal")
plt.xlabel("time [s]")
plt.ylabel("error [m]")
plt.legend()
plt.grid(True)
plt.savefig("equivalence.png", dpi=150)
'''


def _resolve_config(arg):
    if arg is None:
        raise UsageError("--config is required")
    if Path(arg).is_file():
        return load_config(arg)
    if arg in PRESETS:
        return preset(arg)
    raise UsageError(f"config file not found and not a preset: {arg} (presets: {', '.join(sorted(PRESETS))})")


def cmd_design(args, cfg, out: Path, man: RunManifest) -> int:
    setup = build_setup(cfg)
    ts = cfg.ts
    grid = frequency_grid()
    j_hat = process_sensitivity(setup.model_plant, setup.controller)
    filters = {"alpha": float(cfg.alpha), "J_hat": j_hat.to_record()}
    if setup.zpetc is not None:
        z = setup.zpetc
        filters["L"] = {
            "stable_inverse_part": z.stable_inverse_part.to_record(),
            "noncausal_lead": z.noncausal_lead,
            "unstable_zero_compensator": z.unstable_zero_compensator.tolist(),
            "gain": float(z.gain),
        }
        l_frf = z.frf(grid)
    else:
        filters["L"] = "exact lifted inverse of J_hat"
        l_frf = 1.0 / j_hat.frf(grid)
    if setup.q_filter is not None:
        filters["Q"] = {"q1": setup.q_filter.q1.to_record(), "composition": "q1(1/z) q1(z)"}
        q_frf = setup.q_filter.frf(grid)
    else:
        filters["Q"] = "identity"
        q_frf = np.ones_like(grid, dtype=complex)
    with open(man.add(out / "filters.yaml"), "w") as fh:
        yaml.safe_dump(filters, fh, sort_keys=False)
    write_frf_csv(man.add(out / "l_frf.csv"), grid, l_frf, ts)
    write_frf_csv(man.add(out / "q_frf.csv"), grid, q_frf, ts)
    write_frf_csv(man.add(out / "lj_frf.csv"), grid, l_frf * j_hat.frf(grid), ts)
    report = setup.convergence(cfg.alpha, grid)
    report.to_csv(man.add(out / "convergence.csv"), ts)
    print(f"max |Q(1 - alpha J L)| = {report.max_modulus:.6g} ({'converges' if report.converges else 'does NOT converge'})")
    if args.require_convergence and not report.converges:
        man.message = "convergence condition fails"
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_run(args, cfg, out: Path, man: RunManifest) -> int:
    if args.require_convergence:
        cfg.require_convergence = True
    setup = build_setup(cfg)
    records = run_scenario(cfg, setup)
    write_trial_records(records, man.add(out / "trials.csv"))
    sig = out / "signals"
    sig.mkdir(exist_ok=True)
    for rec in records:
        write_trial_signals(rec, setup.profiles[rec.reference_id], man.add(sig / f"trial_{rec.trial:03d}.csv"))
    for ref_id, prof in setup.profiles.items():
        prof.to_csv(man.add(out / f"reference_{ref_id}.csv"))
    man.add(out / "plot_error_norm.py").write_text(_ERROR_PLOT)
    last = f"signals/trial_{records[-1].trial:03d}.csv"
    man.add(out / "plot_final_error.py").write_text(_FINAL_PLOT.format(name=last))
    for rec in records:
        print(f"trial {rec.trial:3d}  {rec.reference_id:>8s}  |e| = {rec.error_2norm:.6e}")
    return EXIT_OK


def _wf_grid(args) -> np.ndarray:
    if args.wf_grid is not None:
        vals = [v for v in args.wf_grid.replace(",", " ").split() if v]
        try:
            return np.array([float(v) for v in vals])
        except ValueError as exc:
            raise UsageError(f"bad --wf-grid: {exc}") from exc
    if args.wf_points < 1:
        return np.array([])
    return np.logspace(np.log10(args.wf_min), np.log10(args.wf_max), args.wf_points)


def cmd_sweep(args, cfg, out: Path, man: RunManifest) -> int:
    grid = _wf_grid(args)
    if grid.size == 0:
        raise UsageError("w_f grid is empty")
    res = sweep_norm_optimal_wf(cfg, grid, args.checkpoints, parallel=args.parallel)
    res.to_csv(man.add(out / "sweep.csv"))
    man.add(out / "plot_sweep.py").write_text(_SWEEP_PLOT)
    for msg in res.errors.items():
        print("failed point w_f=%.3g: %s" % msg, file=sys.stderr)
    print(f"{grid.size} grid points, {len(res.errors)} failed")
    return EXIT_OK


def _weight_summary(W: np.ndarray) -> dict:
    d = np.diag(W)
    scaled_identity = bool(np.allclose(W, d[0] * np.eye(len(d)), rtol=0, atol=1e-12 * max(1.0, abs(d[0]))))
    return {
        "is_scaled_identity": scaled_identity,
        "scale": float(d[0]) if scaled_identity else None,
        "frobenius_norm": float(np.linalg.norm(W)),
        "min_eigenvalue": float(np.linalg.eigvalsh(0.5 * (W + W.T))[0]),
    }


def cmd_validate_equivalence(args, cfg, out: Path, man: RunManifest) -> int:
    res = validate_equivalence(cfg, args.tolerance)
    prof = build_setup(cfg).profiles[res.freq[-1].reference_id]
    path = man.add(out / "equivalence_e_final.csv")
    with open(path, "w") as fh:
        fh.write("k,t,e_freq,e_norm_optimal\n")
        for k in range(prof.N):
            fh.write(f"{k},{prof.t[k]:.17g},{res.freq[-1].e[k]:.17g},{res.norm_optimal[-1].e[k]:.17g}\n")
    w = res.weights
    dump = {
        "alpha": cfg.alpha,
        "exact_inverse": cfg.exact_inverse,
        "W_e": _weight_summary(w.W_e),
        "W_f": _weight_summary(w.W_f),
        "W_df": _weight_summary(w.W_df),
    }
    with open(man.add(out / "weights.yaml"), "w") as fh:
        yaml.safe_dump(dump, fh, sort_keys=False)
    report = {"trials": cfg.trials, "relative_deviation": res.deviation, "tolerance": res.tolerance,
              "passed": res.passed}
    with open(man.add(out / "equivalence.yaml"), "w") as fh:
        yaml.safe_dump(report, fh, sort_keys=False)
    man.add(out / "plot_equivalence.py").write_text(_EQUIV_PLOT)
    print(f"relative deviation after {cfg.trials} trials: {res.deviation:.3e} (tolerance {res.tolerance:.1e})")
    if not res.passed:
        man.message = "equivalence deviation above tolerance"
        return EXIT_NUMERICAL
    return EXIT_OK


COMMANDS = {
    "design": cmd_design,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "validate-equivalence": cmd_validate_equivalence,
}


COMMAND_HELP = {
    "design": "design L and Q, report FRFs and the convergence check",
    "run": "run a trial-domain experiment and write per-trial signals",
    "sweep": "sweep the norm-optimal input penalty w_f",
    "validate-equivalence": "compare frequency-domain ILC with its norm-optimal reconstruction",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="YAML scenario file or preset name")
    common.add_argument("--out", help="output directory (default: out/<command>)")
    common.add_argument("--require-convergence", action="store_true",
                        help="fail with exit code 2 if the frequency-domain convergence check fails")
    common.add_argument("--parallel", type=int, help="worker processes for sweeps")

    p = argparse.ArgumentParser(prog="finite-ilc", description=__doc__.split("\n\n")[0], parents=[common])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.set_defaults(config=None, out=None, require_convergence=False, parallel=None)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=COMMAND_HELP[name], description=COMMAND_HELP[name])
        if name == "sweep":
            sp.add_argument("--wf-grid", default=None, help="explicit comma-separated w_f values")
            sp.add_argument("--wf-min", type=float, default=1e-14, help="smallest w_f of the log grid")
            sp.add_argument("--wf-max", type=float, default=1e-7, help="largest w_f of the log grid")
            sp.add_argument("--wf-points", type=int, default=25, help="number of log-spaced grid points")
            sp.add_argument("--checkpoints", type=int, nargs="+", default=list(CHECKPOINTS),
                            help="trials at which the error norm is recorded")
        if name == "validate-equivalence":
            sp.add_argument("--tolerance", type=float, default=None,
                            help="relative deviation bound (default 1e-8 exact inverse, 5e-3 otherwise)")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE

    out = Path(args.out or Path("out") / args.command)
    man = RunManifest(str(args.config), str(out), args.command)
    try:
        cfg = _resolve_config(args.config)
        out.mkdir(parents=True, exist_ok=True)
        status = COMMANDS[args.command](args, cfg, out, man)
    except (UsageError, ConfigError, FilterParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrialError, ConvergenceError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        status, man.message = EXIT_NUMERICAL, str(exc)
    man.exit_status = status
    if out.is_dir():
        man.write()
    return status


if __name__ == "__main__":
    sys.exit(main())
