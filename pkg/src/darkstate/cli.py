"""Command-line frontend: config parsing, experiment dispatch, output emission.

Config grammar: flat dotted keys, one `key = value` assignment per line,
`#` starts a comment, blank lines ignored. Unknown keys are rejected so a
typo cannot silently fall back to a default. Precedence is
defaults < per-subcommand defaults < config file < command-line flags.

Every run writes a manifest JSON (resolved config, version, seed, duration,
output digests, stepping backend). CSV floats are written with 17
significant digits and LF line endings, so identical config+seed reproduces
byte-identical files.

Exit codes: 0 success, 1 usage/config error, 2 numerical or experiment
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace

import numpy as np

from . import __version__
from . import matrixcore as mc
from .experiments import (
    alpha_sweep,
    colored_noise_comparison,
    noon_trace,
    robustness_run,
)
from .lindblad import (
    DriftError,
    assemble_generator,
    assemble_split_form,
    block_reduced_generator,
    dark_state_residual,
    propagate,
    reduce_system,
)
from .noise import NoiseModel, build_correlation, cancellation_residual, GenericNoiseRates, sample_path
from .spinops import SystemParams, build_h0, build_hs, make_spin, noon_state
from .svgplot import line_plot
from .trajectories import TrajectoryConfig, backend_name, compare_to_master, ensemble_density

ENV_OUTDIR = "DARKSTATE_OUTDIR"

_KINDS = ("white", "ou", "one_over_f")
_METHODS = ("master", "trajectories")
_FORMATS = ("csv", "json", "svg")


class ConfigError(Exception):
    pass


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


# key -> (caster, constraint or None, constraint text)
CONFIG_SCHEMA = {
    "system.n_s": (int, _positive, "must be a positive integer"),
    "system.eta_s": (float, None, ""),
    "system.gamma_s": (float, None, ""),
    "system.delta_s": (float, None, ""),
    "ancilla.n_a": (int, _positive, "must be a positive integer"),
    "ancilla.eta_a": (float, None, ""),
    "ancilla.gamma_a": (float, None, ""),
    "ancilla.delta_a": (float, None, ""),
    "ancilla.ell": (float, lambda v: v != 0.0, "must be nonzero"),
    "ancilla.delta_offset": (float, None, ""),
    "ancilla.sigma2": (float, _nonneg, "must be >= 0"),
    "noise.kind": (str, lambda v: v in _KINDS, f"must be one of {', '.join(_KINDS)}"),
    "noise.lambda": (float, _positive, "must be > 0"),
    "noise.alpha": (float, None, ""),
    "noise.tau_c": (float, _positive, "must be > 0"),
    "noise.f_min": (float, _positive, "must be > 0"),
    "noise.f_max": (float, _positive, "must be > 0"),
    "run.t_final": (float, _positive, "must be > 0"),
    "run.dt": (float, _positive, "must be > 0"),
    "run.n_traj": (int, _positive, "must be a positive integer"),
    "run.seed": (int, _nonneg, "must be a nonnegative integer"),
    "run.method": (str, lambda v: v in _METHODS, f"must be one of {', '.join(_METHODS)}"),
    "output.dir": (str, None, ""),
    "output.formats": (str, None, ""),
}

DEFAULTS = {
    "system.n_s": 1,
    "system.eta_s": 1.0,
    "system.gamma_s": 0.5,
    "system.delta_s": -1.0,
    "ancilla.n_a": 1,
    "ancilla.eta_a": 1.0,
    "ancilla.gamma_a": 0.0,
    "ancilla.delta_a": -1.0,
    "ancilla.ell": 0.5,
    "ancilla.delta_offset": 0.01,
    "ancilla.sigma2": 1.5e-4,
    "noise.kind": "white",
    "noise.lambda": 0.1,
    "noise.alpha": -2.0,
    "noise.tau_c": 5.0,
    "noise.f_min": 1e-3,
    "noise.f_max": 1e1,
    "run.t_final": 50.0,
    "run.dt": 0.05,
    "run.n_traj": 1000,
    "run.seed": 0,
    "run.method": "master",
    "output.dir": "",
    "output.formats": "csv,json,svg",
}

# published-figure parameter choices per subcommand, overridable as usual
SUBCOMMAND_DEFAULTS = {
    "fig2": {"noise.lambda": 0.5, "ancilla.ell": 0.5},
    "fig3a": {"ancilla.ell": -0.5, "system.n_s": 1, "ancilla.n_a": 1},
    "fig3b": {"ancilla.ell": -0.5, "noise.lambda": 0.1},
    "robustness": {"ancilla.ell": 0.5, "noise.lambda": 0.1},
    "colored": {"noise.kind": "ou", "run.t_final": 20.0, "run.dt": 1e-3},
    "sweep": {},
    "trajectories": {"noise.alpha": 0.0, "run.t_final": 5.0, "run.dt": 1e-3},
    "selftest": {},
}


@dataclass
class RunConfig:
    """Resolved flat config (dotted key -> typed value)."""

    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def system_params(self) -> SystemParams:
        v = self.values
        return SystemParams(
            n_bosons=v["system.n_s"], eta=v["system.eta_s"],
            gamma=v["system.gamma_s"], delta=v["system.delta_s"],
        )

    def ancilla_params(self) -> SystemParams:
        v = self.values
        return SystemParams(
            n_bosons=v["ancilla.n_a"], eta=v["ancilla.eta_a"],
            gamma=v["ancilla.gamma_a"], delta=v["ancilla.delta_a"],
        )

    def formats(self) -> tuple:
        raw = [p.strip() for p in self.values["output.formats"].split(",") if p.strip()]
        for p in raw:
            if p not in _FORMATS:
                raise ConfigError(
                    f"config key 'output.formats': must be a comma list drawn from "
                    f"{', '.join(_FORMATS)} (got '{p}')"
                )
        return tuple(f for f in _FORMATS if f in raw)


def _cast_and_check(key: str, raw, lineno=None):
    where = f" (line {lineno})" if lineno is not None else ""
    if key not in CONFIG_SCHEMA:
        raise ConfigError(f"unknown config key '{key}'{where}")
    caster, constraint, text = CONFIG_SCHEMA[key]
    if isinstance(raw, str):
        try:
            value = caster(raw) if caster is not str else raw
        except ValueError:
            raise ConfigError(
                f"config key '{key}': expected {caster.__name__} value{where} (got '{raw}')"
            ) from None
    else:
        if caster is int and isinstance(raw, float) and raw != int(raw):
            raise ConfigError(f"config key '{key}': expected int (got {raw})")
        value = caster(raw) if caster is not str else str(raw)
    if constraint is not None and not constraint(value):
        raise ConfigError(f"config key '{key}': {text} (got {value!r}){where}")
    return value


def parse_config(path: str) -> dict:
    """Parse a flat dotted-key config file into typed values."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got '{body}'")
            key, _, raw = body.partition("=")
            out[key.strip()] = _cast_and_check(key.strip(), raw.strip(), lineno)
    return out


def resolve_config(command: str, config_path, flag_overrides: dict) -> RunConfig:
    values = dict(DEFAULTS)
    values.update(SUBCOMMAND_DEFAULTS.get(command, {}))
    if config_path is not None:
        values.update(parse_config(config_path))
    for key, val in flag_overrides.items():
        values[key] = _cast_and_check(key, val)
    if values["noise.f_max"] <= values["noise.f_min"]:
        raise ConfigError("config key 'noise.f_max': must be > noise.f_min")
    cfg = RunConfig(values)
    cfg.formats()  # validate
    return cfg


# flag name -> (dotted key, argparse type)
_FLAG_KEYS = [
    ("n", None, int, "boson number for system and ancilla (sets system.n_s and ancilla.n_a)"),
    ("ell", "ancilla.ell", float, "ancilla Jz eigenvalue defining the protected block"),
    ("lambda", "noise.lambda", float, "dephasing strength"),
    ("alpha", "noise.alpha", float, "system-ancilla coupling ratio"),
    ("kind", "noise.kind", str, "noise kind: white, ou, one_over_f"),
    ("tau-c", "noise.tau_c", float, "OU correlation time"),
    ("f-min", "noise.f_min", float, "lower edge of the 1/f band"),
    ("f-max", "noise.f_max", float, "upper edge of the 1/f band"),
    ("eta-s", "system.eta_s", float, "system interaction strength"),
    ("gamma-s", "system.gamma_s", float, "system hopping"),
    ("delta-s", "system.delta_s", float, "system tilt"),
    ("eta-a", "ancilla.eta_a", float, "ancilla interaction strength"),
    ("gamma-a", "ancilla.gamma_a", float, "ancilla hopping"),
    ("delta-a", "ancilla.delta_a", float, "ancilla tilt"),
    ("delta-offset", "ancilla.delta_offset", float, "ancilla preparation mean offset"),
    ("sigma2", "ancilla.sigma2", float, "ancilla preparation variance"),
    ("t-final", "run.t_final", float, "propagation horizon"),
    ("dt", "run.dt", float, "time step / output grid spacing"),
    ("n-traj", "run.n_traj", int, "number of stochastic trajectories"),
    ("seed", "run.seed", int, "master seed"),
    ("method", "run.method", str, "fig2 evolution route: master or trajectories"),
]


def _float_list(text: str) -> list:
    try:
        return [float(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got '{text}'") from None


def _int_list(text: str) -> list:
    try:
        return [int(p) for p in text.split(",") if p.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


class _Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="darkstate",
        description=(
            "Correlated-dephasing cancellation toolkit: composite system+ancilla "
            "generators, trajectory ensembles, and figure-grade sweeps."
        ),
    )
    parser.add_argument("--version", action="version", version=f"darkstate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    descriptions = {
        "fig2": "fidelity-vs-time traces for a list of coupling ratios",
        "fig3a": "time-averaged fidelity sweeps over alpha for a list of lambdas (N=1)",
        "fig3b": "time-averaged fidelity sweeps over alpha for a list of odd N",
        "robustness": "dual-route residual dephasing rate for imperfect ancilla preparation",
        "colored": "satisfied-vs-violated cancellation comparison under colored noise",
        "sweep": "generic alpha sweep with the configured parameters",
        "trajectories": "trajectory-ensemble vs master-equation distance trace",
        "selftest": "run the built-in invariant checks and report pass/fail",
    }
    parsers = {}
    for name, desc in descriptions.items():
        p = sub.add_parser(name, help=desc, description=desc)
        p.add_argument("--config", default=None, metavar="PATH",
                       help="flat dotted-key config file (see README for the grammar)")
        p.add_argument("--outdir", default=None, metavar="DIR",
                       help=f"output directory (default: output.dir, ${ENV_OUTDIR}, or ./out)")
        p.add_argument("--formats", default=None, metavar="LIST",
                       help="comma list from csv,json,svg (default csv,json,svg)")
        for flag, key, typ, helptext in _FLAG_KEYS:
            p.add_argument(f"--{flag}", dest=flag.replace("-", "_"), type=typ,
                           default=None, help=helptext)
        parsers[name] = p

    parsers["fig2"].add_argument("--alphas", type=_float_list, default=None,
                                 help="comma list of couplings (default -2,-1.5,0); use --alphas=-2,... form")
    for name in ("fig3a", "fig3b", "sweep"):
        parsers[name].add_argument("--alphas", type=_float_list, default=None,
                                   help="explicit alpha grid (overrides min/max/steps)")
        parsers[name].add_argument("--alpha-min", type=float, default=None)
        parsers[name].add_argument("--alpha-max", type=float, default=None)
        parsers[name].add_argument("--alpha-steps", type=int, default=None)
    parsers["fig3a"].add_argument("--lambdas", type=_float_list, default=None,
                                  help="comma list of dephasing strengths (default 0.05,0.1,0.5)")
    parsers["fig3b"].add_argument("--ns", type=_int_list, default=None,
                                  help="comma list of boson numbers (default 1,3,5,7)")
    parsers["robustness"].add_argument("--realization", default=None,
                                       choices=("auto", "gaussian", "two_point"),
                                       help="mixed ancilla realization (default auto)")
    parsers["robustness"].add_argument("--d-a", type=int, default=None,
                                       help="ancilla dimension for the full route (default 6)")
    return parser


def _collect_overrides(args) -> dict:
    overrides = {}
    for flag, key, _typ, _h in _FLAG_KEYS:
        val = getattr(args, flag.replace("-", "_"), None)
        if val is None:
            continue
        if key is None:  # --n fans out to both boson numbers
            overrides["system.n_s"] = val
            overrides["ancilla.n_a"] = val
        else:
            overrides[key] = val
    if args.outdir is not None:
        overrides["output.dir"] = args.outdir
    if args.formats is not None:
        overrides["output.formats"] = args.formats
    return overrides


def _resolve_outdir(cfg: RunConfig) -> str:
    if cfg["output.dir"]:
        return cfg["output.dir"]
    env = os.environ.get(ENV_OUTDIR, "")
    return env if env else os.path.join(".", "out")


def _fmt_float(x) -> str:
    return format(float(x), ".17g")


def _fmt_label(x) -> str:
    return format(float(x), "g")


def _write_csv(path: str, header: list, columns: list) -> None:
    n = len(columns[0])
    for col in columns:
        if len(col) != n:
            raise ValueError("CSV columns have unequal lengths")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(n):
            fh.write(",".join(_fmt_float(col[i]) for col in columns) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def _write_json(path: str, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _alpha_grid(cfg: RunConfig, args) -> np.ndarray:
    if getattr(args, "alphas", None):
        return np.asarray(args.alphas, dtype=float)
    alpha_c = -1.0 / cfg["ancilla.ell"]
    lo, hi = sorted((-3.0 * alpha_c, 2.0 * alpha_c))
    lo = args.alpha_min if getattr(args, "alpha_min", None) is not None else lo
    hi = args.alpha_max if getattr(args, "alpha_max", None) is not None else hi
    steps = args.alpha_steps if getattr(args, "alpha_steps", None) is not None else 51
    if steps < 2 or hi <= lo:
        raise ConfigError("alpha grid needs alpha-max > alpha-min and alpha-steps >= 2")
    return np.linspace(lo, hi, steps)


# each handler returns (csv_specs, summary, svg_specs):
#   csv_specs: [(filename, header, columns)], svg_specs: [(filename, svg_text)]


def _fig2_trajectory_trace(cfg, n, ell, alpha, lam):
    hs = build_hs(cfg.system_params())
    ha = build_hs(cfg.ancilla_params())
    spin_s = make_spin(n + 1)
    spin_a = make_spin(cfg["ancilla.n_a"] + 1)
    eigs = np.diag(spin_a.jz).real
    idx = int(np.argmin(np.abs(eigs - ell)))
    if abs(eigs[idx] - ell) > 1e-9:
        raise ValueError(f"ancilla.ell={ell} is not a Jz eigenvalue at ancilla.n_a={cfg['ancilla.n_a']}")
    e_ell = np.zeros(spin_a.dim, dtype=complex)
    e_ell[idx] = 1.0
    psi0 = np.kron(noon_state(n), e_ell)
    eye_s = np.eye(spin_s.dim, dtype=complex)
    eye_a = np.eye(spin_a.dim, dtype=complex)
    jump_ops = [
        mc.kron(spin_s.jz, eye_a),
        mc.kron(eye_s, spin_a.jz),
        mc.kron(spin_s.jz, spin_a.jz),
    ]
    model = NoiseModel(
        kind=cfg["noise.kind"],
        corr=build_correlation(lam, alpha),
        tau_c=cfg["noise.tau_c"],
        f_band=(cfg["noise.f_min"], cfg["noise.f_max"]),
    )
    config = TrajectoryConfig(
        dt=cfg["run.dt"], t_final=cfg["run.t_final"],
        n_traj=cfg["run.n_traj"], master_seed=cfg["run.seed"],
    )
    ens = ensemble_density(config, model, build_h0(hs, ha, alpha), jump_ops, psi0)
    target = np.outer(psi0, psi0.conj())
    fid = np.array([max(np.trace(r @ target).real, 0.0) for r in ens.rho_avg])
    return ens.times, fid


def _cmd_fig2(cfg: RunConfig, args):
    alphas = args.alphas if args.alphas else [-2.0, -1.5, 0.0]
    n = cfg["system.n_s"]
    ell = cfg["ancilla.ell"]
    lam = cfg["noise.lambda"]
    columns, labels, minima = [], [], []
    times = None
    for alpha in alphas:
        if cfg["run.method"] == "trajectories":
            times, fid = _fig2_trajectory_trace(cfg, n, ell, alpha, lam)
        else:
            trace = noon_trace(
                n, ell, alpha, lam,
                hs_params=cfg.system_params(), ha_params=cfg.ancilla_params(),
                t_final=cfg["run.t_final"], dt=cfg["run.dt"],
            )
            times, fid = trace.times, trace.fidelity
        columns.append(fid)
        labels.append(f"fidelity_alpha_{_fmt_label(alpha)}")
        minima.append(float(fid.min()))
    header = ["t"] + labels
    csv_specs = [("fig2_fidelity.csv", header, [times] + columns)]
    summary = {
        "alphas": list(alphas),
        "lambda": lam,
        "n": n,
        "ell": ell,
        "method": cfg["run.method"],
        "min_fidelity": dict(zip(labels, minima)),
        "final_fidelity": {lab: float(col[-1]) for lab, col in zip(labels, columns)},
    }
    series = [
        (f"alpha = {_fmt_label(a)}", times, col) for a, col in zip(alphas, columns)
    ]
    svg = line_plot(series, title="NOON fidelity vs time", xlabel="t", ylabel="fidelity")
    return csv_specs, summary, [("fig2_fidelity.svg", svg)]


def _sweep_series(cfg, args, n, lam):
    grid = _alpha_grid(cfg, args)
    hs = replace(cfg.system_params(), n_bosons=n)
    ha = replace(cfg.ancilla_params(), n_bosons=n)
    return grid, alpha_sweep(
        n, cfg["ancilla.ell"], lam, grid,
        hs_params=hs, ha_params=ha, dt=cfg["run.dt"],
    )


def _cmd_fig3a(cfg: RunConfig, args):
    lambdas = args.lambdas if args.lambdas else [0.05, 0.1, 0.5]
    grid = None
    columns, labels, peaks, widths = [], [], {}, {}
    for lam in lambdas:
        grid, sweep = _sweep_series(cfg, args, cfg["system.n_s"], lam)
        lab = f"fbar_lambda_{_fmt_label(lam)}"
        columns.append(sweep.fbar)
        labels.append(lab)
        peaks[lab] = sweep.peak_alpha
        widths[lab] = sweep.fwhm
    csv_specs = [("fig3a_sweep.csv", ["alpha"] + labels, [grid] + columns)]
    fwhm_vals = [widths[lab] for lab in labels]
    summary = {
        "lambdas": list(lambdas),
        "ell": cfg["ancilla.ell"],
        "n": cfg["system.n_s"],
        "alpha_c": -1.0 / cfg["ancilla.ell"],
        "peak_alpha": peaks,
        "fwhm": widths,
        "fwhm_strictly_decreasing_in_lambda": all(
            b < a for a, b in zip(fwhm_vals, fwhm_vals[1:])
        ),
    }
    series = [
        (f"lambda = {_fmt_label(lam)}", grid, col) for lam, col in zip(lambdas, columns)
    ]
    svg = line_plot(series, title="Time-averaged fidelity vs coupling",
                    xlabel="alpha", ylabel="mean fidelity")
    return csv_specs, summary, [("fig3a_sweep.svg", svg)]


def _cmd_fig3b(cfg: RunConfig, args):
    ns = args.ns if args.ns else [1, 3, 5, 7]
    lam = cfg["noise.lambda"]
    grid = None
    columns, labels, peaks = [], [], {}
    for n in ns:
        grid, sweep = _sweep_series(cfg, args, n, lam)
        lab = f"fbar_n_{n}"
        columns.append(sweep.fbar)
        labels.append(lab)
        peaks[lab] = {"alpha": sweep.peak_alpha, "fbar": float(sweep.fbar.max())}
    csv_specs = [("fig3b_sweep.csv", ["alpha"] + labels, [grid] + columns)]
    peak_list = [peaks[lab]["fbar"] for lab in labels]
    summary = {
        "ns": list(ns),
        "lambda": lam,
        "ell": cfg["ancilla.ell"],
        "alpha_c": -1.0 / cfg["ancilla.ell"],
        "peaks": peaks,
        "peak_fbar_strictly_increasing": all(b > a for a, b in zip(peak_list, peak_list[1:])),
    }
    series = [(f"N = {n}", grid, col) for n, col in zip(ns, columns)]
    svg = line_plot(series, title="Time-averaged fidelity vs coupling by N",
                    xlabel="alpha", ylabel="mean fidelity")
    return csv_specs, summary, [("fig3b_sweep.svg", svg)]


def _cmd_sweep(cfg: RunConfig, args):
    grid, sweep = _sweep_series(cfg, args, cfg["system.n_s"], cfg["noise.lambda"])
    csv_specs = [("sweep.csv", ["alpha", "fbar"], [grid, sweep.fbar])]
    summary = {
        "n": cfg["system.n_s"],
        "ell": cfg["ancilla.ell"],
        "lambda": cfg["noise.lambda"],
        "alpha_c": -1.0 / cfg["ancilla.ell"],
        "peak_alpha": sweep.peak_alpha,
        "fwhm": sweep.fwhm,
        "method": sweep.metadata["method"],
        "horizons": sweep.metadata["horizons"],
    }
    svg = line_plot([("mean fidelity", grid, sweep.fbar)],
                    title="Time-averaged fidelity sweep", xlabel="alpha", ylabel="mean fidelity")
    return csv_specs, summary, [("sweep.svg", svg)]


def _cmd_robustness(cfg: RunConfig, args):
    report = robustness_run(
        cfg["noise.lambda"], cfg["ancilla.ell"],
        cfg["ancilla.delta_offset"], cfg["ancilla.sigma2"],
        n=cfg["system.n_s"],
        t_final=args.t_final,  # None -> window chosen from the rates
        d_a=args.d_a if args.d_a is not None else 6,
        realization=args.realization if args.realization is not None else "auto",
    )
    times = report.pop("times")
    coh_full = report.pop("coherence_full")
    coh_eff = report.pop("coherence_effective")
    csv_specs = [(
        "robustness_coherence.csv",
        ["t", "coherence_full", "coherence_effective"],
        [times, coh_full, coh_eff],
    )]
    svg = line_plot(
        [("full composite", times, coh_full), ("effective generator", times, coh_eff)],
        title="NOON coherence under imperfect ancilla preparation",
        xlabel="t", ylabel="|coherence|",
    )
    return csv_specs, report, [("robustness_coherence.svg", svg)]


def _cmd_colored(cfg: RunConfig, args):
    report = colored_noise_comparison(
        cfg["noise.kind"], cfg["noise.lambda"], cfg["ancilla.ell"],
        n_traj=cfg["run.n_traj"],
        n=cfg["system.n_s"],
        tau_c=cfg["noise.tau_c"],
        f_band=(cfg["noise.f_min"], cfg["noise.f_max"]),
        t_final=cfg["run.t_final"], dt=cfg["run.dt"],
        master_seed=cfg["run.seed"],
    )
    times = report.pop("times")
    sat = report.pop("fidelity_satisfied")
    base = report.pop("fidelity_violated")
    csv_specs = [(
        "colored_fidelity.csv",
        ["t", "fidelity_satisfied", "fidelity_violated"],
        [times, sat, base],
    )]
    svg = line_plot(
        [("condition satisfied", times, sat), ("condition violated", times, base)],
        title=f"Ensemble fidelity, {cfg['noise.kind']} noise",
        xlabel="t", ylabel="fidelity",
    )
    return csv_specs, report, [("colored_fidelity.svg", svg)]


def _cmd_trajectories(cfg: RunConfig, args):
    n = cfg["system.n_s"]
    ell = cfg["ancilla.ell"]
    alpha = cfg["noise.alpha"]
    hs = build_hs(cfg.system_params())
    ha = build_hs(cfg.ancilla_params())
    spin_s = make_spin(n + 1)
    spin_a = make_spin(cfg["ancilla.n_a"] + 1)
    eigs = np.diag(spin_a.jz).real
    idx = int(np.argmin(np.abs(eigs - ell)))
    if abs(eigs[idx] - ell) > 1e-9:
        raise ValueError(f"ancilla.ell={ell} is not a Jz eigenvalue at ancilla.n_a={cfg['ancilla.n_a']}")
    e_ell = np.zeros(spin_a.dim, dtype=complex)
    e_ell[idx] = 1.0
    psi0 = np.kron(noon_state(n), e_ell)
    eye_s = np.eye(spin_s.dim, dtype=complex)
    eye_a = np.eye(spin_a.dim, dtype=complex)
    jump_ops = [
        mc.kron(spin_s.jz, eye_a),
        mc.kron(eye_s, spin_a.jz),
        mc.kron(spin_s.jz, spin_a.jz),
    ]
    model = NoiseModel(
        kind=cfg["noise.kind"],
        corr=build_correlation(cfg["noise.lambda"], alpha),
        tau_c=cfg["noise.tau_c"],
        f_band=(cfg["noise.f_min"], cfg["noise.f_max"]),
    )
    n_steps = round(cfg["run.t_final"] / cfg["run.dt"])
    stride = max(1, round(n_steps / 1000))
    while n_steps % stride:
        stride -= 1
    config = TrajectoryConfig(
        dt=cfg["run.dt"], t_final=cfg["run.t_final"], n_traj=cfg["run.n_traj"],
        master_seed=cfg["run.seed"], record_stride=stride,
    )
    h0 = build_h0(hs, ha, alpha)
    ens = ensemble_density(config, model, h0, jump_ops, psi0)
    gen = assemble_generator(model.corr, spin_s, spin_a, h0)
    report = compare_to_master(ens, gen)
    csv_specs = [("trajectories_distance.csv", ["t", "distance"], [report.times, report.distances])]
    summary = {
        "n_traj": cfg["run.n_traj"],
        "kind": cfg["noise.kind"],
        "alpha": alpha,
        "lambda": cfg["noise.lambda"],
        "max_distance": report.max_distance,
        "backend": backend_name(),
    }
    svg = line_plot(
        [("trace distance", report.times, report.distances)],
        title="Trajectory ensemble vs master equation",
        xlabel="t", ylabel="trace distance",
    )
    return csv_specs, summary, [("trajectories_distance.svg", svg)]


def _selftest_checks():
    """Curated fast invariant checks drawn from each module's contract."""
    rng = np.random.default_rng(20240817)
    checks = []

    def record(name, passed, detail=""):
        checks.append({"name": name, "passed": bool(passed), "detail": detail})

    spin2 = make_spin(2)

    # raw nine-term generator vs grouped split form
    worst = 0.0
    for _ in range(3):
        lam = float(rng.uniform(0.1, 2.0))
        alpha = float(rng.uniform(-3.0, 3.0))
        corr = build_correlation(lam, alpha)
        h0 = np.zeros((4, 4), dtype=complex)
        raw = assemble_generator(corr, spin2, spin2, h0).superoperator()
        split = assemble_split_form(corr, spin2, spin2, h0).superoperator()
        worst = max(worst, float(np.abs(raw - split).max()))
    record("generator-forms-agree", worst <= 1e-10, f"max deviation {worst:.2e}")

    # dissipative residual at and off the cancellation point
    lam = 0.7
    h0 = np.zeros((4, 4), dtype=complex)
    gen_on = assemble_generator(build_correlation(lam, -2.0), spin2, spin2, h0)
    gen_off = assemble_generator(build_correlation(lam, 0.0), spin2, spin2, h0)
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    rho_s = np.outer(v, v.conj())
    rho_s /= np.trace(rho_s).real
    r_on = dark_state_residual(gen_on, rho_s, 0.5)
    psi = noon_state(1)
    noon_rho = np.outer(psi, psi.conj())
    r_noon = dark_state_residual(gen_off, noon_rho, 0.5)
    expected = lam / (2.0 * np.sqrt(2.0))
    ok = r_on <= 1e-12 and abs(r_noon - expected) <= 1e-12
    record("dark-state-residual", ok, f"on-point {r_on:.2e}, off-point err {abs(r_noon - expected):.2e}")

    # closed-form dephasing of every off-diagonal element
    spin6 = make_spin(6)
    lam = 0.3
    gen = reduce_system(build_correlation(lam, 0.0), spin6, np.zeros((6, 6), dtype=complex))
    rho0 = np.full((6, 6), 1.0 / 6.0, dtype=complex)
    m = np.diag(spin6.jz).real
    worst = 0.0
    for t, rho in zip([0.5, 2.0], propagate(gen, rho0, [0.5, 2.0])):
        expect = rho0 * np.exp(-0.5 * lam * np.subtract.outer(m, m) ** 2 * t)
        worst = max(worst, float(np.abs(rho - expect).max()))
    record("dephasing-oracle", worst <= 1e-8, f"max deviation {worst:.2e}")

    # white-noise increment covariance vs the correlation matrix
    lam, alpha, dt = 0.1, -2.0, 0.01
    model = NoiseModel(kind="white", corr=build_correlation(lam, alpha))
    path = sample_path(model, dt, 200_000, stream_seed=11)
    emp = path.increments.T @ path.increments / (path.n_steps * dt)
    target = build_correlation(lam, alpha).m
    dev = float(np.abs(emp - target).max() / target.max())
    record("white-covariance", dev <= 0.1, f"relative deviation {dev:.3f}")

    # exact zeros of the generic cancellation functional
    worst = 0.0
    for ell, alpha in [(0.5, -2.0), (-0.5, 2.0), (1.0, -1.0), (2.0, -0.5)]:
        rates = GenericNoiseRates(
            lam_s=1.0, lam_s_sa=-1.0 / (ell * alpha), lam_sa_sa=1.0 / (ell * alpha) ** 2
        )
        worst = max(worst, abs(cancellation_residual(rates, ell, scale_alpha=alpha)))
    record("cancellation-zeros", worst == 0.0, f"max residual {worst:.2e}")

    # ancilla-block reduction vs composite propagation
    hs = build_hs(SystemParams(n_bosons=1, eta=1.0, gamma=0.5, delta=-1.0))
    gen_b = block_reduced_generator(spin2, hs, 0.3, -1.7, 0.5)
    fid_b = []
    times = np.linspace(0.0, 5.0, 26)
    for rho in propagate(gen_b, noon_rho, times):
        fid_b.append(np.trace(rho @ noon_rho).real)
    trace = noon_trace(1, 0.5, -1.7, 0.3,
                       hs_params=SystemParams(1, 1.0, 0.5, -1.0),
                       ha_params=SystemParams(1, 1.0, 0.0, -1.0),
                       t_final=5.0, dt=0.2)
    dev = float(np.abs(np.array(fid_b) - trace.fidelity).max())
    record("block-vs-composite", dev <= 1e-9, f"max fidelity gap {dev:.2e}")

    # stochastic ensemble against the master equation
    eye2 = np.eye(2, dtype=complex)
    jump_ops = [mc.kron(spin2.jz, eye2), mc.kron(eye2, spin2.jz), mc.kron(spin2.jz, spin2.jz)]
    psi0 = np.kron(noon_state(1), np.array([1.0, 0.0], dtype=complex))
    model = NoiseModel(kind="white", corr=build_correlation(0.2, 0.0))
    config = TrajectoryConfig(dt=1e-3, t_final=2.0, n_traj=1000, master_seed=3, record_stride=100)
    h0_c = np.zeros((4, 4), dtype=complex)
    ens = ensemble_density(config, model, h0_c, jump_ops, psi0)
    gen_c = assemble_generator(model.corr, spin2, spin2, h0_c)
    report = compare_to_master(ens, gen_c)
    record("trajectory-vs-master", report.max_distance <= 0.1,
           f"max trace distance {report.max_distance:.3f}")

    # bit-identical ensembles from the same seed
    cfg_small = TrajectoryConfig(dt=1e-3, t_final=0.2, n_traj=16, master_seed=5, record_stride=20)
    ens_a = ensemble_density(cfg_small, model, np.zeros((4, 4), dtype=complex), jump_ops, psi0)
    ens_b = ensemble_density(cfg_small, model, np.zeros((4, 4), dtype=complex), jump_ops, psi0)
    identical = np.array_equal(ens_a.rho_avg, ens_b.rho_avg)
    record("seed-determinism", identical, "ensembles are bitwise equal" if identical else "mismatch")

    # 17-digit float round trip used by the CSV writer
    vals = [0.1, 1.0 / 3.0, 1e-17, 6.02214076e23, -2.5e-4]
    ok = all(float(_fmt_float(v)) == v for v in vals)
    record("csv-roundtrip", ok, "")

    return checks


def _cmd_selftest(cfg: RunConfig, args):
    checks = _selftest_checks()
    for c in checks:
        tag = "PASS" if c["passed"] else "FAIL"
        detail = f"  ({c['detail']})" if c["detail"] else ""
        print(f"{tag}  {c['name']}{detail}")
    all_passed = all(c["passed"] for c in checks)
    summary = {"checks": checks, "all_passed": all_passed}
    if not all_passed:
        raise DriftError("selftest found failing invariants")
    return [], summary, []


_HANDLERS = {
    "fig2": _cmd_fig2,
    "fig3a": _cmd_fig3a,
    "fig3b": _cmd_fig3b,
    "sweep": _cmd_sweep,
    "robustness": _cmd_robustness,
    "colored": _cmd_colored,
    "trajectories": _cmd_trajectories,
    "selftest": _cmd_selftest,
}


def _run(args) -> int:
    cfg = resolve_config(args.command, args.config, _collect_overrides(args))
    outdir = _resolve_outdir(cfg)
    started = time.perf_counter()
    summary_holder = {}
    try:
        csv_specs, summary, svg_specs = _HANDLERS[args.command](cfg, args)
        summary_holder["summary"] = summary
        failed = False
    except DriftError as exc:
        # still emit the manifest so the failure is on record
        if args.command == "selftest":
            csv_specs, svg_specs = [], []
            summary = {"error": str(exc)}
            failed = True
        else:
            raise
    duration = time.perf_counter() - started

    os.makedirs(outdir, exist_ok=True)
    formats = cfg.formats()
    outputs = []

    def _register(name):
        outputs.append({"path": name, "sha256": _sha256(os.path.join(outdir, name))})

    try:
        if "csv" in formats:
            for name, header, columns in csv_specs:
                _write_csv(os.path.join(outdir, name), header, columns)
                _register(name)
        if "json" in formats and not failed:
            name = f"{args.command}_summary.json"
            _write_json(os.path.join(outdir, name), summary)
            _register(name)
        if "svg" in formats:
            for name, text in svg_specs:
                with open(os.path.join(outdir, name), "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
                _register(name)
        manifest = {
            "command": args.command,
            "version": __version__,
            "config": cfg.values,
            "seed": cfg["run.seed"],
            "duration_s": duration,
            "backend": backend_name(),
            "outputs": outputs,
        }
        _write_json(os.path.join(outdir, f"manifest_{args.command}.json"), manifest)
    except OSError as exc:
        raise OSError(f"cannot write outputs under '{outdir}': {exc}") from exc

    if failed:
        print("selftest: FAILED", file=sys.stderr)
        return 2
    _print_outcome(args.command, summary_holder["summary"], outdir)
    return 0


def _print_outcome(command: str, summary: dict, outdir: str) -> None:
    notes = []
    for key in ("peak_alpha", "fwhm", "gamma_fit", "gamma_formula", "rate_satisfied",
                "rate_violated", "max_distance", "all_passed"):
        if isinstance(summary, dict) and key in summary and not isinstance(summary[key], dict):
            val = summary[key]
            notes.append(f"{key}={val:.6g}" if isinstance(val, float) else f"{key}={val}")
    tail = f" ({', '.join(notes)})" if notes else ""
    print(f"{command}: outputs written to {outdir}{tail}")


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors by exiting
        return int(exc.code or 0)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"darkstate: config error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"darkstate: i/o error: {exc}", file=sys.stderr)
        return 1
    except (DriftError, ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"darkstate: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
