"""Command-line entry point.

Exit codes: 0 success, 1 physics failure (e.g. an unstable configuration
without ``--allow-unstable``), 2 configuration error.
"""

from __future__ import annotations

import argparse
import io
import math
import sys

import numpy as np

from . import __version__
from .budget import budget_table, format_summary, report_header, temperature_report
from .cavity import default_grid, dump_rows
from .errors import ConfigError, PhysicsError
from .feedback import close_loop
from .params import FeedbackKernel, SystemConfig, TWO_PI, derived_table
from .spring import SpringStack, quadratic_form, solve_detuning, solve_detuning_general, stability

METRICS = ("omega_os", "Q_eff", "T_res", "stability_margin")
EXIT_OK, EXIT_PHYSICS, EXIT_CONFIG = 0, 1, 2


# -- helpers -------------------------------------------------------------------

def _load(args) -> SystemConfig:
    if not args.config:
        raise ConfigError("--config PATH is required for this subcommand")
    return SystemConfig.load(args.config)


def _emit(args, text: str) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv(header_lines, columns, data) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(line + "\n")
    buf.write(",".join(columns) + "\n")
    np.savetxt(buf, np.atleast_2d(data), fmt="%.12e", delimiter=",")
    return buf.getvalue()


def _grid(args, cfg: SystemConfig):
    if args.freq_range:
        lo, hi = args.freq_range
        if not 0 < lo <= hi:
            raise ConfigError("--freq-range needs 0 < FMIN <= FMAX")
        return TWO_PI * np.logspace(math.log10(lo), math.log10(hi), args.points)
    return default_grid(cfg.mechanical().omega_m, cfg.optical_fields(), args.points)


def _kernel_arg(text: str | None, cfg: SystemConfig) -> FeedbackKernel:
    if text is None:
        return cfg.feedback
    if text == "ideal":
        return FeedbackKernel.ideal()
    if text == "off":
        return FeedbackKernel.off()
    try:
        return FeedbackKernel.flat(float(text))
    except ValueError as exc:
        raise ConfigError(f"--gain must be a number, 'ideal' or 'off', got {text!r}") from exc


def _loop_factor(kernel: FeedbackKernel, omega: float):
    if kernel.kind == "off":
        return None
    if kernel.is_ideal:
        return 1.0
    K = complex(kernel(omega))
    return (K / (1.0 + K)).real


# -- subcommands ---------------------------------------------------------------

def cmd_config_validate(args) -> int:
    cfg = _load(args)
    rows = derived_table(cfg)
    width = max(len(k) for k, _ in rows)
    lines = report_header(cfg, "derived quantities")
    lines += [f"{k:<{width}}  {v}" for k, v in rows]
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_cavity_dump(args) -> int:
    cfg = _load(args)
    fields_ = cfg.optical_fields()
    if not fields_:
        raise ConfigError("configuration has no [[field]] entries")
    labels = [f.label for f in fields_]
    label = args.field or labels[0]
    if label not in labels:
        raise ConfigError(f"unknown field {label!r}; available: {labels}")
    f = fields_[labels.index(label)]
    header, data = dump_rows(f, _grid(args, cfg))
    _emit(args, _csv(report_header(cfg, f"cavity dump: {label}"), header, data))
    return EXIT_OK


def cmd_solve_detuning(args) -> int:
    if args.free_delta_b:
        cfg = _load(args)
        labels = [f.label for f in cfg.fields]
        for need in (args.blue, args.red):
            if need not in labels:
                raise ConfigError(f"field {need!r} not in configuration; available: {labels}")
        sol = solve_detuning_general(cfg.field_input(args.blue), cfg.field_input(args.red),
                                     cfg.oscillator.m, cfg.constants, mode=args.mode,
                                     omega_m=cfg.mechanical().omega_m)
        print(f"Delta_B_hz = {sol.Delta_B / TWO_PI:.12g}")
        print(f"residual_im_K_tot = {sol.residual_im_K:.6e}")
        print(f"omega_ref = {sol.omega_ref:.12g}")
        return EXIT_OK
    if None in (args.kappa, args.gamma_hz, args.delta_r_hz):
        raise ConfigError("closed form needs --kappa, --gamma-hz and --delta-r-hz (or use --free-delta-b)")
    d_b = solve_detuning(args.kappa, TWO_PI * args.gamma_hz, TWO_PI * args.delta_r_hz)
    print(f"Delta_B_hz = {d_b / TWO_PI:.12g}")
    g, dr = args.gamma_hz, args.delta_r_hz
    resid = g * args.kappa**2 / (g**2 + (d_b / TWO_PI) ** 2) - g / (g**2 + dr**2)
    print(f"residual_im_K_tot = {resid:.6e}  (damping bracket per unit red spring, 1/Hz)")
    return EXIT_OK


def cmd_stability(args) -> int:
    cfg = _load(args)
    mech = cfg.mechanical()
    stack = SpringStack(cfg.optical_fields())
    kernel = _kernel_arg(args.gain, cfg)
    w_ref = math.sqrt(abs(mech.omega_m**2 + stack.stiffness() / mech.m))
    res = stability(*quadratic_form(mech, stack, _loop_factor(kernel, w_ref)))
    lines = report_header(cfg, "stability")
    lines += [f"kernel          {kernel.kind}",
              f"Gamma           {res.Gamma:.10g}",
              f"Omega_sq        {res.Omega_sq:.10g}"]
    lines += [f"pole[{i}]         {p.real:.10g} {p.imag:+.10g}j" for i, p in enumerate(res.poles)]
    lines += [f"margin          {res.margin:.10g}", f"verdict         {'STABLE' if res.stable else 'UNSTABLE'}"]
    print("\n".join(lines))
    if not res.stable and not args.allow_unstable:
        return EXIT_PHYSICS
    return EXIT_OK


def cmd_closed_loop(args) -> int:
    cfg = _load(args)
    kernel = _kernel_arg(args.gain, cfg)
    omega = _grid(args, cfg)
    res = close_loop(cfg.mechanical(), SpringStack(cfg.optical_fields()), cfg.detector, kernel, omega, args.mode)
    chi = np.asarray(res.chi_inv_closed) * np.ones_like(omega)
    contrib = res.residual_force.contributions()
    chans = sorted(contrib, key=str)
    header = ["omega", "re_chi_inv", "im_chi_inv", "S_F_residual"] + [f"S_{c}" for c in chans]
    cols = [omega, chi.real, chi.imag, np.asarray(res.residual_force.spectral_density()) * np.ones_like(omega)]
    cols += [np.asarray(contrib[c]) * np.ones_like(omega) for c in chans]
    lines = report_header(cfg, f"closed loop: kernel={kernel.kind}, mode={args.mode}")
    _emit(args, _csv(lines, header, np.column_stack(cols)))
    return EXIT_OK


def cmd_budget(args) -> int:
    cfg = _load(args)
    report = temperature_report(cfg, None if args.omega_eval_hz is None else TWO_PI * args.omega_eval_hz)
    if args.summary:
        sys.stdout.write(format_summary(report, cfg))
    if args.out or not args.summary:
        header, data = budget_table(cfg, _grid(args, cfg), args.mode)
        _emit(args, _csv(report_header(cfg, f"displacement budget ({args.mode})"), header, data))
    if not report.stable and not args.allow_unstable:
        print(f"UNSTABLE configuration (required open-loop gain {report.required_gain:.6g})", file=sys.stderr)
        return EXIT_PHYSICS
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .oracle import TrajectoryConfig, merge_estimates, psd_welch, simulate_many

    cfg = _load(args)
    traj = TrajectoryConfig(dt=args.dt, duration=args.duration, seed=args.seed, decimate=args.decimate)
    seeds = [args.seed + k for k in range(args.trajectories)]
    results = simulate_many(cfg, traj, seeds, threads=args.threads)
    bad = [r.seed for r in results if r.unstable]
    for r in results:
        print(f"seed {r.seed}: {r.status} after {r.steps} steps", file=sys.stderr)
    if bad:
        if not args.allow_unstable:
            return EXIT_PHYSICS
        return EXIT_OK
    n = min(r.x.size for r in results)
    seg = int(2 * n // (args.segments + 1))
    est = merge_estimates([psd_welch(r.x[:n], r.fs, seg) for r in results])
    lines = report_header(cfg, "simulated displacement PSD")
    lines += [f"# dt: {args.dt!r}", f"# duration: {args.duration!r}", f"# seeds: {seeds}",
              f"# segments: {est.n_segments}"]
    _emit(args, _csv(lines, ["f_hz", "psd_x", "rel_std"], np.column_stack([est.freqs, est.psd, est.rel_std])))
    return EXIT_OK


def cmd_verify(args) -> int:
    from .oracle import verify

    results = verify(seed=args.seed, scale=args.scale)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_PHYSICS


def _set_path(data: dict, path: str, value: float) -> None:
    parts = path.split(".")
    if parts[0] == "field" and len(parts) == 3:
        for f in data.get("field", []):
            if f.get("label") == parts[1]:
                if parts[2] not in f or parts[2] == "label":
                    raise ConfigError(f"unknown field parameter {parts[2]!r}")
                f[parts[2]] = value
                return
        raise ConfigError(f"no field labelled {parts[1]!r}")
    if len(parts) == 2 and parts[0] in ("oscillator", "detector", "feedback"):
        section = data.setdefault(parts[0], {})
        allowed = {"oscillator": ("m", "f_m", "Q", "T_env"), "detector": ("eta",), "feedback": ("gain",)}[parts[0]]
        if parts[1] not in allowed:
            raise ConfigError(f"{path!r} is not a numeric configuration leaf")
        section[parts[1]] = value
        return
    raise ConfigError(f"unknown parameter path {path!r}; use oscillator.KEY, detector.eta, "
                      "feedback.gain or field.LABEL.KEY")


def _metric(cfg: SystemConfig, metric: str, labels) -> list:
    mech = cfg.mechanical()
    stack = SpringStack(cfg.optical_fields())
    if metric == "omega_os":
        w2 = stack.stiffness() / mech.m
        return [w2, math.copysign(math.sqrt(abs(w2)), w2)]
    if metric == "Q_eff":
        return [temperature_report(cfg).Q_eff]
    if metric == "T_res":
        rep = temperature_report(cfg)
        return [rep.T_res[lab] for lab in labels]
    w_ref = math.sqrt(abs(mech.omega_m**2 + stack.stiffness() / mech.m))
    return [stability(*quadratic_form(mech, stack, _loop_factor(cfg.feedback, w_ref))).margin]


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if args.metric not in METRICS:
        raise ConfigError(f"unknown metric {args.metric!r}; choose from {METRICS}")
    base = cfg.to_dict()
    _set_path(base, args.param, 0.0)  # validate the path before sweeping
    lo, hi = args.range
    values = np.array([lo]) if lo == hi else np.linspace(lo, hi, args.points)
    labels = [f.label for f in cfg.fields]
    names = {"omega_os": ["omega_os_sq", "omega_os"], "Q_eff": ["Q_eff"],
             "T_res": [f"T_res_{lab}" for lab in labels], "stability_margin": ["stability_margin"]}[args.metric]
    rows, status = [], []
    for v in values:
        data = cfg.to_dict()
        _set_path(data, args.param, float(v))
        try:
            rows.append(_metric(SystemConfig.from_dict(data), args.metric, labels))
            status.append("ok")
        except (ConfigError, PhysicsError) as exc:
            rows.append([math.nan] * len(names))
            status.append(type(exc).__name__)
    lines = report_header(cfg, f"sweep {args.param} -> {args.metric}")
    buf = io.StringIO()
    buf.write("\n".join(lines) + "\n")
    buf.write(",".join([args.param] + names + ["status"]) + "\n")
    for v, r, s in zip(values, rows, status):
        buf.write(",".join([f"{v:.12e}"] + [f"{x:.12e}" for x in r] + [s]) + "\n")
    _emit(args, buf.getvalue())
    return EXIT_OK


# -- parser ----------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS, help="TOML configuration file")
    p.add_argument("--out", metavar="PATH", default=argparse.SUPPRESS, help="write data output here")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (unsigned 64-bit)")
    return p


def _grid_flags(p):
    p.add_argument("--freq-range", nargs=2, type=float, metavar=("FMIN", "FMAX"), help="frequency range in Hz")
    p.add_argument("--points", type=int, default=400, help="number of log-spaced frequencies")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optospring", description=__doc__.splitlines()[0],
                                     parents=[_common()])
    parser.set_defaults(config=None, out=None, threads=1, seed=0)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common()

    p = sub.add_parser("config-validate", parents=[common], help="print every derived quantity")
    p.set_defaults(func=cmd_config_validate)

    p = sub.add_parser("cavity-dump", parents=[common], help="per-frequency spring and force-noise CSV")
    p.add_argument("--field", help="field label (default: first field)")
    _grid_flags(p)
    p.set_defaults(func=cmd_cavity_dump)

    p = sub.add_parser("solve-detuning", parents=[common], help="blue detuning for zero net damping")
    p.add_argument("--kappa", type=float, help="|omega_osB / omega_osR| (> 1)")
    p.add_argument("--gamma-hz", type=float, help="common cavity half-width in Hz")
    p.add_argument("--delta-r-hz", type=float, help="red detuning in Hz")
    p.add_argument("--free-delta-b", action="store_true", help="solve numerically for the configured stack")
    p.add_argument("--blue", default="blue", help="label of the blue field")
    p.add_argument("--red", default="red", help="label of the red field")
    p.add_argument("--mode", choices=("exact", "approx"), default="exact")
    p.set_defaults(func=cmd_solve_detuning)

    p = sub.add_parser("stability", parents=[common], help="pole locations of the quadratic susceptibility")
    p.add_argument("--gain", help="flat gain, 'ideal' or 'off' (default: configured kernel)")
    p.add_argument("--allow-unstable", action="store_true")
    p.set_defaults(func=cmd_stability)

    p = sub.add_parser("closed-loop", parents=[common], help="closed-loop susceptibility and residual force CSV")
    p.add_argument("--gain", help="flat gain, 'ideal' or 'off' (default: configured kernel)")
    p.add_argument("--mode", choices=("exact", "approx"), default="approx")
    _grid_flags(p)
    p.set_defaults(func=cmd_closed_loop)

    p = sub.add_parser("budget", parents=[common], help="displacement noise budget and temperature report")
    p.add_argument("--mode", choices=("open", "closed"), default="open")
    p.add_argument("--summary", action="store_true", help="print the temperature report")
    p.add_argument("--omega-eval-hz", type=float, help="evaluation frequency for T_res in Hz")
    p.add_argument("--allow-unstable", action="store_true")
    _grid_flags(p)
    p.set_defaults(func=cmd_budget)

    p = sub.add_parser("simulate", parents=[common], help="time-domain trajectory and displacement PSD")
    p.add_argument("--dt", type=float, required=True, help="integration step in s")
    p.add_argument("--duration", type=float, required=True, help="trajectory length in s")
    p.add_argument("--segments", type=int, default=32, help="Welch segments per trajectory")
    p.add_argument("--decimate", type=int, default=1, help="keep every n-th sample")
    p.add_argument("--trajectories", type=int, default=1, help="independent seeds to average")
    p.add_argument("--allow-unstable", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", parents=[common], help="canonical time-domain comparison suite")
    p.add_argument("--scale", type=float, default=1.0, help="multiply every trajectory duration")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", parents=[common], help="metric versus one configuration parameter")
    p.add_argument("--param", required=True, help="oscillator.KEY, detector.eta, feedback.gain or field.LABEL.KEY")
    p.add_argument("--range", nargs=2, type=float, required=True, metavar=("START", "STOP"))
    p.add_argument("--points", type=int, default=11)
    p.add_argument("--metric", required=True, help=f"one of {', '.join(METRICS)}")
    p.set_defaults(func=cmd_sweep)
    return parser


def _normalise(argv: list) -> list:
    """Accept ``config validate`` and ``cavity dump`` as two words."""
    pairs = {("config", "validate"): "config-validate", ("cavity", "dump"): "cavity-dump"}
    for i in range(len(argv) - 1):
        key = (argv[i], argv[i + 1])
        if key in pairs:
            return argv[:i] + [pairs[key]] + argv[i + 2:]
    return argv


def main(argv=None) -> int:
    argv = _normalise(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PhysicsError as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS


if __name__ == "__main__":
    raise SystemExit(main())
