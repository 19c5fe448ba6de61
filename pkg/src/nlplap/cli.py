"""Command-line front end.

Subcommands::

    nlplap solve             --config CFG --out DIR
    nlplap study-space       --config CFG --out DIR
    nlplap study-time        --config CFG --out DIR
    nlplap study-graph       --config CFG --out DIR [--threads N]
    nlplap sample-graph      --config CFG --out DIR [--seed S]
    nlplap verify-properties

Config files are flat ``key = value`` lines with ``#`` comments, e.g.::

    kernel.variant = powerlaw
    kernel.beta    = 0.5
    p              = 1.5
    scheme.name    = backward
    data.preset    = ramp
    mesh.n         = 128
    time.horizon   = 0.5
    time.tau       = 1e-2

Exit codes: 0 success, 1 fitted slope outside the configured acceptance
window, 2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import graphs as graphmod
from .analysis import study_graph, study_space, study_time
from .evolve import (
    HorizonUnreachable,
    Problem,
    StepUnderflow,
    TimeConstantSource,
    ZeroSource,
    backward_euler,
    forward_euler,
    subgradient_p1,
)
from .kernels import kernel_from_config
from .meshes import project_function, project_kernel, uniform_mesh
from .operators import NoConvergence
from .properties import run_all
from .report import (
    render_rate_figure,
    render_trajectory_figure,
    write_rate_csv,
    write_rate_json,
    write_trajectory_csv,
    write_trajectory_json,
)

EXIT_OK = 0
EXIT_SLOPE = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# Config parsing


def parse_config(path) -> dict[str, str]:
    cfg = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"{path}:{lineno}: empty key or value")
        if key in cfg:
            raise ConfigError(f"{path}:{lineno}: duplicate key '{key}'")
        cfg[key] = value
    return cfg


def _get(cfg, key, default=None, required=False):
    if key in cfg:
        return cfg[key]
    if required:
        raise ConfigError(f"missing required key '{key}'")
    return default


def _get_float(cfg, key, default=None, required=False):
    raw = _get(cfg, key, required=required)
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}': not a number: {raw!r}") from exc


def _get_int(cfg, key, default=None, required=False):
    raw = _get(cfg, key, required=required)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}': not an integer: {raw!r}") from exc


def _get_list(cfg, key, cast, required=False):
    raw = _get(cfg, key, required=required)
    if raw is None:
        return None
    try:
        return [cast(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ConfigError(f"key '{key}': bad list: {raw!r}") from exc


def build_kernel(cfg):
    variant = _get(cfg, "kernel.variant", required=True)
    params = {
        "beta": _get_float(cfg, "kernel.beta"),
        "c": _get_float(cfg, "kernel.c"),
    }
    try:
        return kernel_from_config(variant, {k: v for k, v in params.items() if v is not None})
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"kernel: {exc}") from exc


PRESETS = {
    "stationary": lambda value: (lambda x: np.full_like(np.asarray(x, float), value)),
    "ramp": lambda value: (lambda x: value * np.asarray(x, float)),
    "step": lambda value: (lambda x: value * (np.asarray(x, float) > 0.5).astype(float)),
    "bump": lambda value: (lambda x: value * np.sin(np.pi * np.asarray(x, float)) ** 2),
}
PRESETS["two-node"] = PRESETS["step"]


def build_data(cfg):
    preset = _get(cfg, "data.preset", default="step")
    value = _get_float(cfg, "data.value", default=1.0)
    if preset not in PRESETS:
        raise ConfigError(f"unknown data.preset '{preset}' (choose from {sorted(PRESETS)})")
    return PRESETS[preset](value)


def build_source(cfg, mesh):
    c = _get_float(cfg, "source.constant")
    if c is None:
        return ZeroSource()
    return TimeConstantSource(project_function(lambda x: np.full_like(np.asarray(x, float), c), mesh))


def check_scheme_p(scheme: str, p: float):
    if scheme == "forward" and not (1.0 < p <= 2.0):
        raise ConfigError(f"forward Euler requires p in (1, 2], got p={p}")
    if scheme == "subgradient" and p != 1.0:
        raise ConfigError(f"the diminishing-step scheme requires p=1, got p={p}")
    if scheme == "backward" and not p > 1.0:
        raise ConfigError(f"backward Euler requires p > 1, got p={p}")
    if scheme not in ("forward", "backward", "subgradient"):
        raise ConfigError(f"unknown scheme.name '{scheme}'")


def _echo_config(cfg: dict, out: Path, extra: dict | None = None):
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {v}" for k, v in sorted(cfg.items())]
    for k, v in sorted((extra or {}).items()):
        lines.append(f"{k} = {v}")
    (out / "config_echo.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _slope_verdict(cfg, result) -> tuple[dict, int]:
    lo = _get_float(cfg, "accept.slope_min")
    hi = _get_float(cfg, "accept.slope_max")
    verdict = {"slope": result.slope, "slope_min": lo, "slope_max": hi}
    code = EXIT_OK
    if lo is not None and result.slope < lo:
        code = EXIT_SLOPE
    if hi is not None and result.slope > hi:
        code = EXIT_SLOPE
    verdict["within_window"] = code == EXIT_OK
    return verdict, code


# ---------------------------------------------------------------------------
# Subcommands


def cmd_solve(args) -> int:
    cfg = parse_config(args.config)
    kernel = build_kernel(cfg)
    p = _get_float(cfg, "p", required=True)
    scheme = _get(cfg, "scheme.name", required=True)
    check_scheme_p(scheme, p)
    n = _get_int(cfg, "mesh.n", required=True)
    T = _get_float(cfg, "time.horizon", required=True)
    if n < 1 or T <= 0:
        raise ConfigError("mesh.n must be >= 1 and time.horizon positive")
    mesh = uniform_mesh(n)
    g = project_function(build_data(cfg), mesh)
    prob = Problem(project_kernel(kernel, mesh), p, g, build_source(cfg, mesh), T)
    if scheme == "forward":
        traj = forward_euler(
            prob,
            tau_max=_get_float(cfg, "time.tau_max", required=True),
            safety=_get_float(cfg, "time.safety", default=0.9),
        )
    elif scheme == "subgradient":
        traj = subgradient_p1(prob, alpha0=_get_float(cfg, "time.alpha0", required=True))
    else:
        tau = _get_float(cfg, "time.tau", required=True)
        traj = backward_euler(
            prob,
            max(1, round(T / tau)),
            solve_tol=_get_float(cfg, "solver.tol"),
            max_iters=_get_int(cfg, "solver.max_iters", default=500),
        )
    out = Path(args.out)
    _echo_config(cfg, out)
    write_trajectory_csv(traj, out / "trajectory.csv")
    write_trajectory_json(traj, out / "trajectory.json", extra={"p": p, "scheme": scheme})
    render_trajectory_figure(traj, out / "trajectory.png")
    print(f"solve: scheme={scheme} p={p} n={n} steps={len(traj.steps)} -> {out}")
    return EXIT_OK


def _study_common(cfg):
    kernel = build_kernel(cfg)
    p = _get_float(cfg, "p", required=True)
    g = build_data(cfg)
    T = _get_float(cfg, "time.horizon", required=True)
    return kernel, p, g, T


def _emit_study(cfg, result, out: Path, param_name: str, title: str) -> int:
    verdict, code = _slope_verdict(cfg, result)
    _echo_config(cfg, out)
    write_rate_csv(result, out / "rates.csv", param_name=param_name)
    write_rate_json(result, out / "rates.json", verdict=verdict)
    render_rate_figure(result, out / "rates.png", param_name, title)
    window = ""
    if verdict["slope_min"] is not None or verdict["slope_max"] is not None:
        window = f" window=[{verdict['slope_min']}, {verdict['slope_max']}]" + (
            " OK" if verdict["within_window"] else " FAIL"
        )
    print(f"{title}: slope={result.slope:.4f}{window} -> {out}")
    return code


def cmd_study_space(args) -> int:
    cfg = parse_config(args.config)
    kernel, p, g, T = _study_common(cfg)
    scheme = _get(cfg, "scheme.name", default="backward")
    check_scheme_p(scheme, p)
    result = study_space(
        kernel,
        g,
        None,
        p,
        n_list=_get_list(cfg, "mesh.n_list", int, required=True),
        n_ref=_get_int(cfg, "mesh.n_ref", required=True),
        T=T,
        tau=_get_float(cfg, "time.tau", required=True),
        scheme=scheme,
        solve_tol=_get_float(cfg, "solver.tol", default=1e-10),
        time_samples=_get_int(cfg, "study.time_samples", default=16),
    )
    return _emit_study(cfg, result, Path(args.out), "delta", "space rate")


def cmd_study_time(args) -> int:
    cfg = parse_config(args.config)
    kernel, p, g, T = _study_common(cfg)
    scheme = _get(cfg, "scheme.name", default="backward")
    check_scheme_p(scheme, p)
    result = study_time(
        kernel,
        g,
        None,
        p,
        n_fixed=_get_int(cfg, "mesh.n", required=True),
        tau_list=_get_list(cfg, "time.tau_list", float, required=True),
        T=T,
        scheme=scheme,
        solve_tol=_get_float(cfg, "solver.tol", default=1e-10),
        ref_factor=_get_int(cfg, "study.ref_factor", default=16),
        time_samples=_get_int(cfg, "study.time_samples", default=16),
    )
    return _emit_study(cfg, result, Path(args.out), "tau", "time rate")


def cmd_study_graph(args) -> int:
    cfg = parse_config(args.config)
    kernel, p, g, T = _study_common(cfg)
    check_scheme_p("backward", p)
    exponent = _get_float(cfg, "graph.rho_exponent", default=0.25)
    rho_fixed = _get_float(cfg, "graph.rho")
    rho_of_n = (lambda n: rho_fixed) if rho_fixed is not None else (lambda n: n ** (-exponent))
    n_seeds = _get_int(cfg, "graph.seeds", default=10)
    base = args.seed if args.seed is not None else 0
    result = study_graph(
        kernel,
        g,
        None,
        p,
        n_list=_get_list(cfg, "mesh.n_list", int, required=True),
        rho_of_n=rho_of_n,
        seeds=range(base, base + n_seeds),
        T=T,
        tau=_get_float(cfg, "time.tau", required=True),
        solve_tol=_get_float(cfg, "solver.tol", default=1e-10),
        time_samples=_get_int(cfg, "study.time_samples", default=16),
        threads=args.threads,
    )
    return _emit_study(cfg, result, Path(args.out), "rho_n", "graph sampling rate")


def cmd_sample_graph(args) -> int:
    cfg = parse_config(args.config)
    kernel = build_kernel(cfg)
    n = _get_int(cfg, "mesh.n", required=True)
    rho = _get_float(cfg, "graph.rho")
    if rho is None:
        rho = n ** (-_get_float(cfg, "graph.rho_exponent", default=0.25))
    if not 0 < rho:
        raise ConfigError("graph.rho must be positive")
    seed = args.seed if args.seed is not None else _get_int(cfg, "graph.seed", default=0)
    mesh = uniform_mesh(n)
    weights = graphmod.truncate(project_kernel(kernel, mesh), rho)
    sample = graphmod.sample(weights, seed)
    out = Path(args.out)
    _echo_config(cfg, out, extra={"resolved.rho": rho, "resolved.seed": seed})
    graphmod.write_edge_list(sample, out / "edges.txt")
    graphmod.write_stats_json(sample, out / "stats.json")
    s = graphmod.stats(sample)
    print(
        f"sample-graph: n={n} rho={rho:.6g} seed={seed} "
        f"edges={s['edge_count']} mean_degree={s['mean_degree']:.4f} -> {out}"
    )
    return EXIT_OK


def cmd_verify_properties(args) -> int:
    failures = 0
    for name, passed, detail in run_all():
        status = "PASS" if passed else "FAIL"
        print(f"[{status}] {name}: {detail}")
        failures += 0 if passed else 1
    return EXIT_OK if failures == 0 else EXIT_SLOPE


# ---------------------------------------------------------------------------
# Entry point


def _add_common(sub, out_required=True):
    sub.add_argument("--config", required=True, help="flat key=value config file")
    sub.add_argument("--out", required=out_required, help="output directory")
    sub.add_argument("--seed", type=int, default=None, help="base RNG seed")
    sub.add_argument("--threads", type=int, default=1, help="worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlplap",
        description="Nonlocal p-Laplacian evolution: solvers, graph sampling, rate studies.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, fn in [
        ("solve", cmd_solve),
        ("study-space", cmd_study_space),
        ("study-time", cmd_study_time),
        ("study-graph", cmd_study_graph),
        ("sample-graph", cmd_sample_graph),
    ]:
        sub = subs.add_parser(name)
        _add_common(sub)
        sub.set_defaults(fn=fn)
    sub = subs.add_parser("verify-properties")
    sub.set_defaults(fn=cmd_verify_properties)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoConvergence as exc:
        print(f"solver failure: resolvent did not converge ({exc})", file=sys.stderr)
        return EXIT_SOLVER
    except (StepUnderflow, HorizonUnreachable) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
