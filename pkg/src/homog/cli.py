"""Command-line front end.

Every subcommand accepts ``--config PATH`` (a JSON object whose keys override
the flags), writes its artifacts under ``--out`` and exits with 0 on success,
1 when a numerical acceptance check fails or the computation errors, and 2
on usage errors.  Failures print one JSON object on stderr.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import output
from .bundle import prepare
from .cell import voigt_reuss
from .estimates import (
    PiecewiseForce,
    TorusData,
    cauchy_error,
    fiber_error,
    loglog_slope,
    rate_experiment,
    sharpness_probe,
)
from .fields import EXAMPLES, ExampleCase, field_from_trig, get_example, random_trig_field, symbol_elasticity, symbol_gradient, symbol_hill
from .germ import germ_package, lowest_bands
from .lattice import brillouin_grid, cubic_lattice, sphere_directions
from .reproduce import PIPELINES, Row, reproduce


class ConfigError(click.UsageError):
    """A config file or flag combination that does not validate."""


class AcceptanceFailure(Exception):
    """A numerical check ran to completion and did not pass."""


COMMON_KEYS = {"example", "example_params", "field", "cutoff", "grid", "threads", "seed", "out"}
SYMBOLS = {"gradient": symbol_gradient, "elasticity": symbol_elasticity, "hill": symbol_hill}


def _threads(value) -> int:
    if value is None:
        value = os.environ.get("HOMOG_THREADS", 1)
    try:
        n = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"threads must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError("threads must be >= 1")
    return n


def common_options(fn):
    """The shared flags, accepted after the subcommand as well as before it."""
    for opt in reversed([
        click.option("--config", "sub_config", type=click.Path(exists=True, dir_okay=False), default=None, help="JSON file overriding the flags."),
        click.option("--out", "sub_out", type=click.Path(file_okay=False), default=None, help="Directory for artifacts."),
        click.option("--threads", "sub_threads", type=int, default=None, help="Worker threads (fallback: HOMOG_THREADS)."),
        click.option("--seed", "sub_seed", type=int, default=None, help="Seed for randomized fields."),
        click.option("--cutoff", "sub_cutoff", type=click.IntRange(min=1), default=None, help="Fourier cutoff N."),
        click.option("--grid", "sub_grid", type=click.IntRange(min=1), default=None, help="k-grid points per axis."),
    ]):
        fn = opt(fn)
    return fn


def _load_config(path) -> dict:
    try:
        config = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    return config


def _resolve(ctx: click.Context, flags: dict, defaults: dict, allowed: set) -> dict:
    """defaults < explicit flags < config file; unknown config keys are rejected."""
    sub = {k[4:]: flags.pop(k) for k in list(flags) if k.startswith("sub_")}
    sub_config = sub.pop("config", None)
    if sub_config is not None:
        ctx.obj["config"] = {**ctx.obj["config"], **_load_config(sub_config)}
    params = dict(defaults)
    params.update(ctx.obj["common"])
    params.update({k: v for k, v in sub.items() if v is not None})
    params.update({k: v for k, v in flags.items() if v is not None and v != ()})
    config = ctx.obj["config"]
    unknown = set(config) - allowed - COMMON_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    params.update(config)
    params["threads"] = _threads(params.get("threads"))
    out = Path(params.get("out") or ".")
    out.mkdir(parents=True, exist_ok=True)
    params["out"] = out
    return params


def _trig_terms(terms) -> dict:
    coefs = {}
    for term in terms:
        nu = tuple(int(v) for v in term["nu"])
        re = np.asarray(term.get("re", 0.0), dtype=float)
        im = np.asarray(term.get("im", 0.0), dtype=float)
        coefs[nu] = np.atleast_2d(re + 1j * im)
    return coefs


def _inline_case(spec: dict, seed: int | None) -> ExampleCase:
    """A case from a config object: trigonometric terms or a seeded random field."""
    allowed = {"dim", "symbol", "terms", "Q_terms", "random", "name"}
    unknown = set(spec) - allowed
    if unknown:
        raise ConfigError(f"unknown field keys: {', '.join(sorted(unknown))}")
    dim = int(spec.get("dim", 2))
    lat = cubic_lattice(dim)
    sym_name = spec.get("symbol", "gradient")
    if sym_name not in SYMBOLS:
        raise ConfigError(f"symbol must be one of {sorted(SYMBOLS)}")
    sym = SYMBOLS[sym_name](dim)
    if "random" in spec:
        r = spec["random"]
        rng = np.random.default_rng(seed if seed is not None else 0)
        g = random_trig_field(lat, sym.m, int(r.get("degree", 1)), rng, amplitude=float(r.get("amplitude", 0.3)),
                              real=bool(r.get("real", False)))
    elif "terms" in spec:
        g = field_from_trig(_trig_terms(spec["terms"]), lat)
    else:
        raise ConfigError("an inline field needs 'terms' or 'random'")
    if g.rows != sym.m:
        raise ConfigError(f"field is {g.rows}x{g.cols}, the symbol needs {sym.m}x{sym.m}")
    Q = field_from_trig(_trig_terms(spec["Q_terms"]), lat) if "Q_terms" in spec else None
    return ExampleCase(spec.get("name", "inline"), lat, sym, g, Q=Q)


def _case(params: dict) -> ExampleCase:
    if params.get("field") is not None:
        return _inline_case(params["field"], params.get("seed"))
    name = params.get("example")
    if not name:
        raise ConfigError("give --example NAME or an inline 'field' in the config")
    if name not in EXAMPLES:
        raise ConfigError(f"unknown example {name!r}; known: {', '.join(sorted(EXAMPLES))}")
    return get_example(name, **(params.get("example_params") or {}))


def _float_list(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(",", " ").split()]


def _echo(obj) -> None:
    click.echo(output.json_text(obj), nl=False)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), help="JSON file overriding the flags.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for artifacts.")
@click.option("--threads", type=int, default=None, help="Worker threads (fallback: HOMOG_THREADS).")
@click.option("--seed", type=int, default=None, help="Seed for randomized fields.")
@click.option("--cutoff", type=click.IntRange(min=1), default=None, help="Fourier cutoff N.")
@click.option("--grid", type=click.IntRange(min=1), default=None, help="k-grid points per axis.")
@click.pass_context
def main(ctx, config_path, out, threads, seed, cutoff, grid):
    """Homogenization toolkit: effective matrices, germs, Bloch bands and wave-operator errors."""
    config = _load_config(config_path) if config_path else {}
    common = {"out": out, "threads": threads, "seed": seed, "cutoff": cutoff, "grid": grid}
    ctx.obj = {"config": config, "common": {k: v for k, v in common.items() if v is not None}}


@main.command()
@common_options
@click.option("--example", default=None)
@click.pass_context
def effmat(ctx, example, **common):
    """Effective matrix g0 with the harmonic and arithmetic means."""
    p = _resolve(ctx, {"example": example, **common}, {"cutoff": 32}, set())
    bd = prepare(_case(p), int(p["cutoff"]))
    lower, upper = voigt_reuss(bd.g)
    report = {"example": bd.case.name, "cutoff": bd.cutoff, "g0": bd.g0, "harmonic_mean": lower, "arithmetic_mean": upper}
    output.emit_json(p["out"] / "effmat.json", report)
    _echo(report)


@main.command("germ-sweep")
@common_options
@click.option("--example", default=None)
@click.option("--directions", type=click.IntRange(min=1), default=None, help="Number of sampled directions.")
@click.pass_context
def germ_sweep(ctx, example, directions, **common):
    """Germ eigenvalues, mu and the N split per direction, as CSV."""
    p = _resolve(ctx, {"example": example, "directions": directions, **common}, {"cutoff": 32, "directions": 16}, {"directions", "thetas"})
    bd = prepare(_case(p), int(p["cutoff"]))
    d = bd.lattice.dim
    thetas = np.asarray(p["thetas"], dtype=float) if "thetas" in p else sphere_directions(d, int(p["directions"]))
    header = [f"theta{i + 1}" for i in range(d)] + [f"gamma{l + 1}" for l in range(bd.n)] + [f"mu{l + 1}" for l in range(bd.n)]
    header += ["clusters", "norm_N", "norm_N0", "norm_Nstar", "c_circ"]
    rows = []
    for th in thetas:
        th = th / np.linalg.norm(th)
        g = germ_package(bd.cell, bd.symbol, th, bd.weights, bd.c_star)
        clusters = "|".join(" ".join(str(int(i)) for i in c) for c in g.clusters)
        rows.append(list(th) + list(g.gammas) + list(g.mus) + [clusters, np.linalg.norm(g.N_Q, 2), np.linalg.norm(g.N0, 2),
                                                               np.linalg.norm(g.Nstar, 2), g.c_circ])
    path = output.emit_csv(p["out"] / "germ.csv", header, rows)
    click.echo(str(path))


@main.command()
@common_options
@click.option("--example", default=None)
@click.option("--count", type=click.IntRange(min=1), default=None, help="Bands per quasimomentum.")
@click.pass_context
def bands(ctx, example, count, **common):
    """Lowest Bloch bands on the k-grid, as CSV."""
    p = _resolve(ctx, {"example": example, "count": count, **common}, {"cutoff": 16, "grid": 9, "count": 4}, {"count", "k"})
    bd = prepare(_case(p), int(p["cutoff"]))
    pts = np.atleast_2d(np.asarray(p["k"], dtype=float)) if "k" in p else brillouin_grid(bd.lattice, int(p["grid"])).points
    d = bd.lattice.dim
    rows = []
    for k in pts:
        vals = lowest_bands(bd, k, int(p["count"]))[0]
        rows += [list(k) + [i, v] for i, v in enumerate(vals)]
    path = output.emit_csv(p["out"] / "bands.csv", [f"k{i + 1}" for i in range(d)] + ["band", "value"], rows)
    click.echo(str(path))


@main.command("cos-error")
@common_options
@click.option("--example", default=None)
@click.option("--k", "k", default=None, help="Quasimomentum, e.g. '0.1 0'.")
@click.option("--eps", type=float, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--s", "s", type=float, default=None)
@click.option("--check-phase/--no-check-phase", default=None)
@click.pass_context
def cos_error(ctx, example, k, eps, tau, s, check_phase, **common):
    """Fiber error of the two cosines at one quasimomentum."""
    flags = {"example": example, "k": k, "eps": eps, "tau": tau, "s": s, "check_phase": check_phase}
    p = _resolve(ctx, {**flags, **common}, {"cutoff": 16, "eps": 0.1, "tau": 1.0, "s": 2.0, "check_phase": True}, {"k", "eps", "tau", "s", "check_phase"})
    bd = prepare(_case(p), int(p["cutoff"]))
    kk = np.zeros(bd.lattice.dim) if p.get("k") is None else np.asarray(_float_list(p["k"]))
    sample = fiber_error(bd, kk, float(p["eps"]), float(p["tau"]), float(p["s"]), check_phase=bool(p["check_phase"]))
    header = [f"k{i + 1}" for i in range(bd.lattice.dim)] + ["eps", "tau", "s", "fiber_error", "cutoff"]
    output.emit_csv(p["out"] / "cos_error.csv", header, [list(sample.k) + [sample.eps, sample.tau, sample.s, sample.fiber_error, sample.cutoff]])
    _echo({"k": sample.k, "eps": sample.eps, "tau": sample.tau, "s": sample.s, "fiber_error": sample.fiber_error, "cutoff": sample.cutoff})


@main.command()
@common_options
@click.option("--example", default=None)
@click.option("--s", "s", type=float, default=None)
@click.option("--tau", type=float, default=None)
@click.option("--eps", "eps", default=None, help="Space separated eps list.")
@click.option("--expect", "expectation", type=click.Choice(["at-least", "at-most"]), default=None)
@click.option("--threshold", type=float, default=None)
@click.pass_context
def rate(ctx, example, s, tau, eps, expectation, threshold, **common):
    """Global error over eps, its log-log slope and a plot."""
    flags = {"example": example, "s": s, "tau": tau, "eps": eps, "expectation": expectation, "threshold": threshold}
    defaults = {"cutoff": 32, "grid": 17, "s": 2.0, "tau": 1.0, "eps": [2.0**-j for j in range(3, 8)], "expectation": "at-least", "threshold": 0.95}
    p = _resolve(ctx, {**flags, **common}, defaults, {"s", "tau", "eps", "expectation", "threshold", "refine"})
    bd = prepare(_case(p), int(p["cutoff"]))
    grid = brillouin_grid(bd.lattice, int(p["grid"]))
    try:
        report = rate_experiment(bd, float(p["s"]), float(p["tau"]), _float_list(p["eps"]), grid, p["expectation"],
                                 float(p["threshold"]), bool(p.get("refine", True)), p["threads"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    d = bd.lattice.dim
    rows = [[e, v] + list(k) for e, v, k in zip(report.eps, report.errors, report.argmax)]
    output.emit_csv(p["out"] / "rate.csv", ["eps", "global_error"] + [f"argmax_k{i + 1}" for i in range(d)], rows)
    output.emit_json(p["out"] / "rate.json", {"example": bd.case.name, "cutoff": bd.cutoff, "grid": int(p["grid"]), **report.to_dict()})
    output.emit_svg(p["out"] / "rate.svg", report.eps, report.errors, report.slope, report.intercept, title=bd.case.name)
    _echo({"slope": report.slope, "passed": report.passed, "errors": report.errors})
    if not report.passed:
        raise AcceptanceFailure(f"slope {report.slope:.4g} fails {report.expectation} {report.threshold}")


@main.command()
@common_options
@click.option("--example", default=None)
@click.option("--theta", default=None, help="Direction, e.g. '0 1'.")
@click.option("--tau", type=float, default=None)
@click.option("--s", "s", type=float, default=None)
@click.pass_context
def sharpness(ctx, example, theta, tau, s, **common):
    """q_k along the out-of-phase eps_k sequence."""
    flags = {"example": example, "theta": theta, "tau": tau, "s": s}
    p = _resolve(ctx, {**flags, **common}, {"cutoff": 32, "tau": 1.0, "s": 1.5, "k_indices": [2, 4, 8]}, {"theta", "tau", "s", "k_indices"})
    bd = prepare(_case(p), int(p["cutoff"]))
    th = np.eye(bd.lattice.dim)[-1] if p.get("theta") is None else np.asarray(_float_list(p["theta"]))
    rep = sharpness_probe(bd, th, float(p["tau"]), float(p["s"]), p["k_indices"])
    report = {k: getattr(rep, k) for k in ("theta", "indices", "base", "gamma", "mu", "eps", "t", "q", "growth", "spread", "s", "passed")}
    output.emit_json(p["out"] / "sharpness.json", report)
    _echo(report)
    if not rep.passed:
        raise AcceptanceFailure("sharpness probe did not show the expected behaviour")


def _torus_data(spec, n: int) -> TorusData | None:
    if spec is None:
        return None
    coeffs = np.asarray(spec.get("re", 0.0), dtype=float) + 1j * np.asarray(spec.get("im", 0.0), dtype=float)
    modes = np.atleast_2d(np.asarray(spec["modes"], dtype=np.int64))
    return TorusData(modes, coeffs.reshape(len(modes), n))


@main.command()
@common_options
@click.option("--example", default=None)
@click.option("--M", "M", default=None, help="Space separated list of M (eps = 1/M).")
@click.option("--tau", type=float, default=None)
@click.option("--s", "s", type=float, default=None)
@click.pass_context
def cauchy(ctx, example, M, tau, s, **common):
    """Cauchy-problem error on the torus for eps = 1/M and its slope.

    Data come from the config: ``phi`` and ``psi`` as {"modes", "re", "im"}
    and ``force`` as {"breaks", "modes", "re", "im"} with one coefficient block
    per time piece.  ``alpha`` sets tau = eps^-alpha.
    """
    flags = {"example": example, "M": M, "tau": tau, "s": s}
    defaults = {"cutoff": 8, "M": [8, 16, 32, 64], "tau": 1.0, "s": 2.0}
    p = _resolve(ctx, {**flags, **common}, defaults, {"M", "tau", "s", "phi", "psi", "force", "alpha", "threshold"})
    bd = prepare(_case(p), int(p["cutoff"]))
    n, d = bd.n, bd.lattice.dim
    phi = _torus_data(p.get("phi", {"modes": [[1] * d], "re": [1.0] * n}), n)
    psi = _torus_data(p.get("psi"), n)
    force = None
    if p.get("force") is not None:
        f = p["force"]
        vals = np.asarray(f.get("re", 0.0), dtype=float) + 1j * np.asarray(f.get("im", 0.0), dtype=float)
        modes = np.atleast_2d(np.asarray(f["modes"], dtype=np.int64))
        force = PiecewiseForce(f["breaks"], modes, vals.reshape(len(f["breaks"]) - 1, len(modes), n))
    Ms = [int(m) for m in _float_list(p["M"])]
    errors, taus = [], []
    for m in Ms:
        tau_m = float(m) ** float(p["alpha"]) if p.get("alpha") is not None else float(p["tau"])
        res = cauchy_error(bd, phi, psi, force, tau_m, 1.0 / m, float(p["s"]))
        errors.append(res.error)
        taus.append(tau_m)
    eps = [1.0 / m for m in Ms]
    slope, intercept = loglog_slope(eps, errors) if len(Ms) >= 2 else (float("nan"), float("nan"))
    output.emit_csv(p["out"] / "cauchy.csv", ["M", "eps", "tau", "error"], [[m, e, t, v] for m, e, t, v in zip(Ms, eps, taus, errors)])
    report = {"example": bd.case.name, "M": Ms, "errors": errors, "slope": slope, "intercept": intercept, "s": float(p["s"])}
    output.emit_json(p["out"] / "cauchy.json", report)
    _echo(report)
    if p.get("threshold") is not None and not slope >= float(p["threshold"]):
        raise AcceptanceFailure(f"slope {slope:.4g} below {p['threshold']}")


@main.command("reproduce")
@common_options
@click.argument("example")
@click.option("--no-fit", is_flag=True, help="Skip the band fits.")
@click.pass_context
def reproduce_cmd(ctx, example, no_fit, **common):
    """Run an example's reference checks (or 'all') and print a pass/fail table."""
    p = _resolve(ctx, dict(common), {}, set())
    names = sorted(PIPELINES) if example == "all" else [example]
    for name in names:
        if name not in PIPELINES:
            raise ConfigError(f"no pipeline for {name!r}; known: all, {', '.join(sorted(PIPELINES))}")
    rows: list[Row] = []
    for name in names:
        rows += reproduce(name, p.get("cutoff"), fit=not no_fit)
    output.emit_csv(p["out"] / "reproduce.csv", Row.HEADER, [r.cells() for r in rows])
    width = max(len(r.quantity) for r in rows)
    for r in rows:
        ref = output.fmt(np.asarray(r.reference).item()) if np.size(r.reference) == 1 else "array"
        meas = output.fmt(np.asarray(r.measured).item()) if np.size(r.measured) == 1 else "array"
        click.echo(f"{'PASS' if r.passed else 'FAIL'}  {r.example:22s} {r.quantity:{width}s}  measured {meas:>16s}  "
                   f"reference {ref:>12s}  dev {output.fmt(r.deviation):>12s}  tol {output.fmt(r.tol):>7s}  [{r.provenance}]")
    failed = [r for r in rows if not r.passed]
    if failed:
        raise AcceptanceFailure(f"{len(failed)} of {len(rows)} checks failed")


def run(argv=None) -> int:
    """Entry point returning the exit code instead of raising SystemExit."""
    try:
        main.main(args=argv, prog_name="homog", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.Abort:
        _error("Abort", "aborted")
        return 2
    except click.UsageError as exc:
        _error(type(exc).__name__, exc.format_message())
        return 2
    except click.ClickException as exc:
        _error(type(exc).__name__, exc.format_message())
        return 2
    except AcceptanceFailure as exc:
        _error("AcceptanceFailure", str(exc))
        return 1
    except Exception as exc:  # surfaced verbatim as machine-readable JSON
        _error(type(exc).__name__, str(exc))
        return 1


def _error(kind: str, message: str) -> None:
    click.echo(json.dumps({"error": kind, "message": message}, sort_keys=True), err=True)


def entry() -> None:
    sys.exit(run())
