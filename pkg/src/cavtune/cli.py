"""Command-line front end.

Subcommands: static-sweep | dynamic | fit | render | selftest.
Exit codes: 0 success, 1 selftest failure, 2 config/schema error,
3 fit non-convergence, 4 numerical failure.
"""

from __future__ import annotations

import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import (
    SCENARIO_NAMES,
    load_config,
    load_config_file,
    scenario_config,
)
from .errors import CavtuneError, ConvergenceFailure, NumericalFailure, SchemaError
from .fitting import FitOptions, fit as run_fit, read_anticrossing_csv, residuals
from .render import render_csv_file
from .runs import format_number, run_dynamic, run_static_sweep, write_json


def _resolve_config(config_path, scenario):
    if config_path and scenario:
        raise SchemaError("give either --config or --scenario, not both")
    if config_path:
        return load_config_file(config_path)
    if scenario:
        return load_config(scenario_config(scenario))
    raise SchemaError("one of --config or --scenario is required")


def _fail(exc: Exception):
    click.echo(f"error: {exc}", err=True)
    if isinstance(exc, OSError):
        sys.exit(2)
    if isinstance(exc, (NumericalFailure, ConvergenceFailure)):
        sys.exit(4)
    sys.exit(2)


@click.group()
@click.version_option(version=__version__, prog_name="cavtune")
def main():
    """Coupled-cavity emission control: simulate, fit, render."""


_common = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                 default=None, help="JSON config document."),
    click.option("--scenario", type=click.Choice(SCENARIO_NAMES), default=None,
                 help="Shipped scenario name."),
    click.option("--out", "outdir", type=click.Path(file_okay=False), required=True,
                 help="Output directory."),
    click.option("--threads", type=int, default=1, show_default=True,
                 help="Worker threads for independent sub-runs."),
    click.option("--render/--no-render", default=False, show_default=True,
                 help="Also emit SVG/PPM plots."),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@main.command("static-sweep")
@_with_common
def cmd_static_sweep(config_path, scenario, outdir, threads, render):
    """Anticrossing sweep over a detuning grid -> sweep.csv."""
    try:
        cfg = _resolve_config(config_path, scenario)
        if cfg.kind != "static-sweep":
            raise SchemaError(f"config kind {cfg.kind!r} is not 'static-sweep'")
        outputs = run_static_sweep(cfg, Path(outdir), render=render, threads=threads)
    except CavtuneError as exc:
        _fail(exc)
    except OSError as exc:
        _fail(OSError(f"cannot write outputs under {outdir}: {exc}"))
    click.echo(f"wrote {len(outputs) + 1} file(s) to {outdir}")


@main.command("dynamic")
@_with_common
def cmd_dynamic(config_path, scenario, outdir, threads, render):
    """Dynamic burst/dip/delay scenario -> map CSV, curves, metrics.json."""
    try:
        cfg = _resolve_config(config_path, scenario)
        if cfg.kind != "dynamic":
            raise SchemaError(f"config kind {cfg.kind!r} is not 'dynamic'")
        outputs = run_dynamic(cfg, Path(outdir), render=render, threads=threads)
    except CavtuneError as exc:
        _fail(exc)
    except OSError as exc:
        _fail(OSError(f"cannot write outputs under {outdir}: {exc}"))
    click.echo(f"wrote {len(outputs) + 1} file(s) to {outdir}")


@main.command("fit")
@click.argument("data_csv", type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Config with a 'fit' section (init/bounds/options).")
@click.option("--out", "outdir", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for the multi-start initialization lattice.")
@click.option("--threads", type=int, default=1, show_default=True)
def cmd_fit(data_csv, config_path, outdir, seed, threads):
    """Fit the coupled-mode model to an anticrossing CSV."""
    started = time.monotonic()
    try:
        fit_node = {}
        cfg = None
        if config_path:
            cfg = load_config_file(config_path)
            fit_node = cfg.fit
        control_kind = fit_node.get("control")
        data = read_anticrossing_csv(data_csv, control_kind=control_kind)

        from .config import DEFAULT_SYSTEM

        init = {
            "eta": DEFAULT_SYSTEM["eta"],
            "kappa_t": DEFAULT_SYSTEM["kappa_t"],
            "kappa_fp": DEFAULT_SYSTEM["kappa_fp"],
            "lambda_t": float(np.median(np.concatenate([data.lambda1, data.lambda2]))),
            "cal_slope": 0.1,
            "cal_offset": 0.0,
            "g": DEFAULT_SYSTEM["g"],
            "gamma_leaky": DEFAULT_SYSTEM["gamma_leaky"],
        }
        init.update(fit_node.get("init", {}))
        options = FitOptions(
            max_evals=fit_node.get("max_evals", 40000),
            multistart=fit_node.get("multistart", 0),
            seed=seed,
        )
        result = run_fit(data, init, bounds=fit_node.get("bounds"), options=options)

        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "fit.json", result.to_dict())
        res_vec = residuals(
            np.array([result.estimates[n] for n in result.param_names]), data
        )
        with open(out / "residuals.csv", "w", encoding="utf-8", newline="") as fh:
            fh.write("index,weighted_residual\n")
            for i, r in enumerate(res_vec):
                fh.write(f"{i},{format_number(r)}\n")
    except CavtuneError as exc:
        _fail(exc)
    click.echo(
        f"fit {'converged' if result.converged else 'DID NOT CONVERGE'} "
        f"in {result.n_evals} evaluations ({time.monotonic() - started:.1f} s); "
        f"residual norm {result.residual_norm:.3e}"
    )
    if result.near_degenerate:
        click.echo("note: fitted coupling is below the measurement resolution "
                   "(near-degenerate crossing)")
    if not result.converged:
        sys.exit(3)


@main.command("render")
@click.argument("csv_in", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--format", "fmt", type=click.Choice(["auto", "svg", "ppm"]), default="auto",
              show_default=True)
@click.option("--colormap", type=click.Choice(["heat", "gray"]), default="heat",
              show_default=True)
@click.option("--log", "log_scale", is_flag=True, default=False,
              help="Log-scale heatmap normalization.")
def cmd_render(csv_in, out_path, fmt, colormap, log_scale):
    """Render an emitted CSV to SVG (curves) or PPM (heatmaps)."""
    try:
        written = render_csv_file(csv_in, out_path, fmt=fmt, colormap=colormap,
                                  log_scale=log_scale)
    except CavtuneError as exc:
        _fail(exc)
    click.echo(f"wrote {written}")


@main.command("selftest")
@click.option("--inject-kappa-sign", is_flag=True, default=False, hidden=True,
              help="Debug hook: break a dissipator sign so the trace check fails.")
def cmd_selftest(inject_kappa_sign):
    """Run the embedded invariant suite and print a pass/fail table."""
    from .selftest import run_selftest

    results = run_selftest(inject_kappa_sign_error=inject_kappa_sign)
    width = max(len(name) for name, _, _ in results)
    failures = 0
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        failures += 0 if passed else 1
        click.echo(f"{name:<{width}}  {status}  {detail}")
    click.echo(f"{len(results) - failures}/{len(results)} checks passed")
    sys.exit(1 if failures else 0)


if __name__ == "__main__":
    main()
