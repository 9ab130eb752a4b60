"""Scenario execution: static sweeps, dynamic burst/dip runs, file emission.

All CSV output uses 17-significant-digit formatting, LF line endings and
unit-suffixed headers, so repeated runs are byte-identical.  The run manifest
is the one deliberately run-specific output (it records wall-clock duration).
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import RunConfig, config_hash
from .errors import CavtuneError, InvalidInput, NoFeature
from .lindblad import emitter_excited_state, evolve, steady_state, vacuum_state
from .modespace import anticrossing_sweep, wl_to_omega
from .spectra import (
    DecayCurve,
    PLMap,
    apply_filter,
    burst_metrics,
    irf_convolve,
    synthesize_map,
)
from .tuning import FreeCarrierPulse, TuningProfile


def format_number(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_number(v) for v in row) + "\n")


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_manifest(outdir: Path, cfg: RunConfig, outputs: list, started: float) -> Path:
    manifest = {
        "schema": 1,
        "tool": "cavtune",
        "version": __version__,
        "scenario": cfg.scenario,
        "config_sha256": config_hash(cfg.raw),
        "duration_s": time.monotonic() - started,
        "outputs": sorted(outputs),
    }
    path = outdir / "manifest.json"
    write_json(path, manifest)
    return path


def run_static_sweep(cfg: RunConfig, outdir: Path, render: bool = False, threads: int = 1):
    """Anticrossing sweep over the detuning grid -> sweep.csv (+ optional SVG)."""
    started = time.monotonic()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    omega_t = cfg.params.target.omega
    lambda_t = cfg.lambda_t_nm
    grid_nm = cfg.detuning_grid_nm
    grid_rad = np.array([wl_to_omega(lambda_t + d) - omega_t for d in grid_nm])
    # the sweep detunes relative to params.fp; rebase so detuning 0 sits at lambda_t
    base_offset = cfg.params.fp.omega - omega_t
    rows = anticrossing_sweep(cfg.params, grid_rad - base_offset)

    csv_rows = [
        (d_nm, r.lambda1_nm, r.lambda2_nm, r.q1, r.q2, r.decay_time_s * 1e9)
        for d_nm, r in zip(grid_nm, rows)
    ]
    outputs = []
    sweep_csv = outdir / "sweep.csv"
    write_csv(
        sweep_csv,
        ["detuning_nm", "lambda1_nm", "lambda2_nm", "q1", "q2", "tau_ns"],
        csv_rows,
    )
    outputs.append(sweep_csv.name)
    if render:
        from .render import render_curve_svg

        svg = render_curve_svg(
            x=grid_nm,
            series=[
                ("lambda1_nm", [r.lambda1_nm for r in rows]),
                ("lambda2_nm", [r.lambda2_nm for r in rows]),
            ],
            x_label="detuning_nm",
            y_label="wavelength_nm",
            title=f"{cfg.scenario}: coupled-mode wavelengths",
        )
        (outdir / "sweep_wavelengths.svg").write_text(svg, encoding="utf-8")
        outputs.append("sweep_wavelengths.svg")
        svg_q = render_curve_svg(
            x=grid_nm,
            series=[("q1", [r.q1 for r in rows]), ("q2", [r.q2 for r in rows])],
            x_label="detuning_nm",
            y_label="quality_factor",
            title=f"{cfg.scenario}: coupled-mode Q",
        )
        (outdir / "sweep_q.svg").write_text(svg_q, encoding="utf-8")
        outputs.append("sweep_q.svg")
    write_manifest(outdir, cfg, outputs, started)
    return outputs


def initial_state_for(cfg: RunConfig, profile: Optional[TuningProfile] = None) -> np.ndarray:
    profile = profile or cfg.profile
    if cfg.initial_state == "vacuum":
        return vacuum_state(cfg.hilbert)
    if cfg.initial_state == "excited":
        return emitter_excited_state(cfg.hilbert)
    # steady state under the pre-pulse (baseline) profile
    baseline = TuningProfile(
        static_detuning_nm=profile.static_detuning_nm, thermo=profile.thermo, pulses=()
    )
    from .tuning import sample_profile

    fp0 = sample_profile(baseline, [0.0], cfg.lambda_t_nm, cfg.params.fp.kappa)[0]
    return steady_state(cfg.params, fp0, spec=cfg.hilbert, frame=cfg.frame)


def simulate_dynamic(
    cfg: RunConfig, profile: Optional[TuningProfile] = None, rho0: Optional[np.ndarray] = None
):
    """Trajectory + map + filtered curves for one dynamic configuration."""
    profile = profile or cfg.profile
    if rho0 is None:
        rho0 = initial_state_for(cfg, profile)
    traj = evolve(
        cfg.params,
        profile,
        rho0,
        cfg.time_grid_ps,
        spec=cfg.hilbert,
        rtol=cfg.rtol,
        atol=cfg.atol,
        frame=cfg.frame,
        fixed_step_ps=cfg.fixed_step_ps,
    )
    pl_map = synthesize_map(traj, cfg.lambda_grid_nm, cfg.collection_exponent)
    curves = []
    for lam_c, fwhm in cfg.filters:
        curve = apply_filter(pl_map, lam_c, fwhm)
        if cfg.irf_sigma_ps > 0.0:
            curve = irf_convolve(curve, cfg.irf_sigma_ps)
        curves.append(curve)
    return traj, pl_map, curves


def _metrics_entry(cfg: RunConfig, curve: DecayCurve, window) -> dict:
    entry = {"lambda_nm": curve.center_nm, "fwhm_nm": curve.fwhm_nm}
    if window is None:
        entry["error"] = "no control pulse: no baseline window"
        return entry
    try:
        entry["metrics"] = burst_metrics(curve, window).to_dict()
    except (NoFeature, InvalidInput) as exc:
        entry["error"] = str(exc)
    return entry


def _emit_dynamic_outputs(outdir: Path, prefix: str, pl_map: PLMap, curves, cfg: RunConfig, render):
    outputs = []
    map_csv = outdir / f"{prefix}map.csv"
    with open(map_csv, "w", encoding="utf-8", newline="") as fh:
        fh.write("t_ps,lambda_nm,intensity_au\n")
        for i, t in enumerate(pl_map.t_grid_ps):
            t_s = format_number(t)
            row = pl_map.intensity[i]
            for lam, v in zip(pl_map.lambda_grid_nm, row):
                fh.write(f"{t_s},{format_number(lam)},{format_number(v)}\n")
    outputs.append(map_csv.name)

    for curve in curves:
        name = f"{prefix}curve_{curve.center_nm:.2f}nm.csv"
        write_csv(outdir / name, ["t_ps", "intensity_au"], zip(curve.t_grid_ps, curve.intensity))
        outputs.append(name)

    if render:
        from .render import render_curve_svg, render_heatmap_ppm

        ppm = render_heatmap_ppm(pl_map.intensity, colormap=cfg.colormap, log_scale=cfg.log_scale)
        (outdir / f"{prefix}map.ppm").write_bytes(ppm)
        outputs.append(f"{prefix}map.ppm")
        for curve in curves:
            svg = render_curve_svg(
                x=curve.t_grid_ps,
                series=[("intensity_au", curve.intensity)],
                x_label="t_ps",
                y_label="intensity_au",
                title=f"{cfg.scenario}: filtered trace at {curve.center_nm:.2f} nm",
            )
            name = f"{prefix}curve_{curve.center_nm:.2f}nm.svg"
            (outdir / name).write_text(svg, encoding="utf-8")
            outputs.append(name)
    return outputs


def _truncation_drift(cfg: RunConfig, profile, base_result) -> dict:
    """Re-run one Fock level higher and report the worst relative drift."""
    import dataclasses

    from .lindblad import HilbertSpec

    bigger = dataclasses.replace(cfg, hilbert=HilbertSpec(cfg.hilbert.n_max + 1))
    traj_a, _, curves_a = base_result
    traj_b, _, curves_b = simulate_dynamic(bigger, profile)
    drift = 0.0
    for field in ("n_e", "n_t", "n_fp", "n1", "n2"):
        a, b = getattr(traj_a, field), getattr(traj_b, field)
        scale = max(float(np.max(np.abs(b))), 1e-300)
        drift = max(drift, float(np.max(np.abs(a - b))) / scale)
    for ca, cb in zip(curves_a, curves_b):
        scale = max(float(np.max(np.abs(cb.intensity))), 1e-300)
        drift = max(drift, float(np.max(np.abs(ca.intensity - cb.intensity))) / scale)
    return {
        "n_max": cfg.hilbert.n_max,
        "n_max_check": cfg.hilbert.n_max + 1,
        "max_relative_drift": drift,
        "within_1_percent": drift < 0.01,
    }


def run_dynamic(cfg: RunConfig, outdir: Path, render: bool = False, threads: int = 1):
    """Dynamic scenario: map CSV, filtered curve CSVs, metrics JSON, optional plots."""
    started = time.monotonic()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    outputs = []

    if cfg.delays_ps:
        template = cfg.profile.pulses[0]
        delays = list(cfg.delays_ps)

        rho0 = initial_state_for(cfg)
        baseline_profile = TuningProfile(
            static_detuning_nm=cfg.profile.static_detuning_nm,
            thermo=cfg.profile.thermo,
            pulses=(),
        )
        # the decay trace without a control pulse normalizes the delayed runs:
        # against a decaying baseline, raw-trace metrics are ill-posed
        reference = simulate_dynamic(cfg, baseline_profile, rho0=rho0.copy())

        def one(delay):
            pulse = FreeCarrierPulse(
                t0_ps=delay,
                delta_lambda_max_nm=template.delta_lambda_max_nm,
                tau_fc_ps=template.tau_fc_ps,
                tau_rise_ps=template.tau_rise_ps,
            )
            profile = TuningProfile(
                static_detuning_nm=cfg.profile.static_detuning_nm,
                thermo=cfg.profile.thermo,
                pulses=(pulse,),
            )
            return simulate_dynamic(cfg, profile, rho0=rho0.copy())

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(one, delays))
        else:
            results = [one(d) for d in delays]

        for ref_curve in reference[2]:
            name = f"reference_curve_{ref_curve.center_nm:.2f}nm.csv"
            write_csv(
                outdir / name,
                ["t_ps", "intensity_au"],
                zip(ref_curve.t_grid_ps, ref_curve.intensity),
            )
            outputs.append(name)

        metrics = {"scenario": cfg.scenario, "delays": []}
        for delay, (traj, pl_map, curves) in zip(delays, results):
            prefix = f"delay{delay:.0f}_"
            outputs += _emit_dynamic_outputs(outdir, prefix, pl_map, curves, cfg, render)
            window = (delay - 500.0, delay)
            entries = []
            for curve, ref_curve in zip(curves, reference[2]):
                floor = max(float(ref_curve.intensity.max()), 1e-300) * 1e-12
                ratio = DecayCurve(
                    curve.t_grid_ps,
                    curve.intensity / np.clip(ref_curve.intensity, floor, None),
                    curve.center_nm,
                    curve.fwhm_nm,
                )
                entry = _metrics_entry(cfg, ratio, window)
                entry["normalization"] = "ratio to the pulse-free reference decay"
                entries.append(entry)
            metrics["delays"].append({"delay_ps": delay, "filters": entries})
        if cfg.check_truncation:
            first_pulse = FreeCarrierPulse(
                delays[0], template.delta_lambda_max_nm, template.tau_fc_ps, template.tau_rise_ps
            )
            first_profile = TuningProfile(
                static_detuning_nm=cfg.profile.static_detuning_nm,
                thermo=cfg.profile.thermo,
                pulses=(first_pulse,),
            )
            metrics["truncation_check"] = _truncation_drift(cfg, first_profile, results[0])
    else:
        traj, pl_map, curves = simulate_dynamic(cfg)
        outputs += _emit_dynamic_outputs(outdir, "", pl_map, curves, cfg, render)
        metrics = {
            "scenario": cfg.scenario,
            "filters": [_metrics_entry(cfg, c, cfg.baseline_window_ps) for c in curves],
        }
        if cfg.check_truncation:
            metrics["truncation_check"] = _truncation_drift(cfg, cfg.profile, (traj, pl_map, curves))

    metrics_path = outdir / "metrics.json"
    write_json(metrics_path, metrics)
    outputs.append(metrics_path.name)
    write_manifest(outdir, cfg, outputs, started)
    return outputs


def calibrate_burst_tau_fc(
    cfg: RunConfig,
    target_fwhm_ps: float = 232.0,
    tol_ps: float = 1.0,
    bracket=(60.0, 700.0),
    max_iter: int = 40,
) -> tuple[float, float]:
    """Bisect the free-carrier lifetime so the burst FWHM hits the target.

    Returns (tau_fc_ps, achieved_fwhm_ps).  The burst FWHM grows monotonically
    with the recovery time, so a bracketing bisection is reliable.
    """
    if not cfg.filters:
        raise InvalidInput("calibration needs at least one filter")
    rho0 = initial_state_for(cfg)

    def fwhm_for(tau: float) -> float:
        base = cfg.profile.pulses[0]
        pulse = FreeCarrierPulse(
            t0_ps=base.t0_ps,
            delta_lambda_max_nm=base.delta_lambda_max_nm,
            tau_fc_ps=tau,
            tau_rise_ps=base.tau_rise_ps,
        )
        profile = TuningProfile(
            static_detuning_nm=cfg.profile.static_detuning_nm,
            thermo=cfg.profile.thermo,
            pulses=(pulse,),
        )
        _, _, curves = simulate_dynamic(cfg, profile, rho0=rho0.copy())
        return burst_metrics(curves[0], cfg.baseline_window_ps).fwhm_ps

    lo, hi = bracket
    f_lo, f_hi = fwhm_for(lo), fwhm_for(hi)
    if not (f_lo < target_fwhm_ps < f_hi):
        raise CavtuneError(
            f"calibration bracket does not contain the target FWHM: "
            f"f({lo})={f_lo:.1f}, f({hi})={f_hi:.1f}, target {target_fwhm_ps}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = fwhm_for(mid)
        if abs(f_mid - target_fwhm_ps) <= tol_ps:
            return mid, f_mid
        if f_mid < target_fwhm_ps:
            lo = mid
        else:
            hi = mid
    mid = 0.5 * (lo + hi)
    return mid, fwhm_for(mid)
