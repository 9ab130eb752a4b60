"""Embedded invariant suite behind the ``selftest`` CLI command.

Each check is small, named, and independent; the suite is the quick field
diagnostic, not a replacement for the full pytest suite.  The
``inject_kappa_sign_error`` flag builds a deliberately broken target-cavity
dissipator (anticommutator sign flipped) so the trace check fails: a
negative control proving the checks can fail.
"""

from __future__ import annotations

import numpy as np

from .lindblad import (
    HilbertSpec,
    PumpSchedule,
    build_space,
    dense_superoperator,
    emitter_excited_state,
    evolve,
    fock_state,
    liouvillian_apply,
    mode_populations,
)
from .modespace import (
    BareMode,
    EmitterParams,
    SystemParams,
    couple,
    coupled_hamiltonian,
    hamiltonian_bare_basis,
    omega_to_wl,
    q_factor,
    wl_to_omega,
)
from .spectra import DecayCurve, PLMap, apply_filter, burst_metrics, synthesize_map
from .tuning import FreeCarrierPulse, TuningProfile, fp_shift_at


def _default_params(g=1e10, gamma_leaky=5e8, eta=1.564e11, pump=None) -> SystemParams:
    omega_t = wl_to_omega(1552.0)
    kappa_t = 1.564e11
    return SystemParams(
        EmitterParams(omega_t, g, gamma_leaky),
        BareMode(omega_t, kappa_t),
        BareMode(omega_t, 3 * kappa_t),
        eta,
        pump or PumpSchedule(),
    )


def _check_roundtrip():
    lam = 1550.0
    back = omega_to_wl(wl_to_omega(lam))
    return abs(back - lam) / lam < 1e-12, f"roundtrip error {abs(back - lam) / lam:.2e}"


def _check_trace_conservation():
    p = _default_params()
    rng = np.random.RandomState(7)
    ok = True
    worst = 0.0
    for _ in range(20):
        x = rng.randn(18, 18) + 1j * rng.randn(18, 18)
        rho = x @ x.conj().T
        rho /= np.trace(rho).real
        drho = liouvillian_apply(p, p.fp, rho, pump_rate=1e8)
        dev = abs(np.trace(drho)) / np.linalg.norm(drho)
        worst = max(worst, dev)
        ok = ok and dev < 1e-12
    return ok, f"max |tr drho|/|drho| = {worst:.2e}"


def _check_eigen_trace_det():
    rng = np.random.RandomState(11)
    ok = True
    for _ in range(50):
        t = BareMode(1e15 * rng.uniform(0.5, 2), 1e11 * rng.uniform(0.2, 5))
        f = BareMode(1e15 * rng.uniform(0.5, 2), 1e11 * rng.uniform(0.2, 5))
        eta = 1e11 * rng.uniform(0, 5)
        cm = couple(t, f, eta)
        wt, wf = t.complex_freq(), f.complex_freq()
        mu1, mu2 = cm.eigenvalue(1), cm.eigenvalue(2)
        ok = ok and abs((wt + wf) - (mu1 + mu2)) <= 1e-12 * abs(wt + wf)
        ok = ok and abs((wt * wf - eta**2) - mu1 * mu2) <= 1e-12 * abs(wt * wf)
    return ok, "trace/determinant conserved over 50 draws"


def _check_exceptional_point():
    kappa_t = 1.564e11
    omega = wl_to_omega(1552.0)
    target = BareMode(omega, kappa_t)
    fp = BareMode(omega, 3 * kappa_t)
    cm = couple(target, fp, kappa_t)
    q_t = q_factor(target)
    r1, r2 = cm.q(1) / q_t, cm.q(2) / q_t
    ok = cm.degenerate and abs(r1 - 0.5) < 1e-6 and abs(r2 - 0.5) < 1e-6
    return ok, f"Q ratios ({r1:.6f}, {r2:.6f}), degenerate={cm.degenerate}"


def _check_basis_equivalence():
    rng = np.random.RandomState(3)
    ok = True
    for _ in range(200):
        p = SystemParams(
            EmitterParams(1e15 * rng.uniform(0.5, 2), 1e9 * rng.uniform(0, 5), 1e8),
            BareMode(1e15 * rng.uniform(0.5, 2), 1e11 * rng.uniform(0.5, 3)),
            BareMode(1e15 * rng.uniform(0.5, 2), 1e11 * rng.uniform(0.5, 3)),
            1e11 * rng.uniform(0, 3),
            PumpSchedule(),
        )
        cm = couple(p.target, p.fp, p.eta)
        e1 = np.sort_complex(np.linalg.eigvals(hamiltonian_bare_basis(p)))
        e2 = np.sort_complex(np.linalg.eigvals(coupled_hamiltonian(p, cm)))
        scale = max(abs(e1).max(), 1.0)
        ok = ok and np.max(np.abs(e1 - e2)) <= 1e-10 * scale
    return ok, "bare/coupled basis eigenvalues agree over 200 draws"


def _check_master_equation_trace(inject_kappa_sign_error=False):
    p = _default_params(pump=PumpSchedule(cw_rate=1e8))
    profile = TuningProfile(pulses=(FreeCarrierPulse(50.0, 0.6, 150.0),))
    t = np.linspace(0.0, 400.0, 101)
    try:
        traj = evolve(
            p,
            profile,
            emitter_excited_state(HilbertSpec(1)),
            t,
            _broken_target_dissipator=inject_kappa_sign_error,
        )
    except Exception as exc:  # broken generator blows the trace check
        return False, f"{type(exc).__name__}: {exc}"
    return traj.trace_dev_max < 1e-8, f"max trace deviation {traj.trace_dev_max:.2e}"


def _check_cavity_decay():
    p = _default_params(g=0.0, gamma_leaky=0.0, eta=0.0)
    spec = HilbertSpec(1)
    kappa = p.target.kappa
    t_half = 1.0 / (2.0 * kappa) * 1e12  # ps
    t = np.linspace(0.0, t_half, 51)
    traj = evolve(p, TuningProfile(), fock_state(spec, 0, 1, 0), t, rtol=1e-10, atol=1e-14)
    expected = np.exp(-1.0)
    got = traj.n_t[-1]
    return abs(got - expected) / expected < 1e-6, f"n_t(1/2kappa) = {got:.8f} vs e^-1"


def _check_emitter_leaky_decay():
    gamma = 1e9
    p = _default_params(g=0.0, gamma_leaky=gamma)
    spec = HilbertSpec(1)
    t = np.linspace(0.0, 1000.0, 101)
    traj = evolve(p, TuningProfile(), emitter_excited_state(spec), t, rtol=1e-10, atol=1e-14)
    expected = np.exp(-gamma * 1e-12 * t[-1])
    got = traj.n_e[-1]
    return abs(got - expected) / expected < 1e-6, f"n_e(t_end) = {got:.8f} vs {expected:.8f}"


def _check_purcell_rate():
    kappa_t = 1.564e11
    g = kappa_t / 20.0
    gamma_leaky = 5e8
    omega_t = wl_to_omega(1552.0)
    p = SystemParams(
        EmitterParams(omega_t, g, gamma_leaky),
        BareMode(omega_t, kappa_t),
        BareMode(wl_to_omega(1560.0), 3 * kappa_t),
        0.0,
        PumpSchedule(),
    )
    expected = gamma_leaky + 2.0 * g**2 / kappa_t
    t = np.linspace(0.0, 2.0 / (expected * 1e-12), 201)
    traj = evolve(p, TuningProfile(static_detuning_nm=8.0), emitter_excited_state(HilbertSpec(1)), t)
    mask = (t > 50.0) & (traj.n_e > 1e-12)
    rate = -np.polyfit(t[mask] * 1e-12, np.log(traj.n_e[mask]), 1)[0]
    return abs(rate - expected) / expected < 0.05, (
        f"fitted {rate:.4e} vs adiabatic {expected:.4e} (1/s)"
    )


def _check_dense_oracle():
    p = _default_params(pump=PumpSchedule(cw_rate=2e8))
    spec = HilbertSpec(1)
    rng = np.random.RandomState(23)
    x = rng.randn(spec.dim, spec.dim) + 1j * rng.randn(spec.dim, spec.dim)
    rho = x @ x.conj().T
    rho /= np.trace(rho).real
    direct = liouvillian_apply(p, p.fp, rho, pump_rate=2e8)
    sup = dense_superoperator(p, p.fp, pump_rate=2e8, spec=spec)
    via_sup = (sup @ rho.reshape(-1)).reshape(spec.dim, spec.dim)
    dev = np.max(np.abs(direct - via_sup)) / np.max(np.abs(direct))
    return dev < 1e-10, f"matrix-free vs dense generator deviation {dev:.2e}"


def _check_mode_population_sum():
    spec = HilbertSpec(2)
    p = _default_params()
    cm = couple(p.target, p.fp, p.eta)
    ops = build_space(spec)
    rng = np.random.RandomState(5)
    ok = True
    for _ in range(10):
        x = rng.randn(spec.dim, spec.dim) + 1j * rng.randn(spec.dim, spec.dim)
        rho = x @ x.conj().T
        rho /= np.trace(rho).real
        n1, n2 = mode_populations(rho, cm)
        total = np.einsum("ij,ji->", ops.n_t + ops.n_fp, rho).real
        ok = ok and abs(n1 + n2 - total) < 1e-8
    return ok, "n1 + n2 equals <n_t> + <n_fp> on random states"


def _check_map_area():
    # single bright line of constant population: integrated map = flux
    from .lindblad import Trajectory

    n = 5
    lam_t = 1552.0
    kappa = 1.564e11
    t = np.linspace(0.0, 10.0, n)
    traj = Trajectory(
        t_ps=t,
        n_e=np.zeros(n),
        n_t=np.ones(n),
        n_fp=np.zeros(n),
        n1=np.ones(n),
        n2=np.zeros(n),
        coherence=np.zeros(n, dtype=complex),
        lambda1_nm=np.full(n, lam_t),
        lambda2_nm=np.full(n, lam_t + 5.0),
        kappa1=np.full(n, kappa),
        kappa2=np.full(n, kappa),
        w1=np.ones(n),
        w2=np.zeros(n),
        alpha=np.ones(n, dtype=complex),
        beta=np.zeros(n, dtype=complex),
        degenerate=np.zeros(n, dtype=bool),
        states=np.zeros((n, 8, 8), dtype=complex),
        kappa_t=kappa,
        trace_dev_max=0.0,
        hermiticity_dev_max=0.0,
        min_eigenvalue=0.0,
    )
    # +-80 linewidths: the Lorentzian tails then carry ~0.4% < 0.5% of the area
    line_fwhm = 2.0 * kappa * lam_t**2 / (2.0 * np.pi * 2.99792458e17)
    grid = np.linspace(lam_t - 80 * line_fwhm, lam_t + 80 * line_fwhm, 8001)
    pl = synthesize_map(traj, grid, collection_exponent=1.0)
    integral = np.trapezoid(pl.intensity[0], grid)
    flux = 2.0 * kappa * 1e-12
    return abs(integral - flux) / flux < 5e-3, f"map integral {integral:.4e} vs flux {flux:.4e}"


def _check_filter_linearity():
    lam = np.linspace(1550.0, 1554.0, 401)
    t = np.linspace(0.0, 5.0, 4)
    rng = np.random.RandomState(2)
    s1 = PLMap(lam, t, rng.uniform(0.0, 1.0, (4, 401)))
    s2 = PLMap(lam, t, rng.uniform(0.0, 1.0, (4, 401)))
    a, b = 0.7, 2.3
    mixed = PLMap(lam, t, a * s1.intensity + b * s2.intensity)
    lhs = apply_filter(mixed, 1552.0, 0.5).intensity
    rhs = a * apply_filter(s1, 1552.0, 0.5).intensity + b * apply_filter(s2, 1552.0, 0.5).intensity
    dev = np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))
    return dev < 1e-12, f"linearity deviation {dev:.2e}"


def _check_metric_scale_invariance():
    t = np.linspace(-500.0, 1500.0, 801)
    base = 1.0 + 2.0 * np.exp(-0.5 * ((t - 200.0) / 100.0) ** 2)
    m1 = burst_metrics(DecayCurve(t, base, 1552.0, 0.5), (-500.0, 0.0))
    m2 = burst_metrics(DecayCurve(t, 137.0 * base, 1552.0, 0.5), (-500.0, 0.0))
    ok = abs(m1.depth - m2.depth) < 1e-12 and abs(m1.fwhm_ps - m2.fwhm_ps) < 1e-9
    return ok, f"depth {m1.depth:.6f} and FWHM {m1.fwhm_ps:.1f} ps unchanged under scaling"


def _check_pulse_superposition():
    p1 = FreeCarrierPulse(0.0, 0.4, 120.0)
    p2 = FreeCarrierPulse(300.0, 0.7, 220.0)
    both = TuningProfile(static_detuning_nm=0.3, pulses=(p1, p2))
    only1 = TuningProfile(pulses=(p1,))
    only2 = TuningProfile(pulses=(p2,))
    t = np.linspace(-100.0, 1500.0, 641)
    lhs = fp_shift_at(both, t)
    rhs = 0.3 + fp_shift_at(only1, t) + fp_shift_at(only2, t)
    ok = np.max(np.abs(lhs - rhs)) == 0.0
    return ok, "two-pulse shift equals the sum of single-pulse shifts"


CHECKS = [
    ("wavelength-frequency roundtrip", _check_roundtrip),
    ("generator trace conservation", _check_trace_conservation),
    ("cavity-pair trace/determinant conservation", _check_eigen_trace_det),
    ("exceptional-point Q halving", _check_exceptional_point),
    ("bare/coupled basis eigenvalue equivalence", _check_basis_equivalence),
    ("master-equation trace preservation", _check_master_equation_trace),
    ("bare-cavity photon decay", _check_cavity_decay),
    ("emitter leaky-mode decay", _check_emitter_leaky_decay),
    ("weak-coupling emitter rate", _check_purcell_rate),
    ("dense superoperator oracle", _check_dense_oracle),
    ("coupled-mode population sum rule", _check_mode_population_sum),
    ("spectral map area", _check_map_area),
    ("filter linearity", _check_filter_linearity),
    ("metric scale invariance", _check_metric_scale_invariance),
    ("pulse superposition", _check_pulse_superposition),
]


def run_selftest(inject_kappa_sign_error: bool = False):
    """Run every check; returns a list of (name, passed, detail)."""
    results = []
    for name, fn in CHECKS:
        if fn is _check_master_equation_trace:
            passed, detail = fn(inject_kappa_sign_error)
        else:
            passed, detail = fn()
        results.append((name, bool(passed), detail))
    return results
