"""Recover coupled-cavity parameters from measured anticrossing tables.

The model behind the fit is the complex 2x2 diagonalization of
:func:`cavtune.modespace.couple`: each data row's control value (a detuning in
nm, or a power in mW mapped through a linear calibration) positions the FP
mode, and the predicted branch wavelengths / Q factors / decay times are
compared against the measured columns.

The minimizer is a deterministic Nelder-Mead simplex with the standard
coefficients (reflection 1, expansion 2, contraction 0.5, shrink 0.5),
stopping when the relative simplex spread falls below 1e-10.  Derivative-free
search avoids the branch behavior of the complex square root near the
exceptional point.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidInput, SchemaError
from .modespace import detuning_wl_to_omega, omega_to_wl, wl_to_omega

DEFAULT_SIGMA_LAMBDA_NM = 0.05
DEFAULT_SIGMA_Q_FRAC = 0.10
DEFAULT_SIGMA_TAU_FRAC = 0.10

_PENALTY = 1e8

_CSV_COLUMNS = ("control", "lambda1", "lambda2", "q1", "q2", "tau")
_UNIT_SUFFIXES = ("_nm", "_mw", "_ns")


@dataclass(frozen=True)
class AnticrossingData:
    """Measured coupled-mode table.

    ``control_kind`` is "detuning_nm" or "power_mw".  Rows are normalized on
    construction so that ``lambda1 <= lambda2`` (Q columns swapped alongside).
    """

    control: np.ndarray
    lambda1: np.ndarray
    lambda2: np.ndarray
    control_kind: str = "detuning_nm"
    q1: Optional[np.ndarray] = None
    q2: Optional[np.ndarray] = None
    tau_ns: Optional[np.ndarray] = None
    sigma_lambda: Optional[np.ndarray] = None
    sigma_q: Optional[np.ndarray] = None
    sigma_tau: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.control_kind not in ("detuning_nm", "power_mw"):
            raise InvalidInput(f"unknown control kind {self.control_kind!r}")
        ctl = np.asarray(self.control, dtype=float)
        l1 = np.asarray(self.lambda1, dtype=float).copy()
        l2 = np.asarray(self.lambda2, dtype=float).copy()
        if ctl.size < 4:
            raise InvalidInput(f"need at least 4 rows, got {ctl.size}")
        if not (ctl.size == l1.size == l2.size):
            raise InvalidInput("column lengths differ")
        q1 = None if self.q1 is None else np.asarray(self.q1, dtype=float).copy()
        q2 = None if self.q2 is None else np.asarray(self.q2, dtype=float).copy()
        if (q1 is None) != (q2 is None):
            raise InvalidInput("q1 and q2 must both be present or both absent")
        swap = l1 > l2
        l1[swap], l2[swap] = l2[swap], l1[swap].copy()
        if q1 is not None:
            q1[swap], q2[swap] = q2[swap], q1[swap].copy()
        tau = None if self.tau_ns is None else np.asarray(self.tau_ns, dtype=float)
        object.__setattr__(self, "control", ctl)
        object.__setattr__(self, "lambda1", l1)
        object.__setattr__(self, "lambda2", l2)
        object.__setattr__(self, "q1", q1)
        object.__setattr__(self, "q2", q2)
        object.__setattr__(self, "tau_ns", tau)

    @property
    def n_rows(self) -> int:
        return self.control.size

    def sigmas(self):
        """Per-column uncertainties, defaults filled in where absent."""
        s_lam = (
            np.full(self.n_rows, DEFAULT_SIGMA_LAMBDA_NM)
            if self.sigma_lambda is None
            else np.asarray(self.sigma_lambda, dtype=float)
        )
        s_q = None
        if self.q1 is not None:
            s_q = (
                DEFAULT_SIGMA_Q_FRAC * np.maximum(np.abs(self.q1), np.abs(self.q2))
                if self.sigma_q is None
                else np.asarray(self.sigma_q, dtype=float)
            )
        s_tau = None
        if self.tau_ns is not None:
            s_tau = (
                DEFAULT_SIGMA_TAU_FRAC * np.abs(self.tau_ns)
                if self.sigma_tau is None
                else np.asarray(self.sigma_tau, dtype=float)
            )
        return s_lam, s_q, s_tau


_HEADER_ALIASES = {
    "detuning": "control",
    "detuning_err": "control_err",
    "power": "control",
    "power_err": "control_err",
}


def _normalize_header(name: str) -> str:
    base = name.strip().lower()
    for suffix in _UNIT_SUFFIXES:
        if base.endswith(suffix):
            base = base[: -len(suffix)]
            break
    return _HEADER_ALIASES.get(base, base)


def read_anticrossing_csv(source, control_kind: Optional[str] = None) -> AnticrossingData:
    """Ingest the fixed CSV schema: control, lambda1, lambda2, q1, q2, tau (+ *_err).

    Unit-suffixed header variants (``control_nm``, ``lambda1_nm``, ``tau_ns``, etc.)
    are accepted; a ``control_mw`` header implies a power control column.
    """
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty CSV: missing header row") from None

    columns = {}
    for idx, raw in enumerate(header):
        base = _normalize_header(raw)
        if raw.strip().lower() in ("control_mw", "power", "power_mw"):
            control_kind = control_kind or "power_mw"
        if base in columns:
            raise SchemaError(f"duplicate column {base!r} (header column {idx + 1})")
        columns[base] = idx
    for required in ("control", "lambda1", "lambda2"):
        if required not in columns:
            raise SchemaError(f"missing required column {required!r} in header")
    known = set(_CSV_COLUMNS) | {c + "_err" for c in _CSV_COLUMNS}
    unknown = [c for c in columns if c not in known]
    if unknown:
        raise SchemaError(f"unknown column(s) {unknown} in header")

    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise SchemaError(f"row {line_no}: expected {len(header)} cells, got {len(row)}")
        parsed = {}
        for base, idx in columns.items():
            cell = row[idx].strip()
            if cell == "":
                parsed[base] = None
                continue
            try:
                parsed[base] = float(cell)
            except ValueError:
                raise SchemaError(
                    f"row {line_no}, column {header[idx]!r}: not a number: {cell!r}"
                ) from None
        rows.append((line_no, parsed))

    if len(rows) < 4:
        raise SchemaError(f"need at least 4 data rows, got {len(rows)}")

    def column(name, required=False):
        values = [parsed.get(name) for _, parsed in rows]
        present = [v is not None for v in values]
        if not any(present):
            if required:
                raise SchemaError(f"column {name!r} has no values")
            return None
        if not all(present):
            bad = rows[present.index(False)][0]
            raise SchemaError(f"row {bad}: missing value in column {name!r}")
        return np.array(values, dtype=float)

    return AnticrossingData(
        control=column("control", required=True),
        lambda1=column("lambda1", required=True),
        lambda2=column("lambda2", required=True),
        control_kind=control_kind or "detuning_nm",
        q1=column("q1"),
        q2=column("q2"),
        tau_ns=column("tau"),
        sigma_lambda=column("lambda1_err"),
        sigma_q=column("q1_err"),
        sigma_tau=column("tau_err"),
    )


_PARAM_ORDER = ("eta", "kappa_t", "kappa_fp", "lambda_t", "cal_slope", "cal_offset", "g", "gamma_leaky")

DEFAULT_BOUNDS = {
    "eta": (1e9, 1e14),
    "kappa_t": (1e9, 1e14),
    "kappa_fp": (1e9, 1e14),
    "g": (1e7, 1e14),
    "gamma_leaky": (1e5, 1e14),
    "cal_slope": (0.0, 100.0),
    "cal_offset": (-50.0, 50.0),
}


@dataclass(frozen=True)
class FitOptions:
    max_evals: int = 40000
    spread_tol: float = 1e-10
    multistart: int = 0
    seed: int = 0
    init_step_frac: float = 0.05


@dataclass(frozen=True)
class FitResult:
    estimates: dict
    std_errors: dict
    residual_norm: float
    converged: bool
    n_evals: int
    near_degenerate: bool
    param_names: tuple

    def to_dict(self) -> dict:
        return {
            "estimates": dict(self.estimates),
            "std_errors": dict(self.std_errors),
            "residual_norm": self.residual_norm,
            "converged": self.converged,
            "n_evals": self.n_evals,
            "near_degenerate": self.near_degenerate,
        }


def _active_params(data: AnticrossingData) -> tuple:
    names = ["eta", "kappa_t", "kappa_fp", "lambda_t"]
    if data.control_kind == "power_mw":
        names += ["cal_slope", "cal_offset"]
    if data.tau_ns is not None:
        names += ["g", "gamma_leaky"]
    return tuple(names)


def _bounds_for(names, data: AnticrossingData, overrides=None):
    lam_all = np.concatenate([data.lambda1, data.lambda2])
    bounds = dict(DEFAULT_BOUNDS)
    bounds["lambda_t"] = (lam_all.min() - 2.0, lam_all.max() + 2.0)
    if overrides:
        bounds.update(overrides)
    return {n: bounds[n] for n in names}


def model_predictions(theta: dict, data: AnticrossingData):
    """Branch wavelengths (ascending), Q's and decay times for each data row.

    Vectorized closed form of :func:`cavtune.modespace.couple` over the rows:
    a residual evaluation inside the simplex loop must not build per-row
    objects.  Agreement with the object path is pinned by a test.
    """
    lam_t = theta["lambda_t"]
    omega_t = wl_to_omega(lam_t)
    eta = theta["eta"]
    kappa_t = theta["kappa_t"]
    kappa_fp = theta["kappa_fp"]

    if data.control_kind == "power_mw":
        detunings_nm = theta["cal_slope"] * data.control + theta["cal_offset"]
    else:
        detunings_nm = data.control

    lam_fp = lam_t + np.asarray(detunings_nm, dtype=float)
    if np.any(lam_fp <= 0.0):
        raise InvalidInput("detuned FP wavelength is non-positive")
    wt = omega_t - 1j * kappa_t
    wf = wl_to_omega(lam_fp) - 1j * kappa_fp
    mean = 0.5 * (wt + wf)
    half = 0.5 * (wt - wf)
    split = np.sqrt(half * half + eta * eta + 0j)
    mu_a, mu_b = mean + split, mean - split

    lam_a = omega_to_wl(mu_a.real)
    lam_b = omega_to_wl(mu_b.real)
    q_a = mu_a.real / (-2.0 * mu_a.imag)
    q_b = mu_b.real / (-2.0 * mu_b.imag)
    a_first = lam_a <= lam_b
    lam1 = np.where(a_first, lam_a, lam_b)
    lam2 = np.where(a_first, lam_b, lam_a)
    q1 = np.where(a_first, q_a, q_b)
    q2 = np.where(a_first, q_b, q_a)

    tau = None
    if data.tau_ns is not None:
        g, gamma_leaky = theta["g"], theta["gamma_leaky"]
        # Euclidean target weight of each eigenvector: |c|^2 = eta^2/(eta^2+|mu-wt|^2);
        # the weights of the pair sum to 1 exactly
        if eta > 0.0:
            ca2 = eta**2 / (eta**2 + np.abs(mu_a - wt) ** 2)
            cb2 = 1.0 - ca2
        else:
            ca2 = np.where(np.abs(mu_a - wt) < np.abs(mu_a - wf), 1.0, 0.0)
            cb2 = 1.0 - ca2
        gamma = gamma_leaky + 2.0 * g**2 * (ca2 / (-mu_a.imag) + cb2 / (-mu_b.imag))
        tau = 1e9 / gamma
    return lam1, lam2, q1, q2, tau


def residuals(theta_vec: np.ndarray, data: AnticrossingData, names=None, bounds=None) -> np.ndarray:
    """Weighted residual vector; out-of-bounds parameters give large finite penalties."""
    names = names or _active_params(data)
    bounds = bounds or _bounds_for(names, data)
    theta = dict(zip(names, np.asarray(theta_vec, dtype=float)))

    n_res = 2 * data.n_rows
    if data.q1 is not None:
        n_res += 2 * data.n_rows
    if data.tau_ns is not None:
        n_res += data.n_rows

    violation = 0.0
    for name in names:
        lo, hi = bounds[name]
        v = theta[name]
        span = max(hi - lo, 1e-300)
        if v < lo:
            violation += (lo - v) / span
        elif v > hi:
            violation += (v - hi) / span
    if violation > 0.0 or not all(np.isfinite(v) for v in theta.values()):
        return np.full(n_res, _PENALTY * (1.0 + violation))

    try:
        lam1, lam2, q1, q2, tau = model_predictions(theta, data)
    except (InvalidInput, ValueError):
        return np.full(n_res, _PENALTY)

    s_lam, s_q, s_tau = data.sigmas()
    parts = [(lam1 - data.lambda1) / s_lam, (lam2 - data.lambda2) / s_lam]
    if data.q1 is not None:
        parts += [(q1 - data.q1) / s_q, (q2 - data.q2) / s_q]
    if data.tau_ns is not None:
        parts.append((tau - data.tau_ns) / s_tau)
    res = np.concatenate(parts)
    if not np.all(np.isfinite(res)):
        return np.full(n_res, _PENALTY)
    return res


def _objective(theta_vec, data, names, bounds):
    r = residuals(theta_vec, data, names, bounds)
    return float(r @ r)


def _nelder_mead(func, x0, steps, spread_tol, max_evals):
    """Simplex minimizer; coefficients (1, 2, 0.5, 0.5); relative-spread stop."""
    n = x0.size
    simplex = [x0.copy()]
    for j in range(n):
        v = x0.copy()
        v[j] += steps[j]
        simplex.append(v)
    simplex = np.array(simplex)
    values = np.array([func(v) for v in simplex])
    n_evals = n + 1

    while n_evals < max_evals:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]

        scale = np.maximum(np.abs(simplex[0]), 1e-300)
        spread_x = np.max(np.abs(simplex[1:] - simplex[0]) / scale)
        if spread_x < spread_tol:
            return simplex[0], values[0], n_evals, True

        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        reflected = centroid + 1.0 * (centroid - worst)
        f_ref = func(reflected)
        n_evals += 1
        if f_ref < values[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_exp = func(expanded)
            n_evals += 1
            if f_exp < f_ref:
                simplex[-1], values[-1] = expanded, f_exp
            else:
                simplex[-1], values[-1] = reflected, f_ref
        elif f_ref < values[-2]:
            simplex[-1], values[-1] = reflected, f_ref
        else:
            if f_ref < values[-1]:
                contracted = centroid + 0.5 * (reflected - centroid)
            else:
                contracted = centroid + 0.5 * (worst - centroid)
            f_con = func(contracted)
            n_evals += 1
            if f_con < min(f_ref, values[-1]):
                simplex[-1], values[-1] = contracted, f_con
            else:
                best = simplex[0]
                for j in range(1, n + 1):
                    simplex[j] = best + 0.5 * (simplex[j] - best)
                    values[j] = func(simplex[j])
                n_evals += n

    return simplex[np.argmin(values)], values.min(), n_evals, False


def fit(
    data: AnticrossingData,
    init: dict,
    bounds: Optional[dict] = None,
    options: Optional[FitOptions] = None,
) -> FitResult:
    """Weighted least-squares fit of the coupled-mode model to ``data``.

    ``init`` must provide every active parameter (which parameters are active
    follows from the data columns).  Multi-start, when enabled, draws extra
    seeded initializations within the bounds; the winner is the lowest
    objective with ties broken by start index.
    """
    options = options or FitOptions()
    names = _active_params(data)
    missing = [n for n in names if n not in init]
    if missing:
        raise InvalidInput(f"init lacks required parameter(s): {missing}")
    all_bounds = _bounds_for(names, data, bounds)
    x0 = np.array([float(init[n]) for n in names])
    for n, v in zip(names, x0):
        lo, hi = all_bounds[n]
        if not lo <= v <= hi:
            raise InvalidInput(f"init[{n!r}]={v} outside bounds [{lo}, {hi}]")

    def func(vec):
        return _objective(vec, data, names, all_bounds)

    starts = [x0]
    if options.multistart > 0:
        rng = np.random.RandomState(options.seed)
        for _ in range(options.multistart):
            draw = []
            for n, v in zip(names, x0):
                lo, hi = all_bounds[n]
                if lo > 0 and hi / max(lo, 1e-300) > 100.0:
                    span = np.log10(max(v, lo * 10, 1e-300))
                    val = 10.0 ** rng.uniform(span - 0.5, span + 0.5)
                else:
                    width = 0.25 * (hi - lo) if hi > lo else 1.0
                    val = v + rng.uniform(-width, width)
                draw.append(np.clip(val, lo, hi))
            starts.append(np.array(draw))

    best = None
    total_evals = 0
    for idx, start in enumerate(starts):
        x, fval, ok = start, np.inf, False
        budget = options.max_evals
        # fresh-simplex restart rounds sidestep premature simplex collapse
        for round_no in range(6):
            if budget <= 0:
                break
            frac = options.init_step_frac if round_no == 0 else options.init_step_frac / 10.0
            steps = np.array([frac * abs(s) if s != 0.0 else frac for s in x])
            x_new, f_new, n_evals, ok = _nelder_mead(
                func, x, steps, options.spread_tol, budget
            )
            total_evals += n_evals
            budget -= n_evals
            improved = f_new < fval * (1.0 - 1e-9) if np.isfinite(fval) else True
            x, fval = x_new, f_new
            if not ok or not improved:
                break
        if best is None or fval < best[1]:
            best = (x, fval, ok, idx)

    x_best, f_best, converged, _ = best
    estimates = dict(zip(names, (float(v) for v in x_best)))

    std_errors = _finite_difference_errors(x_best, data, names, all_bounds)
    res_norm = float(np.sqrt(f_best))

    eta_resolution = abs(
        float(detuning_wl_to_omega(float(np.mean(data.sigmas()[0])), estimates["lambda_t"]))
    ) / 2.0
    near_degenerate = estimates["eta"] < eta_resolution

    return FitResult(
        estimates=estimates,
        std_errors=std_errors,
        residual_norm=res_norm,
        converged=converged,
        n_evals=total_evals,
        near_degenerate=near_degenerate,
        param_names=names,
    )


def _finite_difference_errors(x, data, names, bounds):
    """Gauss-Newton standard errors from a central-difference Jacobian."""
    r0 = residuals(x, data, names, bounds)
    m, n = r0.size, x.size
    jac = np.empty((m, n))
    for j in range(n):
        h = 1e-6 * max(abs(x[j]), 1e-12)
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        jac[:, j] = (residuals(xp, data, names, bounds) - residuals(xm, data, names, bounds)) / (
            2.0 * h
        )
    dof = max(m - n, 1)
    scale = float(r0 @ r0) / dof
    try:
        cov = np.linalg.pinv(jac.T @ jac) * scale
        errs = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        errs = np.full(n, np.nan)
    return dict(zip(names, (float(e) for e in errs)))


def calibrate_power(data: AnticrossingData, result: FitResult) -> tuple[float, float]:
    """Linear power-to-detuning map (nm/mW slope, nm offset) from a fit result."""
    if data.control_kind != "power_mw":
        raise InvalidInput("calibration requires a power control column")
    if "cal_slope" not in result.estimates:
        raise InvalidInput("fit was run without calibration parameters")
    return result.estimates["cal_slope"], result.estimates["cal_offset"]


def synthetic_data(
    eta: float,
    kappa_t: float,
    kappa_fp: float,
    lambda_t: float,
    detunings_nm: Sequence[float],
    g: Optional[float] = None,
    gamma_leaky: Optional[float] = None,
    control_kind: str = "detuning_nm",
    cal_slope: float = 0.1,
    cal_offset: float = 0.0,
    noise_sigma_nm: float = 0.0,
    seed: int = 0,
    with_q: bool = True,
) -> AnticrossingData:
    """Generate a model-exact table (optionally with Gaussian wavelength noise)."""
    theta = {"eta": eta, "kappa_t": kappa_t, "kappa_fp": kappa_fp, "lambda_t": lambda_t}
    detunings_nm = np.asarray(detunings_nm, dtype=float)
    if control_kind == "power_mw":
        control = (detunings_nm - cal_offset) / cal_slope
        theta["cal_slope"], theta["cal_offset"] = cal_slope, cal_offset
    else:
        control = detunings_nm
    include_tau = g is not None and gamma_leaky is not None
    if include_tau:
        theta["g"], theta["gamma_leaky"] = g, gamma_leaky

    probe = AnticrossingData(
        control=control,
        lambda1=np.full(control.size, lambda_t),
        lambda2=np.full(control.size, lambda_t + 1.0),
        control_kind=control_kind,
        tau_ns=np.ones(control.size) if include_tau else None,
    )
    lam1, lam2, q1, q2, tau = model_predictions(theta, probe)
    if noise_sigma_nm > 0.0:
        rng = np.random.RandomState(seed)
        lam1 = lam1 + rng.normal(0.0, noise_sigma_nm, lam1.size)
        lam2 = lam2 + rng.normal(0.0, noise_sigma_nm, lam2.size)
    return AnticrossingData(
        control=control,
        lambda1=lam1,
        lambda2=lam2,
        control_kind=control_kind,
        q1=q1 if with_q else None,
        q2=q2 if with_q else None,
        tau_ns=tau if include_tau else None,
    )
