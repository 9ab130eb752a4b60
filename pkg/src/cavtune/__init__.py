"""cavtune: coupled-cavity vacuum-field tuning simulator and fitting toolkit.

A two-cavity / one-emitter model in which detuning an adjacent low-Q cavity
reshapes the vacuum field seen by the emitter: static anticrossing and
Q-modulation sweeps, time-dependent master-equation dynamics producing
spontaneous-emission bursts and dips, and parameter recovery from measured
anticrossing tables.
"""

__version__ = "0.1.0"

from .errors import (
    CavtuneError,
    ConvergenceFailure,
    InvalidConfiguration,
    InvalidInput,
    NoFeature,
    NumericalFailure,
    SchemaError,
)
from .modespace import (
    BareMode,
    CoupledModes,
    EmitterParams,
    SystemParams,
    anticrossing_sweep,
    couple,
    coupled_hamiltonian,
    detuning_omega_to_wl,
    detuning_wl_to_omega,
    hamiltonian_bare_basis,
    omega_to_wl,
    q_factor,
    se_rate_ratio,
    total_decay_time,
    wl_to_omega,
)
from .tuning import FreeCarrierPulse, ThermoOpticModel, TuningProfile, fp_shift_at, sample_profile, thermo_shift
from .lindblad import (
    HilbertSpec,
    PumpPulse,
    PumpSchedule,
    Trajectory,
    build_space,
    dense_superoperator,
    emitter_excited_state,
    evolve,
    fock_state,
    liouvillian_apply,
    mode_populations,
    steady_state,
    vacuum_state,
)
from .spectra import (
    BurstMetrics,
    DecayCurve,
    PLMap,
    apply_filter,
    burst_metrics,
    irf_convolve,
    synthesize_map,
)
from .fitting import (
    AnticrossingData,
    FitOptions,
    FitResult,
    calibrate_power,
    fit,
    read_anticrossing_csv,
    residuals,
    synthetic_data,
)
