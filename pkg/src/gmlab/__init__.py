"""Numerical laboratory for memory-kernel dephasing emulated by classical noise.

Three routes to the same fidelity curves: stochastic trajectory ensembles
(:mod:`gmlab.trajectories`), the exact Laplace-domain solution of the
memory-kernel master equation (:mod:`gmlab.master_equation`), and a
finite-bandwidth Bloch-Redfield treatment (:mod:`gmlab.redfield`), tied
together by noise synthesis (:mod:`gmlab.noise`), model fitting
(:mod:`gmlab.fitting`), and the sweep harness (:mod:`gmlab.harness`).
"""

__version__ = "0.1.0"

from .kernels import (
    DeltaKernel,
    ExpDecayKernel,
    MemoryKernel,
    ModExpDecayKernel,
    TabulatedKernel,
    kernel_autocorr,
    kernel_laplace,
)
from .noise import (
    NoiseTrace,
    SeedSpec,
    estimate_autocorr,
    estimate_psd,
    gen_modulated_telegraph,
    gen_telegraph,
    gen_white,
    gen_wiener_khinchin,
    read_trace,
    sigma_for_rate,
    write_trace,
)
from .trajectories import (
    DT_DEFAULT,
    EnsembleFidelity,
    ProtocolSpec,
    XY_PROTOCOL,
    XZ_PROTOCOL,
    default_sample_times,
    propagate_qubit,
    propagate_qutrit,
    read_ensemble,
    run_ensemble,
    step_unitary_qubit,
    write_ensemble,
)
from .master_equation import (
    GMMEConfig,
    ModeDecomposition,
    TransferFunction,
    analytic_fidelity_curve,
    build_transfer,
    decompose,
    envelope_rate,
    fidelity_analytic,
    solve_gmme_ode,
    special_amplitude,
)
from .redfield import (
    CutoffSpectrum,
    NonOrthogonalAxesError,
    ensemble_brme,
    propagate_brme,
    redfield_generator,
    spectrum_eval,
)
from .harness import (
    ExperimentConfig,
    PointRecord,
    SweepResult,
    emit_results,
    run_point,
    run_sweep,
)
from .fitting import (
    DecorrDiagnostic,
    DegenerateDataError,
    FitModel,
    FitResult,
    IndexMisalignmentError,
    MODEL_FAMILIES,
    ModelChoice,
    NotConvergedWarning,
    TauRatio,
    TooFewExtremaError,
    UnconvergedInputError,
    UnknownFamilyError,
    decorr_delta,
    extract_envelope,
    fit,
    select_model,
    tau_ratio,
)
