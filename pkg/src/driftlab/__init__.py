"""driftlab: numerical laboratory for advection-diffusion with divergence-free drifts."""

from .analysis import (
    Cylinder,
    FundSolBoundParams,
    davies_energy,
    davies_probe,
    drift_free_params,
    fbc_tilde_test,
    fundsol_params,
    harnack_quotient,
    local_boundedness_quotient,
    moser_trace,
    subsolution_residual,
    tail_check,
)
from .drifts import (
    BogovskiiCap,
    DriftAssembly,
    EllipticCounterexample,
    HodgeDecomposition,
    SpeedSchedule,
    assemble_borderline,
    assemble_selfsimilar,
    borderline_partial_sums,
    borderline_schedule,
    build_bogovskii_cap,
    build_elliptic,
    heat_subsolution,
    hminus1_proxy,
    hodge_decompose,
    speed_envelope,
    subsolution_radius,
)
from .fields import (
    Grid,
    SpaceTimeField,
    divergence,
    gradient,
    laplacian,
    read_field,
    shell_restrict,
    write_field,
)
from .norms import (
    Annulus,
    Box,
    CriticalityReport,
    FbcParams,
    MixedNormSpec,
    ball,
    criticality_index,
    fbc_params_radial,
    fbc_params_sliced,
    fbc_test,
    good_slices,
    mixed_norm,
)
from .solver import (
    FieldDrift,
    PotentialDrift,
    SimRun,
    SolverConfig,
    ZeroDrift,
    dynamic_rescale,
    fundamental_solution,
    gaussian_blob,
    gaussian_comparison,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "Annulus",
    "BogovskiiCap",
    "Box",
    "CriticalityReport",
    "Cylinder",
    "DriftAssembly",
    "EllipticCounterexample",
    "FbcParams",
    "FieldDrift",
    "FundSolBoundParams",
    "Grid",
    "HodgeDecomposition",
    "MixedNormSpec",
    "PotentialDrift",
    "SimRun",
    "SolverConfig",
    "SpaceTimeField",
    "SpeedSchedule",
    "ZeroDrift",
    "assemble_borderline",
    "assemble_selfsimilar",
    "ball",
    "borderline_partial_sums",
    "borderline_schedule",
    "build_bogovskii_cap",
    "build_elliptic",
    "criticality_index",
    "davies_energy",
    "davies_probe",
    "divergence",
    "drift_free_params",
    "dynamic_rescale",
    "fbc_params_radial",
    "fbc_params_sliced",
    "fbc_test",
    "fbc_tilde_test",
    "fundamental_solution",
    "fundsol_params",
    "gaussian_blob",
    "gaussian_comparison",
    "good_slices",
    "gradient",
    "harnack_quotient",
    "heat_subsolution",
    "hminus1_proxy",
    "hodge_decompose",
    "laplacian",
    "local_boundedness_quotient",
    "mixed_norm",
    "moser_trace",
    "read_field",
    "shell_restrict",
    "solve",
    "speed_envelope",
    "subsolution_radius",
    "subsolution_residual",
    "tail_check",
    "write_field",
]
