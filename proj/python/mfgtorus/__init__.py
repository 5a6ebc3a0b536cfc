"""Characteristic-based solver for short-time mean field games on the flat torus."""

from _mfgtorus import (  # noqa: F401
    CharacteristicField,
    CoefficientTriple,
    ConvergenceTrace,
    EmpiricalMeasure,
    InversionError,
    NoConvergenceError,
    SolverConfig,
    TransportPlan,
    __version__,
    constant_triple,
    convolution_triple,
    displacement_velocity,
    evaluate_u,
    geodesic_interpolate,
    grad_q_u,
    invert_flow,
    master_residual,
    min_displacement,
    quadratic_triple,
    solve,
    torus_dist,
    upsilon,
    vee_field,
    wasserstein,
    wrap,
)
