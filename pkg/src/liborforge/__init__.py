"""Arbitrage-free LIBOR and forward-price models driven by semimartingales.

Modules
-------
core
    Tenors, characteristics, forward functionals, model specifications.
measure_change
    Characteristics of ``f(t, X)``, Girsanov tilts, forward-measure triplets.
drift
    No-arbitrage drifts of the LIBOR market and forward price models,
    drift-condition residuals and assumption audits.
affine
    Generalized Riccati equations and the affine LIBOR family.
simulation
    Monte Carlo paths under the terminal measure, martingale tests, caplets.
spec_io, cli
    JSON model documents and the ``liborforge`` command line.
"""

from .affine import (
    AffineDriverSpec,
    AffineModelSpec,
    CalibrationError,
    RiccatiDivergenceError,
    RiccatiRangeError,
    RiccatiSolution,
    affine_forward_price,
    affine_ode_residual,
    build_affine_model,
    calibrate_u,
    mgf,
    riccati_rhs,
    riccati_solve,
    richardson_error,
)
from .core import (
    AffineFunctional,
    AtomicJumpMeasure,
    ContractError,
    CustomFunctional,
    ForwardFunctional,
    InitialCurve,
    InvariantError,
    LinearCombination,
    LocalCharacteristics,
    LogOnePlusExpFunctional,
    ModelSpec,
    Segment,
    TenorStructure,
    Triplet,
    f_from_g,
    finite_difference_check,
    forward_price_from_curve,
    forward_price_from_libor,
    g_from_f,
    libor_from_forward_price,
    lipschitz_audit,
)
from .drift import (
    DriftConsistencyError,
    FpmSpec,
    LmmSpec,
    ValidationReport,
    VolatilityStructure,
    build_fpm_model,
    build_lmm_model,
    characteristic_integrals,
    drift_residual_backward,
    drift_residual_terminal,
    fpm_drift,
    fpm_pairwise_drift,
    lmm_drift,
    positivity_check,
    residual_sweep,
    structure_preservation_check,
    validate_assumptions,
)
from .measure_change import (
    GirsanovTilt,
    characteristics_of_functional,
    forward_measure_characteristics,
    girsanov_tilt_apply,
    iterated_tilts,
)
from .simulation import (
    MartingaleReport,
    PathGrid,
    SimulationConfig,
    SimulationError,
    caplet_price,
    density_process,
    forward_price_paths,
    libor_paths,
    martingale_test,
    measure_weights,
    period_forward_price_paths,
    simulate_driver,
    telescoping_error,
    terminal_forward_price_paths,
)
from .spec_io import parse_spec

__version__ = "0.1.0"
