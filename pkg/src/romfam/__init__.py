"""romfam: families of reduced-order surrogates for linear systems.

Builds stability-preserving reduced models of large LTI systems with a
priori H2 error bounds, auto-generates ODEs for lumped-parameter networks
from their topology, fits those networks to reference data, and certifies
the fitted surrogate with a total error bound.
"""

from .errors import (
    DegenerateShiftError,
    FitError,
    InstabilityError,
    PipelineError,
    RankDeficiencyError,
    SingularMatrixError,
    SizeCapError,
    TopologyError,
)
from .hfmgen import (
    CoupledRodSpec,
    RodSpec,
    ThermalRodSpec,
    build_system,
    rod_elastic,
    rod_heat,
    rod_thermoelastic,
)
from .hybrid import HybridReport, pipeline, relative_h2, total_bound
from .lpm import (
    CellComplex,
    Edge,
    IOSpec,
    Node,
    Transformer,
    assemble_mechanical,
    assemble_thermal,
    couple_transformer,
    generate_equations,
    incidence,
    load_topology,
)
from .lti import (
    SecondOrderSystem,
    StateSpaceSystem,
    TimeSeries,
    balanced_truncation,
    difference_system,
    eval_transfer,
    eval_transfer_derivative,
    h2_norm,
    is_stable,
    load_system,
    poles,
    save_system,
    simulate,
    to_first_order,
)
from .mor import (
    CureLedger,
    IrkaResult,
    KrylovFactors,
    ShiftPair,
    SparkResult,
    bound_table,
    cure,
    irka,
    pork,
    rational_krylov,
    residual_input,
    spark_optimize,
)
from .numerics import (
    biorthonormalize,
    gen_eig,
    lu_solve,
    lyapunov_solve,
    shifted_factor,
)
from .sysid import FitProblem, FitResult, fit, nrmse

__version__ = "0.1.0"
