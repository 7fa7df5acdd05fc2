"""Greedy training of shallow ridge-function networks for PDE solvers."""

from .dictionary import (
    Activation,
    DictionarySpec,
    Expansion,
    RidgeNeuron,
    expansion_eval,
    expansion_partial,
    neuron_eval,
    neuron_partial,
    relu_power,
    sigmoid,
)
from .quadrature import (
    BoundaryRule,
    Box,
    Disk,
    QuadratureRule,
    boundary_rule,
    gauss_grid,
    halton,
    integrate,
    monte_carlo,
)
from .problems import (
    ConvexObjective,
    EllipticProblem,
    NonlinearEnergyProblem,
    PinnProblem,
    QuadraticObjective,
    assemble_energy,
    assemble_nonlinear,
    assemble_penalized,
    assemble_pinn,
    embed,
    objective_value,
    residual_pairing,
)
from .argmax import (
    ArgmaxEngine,
    ExhaustiveArgmax,
    SearchConfig,
    axis_restricted,
    exact_1d,
    score,
    seed_candidates,
)
from .greedy import (
    OgaConfig,
    RgaConfig,
    oga_step,
    project,
    rga_step,
    run_oga,
    run_rga,
)
from .metrics import (
    ConvergenceReport,
    ExactSolution,
    error_norms,
    fitted_order,
    order_table,
    relative_gap,
)

__version__ = "0.1.0"
