"""Consensus with nonlinear scalar feedback, its Lure reduction and the
distributed optimisation it solves."""

from .analysis import (
    ContractionReport,
    LinearizationReport,
    LipschitzEstimate,
    RateFit,
    contraction_check,
    linearize,
    lipschitz_near_consensus,
    rate_fit,
)
from .dynamics import (
    FeedbackSpec,
    LureSystem,
    LureTrajectory,
    Trajectory,
    find_fixed_point,
    simulate,
    simulate_lure,
    step,
)
from .optimizer import (
    MuBound,
    UtilityFamily,
    build_feedback,
    closed_form_quadratic,
    mu_bound,
    optimal_consensus,
    random_quadratic_family,
    run_fig2_experiment,
)
from .sequences import (
    MatrixSequenceSpec,
    SwitchedSet,
    TopologySchedule,
    ergodic_counterexample,
    from_topology,
    generate,
)
from .stochastic import (
    ConsensusDecomposition,
    ErgodicityReport,
    LeftProduct,
    RowStochasticMatrix,
    TriangularForm,
    decompose,
    dist_to_consensus,
    dobrushin_coefficient,
    ergodicity_report,
    left_product,
    lyapunov_v,
    row_difference_norm,
    triangularize,
    validate_stochastic,
)

__version__ = "0.1.0"
