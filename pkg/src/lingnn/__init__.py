"""Linear graph neural networks and their gradient-flow training dynamics."""

from .errors import DomainError, ParameterError, ParseError, ShapeError
from .graph import Graph, barabasi_albert, erdos_renyi, knn_ring, load_edge_csv, sbm
from .shift import ShiftKind, ShiftMatrix, build_shift
from .gnn import (
    Problem,
    WeightStack,
    collapsed_product,
    forward,
    global_min_loss,
    loss,
    min_norm_solution,
)
from .grad import GradientStack, fd_gradient, gradients
from .init import InitReport, balanced_init, min_admissible_a, theorem_init, validate_init
from .dynamics import (
    DynamicsOptions,
    Status,
    Trajectory,
    flow_integrate,
    gradient_descent,
    iterations_to_epsilon,
    normalized_flow_integrate,
)
from .theory import (
    RateBundle,
    depth_scaling_estimate,
    energy_min_value,
    expected_sigma_small,
    flow_bound_curve,
    rate_bundle,
)
from .experiments import (
    ExperimentConfig,
    SweepRow,
    convergence_sweep,
    gaussian_features,
    load_features_csv,
    sample_labeled_set,
    sigma_sweep,
    synthetic_labels,
)

__version__ = "0.1.0"
