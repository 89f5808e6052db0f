"""Covariance and Pearson Bell inequalities: evaluation, local bounds, quantum values, witnesses."""

__version__ = "0.1.0"

from .correlations import (
    Correlators,
    DistributionError,
    JointDistribution,
    SignallingError,
    SignallingWarning,
    binarize,
    correlators,
    covariance,
    deterministic_mixture,
    from_binary_correlators,
    load_distribution,
    pearson,
    pr_box,
    save_distribution,
    uniform_distribution,
)
from .expressions import (
    CHSH,
    COV3322,
    COVCHSH,
    COVCHSH_PRIME,
    I3322,
    PRESETS,
    RCHSH,
    BellExpression,
    chsh,
    cov3322,
    covchsh,
    covchsh_prime,
    get_expression,
    i3322,
    load_expression,
    rchsh,
)
from .kkt import (
    CertificationError,
    certify,
    certify_local_bound,
    kkt_expectations_enumerate,
    kkt_weights_enumerate,
    solve_expectations_case,
    solve_weights_case,
)
from .localset import (
    DeterministicStrategy,
    LocalDecomposition,
    c_matrix,
    covchsh_of_weights,
    enumerate_deterministic,
    localset_scan,
    mixture_distribution,
    numeric_local_bound,
    strategy_index,
    ternary_rchsh_distribution,
    ternary_rchsh_optimum,
)
from .quantum import (
    Observable,
    QuantumStrategy,
    TwoQubitState,
    activation_curve,
    activation_window,
    gamma_matrix,
    optimize_measurements,
    phi_plus,
    phi_theta,
    psi_theta,
    quantum_correlators,
    rho_theta,
    tsirelson_check_cov,
    tsirelson_check_pearson,
)
from .witness import (
    EntropyCurvePoint,
    entropy_curve,
    h2,
    min_max_entropy,
    min_shannon_entropy,
    shannon_entropy,
)
