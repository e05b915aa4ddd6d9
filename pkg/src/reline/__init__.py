"""Two-station five-class reentrant line under static buffer priority.

A library for simulating and exactly analyzing the reentrant line
1 -> 2 -> 3 -> 4 -> 5 (stations {1,3,5} and {2,4}) under the
preemptive-resume priority ranking {(5,3,1),(2,4)}, and for numerically
verifying its multi-scale heavy-traffic behavior: the product-form limit
of the scaled queue lengths (r Z1, r^2 Z4) with exponential marginals of
means d1 and d4, state-space collapse of the remaining classes, the
transform-level balance identities, and the drift inequalities behind the
uniform moment bounds.
"""

from .distributions import (
    DistributionSpec,
    deterministic,
    erlang,
    exponential,
    hyperexp2,
    make_streams,
    spec_from_config,
    uniform,
)
from .model import (
    BaseParams,
    LimitLaw,
    NetworkInstance,
    StabilityReport,
    UnstableError,
    check_stability,
    limit_constants,
    limit_mgf,
    scale,
    stability_report,
    symmetric_exponential_base,
)
from .mgf_calculus import (
    ThetaVector,
    TransformValues,
    asymptotic_bar_lhs,
    build_theta,
    cancellation_residuals,
    direction_station1,
    direction_station2,
    solve_gamma,
    solve_zeta,
    taylor_star,
    transform_values,
)
from .simulator import SimState, SimStreams, Trajectory, initial_state, run, step
from .estimators import (
    FitReport,
    MgfEstimate,
    StationaryEstimate,
    empirical_mgf,
    fit_exponential,
    scaled_samples,
    summarize,
)
from .ctmc import (
    BarResidualReport,
    TruncatedChain,
    bar_residual,
    build,
    exact_mgf,
    generator_matrix,
    solve,
)
from .lyapunov import (
    DriftReport,
    MomentSweep,
    drift_bracket_station1,
    drift_bracket_station2,
    drift_report,
    f1_value,
    f2_value,
    moment_sweep,
    station1_bracket_box,
    station1_weights,
    station2_identity_box,
    station2_weights,
)

__version__ = "0.1.0"
