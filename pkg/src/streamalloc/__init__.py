"""Channel allocation, bandit-style rate learning, and buffer simulation for
smooth multimedia streaming over a multi-channel fading downlink."""

from .model import (
    CostCheckReport,
    GridProb,
    LinearCost,
    PowerLawCost,
    RateVector,
    SystemConfig,
    TableCost,
    UserProfile,
    eval_cost,
    validate_cost,
)
from .optimizer import (
    ConcMinSolution,
    OpCounter,
    SubsetSumResult,
    benchmark_cost,
    brute_force_alpha,
    conc_min,
    reduce_quality_degradation,
    subset_sum,
)
from .allocator import (
    VACANT,
    SlotPlan,
    allocate_channels,
    build_bipartite,
    max_matching,
    select_users,
)
from .learner import (
    EstimatorState,
    IFestival,
    PhasePlan,
    is_exploration_phase,
    powerlaw_cost_builder,
    round_to_grid,
    update_estimates,
)
from .noback import (
    GenericCdf,
    NobackInstance,
    NobackSolution,
    NobackUser,
    UniformCdf,
    expected_cost,
    kkt_residuals,
    lambda_bisect,
    lambda_uniform,
    noback_solve,
    projected_subgradient,
)
from .simulator import (
    IIDConsumption,
    MarkovConsumption,
    RoundRobin,
    SimTrace,
    StaticAllocate,
    default_checkpoints,
    regret_v,
    run_sim,
    sample_channels,
    step_buffer,
)

__version__ = "0.1.0"
