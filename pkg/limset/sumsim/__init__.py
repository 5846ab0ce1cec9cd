from .brownian import (
    SmallBallEstimate,
    SmallBallSandwich,
    brownian_path,
    brownian_paths,
    small_ball_bounds,
    small_ball_estimate,
    small_ball_sandwich,
)
from .cluster import (
    ClusterReport,
    burn_in_for,
    cluster_from_csv,
    cluster_replicas,
    delta_net,
    empirical_cluster,
    function_net,
    merge_nets,
)
from .containment import ContainmentSummary, containment_check
from .diagnostics import TalagrandDiagnostic, talagrand_bound, talagrand_estimate
from .rng import RngStream, streams
from .simulate import (
    ReplicaResult,
    Visit,
    checkpoints,
    normalizer_at,
    run_replicas,
    simulate_partial_sums,
    simulate_path_process,
)
