"""Continuous-time diffusion: cascade simulation, rate learning and influence estimation."""

from .cascade import (
    Cascade,
    StateVector,
    cascades_load,
    cascades_save,
    simulate_cascade,
    simulate_cascades,
    split_cascades,
    state_at,
)
from .estimators import FIMNetworkInference, SDTSInfluenceEstimator
from .fim import (
    bce_step_loss,
    conditional_rate,
    euler_step,
    forward_cascade,
    grad_cascade,
    local_error,
)
from .graph import (
    Graph,
    KroneckerSpec,
    graph_load,
    graph_save,
    incoming_neighbors,
    kronecker_generate,
)
from .influence import (
    InfluenceEstimate,
    InfluenceQuery,
    estimate_influence,
    ground_truth_spread,
    hoeffding_theta,
    ie_mae,
    sdts_sample,
    time_window_bound,
)
from .train import (
    TrainConfig,
    TrainedModel,
    eval_bce,
    f1_score,
    infer_edges,
    init_params,
    train,
)

__version__ = "0.1.0"
