"""Sparse-gradient collective communication and synchronous SGD harness."""

from .collectives import (
    CollectiveStats,
    GTopKResult,
    allgather,
    binomial_bcast,
    dense_ring_allreduce,
    gtopk_allreduce,
    topk_allreduce,
)
from .cost_model import CostParams, FitResult, fit_alpha_beta, scaling_efficiency, t_dense, t_gtopk, t_topk
from .models import SyntheticDataset, ToyModel, gen_dataset, grad, shard_batches
from .optimizer import (
    DensitySchedule,
    OptimizerState,
    StepReport,
    dense_step,
    density_at,
    gtopk_naive_step,
    gtopk_step,
    make_state,
    topk_step,
)
from .sparse import (
    IndexMask,
    SparseVector,
    densify,
    k_from_density,
    masked_extract,
    top_k_select,
    top_op,
)
from .transport import (
    ClusterConfig,
    Endpoint,
    ProtocolError,
    TransportError,
    connect_tcp_cluster,
    create_local_cluster,
    decode_sparse,
    encode_sparse,
    run_workers,
)

__version__ = "0.1.0"
