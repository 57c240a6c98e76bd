"""Clustered federated learning with Gaussian reward weighting.

Clients report the loss of every local iteration; the server turns those
traces into Gaussian rewards, accumulates them in a pairwise interaction
matrix and, once the matrix settles, splits the federation by spectral
clustering of an affinity built from it. The procedure recurses inside
every cluster.
"""

from .clustering import (
    ClusteringOutcome,
    davies_bouldin,
    fedgw_cluster,
    kmeans,
    spectral_clustering,
)
from .config import ExperimentConfig, FedGWCConfig, TrainingConfig, load_config
from .datagen import FederationSpec, GroupSpec, dirichlet_partition, make_federation
from .interaction import (
    AffinityMatrix,
    InteractionState,
    build_affinity,
    converged,
    extract_upv,
    update_interaction,
)
from .linalg import jacobi_eigh
from .metrics import (
    balanced_accuracy,
    rand_index,
    wadb_score,
    was_score,
    wasserstein_distance,
)
from .orchestrator import (
    ClusterNode,
    Experiment,
    ExperimentLog,
    maybe_split,
    run_experiment,
    run_round,
    sample_cohort,
)
from .rewards import (
    GaussianWeightState,
    LossTrace,
    RoundLossStats,
    average_reward,
    compute_round_stats,
    gaussian_rewards,
    update_weight,
)
from .training import ClientDataset, TrainerConfig, aggregate, local_train

__version__ = "0.1.0"

__all__ = [
    "ClusteringOutcome",
    "davies_bouldin",
    "fedgw_cluster",
    "kmeans",
    "spectral_clustering",
    "ExperimentConfig",
    "FedGWCConfig",
    "TrainingConfig",
    "load_config",
    "FederationSpec",
    "GroupSpec",
    "dirichlet_partition",
    "make_federation",
    "AffinityMatrix",
    "InteractionState",
    "build_affinity",
    "converged",
    "extract_upv",
    "update_interaction",
    "jacobi_eigh",
    "balanced_accuracy",
    "rand_index",
    "wadb_score",
    "was_score",
    "wasserstein_distance",
    "ClusterNode",
    "Experiment",
    "ExperimentLog",
    "maybe_split",
    "run_experiment",
    "run_round",
    "sample_cohort",
    "GaussianWeightState",
    "LossTrace",
    "RoundLossStats",
    "average_reward",
    "compute_round_stats",
    "gaussian_rewards",
    "update_weight",
    "ClientDataset",
    "TrainerConfig",
    "aggregate",
    "local_train",
    "__version__",
]
