"""Sparse heterogeneous ensemble federated learning simulator."""

from .config import ExperimentConfig, LocalHyper, parse_config
from .core import derive_stream, param_vector, vector_arith
from .data import (Dataset, Partition, generate_blobs, load_mnist, partition_dirichlet,
                   partition_pathological, read_idx, write_idx)
from .federation import (EnsembleState, Federation, RoundPlan, aggregate_shefl,
                         compute_coefficients, local_update, permutation_assign, run_algorithm,
                         sample_round)
from .metrics import accuracy, convergence_rounds, ensemble_predict
from .models import Batch, ModelSpec, finite_diff_grad, forward_probs, init_params, loss_and_grad
from .sparsify import SparseDelta, apply_sparse, compute_budgets, top_k, uplink_bytes
from .cli import build_datasets, run_cli

__version__ = "0.1.0"
