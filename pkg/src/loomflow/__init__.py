"""loomflow: flow-matching training with persistent OT couplings.

The package trains a small vector-field model with conditional flow
matching under several data-noise coupling strategies, the central one
being a persistent global assignment refined one minibatch at a time.
"""

__version__ = "0.1.0"

from .coupling import (  # noqa: F401
    CoupledBatch,
    IndependentCoupling,
    LoomCoupling,
    MinibatchOTCoupling,
    PhiMixCoupling,
    run_until_stationary,
)
from .datasets import DatasetSpec, generate, polygon_counterexample  # noqa: F401
from .flow import CfmConfig, gaussian_oracle_field, induced_coupling_cost  # noqa: F401
from .metrics import EvalReport, evaluate_model, wasserstein2  # noqa: F401
from .model import TrainConfig, VectorField, adam_step, train  # noqa: F401
from .ot import (  # noqa: F401
    Assignment,
    brute_force_assignment,
    build_cost_matrix,
    find_negative_cycles,
    matching_cost,
    solve_assignment,
)
from .reflow import ReflowPairs, harvest_pairs, train_reflow  # noqa: F401
from .solvers import SolverConfig, Trajectory, integrate, nfe_of  # noqa: F401
from .store import NoiseRef, NoiseStore  # noqa: F401
