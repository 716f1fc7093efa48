"""Recovery of low-rank, jointly sparse signal matrices from hybrid
common/variable measurements.

Step one estimates the row space of ``X`` from measurements taken with a
common operator; step two recovers the coefficient images ``P`` in
``X = P Q`` from per-frame variable measurements, by least squares or by
ADMM with a joint gradient-sparsity penalty.
"""

from .fmx import FMXError, read_fmx, write_fmx
from .model import (PhantomSpec, RankError, SignalMatrix, SVDFactors,
                    dependent_subset, joint_support, make_dynamic_phantom,
                    make_random_lrjs, spark_bruteforce, truncated_svd)
from .sampling import (DenseOperator, FourierLinesOperator, MeasurementSet,
                       VariableOperatorSet, build_common, build_variable_set,
                       cluster_map, measure, noise_sigma_for_snr)
from .subspace import (SubspaceEstimate, estimate_right_subspace, gram,
                       projection_error, subspace_error_curve)
from .recovery import (ADMMConfig, BlockSystem, CoefficientMatrix,
                       ConvergenceWarning, DivergenceError, RecoveryReport,
                       admm_recover, assemble_block_system, group_shrink,
                       reconstruct, relative_error, solve_least_squares)
from .analysis import (BudgetReport, budget, check_theorem3, mmv_identifiable,
                       spark_x_condition)

__version__ = "0.1.0"
