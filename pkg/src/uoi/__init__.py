"""Union of Intersections estimators for sparse regression and VAR models.

Model selection intersects bootstrap LASSO supports across a penalty grid;
model estimation averages the best per-bootstrap OLS refits of those
supports.  The LASSO/OLS solves run through an ADMM solver with cached
factorizations, available in single-shard and row-sharded consensus forms.
"""

from .admm import (
    AdmmResult,
    AdmmSettings,
    NormalFactorization,
    consensus_lasso_admm,
    kkt_violation,
    lasso_admm,
    lasso_path,
    objective,
    ols_admm,
    soft_threshold,
)
from .data_io import (
    FitFormatError,
    FitVersionError,
    GroundTruth,
    MatrixFormatError,
    generate_regression,
    read_chunk,
    read_fit,
    read_matrix,
    read_truth,
    write_fit,
    write_matrix,
    write_truth,
)
from .pipeline import (
    LambdaGrid,
    SupportFamily,
    UoiFit,
    estimate,
    eval_loss,
    fit_uoi_lasso,
    intersect_supports,
    lambda_grid,
    ols_on_support,
    select,
    support_metrics,
)
from .problem import RegressionProblem
from .resampling import (
    BootstrapPlan,
    Phase,
    SampleIndices,
    auto_block_len,
    block_bootstrap,
    block_train_eval_split,
    derive_seed,
    row_bootstrap,
    train_eval_split,
)
from .timing import PhaseTiming, TimingBreakdown
from .var import (
    StabilityCheck,
    VarDesign,
    VarFit,
    VarSpec,
    build_var_design,
    check_stability,
    companion_matrix,
    fit_uoi_var,
    flatten_coefficients,
    generate_stable_var,
    partition_coefficients,
    simulate_var,
    vectorized_problem,
)

__version__ = "0.1.0"
