"""Bayesian kernel embeddings: posterior inference over kernel mean
embeddings, kernel learning from the marginal pseudolikelihood, and kernel
two-sample / independence tests."""

__version__ = "0.1.0"

from .embedding import (
    EmpiricalEmbedding,
    PosteriorEmbedding,
    SKMSEConfig,
    empirical_eval,
    posterior,
    skmse_eval,
    witness,
)
from .errors import (
    BKEError,
    ConditioningError,
    DegenerateDataError,
    InvalidInputError,
    OptimizationFailedError,
)
from .kernels import (
    LEBESGUE_LIMIT,
    GramKind,
    MedianMode,
    SEKernelParams,
    gram,
    median_heuristic,
    r_eval,
    se_eval,
    se_grad_x,
)
from .learn import BKLResult, HyperPosterior, ThetaGrid, bkl_optimize, mh_sample
from .pseudolik import (
    Landmarks,
    PseudolikEval,
    choose_landmarks,
    gamma,
    log_gamma,
    log_pseudolik_fast,
    log_pseudolik_naive,
    phi_z,
)
from .synthdata import GridMixtureSpec, gen_grid_mixture, gen_normal_laplace
from .testing import (
    MMDVariant,
    StatisticKind,
    TestResult,
    WitnessBand,
    hsic,
    mmd2,
    permutation_test,
    witness_band,
)
