"""Exact batch-regret evaluation and conditional regret-capacity solvers.

Binary and finite-alphabet i.i.d. sources on a finite parameter grid, with
training data of ``n`` batches of ``ell`` symbols and a fresh test batch.
"""

__version__ = "0.1.0"

from .capacity import (
    CapacityResult,
    SaddleReport,
    alpha_capacity_solve,
    capacity_solve,
    cond_mutual_info,
    cond_sibson,
    saddle_check,
)
from .errors import DegenerateEvidenceError, DomainError, SizeGuardError, UnsupportedClassError
from .logmath import kl_divergence, log_binomial, log_sum_exp, renyi_divergence
from .predictors import (
    AddBeta,
    AlphaNML,
    Mixture,
    Predictor,
    add_beta_predict,
    alpha_nml_predict,
    dirichlet_quadrature,
    mixture_predict,
)
from .regret import RegretReport, alpha_batch_regret, batch_regret, max_regret, worst_case_regret
from .source import (
    BatchSetup,
    CountStat,
    ParamGrid,
    Prior,
    count_weight,
    enumerate_counts,
    log_likelihood,
    posterior,
)
