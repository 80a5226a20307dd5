"""Linear meta-learning pipeline.

Representation learning via moment estimators, optimal eigen-weighting of
an overparameterized representation, few-shot fitting by weighted
minimum-norm interpolation, and risk evaluation by Monte Carlo and
closed-form predictions.
"""

from .datagen import FewShotSet, MetaTrainSet, ProblemSpec, gen_few_shot, gen_meta_train
from .estimators import (
    AlignmentScores,
    MomEstimate,
    alignment_scores,
    dk_angle,
    g_hat,
    mom_m_hat,
    sigma_f_hat,
    task_average_b_hat,
)
from .interpolator import EigenWeighting, fit_weighted_min_norm, fit_weighted_ridge
from .linalg import (
    CovarianceModel,
    SpectrumSummary,
    Subspace,
    ValidationError,
    eig_sym,
    min_norm_solve,
    principal_angle_sin,
    psd_clip,
    sample_gaussian,
    sqrt_spd,
)
from .optrep import (
    KktState,
    NonconvergenceError,
    RobustBox,
    compute_optimal_rep,
    e2e_bound,
    project_capped_simplex,
    solve_theta_cvs,
    solve_theta_star,
    theta_to_lambda_sq,
    weighting_from_profile,
)
from .risk import (
    DEFAULT_VARIANT,
    DcPrediction,
    DivergenceError,
    ReductionResult,
    RiskEstimate,
    ThetaProfile,
    analytic_risk,
    canonical_cov,
    compute_reduction,
    dc_predict,
    monte_carlo_risk,
    monte_carlo_risk_paired,
    solve_xi,
    theta_from_lambda_sq,
    whitening_invariance_check,
)
from .rng import substream

__version__ = "0.1.0"
