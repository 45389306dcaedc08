"""Optimal thresholding for truncated realized variance under jumps."""

from .kernels import (
    CmseProblem,
    FaJumpLaw,
    StableLaw,
    a_coef,
    b_coef,
    cmse_objective,
    expected_b1_asymptotic_fa,
    expected_b1_asymptotic_stable,
    expected_b1_from_draws,
    expected_b1_merton,
    loss_count,
)
from .models import (
    GaussStable,
    GaussVG,
    HestonJump,
    Merton,
    ModelSpec,
    PathRecord,
    SamplingGrid,
    path_from_csv,
    path_to_csv,
    simulate,
    true_sigma2,
)
from .solvers import (
    FixedThreshold,
    ModulusRule,
    NoSignChangeError,
    NonFiniteError,
    PowerBipowerRule,
    RefinedModulusRule,
    RootConfig,
    RootFRule,
    ThresholdRule,
    asymptotic_threshold,
    solve_levy_mse,
    solve_root_F,
    solve_stable_mse,
    solve_vn,
    solve_wh,
    wh_threshold,
)
from .estimators import (
    EstimateReport,
    ESTIMATOR_ORDER,
    bv,
    consistency_indicator_check,
    evaluate_estimator,
    iterate_rule,
    medrv,
    minrv,
    new_method,
    one_step_rule,
    oracle,
    rv,
    tbv,
    trv,
)

__version__ = "0.1.0"
