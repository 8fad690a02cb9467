"""Optimal transport between finite mixtures, divergence bounds and GMM simplification."""

from .bounds import (
    BoundRecord,
    BoundReport,
    chi2_kl_bound,
    crot_kl_bound,
    empirical_w2_ub,
    expfam_kl_bound,
    fdiv_derivative_bound,
    gelbrich_lb,
    hungarian_bound,
    logsum_bound,
    max_bound,
    scub,
)
from .distances import (
    CostMatrix,
    GroundDistanceSpec,
    cost_matrix,
    js_alpha,
    js_alpha_cap,
    js_alpha_sqrt,
    kl_gaussian,
    renyi_gaussian,
    tv_gaussian_1d,
    tv_mc,
    tv_numeric_1d,
    w2_gaussian,
    wasserstein_1d_quantile,
)
from .estimators import McConfig, kl_eval_bound, mc_js_alpha, mc_kl, mc_renyi, mc_tv
from .learn import LearnConfig, LearnState, fit_em, fit_scrot, pca_fit_transform, scrot_kl_objective, softmin_weights
from .mixture import (
    Gamma,
    Gaussian1D,
    GaussianDiag,
    Kde,
    Mixture,
    Rayleigh,
    exp_family_view,
    gaussian_mixture,
    kde_build,
    mixture_moments,
)
from .transport import SinkhornConfig, TransportPlan, coupling_floor_check, crot, solve_exact, solve_sinkhorn

__version__ = "0.1.0"
