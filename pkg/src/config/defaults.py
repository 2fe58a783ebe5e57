"""Default configuration values for trunc-ellipse."""


# Default numerical profile
DEFAULT_SETTINGS = {
    "profile_name": "default",
    "version": "1.0",
    "mvnprob": {
        "quad_epsabs": 1e-12,
        "quad_epsrel": 1e-12,
        "quad_limit": 200,
        "qmc_target": 1e-6,
        "qmc_replicates": 12,
        "qmc_initial_points": 1024,
        "qmc_max_points": 262144,
        "neg_inf_sd": 40.0,
        "seed": 0
    },
    "sampling": {
        "gibbs_switch_acceptance": 1e-3,
        "radial_knots": 4096,
        "radial_mass_tolerance": 1e-12,
        "chunk_size": 65536,
        "max_tries": 50_000_000,
        "burn_in": 1000,
        "thin": 1
    },
    "inference": {
        "n_starts": 5,
        "xatol": 1e-8,
        "fatol": 1e-9,
        "max_fev": 5000,
        "jitter_scale": 0.25,
        "min_rows": 10,
        "start_seed": 20240517
    },
    "verify": {
        "replicates": 200,
        "permutations": 499,
        "alpha": 0.05,
        "band_level": 0.99,
        "dcor_max_points": 2000,
        "dcor_max_points_univariate": 20000,
        "workers": 1
    },
    "regularity": {
        "grid_max": 100.0,
        "n_grid": 1000,
        "r2_epsilon": 1e-12,
        "r2_fraction": 0.99,
        "derivative_tolerance": 1e-6,
        "r3_t_min": 1.0,
        "r3_t_max": 1e4,
        "r3_points": 200,
        "r3_projection_t": 1e12,
        "r3_stable_slope": 0.1,
        "zero_threshold": 1e-6,
        "diverge_threshold": 1e6
    }
}

# Sentinel used for untruncated coordinates in JSON documents
NEG_INF_TOKEN = "-inf"


class GeneratorKind:
    """Generator kind constants."""
    NORMAL = "normal"
    STUDENT_T = "student_t"
    KOTZ = "kotz"
    GAMMA_RADIAL = "gamma_radial"
    TABULATED = "tabulated"

    ANALYTIC = (NORMAL, STUDENT_T, KOTZ, GAMMA_RADIAL)
    ALL = ANALYTIC + (TABULATED,)


class RectMethod:
    """Rectangle probability method constants."""
    CLOSED_FORM_1D = "closed_form_1d"
    QUADRATURE_2D_3D = "quadrature_2d_3d"
    QMC = "qmc"


class SamplerMethod:
    """Truncated sampler method constants."""
    REJECTION = "rejection"
    GIBBS = "gibbs"


class R3Verdict:
    """Classification of t * dlog g(t^2) as t grows."""
    TENDS_TO_ZERO = "tends_to_zero"
    DIVERGES = "diverges"
    NEITHER = "neither"
    INCONCLUSIVE = "inconclusive"


class TestName:
    """Independence test constants."""
    __test__ = False  # not a pytest test class

    LRT = "lrt"
    DISTANCE_CORRELATION = "distance_correlation"


class Decision:
    """Test decision constants."""
    REJECT = "reject"
    FAIL_TO_REJECT = "fail_to_reject"


# Parameter vector order of the bivariate model
THETA_FIELDS = ("mu1", "mu2", "sigma1", "sigma2", "rho")

# Point estimates reported for the admissions data (entrance score, course average)
COHEN_THETA = {
    "mu1": 164.19,
    "mu2": 77.195,
    "sigma1": 3.059,
    "sigma2": 5.459,
    "rho": 0.431
}
COHEN_CUTOFFS = (159.5, 0.0)
COHEN_N = 517
COHEN_STATISTIC = 84.905
