"""
Likelihood inference for the truncated bivariate normal.

The log-likelihood is the sum of log_pdf over the rows, so the density module
stays the single source of truth. Fits run Nelder-Mead in the unconstrained
coordinates

    x = ((mu1 - m1)/s1, (mu2 - m2)/s2, log(sigma1/s1), log(sigma2/s2), atanh(rho))

where m, s are the column means and standard deviations of the data, which
makes the search invariant to the units of each column.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import optimize, special

from src.config.defaults import DEFAULT_SETTINGS, THETA_FIELDS
from src.core.density import log_pdf_many
from src.core.errors import DataError, NonConvergenceError, TruncEllipseError, ValidationError
from src.core.generators import normal
from src.core.model import TruncatedEllipticalModel, build_model
from src.core.sampling import sample_truncated
from src.utils.logger import get_logger
from src.utils.rng import make_rng
from src.utils.validators import require, validate_positive, validate_rho

logger = get_logger(__name__)

_PENALTY = 1e100
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BivariateTheta:
    """theta = (mu1, mu2, sigma1, sigma2, rho) with sigmas > 0 and |rho| < 1."""
    mu1: float
    mu2: float
    sigma1: float
    sigma2: float
    rho: float

    def __post_init__(self):
        if not (math.isfinite(self.mu1) and math.isfinite(self.mu2)):
            raise ValidationError("mu1 and mu2 must be finite")
        require(validate_positive(self.sigma1, "sigma1"))
        require(validate_positive(self.sigma2, "sigma2"))
        require(validate_rho(self.rho))

    def as_array(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2, self.sigma1, self.sigma2, self.rho])

    @classmethod
    def from_array(cls, values) -> "BivariateTheta":
        return cls(*(float(v) for v in values))

    def to_dict(self) -> Dict[str, float]:
        return dict(zip(THETA_FIELDS, map(float, self.as_array())))

    @property
    def mu(self) -> np.ndarray:
        return np.array([self.mu1, self.mu2])

    @property
    def sigma(self) -> np.ndarray:
        cov = self.rho * self.sigma1 * self.sigma2
        return np.array([[self.sigma1 ** 2, cov], [cov, self.sigma2 ** 2]])


@dataclass
class FitReport:
    """Result of one maximum likelihood fit."""
    theta_hat: BivariateTheta
    loglik: float
    converged: bool
    n_iterations: int
    restricted: bool
    std_errors: Optional[np.ndarray] = None
    n_evaluations: int = 0
    n_starts_converged: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta_hat": self.theta_hat.to_dict(),
            "loglik": self.loglik,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
            "restricted": self.restricted,
            "std_errors": None if self.std_errors is None
            else dict(zip(THETA_FIELDS, map(float, self.std_errors))),
        }


@dataclass
class LRTResult:
    """Likelihood ratio test of rho = 0."""
    statistic: float
    p_value: float
    log_p_value: float
    fit_full: FitReport
    fit_null: FitReport
    raw_statistic: float = field(default=0.0, repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "log_p_value": self.log_p_value,
            "fit_full": self.fit_full.to_dict(),
            "fit_null": self.fit_null.to_dict(),
        }


def _inference_settings(overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    cfg = dict(DEFAULT_SETTINGS["inference"])
    cfg.update(overrides or {})
    return cfg


def theta_to_model(theta: BivariateTheta, c) -> TruncatedEllipticalModel:
    """Truncated bivariate normal with parameters theta and truncation point c."""
    return build_model(theta.mu, theta.sigma, c, normal())


def check_data(data, c) -> Tuple[np.ndarray, np.ndarray]:
    """
    Validate an n x 2 data matrix against the truncation point.

    Raises:
        DataError: wrong shape, non-finite values, or a row below c
    """
    data = np.asarray(data, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != 2:
        raise DataError(f"data must be an n x 2 matrix (got shape {data.shape})")
    if c.shape != (2,):
        raise DataError("c must have two entries")
    bad = ~np.all(np.isfinite(data), axis=1)
    if np.any(bad):
        row = int(np.argmax(bad))
        raise DataError(f"row {row} contains a non-finite value", row=row)
    below = np.any(data < c, axis=1)
    if np.any(below):
        row = int(np.argmax(below))
        raise DataError(f"row {row} lies below the truncation point {c.tolist()}", row=row)
    return data, c


def log_likelihood(theta: BivariateTheta, data, c) -> float:
    """
    Sum of log_pdf over the rows of data.

    Raises:
        DataError: any row below c (the error names the row index)
    """
    data, c = check_data(data, c)
    model = theta_to_model(theta, c)
    return float(np.sum(log_pdf_many(model, data)))


# ---------------------------------------------------------------------------
# Transformed coordinates
# ---------------------------------------------------------------------------

def theta_from_x(x, loc: np.ndarray, scale: np.ndarray) -> BivariateTheta:
    """Map unconstrained coordinates back to theta."""
    return BivariateTheta(
        mu1=loc[0] + scale[0] * x[0],
        mu2=loc[1] + scale[1] * x[1],
        sigma1=scale[0] * math.exp(x[2]),
        sigma2=scale[1] * math.exp(x[3]),
        rho=math.tanh(x[4]),
    )


def data_scaling(data: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Column means and standard deviations used to normalize the search."""
    loc = data.mean(axis=0)
    scale = data.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return loc, scale


def _nelder_mead(objective, starts: List[np.ndarray], cfg: Dict[str, Any], label: str):
    """Run Nelder-Mead from every start; return (best result, number converged)."""
    options = dict(xatol=cfg["xatol"], fatol=cfg["fatol"],
                   maxfev=cfg["max_fev"], maxiter=cfg["max_fev"])
    best = None
    n_ok = 0
    for k, x0 in enumerate(starts):
        res = optimize.minimize(objective, x0, method="Nelder-Mead", options=options)
        ok = bool(res.success) and res.fun < _PENALTY
        n_ok += ok
        logger.debug(f"{label} start {k}: f={res.fun:.10g} nit={res.nit} nfev={res.nfev} success={ok}")
        if ok and (best is None or not best[1] or res.fun < best[0].fun):
            best = (res, True)
        elif best is None or (not best[1] and res.fun < best[0].fun):
            best = (res, False)
    return best[0], n_ok


def _starts(x0: np.ndarray, cfg: Dict[str, Any]) -> List[np.ndarray]:
    rng = make_rng(int(cfg["start_seed"]))
    jitter = rng.standard_normal((int(cfg["n_starts"]) - 1, x0.size)) * cfg["jitter_scale"]
    return [x0] + [x0 + j for j in jitter]


# ---------------------------------------------------------------------------
# Fits
# ---------------------------------------------------------------------------

def fit_univariate(x: np.ndarray, c: float, settings: Optional[Dict[str, Any]] = None) -> Tuple[float, float, float, bool, int]:
    """
    MLE of a normal truncated below at c (c may be -inf).

    Returns:
        (mu, sigma, loglik, converged, n_iterations)
    """
    cfg = _inference_settings(settings)
    x = np.asarray(x, dtype=np.float64)
    n = x.size
    loc = float(x.mean())
    scale = float(x.std()) or 1.0

    def loglik(mu: float, sigma: float) -> float:
        z = (x - mu) / sigma
        ll = -0.5 * float(z @ z) - n * (0.5 * _LOG_2PI + math.log(sigma))
        if math.isfinite(c):
            ll -= n * float(special.log_ndtr((mu - c) / sigma))
        return ll

    def objective(u):
        if not np.all(np.isfinite(u)) or abs(u[1]) > 50:
            return _PENALTY
        val = loglik(loc + scale * u[0], scale * math.exp(u[1]))
        return -val if math.isfinite(val) else _PENALTY

    res, n_ok = _nelder_mead(objective, _starts(np.zeros(2), cfg), cfg, "univariate fit")
    mu, sigma = loc + scale * res.x[0], scale * math.exp(res.x[1])
    return mu, sigma, -float(res.fun), n_ok > 0, int(res.nit)


def fit_mle(data, c, restricted: bool = False, std_errors: bool = False,
            settings: Optional[Dict[str, Any]] = None, seed: int = 0,
            n_mc: int = 20000) -> FitReport:
    """
    Maximum likelihood fit of the truncated bivariate normal.

    The full fit runs Nelder-Mead from the moment-based start and
    n_starts - 1 jittered copies and keeps the best converged result. The
    restricted fit (rho = 0) factorizes into two univariate fits.

    Args:
        data: n x 2 matrix of rows >= c
        c: truncation point (entries may be -inf)
        restricted: fix rho = 0
        std_errors: attach sqrt(diag((n I(theta_hat))^-1)) (full fit only)
        settings: 'inference' section overrides
        seed: seed of the Monte Carlo Fisher information
        n_mc: Monte Carlo size for the Fisher information

    Returns:
        FitReport

    Raises:
        DataError: fewer than min_rows rows or rows outside the support
        NonConvergenceError: no start converged; .reports holds the best point
    """
    cfg = _inference_settings(settings)
    data, c = check_data(data, c)
    n = data.shape[0]
    if n < cfg["min_rows"]:
        raise DataError(f"need at least {cfg['min_rows']} rows (got {n})")

    logger.info(f"Fitting {'restricted' if restricted else 'full'} model to {n} rows")

    if restricted:
        mu1, s1, ll1, ok1, it1 = fit_univariate(data[:, 0], float(c[0]), cfg)
        mu2, s2, ll2, ok2, it2 = fit_univariate(data[:, 1], float(c[1]), cfg)
        report = FitReport(theta_hat=BivariateTheta(mu1, mu2, s1, s2, 0.0), loglik=ll1 + ll2,
                           converged=ok1 and ok2, n_iterations=it1 + it2, restricted=True,
                           n_starts_converged=int(ok1 and ok2))
    else:
        loc, scale = data_scaling(data)
        r0 = float(np.clip(np.corrcoef(data.T)[0, 1], -0.95, 0.95)) if n > 2 else 0.0
        x0 = np.array([0.0, 0.0, 0.0, 0.0, math.atanh(r0 if math.isfinite(r0) else 0.0)])
        n_calls = [0]

        def objective(x):
            n_calls[0] += 1
            if not np.all(np.isfinite(x)) or np.any(np.abs(x[2:]) > 50):
                return _PENALTY
            try:
                val = log_likelihood(theta_from_x(x, loc, scale), data, c)
            except (TruncEllipseError, ValueError, OverflowError):
                return _PENALTY
            return -val if math.isfinite(val) else _PENALTY

        res, n_ok = _nelder_mead(objective, _starts(x0, cfg), cfg, "full fit")
        report = FitReport(theta_hat=theta_from_x(res.x, loc, scale), loglik=-float(res.fun),
                           converged=n_ok > 0, n_iterations=int(res.nit), restricted=False,
                           n_evaluations=n_calls[0], n_starts_converged=n_ok)

    if not report.converged:
        logger.warning(f"MLE did not converge from any start (best loglik {report.loglik:.6g})")
        raise NonConvergenceError("maximum likelihood search did not converge", reports=[report])

    if std_errors and not restricted:
        info = fisher_information(report.theta_hat, c, n_mc, seed)
        report.std_errors = np.sqrt(np.diag(np.linalg.inv(n * info)))

    logger.info(f"Fit finished: loglik={report.loglik:.10g}, theta={report.theta_hat.to_dict()}")
    return report


def chi2_1_logsf(x: float) -> float:
    """log P(chi2_1 > x) = log 2 + log Phi(-sqrt(x))."""
    if not x >= 0:
        raise ValidationError(f"chi-square statistic must be >= 0 (got {x})")
    return math.log(2.0) + float(special.log_ndtr(-math.sqrt(x)))


def chi2_1_sf(x: float) -> float:
    """Survival function of the chi-square law with one degree of freedom."""
    return math.exp(chi2_1_logsf(x))


def lrt_independence(data, c, settings: Optional[Dict[str, Any]] = None) -> LRTResult:
    """
    Likelihood ratio test of rho = 0.

    statistic = 2 (loglik_full - loglik_null), clamped at 0, referred to chi2_1.

    Raises:
        NonConvergenceError: either fit failed; .reports holds both fits
    """
    reports: List[FitReport] = []
    try:
        full = fit_mle(data, c, restricted=False, settings=settings)
    except NonConvergenceError as e:
        full = None
        reports.extend(e.reports)
    try:
        null = fit_mle(data, c, restricted=True, settings=settings)
    except NonConvergenceError as e:
        null = None
        reports.extend(e.reports)

    if full is None or null is None:
        raise NonConvergenceError("likelihood ratio test needs both fits to converge",
                                  reports=[r for r in (full, null) if r is not None] + reports)

    raw = 2.0 * (full.loglik - null.loglik)
    if raw < -1e-6:
        logger.warning(f"Restricted fit beat the full fit by {-raw / 2:.3g}; statistic clamped at 0")
    stat = max(raw, 0.0)
    log_p = chi2_1_logsf(stat)
    return LRTResult(statistic=stat, p_value=math.exp(log_p), log_p_value=log_p,
                     fit_full=full, fit_null=null, raw_statistic=raw)


# ---------------------------------------------------------------------------
# Exponential-family coordinates
# ---------------------------------------------------------------------------

def canonical_stats(w) -> np.ndarray:
    """V = (w1, -w1^2, w2, -w2^2, w1 w2) for one point or each row."""
    w = np.asarray(w, dtype=np.float64)
    w1, w2 = w[..., 0], w[..., 1]
    return np.stack([w1, -w1 * w1, w2, -w2 * w2, w1 * w2], axis=-1)


def canonical_params(theta: BivariateTheta) -> np.ndarray:
    """
    T = (1/s1^2, 1/s2^2, 2(m1/s1^2 - r m2/(s1 s2)), 2(m2/s2^2 - r m1/(s1 s2)), 2r/(s1 s2)).
    """
    m1, m2, s1, s2, r = theta.as_array()
    return np.array([
        1.0 / s1 ** 2,
        1.0 / s2 ** 2,
        2.0 * (m1 / s1 ** 2 - r * m2 / (s1 * s2)),
        2.0 * (m2 / s2 ** 2 - r * m1 / (s1 * s2)),
        2.0 * r / (s1 * s2),
    ])


def _linear_term_partials(theta: BivariateTheta) -> Tuple[np.ndarray, np.ndarray, float, float]:
    """A = m1/s1^2 - r m2/(s1 s2), B = m2/s2^2 - r m1/(s1 s2) and their gradients."""
    m1, m2, s1, s2, r = theta.as_array()
    a = m1 / s1 ** 2 - r * m2 / (s1 * s2)
    b = m2 / s2 ** 2 - r * m1 / (s1 * s2)
    da = np.array([
        1.0 / s1 ** 2,
        -r / (s1 * s2),
        -2.0 * m1 / s1 ** 3 + r * m2 / (s1 ** 2 * s2),
        r * m2 / (s1 * s2 ** 2),
        -m2 / (s1 * s2),
    ])
    db = np.array([
        -r / (s1 * s2),
        1.0 / s2 ** 2,
        r * m1 / (s1 ** 2 * s2),
        -2.0 * m2 / s2 ** 3 + r * m1 / (s1 * s2 ** 2),
        -m1 / (s1 * s2),
    ])
    return da, db, a, b


def canonical_jacobian(theta: BivariateTheta) -> np.ndarray:
    """dT/dtheta, rows indexed by T, columns by (mu1, mu2, sigma1, sigma2, rho)."""
    _, _, s1, s2, r = theta.as_array()
    da, db, _, _ = _linear_term_partials(theta)
    jac = np.zeros((5, 5))
    jac[0, 2] = -2.0 / s1 ** 3
    jac[1, 3] = -2.0 / s2 ** 3
    jac[2] = 2.0 * da
    jac[3] = 2.0 * db
    jac[4, 2] = -2.0 * r / (s1 ** 2 * s2)
    jac[4, 3] = -2.0 * r / (s1 * s2 ** 2)
    jac[4, 4] = 2.0 / (s1 * s2)
    return jac


def natural_params(theta: BivariateTheta) -> np.ndarray:
    """
    eta with log density = eta . V - log normalizer.

    eta = (A/D, 1/(2 s1^2 D), B/D, 1/(2 s2^2 D), r/(s1 s2 D)), D = 1 - r^2.
    """
    _, _, s1, s2, r = theta.as_array()
    _, _, a, b = _linear_term_partials(theta)
    d = 1.0 - r * r
    return np.array([a / d, 0.5 / (s1 ** 2 * d), b / d, 0.5 / (s2 ** 2 * d), r / (s1 * s2 * d)])


def natural_jacobian(theta: BivariateTheta) -> np.ndarray:
    """d eta / d theta."""
    _, _, s1, s2, r = theta.as_array()
    da, db, a, b = _linear_term_partials(theta)
    d = 1.0 - r * r
    jac = np.zeros((5, 5))

    jac[0] = da / d
    jac[0, 4] += a * 2.0 * r / d ** 2
    jac[2] = db / d
    jac[2, 4] += b * 2.0 * r / d ** 2

    jac[1, 2] = -1.0 / (s1 ** 3 * d)
    jac[1, 4] = r / (s1 ** 2 * d ** 2)
    jac[3, 3] = -1.0 / (s2 ** 3 * d)
    jac[3, 4] = r / (s2 ** 2 * d ** 2)

    jac[4, 2] = -r / (s1 ** 2 * s2 * d)
    jac[4, 3] = -r / (s1 * s2 ** 2 * d)
    jac[4, 4] = (1.0 + r * r) / (s1 * s2 * d ** 2)
    return jac


def fisher_information(theta: BivariateTheta, c, n_mc: int = 20000, seed: int = 0) -> np.ndarray:
    """
    Per-observation Fisher information J' Cov(V) J.

    Cov(V) is estimated from n_mc draws of the truncated model; J is the
    analytic Jacobian of the natural parameters.

    Raises:
        ValidationError: n_mc < 10^4
        SamplingError: sampler failure
    """
    if n_mc < 10_000:
        raise ValidationError(f"n_mc must be >= 10000 (got {n_mc})")
    batch = sample_truncated(theta_to_model(theta, c), n_mc, seed)
    cov_v = np.cov(canonical_stats(batch.points), rowvar=False)
    jac = natural_jacobian(theta)
    info = jac.T @ cov_v @ jac
    return 0.5 * (info + info.T)
