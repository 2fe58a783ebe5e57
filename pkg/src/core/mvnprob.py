"""
Rectangle probabilities of multivariate normals and normalizing constants
of truncated elliptical models.

rect_prob computes P(X >= lower) for X ~ N(mean, sigma):

- p = 1: closed form through the normal CDF.
- p = 2, 3: separation of variables after a Cholesky factorization of the
  reordered correlation matrix, integrated with adaptive quadrature.
- p >= 4: the same transform integrated by randomized quasi-Monte Carlo
  (scrambled Sobol), error estimated from independent replicates.

Coordinates with lower = -inf (or more than neg_inf_sd standard deviations
below the mean) are marginalized out before integration.
"""

import math
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy import integrate, special
from scipy.stats import qmc

from src.config.defaults import DEFAULT_SETTINGS, RectMethod
from src.core.errors import GeneratorError, NormalizingConstantError, ValidationError
from src.core.generators import radial_law
from src.utils.logger import get_logger
from src.utils.rng import instance_hash, make_rng, seed_sequence
from src.utils.validators import require, validate_dimensions

logger = get_logger(__name__)

MAX_DIM = 20


@dataclass(frozen=True)
class RectProbResult:
    """
    A rectangle probability with its error estimate.

    Attributes:
        value: probability in [0, 1]
        abs_error_estimate: absolute error estimate (>= 0)
        method: one of RectMethod
        n_evaluations: integrand evaluations (QMC points or quadrature calls)
        log_value: log of value, accurate even when value underflows
        target_met: False when the accuracy target was not reached
    """
    value: float
    abs_error_estimate: float
    method: str
    n_evaluations: int
    log_value: float
    target_met: bool = True

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "abs_error_estimate": self.abs_error_estimate,
            "method": self.method,
            "n_evaluations": self.n_evaluations,
            "target_met": self.target_met,
        }


def _settings(overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    cfg = dict(DEFAULT_SETTINGS["mvnprob"])
    cfg.update(overrides or {})
    return cfg


def rect_prob(mean, sigma, lower, seed: Optional[int] = None, method: Optional[str] = None,
              settings: Optional[Dict[str, Any]] = None) -> RectProbResult:
    """
    P(X >= lower) for X ~ N(mean, sigma).

    Args:
        mean: mean vector
        sigma: positive definite covariance matrix
        lower: lower bounds (entries may be -inf)
        seed: base seed of the QMC randomization (profile seed if None)
        method: force RectMethod.QMC or RectMethod.QUADRATURE_2D_3D
        settings: 'mvnprob' section overrides

    Returns:
        RectProbResult
    """
    cfg = _settings(settings)
    seed = cfg["seed"] if seed is None else seed

    mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    lower = np.atleast_1d(np.asarray(lower, dtype=np.float64))
    require(validate_dimensions(mean, sigma, lower))

    if mean.size > MAX_DIM:
        raise ValidationError(f"rectangle probabilities above dimension {MAX_DIM} are not supported")

    sd = np.sqrt(np.diag(sigma))
    a = (lower - mean) / sd
    active = a > -cfg["neg_inf_sd"]

    if not np.any(active):
        return RectProbResult(1.0, 0.0, RectMethod.CLOSED_FORM_1D, 0, 0.0)

    a = a[active]
    corr = sigma[np.ix_(active, active)] / np.outer(sd[active], sd[active])
    # P(Z >= a) = P(Z <= b) with b = -a by symmetry
    b = -a
    p = b.size

    if p == 1:
        log_v = float(special.log_ndtr(b[0]))
        return RectProbResult(float(special.ndtr(b[0])), 1e-16, RectMethod.CLOSED_FORM_1D, 1, log_v)

    # Most restrictive coordinate first
    order = np.argsort(special.ndtr(b), kind="stable")
    b = b[order]
    corr = corr[np.ix_(order, order)]
    chol = np.linalg.cholesky(corr)

    if method is None:
        method = RectMethod.QUADRATURE_2D_3D if p <= 3 else RectMethod.QMC

    if method == RectMethod.QUADRATURE_2D_3D:
        if p > 3:
            raise ValidationError("quadrature is only available for p <= 3")
        return _quadrature(b, chol, cfg)

    return _qmc(b, chol, cfg, seed, instance_hash(mean, sigma, lower))


def log_rect_prob(mean, sigma, lower, seed: Optional[int] = None,
                  settings: Optional[Dict[str, Any]] = None) -> float:
    """log P(X >= lower); -inf when the probability underflows to zero."""
    return rect_prob(mean, sigma, lower, seed=seed, settings=settings).log_value


def _quadrature(b: np.ndarray, chol: np.ndarray, cfg: Dict[str, Any]) -> RectProbResult:
    """Separation-of-variables integral for p = 2, 3 by adaptive quadrature."""
    eps = dict(epsabs=cfg["quad_epsabs"], epsrel=cfg["quad_epsrel"])
    e1 = float(special.ndtr(b[0]))
    log_e1 = float(special.log_ndtr(b[0]))
    calls = [0]

    if e1 == 0.0:
        return RectProbResult(0.0, 0.0, RectMethod.QUADRATURE_2D_3D, 0, -math.inf)

    def y1_of(u1):
        return special.ndtri(u1 * e1)

    if b.size == 2:
        def integrand(u1):
            calls[0] += 1
            return special.ndtr((b[1] - chol[1, 0] * y1_of(u1)) / chol[1, 1])

        inner, err = integrate.quad(integrand, 0.0, 1.0, limit=cfg["quad_limit"], **eps)
    else:
        def integrand(u2, u1):
            calls[0] += 1
            y1 = y1_of(u1)
            e2 = special.ndtr((b[1] - chol[1, 0] * y1) / chol[1, 1])
            if e2 <= 0.0:
                return 0.0
            y2 = special.ndtri(u2 * e2)
            return e2 * special.ndtr((b[2] - chol[2, 0] * y1 - chol[2, 1] * y2) / chol[2, 2])

        inner, err = integrate.dblquad(integrand, 0.0, 1.0, 0.0, 1.0, **eps)

    inner = min(max(inner, 0.0), 1.0)
    value = e1 * inner
    log_value = log_e1 + math.log(inner) if inner > 0 else -math.inf
    logger.debug(f"Quadrature rect prob p={b.size}: {value:.17g} (err {e1 * err:.3g}, {calls[0]} calls)")
    return RectProbResult(value, e1 * err, RectMethod.QUADRATURE_2D_3D, calls[0], log_value)


def _genz_integrand(b: np.ndarray, chol: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Separation-of-variables integrand at points w in [0,1)^(p-1)."""
    n, p = w.shape[0], b.size
    y = np.zeros((n, p - 1))
    e = np.full(n, special.ndtr(b[0]))
    f = e.copy()
    for i in range(1, p):
        y[:, i - 1] = special.ndtri(np.clip(w[:, i - 1] * e, 0.0, 1.0))
        # 0 * -inf from fully truncated paths is guarded by the f > 0 mask
        with np.errstate(invalid="ignore"):
            shift = y[:, :i] @ chol[i, :i]
        e = special.ndtr((b[i] - shift) / chol[i, i])
        e = np.where(f > 0, e, 0.0)
        f = f * e
    return f


def _replicated_qmc(dim: int, func: Callable[[np.ndarray], np.ndarray], cfg: Dict[str, Any],
                    seed: int, key: int, label: str) -> Tuple[float, float, int, bool]:
    """
    Randomized QMC with independent scrambled Sobol replicates.

    Points double per replicate from qmc_initial_points until three standard
    errors of the replicate mean drop below qmc_target or qmc_max_points is
    reached.

    Returns:
        (estimate, 3 * standard error, total evaluations, target met)
    """
    n_rep = int(cfg["qmc_replicates"])
    children = seed_sequence(seed, key).spawn(n_rep)
    engines = [qmc.Sobol(dim, scramble=True, seed=make_rng(ss)) for ss in children]

    sums = np.zeros(n_rep)
    m = int(round(math.log2(cfg["qmc_initial_points"])))
    drawn = 0
    batch = 2 ** m
    while True:
        for r, engine in enumerate(engines):
            pts = engine.random(batch)
            sums[r] += float(np.sum(func(pts)))
        drawn += batch
        means = sums / drawn
        estimate = float(np.mean(means))
        err = float(3.0 * np.std(means, ddof=1) / math.sqrt(n_rep))
        if err <= cfg["qmc_target"] or drawn * 2 > cfg["qmc_max_points"]:
            break
        # next block doubles the total, keeping the Sobol net balanced
        batch = drawn

    met = err <= cfg["qmc_target"]
    if not met:
        logger.warning(f"{label}: QMC error {err:.3g} above target {cfg['qmc_target']:g} "
                       f"after {drawn} points per replicate")
    return estimate, err, drawn * n_rep, met


def _qmc(b: np.ndarray, chol: np.ndarray, cfg: Dict[str, Any], seed: int, key: int) -> RectProbResult:
    estimate, err, n_eval, met = _replicated_qmc(
        b.size - 1, lambda w: _genz_integrand(b, chol, w), cfg, seed, key, f"rect_prob p={b.size}"
    )
    value = min(max(estimate, 0.0), 1.0)
    log_value = math.log(value) if value > 0 else -math.inf
    return RectProbResult(value, err, RectMethod.QMC, n_eval, log_value, met)


# ---------------------------------------------------------------------------
# Normalizing constants
# ---------------------------------------------------------------------------

def _ray_mass(law, a: np.ndarray, d: np.ndarray) -> np.ndarray:
    """
    Radial probability that the ray r*u stays in the region.

    For direction u with a = (L u) restricted to truncated coordinates and
    d = c - mu, the ray satisfies a_i r >= d_i for every i. Returns
    P(lo <= R <= hi) for the admissible radius interval.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d / a
    lo = np.max(np.where(a > 0, ratio, 0.0), axis=-1)
    lo = np.maximum(lo, 0.0)
    hi = np.min(np.where(a < 0, ratio, np.inf), axis=-1)
    blocked = np.any((a == 0) & (d > 0), axis=-1)
    ok = (hi > lo) & ~blocked
    mass = np.where(ok, np.asarray(law.sf(lo)) - np.asarray(law.sf(np.where(ok, hi, np.inf))), 0.0)
    return np.clip(mass, 0.0, 1.0)


def elliptical_log_mass(model, seed: Optional[int] = None,
                        settings: Optional[Dict[str, Any]] = None) -> Tuple[float, float, str]:
    """
    log P(W >= c) for the untruncated elliptical law of the model.

    In whitened coordinates w = mu + L r u, the probability is the average
    over directions u of the radial mass admitted by the box. p = 1 is exact,
    p = 2 integrates over the angle with adaptive quadrature and p >= 3 uses
    randomized QMC over directions.

    Returns:
        (log probability, absolute error estimate, method)
    """
    cfg = _settings(settings)
    seed = cfg["seed"] if seed is None else seed

    mask = model.truncated
    if not np.any(mask):
        return 0.0, 0.0, RectMethod.CLOSED_FORM_1D

    law = radial_law(model.generator, model.p)
    rows = model.chol[mask]
    d = (model.c - model.mu)[mask]
    p = model.p

    if p == 1:
        dirs = np.array([[1.0], [-1.0]])
        mass = float(np.mean(_ray_mass(law, dirs @ rows.T, d)))
        value, err, method = mass, 1e-15, RectMethod.CLOSED_FORM_1D
    elif p == 2:
        def integrand(phi):
            u = np.array([[math.cos(phi), math.sin(phi)]])
            return float(_ray_mass(law, u @ rows.T, d)[0])

        # angles where a coordinate of L u changes sign
        breaks = []
        for l1, l2 in rows:
            phi0 = math.atan2(-l1, l2) % math.pi
            breaks.extend([phi0, phi0 + math.pi])
        breaks = sorted(x for x in breaks if 0.0 < x < 2.0 * math.pi)

        total, err = integrate.quad(integrand, 0.0, 2.0 * math.pi, points=breaks or None,
                                    epsabs=cfg["quad_epsabs"], epsrel=cfg["quad_epsrel"],
                                    limit=cfg["quad_limit"])
        value, err, method = total / (2.0 * math.pi), err / (2.0 * math.pi), RectMethod.QUADRATURE_2D_3D
    else:
        def integrand(w):
            z = special.ndtri(w)
            u = z / np.linalg.norm(z, axis=1, keepdims=True)
            return _ray_mass(law, u @ rows.T, d)

        key = instance_hash(model.mu, model.sigma, np.nan_to_num(model.c, neginf=-1e300))
        value, err, _, _ = _replicated_qmc(p, integrand, cfg, seed, key, f"elliptical mass p={p}")
        method = RectMethod.QMC

    value = min(max(value, 0.0), 1.0)
    log_value = math.log(value) if value > 0 else -math.inf
    return log_value, err, method


def norm_const(model, seed: Optional[int] = None, settings: Optional[Dict[str, Any]] = None) -> float:
    """
    log C for a truncated model, so that the density is C g(Q(w)) on {w >= c}.

    Normal kind: log C = -[(p/2) log 2pi + (1/2) log det Sigma + log P(X >= c)].
    Elliptical kinds: log C = -log of the integral of g(Q(w)) over {w >= c},
    split into (1/2) log det Sigma, the full-space integral of g(|z|^2) and
    the probability of the box under the untruncated law.

    The value is cached on the model.

    Raises:
        NormalizingConstantError: zero-probability region or a generator
            that is not integrable in the model dimension
    """
    cfg = _settings(settings)
    seed = cfg["seed"] if seed is None else seed
    return model.cached(("log_norm_const", seed, cfg["qmc_target"]),
                        lambda: _compute_norm_const(model, seed, cfg))


def _compute_norm_const(model, seed: int, cfg: Dict[str, Any]) -> float:
    p = model.p
    if model.is_normal:
        log_p = rect_prob(model.mu, model.sigma, model.c, seed=seed, settings=cfg).log_value
        log_z = 0.5 * p * math.log(2.0 * math.pi)
    else:
        try:
            log_z = radial_law(model.generator, p).log_mass()
        except GeneratorError as e:
            raise NormalizingConstantError(f"generator integral diverges: {e}") from e
        log_p, _, _ = elliptical_log_mass(model, seed=seed, settings=cfg)

    if not math.isfinite(log_z):
        raise NormalizingConstantError(f"integral of {model.generator.describe()} is not finite")
    if log_p == -math.inf:
        raise NormalizingConstantError("truncation region has zero probability")

    log_c = -(log_z + 0.5 * model.logdet + log_p)
    logger.debug(f"log C = {log_c:.17g} ({model.generator.describe()}, p={p})")
    return log_c
