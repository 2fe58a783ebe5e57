"""
Samplers for elliptical and truncated elliptical laws.

Untruncated draws use the stochastic representation mu + R L U with U uniform
on the sphere and R the radial variable. Truncated draws reject in chunks;
truncated normals with a small acceptance probability switch to a Gibbs
sampler with univariate truncated-normal conditionals.

Every chunk draws from its own Philox stream keyed by (seed, stream, chunk),
so results depend only on the seed.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from scipy import special

from src.config.defaults import DEFAULT_SETTINGS, SamplerMethod
from src.core.errors import SamplingError, UnsupportedOperationError
from src.core.generators import GeneratorSpec, RadialLaw, radial_law
from src.core.model import TruncatedEllipticalModel
from src.core.mvnprob import rect_prob
from src.utils.logger import get_logger
from src.utils.rng import make_rng
from src.utils.validators import require, validate_sample_size, validate_seed

logger = get_logger(__name__)

# stream ids mixed into the seed so samplers never share random numbers
_STREAM_UNTRUNCATED = 1
_STREAM_REJECTION = 2
_STREAM_GIBBS = 3

_GIBBS_BLOCK = 4096
# Phi(-40) underflows, so a standardized bound below -40 is no bound
_GIBBS_LOWER_FLOOR = 40.0


@dataclass
class SampleBatch:
    """
    Draws from a truncated model.

    Attributes:
        points: n x p array, every row >= c
        acceptance_rate: accepted / proposed (1 for Gibbs)
        seed: seed the batch was drawn with
        method: SamplerMethod.REJECTION or SamplerMethod.GIBBS
        n_proposed: proposals drawn (rejection) or sweeps run (Gibbs)
    """
    points: np.ndarray
    acceptance_rate: float
    seed: int
    method: str
    n_proposed: int = 0

    @property
    def n(self) -> int:
        return int(self.points.shape[0])


def _sampling_settings(overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    cfg = dict(DEFAULT_SETTINGS["sampling"])
    cfg.update(overrides or {})
    return cfg


def _draw(law: Optional[RadialLaw], mu: np.ndarray, chol: np.ndarray, m: int,
          rng: np.random.Generator) -> np.ndarray:
    """m untruncated draws; law None means the normal generator."""
    z = rng.standard_normal((m, mu.size))
    if law is not None:
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        z = z / norms * law.rvs(m, rng)[:, None]
    return mu + z @ chol.T


def _chunks(n: int, size: int):
    start = 0
    while start < n:
        yield start, min(size, n - start)
        start += size


def sample_untruncated_elliptical(gen: GeneratorSpec, mu, sigma, n: int, seed: int,
                                  settings: Optional[Dict[str, Any]] = None) -> np.ndarray:
    """
    n draws of mu + R Sigma^{1/2} U.

    Args:
        gen: generator (any kind; the radial law is built for dim = len(mu))
        mu: mean vector
        sigma: positive definite scatter matrix
        n: number of draws
        seed: non-negative integer seed

    Returns:
        n x p array

    Raises:
        RadialTabulationError: tabulated radial CDF misses mass
    """
    require(validate_sample_size(n))
    require(validate_seed(seed))
    cfg = _sampling_settings(settings)

    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    chol = np.linalg.cholesky(np.atleast_2d(np.asarray(sigma, dtype=np.float64)))
    law = None if gen.is_normal else radial_law(gen, mu.size)

    out = np.empty((n, mu.size))
    for j, (start, m) in enumerate(_chunks(n, int(cfg["chunk_size"]))):
        rng = make_rng(seed, _STREAM_UNTRUNCATED, j)
        out[start:start + m] = _draw(law, mu, chol, m, rng)
    return out


def sample_quadratic_forms(gen: GeneratorSpec, mu, sigma, n: int, seed: int) -> np.ndarray:
    """Q(X) = (X - mu)' Sigma^-1 (X - mu) for n untruncated draws."""
    x = sample_untruncated_elliptical(gen, mu, sigma, n, seed)
    mu = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    diff = x - mu
    return np.einsum("ij,ij->i", diff, np.linalg.solve(sigma, diff.T).T)


def sample_truncated(model: TruncatedEllipticalModel, n: int, seed: int,
                     max_tries: Optional[int] = None,
                     settings: Optional[Dict[str, Any]] = None,
                     method: Optional[str] = None) -> SampleBatch:
    """
    n draws from the truncated model.

    Rejection from the untruncated law by default. For normal models whose
    acceptance probability is below gibbs_switch_acceptance the Gibbs sampler
    is used instead, unless method forces a path.

    Args:
        model: truncated model
        n: number of draws
        seed: non-negative integer seed
        max_tries: proposal budget for rejection sampling
        settings: 'sampling' section overrides
        method: force SamplerMethod.REJECTION or SamplerMethod.GIBBS

    Raises:
        SamplingError: budget exhausted; .partial holds the accepted rows
    """
    require(validate_sample_size(n))
    require(validate_seed(seed))
    cfg = _sampling_settings(settings)
    max_tries = int(cfg["max_tries"] if max_tries is None else max_tries)

    if method == SamplerMethod.GIBBS:
        return gibbs_truncated_normal(model, n, cfg["burn_in"], cfg["thin"], seed)

    if method is None and model.is_normal and np.any(model.truncated):
        accept = rect_prob(model.mu, model.sigma, model.c).value
        if accept < cfg["gibbs_switch_acceptance"]:
            logger.info(f"Acceptance probability {accept:.3g} below "
                        f"{cfg['gibbs_switch_acceptance']:g}, switching to Gibbs sampler")
            return gibbs_truncated_normal(model, n, cfg["burn_in"], cfg["thin"], seed)

    law = None if model.is_normal else radial_law(model.generator, model.p)

    if not np.any(model.truncated):
        pts = sample_untruncated_elliptical(model.generator, model.mu, model.sigma, n, seed, cfg)
        return SampleBatch(points=pts, acceptance_rate=1.0, seed=seed,
                           method=SamplerMethod.REJECTION, n_proposed=n)

    chunk = int(cfg["chunk_size"])
    kept = []
    n_kept = 0
    tries = 0
    j = 0
    while n_kept < n:
        if tries >= max_tries:
            partial = np.concatenate(kept)[:n] if kept else np.empty((0, model.p))
            batch = SampleBatch(points=partial, acceptance_rate=n_kept / max(tries, 1),
                                seed=seed, method=SamplerMethod.REJECTION, n_proposed=tries)
            raise SamplingError(
                f"rejection sampler exhausted {tries} proposals with {n_kept} of {n} accepted",
                partial=batch,
            )
        m = min(chunk, max_tries - tries)
        rng = make_rng(seed, _STREAM_REJECTION, j)
        x = _draw(law, model.mu, model.chol, m, rng)
        ok = x[model.in_support(x)]
        kept.append(ok)
        n_kept += ok.shape[0]
        tries += m
        j += 1

    pts = np.concatenate(kept)[:n]
    rate = n_kept / tries
    logger.debug(f"Rejection sampler: {n} draws, acceptance {rate:.4g} over {tries} proposals")
    return SampleBatch(points=pts, acceptance_rate=rate, seed=seed,
                       method=SamplerMethod.REJECTION, n_proposed=tries)


def gibbs_truncated_normal(model: TruncatedEllipticalModel, n: int, burn_in: int, thin: int,
                           seed: int, start=None) -> SampleBatch:
    """
    Coordinate-wise Gibbs sampler for a truncated normal.

    Each coordinate is redrawn from its normal conditional given the others,
    mean mu_i - sum_j P_ij (x_j - mu_j) / P_ii and variance 1 / P_ii with
    P = Sigma^-1, truncated below at c_i. Draws invert the truncated CDF in
    log space, z = -ndtri_exp(log U + log Phi(-lo)), so bounds far in the
    upper tail stay exact. Uniforms are drawn in blocks of sweeps.

    Args:
        model: truncated normal model
        n: number of retained draws
        burn_in: sweeps discarded before the first retained draw
        thin: sweeps between retained draws
        seed: non-negative integer seed
        start: initial point (defaults to max(mu, c))

    Raises:
        UnsupportedOperationError: non-normal generator
    """
    if not model.is_normal:
        raise UnsupportedOperationError(
            f"Gibbs sampler requires the normal generator (got {model.generator.kind})"
        )
    require(validate_sample_size(n))
    require(validate_seed(seed))
    if burn_in < 0 or thin < 1:
        raise SamplingError("burn_in must be >= 0 and thin >= 1")

    p = model.p
    prec = np.linalg.inv(model.sigma)
    cond_sd = 1.0 / np.sqrt(np.diag(prec))
    weights = -prec / np.diag(prec)[:, None]
    np.fill_diagonal(weights, 0.0)

    x = np.maximum(model.mu, model.c) if start is None else np.array(start, dtype=np.float64)
    rng = make_rng(seed, _STREAM_GIBBS)
    mu, c = model.mu, model.c

    out = np.empty((n, p))
    sweeps = burn_in + n * thin
    kept = 0
    log_u = None
    for sweep in range(sweeps):
        k = sweep % _GIBBS_BLOCK
        if k == 0:
            # log U with U in (0, 1]
            log_u = np.log1p(-rng.random((min(_GIBBS_BLOCK, sweeps - sweep), p)))
        for i in range(p):
            m = mu[i] + weights[i] @ (x - mu)
            lo = max((c[i] - m) / cond_sd[i], -_GIBBS_LOWER_FLOOR)
            z = -special.ndtri_exp(log_u[k, i] + special.log_ndtr(-lo))
            # m + sd * z can round one ulp below the bound
            x[i] = max(m + cond_sd[i] * z, c[i])
        if sweep >= burn_in and (sweep - burn_in) % thin == thin - 1:
            out[kept] = x
            kept += 1

    logger.debug(f"Gibbs sampler: {n} draws after {burn_in} burn-in sweeps (thin {thin})")
    return SampleBatch(points=out, acceptance_rate=1.0, seed=seed,
                       method=SamplerMethod.GIBBS, n_proposed=sweeps)
