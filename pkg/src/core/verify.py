"""
Simulation harness for the independence results on truncated laws.

verify_theorem1: a truncated normal has independent blocks W1, W2 exactly
when Sigma12 = 0. Replicate studies measure the rejection rate of an
independence test (likelihood ratio for scalar blocks, permutation
distance-correlation test otherwise) against the nominal level.

verify_corollary1: among elliptical laws truncated at c, only the normal
gives independence with Sigma12 = 0; non-normal generators with Sigma12 = 0
show dependence at c = mu.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import dcor
import numpy as np
from scipy import stats

from src.config.defaults import DEFAULT_SETTINGS, Decision, TestName
from src.core.errors import NonConvergenceError, ValidationError
from src.core.generators import GeneratorSpec, generator_from_dict, normal
from src.core.model import (
    TruncatedEllipticalModel, build_model, check_generator_regularity, model_to_dict,
)
from src.core.inference import lrt_independence
from src.core.sampling import sample_truncated
from src.utils.logger import get_logger
from src.utils.rng import child_seed_int, make_rng, spawn_seeds
from src.utils.validators import require, validate_probability, validate_rho, validate_sample_size

logger = get_logger(__name__)

HYPOTHESES_NOT_MET = "hypotheses not met"


@dataclass
class VerificationReport:
    """
    Outcome of a verification run.

    Attributes:
        scenario: model descriptor (mu, sigma, c, generator, p1, p2)
        n: sample size per replicate
        test_name: TestName.LRT or TestName.DISTANCE_CORRELATION
        decision: Decision value, or None when no decision is issued
        p_value: aggregate p-value (binomial test on the rejection count,
            or the single test's p-value)
        replicate_rejection_rate: fraction of completed replicates rejecting
            at alpha (replicates whose fit failed are left out)
        replicates: number of replicates run
        failed_replicates: replicates whose test could not be computed
        alpha: nominal level
        replicate_p_values: per-replicate p-values (nan for failed fits)
        size_band: binomial band for the rejection rate under independence
        flags: warnings such as "hypotheses not met"
        diagnostics: extra measurements (covariance, SE, distance correlation)
    """
    scenario: Dict[str, Any]
    n: int
    test_name: str
    decision: Optional[str]
    p_value: float
    replicate_rejection_rate: float
    replicates: int = 1
    failed_replicates: int = 0
    alpha: float = 0.05
    replicate_p_values: List[float] = field(default_factory=list)
    size_band: Optional[Tuple[float, float]] = None
    flags: List[str] = field(default_factory=list)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    @property
    def completed_replicates(self) -> int:
        return self.replicates - self.failed_replicates

    @property
    def rejections(self) -> int:
        return sum(p < self.alpha for p in self.replicate_p_values if not math.isnan(p))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario,
            "n": self.n,
            "test_name": self.test_name,
            "decision": self.decision,
            "p_value": self.p_value,
            "replicate_rejection_rate": self.replicate_rejection_rate,
            "replicates": self.replicates,
            "failed_replicates": self.failed_replicates,
            "alpha": self.alpha,
            "replicate_p_values": [None if math.isnan(p) else p for p in self.replicate_p_values],
            "replicate_decisions": [
                None if math.isnan(p) else (Decision.REJECT if p < self.alpha else Decision.FAIL_TO_REJECT)
                for p in self.replicate_p_values
            ],
            "size_band": None if self.size_band is None else list(self.size_band),
            "flags": list(self.flags),
            "diagnostics": self.diagnostics,
        }


def _verify_settings(overrides: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    cfg = dict(DEFAULT_SETTINGS["verify"])
    cfg.update(overrides or {})
    return cfg


def _as_2d(a) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    return a[:, None] if a.ndim == 1 else a


def distance_correlation_test(x, y, permutations: int = 499, seed: int = 0,
                              max_points: Optional[int] = None) -> Tuple[float, float]:
    """
    Permutation test of independence based on distance correlation.

    Only the first max_points rows are used. Each permutation reorders the
    rows of y and recomputes the statistic with dcor, which picks its fast
    O(n log n) algorithm for scalar pairs.

    Returns:
        (distance correlation, permutation p-value)
    """
    x, y = _as_2d(x), _as_2d(y)
    if x.shape[0] != y.shape[0]:
        raise ValidationError("x and y must have the same number of rows")
    if max_points is not None and x.shape[0] > max_points:
        x, y = x[:max_points], y[:max_points]

    # 1-D arrays let dcor use the fast scalar algorithm
    xs = x[:, 0] if x.shape[1] == 1 else x
    ys = y[:, 0] if y.shape[1] == 1 else y

    rng = make_rng(seed)
    observed = float(dcor.distance_correlation(xs, ys))
    exceed = 0
    for _ in range(permutations):
        perm = rng.permutation(xs.shape[0])
        if dcor.distance_correlation(xs, ys[perm]) >= observed:
            exceed += 1

    return observed, (exceed + 1) / (permutations + 1)


def size_band(replicates: int, alpha: float, level: float = 0.99) -> Tuple[float, float]:
    """Central binomial interval for the rejection rate under the null."""
    tail = 0.5 * (1.0 - level)
    lo = stats.binom.ppf(tail, replicates, alpha) / replicates
    hi = stats.binom.ppf(1.0 - tail, replicates, alpha) / replicates
    return float(lo), float(hi)


def _scenario(model: TruncatedEllipticalModel, p1: int) -> Dict[str, Any]:
    doc = model_to_dict(model)
    doc["p1"] = p1
    doc["p2"] = model.p - p1
    return doc


def _theorem1_replicate(args) -> float:
    """p-value of one replicate (top level so process pools can pickle it)."""
    (mu, sigma, c), p1, n, seed, cfg = args
    model = build_model(mu, sigma, c, normal())
    batch = sample_truncated(model, n, seed)
    pts = batch.points
    if model.p == 2 and p1 == 1:
        try:
            return lrt_independence(pts, model.c).p_value
        except NonConvergenceError:
            return math.nan
    _, p_value = distance_correlation_test(pts[:, :p1], pts[:, p1:], cfg["permutations"],
                                           seed, cfg["dcor_max_points"])
    return p_value


def _run_replicates(model: TruncatedEllipticalModel, p1: int, n: int, replicates: int,
                    seed: int, cfg: Dict[str, Any]) -> List[float]:
    seeds = [child_seed_int(s) for s in spawn_seeds(seed, replicates)]
    # models hold a lock, so workers rebuild them from plain arrays
    params = (np.array(model.mu), np.array(model.sigma), np.array(model.c))
    jobs = [(params, p1, n, s, cfg) for s in seeds]
    workers = int(cfg["workers"])
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_theorem1_replicate, jobs))
    return [_theorem1_replicate(job) for job in jobs]


def verify_theorem1(sigma, mu, c, p1: int, n: int, replicates: Optional[int] = None,
                    alpha: Optional[float] = None, seed: int = 0,
                    settings: Optional[Dict[str, Any]] = None) -> VerificationReport:
    """
    Replicate study of an independence test on a truncated normal.

    Args:
        sigma, mu, c: truncated normal parameters (c may contain -inf)
        p1: size of the leading block
        n: rows per replicate (>= 200)
        replicates: number of replicates
        alpha: level of each replicate test
        seed: base seed; replicate i uses the i-th spawned child
        settings: 'verify' section overrides

    Returns:
        VerificationReport with the rejection rate, the binomial size band and
        the binomial p-value of the rejection count against alpha
    """
    cfg = _verify_settings(settings)
    replicates = int(cfg["replicates"] if replicates is None else replicates)
    alpha = float(cfg["alpha"] if alpha is None else alpha)
    require(validate_sample_size(n, 200))
    require(validate_sample_size(replicates))
    require(validate_probability(alpha))

    model = build_model(mu, sigma, c, normal())
    if not (1 <= p1 < model.p):
        raise ValidationError(f"p1 must satisfy 1 <= p1 < {model.p}")
    test = TestName.LRT if (model.p == 2 and p1 == 1) else TestName.DISTANCE_CORRELATION

    logger.info(f"Theorem check: {replicates} replicates of n={n} ({test}, alpha={alpha})")
    p_values = _run_replicates(model, p1, n, replicates, seed, cfg)

    failed = sum(math.isnan(p) for p in p_values)
    completed = replicates - failed
    if completed == 0:
        raise NonConvergenceError(f"all {replicates} replicate fits failed")
    rejections = sum(p < alpha for p in p_values if not math.isnan(p))
    rate = rejections / completed
    agg = float(stats.binomtest(rejections, completed, alpha, alternative="greater").pvalue)

    flags = []
    if failed:
        flags.append(f"{failed} replicate fits did not converge and are excluded from the rate")
        logger.warning(flags[-1])

    report = VerificationReport(
        scenario=_scenario(model, p1), n=n, test_name=test,
        decision=Decision.REJECT if agg < alpha else Decision.FAIL_TO_REJECT,
        p_value=agg, replicate_rejection_rate=rate, replicates=replicates,
        failed_replicates=failed, alpha=alpha, replicate_p_values=[float(p) for p in p_values],
        size_band=size_band(completed, alpha, cfg["band_level"]), flags=flags,
        diagnostics={"sigma12_zero": not np.any(model.sigma[:p1, p1:])},
    )
    logger.info(f"Rejection rate {rate:.3f} (band {report.size_band}), aggregate p={agg:.3g}")
    return report


def verify_corollary1(gen: GeneratorSpec, rho: float, c=None, n: int = 100_000, seed: int = 0,
                      alpha: Optional[float] = None,
                      settings: Optional[Dict[str, Any]] = None) -> VerificationReport:
    """
    Dependence check for a bivariate elliptical law truncated at c.

    Always reports the sample covariance with its standard error and the
    distance correlation with its permutation p-value. When the generator
    fails the regularity conditions the report is flagged and no decision
    is issued.

    Args:
        gen: generator
        rho: correlation parameter of the unit-variance scatter matrix
        c: truncation point (defaults to the mean, i.e. (0, 0))
        n: sample size
        seed: seed for sampling and permutations
    """
    cfg = _verify_settings(settings)
    alpha = float(cfg["alpha"] if alpha is None else alpha)
    require(validate_rho(rho))
    require(validate_sample_size(n, 10))

    mu = np.zeros(2)
    c = mu if c is None else np.asarray(c, dtype=np.float64)
    model = build_model(mu, [[1.0, rho], [rho, 1.0]], c, gen)
    regularity = check_generator_regularity(gen)

    batch = sample_truncated(model, n, seed)
    w1, w2 = batch.points[:, 0], batch.points[:, 1]
    prod = (w1 - w1.mean()) * (w2 - w2.mean())
    cov = float(prod.mean())
    cov_se = float(prod.std(ddof=1) / math.sqrt(n))

    dc, p_value = distance_correlation_test(w1, w2, cfg["permutations"], seed,
                                            cfg["dcor_max_points_univariate"])

    flags = []
    decision = Decision.REJECT if p_value < alpha else Decision.FAIL_TO_REJECT
    if not regularity.passes:
        flags.append(HYPOTHESES_NOT_MET)
        decision = None
        logger.warning(f"{gen.describe()} fails the regularity conditions; no decision issued")

    diagnostics = {
        "covariance": cov,
        "covariance_se": cov_se,
        "covariance_z": cov / cov_se if cov_se > 0 else math.nan,
        "distance_correlation": dc,
        "regularity": regularity.to_dict(),
        "acceptance_rate": batch.acceptance_rate,
        "is_normal": gen.is_normal,
    }
    return VerificationReport(
        scenario=_scenario(model, 1), n=n, test_name=TestName.DISTANCE_CORRELATION,
        decision=decision, p_value=p_value,
        replicate_rejection_rate=1.0 if p_value < alpha else 0.0,
        replicates=1, alpha=alpha, replicate_p_values=[p_value], flags=flags,
        diagnostics=diagnostics,
    )


def power_curve(rhos: Sequence[float] = (0.0, 0.2, 0.5, 0.8), n: int = 500, c=(0.0, 0.0),
                replicates: Optional[int] = None, alpha: Optional[float] = None, seed: int = 0,
                settings: Optional[Dict[str, Any]] = None) -> List[Dict[str, float]]:
    """Rejection rate of the bivariate likelihood ratio test across rho."""
    curve = []
    for k, rho in enumerate(rhos):
        report = verify_theorem1([[1.0, rho], [rho, 1.0]], [0.0, 0.0], c, 1, n,
                                 replicates=replicates, alpha=alpha, seed=seed + k,
                                 settings=settings)
        curve.append({"rho": float(rho), "rejection_rate": report.replicate_rejection_rate})
    return curve


def run_scenario(doc: Dict[str, Any], seed: int,
                 settings: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Run a scenario document.

    Supported documents:
    - {"type": "theorem1", "mu", "sigma", "c", "p1", "n", ["replicates", "alpha"]}
    - {"type": "corollary1", "generator": {kind, params}, "rho", ["c", "n", "alpha"]}
    - {"type": "power_curve", ["rhos", "n", "c", "replicates", "alpha"]}
    "-inf" strings are accepted in c.
    """
    kind = doc.get("type")

    def bounds(values):
        return [-math.inf if isinstance(v, str) and v.strip().lower() == "-inf" else float(v)
                for v in values]

    try:
        if kind == "theorem1":
            return verify_theorem1(doc["sigma"], doc["mu"], bounds(doc["c"]), int(doc["p1"]),
                                   int(doc["n"]), doc.get("replicates"), doc.get("alpha"),
                                   seed, settings).to_dict()
        if kind == "corollary1":
            c = bounds(doc["c"]) if "c" in doc else None
            return verify_corollary1(generator_from_dict(doc["generator"]), float(doc["rho"]), c,
                                     int(doc.get("n", 100_000)), seed, doc.get("alpha"),
                                     settings).to_dict()
        if kind == "power_curve":
            rhos = doc.get("rhos", [0.0, 0.2, 0.5, 0.8])
            curve = power_curve(rhos, int(doc.get("n", 500)), bounds(doc.get("c", [0.0, 0.0])),
                                doc.get("replicates"), doc.get("alpha"), seed, settings)
            return {"scenario": {"type": "power_curve", "rhos": rhos}, "power_curve": curve}
    except (KeyError, TypeError, ValueError) as e:
        raise ValidationError(f"malformed scenario document: {e}") from e

    raise ValidationError(f"unknown scenario type '{kind}' (expected theorem1, corollary1, power_curve)")
