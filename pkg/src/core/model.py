"""
Domain types for truncated elliptical models.

A model is a mean mu, a positive definite scatter matrix Sigma, a lower
truncation point c (entries may be -inf for untruncated coordinates) and a
generator g. The support is the box {w >= c}.
"""

import json
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional

import jsonschema
import numpy as np
from scipy import linalg

from src.config.defaults import DEFAULT_SETTINGS, NEG_INF_TOKEN, GeneratorKind, R3Verdict
from src.core.errors import GeneratorError, ModelConstructionError
from src.core.generators import GeneratorSpec, generator_from_dict, tabulated_slopes
from src.utils.logger import get_logger
from src.utils.persistence import load_schema
from src.utils.validators import require, validate_dimensions, validate_symmetric

logger = get_logger(__name__)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class TruncatedEllipticalModel:
    """
    Truncated elliptical law on {w >= c}.

    Built through build_model; the Cholesky factor of sigma and its log
    determinant are computed once here and shared by every operation.
    """
    mu: np.ndarray
    sigma: np.ndarray
    c: np.ndarray
    generator: GeneratorSpec
    chol: np.ndarray = field(init=False, repr=False)
    logdet: float = field(init=False, repr=False)
    _cache: Dict[Any, Any] = field(init=False, repr=False, default_factory=dict)
    _lock: Any = field(init=False, repr=False, default_factory=threading.Lock)

    def __post_init__(self):
        chol = np.linalg.cholesky(self.sigma)
        object.__setattr__(self, "chol", _frozen(chol))
        object.__setattr__(self, "logdet", float(2.0 * np.sum(np.log(np.diag(chol)))))

    @property
    def p(self) -> int:
        return int(self.mu.size)

    @property
    def is_normal(self) -> bool:
        return self.generator.is_normal

    @property
    def truncated(self) -> np.ndarray:
        """Boolean mask of coordinates with a finite lower bound."""
        return np.isfinite(self.c)

    def cached(self, key, compute: Callable[[], Any]) -> Any:
        """
        Return the cached value for key, computing it once.

        Concurrent callers block until the first computation finishes.
        """
        try:
            return self._cache[key]
        except KeyError:
            pass
        with self._lock:
            if key not in self._cache:
                self._cache[key] = compute()
            return self._cache[key]

    def in_support(self, w) -> np.ndarray:
        """True for rows of w lying in {w >= c}."""
        w = np.atleast_2d(np.asarray(w, dtype=np.float64))
        return np.all(w >= self.c, axis=-1)


@dataclass(frozen=True, eq=False)
class PartitionSpec:
    """
    Split of W = (W1, W2) with p1 + p2 = p.

    Attributes:
        p1, p2: block sizes
        mu1, mu2, c1, c2: split mean and truncation point
        s11, s12, s21, s22: covariance blocks
        schur: s22 - s21 s11^-1 s12
        s11_chol: Cholesky factor of s11
        schur_chol: Cholesky factor of schur
    """
    p1: int
    p2: int
    mu1: np.ndarray
    mu2: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    s11: np.ndarray
    s12: np.ndarray
    s21: np.ndarray
    s22: np.ndarray
    schur: np.ndarray
    s11_chol: np.ndarray
    schur_chol: np.ndarray

    @property
    def regression(self) -> np.ndarray:
        """s21 s11^-1, the coefficient of w1 - mu1 in the conditional mean."""
        return linalg.cho_solve((self.s11_chol, True), self.s12).T

    @property
    def blocks_independent(self) -> bool:
        return not np.any(self.s12)


@dataclass
class RegularityReport:
    """Outcome of check_generator_regularity."""
    r1: bool
    r2: bool
    r3: str
    derivative_error: float
    r2_fraction: float
    r3_slope: Optional[float]
    r3_projected: Optional[float]

    @property
    def passes(self) -> bool:
        """True when all three conditions hold."""
        return self.r1 and self.r2 and self.r3 in (R3Verdict.TENDS_TO_ZERO, R3Verdict.DIVERGES)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "r1": self.r1,
            "r2": self.r2,
            "r3": self.r3,
            "passes": self.passes,
            "derivative_error": self.derivative_error,
            "r2_fraction": self.r2_fraction,
            "r3_slope": self.r3_slope,
            "r3_projected": self.r3_projected,
        }


def build_model(mu, sigma, c, generator: GeneratorSpec) -> TruncatedEllipticalModel:
    """
    Validate inputs and construct a model.

    Args:
        mu: mean vector (length p)
        sigma: symmetric positive definite p x p matrix
        c: truncation point (length p); -inf leaves a coordinate untruncated
        generator: density generator

    Returns:
        TruncatedEllipticalModel

    Raises:
        ModelConstructionError: dimension mismatch, asymmetric or non-PD sigma
    """
    mu_arr = np.atleast_1d(np.asarray(mu, dtype=np.float64))
    sigma_arr = np.atleast_2d(np.asarray(sigma, dtype=np.float64))
    c_arr = np.atleast_1d(np.asarray(c, dtype=np.float64))

    require(validate_dimensions(mu_arr, sigma_arr, c_arr), ModelConstructionError)
    require(validate_symmetric(sigma_arr), ModelConstructionError)

    sigma_arr = 0.5 * (sigma_arr + sigma_arr.T)
    eigenvalues = np.linalg.eigvalsh(sigma_arr)
    if eigenvalues[0] <= 0:
        raise ModelConstructionError(
            f"sigma is not positive definite (eigenvalue {eigenvalues[0]:.6g})"
        )

    if not isinstance(generator, GeneratorSpec):
        raise ModelConstructionError("generator must be a GeneratorSpec")

    try:
        return TruncatedEllipticalModel(
            mu=_frozen(mu_arr),
            sigma=_frozen(sigma_arr),
            c=_frozen(c_arr),
            generator=generator.with_dim(mu_arr.size),
        )
    except np.linalg.LinAlgError as e:
        raise ModelConstructionError(f"sigma is numerically singular: {e}") from e


def partition(model: TruncatedEllipticalModel, p1: int) -> PartitionSpec:
    """
    Split the model into leading block W1 (p1 coordinates) and W2 (the rest).

    The Schur complement is formed with a Cholesky solve against s11.

    Raises:
        ModelConstructionError: p1 outside [1, p-1] or a non-PD Schur complement
    """
    p = model.p
    if not (1 <= p1 < p):
        raise ModelConstructionError(f"p1 must satisfy 1 <= p1 < {p} (got {p1})")

    s = model.sigma
    s11, s12 = s[:p1, :p1], s[:p1, p1:]
    s21, s22 = s[p1:, :p1], s[p1:, p1:]

    s11_chol = np.linalg.cholesky(s11)
    schur = s22 - s21 @ linalg.cho_solve((s11_chol, True), s12)
    schur = 0.5 * (schur + schur.T)
    try:
        schur_chol = np.linalg.cholesky(schur)
    except np.linalg.LinAlgError as e:
        raise ModelConstructionError("Schur complement is not positive definite") from e

    return PartitionSpec(
        p1=p1, p2=p - p1,
        mu1=model.mu[:p1], mu2=model.mu[p1:],
        c1=model.c[:p1], c2=model.c[p1:],
        s11=s11, s12=s12, s21=s21, s22=s22,
        schur=_frozen(schur),
        s11_chol=_frozen(s11_chol),
        schur_chol=_frozen(schur_chol),
    )


def reassemble(part: PartitionSpec) -> np.ndarray:
    """Rebuild the full covariance matrix from its blocks."""
    return np.block([[part.s11, part.s12], [part.s21, part.s22]])


def check_generator_regularity(gen: GeneratorSpec,
                               grid_max: Optional[float] = None,
                               n_grid: Optional[int] = None,
                               settings: Optional[Dict[str, Any]] = None) -> RegularityReport:
    """
    Heuristic check of the generator regularity conditions R1-R3.

    R1: log g finite on [0, grid_max] and g' continuous (dlog_g agrees with a
        central difference; equal adjacent slopes for tabulated generators).
    R2: more than r2_fraction of the positive grid points have
        |dlog_g| > r2_epsilon, a proxy for the support of g' being dense.
    R3: v(t) = t * dlog_g(t^2) on a geometric grid t in [1, 1e4]. The slope
        k of log|v| against log t over the last decade projects |v| out to
        t = 1e12 (|k| < 0.1 counts as flat). Below zero_threshold means
        tends_to_zero, above diverge_threshold means diverges, otherwise
        neither. Non-finite values or a sign change in the fitted decade are
        inconclusive.

    Args:
        gen: generator to check
        grid_max: upper end of the R1/R2 grid
        n_grid: number of R1/R2 grid points (>= 100)
        settings: 'regularity' section overrides

    Raises:
        GeneratorError: bad grid arguments or a non-monotone tabulated grid
    """
    cfg = dict(DEFAULT_SETTINGS["regularity"])
    cfg.update(settings or {})
    grid_max = cfg["grid_max"] if grid_max is None else grid_max
    n_grid = cfg["n_grid"] if n_grid is None else n_grid

    if not (grid_max > 0 and math.isfinite(grid_max)):
        raise GeneratorError(f"grid_max must be positive (got {grid_max})")
    if n_grid < 100:
        raise GeneratorError(f"n_grid must be >= 100 (got {n_grid})")

    if gen.kind == GeneratorKind.TABULATED and np.any(np.diff(gen.t_grid) <= 0):
        raise GeneratorError("tabulated t grid is not monotone")

    ts = np.linspace(0.0, grid_max, int(n_grid))
    positive = ts[1:]

    # R1
    log_g = np.asarray(gen.log_g(ts))
    positive_everywhere = bool(np.all(np.isfinite(log_g)))
    if gen.kind == GeneratorKind.TABULATED:
        slopes = tabulated_slopes(gen)
        scale = np.maximum(np.abs(slopes[:-1]), 1e-3)
        jumps = np.abs(np.diff(slopes)) / scale
        deriv_err = float(np.max(jumps)) if jumps.size else 0.0
    else:
        deriv_err = gen.derivative_error(positive)
    r1 = positive_everywhere and deriv_err <= cfg["derivative_tolerance"]

    # R2
    with np.errstate(invalid="ignore"):
        d = np.asarray(gen.dlog_g(positive))
    fraction = float(np.mean(np.abs(np.nan_to_num(d, nan=0.0)) > cfg["r2_epsilon"]))
    r2 = fraction > cfg["r2_fraction"]

    r3, slope, projected = _classify_tail(gen, cfg)

    report = RegularityReport(r1=r1, r2=r2, r3=r3, derivative_error=deriv_err,
                              r2_fraction=fraction, r3_slope=slope, r3_projected=projected)
    logger.debug(f"Regularity of {gen.describe()}: {report.to_dict()}")
    return report


def _classify_tail(gen: GeneratorSpec, cfg: Dict[str, Any]):
    """R3 verdict plus the fitted slope and projected magnitude."""
    t = np.geomspace(cfg["r3_t_min"], cfg["r3_t_max"], int(cfg["r3_points"]))
    with np.errstate(invalid="ignore", divide="ignore"):
        v = t * np.asarray(gen.dlog_g(np.square(t)))

    if not np.all(np.isfinite(v)):
        return R3Verdict.INCONCLUSIVE, None, None

    window = t >= cfg["r3_t_max"] / 10.0
    v_win, t_win = v[window], t[window]
    if np.all(v_win == 0):
        return R3Verdict.TENDS_TO_ZERO, 0.0, 0.0
    if np.any(v_win == 0) or (np.any(v_win > 0) and np.any(v_win < 0)):
        return R3Verdict.INCONCLUSIVE, None, None

    log_abs = np.log(np.abs(v_win))
    slope = float(np.polyfit(np.log(t_win), log_abs, 1)[0])
    end = float(np.abs(v_win[-1]))
    if abs(slope) >= cfg["r3_stable_slope"]:
        projected = end * (cfg["r3_projection_t"] / t_win[-1]) ** slope
    else:
        projected = end

    if projected < cfg["zero_threshold"]:
        verdict = R3Verdict.TENDS_TO_ZERO
    elif projected > cfg["diverge_threshold"]:
        verdict = R3Verdict.DIVERGES
    else:
        verdict = R3Verdict.NEITHER
    return verdict, slope, float(projected)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _encode_bound(x: float):
    return NEG_INF_TOKEN if x == -math.inf else float(x)


def _decode_bound(x) -> float:
    if isinstance(x, str):
        if x.strip().lower() in (NEG_INF_TOKEN, "-infinity"):
            return -math.inf
        raise ModelConstructionError(f"invalid truncation bound '{x}'")
    return float(x)


def model_to_dict(model: TruncatedEllipticalModel) -> Dict[str, Any]:
    """JSON document {mu, sigma, c, generator}; -inf is written as "-inf"."""
    return {
        "mu": model.mu.tolist(),
        "sigma": model.sigma.tolist(),
        "c": [_encode_bound(x) for x in model.c],
        "generator": model.generator.to_dict(),
    }


def model_from_dict(doc: Dict[str, Any]) -> TruncatedEllipticalModel:
    """
    Build a model from its JSON document.

    Raises:
        ModelConstructionError: document fails the model schema
    """
    try:
        jsonschema.validate(doc, load_schema("model"))
    except jsonschema.ValidationError as e:
        raise ModelConstructionError(f"invalid model document: {e.message}") from e

    c = [_decode_bound(x) for x in doc["c"]]
    gen = generator_from_dict(doc["generator"])
    return build_model(doc["mu"], doc["sigma"], c, gen)


def save_model(model: TruncatedEllipticalModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=2)


def load_model(path: str) -> TruncatedEllipticalModel:
    """
    Load a model JSON file.

    Raises:
        ModelConstructionError: unreadable file or invalid document
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ModelConstructionError(f"cannot read model file '{path}': {e}") from e
    return model_from_dict(doc)
