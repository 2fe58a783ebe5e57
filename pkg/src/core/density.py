"""Densities of truncated elliptical models and the W1 / W2|W1 factorization."""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

from src.core.errors import UnsupportedOperationError, ValidationError
from src.core.model import PartitionSpec, TruncatedEllipticalModel, build_model
from src.core.mvnprob import norm_const, rect_prob
from src.utils.logger import get_logger

logger = get_logger(__name__)

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class QuadDecomposition:
    """
    Split of Q(w) into the W1 term and the Schur-complement term.

    Attributes:
        q_full: (w - mu)' Sigma^-1 (w - mu)
        q1: (w1 - mu1)' Sigma11^-1 (w1 - mu1)
        q2: (w2 - m)' Sigma22.1^-1 (w2 - m) with m = cond_mean_shift
        cond_mean_shift: mu2 + Sigma21 Sigma11^-1 (w1 - mu1)
    """
    q_full: float
    q1: float
    q2: float
    cond_mean_shift: np.ndarray


def _rows(model: TruncatedEllipticalModel, w) -> Tuple[np.ndarray, bool]:
    w = np.asarray(w, dtype=np.float64)
    single = w.ndim == 1
    w2d = np.atleast_2d(w)
    if w2d.shape[-1] != model.p:
        raise ValidationError(f"point has dimension {w2d.shape[-1]}, model has {model.p}")
    return w2d, single


def _whitened_sq(chol: np.ndarray, diff: np.ndarray) -> np.ndarray:
    """Row-wise |L^-1 diff|^2."""
    z = linalg.solve_triangular(chol, diff.T, lower=True)
    return np.sum(z * z, axis=0)


def quad_form(model: TruncatedEllipticalModel, w):
    """
    Mahalanobis form (w - mu)' Sigma^-1 (w - mu).

    Args:
        model: the model (its cached Cholesky factor is used)
        w: point of length p, or an n x p array

    Returns:
        float for a single point, array for several
    """
    w2d, single = _rows(model, w)
    q = _whitened_sq(model.chol, w2d - model.mu)
    return float(q[0]) if single else q


def decompose_quad(model: TruncatedEllipticalModel, part: PartitionSpec, w1, w2) -> QuadDecomposition:
    """Quadratic form split Q = q1 + q2 for a single point (w1, w2)."""
    w1 = np.atleast_1d(np.asarray(w1, dtype=np.float64))
    w2 = np.atleast_1d(np.asarray(w2, dtype=np.float64))
    if w1.size != part.p1 or w2.size != part.p2:
        raise ValidationError(f"expected blocks of size ({part.p1}, {part.p2}), got ({w1.size}, {w2.size})")

    d1 = w1 - part.mu1
    q1 = float(_whitened_sq(part.s11_chol, d1[None, :])[0])
    cond = part.mu2 + part.regression @ d1
    q2 = float(_whitened_sq(part.schur_chol, (w2 - cond)[None, :])[0])
    q_full = quad_form(model, np.concatenate([w1, w2]))
    return QuadDecomposition(q_full=q_full, q1=q1, q2=q2, cond_mean_shift=cond)


def log_pdf_many(model: TruncatedEllipticalModel, w, seed: Optional[int] = None,
                 settings: Optional[dict] = None) -> np.ndarray:
    """Log-density at each row of w; -inf outside {w >= c}."""
    w2d, _ = _rows(model, w)
    log_c = norm_const(model, seed=seed, settings=settings)
    out = log_c + np.asarray(model.generator.log_g(_whitened_sq(model.chol, w2d - model.mu)))
    return np.where(model.in_support(w2d), out, -np.inf)


def log_pdf(model: TruncatedEllipticalModel, w, seed: Optional[int] = None,
            settings: Optional[dict] = None):
    """
    log C + log g(Q(w)) on the support, -inf outside.

    Args:
        model: truncated model; its normalizing constant is computed once
        w: point (length p) or n x p array

    Returns:
        float for a single point, array for several
    """
    out = log_pdf_many(model, w, seed=seed, settings=settings)
    return float(out[0]) if np.ndim(w) == 1 else out


def pdf(model: TruncatedEllipticalModel, w, seed: Optional[int] = None):
    out = np.exp(log_pdf_many(model, w, seed=seed))
    return float(out[0]) if np.ndim(w) == 1 else out


def grad_log_pdf(model: TruncatedEllipticalModel, w) -> np.ndarray:
    """Gradient 2 dlog_g(Q) Sigma^-1 (w - mu) at an interior point."""
    w = np.asarray(w, dtype=np.float64)
    diff = w - model.mu
    sinv_diff = linalg.cho_solve((model.chol, True), diff)
    q = float(diff @ sinv_diff)
    return 2.0 * float(model.generator.dlog_g(q)) * sinv_diff


def _require_normal(model: TruncatedEllipticalModel, what: str) -> None:
    if not model.is_normal:
        raise UnsupportedOperationError(
            f"{what} is only available for the normal generator (got {model.generator.kind})"
        )


def _cond_rect(part: PartitionSpec, cond: np.ndarray, seed: Optional[int]):
    return rect_prob(cond, part.schur, part.c2, seed=seed)


def log_marginal_pdf_w1(model: TruncatedEllipticalModel, part: PartitionSpec, w1,
                        seed: Optional[int] = None) -> float:
    """
    log density of W1 for the truncated normal.

    log C + (p2/2) log 2pi + (1/2) log det Sigma22.1 - q1/2
    + log P(N(m, Sigma22.1) >= c2), with m the conditional mean.
    """
    _require_normal(model, "marginal_pdf_w1")
    w1 = np.atleast_1d(np.asarray(w1, dtype=np.float64))
    if np.any(w1 < part.c1):
        return -math.inf

    d1 = w1 - part.mu1
    q1 = float(_whitened_sq(part.s11_chol, d1[None, :])[0])
    cond = part.mu2 + part.regression @ d1
    logdet_s = 2.0 * float(np.sum(np.log(np.diag(part.schur_chol))))
    log_tail = _cond_rect(part, cond, seed).log_value

    return (norm_const(model, seed=seed) + 0.5 * part.p2 * _LOG_2PI
            + 0.5 * logdet_s - 0.5 * q1 + log_tail)


def marginal_pdf_w1(model: TruncatedEllipticalModel, part: PartitionSpec, w1,
                    seed: Optional[int] = None) -> float:
    """Marginal density of W1 (normal generator only)."""
    return math.exp(log_marginal_pdf_w1(model, part, w1, seed=seed))


def log_conditional_pdf_w2_given_w1(model: TruncatedEllipticalModel, part: PartitionSpec,
                                    w1, w2, seed: Optional[int] = None) -> float:
    """
    log density of W2 given W1 = w1 for the truncated normal.

    A normal N(m, Sigma22.1) truncated to {w2 >= c2}:
    -(p2/2) log 2pi - (1/2) log det Sigma22.1 - q2/2 - log P(N(m, Sigma22.1) >= c2).
    """
    _require_normal(model, "conditional_pdf_w2_given_w1")
    w1 = np.atleast_1d(np.asarray(w1, dtype=np.float64))
    w2 = np.atleast_1d(np.asarray(w2, dtype=np.float64))
    if np.any(w1 < part.c1):
        raise ValidationError("conditioning value w1 lies outside the support")
    if np.any(w2 < part.c2):
        return -math.inf

    dec = decompose_quad(model, part, w1, w2)
    logdet_s = 2.0 * float(np.sum(np.log(np.diag(part.schur_chol))))
    log_tail = _cond_rect(part, dec.cond_mean_shift, seed).log_value
    return -0.5 * part.p2 * _LOG_2PI - 0.5 * logdet_s - 0.5 * dec.q2 - log_tail


def conditional_pdf_w2_given_w1(model: TruncatedEllipticalModel, part: PartitionSpec,
                                w1, w2, seed: Optional[int] = None) -> float:
    return math.exp(log_conditional_pdf_w2_given_w1(model, part, w1, w2, seed=seed))


def block_models(model: TruncatedEllipticalModel,
                 part: PartitionSpec) -> Tuple[TruncatedEllipticalModel, TruncatedEllipticalModel]:
    """
    Blockwise truncated normals (mu1, Sigma11, c1) and (mu2, Sigma22, c2).

    Under Sigma12 = 0 the joint density is their product.
    """
    _require_normal(model, "block_models")
    m1 = build_model(part.mu1, part.s11, part.c1, model.generator)
    m2 = build_model(part.mu2, part.s22, part.c2, model.generator)
    return m1, m2
