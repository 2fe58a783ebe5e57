"""
Polar-coordinate formulas for a bivariate elliptical law truncated at its mean.

With unit variances and correlation rho, W - mu = R (cos Psi, rho cos Psi +
sqrt(1 - rho^2) sin Psi) on the truncated region, where Psi is uniform on
(psi*, pi/2) and independent of the radial variable R. Hence

    Cov(W1, W2) = E[R^2] h1(rho) - (E R)^2 h2(rho) h3(rho)

and the sign of the covariance is that of b - h2 h3 / h1, b = E[R^2] / (E R)^2.
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple

from scipy import integrate

from src.core.errors import SingularConfigurationError, ValidationError
from src.core.generators import GeneratorSpec, radial_law
from src.utils.logger import get_logger
from src.utils.validators import require, validate_rho

logger = get_logger(__name__)


@dataclass(frozen=True)
class RadialMoments:
    """E R, E R^2 and their ratio b = E[R^2] / (E R)^2 (>= 1)."""
    e_r: float
    e_r2: float
    ratio_b: float


@dataclass(frozen=True)
class ZeroCorrSolution:
    """
    Moment ratio that makes the truncated covariance vanish.

    Attributes:
        b_required: h2 h3 / h1
        gamma_shape: 1 / (b_required - 1) for a Gamma radial law, None if b_required <= 1
        feasible_for_gamma: whether a Gamma radial law attains b_required
    """
    b_required: float
    gamma_shape: Optional[float]
    feasible_for_gamma: bool


def psi_star(rho: float) -> float:
    """Lower end of the angular range, arctan(-rho / sqrt(1 - rho^2))."""
    require(validate_rho(rho))
    return math.atan(-rho / math.sqrt(1.0 - rho * rho))


def h_functions(rho: float) -> Tuple[float, float, float]:
    """
    Conditional expectations over Psi ~ Uniform(psi*, pi/2), in closed form.

    h1 = E[rho cos^2 Psi + s sin Psi cos Psi]
    h2 = E[cos Psi]
    h3 = E[rho cos Psi + s sin Psi]
    with s = sqrt(1 - rho^2).
    """
    ps = psi_star(rho)
    s = math.sqrt(1.0 - rho * rho)
    length = 0.5 * math.pi - ps
    sin_p, cos_p = math.sin(ps), math.cos(ps)
    sin_2p, cos_2p = math.sin(2.0 * ps), math.cos(2.0 * ps)

    h1 = (rho * (math.pi - 2.0 * ps - sin_2p) / 4.0 + s * (1.0 + cos_2p) / 4.0) / length
    h2 = (1.0 - sin_p) / length
    h3 = (rho * (1.0 - sin_p) + s * cos_p) / length
    return h1, h2, h3


def h_functions_quadrature(rho: float) -> Tuple[float, float, float]:
    """The same expectations by adaptive quadrature over Psi."""
    ps = psi_star(rho)
    s = math.sqrt(1.0 - rho * rho)
    length = 0.5 * math.pi - ps
    opts = dict(epsabs=1e-15, epsrel=1e-14, limit=200)

    def mean_of(f):
        return integrate.quad(f, ps, 0.5 * math.pi, **opts)[0] / length

    h1 = mean_of(lambda x: rho * math.cos(x) ** 2 + s * math.sin(x) * math.cos(x))
    h2 = mean_of(math.cos)
    h3 = mean_of(lambda x: rho * math.cos(x) + s * math.sin(x))
    return h1, h2, h3


def radial_moments(gen: GeneratorSpec, dim: int = 2) -> RadialMoments:
    """
    First two moments of the radial variable in dimension dim.

    Raises:
        MomentError: moment does not exist (student_t with dof <= 2)
    """
    law = radial_law(gen, dim)
    e_r = law.mean()
    e_r2 = law.second_moment()
    return RadialMoments(e_r=e_r, e_r2=e_r2, ratio_b=e_r2 / (e_r * e_r))


def truncated_cov_at_mean(gen: GeneratorSpec, rho: float) -> float:
    """Cov(W1, W2) of the unit-variance bivariate law truncated at c = mu."""
    h1, h2, h3 = h_functions(rho)
    mom = radial_moments(gen, 2)
    return mom.e_r2 * h1 - mom.e_r * mom.e_r * h2 * h3


def solve_zero_corr(rho: float) -> ZeroCorrSolution:
    """
    Moment ratio b for which the truncated-at-mean covariance vanishes.

    Raises:
        SingularConfigurationError: h1(rho) = 0
    """
    h1, h2, h3 = h_functions(rho)
    if h1 == 0.0 or not math.isfinite(h1):
        raise SingularConfigurationError(f"h1({rho}) = {h1}; zero-correlation ratio undefined")

    b = h2 * h3 / h1
    if b > 1.0:
        return ZeroCorrSolution(b_required=b, gamma_shape=1.0 / (b - 1.0), feasible_for_gamma=True)

    logger.warning(f"b_required = {b:.6g} <= 1 at rho = {rho}: no Gamma radial law attains it")
    return ZeroCorrSolution(b_required=b, gamma_shape=None, feasible_for_gamma=False)


def polar_summary(gen: GeneratorSpec, rho: float) -> Dict[str, Any]:
    """Everything the polar CLI reports for one generator and rho."""
    if not isinstance(rho, (int, float)):
        raise ValidationError("rho must be a number")
    h1, h2, h3 = h_functions(rho)
    mom = radial_moments(gen, 2)
    cov = mom.e_r2 * h1 - mom.e_r * mom.e_r * h2 * h3
    return {
        "generator": gen.describe(),
        "rho": rho,
        "psi_star": psi_star(rho),
        "h1": h1,
        "h2": h2,
        "h3": h3,
        "e_r": mom.e_r,
        "e_r2": mom.e_r2,
        "b": mom.ratio_b,
        "b_required": h2 * h3 / h1,
        "cov": cov,
    }
