"""Privacy accounting for the noisy slicing mechanism.

Closed-form Renyi bounds for the release (U, XU + V), conversion to
(epsilon, delta)-DP, numerical optimization over the Renyi order,
noise calibration from a target budget, and Poisson subsampling
amplification. All epsilons are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Optional

from scipy.optimize import minimize_scalar

# alpha is kept strictly inside the feasible interval (1, alpha_max)
_ALPHA_MARGIN = 1e-9


class InfeasibleOrderError(ValueError):
    """Raised when gamma = (alpha^2 - alpha) / sigma^2 >= d."""


class UnreachableBudgetError(ValueError):
    """Raised when no noise level within the ceiling meets the target epsilon."""


@dataclass(frozen=True)
class MechanismDims:
    """Dimensions of the slicing release: ambient width d, slice width k, slice count m."""

    d: int
    k: int
    m: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be >= 1, got {self.d}")
        if not 1 <= self.k <= self.d:
            raise ValueError(f"k must be in [1, d], got k={self.k}, d={self.d}")
        if self.m < 0:
            raise ValueError(f"m must be >= 0, got {self.m}")

    @property
    def m_prime(self) -> int:
        return self.k * self.m


@dataclass(frozen=True)
class RenyiPoint:
    alpha: float
    eps_rdp: float

    def __post_init__(self):
        if self.alpha <= 1:
            raise ValueError(f"alpha must be > 1, got {self.alpha}")
        if self.eps_rdp < 0:
            raise ValueError(f"eps_rdp must be >= 0, got {self.eps_rdp}")


@dataclass
class PrivacyReport:
    """Final accounting trail for one mechanism release."""

    epsilon: float
    delta: float
    alpha_star: float
    sigma: float
    gamma: float
    dims: MechanismDims
    subsample_rate: Optional[float] = None
    epsilon_pre_amplification: Optional[float] = None
    delta_pre_amplification: Optional[float] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["dims"]["m_prime"] = self.dims.m_prime
        return out


def gamma_value(sigma: float, alpha: float) -> float:
    """gamma = sigma^-2 (alpha^2 - alpha), the feasibility quantity."""
    return (alpha * alpha - alpha) / (sigma * sigma)


def alpha_max(sigma: float, d: int) -> float:
    """Positive root of alpha^2 - alpha = d sigma^2; gamma < d iff alpha below this."""
    return 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * d * sigma * sigma))


def rdp_epsilon(sigma: float, dims: MechanismDims, alpha: float) -> float:
    """Renyi-alpha bound m' alpha / (2 sigma^2 (d - gamma)) of the slicing release."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    g = gamma_value(sigma, alpha)
    if g >= dims.d:
        raise InfeasibleOrderError(
            f"gamma={g:.6g} >= d={dims.d}: alpha={alpha:.6g} too large for "
            f"sigma={sigma:.6g} (feasible alpha < {alpha_max(sigma, dims.d):.6g})"
        )
    return dims.m_prime * alpha / (2.0 * sigma * sigma * (dims.d - g))


def dp_from_rdp(point: RenyiPoint, delta: float) -> float:
    """Convert an RDP bound to DP: eps + ln(1/delta) / (alpha - 1)."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0,1), got {delta}")
    return point.eps_rdp + math.log(1.0 / delta) / (point.alpha - 1.0)


def epsilon_at(sigma: float, dims: MechanismDims, alpha: float, delta: float) -> float:
    """DP epsilon at a specific Renyi order."""
    return dp_from_rdp(RenyiPoint(alpha, rdp_epsilon(sigma, dims, alpha)), delta)


def approximate_alpha(sigma: float, dims: MechanismDims, delta: float) -> float:
    """Ad hoc seed 1 + sqrt(sigma^2 d ln(1/delta) / m') for the order search."""
    if dims.m_prime == 0:
        return math.inf
    return 1.0 + math.sqrt(
        sigma * sigma * dims.d * math.log(1.0 / delta) / dims.m_prime
    )


def optimize_alpha(
    sigma: float, dims: MechanismDims, delta: float
) -> tuple[float, float]:
    """Minimize the DP epsilon over feasible Renyi orders.

    Returns (alpha_star, epsilon_star). The objective is smooth and unimodal on
    (1, alpha_max), so bounded scalar minimization suffices; the search interval
    is shrunk by a tiny margin because gamma < d is strict.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0,1), got {delta}")
    lo = 1.0 + _ALPHA_MARGIN
    hi = alpha_max(sigma, dims.d) - _ALPHA_MARGIN
    if hi <= lo:
        raise InfeasibleOrderError(
            f"empty feasible order interval: alpha_max={hi + _ALPHA_MARGIN:.6g} "
            f"for sigma={sigma:.6g}, d={dims.d}"
        )
    res = minimize_scalar(
        lambda a: epsilon_at(sigma, dims, a, delta),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    a_star = float(res.x)
    eps_star = epsilon_at(sigma, dims, a_star, delta)
    # the bounded minimizer can stall a hair off the endpoint when the
    # objective is monotone (m' = 0); check both ends
    for a in (lo, hi):
        e = epsilon_at(sigma, dims, a, delta)
        if e < eps_star:
            a_star, eps_star = a, e
    return a_star, eps_star


def calibrate_sigma(
    epsilon_target: float,
    delta: float,
    dims: MechanismDims,
    sigma_ceiling: float = 1e6,
    max_iter: int = 200,
) -> float:
    """Smallest-noise sigma whose optimized epsilon lands just under the target.

    epsilon*(sigma) is strictly decreasing, so bisection converges; the result
    satisfies epsilon* in [target * (1 - 1e-9), target], tight enough that a
    round trip through subsampling amplification stays within 1e-6.
    """
    if epsilon_target <= 0:
        raise ValueError(f"epsilon_target must be > 0, got {epsilon_target}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0,1), got {delta}")

    def eps_star(sigma: float) -> float:
        try:
            return optimize_alpha(sigma, dims, delta)[1]
        except InfeasibleOrderError:
            return math.inf

    lo, hi = 1e-3, 1.0
    if eps_star(lo) <= epsilon_target:
        return lo  # target so loose that the noise floor already meets it
    while eps_star(hi) > epsilon_target:
        hi *= 2.0
        if hi > sigma_ceiling:
            raise UnreachableBudgetError(
                f"epsilon_target={epsilon_target:.6g} not reachable with "
                f"sigma <= {sigma_ceiling:.6g}"
            )
    band_lo = epsilon_target * (1.0 - 1e-9)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        e = eps_star(mid)
        if band_lo <= e <= epsilon_target:
            return mid
        if e > epsilon_target:
            lo = mid
        else:
            hi = mid
    return hi


def amplify(epsilon: float, delta: float, rate: float) -> tuple[float, float]:
    """Poisson-subsampling amplification: (log(1 + rate (e^eps - 1)), rate * delta)."""
    if not 0 < rate <= 1:
        raise ValueError(f"rate must be in (0,1], got {rate}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0,1), got {delta}")
    return math.log1p(rate * math.expm1(epsilon)), rate * delta


def deamplify(epsilon: float, delta: float, rate: float) -> tuple[float, float]:
    """Inverse of amplify: the pre-subsampling budget that amplifies to (eps, delta)."""
    if not 0 < rate <= 1:
        raise ValueError(f"rate must be in (0,1], got {rate}")
    delta_pre = delta / rate
    if not 0 < delta_pre < 1:
        raise ValueError(
            f"delta={delta:.3g} at rate={rate:.3g} needs pre-amplification "
            f"delta={delta_pre:.3g} >= 1"
        )
    return math.log1p(math.expm1(epsilon) / rate), delta_pre


def deterministic_epsilon(
    sigma: float, m: int, alpha: float, delta: float
) -> float:
    """DP bound m alpha / (2 sigma^2) + ln(1/delta)/(alpha-1) for a fixed,
    orthonormal-per-slice projection matrix; the comparison point showing the
    gain from randomizing the projections."""
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if alpha <= 1:
        raise ValueError(f"alpha must be > 1, got {alpha}")
    if m < 0:
        raise ValueError(f"m must be >= 0, got {m}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0,1), got {delta}")
    return m * alpha / (2.0 * sigma * sigma) + math.log(1.0 / delta) / (alpha - 1.0)


def build_report(
    sigma: float,
    dims: MechanismDims,
    delta: float,
    subsample_rate: Optional[float] = None,
) -> PrivacyReport:
    """Full accounting trail: optimize the order, then amplify if subsampled."""
    a_star, eps_star = optimize_alpha(sigma, dims, delta)
    g = gamma_value(sigma, a_star)
    if subsample_rate is None or subsample_rate == 1.0:
        return PrivacyReport(
            epsilon=eps_star, delta=delta, alpha_star=a_star, sigma=sigma,
            gamma=g, dims=dims, subsample_rate=subsample_rate,
        )
    eps_amp, delta_amp = amplify(eps_star, delta, subsample_rate)
    return PrivacyReport(
        epsilon=eps_amp, delta=delta_amp, alpha_star=a_star, sigma=sigma,
        gamma=g, dims=dims, subsample_rate=subsample_rate,
        epsilon_pre_amplification=eps_star, delta_pre_amplification=delta,
    )
