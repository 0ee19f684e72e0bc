"""Prior log densities and hyperprior sampling for the joint model.

Regression coefficients get wide normal priors; variance-type components get
half-Cauchy(0, 25); the skewness is parametrized through the per-component
shift ``delta`` with a Student-t(0, 25, 2) prior; the mixing parameter nu has
a family-specific hierarchy (truncated exponential with a uniform rate for
skew-t, exponential for skew-slash, Beta pairs for the contaminated member).

``log_prior`` is unnormalized where truncation couples components (the
omega2 truncation to |omega2| < omega1, the slash support floor): Metropolis
ratios only ever need it up to a constant, and keeping terms separable keeps
the additivity property exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import stats
from .model import JointParams
from .sni import MixingFamily

_NEG_INF = -math.inf

#: hard support floor for the slash shape so E[U**(-1/2)] stays finite
SLASH_NU_FLOOR = 0.5
#: hard support floor for the skew-t degrees of freedom (finite variance)
SKEW_T_NU_FLOOR = 2.0


@dataclass(frozen=True)
class PriorSpec:
    beta_mean: float = 0.0
    beta_sd: float = math.sqrt(1000.0)
    cauchy_scale: float = 25.0
    delta_center: float = 0.0
    delta_scale: float = 25.0
    delta_df: float = 2.0
    sigma_cov_sd: float = 10.0
    st_lambda0_lo: float = 0.02
    st_lambda0_hi: float = 0.5
    ssl_lambda0_lo: float = 0.05
    ssl_lambda0_hi: float = 0.15
    scn_weight_a: float = 1.0
    scn_weight_b: float = 1.0
    scn_scale_a: float = 2.0
    scn_scale_b: float = 2.0

    def lambda0_bounds(self, family: MixingFamily) -> tuple[float, float]:
        if family == MixingFamily.SKEW_T:
            return self.st_lambda0_lo, self.st_lambda0_hi
        if family == MixingFamily.SKEW_SLASH:
            return self.ssl_lambda0_lo, self.ssl_lambda0_hi
        raise ValueError(f"no rate hyperprior for family {family}")

    def expected_nu(self, family: MixingFamily) -> float:
        """E(nu) implied by the rate hierarchy (for the [2, 50] sanity check)."""
        lo, hi = self.lambda0_bounds(family)
        mean_inv_rate = (math.log(hi) - math.log(lo)) / (hi - lo)
        if family == MixingFamily.SKEW_T:
            return SKEW_T_NU_FLOOR + mean_inv_rate
        return mean_inv_rate


@dataclass(frozen=True)
class HyperState:
    """Mixing-prior hyperparameters carried alongside theta (the rate of the
    exponential nu prior; meaningless for the skew-normal and contaminated
    members)."""

    lambda0: float = math.nan


def _beta_logpdf(x: float, a: float, b: float) -> float:
    if not 0.0 < x < 1.0:
        return _NEG_INF
    from scipy.special import betaln

    return (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x) - betaln(a, b)


def log_prior(theta: JointParams, hyper: HyperState, spec: PriorSpec) -> float:
    """Sum of all component log priors; -inf when any component leaves support."""
    total = 0.0
    for val in theta.beta:
        total += float(stats.normal_logpdf(val, spec.beta_mean, spec.beta_sd**2))
    total += float(stats.normal_logpdf(theta.beta0, spec.beta_mean, spec.beta_sd**2))
    for val in theta.nu_event:
        total += float(stats.normal_logpdf(val, spec.beta_mean, spec.beta_sd**2))

    for val in (theta.sigma2_e, theta.sigma2_t, theta.omega1):
        if not val > 0:
            return _NEG_INF
        total += float(stats.half_cauchy_logpdf(val, spec.cauchy_scale))
    if not abs(theta.omega2) < theta.omega1:
        return _NEG_INF
    total += float(stats.cauchy_logpdf(theta.omega2, spec.cauchy_scale))

    total += float(
        stats.normal_logpdf(theta.sigma2_cov, 0.0, spec.sigma_cov_sd**2)
    )

    for val in theta.delta():
        total += float(
            stats.student_t_logpdf(val, spec.delta_df, spec.delta_center, spec.delta_scale)
        )

    total += _mixing_log_prior(theta, hyper, spec)
    return total


def _mixing_log_prior(theta: JointParams, hyper: HyperState, spec: PriorSpec) -> float:
    mix = theta.mixing
    fam = mix.family
    if fam == MixingFamily.SKEW_NORMAL:
        return 0.0
    if fam == MixingFamily.SKEW_CONTAMINATED:
        return _beta_logpdf(mix.contam_weight, spec.scn_weight_a, spec.scn_weight_b) + \
            _beta_logpdf(mix.contam_scale, spec.scn_scale_a, spec.scn_scale_b)

    lo, hi = spec.lambda0_bounds(fam)
    lam0 = hyper.lambda0
    if not lo <= lam0 <= hi:
        return _NEG_INF
    total = -math.log(hi - lo)
    if fam == MixingFamily.SKEW_T:
        if not mix.nu > SKEW_T_NU_FLOOR:
            return _NEG_INF
        # exponential with rate lam0 shifted to (2, inf)
        total += math.log(lam0) - lam0 * (mix.nu - SKEW_T_NU_FLOOR)
    else:
        if not mix.nu > SLASH_NU_FLOOR:
            return _NEG_INF
        total += math.log(lam0) - lam0 * mix.nu
    return total


def sample_hyper(spec: PriorSpec, family: MixingFamily, rng: np.random.Generator):
    """Draw the hyperparameters and an initial nu from the stated hierarchy.

    Returns (HyperState, nu_draw); nu_draw is a (weight, scale) pair for the
    contaminated member and None for plain skew-normal.
    """
    if family == MixingFamily.SKEW_NORMAL:
        return HyperState(), None
    if family == MixingFamily.SKEW_CONTAMINATED:
        weight = float(rng.beta(spec.scn_weight_a, spec.scn_weight_b))
        scale = float(rng.beta(spec.scn_scale_a, spec.scn_scale_b))
        return HyperState(), (weight, scale)
    lo, hi = spec.lambda0_bounds(family)
    lam0 = float(rng.uniform(lo, hi))
    if family == MixingFamily.SKEW_T:
        nu = SKEW_T_NU_FLOOR + float(rng.exponential(1.0 / lam0))
    else:
        nu = float(rng.exponential(1.0 / lam0))
    return HyperState(lambda0=lam0), nu
