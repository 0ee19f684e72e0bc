"""Joint longitudinal / time-to-event model with structural association.

The longitudinal block is a linear mixed-effects model whose random effects
and errors follow an SNI law; the (log) event time is tied to the
longitudinal vector both through shared random effects (loadings
``nu_event``) and through a direct cross-covariance ``sigma2_cov * 1`` in
the joint scale matrix.  This module holds the per-subject reference
implementations of every likelihood piece; the vectorized engine the sampler
uses lives in :mod:`snijoint.evaluator` and is tested against these.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import linalg, sni, stats
from .errors import InadmissibleParams, InvalidParams

N_RANDOM_EFFECTS = 2


@dataclass(frozen=True)
class SubjectData:
    """One subject's longitudinal block plus the event observation."""

    id: str
    times: np.ndarray
    y: np.ndarray
    X: np.ndarray
    Z1: np.ndarray
    log_event_time: float
    event_observed: bool
    x_names: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "X", np.atleast_2d(np.asarray(self.X, dtype=float)))
        object.__setattr__(self, "Z1", np.atleast_2d(np.asarray(self.Z1, dtype=float)))
        n = self.y.shape[0]
        if n < 1:
            raise InvalidParams(f"subject {self.id}: needs at least one observation")
        if self.times.shape[0] != n or self.X.shape[0] != n or self.Z1.shape[0] != n:
            raise InvalidParams(f"subject {self.id}: design row mismatch")
        if not math.isfinite(self.log_event_time):
            raise InvalidParams(f"subject {self.id}: non-finite event time")

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]


@dataclass(frozen=True)
class JointParams:
    """Full parameter vector of the joint model.

    The random-effects dispersion is the exchangeable 2x2 matrix
    [[omega1, omega2], [omega2, omega1]], SPD exactly when omega1 > |omega2|.
    ``lam`` is the random-effects skewness; ``nu_event`` holds the event-model
    loadings on the random intercept and slope.
    """

    beta: np.ndarray
    beta0: float
    sigma2_e: float
    sigma2_t: float
    sigma2_cov: float
    omega1: float
    omega2: float
    lam: np.ndarray
    nu_event: np.ndarray
    mixing: sni.MixingSpec

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        object.__setattr__(self, "lam", np.atleast_1d(np.asarray(self.lam, dtype=float)))
        object.__setattr__(
            self, "nu_event", np.atleast_1d(np.asarray(self.nu_event, dtype=float))
        )
        if self.lam.shape != (N_RANDOM_EFFECTS,) or self.nu_event.shape != (
            N_RANDOM_EFFECTS,
        ):
            raise InvalidParams("lam and nu_event must have one entry per random effect")

    def validate(self) -> None:
        if not self.sigma2_e > 0:
            raise InvalidParams(f"sigma2_e must be positive, got {self.sigma2_e}")
        if not self.sigma2_t > 0:
            raise InvalidParams(f"sigma2_t must be positive, got {self.sigma2_t}")
        if not self.omega1 > abs(self.omega2):
            raise InvalidParams(
                f"random-effects dispersion not SPD: omega1={self.omega1}, "
                f"omega2={self.omega2}"
            )

    def d_matrix(self) -> np.ndarray:
        return np.array([[self.omega1, self.omega2], [self.omega2, self.omega1]])

    def delta(self) -> np.ndarray:
        return delta_from_lambda(self.lam, self.d_matrix())

    def centering(self) -> float:
        """c = -sqrt(2/pi) E[U**(-1/2)], making the random effects mean zero."""
        return -math.sqrt(2.0 / math.pi) * sni.expected_inv_sqrt_u(self.mixing)


@dataclass
class LatentState:
    """Per-subject latent values tracked by the sampler."""

    b: np.ndarray       # (m, q)
    u: np.ndarray       # (m,)
    t_aug: np.ndarray   # (m,)

    def validate(self, n_subjects: int, mixing: sni.MixingSpec) -> None:
        if self.b.shape != (n_subjects, N_RANDOM_EFFECTS):
            raise InvalidParams("latent b has wrong shape")
        if self.u.shape != (n_subjects,) or self.t_aug.shape != (n_subjects,):
            raise InvalidParams("latent u / t_aug have wrong shape")
        if not np.all(self.u > 0):
            raise InvalidParams("latent mixing values must be positive")
        if mixing.family == sni.MixingFamily.SKEW_NORMAL and not np.all(self.u == 1.0):
            raise InvalidParams("skew-normal mixing forces u = 1")


class RandomEffectsMode(enum.Enum):
    #: density exactly as the hierarchy prints it: N(c*Delta, u^-1 D_b)
    LITERAL = "literal"
    #: half-normal augmentation preserving the skew-normal marginal
    AUGMENTED = "augmented"


class EventSkew(enum.Enum):
    """How the event term treats the skew-correction CDF ratio.

    CORRECTED multiplies the conditional normal kernel by
    Phi(sqrt(u) v'(resid, logT - beta0)) / Phi(sqrt(u) vt'resid).  Because the
    kernel location also carries the random-effect loadings, that ratio is
    not a normalized density in log T, and jointly over subjects it admits
    parameter ridges along which it grows without bound; it is kept for
    density evaluation.  HIERARCHICAL drops the ratio (equivalently sets it
    to 1), which is the conditional the four-stage hierarchy actually states
    and the form that yields a well-behaved posterior; samplers default to
    it.
    """

    CORRECTED = "corrected"
    HIERARCHICAL = "hierarchical"


def delta_from_lambda(lam: np.ndarray, d: np.ndarray) -> np.ndarray:
    kappa = lam / math.sqrt(1.0 + float(lam @ lam))
    return linalg.sym_sqrt(d) @ kappa


def lambda_from_delta(delta: np.ndarray, d: np.ndarray) -> np.ndarray:
    kappa = linalg.inv_sym_sqrt(d) @ delta
    kk = float(kappa @ kappa)
    if kk >= 1.0:
        raise InvalidParams("delta incompatible with dispersion: kappa'kappa >= 1")
    return kappa / math.sqrt(1.0 - kk)


# ---------------------------------------------------------------------------
# Per-subject building blocks
# ---------------------------------------------------------------------------


def psi_matrix(s: SubjectData, theta: JointParams) -> np.ndarray:
    """Marginal longitudinal covariance sigma2_e I + Z1 D Z1'."""
    theta.validate()
    d = theta.d_matrix()
    return linalg.symmetrize(theta.sigma2_e * np.eye(s.n_obs) + s.Z1 @ d @ s.Z1.T)


def lambda_bar(s: SubjectData, theta: JointParams) -> np.ndarray:
    """Skewness of the marginal longitudinal block induced by skewed random effects."""
    d = theta.d_matrix()
    zeta = linalg.inv_sym_sqrt(d) @ theta.lam
    cap = np.linalg.inv(np.linalg.inv(d) + s.Z1.T @ s.Z1 / theta.sigma2_e)
    denom = math.sqrt(1.0 + float(zeta @ cap @ zeta))
    psi_root_inv = linalg.inv_sym_sqrt(psi_matrix(s, theta))
    return psi_root_inv @ s.Z1 @ d @ zeta / denom


def joint_scale(s: SubjectData, theta: JointParams) -> np.ndarray:
    """Scale matrix of the (n_i + 1)-dimensional joint vector (Y_i, log T_i)."""
    n = s.n_obs
    out = np.empty((n + 1, n + 1))
    out[:n, :n] = psi_matrix(s, theta)
    out[:n, n] = theta.sigma2_cov
    out[n, :n] = theta.sigma2_cov
    out[n, n] = theta.sigma2_t
    return out


def event_skew_geometry(s: SubjectData, theta: JointParams):
    """The skew directions of the joint law: (v1, v2, v_tilde, s221, psi_inv_one).

    The joint skewness vector stacks the induced longitudinal skewness with a
    zero in the event slot; v = Sigma_J**(-1/2) lam_J drives the numerator of
    the skew-correction ratio, v_tilde its denominator.
    """
    n = s.n_obs
    psi = psi_matrix(s, theta)
    psi_inv_one = linalg.solve_spd(psi, np.ones(n))
    s221 = theta.sigma2_t - theta.sigma2_cov**2 * float(psi_inv_one.sum())
    if not s221 > 0:
        raise InadmissibleParams(
            f"conditional event variance is not positive ({s221:.3e})"
        )
    lam_joint = np.concatenate([lambda_bar(s, theta), [0.0]])
    v = linalg.inv_sym_sqrt(joint_scale(s, theta)) @ lam_joint
    v1, v2 = v[:n], float(v[n])
    v_tilde = (v1 + theta.sigma2_cov * psi_inv_one * v2) / math.sqrt(
        1.0 + v2 * s221 * v2
    )
    return v1, v2, v_tilde, s221, psi_inv_one


def cond_event_moments(s: SubjectData, theta: JointParams, b) -> tuple[float, float]:
    """Conditional mean and variance of log T given the longitudinal vector."""
    theta.validate()
    b = np.asarray(b, dtype=float)
    psi = psi_matrix(s, theta)
    psi_inv_one = linalg.solve_spd(psi, np.ones(s.n_obs))
    resid = s.y - s.X @ theta.beta
    mu21 = (
        theta.beta0
        + float(theta.nu_event @ b)
        + theta.sigma2_cov * float(psi_inv_one @ resid)
    )
    s221 = theta.sigma2_t - theta.sigma2_cov**2 * float(psi_inv_one.sum())
    if not s221 > 0:
        raise InadmissibleParams(
            f"conditional event variance is not positive ({s221:.3e})"
        )
    return mu21, s221


# ---------------------------------------------------------------------------
# Likelihood pieces
# ---------------------------------------------------------------------------


def loglik_longitudinal(s: SubjectData, theta: JointParams, b, u: float) -> float:
    """Normal log density of Y given the random effects, variance u^-1 sigma2_e I."""
    resid = s.y - s.X @ theta.beta - s.Z1 @ np.asarray(b, dtype=float)
    n = s.n_obs
    var = theta.sigma2_e / u
    return float(
        -0.5 * n * (stats.LOG_2PI + math.log(var)) - 0.5 * float(resid @ resid) / var
    )


def loglik_event(s: SubjectData, theta: JointParams, b, u: float,
                 skew: EventSkew = EventSkew.CORRECTED) -> float:
    """Conditional event log likelihood.

    Observed events contribute the conditional density at the recorded log
    time; censored subjects contribute the log upper-tail integral of the
    same density (adaptive quadrature, relative accuracy 1e-8).  ``skew``
    selects whether the CDF-ratio correction multiplies the kernel.
    """
    mu21, s221 = cond_event_moments(s, theta, b)
    sd = math.sqrt(s221 / u)
    z_low = (s.log_event_time - mu21) / sd

    if skew == EventSkew.HIERARCHICAL:
        if s.event_observed:
            return float(stats.normal_logpdf(s.log_event_time, mu21, s221 / u))
        return float(stats.log_phi_sf(z_low))

    v1, v2, v_tilde, _, _ = event_skew_geometry(s, theta)
    resid = s.y - s.X @ theta.beta
    root_u = math.sqrt(u)
    log_den = float(stats.log_phi_cdf(root_u * float(v_tilde @ resid)))

    if s.event_observed:
        log_kernel = float(stats.normal_logpdf(s.log_event_time, mu21, s221 / u))
        arg = root_u * (
            float(v1 @ resid) + v2 * (s.log_event_time - theta.beta0)
        )
        return log_kernel + float(stats.log_phi_cdf(arg)) - log_den

    # upper tail: substitute z = (logT - mu21)/sd inside the integral
    a = root_u * (float(v1 @ resid) + v2 * (mu21 - theta.beta0))
    b_coef = v2 * math.sqrt(s221)
    tail = float(stats.log_gauss_skew_tail_quad(z_low, a, b_coef)[0])
    return tail - log_den


def loglik_random_effects(
    b,
    theta: JointParams,
    u: float,
    mode: RandomEffectsMode = RandomEffectsMode.AUGMENTED,
    t_aug: float = 0.0,
) -> float:
    """Random-effects log density under the hierarchy.

    LITERAL evaluates N(c Delta, u^-1 D) exactly as the hierarchy prints it.
    AUGMENTED is the standard half-normal augmentation whose t_aug-marginal
    restores the skew-normal law: N(c Delta + Delta t, u^-1 (D - Delta Delta'))
    plus a half-normal density for t with scale u^(-1/2).
    """
    b = np.asarray(b, dtype=float)
    d = theta.d_matrix()
    delta = theta.delta()
    center = theta.centering() * delta
    if mode == RandomEffectsMode.LITERAL:
        return _mvn_logpdf(b, center, d / u)
    if t_aug < 0:
        raise InvalidParams("augmentation variable must be nonnegative")
    resid_cov = d - np.outer(delta, delta)
    try:
        core = _mvn_logpdf(b, center + delta * t_aug, resid_cov / u)
    except linalg.NotPositiveDefinite as exc:
        raise InvalidParams(
            "D - Delta Delta' not positive definite in augmented mode"
        ) from exc
    return core + float(stats.halfnormal_logpdf(t_aug, 1.0 / math.sqrt(u)))


def complete_data_loglik(
    data: list[SubjectData],
    theta: JointParams,
    latent: LatentState,
    mode: RandomEffectsMode = RandomEffectsMode.AUGMENTED,
    event_skew: EventSkew = EventSkew.CORRECTED,
) -> float:
    """Sum of all per-subject likelihood contributions, mixing terms included."""
    theta.validate()
    latent.validate(len(data), theta.mixing)
    total = 0.0
    for i, s in enumerate(data):
        u = float(latent.u[i])
        total += loglik_longitudinal(s, theta, latent.b[i], u)
        total += loglik_event(s, theta, latent.b[i], u, event_skew)
        total += loglik_random_effects(
            latent.b[i], theta, u, mode, float(latent.t_aug[i])
        )
        total += sni.mixing_logpdf(u, theta.mixing)
    return total


def _mvn_logpdf(x, mean, cov) -> float:
    L = linalg.cholesky(cov)
    z = np.linalg.solve(L, np.asarray(x, dtype=float) - mean)
    return float(
        -0.5 * len(z) * stats.LOG_2PI - np.sum(np.log(np.diag(L))) - 0.5 * (z @ z)
    )
