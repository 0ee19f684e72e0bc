"""Metropolis-within-Gibbs sampler for the joint model posterior.

One sweep updates, in order: the fixed-effect vector (preconditioned random
walk), the event intercept and loadings, the variance-type scalars (log or
identity scale with support rejection), the skewness shifts, the per-subject
random effects, augmentation variables and mixing values (all vectorized
across subjects, which is exact because they are conditionally independent),
and finally the mixing shape with its hyperparameters.

Every acceptance uses the exact posterior ratio: the sampler tracks the four
per-subject likelihood term arrays (longitudinal, event, random effects,
mixing) plus the log prior, and a proposal only re-evaluates the terms its
block can touch -- the untouched terms cancel in the ratio identically.
Proposal scales adapt by Robbins-Monro toward fixed acceptance targets and
freeze exactly at the end of burn-in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import diagnostics
from .errors import (
    DegenerateData,
    InadmissibleParams,
    InvalidParams,
    NotPositiveDefinite,
)
from .evaluator import Evaluator
from .model import (
    EventSkew,
    JointParams,
    LatentState,
    RandomEffectsMode,
    SubjectData,
    delta_from_lambda,
    lambda_from_delta,
)
from .priors import SKEW_T_NU_FLOOR, HyperState, PriorSpec, log_prior
from .sni import MixingFamily, MixingSpec

#: which per-subject likelihood terms each update block can change
BLOCK_PARTS: dict[str, tuple[str, ...]] = {
    "beta": ("long", "event"),
    "beta0": ("event",),
    "nu1": ("event",),
    "nu2": ("event",),
    "sigma2_e": ("long", "event"),
    "sigma2_t": ("event",),
    "sigma2_cov": ("event",),
    "omega1": ("event", "re"),
    "omega2": ("event", "re"),
    "delta1": ("event", "re"),
    "delta2": ("event", "re"),
    "nu_mix": ("re", "mix"),
    "gamma_contam": ("re", "mix"),
    "lambdac_contam": ("long", "event", "re", "mix"),
    "lambda0": (),
    "b": ("long", "event", "re"),
    "t_aug": ("re",),
    "u": ("long", "event", "re", "mix"),
}

_SCALAR_TARGET_BLOCKS = (
    "beta0", "nu1", "nu2", "sigma2_e", "sigma2_t", "sigma2_cov",
    "omega1", "omega2", "delta1", "delta2", "nu_mix", "gamma_contam",
    "lambdac_contam", "lambda0", "t_aug", "u",
)


@dataclass(frozen=True)
class McmcConfig:
    n_chains: int = 3
    burn_in: int = 5000
    iterations: int = 5000
    thin: int = 1
    seed: int = 0
    target_accept_scalar: float = 0.44
    target_accept_block: float = 0.234
    init_dispersion: float = 1.0
    adapt_decay: float = 0.6
    extra_passes: int = 0
    frozen: frozenset = frozenset()

    def __post_init__(self):
        if min(self.n_chains, self.burn_in, self.iterations, self.thin) < 1:
            raise ValueError("all iteration counts must be at least 1")
        if self.extra_passes < 0:
            raise ValueError("extra_passes must be nonnegative")
        for t in (self.target_accept_scalar, self.target_accept_block):
            if not 0.0 < t < 1.0:
                raise ValueError("acceptance targets must lie in (0, 1)")
        object.__setattr__(self, "frozen", frozenset(self.frozen))


@dataclass
class ChainState:
    theta: JointParams
    hyper: HyperState
    latent: LatentState
    step_scales: dict
    accept_sums: dict
    accept_counts: dict
    last_accept: dict
    iteration: int = 0
    cur_parts: dict = field(default_factory=dict)
    cur_prior: float = 0.0

    def log_posterior(self) -> float:
        return float(sum(p.sum() for p in self.cur_parts.values()) + self.cur_prior)


@dataclass
class RunResult:
    traces: dict
    summary: diagnostics.PosteriorSummary
    accept_rates: dict
    config: McmcConfig
    param_names: list


class Sampler:
    def __init__(
        self,
        data: list[SubjectData],
        prior_spec: PriorSpec,
        cfg: McmcConfig,
        family: MixingFamily = MixingFamily.SKEW_NORMAL,
        mode: RandomEffectsMode = RandomEffectsMode.AUGMENTED,
        event_skew: EventSkew = EventSkew.HIERARCHICAL,
    ):
        if not data:
            raise DegenerateData("empty dataset")
        self.data = data
        self.prior_spec = prior_spec
        self.cfg = cfg
        self.family = family
        self.mode = mode
        self.event_skew = event_skew
        self.ev = Evaluator(data, mode=mode, event_skew=event_skew)
        self.m = len(data)
        self.p = data[0].X.shape[1]
        self._prep_init()

    # -- initialization ------------------------------------------------------

    def _prep_init(self):
        x_all = np.vstack([s.X for s in self.data])
        y_all = np.concatenate([s.y for s in self.data])
        if np.linalg.matrix_rank(x_all) < self.p:
            raise DegenerateData("rank-deficient pooled fixed-effect design")
        beta_hat, _, _, _ = np.linalg.lstsq(x_all, y_all, rcond=None)
        resid = y_all - x_all @ beta_hat
        self._beta_ols = beta_hat
        self._resid_var = max(float(resid.var()), 1e-4)
        # proposal preconditioner from the OLS information matrix
        cov = np.linalg.inv(x_all.T @ x_all) * self._resid_var
        self._beta_chol = np.linalg.cholesky(0.5 * (cov + cov.T))
        obs_lt = [s.log_event_time for s in self.data if s.event_observed]
        if not obs_lt:
            raise DegenerateData("all subjects censored")
        self._beta0_init = float(np.mean(obs_lt))
        self._sigma2_t_init = max(float(np.var(obs_lt)), 0.05) if len(obs_lt) > 1 else 1.0

    def _initial_theta(self) -> JointParams:
        if self.family == MixingFamily.SKEW_T:
            mixing = MixingSpec.skew_t(10.0)
        elif self.family == MixingFamily.SKEW_SLASH:
            mixing = MixingSpec.skew_slash(10.0)
        elif self.family == MixingFamily.SKEW_CONTAMINATED:
            mixing = MixingSpec.skew_contaminated(0.5, 0.5)
        else:
            mixing = MixingSpec.skew_normal()
        return JointParams(
            beta=self._beta_ols.copy(),
            beta0=self._beta0_init,
            sigma2_e=0.5 * self._resid_var,
            sigma2_t=self._sigma2_t_init,
            sigma2_cov=0.0,
            omega1=max(0.25 * self._resid_var, 0.05),
            omega2=0.0,
            lam=np.zeros(2),
            nu_event=np.zeros(2),
            mixing=mixing,
        )

    def init_chain(self, chain_index: int, theta_hint: JointParams | None = None) -> ChainState:
        cfg = self.cfg
        rng = np.random.default_rng(
            np.random.SeedSequence([cfg.seed, 104729, chain_index])
        )
        theta = theta_hint or self._initial_theta()
        disp = cfg.init_dispersion

        frozen = cfg.frozen
        if disp > 0:
            free = lambda *names: all(nm not in frozen for nm in names)
            beta = theta.beta
            if free("beta"):
                beta = theta.beta + disp * (self._beta_chol @ rng.standard_normal(self.p))
            beta0 = theta.beta0
            if free("beta0"):
                beta0 += disp * 0.5 * math.sqrt(self._sigma2_t_init) * rng.standard_normal()
            nu_event = theta.nu_event.copy()
            if free("nu1"):
                nu_event[0] += disp * 0.3 * rng.standard_normal()
            if free("nu2"):
                nu_event[1] += disp * 0.3 * rng.standard_normal()
            sigma2_e = theta.sigma2_e
            if free("sigma2_e"):
                sigma2_e *= math.exp(disp * 0.3 * rng.standard_normal())
            sigma2_t = theta.sigma2_t
            if free("sigma2_t"):
                sigma2_t *= math.exp(disp * 0.3 * rng.standard_normal())
            omega1, omega2 = theta.omega1, theta.omega2
            if free("omega1"):
                omega1 *= math.exp(disp * 0.3 * rng.standard_normal())
            if free("omega2"):
                omega2 = omega1 * 0.9 * math.tanh(
                    math.atanh(
                        np.clip(theta.omega2 / max(theta.omega1, 1e-8) / 0.9, -0.99, 0.99)
                    )
                    + disp * 0.3 * rng.standard_normal()
                )
            elif not omega1 > abs(omega2):
                omega1 = abs(omega2) / 0.9 + 1e-6
            sigma2_cov = theta.sigma2_cov
            if free("sigma2_cov"):
                sigma2_cov += disp * 0.2 * rng.standard_normal()
            d_new = np.array([[omega1, omega2], [omega2, omega1]])
            delta = delta_from_lambda(theta.lam, theta.d_matrix())
            if free("delta1"):
                delta[0] += disp * 0.2 * rng.standard_normal()
            if free("delta2"):
                delta[1] += disp * 0.2 * rng.standard_normal()
            try:
                lam = lambda_from_delta(delta, d_new)
            except (InvalidParams, NotPositiveDefinite):
                lam = theta.lam
            mixing = theta.mixing
            if free("nu_mix", "gamma_contam", "lambdac_contam"):
                mixing = self._jitter_mixing(theta.mixing, disp, rng)
            theta = replace(
                theta, beta=beta, beta0=beta0, nu_event=nu_event, sigma2_e=sigma2_e,
                sigma2_t=sigma2_t, omega1=omega1, omega2=omega2,
                sigma2_cov=sigma2_cov, lam=lam, mixing=mixing,
            )

        hyper = self._initial_hyper()
        latent = LatentState(
            b=np.zeros((self.m, 2)),
            u=np.ones(self.m),
            t_aug=np.full(self.m, math.sqrt(2.0 / math.pi)),
        )
        scales = {
            "beta": 0.5,
            "beta0": 0.2, "nu1": 0.2, "nu2": 0.2,
            "sigma2_e": 0.2, "sigma2_t": 0.2, "sigma2_cov": 0.1,
            "omega1": 0.25, "omega2": 0.15,
            "delta1": 0.2, "delta2": 0.2,
            "nu_mix": 0.4, "gamma_contam": 0.5, "lambdac_contam": 0.5,
            "lambda0": 0.3,
            "b": np.full(self.m, 1.2),
            "t_aug": np.full(self.m, 0.8),
            "u": np.full(self.m, 0.6),
        }
        state = ChainState(
            theta=theta, hyper=hyper, latent=latent, step_scales=scales,
            accept_sums={}, accept_counts={}, last_accept={}, iteration=0,
        )
        self._refresh_bookkeeping(state)
        if not math.isfinite(state.log_posterior()):
            raise DegenerateData("initial state has non-finite log posterior")
        return state

    def _jitter_mixing(self, mixing: MixingSpec, disp: float, rng) -> MixingSpec:
        if mixing.family == MixingFamily.SKEW_T:
            nu = SKEW_T_NU_FLOOR + (mixing.nu - SKEW_T_NU_FLOOR) * math.exp(
                disp * 0.2 * rng.standard_normal()
            )
            return MixingSpec.skew_t(nu)
        if mixing.family == MixingFamily.SKEW_SLASH:
            return MixingSpec.skew_slash(
                0.5 + (mixing.nu - 0.5) * math.exp(disp * 0.2 * rng.standard_normal())
            )
        if mixing.family == MixingFamily.SKEW_CONTAMINATED:
            jitter = lambda v: 1.0 / (1.0 + math.exp(-(math.log(v / (1 - v)) + disp * 0.3 * rng.standard_normal())))
            return MixingSpec.skew_contaminated(
                jitter(mixing.contam_weight), jitter(mixing.contam_scale)
            )
        return mixing

    def _initial_hyper(self) -> HyperState:
        if self.family == MixingFamily.SKEW_T:
            lo, hi = self.prior_spec.st_lambda0_lo, self.prior_spec.st_lambda0_hi
            return HyperState(lambda0=0.5 * (lo + hi))
        if self.family == MixingFamily.SKEW_SLASH:
            lo, hi = self.prior_spec.ssl_lambda0_lo, self.prior_spec.ssl_lambda0_hi
            return HyperState(lambda0=0.5 * (lo + hi))
        return HyperState()

    # -- bookkeeping ---------------------------------------------------------

    def _refresh_bookkeeping(self, state: ChainState):
        lat = state.latent
        state.cur_parts = {
            part: self.ev.terms(state.theta, lat.b, lat.u, lat.t_aug, parts=(part,))
            for part in ("long", "event", "re", "mix")
        }
        state.cur_prior = log_prior(state.theta, state.hyper, self.prior_spec)

    def _eval_parts(self, theta, latent, parts):
        try:
            return {
                part: self.ev.terms(theta, latent.b, latent.u, latent.t_aug, parts=(part,))
                for part in parts
            }
        except (InadmissibleParams, NotPositiveDefinite, InvalidParams):
            return None

    def _record(self, state, name, prob):
        state.last_accept[name] = prob
        if np.isscalar(prob):
            state.accept_sums[name] = state.accept_sums.get(name, 0.0) + prob
            state.accept_counts[name] = state.accept_counts.get(name, 0) + 1
        else:
            state.accept_sums[name] = state.accept_sums.get(name, 0.0) + float(np.mean(prob))
            state.accept_counts[name] = state.accept_counts.get(name, 0) + 1

    # -- scalar/vector theta blocks -------------------------------------------

    def _try_theta(self, state: ChainState, name: str, theta_new: JointParams,
                   hyper_new: HyperState, log_jacobian: float, rng) -> None:
        """Generic MH accept/reject for a parameter-block proposal."""
        parts = BLOCK_PARTS[name]
        new_parts = self._eval_parts(theta_new, state.latent, parts)
        prob = 0.0
        if new_parts is not None:
            new_prior = log_prior(theta_new, hyper_new, self.prior_spec)
            delta = new_prior - state.cur_prior + log_jacobian
            for part in parts:
                delta += float(new_parts[part].sum() - state.cur_parts[part].sum())
            if math.isfinite(delta) or delta == math.inf:
                prob = min(1.0, math.exp(min(delta, 0.0)))
                if math.log(rng.random()) < delta:
                    state.theta = theta_new
                    state.hyper = hyper_new
                    state.cur_prior = new_prior
                    for part in parts:
                        state.cur_parts[part] = new_parts[part]
        self._record(state, name, prob)

    def _update_beta(self, state, rng):
        scale = state.step_scales["beta"]
        z = rng.standard_normal(self.p)
        theta_new = replace(state.theta, beta=state.theta.beta + scale * (self._beta_chol @ z))
        self._try_theta(state, "beta", theta_new, state.hyper, 0.0, rng)

    def _update_scalar(self, state, name, rng):
        theta = state.theta
        scale = state.step_scales[name]
        eps = scale * rng.standard_normal()
        jac = 0.0
        hyper_new = state.hyper
        if name == "beta0":
            theta_new = replace(theta, beta0=theta.beta0 + eps)
        elif name == "nu1":
            nu = theta.nu_event.copy(); nu[0] += eps
            theta_new = replace(theta, nu_event=nu)
        elif name == "nu2":
            nu = theta.nu_event.copy(); nu[1] += eps
            theta_new = replace(theta, nu_event=nu)
        elif name in ("sigma2_e", "sigma2_t", "omega1"):
            cur = getattr(theta, name)
            new = cur * math.exp(eps)
            jac = math.log(new) - math.log(cur)
            if name == "omega1":
                theta_new = self._with_dispersion(theta, new, theta.omega2)
                if theta_new is None:
                    self._record(state, name, 0.0)
                    return
            else:
                theta_new = replace(theta, **{name: new})
        elif name == "omega2":
            theta_new = self._with_dispersion(theta, theta.omega1, theta.omega2 + eps)
            if theta_new is None:
                self._record(state, name, 0.0)
                return
        elif name == "sigma2_cov":
            theta_new = replace(theta, sigma2_cov=theta.sigma2_cov + eps)
        elif name in ("delta1", "delta2"):
            k = 0 if name == "delta1" else 1
            delta = delta_from_lambda(theta.lam, theta.d_matrix())
            delta[k] += eps
            try:
                lam_new = lambda_from_delta(delta, theta.d_matrix())
            except (InvalidParams, NotPositiveDefinite):
                self._record(state, name, 0.0)
                return
            theta_new = replace(theta, lam=lam_new)
        elif name == "nu_mix":
            mix = theta.mixing
            if mix.family == MixingFamily.SKEW_T:
                cur_t = math.log(mix.nu - SKEW_T_NU_FLOOR)
                new_nu = SKEW_T_NU_FLOOR + math.exp(cur_t + eps)
                jac = math.log(new_nu - SKEW_T_NU_FLOOR) - math.log(mix.nu - SKEW_T_NU_FLOOR)
                try:
                    theta_new = replace(theta, mixing=MixingSpec.skew_t(new_nu))
                except InvalidParams:
                    self._record(state, name, 0.0)
                    return
            else:
                new_nu = mix.nu * math.exp(eps)
                jac = math.log(new_nu) - math.log(mix.nu)
                try:
                    theta_new = replace(theta, mixing=MixingSpec.skew_slash(new_nu))
                except InvalidParams:
                    self._record(state, name, 0.0)
                    return
        elif name in ("gamma_contam", "lambdac_contam"):
            mix = theta.mixing
            cur = mix.contam_weight if name == "gamma_contam" else mix.contam_scale
            cur = min(max(cur, 1e-12), 1 - 1e-12)
            logit_new = math.log(cur / (1 - cur)) + eps
            new = 1.0 / (1.0 + math.exp(-logit_new))
            jac = (math.log(new) + math.log1p(-new)) - (math.log(cur) + math.log1p(-cur))
            if name == "gamma_contam":
                mixing = MixingSpec.skew_contaminated(new, mix.contam_scale)
            else:
                mixing = MixingSpec.skew_contaminated(mix.contam_weight, new)
            theta_new = replace(theta, mixing=mixing)
            if name == "lambdac_contam":
                # latent mixing values ride along with the contamination point
                self._try_contam_scale(state, theta_new, jac, rng)
                return
        elif name == "lambda0":
            hyper_new = HyperState(lambda0=state.hyper.lambda0 + eps)
            theta_new = theta
        else:
            raise KeyError(name)
        self._try_theta(state, name, theta_new, hyper_new, jac, rng)

    def _with_dispersion(self, theta, omega1, omega2):
        """New dispersion with the skew shift delta held fixed."""
        if not omega1 > abs(omega2):
            return None
        delta = delta_from_lambda(theta.lam, theta.d_matrix())
        d_new = np.array([[omega1, omega2], [omega2, omega1]])
        try:
            lam_new = lambda_from_delta(delta, d_new)
        except (InvalidParams, NotPositiveDefinite):
            return None
        return replace(theta, omega1=omega1, omega2=omega2, lam=lam_new)

    def _try_contam_scale(self, state, theta_new, jac, rng):
        """Contamination-scale move: u values at the contaminated point move too."""
        lat = state.latent
        indicator = lat.u != 1.0
        u_new = np.where(indicator, theta_new.mixing.contam_scale, 1.0)
        latent_new = LatentState(b=lat.b, u=u_new, t_aug=lat.t_aug)
        parts = BLOCK_PARTS["lambdac_contam"]
        new_parts = self._eval_parts(theta_new, latent_new, parts)
        prob = 0.0
        if new_parts is not None:
            new_prior = log_prior(theta_new, state.hyper, self.prior_spec)
            delta = new_prior - state.cur_prior + jac
            for part in parts:
                delta += float(new_parts[part].sum() - state.cur_parts[part].sum())
            if not math.isnan(delta):
                prob = min(1.0, math.exp(min(delta, 0.0)))
                if math.log(rng.random()) < delta:
                    state.theta = theta_new
                    state.latent = latent_new
                    state.cur_prior = new_prior
                    for part in parts:
                        state.cur_parts[part] = new_parts[part]
        self._record(state, "lambdac_contam", prob)

    # -- per-subject latent blocks (vectorized independent MH) ----------------

    def _update_b(self, state, rng):
        lat = state.latent
        scales = state.step_scales["b"]
        chol = self.ev.b_proposal_chol(state.theta, lat.u)
        z = rng.standard_normal((self.m, 2))
        prop = lat.b + scales[:, None] * np.einsum("mij,mj->mi", chol, z)
        latent_new = LatentState(b=prop, u=lat.u, t_aug=lat.t_aug)
        parts = BLOCK_PARTS["b"]
        new_parts = self._eval_parts(state.theta, latent_new, parts)
        if new_parts is None:
            self._record(state, "b", np.zeros(self.m))
            return
        delta = sum(new_parts[p] - state.cur_parts[p] for p in parts)
        accept = np.log(rng.random(self.m)) < delta
        prob = np.exp(np.minimum(delta, 0.0))
        prob[np.isnan(prob)] = 0.0
        lat.b[accept] = prop[accept]
        for p in parts:
            state.cur_parts[p][accept] = new_parts[p][accept]
        self._record(state, "b", prob)

    def _update_t_aug(self, state, rng):
        lat = state.latent
        scales = state.step_scales["t_aug"]
        log_new = np.log(np.maximum(lat.t_aug, 1e-300)) + scales * rng.standard_normal(self.m)
        prop = np.exp(log_new)
        latent_new = LatentState(b=lat.b, u=lat.u, t_aug=prop)
        new_re = self._eval_parts(state.theta, latent_new, ("re",))
        if new_re is None:
            self._record(state, "t_aug", np.zeros(self.m))
            return
        delta = new_re["re"] - state.cur_parts["re"] + log_new - np.log(lat.t_aug)
        accept = np.log(rng.random(self.m)) < delta
        prob = np.exp(np.minimum(delta, 0.0))
        prob[np.isnan(prob)] = 0.0
        lat.t_aug[accept] = prop[accept]
        state.cur_parts["re"][accept] = new_re["re"][accept]
        self._record(state, "t_aug", prob)

    def _update_u(self, state, rng):
        fam = self.family
        if fam == MixingFamily.SKEW_NORMAL:
            return
        if fam == MixingFamily.SKEW_CONTAMINATED:
            self._gibbs_u_contaminated(state, rng)
            return
        lat = state.latent
        scales = state.step_scales["u"]
        log_new = np.log(lat.u) + scales * rng.standard_normal(self.m)
        prop = np.exp(log_new)
        latent_new = LatentState(b=lat.b, u=prop, t_aug=lat.t_aug)
        parts = BLOCK_PARTS["u"]
        new_parts = self._eval_parts(state.theta, latent_new, parts)
        if new_parts is None:
            self._record(state, "u", np.zeros(self.m))
            return
        delta = sum(new_parts[p] - state.cur_parts[p] for p in parts)
        delta = delta + log_new - np.log(lat.u)
        accept = np.log(rng.random(self.m)) < delta
        prob = np.exp(np.minimum(delta, 0.0))
        prob[np.isnan(prob)] = 0.0
        lat.u[accept] = prop[accept]
        for p in parts:
            state.cur_parts[p][accept] = new_parts[p][accept]
        self._record(state, "u", prob)

    def _gibbs_u_contaminated(self, state, rng):
        """Exact two-point full conditional over {contam_scale, 1}."""
        lat = state.latent
        mix = state.theta.mixing
        lw = []
        for val in (mix.contam_scale, 1.0):
            latent_v = LatentState(b=lat.b, u=np.full(self.m, val), t_aug=lat.t_aug)
            parts = self._eval_parts(state.theta, latent_v, ("long", "event", "re", "mix"))
            if parts is None:
                self._record(state, "u", np.zeros(self.m))
                return
            lw.append(sum(parts[p] for p in ("long", "event", "re", "mix")))
        # P(u = contam) via the stable two-point softmax
        p_contam = 1.0 / (1.0 + np.exp(np.clip(lw[1] - lw[0], -700, 700)))
        pick_contam = rng.random(self.m) < p_contam
        lat.u[:] = np.where(pick_contam, mix.contam_scale, 1.0)
        self._refresh_parts_for_u(state)
        self._record(state, "u", np.ones(self.m))

    def _refresh_parts_for_u(self, state):
        lat = state.latent
        for part in ("long", "event", "re", "mix"):
            state.cur_parts[part] = self.ev.terms(
                state.theta, lat.b, lat.u, lat.t_aug, parts=(part,)
            )

    # -- sweep ---------------------------------------------------------------

    def step(self, state: ChainState, rng: np.random.Generator) -> ChainState:
        frozen = self.cfg.frozen
        if "beta" not in frozen:
            self._update_beta(state, rng)
        for name in ("beta0", "nu1", "nu2"):
            if name not in frozen:
                self._update_scalar(state, name, rng)
        for name in ("sigma2_e", "sigma2_t", "omega1", "omega2", "sigma2_cov"):
            if name not in frozen:
                self._update_scalar(state, name, rng)
        for name in ("delta1", "delta2"):
            if name not in frozen:
                self._update_scalar(state, name, rng)
        if "b" not in frozen:
            self._update_b(state, rng)
        if self.mode == RandomEffectsMode.AUGMENTED and "t_aug" not in frozen:
            self._update_t_aug(state, rng)
        if "u" not in frozen:
            self._update_u(state, rng)
        # additional passes over the ridge-prone event-side blocks help the
        # scalar walk decorrelate without changing the stationary law
        for _ in range(self.cfg.extra_passes):
            for name in ("beta0", "nu1", "nu2", "sigma2_t", "sigma2_cov",
                         "omega1", "omega2", "delta1", "delta2"):
                if name not in frozen:
                    self._update_scalar(state, name, rng)
            if "b" not in frozen:
                self._update_b(state, rng)
            if self.mode == RandomEffectsMode.AUGMENTED and "t_aug" not in frozen:
                self._update_t_aug(state, rng)
        if self.family in (MixingFamily.SKEW_T, MixingFamily.SKEW_SLASH):
            if "nu_mix" not in frozen:
                self._update_scalar(state, "nu_mix", rng)
            if "lambda0" not in frozen:
                self._update_scalar(state, "lambda0", rng)
        elif self.family == MixingFamily.SKEW_CONTAMINATED:
            for name in ("gamma_contam", "lambdac_contam"):
                if name not in frozen:
                    self._update_scalar(state, name, rng)
        state.iteration += 1
        return state

    def adapt(self, state: ChainState) -> ChainState:
        """Robbins-Monro scale adaptation; a no-op once burn-in has ended."""
        if state.iteration >= self.cfg.burn_in:
            return state
        gamma = (state.iteration + 1.0) ** (-self.cfg.adapt_decay)
        for name, prob in state.last_accept.items():
            target = (
                self.cfg.target_accept_block
                if name in ("beta", "b")
                else self.cfg.target_accept_scalar
            )
            scale = state.step_scales[name]
            if np.isscalar(prob):
                state.step_scales[name] = float(
                    scale * math.exp(gamma * (prob - target))
                )
            else:
                state.step_scales[name] = scale * np.exp(gamma * (prob - target))
        return state

    # -- full run --------------------------------------------------------------

    def trace_names(self) -> list:
        x_names = self.data[0].x_names or tuple(
            f"x{j}" for j in range(self.p)
        )
        names = [f"beta_{nm}" for nm in x_names]
        names += [
            "beta0", "nu1", "nu2", "sigma2_e", "sigma2_t", "sigma2_cov",
            "omega1", "omega2", "delta1", "delta2", "lambda1", "lambda2",
        ]
        if self.family == MixingFamily.SKEW_T or self.family == MixingFamily.SKEW_SLASH:
            names += ["nu_mix", "lambda0"]
        elif self.family == MixingFamily.SKEW_CONTAMINATED:
            names += ["gamma_contam", "lambdac_contam"]
        names.append("log_post")
        return names

    def _trace_row(self, state: ChainState) -> list:
        theta = state.theta
        delta = delta_from_lambda(theta.lam, theta.d_matrix())
        row = list(theta.beta)
        row += [
            theta.beta0, theta.nu_event[0], theta.nu_event[1], theta.sigma2_e,
            theta.sigma2_t, theta.sigma2_cov, theta.omega1, theta.omega2,
            delta[0], delta[1], theta.lam[0], theta.lam[1],
        ]
        if self.family in (MixingFamily.SKEW_T, MixingFamily.SKEW_SLASH):
            row += [theta.mixing.nu, state.hyper.lambda0]
        elif self.family == MixingFamily.SKEW_CONTAMINATED:
            row += [theta.mixing.contam_weight, theta.mixing.contam_scale]
        row.append(state.log_posterior())
        return row

    def run(self, theta_hint: JointParams | None = None) -> RunResult:
        cfg = self.cfg
        names = self.trace_names()
        n_kept = (cfg.iterations + cfg.thin - 1) // cfg.thin
        traces = np.zeros((cfg.n_chains, n_kept, len(names)))
        accept_tot: dict = {}
        for c in range(cfg.n_chains):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7919, c]))
            state = self.init_chain(c, theta_hint=theta_hint)
            kept = 0
            for it in range(cfg.burn_in + cfg.iterations):
                self.step(state, rng)
                if state.iteration <= cfg.burn_in:
                    self.adapt(state)
                else:
                    post = state.iteration - cfg.burn_in - 1
                    if post % cfg.thin == 0 and kept < n_kept:
                        traces[c, kept] = self._trace_row(state)
                        kept += 1
            for name, total in state.accept_sums.items():
                accept_tot.setdefault(name, []).append(
                    total / max(state.accept_counts[name], 1)
                )
        trace_dict = {nm: traces[:, :, j] for j, nm in enumerate(names)}
        summary = diagnostics.summarize(trace_dict)
        accept_rates = {k: float(np.mean(v)) for k, v in accept_tot.items()}
        return RunResult(
            traces=trace_dict, summary=summary, accept_rates=accept_rates,
            config=cfg, param_names=names,
        )


# -- module-level operation surface ------------------------------------------


def init_chain(data, cfg: McmcConfig, chain_index: int,
               prior_spec: PriorSpec | None = None,
               family: MixingFamily = MixingFamily.SKEW_NORMAL,
               mode: RandomEffectsMode = RandomEffectsMode.AUGMENTED,
               event_skew: EventSkew = EventSkew.HIERARCHICAL,
               theta_hint: JointParams | None = None) -> ChainState:
    sampler = Sampler(data, prior_spec or PriorSpec(), cfg, family, mode, event_skew)
    return sampler.init_chain(chain_index, theta_hint=theta_hint)


def run(data, prior_spec: PriorSpec, cfg: McmcConfig,
        family: MixingFamily = MixingFamily.SKEW_NORMAL,
        mode: RandomEffectsMode = RandomEffectsMode.AUGMENTED,
        event_skew: EventSkew = EventSkew.HIERARCHICAL,
        theta_hint: JointParams | None = None) -> RunResult:
    return Sampler(data, prior_spec, cfg, family, mode, event_skew).run(
        theta_hint=theta_hint
    )
