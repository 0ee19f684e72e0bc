"""Synthetic data generation for the simulation study and fixtures.

Subjects get a random number of equally spaced follow-up times on [0, 1], a
normal covariate, skewed random effects centered to mean zero, and a (log)
event time whose location carries both the random-effect loadings and the
structural term tying it to the longitudinal residuals.  Event times come
from either a heavy-tailed generalized-extreme-value law (Frechet branch) or
a normal, censored by an exponential cut drawn on the same scale as the
comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import linalg, sni
from .errors import InadmissibleParams
from .model import JointParams, SubjectData, delta_from_lambda

EVENT_LAW_GEV = "gev"
EVENT_LAW_NORMAL = "normal"


def study_truth_params(mixing: sni.MixingSpec | None = None) -> JointParams:
    """Generating values used throughout the simulation study."""
    return JointParams(
        beta=np.array([0.9, 1.0]),
        beta0=1.0,
        sigma2_e=0.5,
        sigma2_t=0.99,
        sigma2_cov=0.3,
        omega1=1.0,
        omega2=0.5,
        lam=np.array([1.1, 1.1]),
        nu_event=np.array([0.8, 0.9]),
        mixing=mixing or sni.MixingSpec.skew_normal(),
    )


@dataclass(frozen=True)
class SimulationConfig:
    n_subjects: int = 200
    obs_range: tuple[int, int] = (4, 10)
    covariate_mean: float = 3.0
    covariate_sd: float = 0.5
    truth: JointParams = field(default_factory=study_truth_params)
    event_law: str = EVENT_LAW_GEV
    gev_shape: float = 0.8
    censor_mean: float = 0.5
    outlier_fraction: float = 0.0
    outlier_magnitude: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1:
            raise ValueError("need at least one subject")
        if not 0.0 <= self.outlier_fraction < 1.0:
            raise ValueError("outlier fraction must lie in [0, 1)")
        if not self.censor_mean > 0:
            raise ValueError("censoring mean must be positive")
        if self.event_law not in (EVENT_LAW_GEV, EVENT_LAW_NORMAL):
            raise ValueError(f"unknown event law {self.event_law!r}")


def sample_random_effects(truth: JointParams, rng: np.random.Generator, size=None,
                          u=None):
    """Mean-zero skewed random effects; optionally at given mixing draws."""
    n = 1 if size is None else int(size)
    d = truth.d_matrix()
    delta = delta_from_lambda(truth.lam, d)
    comp_root = linalg.sym_sqrt(d - np.outer(delta, delta))
    if u is None:
        u = np.asarray(sni.mixing_sample(truth.mixing, rng, size=n), dtype=float)
    else:
        u = np.broadcast_to(np.asarray(u, dtype=float), (n,))
    z0 = np.abs(rng.standard_normal(n))
    z1 = rng.standard_normal((n, 2))
    w = np.outer(z0, delta) + z1 @ comp_root.T
    b = truth.centering() * delta + w / np.sqrt(u)[:, None]
    return b[0] if size is None else b


def gev_sample(mu, sigma, xi: float, rng: np.random.Generator, size=None):
    """Inverse-CDF draw from the generalized extreme value distribution."""
    if np.any(np.asarray(sigma) <= 0):
        raise ValueError("GEV scale must be positive")
    uni = rng.random(size=size)
    if xi == 0.0:
        return mu - sigma * np.log(-np.log(uni))
    return mu + sigma * ((-np.log(uni)) ** (-xi) - 1.0) / xi


def gev_cdf(x, mu, sigma, xi: float):
    """Analytic CDF exp(-t(x)) matching the sampler (for oracle checks)."""
    z = (np.asarray(x, dtype=float) - mu) / sigma
    if xi == 0.0:
        return np.exp(-np.exp(-z))
    inner = 1.0 + xi * z
    out = np.where(inner > 0, np.exp(-np.maximum(inner, 1e-300) ** (-1.0 / xi)), 0.0)
    return np.where(inner > 0, out, 1.0 if xi < 0 else 0.0)


def event_location_scale(s: SubjectData, truth: JointParams, b) -> tuple[float, float]:
    """Location and conditional variance of log T in the generator.

    The structural term divides each longitudinal residual by that
    observation's marginal variance (the design used to simulate the study),
    which is the diagonal surrogate of the full psi-inverse weighting the
    fitted model uses.
    """
    t = s.times
    w = truth.sigma2_e + truth.omega1 + 2.0 * t * truth.omega2 + t * t * truth.omega1
    resid = s.y - s.X @ truth.beta - s.Z1 @ np.asarray(b, dtype=float)
    mu = (
        truth.beta0
        + float(truth.nu_event @ np.asarray(b, dtype=float))
        + truth.sigma2_cov * float(np.sum(resid / w))
    )
    s221 = truth.sigma2_t - truth.sigma2_cov**2 * float(np.sum(1.0 / w))
    if not s221 > 0:
        raise InadmissibleParams("generator conditional event variance not positive")
    return mu, s221


def gen_event(s: SubjectData, cfg: SimulationConfig, b, rng: np.random.Generator,
              u: float = 1.0) -> tuple[float, bool]:
    """Draw (possibly censored) log event time for an assembled subject."""
    mu, s221 = event_location_scale(s, cfg.truth, b)
    sd = math.sqrt(s221 / u)
    if cfg.event_law == EVENT_LAW_GEV:
        log_t = float(gev_sample(mu, sd, cfg.gev_shape, rng))
    else:
        log_t = float(rng.normal(mu, sd))
    censor = float(rng.exponential(cfg.censor_mean))
    observed = log_t <= censor
    return (log_t if observed else censor), observed


def gen_subject(cfg: SimulationConfig, rng: np.random.Generator,
                sid: str = "s0") -> SubjectData:
    """One subject: longitudinal block plus event observation."""
    truth = cfg.truth
    lo, hi = cfg.obs_range
    n = int(rng.integers(lo, hi + 1))
    t = np.linspace(0.0, 1.0, n)
    x = rng.normal(cfg.covariate_mean, cfg.covariate_sd, size=n)
    X = np.column_stack([np.ones(n), x])
    Z1 = np.column_stack([np.ones(n), t])

    u = float(sni.mixing_sample(truth.mixing, rng))
    b = sample_random_effects(truth, rng, u=u)
    eps = rng.normal(0.0, math.sqrt(truth.sigma2_e / u), size=n)
    y = X @ truth.beta + Z1 @ b + eps

    partial = SubjectData(
        id=sid, times=t, y=y, X=X, Z1=Z1, log_event_time=0.0, event_observed=True,
        x_names=("intercept", "x"),
    )
    log_t, observed = gen_event(partial, cfg, b, rng, u=u)
    return replace(partial, log_event_time=log_t, event_observed=observed)


def generate_dataset(cfg: SimulationConfig) -> list[SubjectData]:
    """Full replicate, deterministic in cfg.seed; outliers injected last."""
    rng = np.random.default_rng(cfg.seed)
    data = [gen_subject(cfg, rng, sid=f"s{i:04d}") for i in range(cfg.n_subjects)]
    if cfg.outlier_fraction > 0:
        data, _ = inject_outliers(
            data, cfg.outlier_fraction, cfg.outlier_magnitude, rng
        )
    return data


def inject_outliers(data: list[SubjectData], fraction: float, magnitude: float,
                    rng: np.random.Generator, column: int = 1):
    """Shift a random subset of covariate entries by magnitude * sd(x).

    Returns the modified copy and the chosen (subject, observation) index
    pairs so that contaminated entries stay auditable.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("outlier fraction must lie in [0, 1)")
    if fraction == 0.0:
        return list(data), []
    flat = [(i, j) for i, s in enumerate(data) for j in range(s.n_obs)]
    total = len(flat)
    k = math.ceil(fraction * total)
    chosen = rng.choice(total, size=k, replace=False)
    all_x = np.concatenate([s.X[:, column] for s in data])
    shift = magnitude * float(all_x.std())
    signs = np.where(rng.random(k) < 0.5, -1.0, 1.0)

    new_x = [s.X.copy() for s in data]
    index_set = []
    for pick, sign in zip(chosen, signs):
        i, j = flat[pick]
        new_x[i][j, column] += sign * shift
        index_set.append((i, j))
    out = [replace(s, X=new_x[i]) for i, s in enumerate(data)]
    return out, sorted(index_set)


# ---------------------------------------------------------------------------
# AIDS-shaped synthetic fixture
# ---------------------------------------------------------------------------

AIDS_VISIT_MONTHS = (0.0, 2.0, 6.0, 12.0, 18.0)


def make_aids_like_tables(seed: int = 4673, n_subjects: int = 467):
    """Synthetic dataset shaped like the ddI/ddC CD4 trial.

    Returns (longitudinal_rows, survival_rows) as lists of dicts matching the
    CSV schemas: responses on the cell-count scale (so the square-root
    transform applies at load time), event times on the natural scale.
    """
    rng = np.random.default_rng(seed)
    beta = {
        "intercept": 7.0, "obstime": -0.16, "drug": 0.2, "gender": -0.02,
        "prevOI": -1.2, "AZT": -0.1,
    }
    long_rows = []
    surv_rows = []
    for i in range(n_subjects):
        sid = f"p{i+1:04d}"
        drug = float(rng.random() < 0.49)
        gender = 1.0 if rng.random() < 0.9 else -1.0
        prev = float(rng.random() < 0.6)
        azt = 1.0 if rng.random() < 0.45 else -1.0
        b1 = rng.normal(0.0, 1.6)
        b2 = rng.normal(-0.02, 0.05)
        n_visits = int(rng.choice([2, 3, 4, 5], p=[0.15, 0.2, 0.25, 0.4]))
        for t in AIDS_VISIT_MONTHS[:n_visits]:
            sqrt_cd4 = (
                beta["intercept"] + beta["obstime"] * t + beta["drug"] * drug
                + beta["gender"] * gender + beta["prevOI"] * prev + beta["AZT"] * azt
                + b1 + b2 * t + rng.normal(0.0, 0.45)
            )
            sqrt_cd4 = max(sqrt_cd4, 0.2)
            long_rows.append(
                {
                    "subject_id": sid,
                    "obstime": t,
                    "response": round(sqrt_cd4**2, 4),
                    "drug": drug,
                    "gender": gender,
                    "prevOI": prev,
                    "AZT": azt,
                }
            )
        log_t = rng.normal(2.7 + 0.08 * b1, 0.8)
        censor = math.log(np.clip(rng.exponential(22.0), 1e-3, None))
        observed = log_t <= censor
        surv_rows.append(
            {
                "subject_id": sid,
                "time": round(math.exp(min(log_t, censor)), 4),
                "event": int(observed),
            }
        )
    return long_rows, surv_rows
