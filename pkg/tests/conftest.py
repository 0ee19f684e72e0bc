import numpy as np
import pytest

from snijoint.model import JointParams, SubjectData
from snijoint.sni import MixingSpec


def random_spd(rng, dim, scale=1.0):
    """Random SPD matrix with eigenvalues bounded away from zero."""
    a = rng.normal(size=(dim, dim))
    return scale * (a @ a.T + dim * np.eye(dim))


def study_truth(mixing=None, **overrides):
    """The simulation-study generating parameter values."""
    kw = dict(
        beta=np.array([0.9, 1.0]),
        beta0=1.0,
        sigma2_e=0.5,
        sigma2_t=0.99,
        sigma2_cov=0.3,
        omega1=1.0,
        omega2=0.5,
        lam=np.array([1.1, 1.1]),
        nu_event=np.array([0.8, 0.9]),
        mixing=mixing or MixingSpec.skew_normal(),
    )
    kw.update(overrides)
    return JointParams(**kw)


def make_subject(rng, n=5, theta=None, sid="s0", censored=False):
    """Synthetic subject consistent with the study design shapes."""
    theta = theta or study_truth()
    t = np.linspace(0.0, 1.0, n)
    x = rng.normal(3.0, 0.5, size=n)
    X = np.column_stack([np.ones(n), x])
    Z1 = np.column_stack([np.ones(n), t])
    b = rng.normal(size=2) * 0.7
    y = X @ theta.beta + Z1 @ b + rng.normal(size=n) * np.sqrt(theta.sigma2_e)
    log_t = float(theta.beta0 + theta.nu_event @ b + rng.normal() * 0.8)
    return SubjectData(
        id=sid,
        times=t,
        y=y,
        X=X,
        Z1=Z1,
        log_event_time=log_t,
        event_observed=not censored,
        x_names=("intercept", "x"),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
