import numpy as np
import pytest

from snijoint import model
from snijoint.evaluator import Evaluator, pack
from snijoint.model import EventSkew, LatentState, RandomEffectsMode
from snijoint.sni import MixingSpec

from conftest import make_subject, study_truth


def make_dataset(rng, m=12, theta=None, censor_frac=0.4):
    theta = theta or study_truth()
    data = []
    for i in range(m):
        n = int(rng.integers(1, 9))
        data.append(
            make_subject(
                rng, n=n, theta=theta, sid=f"s{i}", censored=rng.random() < censor_frac
            )
        )
    return data


def latent_for(rng, m, mixing):
    b = rng.normal(size=(m, 2)) * 0.6
    if mixing.family.value == "sn":
        u = np.ones(m)
    elif mixing.family.value == "st":
        u = rng.gamma(mixing.nu / 2, 2 / mixing.nu, size=m)
    elif mixing.family.value == "ssl":
        u = rng.beta(mixing.nu, 1.0, size=m)
    else:
        u = np.where(rng.random(m) < mixing.contam_weight, mixing.contam_scale, 1.0)
    t_aug = np.abs(rng.normal(size=m))
    return LatentState(b=b, u=u, t_aug=t_aug)


MIXINGS = [
    MixingSpec.skew_normal(),
    MixingSpec.skew_t(4.0),
    MixingSpec.skew_slash(2.0),
    MixingSpec.skew_contaminated(0.3, 0.25),
]


@pytest.mark.parametrize("mixing", MIXINGS, ids=["sn", "st", "ssl", "scn"])
@pytest.mark.parametrize("mode", list(RandomEffectsMode), ids=["lit", "aug"])
@pytest.mark.parametrize("skew", list(EventSkew), ids=["corr", "hier"])
def test_total_matches_per_subject_reference(mixing, mode, skew, rng):
    theta = study_truth(mixing=mixing)
    data = make_dataset(rng, m=10, theta=theta)
    latent = latent_for(rng, 10, mixing)
    ev = Evaluator(data, mode=mode, event_skew=skew)
    got = ev.total(theta, latent)
    want = model.complete_data_loglik(data, theta, latent, mode, skew)
    assert got == pytest.approx(want, abs=1e-9)


def test_per_term_agreement_with_reference(rng):
    theta = study_truth()
    data = make_dataset(rng, m=8, theta=theta)
    latent = latent_for(rng, 8, theta.mixing)
    ev = Evaluator(data, mode=RandomEffectsMode.AUGMENTED)
    ll_long = ev.ll_long(theta, latent.b, latent.u)
    ll_event = ev.ll_event(theta, latent.b, latent.u)
    ll_re = ev.ll_re(theta, latent.b, latent.u, latent.t_aug)
    for i, s in enumerate(data):
        u = float(latent.u[i])
        assert ll_long[i] == pytest.approx(
            model.loglik_longitudinal(s, theta, latent.b[i], u), abs=1e-10
        )
        assert ll_event[i] == pytest.approx(
            model.loglik_event(s, theta, latent.b[i], u), abs=1e-10
        )
        assert ll_re[i] == pytest.approx(
            model.loglik_random_effects(
                latent.b[i], theta, u, RandomEffectsMode.AUGMENTED,
                float(latent.t_aug[i]),
            ),
            abs=1e-10,
        )


def test_geometry_cache_invalidation(rng):
    theta = study_truth()
    data = make_dataset(rng, m=6, theta=theta)
    latent = latent_for(rng, 6, theta.mixing)
    ev = Evaluator(data)
    base = ev.total(theta, latent)
    # same theta -> cached geometry must reproduce bit-identically
    assert ev.total(theta, latent) == base
    bumped = study_truth(omega1=1.3)
    moved = ev.total(bumped, latent)
    assert moved != base
    # returning to the original theta rebuilds the original geometry
    assert ev.total(theta, latent) == base


def test_resid_cache_tracks_beta(rng):
    theta = study_truth()
    data = make_dataset(rng, m=5, theta=theta)
    latent = latent_for(rng, 5, theta.mixing)
    ev = Evaluator(data)
    base = ev.total(theta, latent)
    shifted = study_truth(beta=np.array([1.4, 0.2]))
    assert ev.total(shifted, latent) != base
    assert ev.total(theta, latent) == base


def test_parts_compose_to_total(rng):
    theta = study_truth()
    data = make_dataset(rng, m=7, theta=theta)
    latent = latent_for(rng, 7, theta.mixing)
    ev = Evaluator(data)
    full = ev.terms(theta, latent.b, latent.u, latent.t_aug)
    split = (
        ev.terms(theta, latent.b, latent.u, latent.t_aug, parts=("long",))
        + ev.terms(theta, latent.b, latent.u, latent.t_aug, parts=("event",))
        + ev.terms(theta, latent.b, latent.u, latent.t_aug, parts=("re", "mix"))
    )
    assert np.allclose(full, split, atol=0, rtol=0)


def test_pack_preserves_subject_order(rng):
    data = make_dataset(rng, m=9)
    pd = pack(data)
    assert pd.ids == [s.id for s in data]
    for i, s in enumerate(data):
        n = s.n_obs
        assert np.array_equal(pd.y[i, :n], s.y)
        assert np.all(pd.y[i, n:] == 0)
        assert np.array_equal(pd.X[i, :n], s.X)
    assert len(pd.grids) <= 8
