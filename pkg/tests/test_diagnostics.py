import math

import numpy as np
import pytest

from snijoint.diagnostics import (
    ParamSummary,
    autocorr,
    ess,
    rhat,
    summarize,
)
from snijoint.errors import DegenerateTrace


def ar1(rng, n, phi, sd=1.0):
    noise = rng.normal(scale=sd, size=n)
    out = np.empty(n)
    out[0] = noise[0] / math.sqrt(1 - phi * phi)
    for i in range(1, n):
        out[i] = phi * out[i - 1] + noise[i]
    return out


class TestRhat:
    def test_identical_constant_chains_degenerate(self):
        with pytest.raises(DegenerateTrace):
            rhat(np.ones((3, 100)))

    def test_iid_chains_near_one(self, rng):
        chains = rng.normal(size=(3, 10_000))
        r = rhat(chains)
        assert 1.0 <= r <= 1.01

    def test_offset_chains_large(self, rng):
        a = rng.normal(size=10_000)
        b = rng.normal(size=10_000) + 10.0
        assert rhat(np.vstack([a, b])) > 1.5

    def test_floor_at_one(self, rng):
        chains = rng.normal(size=(4, 64))
        assert rhat(chains) >= 1.0

    def test_preconditions(self, rng):
        with pytest.raises(ValueError):
            rhat(rng.normal(size=(1, 100)))
        with pytest.raises(ValueError):
            rhat(rng.normal(size=(2, 3)))


class TestAutocorr:
    def test_white_noise_mostly_inside_band(self, rng):
        n = 20_000
        trace = rng.normal(size=n)
        acf = autocorr(trace, 50)
        assert acf[0] == 1.0
        frac_inside = np.mean(np.abs(acf[1:]) < 3.0 / math.sqrt(n))
        assert frac_inside > 0.95

    def test_ar1_first_lag(self, rng):
        trace = ar1(rng, 100_000, 0.9)
        acf = autocorr(trace, 5)
        assert abs(acf[1] - 0.9) < 0.05

    def test_constant_trace_degenerate(self):
        with pytest.raises(DegenerateTrace):
            autocorr(np.full(100, 2.5), 10)

    def test_max_lag_bound(self, rng):
        with pytest.raises(ValueError):
            autocorr(rng.normal(size=10), 10)


class TestEss:
    def test_iid_close_to_sample_count(self, rng):
        chains = rng.normal(size=(4, 5_000))
        e = ess(chains)
        assert 0.8 * 20_000 <= e <= 1.25 * 20_000

    def test_ar1_matches_theory(self, rng):
        phi = 0.6
        chains = np.vstack([ar1(rng, 20_000, phi) for _ in range(3)])
        want = chains.size * (1 - phi) / (1 + phi)
        assert abs(ess(chains) - want) / want < 0.25

    def test_degenerate(self):
        with pytest.raises(DegenerateTrace):
            ess(np.ones((2, 100)))


class TestSummarize:
    def test_equal_tailed_interval_and_moments(self, rng):
        chains = rng.normal(loc=2.0, scale=3.0, size=(3, 20_000))
        summ = summarize({"x": chains})
        row = summ["x"]
        assert row.mean == pytest.approx(2.0, abs=0.1)
        assert row.sd == pytest.approx(3.0, abs=0.1)
        assert row.lower == pytest.approx(2.0 - 1.96 * 3.0, abs=0.15)
        assert row.upper == pytest.approx(2.0 + 1.96 * 3.0, abs=0.15)
        assert row.lower <= row.upper
        assert row.rhat < 1.01

    def test_bounds_ordering_enforced(self):
        with pytest.raises(ValueError):
            ParamSummary("bad", 0.0, 1.0, 2.0, 1.0, 1.0, 10.0)

    def test_names_round_trip(self, rng):
        chains = rng.normal(size=(2, 500))
        summ = summarize({"a": chains, "b": chains + 1})
        assert summ.names() == ["a", "b"]
        with pytest.raises(KeyError):
            summ["missing"]
