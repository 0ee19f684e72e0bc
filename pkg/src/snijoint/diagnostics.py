"""Convergence diagnostics and posterior summaries.

R-hat is the split-chain potential scale reduction factor (each chain halved
before the between/within comparison, floored at 1); the effective sample
size combines split-chain autocorrelations with Geyer's initial-positive-
sequence truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTrace


def _as_chains(traces) -> np.ndarray:
    arr = np.asarray(traces, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("traces must be (n_chains, n_samples)")
    return arr


def _split(chains: np.ndarray) -> np.ndarray:
    n = chains.shape[1] // 2
    return np.concatenate([chains[:, :n], chains[:, n : 2 * n]], axis=0)


def rhat(traces) -> float:
    """Split-chain potential scale reduction factor."""
    chains = _as_chains(traces)
    c, n = chains.shape
    if c < 2 or n < 4:
        raise ValueError("rhat needs at least 2 chains of at least 4 samples")
    if np.any(np.var(chains, axis=1) == 0.0):
        raise DegenerateTrace("a chain has zero variance")
    halves = _split(chains)
    m, hn = halves.shape
    means = halves.mean(axis=1)
    within = float(np.mean(np.var(halves, axis=1, ddof=1)))
    between = hn * float(np.var(means, ddof=1))
    var_hat = (hn - 1) / hn * within + between / hn
    return max(math.sqrt(var_hat / within), 1.0)


def autocorr(trace, max_lag: int) -> np.ndarray:
    """Sample autocorrelation function at lags 0..max_lag (lag 0 is exactly 1)."""
    x = np.asarray(trace, dtype=float)
    if x.ndim != 1:
        raise ValueError("autocorr expects a single chain")
    n = x.size
    if n <= max_lag:
        raise ValueError("trace shorter than the requested number of lags")
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        raise DegenerateTrace("constant trace has no autocorrelation")
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    for k in range(1, max_lag + 1):
        out[k] = float(centered[:-k] @ centered[k:]) / denom
    return out


def ess(traces) -> float:
    """Effective sample size via split chains and Geyer's initial positive
    sequence: tau = -1 + 2 * sum of positive, monotone lag-pair sums."""
    chains = _split(_as_chains(traces))
    m, n = chains.shape
    if n < 4:
        raise ValueError("ess needs at least 4 samples per chain")
    variances = np.var(chains, axis=1, ddof=1)
    if np.any(variances == 0.0):
        raise DegenerateTrace("a chain has zero variance")
    within = float(np.mean(variances))
    means = chains.mean(axis=1)
    var_hat = (n - 1) / n * within + float(np.var(means, ddof=1))

    acov = _acov_all(chains).mean(axis=0)
    rho = 1.0 - (within - acov) / var_hat
    tau = -1.0
    prev = math.inf
    for t in range(0, n - 1, 2):
        pair = float(rho[t] + rho[t + 1])
        if pair <= 0.0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    return m * n / max(tau, 1e-3)


def _acov_all(chains: np.ndarray) -> np.ndarray:
    """Per-chain autocovariances at all lags via FFT, normalized by n - 1."""
    m, n = chains.shape
    centered = chains - chains.mean(axis=1, keepdims=True)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(centered, size, axis=1)
    acov = np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n]
    return acov / (n - 1)


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    sd: float
    lower: float
    upper: float
    rhat: float
    ess: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"{self.name}: credible bounds out of order")


@dataclass(frozen=True)
class PosteriorSummary:
    rows: tuple[ParamSummary, ...]

    def __getitem__(self, name: str) -> ParamSummary:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def names(self) -> list[str]:
        return [row.name for row in self.rows]


def summarize(traces_by_param: dict[str, np.ndarray]) -> PosteriorSummary:
    """Pooled posterior summaries with equal-tailed 95% intervals."""
    rows = []
    for name, chains in traces_by_param.items():
        arr = _as_chains(chains)
        pooled = arr.reshape(-1)
        lo, hi = np.quantile(pooled, [0.025, 0.975])
        try:
            r = rhat(arr)
        except DegenerateTrace:
            r = math.inf
        except ValueError:
            r = math.nan  # too few chains/samples to judge
        try:
            e = ess(arr)
        except DegenerateTrace:
            e = 0.0
        except ValueError:
            e = math.nan
        rows.append(
            ParamSummary(
                name=name,
                mean=float(pooled.mean()),
                sd=float(pooled.std(ddof=1)) if pooled.size > 1 else math.nan,
                lower=float(lo),
                upper=float(hi),
                rhat=float(r),
                ess=float(e),
            )
        )
    return PosteriorSummary(rows=tuple(rows))
