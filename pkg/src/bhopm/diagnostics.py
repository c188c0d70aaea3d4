"""Convergence and model-quality diagnostics.

Quantities that are undefined for the given input (zero variance,
too few draws) are returned as ``nan`` rather than a misleading number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

DEFAULT_RHAT_THRESHOLD = 1.1


class DiagnosticsInputError(ValueError):
    pass


def _as_chains(chains) -> np.ndarray:
    x = np.asarray(chains, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise DiagnosticsInputError("expected a (chains, draws) array")
    return x


def _split(x: np.ndarray) -> np.ndarray:
    half = x.shape[1] // 2
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def split_rhat(chains) -> float:
    """Split potential scale reduction factor for one parameter.

    Each of the ``M`` chains is cut into two halves (the middle draw is
    dropped for odd lengths) and the classic between/within variance ratio
    is computed over the ``2M`` sequences.

    Returns ``nan`` when fewer than 4 draws per chain are available or the
    within-sequence variance is zero.
    """
    x = _as_chains(chains)
    if x.shape[1] < 4:
        return math.nan
    seqs = _split(x)
    n = seqs.shape[1]
    W = float(np.mean(np.var(seqs, axis=1, ddof=1)))
    if not W > 0.0 or not math.isfinite(W):
        return math.nan
    B = n * float(np.var(np.mean(seqs, axis=1), ddof=1))
    var_plus = (n - 1) / n * W + B / n
    return math.sqrt(var_plus / W)


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row, via FFT."""
    n = x.shape[-1]
    size = 1 << (2 * n - 1).bit_length()
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, n=size)
    ac = np.fft.irfft(f * np.conj(f), n=size)[..., :n]
    return ac / n


def ess(chains) -> float:
    """Bulk effective sample size (multi-chain, Geyer initial monotone sequence)."""
    x = _as_chains(chains)
    M, S = x.shape
    if S < 2:
        return math.nan
    acov = _autocov(x)
    chain_var = acov[:, 0] * S / (S - 1.0)
    W = float(np.mean(chain_var))
    if not W > 0.0:
        return math.nan
    var_plus = W * (S - 1.0) / S
    if M > 1:
        var_plus += float(np.var(x.mean(axis=1), ddof=1))
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum autocorrelation pairs while positive, enforcing monotone decrease
    tau = -1.0
    prev = math.inf
    t = 0
    while t + 1 < S:
        pair = rho[t] + rho[t + 1]
        if pair < 0.0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
        t += 2
    tau = max(tau, 1.0 / math.log10(M * S) if M * S > 1 else 1.0)
    return float(min(M * S / tau, M * S))


@dataclass(frozen=True)
class RhatReport:
    rhat: dict[str, float]
    logp_rhat: float
    threshold: float
    worst: list[tuple[str, float]]

    @property
    def max_rhat(self) -> float:
        vals = [v for v in self.rhat.values() if not math.isnan(v)]
        return max(vals) if vals else math.nan

    @property
    def converged(self) -> bool:
        return not any(v >= self.threshold for v in self.rhat.values() if not math.isnan(v))

    def to_dict(self) -> dict:
        clean = lambda v: None if math.isnan(v) else v  # noqa: E731
        return {"threshold": self.threshold, "max_rhat": clean(self.max_rhat),
                "converged": self.converged, "logp_rhat": clean(self.logp_rhat),
                "worst": [[k, clean(v)] for k, v in self.worst],
                "rhat": {k: clean(v) for k, v in self.rhat.items()}}


def rhat_report(posterior, threshold: float = DEFAULT_RHAT_THRESHOLD, n_worst: int = 10
                ) -> RhatReport:
    """Split R-hat for every constrained parameter plus the log-posterior."""
    names = posterior.space.constrained_names()
    X = posterior.constrained_matrix().reshape(posterior.n_chains, posterior.n_samples, -1)
    values = {n: split_rhat(X[:, :, k]) for k, n in enumerate(names)}
    ranked = sorted(((k, v) for k, v in values.items() if not math.isnan(v)),
                    key=lambda kv: -kv[1])
    return RhatReport(values, split_rhat(posterior.logp_by_chain()), threshold, ranked[:n_worst])


def ess_report(posterior) -> dict[str, float]:
    names = posterior.space.constrained_names()
    X = posterior.constrained_matrix().reshape(posterior.n_chains, posterior.n_samples, -1)
    return {n: ess(X[:, :, k]) for k, n in enumerate(names)}


@dataclass(frozen=True)
class WaicReport:
    waic: float
    lppd: float
    p_waic: float

    def to_dict(self) -> dict:
        return {"waic": self.waic, "lppd": self.lppd, "p_waic": self.p_waic}


def waic(loglik) -> WaicReport:
    """WAIC from an ``(S draws, N observations)`` pointwise log-likelihood matrix."""
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2:
        raise DiagnosticsInputError("loglik must be a 2-D (draws, observations) array")
    S = ll.shape[0]
    if S < 2:
        raise DiagnosticsInputError("need at least 2 draws")
    if not np.all(np.isfinite(ll)):
        raise DiagnosticsInputError("loglik contains non-finite entries")
    lppd = float(np.sum(logsumexp(ll, axis=0) - math.log(S)))
    p_waic = float(np.sum(np.var(ll, axis=0, ddof=1)))
    return WaicReport(-2.0 * (lppd - p_waic), lppd, p_waic)


def spearman(x, y) -> float:
    """Rank correlation with average ranks for ties; ``nan`` if a side is constant."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DiagnosticsInputError("x and y must be 1-D and of equal length")
    if len(x) < 2:
        raise DiagnosticsInputError("need at least two pairs")
    rx = rankdata(x) - (len(x) + 1) / 2.0
    ry = rankdata(y) - (len(y) + 1) / 2.0
    den = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if den == 0.0:
        return math.nan
    return float(np.clip(float(rx @ ry) / den, -1.0, 1.0))


@dataclass(frozen=True)
class ConfusionReport:
    matrix: np.ndarray  # rows: actual grade, columns: predicted grade
    exact_rate: float
    within_one_rate: float

    def to_dict(self) -> dict:
        return {"matrix": self.matrix.tolist(), "exact_rate": self.exact_rate,
                "within_one_rate": self.within_one_rate, "n": int(self.matrix.sum())}


def confusion_matrix(predicted, actual, K: int) -> ConfusionReport:
    p = np.asarray(predicted, dtype=np.int64)
    a = np.asarray(actual, dtype=np.int64)
    if p.shape != a.shape:
        raise DiagnosticsInputError("predicted and actual differ in length")
    for arr in (p, a):
        if arr.size and (arr.min() < 1 or arr.max() > K):
            raise DiagnosticsInputError(f"grades must lie in 1..{K}")
    mat = np.zeros((K, K), dtype=np.int64)
    np.add.at(mat, (a - 1, p - 1), 1)
    n = len(a)
    if n == 0:
        return ConfusionReport(mat, math.nan, math.nan)
    return ConfusionReport(mat, float(np.trace(mat)) / n,
                           float(np.mean(np.abs(p - a) <= 1)))
