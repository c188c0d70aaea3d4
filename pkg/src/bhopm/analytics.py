"""Posterior summaries, predictive grade distributions and what-if updates."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .model import ConstrainedParams, ParameterSpace, _log_interval, cell_probabilities

AVERAGE = "average"  # candidate token: the average candidate
POPULATION = "population"  # interviewer token: a new interviewer drawn from the priors

QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


class UnknownEntityError(KeyError):
    pass


class NotAvailableError(ValueError):
    pass


@dataclass(frozen=True)
class ParamSummary:
    name: str
    mean: float
    sd: float
    quantiles: dict[float, float]
    point_estimate: float
    mode_estimate: float
    bin_edges: np.ndarray
    counts: np.ndarray
    n_draws: int

    def to_dict(self) -> dict:
        return {"name": self.name, "mean": self.mean, "sd": self.sd,
                "quantiles": {f"{q:g}": v for q, v in self.quantiles.items()},
                "point_estimate": self.point_estimate, "mode_estimate": self.mode_estimate,
                "n_draws": self.n_draws}

    def histogram_rows(self) -> list[tuple[float, float, float]]:
        mass = self.counts / max(self.counts.sum(), 1)
        return [(float(a), float(b), float(w))
                for a, b, w in zip(self.bin_edges[:-1], self.bin_edges[1:], mass)]


@dataclass(frozen=True)
class NormalApprox:
    mean: float
    sd: float

    @classmethod
    def fit(cls, draws) -> "NormalApprox":
        """Maximum-likelihood normal fit (population standard deviation)."""
        x = np.asarray(draws, dtype=float)
        return cls(float(x.mean()), float(x.std()))


@dataclass(frozen=True)
class PredictiveResult:
    probs: np.ndarray
    method: str  # "full-posterior" or "point-estimate"

    @property
    def mode_grade(self) -> int:
        return int(np.argmax(self.probs)) + 1

    def to_dict(self) -> dict:
        return {"probs": self.probs.tolist(), "mode_grade": self.mode_grade,
                "method": self.method}


def histogram_mode(x, bins: int = 64) -> float:
    counts, edges = np.histogram(x, bins=bins)
    k = int(np.argmax(counts))
    return float(0.5 * (edges[k] + edges[k + 1]))


def point_estimate(x, method: str = "mean", bins: int = 64) -> float:
    """Sample-based point estimate: posterior ``"mean"`` or histogram ``"mode"``."""
    x = np.asarray(x, dtype=float)
    if method == "mean":
        return float(x.mean())
    if method == "mode":
        return histogram_mode(x, bins)
    raise ValueError(f"unknown point estimator {method!r}")


def summarize_values(x, name: str = "", method: str = "mean", bins: int = 30) -> ParamSummary:
    """Summary of pooled draws. Quantiles use numpy's linear interpolation rule."""
    x = np.asarray(x, dtype=float).ravel()
    qs = np.quantile(x, QUANTILES)
    counts, edges = np.histogram(x, bins=bins)
    mode = histogram_mode(x)
    if np.ptp(x) == 0.0:  # avoid round-off in the sums of identical draws
        mean, sd = float(x[0]), 0.0
    else:
        mean, sd = float(x.mean()), float(x.std(ddof=1))
    return ParamSummary(
        name=name, mean=mean, sd=sd,
        quantiles={q: float(v) for q, v in zip(QUANTILES, qs)},
        point_estimate=mean if method == "mean" else mode,
        mode_estimate=mode, bin_edges=edges, counts=counts, n_draws=x.size,
    )


def _column(posterior, selector: str) -> np.ndarray:
    if selector == "sigma_tot":
        return np.asarray(posterior.constrained().sigma_tot)
    names = posterior.space.constrained_names()
    try:
        k = names.index(selector)
    except ValueError:
        raise UnknownEntityError(f"unknown parameter {selector!r}") from None
    return posterior.constrained_matrix()[:, k]


def summarize_param(posterior, selector: str, method: str = "mean", bins: int = 30) -> ParamSummary:
    return summarize_values(_column(posterior, selector), selector, method, bins)


def point_estimates(posterior, method: str = "mean") -> ConstrainedParams:
    """Per-parameter point estimates assembled into one parameter set."""
    X = posterior.constrained_matrix()
    est = np.array([point_estimate(X[:, k], method) for k in range(X.shape[1])])
    cp = ConstrainedParams.from_flat(posterior.space, est)
    # keep thresholds ordered when the mode estimator is used
    cp.thresholds.sort(axis=-1)
    return cp


def average_candidate(posterior, method: str = "mean") -> float:
    """Mean over candidates of the candidate-potential point estimates."""
    alpha = posterior.constrained().alpha
    return float(np.mean([point_estimate(alpha[:, c], method) for c in range(alpha.shape[1])]))


def prob_above_threshold(posterior, candidate: int, threshold: float) -> float:
    alpha = posterior.constrained().alpha
    if not 0 <= candidate < alpha.shape[1]:
        raise UnknownEntityError(f"unknown candidate index {candidate}")
    return float(np.mean(alpha[:, candidate] > threshold))


def success_threshold(posterior, hired, method: str = "mean") -> tuple[float, float]:
    """Mean candidate point estimate among hired and among not-hired candidates.

    ``hired`` holds 1 / 0 per candidate, with -1 (or None) for unknown.
    """
    if hired is None:
        raise NotAvailableError("no hiring outcomes")
    h = np.array([-1 if v is None else int(v) for v in hired])
    alpha = posterior.constrained().alpha
    if len(h) < alpha.shape[1]:
        raise NotAvailableError("hiring outcomes do not cover every candidate")
    est = np.array([point_estimate(alpha[:, c], method) for c in range(alpha.shape[1])])
    h = h[:alpha.shape[1]]
    if not np.any(h == 1) or not np.any(h == 0):
        raise NotAvailableError("need at least one hired and one rejected candidate")
    return float(est[h == 1].mean()), float(est[h == 0].mean())


@dataclass(frozen=True)
class RoundBias:
    round: int
    candidate: ParamSummary | None
    interviewer: ParamSummary | None


def round_bias_summary(posterior, method: str = "mean") -> list[RoundBias]:
    """Per round, the draw-wise mean of candidate and interviewer round effects."""
    sp: ParameterSpace = posterior.space
    cp = posterior.constrained()
    out = []
    for r in range(sp.R):
        g_cols = [k for k, (_, rr) in enumerate(sp.gamma_pairs) if rr == r]
        d_cols = [k for k, (_, rr) in enumerate(sp.delta_pairs) if rr == r]
        cand = summarize_values(cp.gamma[:, g_cols].mean(axis=1), f"gamma_round[{r}]", method) \
            if g_cols else None
        intv = summarize_values(cp.delta[:, d_cols].mean(axis=1), f"delta_round[{r}]", method) \
            if d_cols else None
        out.append(RoundBias(r, cand, intv))
    return out


# ------------------------------------------------------------ prediction

def _check_round(sp: ParameterSpace, r: int) -> None:
    if not 0 <= r < sp.R:
        raise UnknownEntityError(f"unknown round index {r}")


def _check_interviewer(sp: ParameterSpace, i) -> None:
    if i is POPULATION or i == POPULATION:
        return
    if not isinstance(i, (int, np.integer)) or not 0 <= i < sp.I:
        raise UnknownEntityError(f"unknown interviewer {i!r}")


def _check_candidate(sp: ParameterSpace, c) -> None:
    if c is AVERAGE or c == AVERAGE:
        return
    if not isinstance(c, (int, np.integer)) or not 0 <= c < sp.C:
        raise UnknownEntityError(f"unknown candidate {c!r}")


def _latent_draws(cp: ConstrainedParams, sp: ParameterSpace, candidate, interviewer, r,
                  rng, alpha_ave: float, stochastic: bool):
    """Per-draw ``(alpha, gamma, beta, delta, cuts)`` for one query.

    With ``stochastic=False`` (point prediction) missing effects are zero.
    """
    S = np.shape(cp.mu0)
    gi, di = sp.gamma_index(), sp.delta_index()

    def pop(scale_name):
        if not stochastic:
            return np.zeros(S)
        return rng.standard_normal(S) * cp.scales[scale_name]

    if candidate == AVERAGE:
        alpha = np.full(S, alpha_ave)
        gamma = pop("sigma_gamma")
    else:
        alpha = cp.alpha[..., candidate]
        k = gi.get((int(candidate), r))
        gamma = pop("sigma_gamma") if k is None else cp.gamma[..., k]

    if interviewer == POPULATION:
        beta = pop("sigma_beta")
        delta = pop("sigma_delta")
        J = sp.n_interior
        if stochastic:
            interior = np.sort(rng.uniform(-1.0, 1.0, S + (J,)), axis=-1)
        else:
            interior = np.broadcast_to(np.sort(cp.thresholds[..., 1:-1].mean(axis=-2), axis=-1),
                                       S + (J,))
        cuts = np.concatenate([np.full(S + (1,), -1.0), interior, np.full(S + (1,), 1.0)], axis=-1)
    else:
        beta = cp.beta[..., interviewer]
        k = di.get((int(interviewer), r))
        delta = pop("sigma_delta") if k is None else cp.delta[..., k]
        cuts = cp.thresholds[..., interviewer, :]
    return alpha, gamma, beta, delta, cuts


def _simplex(cp, alpha, gamma, beta, delta, cuts) -> np.ndarray:
    m = cp.mu0 + alpha + gamma + beta + delta
    return cell_probabilities(m, cp.sigma_tot, cuts)


def predict_grade_full(posterior, candidate, interviewer, round: int, seed: int = 0,
                       alpha_ave: float | None = None) -> PredictiveResult:
    """Grade distribution averaged over posterior draws.

    ``candidate`` is an index or :data:`AVERAGE`; ``interviewer`` an index
    or :data:`POPULATION`. Round effects for (candidate, round) or
    (interviewer, round) pairs absent from the fit are drawn per draw from
    their hierarchical prior.
    """
    sp = posterior.space
    _check_candidate(sp, candidate)
    _check_interviewer(sp, interviewer)
    _check_round(sp, round)
    cp = posterior.constrained()
    if candidate == AVERAGE and alpha_ave is None:
        alpha_ave = average_candidate(posterior)
    rng = np.random.default_rng(seed)
    parts = _latent_draws(cp, sp, candidate, interviewer, round, rng, alpha_ave, True)
    probs = _simplex(cp, *parts).mean(axis=0)
    return PredictiveResult(probs / probs.sum(), "full-posterior")


def predict_grade_point(point: ConstrainedParams, space: ParameterSpace, candidate, interviewer,
                        round: int) -> PredictiveResult:
    """Grade distribution at a single parameter set (e.g. point estimates)."""
    _check_candidate(space, candidate)
    _check_interviewer(space, interviewer)
    _check_round(space, round)
    alpha_ave = float(np.mean(point.alpha))
    parts = _latent_draws(point, space, candidate, interviewer, round, None, alpha_ave, False)
    probs = _simplex(point, *parts)
    return PredictiveResult(probs, "point-estimate")


def predict_dataset(posterior, ds, method: str = "full", seed: int = 0) -> np.ndarray:
    """``(N, K)`` grade probabilities for every row of ``ds``.

    Rows whose candidate is unknown to the fit use the average candidate;
    rows whose interviewer is unknown use a population interviewer.
    """
    sp = posterior.space
    alpha_ave = average_candidate(posterior)
    point = point_estimates(posterior) if method == "point" else None
    out = np.empty((ds.N, sp.K))
    for n in range(ds.N):
        c = int(ds.candidate[n])
        i = int(ds.interviewer[n])
        c = c if c < sp.C else AVERAGE
        i = i if i < sp.I else POPULATION
        r = int(ds.round[n])
        if method == "full":
            out[n] = predict_grade_full(posterior, c, i, r, seed=seed + n, alpha_ave=alpha_ave).probs
        else:
            out[n] = predict_grade_point(point, sp, c, i, r).probs
    return out


# ------------------------------------------------------- empirical Bayes

@dataclass(frozen=True)
class PosteriorUpdate:
    """Candidate potential after one hypothetical grade."""

    candidate: int
    interviewer: int
    round: int
    grade: int
    prior: NormalApprox
    grid: np.ndarray
    prior_density: np.ndarray
    posterior_density: np.ndarray
    mean: float
    sd: float
    quantiles: dict[float, float] = field(default_factory=dict)

    @property
    def shift(self) -> float:
        return self.mean - self.prior.mean

    def to_dict(self) -> dict:
        return {"candidate": self.candidate, "interviewer": self.interviewer,
                "round": self.round, "grade": self.grade,
                "prior": {"mean": self.prior.mean, "sd": self.prior.sd},
                "posterior": {"mean": self.mean, "sd": self.sd,
                              "quantiles": {f"{q:g}": v for q, v in self.quantiles.items()}},
                "shift": self.shift}

    def density_rows(self) -> list[tuple[float, float, float]]:
        """Grid cells as (left, right, posterior mass)."""
        mid = 0.5 * (self.posterior_density[1:] + self.posterior_density[:-1])
        mass = mid * np.diff(self.grid)
        mass = mass / mass.sum()
        return [(float(a), float(b), float(w)) for a, b, w in zip(self.grid[:-1], self.grid[1:], mass)]


def _fit_effect(draws_known, scale_draws, rng, n=4000) -> NormalApprox:
    if draws_known is not None:
        return NormalApprox.fit(draws_known)
    idx = rng.integers(0, len(scale_draws), n)
    return NormalApprox.fit(rng.standard_normal(n) * scale_draws[idx])


def empirical_bayes_update(posterior, candidate: int, interviewer: int, round: int, grade: int,
                           grid_points: int = 801, width: float = 6.0, replicates: int = 500,
                           seed: int = 0) -> PosteriorUpdate:
    """Update candidate potential after observing ``grade`` from ``interviewer``.

    Every fitted parameter involved in the observation gets a maximum
    likelihood normal approximation from its posterior draws. The candidate
    potential's approximation is the prior; the others (intercept,
    interviewer toughness, both round effects, noise scale, interviewer
    thresholds) are nuisance parameters, integrated out by averaging the
    likelihood over ``replicates`` Monte Carlo draws. The posterior is
    evaluated on a grid of ``grid_points`` over prior mean +/- ``width`` sd.
    """
    sp = posterior.space
    _check_candidate(sp, candidate)
    _check_interviewer(sp, interviewer)
    _check_round(sp, round)
    if candidate == AVERAGE or interviewer == POPULATION:
        raise NotAvailableError("updates need a fitted candidate and interviewer")
    if not 1 <= grade <= sp.K:
        raise ValueError(f"grade must lie in 1..{sp.K}")
    cp = posterior.constrained()
    rng = np.random.default_rng(seed)
    prior = NormalApprox.fit(cp.alpha[:, candidate])
    if not prior.sd > 0:
        raise NotAvailableError("candidate potential posterior has zero spread")

    gk = sp.gamma_index().get((candidate, round))
    dk = sp.delta_index().get((interviewer, round))
    fits = {
        "mu0": NormalApprox.fit(cp.mu0),
        "beta": NormalApprox.fit(cp.beta[:, interviewer]),
        "gamma": _fit_effect(None if gk is None else cp.gamma[:, gk], cp.scales["sigma_gamma"], rng),
        "delta": _fit_effect(None if dk is None else cp.delta[:, dk], cp.scales["sigma_delta"], rng),
        "sigma_tot": NormalApprox.fit(cp.sigma_tot),
    }
    nuis = sum(rng.normal(f.mean, f.sd, replicates)
               for k, f in fits.items() if k != "sigma_tot")
    s = np.abs(rng.normal(fits["sigma_tot"].mean, fits["sigma_tot"].sd, replicates))
    s = np.maximum(s, 1e-6)
    J = sp.n_interior
    interior = np.empty((replicates, J))
    for j in range(J):
        f = NormalApprox.fit(cp.thresholds[:, interviewer, j + 1])
        interior[:, j] = rng.normal(f.mean, f.sd, replicates)
    interior = np.clip(np.sort(interior, axis=1), -1.0 + 1e-9, 1.0 - 1e-9)
    edges = np.concatenate([np.full((replicates, 1), -np.inf), np.full((replicates, 1), -1.0),
                            interior, np.full((replicates, 1), 1.0),
                            np.full((replicates, 1), np.inf)], axis=1)
    lo, hi = edges[:, grade - 1], edges[:, grade]

    grid = np.linspace(prior.mean - width * prior.sd, prior.mean + width * prior.sd, grid_points)
    m = grid[:, None] + nuis[None, :]
    with np.errstate(invalid="ignore"):
        logp = _log_interval((lo - m) / s, (hi - m) / s)
    logp = np.where(np.isfinite(logp), logp, -np.inf)
    top = logp.max()
    lik = np.exp(logp - top).mean(axis=1)

    prior_pdf = norm.pdf(grid, prior.mean, prior.sd)
    post = prior_pdf * lik
    post = post / np.trapezoid(post, grid)
    mean = float(np.trapezoid(grid * post, grid))
    sd = float(math.sqrt(max(np.trapezoid((grid - mean) ** 2 * post, grid), 0.0)))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (post[1:] + post[:-1]) * np.diff(grid))])
    cdf /= cdf[-1]
    quantiles = {q: float(np.interp(q, cdf, grid)) for q in QUANTILES}
    return PosteriorUpdate(candidate, interviewer, round, grade, prior, grid, prior_pdf, post,
                           mean, sd, quantiles)
