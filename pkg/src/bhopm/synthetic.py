"""Synthetic interview data drawn from the hierarchical ordered-probit process."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset, DataError, GradeScale, UnsupportedScaleError
from .model import cell_probabilities


@dataclass(frozen=True)
class SyntheticConfig:
    """Generator settings.

    ``delta_round_means`` / ``gamma_round_means`` shift the round effects of
    each round; ``thresholds`` (one list of interior cuts per interviewer,
    or a single list shared by all) overrides the ordered-uniform draw.
    """

    C: int = 40
    I: int = 12  # noqa: E741
    R: int = 3
    K: int = 4
    N: int = 800
    seed: int = 0
    mu0: float = 0.0
    sigma_alpha: float = 0.5
    sigma_beta: float = 0.5
    sigma_gamma: float = 0.5
    sigma_delta: float = 0.5
    sigma: float = 0.5
    sigma_c: float = 0.0
    sigma_i: float = 0.0
    delta_round_means: tuple[float, ...] | None = None
    gamma_round_means: tuple[float, ...] | None = None
    stop_prob: float = 0.5
    thresholds: tuple | None = None
    hire_rule: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        d = dict(d)
        for k in ("delta_round_means", "gamma_round_means"):
            if d.get(k) is not None:
                d[k] = tuple(float(x) for x in d[k])
        if d.get("thresholds") is not None:
            d["thresholds"] = _freeze(d["thresholds"])
        return cls(**d)


def _freeze(x):
    return tuple(_freeze(v) for v in x) if isinstance(x, (list, tuple)) else float(x)


@dataclass(frozen=True, eq=False)
class SyntheticTruth:
    mu0: float
    alpha: np.ndarray
    beta: np.ndarray
    gamma: dict[tuple[int, int], float]
    delta: dict[tuple[int, int], float]
    sigma_scales: dict[str, float]
    thresholds: np.ndarray  # (I, K-1), endpoints included

    @property
    def sigma_tot(self) -> float:
        s = self.sigma_scales
        return math.sqrt(s["sigma"] ** 2 + s["sigma_c"] ** 2 + s["sigma_i"] ** 2)

    def to_dict(self) -> dict:
        return {
            "mu0": self.mu0,
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "gamma": [[c, r, v] for (c, r), v in sorted(self.gamma.items())],
            "delta": [[i, r, v] for (i, r), v in sorted(self.delta.items())],
            "sigma_scales": dict(self.sigma_scales),
            "thresholds": self.thresholds.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTruth":
        return cls(
            mu0=float(d["mu0"]), alpha=np.array(d["alpha"], dtype=float),
            beta=np.array(d["beta"], dtype=float),
            gamma={(int(c), int(r)): float(v) for c, r, v in d["gamma"]},
            delta={(int(i), int(r)): float(v) for i, r, v in d["delta"]},
            sigma_scales={k: float(v) for k, v in d["sigma_scales"].items()},
            thresholds=np.array(d["thresholds"], dtype=float),
        )


def _assign_rows(cfg: SyntheticConfig, rng: np.random.Generator):
    """Candidate/round/interviewer triples, every entity used at least once.

    Each candidate passes through rounds 1..R and stops after each round
    with probability ``stop_prob``. Remaining rows beyond one per reached
    (candidate, round) pair are extra panel interviews spread uniformly
    over the reached pairs.
    """
    C, I, R, N = cfg.C, cfg.I, cfg.R, cfg.N
    if N < max(C, I):
        raise DataError(f"N={N} too small to use all {C} candidates and {I} interviewers")
    reached = np.ones(C, dtype=np.int64)
    for k in range(R - 1):
        go = (reached == k + 1) & (rng.random(C) >= cfg.stop_prob)
        reached += go
    # drop late rounds if the base pairs already exceed N
    while reached.sum() > N:
        c = int(rng.choice(np.flatnonzero(reached > 1)))
        reached[c] -= 1
    pairs = [(c, r) for c in range(C) for r in range(int(reached[c]))]
    extra = rng.integers(0, len(pairs), size=N - len(pairs))
    rows = pairs + [pairs[k] for k in extra]
    interviewers = np.concatenate([rng.permutation(I), rng.integers(0, I, size=N - I)])
    interviewers = interviewers[rng.permutation(N)]
    # chronological order: candidates arrive in index order, rounds follow
    arrival = np.sort(rng.random(C)) * C
    keys = np.array([arrival[c] + 1.5 * r for c, r in rows]) + rng.random(N) * 0.5
    order = np.argsort(keys, kind="stable")
    cand = np.array([rows[k][0] for k in order], dtype=np.int64)
    rnd = np.array([rows[k][1] for k in order], dtype=np.int64)
    return cand, interviewers[order], rnd, np.arange(1, N + 1, dtype=float)


def _draw_thresholds(cfg: SyntheticConfig, rng: np.random.Generator) -> np.ndarray:
    J = cfg.K - 3
    if cfg.thresholds is not None:
        t = np.array(cfg.thresholds, dtype=float)
        interior = np.broadcast_to(t.reshape(-1, J) if t.ndim < 2 else t, (cfg.I, J)).copy()
        if J and np.any(np.diff(np.column_stack([-np.ones(cfg.I), interior, np.ones(cfg.I)]),
                                axis=1) <= 0):
            raise DataError("configured thresholds must be increasing inside (-1, 1)")
    else:
        interior = np.sort(rng.uniform(-1.0, 1.0, size=(cfg.I, J)), axis=1)
    return np.column_stack([-np.ones(cfg.I), interior, np.ones(cfg.I)])


def _first_appearance(idx: np.ndarray, n: int) -> np.ndarray:
    """Map old index -> new index; unused indices go last."""
    order = list(dict.fromkeys(idx.tolist()))
    order += [k for k in range(n) if k not in set(order)]
    new = np.empty(n, dtype=np.int64)
    new[np.array(order, dtype=np.int64)] = np.arange(n)
    return new


def _permute(x: np.ndarray, new: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    out[new] = x
    return out


def generate_synthetic(cfg: SyntheticConfig, rng_seed: int | None = None
                       ) -> tuple[Dataset, SyntheticTruth]:
    """Draw truths and grades; identical output for identical seed."""
    if cfg.K < 3:
        raise UnsupportedScaleError(f"grade scale needs K >= 3, got {cfg.K}")
    rng = np.random.default_rng(cfg.seed if rng_seed is None else rng_seed)
    cand, intv, rnd, keys = _assign_rows(cfg, rng)

    d_means = np.zeros(cfg.R) if cfg.delta_round_means is None else np.asarray(cfg.delta_round_means)
    g_means = np.zeros(cfg.R) if cfg.gamma_round_means is None else np.asarray(cfg.gamma_round_means)
    if len(d_means) != cfg.R or len(g_means) != cfg.R:
        raise DataError("round mean vectors must have length R")

    alpha = rng.normal(0.0, 1.0, cfg.C) * cfg.sigma_alpha
    beta = rng.normal(0.0, 1.0, cfg.I) * cfg.sigma_beta
    gpairs = sorted(set(zip(cand.tolist(), rnd.tolist())))
    dpairs = sorted(set(zip(intv.tolist(), rnd.tolist())))
    gz = rng.normal(0.0, 1.0, len(gpairs))
    dz = rng.normal(0.0, 1.0, len(dpairs))
    gamma = {p: float(g_means[p[1]] + cfg.sigma_gamma * z) for p, z in zip(gpairs, gz)}
    delta = {p: float(d_means[p[1]] + cfg.sigma_delta * z) for p, z in zip(dpairs, dz)}
    thresholds = _draw_thresholds(cfg, rng)

    s_tot = math.sqrt(cfg.sigma ** 2 + cfg.sigma_c ** 2 + cfg.sigma_i ** 2)
    if s_tot <= 0:
        raise DataError("total noise scale must be positive")
    m = (cfg.mu0 + alpha[cand] + beta[intv]
         + np.array([gamma[p] for p in zip(cand.tolist(), rnd.tolist())])
         + np.array([delta[p] for p in zip(intv.tolist(), rnd.tolist())]))
    probs = cell_probabilities(m, s_tot, thresholds[intv])
    cum = np.cumsum(probs, axis=1)
    uu = rng.random(cfg.N)
    grade = 1 + np.minimum((uu[:, None] > cum).sum(axis=1), cfg.K - 1)

    # relabel in order of first appearance so a CSV round trip keeps indices
    c_new = _first_appearance(cand, cfg.C)
    i_new = _first_appearance(intv, cfg.I)
    cand, intv = c_new[cand], i_new[intv]
    alpha = _permute(alpha, c_new)
    beta = _permute(beta, i_new)
    thresholds = _permute(thresholds, i_new)
    gamma = {(int(c_new[c]), r): v for (c, r), v in gamma.items()}
    delta = {(int(i_new[i]), r): v for (i, r), v in delta.items()}

    hired = (alpha > 0).astype(np.int8) if cfg.hire_rule else None
    ds = Dataset(
        cand, intv, rnd, grade,
        tuple(f"cand{c:04d}" for c in range(cfg.C)),
        tuple(f"intv{i:03d}" for i in range(cfg.I)),
        tuple(f"round{r + 1}" for r in range(cfg.R)),
        GradeScale(cfg.K), keys, hired,
    )
    truth = SyntheticTruth(
        mu0=float(cfg.mu0), alpha=alpha, beta=beta, gamma=gamma, delta=delta,
        sigma_scales={"sigma_alpha": cfg.sigma_alpha, "sigma_beta": cfg.sigma_beta,
                      "sigma_gamma": cfg.sigma_gamma, "sigma_delta": cfg.sigma_delta,
                      "sigma": cfg.sigma, "sigma_c": cfg.sigma_c, "sigma_i": cfg.sigma_i},
        thresholds=thresholds,
    )
    return ds, truth


def config_dict(cfg: SyntheticConfig) -> dict:
    d = asdict(cfg)
    for k, v in d.items():
        if isinstance(v, tuple):
            d[k] = list(v)
    return d
