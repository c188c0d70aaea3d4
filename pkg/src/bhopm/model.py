"""Hierarchical ordered-probit model of interview grades.

The latent rating for observation ``n`` (candidate ``c``, interviewer ``i``,
round ``r``) is centred on::

    m_n = mu0 + alpha_c + gamma_{c,r} + beta_i + delta_{i,r}

and is cut into grades by per-interviewer thresholds
``-1 = theta_1 < ... < theta_{K-1} = +1``. The per-observation candidate and
interviewer draws are integrated out analytically, so the probit scale is
``sigma_tot = sqrt(sigma**2 + sigma_c**2 + sigma_i**2)``.

All parameters live on an unconstrained vector ``u`` of dimension ``D``:

- hierarchical effects are non-centred (``alpha = sigma_alpha * alpha_raw``),
- scales are log-transformed,
- interior thresholds of each interviewer come from the additive-logistic
  map of ``K - 3`` reals onto the gaps of ``(-1, 1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln, log_ndtr, logsumexp

from .data import Dataset, GradeScale

LOG_FLOOR = -700.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

HIER_SCALES = ("sigma_alpha", "sigma_beta", "sigma_gamma", "sigma_delta")
NOISE_SCALES = ("sigma", "sigma_c", "sigma_i")


class LayoutError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    cauchy_scale: float = 2.5
    mu0_prior_sd: float = 2.0
    collapse_noise_scales: bool = False
    scale: GradeScale | None = None  # None: take K from the dataset

    def __post_init__(self):
        if not self.cauchy_scale > 0:
            raise ValueError("cauchy_scale must be positive")
        if not self.mu0_prior_sd > 0:
            raise ValueError("mu0_prior_sd must be positive")

    def to_dict(self) -> dict:
        return {"cauchy_scale": self.cauchy_scale, "mu0_prior_sd": self.mu0_prior_sd,
                "collapse_noise_scales": self.collapse_noise_scales,
                "K": None if self.scale is None else self.scale.K}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        K = d.pop("K", None)
        return cls(scale=None if K is None else GradeScale(int(K)), **d)


@dataclass(frozen=True, eq=False)
class ParameterSpace:
    """Layout of the flat unconstrained vector for one dataset."""

    C: int
    I: int  # noqa: E741
    R: int
    K: int
    gamma_pairs: tuple[tuple[int, int], ...]
    delta_pairs: tuple[tuple[int, int], ...]
    collapsed: bool
    blocks: dict[str, slice] = field(repr=False)

    @classmethod
    def build(cls, ds: Dataset, config: ModelConfig | None = None) -> "ParameterSpace":
        config = config or ModelConfig()
        K = ds.K
        if config.scale is not None and config.scale.K != K:
            raise LayoutError(f"config K={config.scale.K} but dataset K={K}")
        gp = sorted(set(zip(ds.candidate.tolist(), ds.round.tolist())))
        dp = sorted(set(zip(ds.interviewer.tolist(), ds.round.tolist())))
        sizes = [("mu0", 1), ("alpha_raw", ds.C), ("beta_raw", ds.I),
                 ("gamma_raw", len(gp)), ("delta_raw", len(dp))]
        sizes += [("log_" + s, 1) for s in HIER_SCALES]
        if config.collapse_noise_scales:
            sizes.append(("log_sigma_eff", 1))
        else:
            sizes += [("log_" + s, 1) for s in NOISE_SCALES]
        sizes.append(("theta_raw", ds.I * (K - 3)))
        blocks, off = {}, 0
        for name, n in sizes:
            blocks[name] = slice(off, off + n)
            off += n
        return cls(ds.C, ds.I, ds.R, K, tuple(gp), tuple(dp),
                   config.collapse_noise_scales, blocks)

    @property
    def D(self) -> int:
        return self.blocks["theta_raw"].stop

    @property
    def n_interior(self) -> int:
        return self.K - 3

    @property
    def scale_names(self) -> tuple[str, ...]:
        return HIER_SCALES + (("sigma_eff",) if self.collapsed else NOISE_SCALES)

    def gamma_index(self) -> dict[tuple[int, int], int]:
        return {p: k for k, p in enumerate(self.gamma_pairs)}

    def delta_index(self) -> dict[tuple[int, int], int]:
        return {p: k for k, p in enumerate(self.delta_pairs)}

    def constrained_names(self) -> list[str]:
        """Column names for constrained-scale traces (0-based indices)."""
        names = ["mu0"]
        names += [f"alpha[{c}]" for c in range(self.C)]
        names += [f"beta[{i}]" for i in range(self.I)]
        names += [f"gamma[{c},{r}]" for c, r in self.gamma_pairs]
        names += [f"delta[{i},{r}]" for i, r in self.delta_pairs]
        names += list(self.scale_names)
        names += [f"theta[{i},{k}]" for i in range(self.I) for k in range(1, self.K - 2)]
        return names


@dataclass(frozen=True, eq=False)
class ConstrainedParams:
    """Model parameters on their natural scale.

    Arrays may carry a leading draw axis when produced from a batch of
    unconstrained vectors. ``thresholds`` has shape ``(..., I, K-1)`` and
    includes the fixed endpoints.
    """

    mu0: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    scales: dict[str, np.ndarray]
    thresholds: np.ndarray

    @property
    def sigma_tot(self) -> np.ndarray:
        if "sigma_eff" in self.scales:
            return self.scales["sigma_eff"]
        s = self.scales
        return np.sqrt(s["sigma"] ** 2 + s["sigma_c"] ** 2 + s["sigma_i"] ** 2)

    def flat(self, space: ParameterSpace) -> np.ndarray:
        """Columns in :meth:`ParameterSpace.constrained_names` order."""
        lead = np.shape(self.mu0)
        parts = [np.reshape(self.mu0, lead + (1,)), self.alpha, self.beta, self.gamma, self.delta]
        parts += [np.reshape(self.scales[n], lead + (1,)) for n in space.scale_names]
        parts.append(self.thresholds[..., 1:-1].reshape(lead + (-1,)))
        return np.concatenate(parts, axis=-1)

    @classmethod
    def from_flat(cls, space: ParameterSpace, x: np.ndarray) -> "ConstrainedParams":
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        off = 0

        def take(n):
            nonlocal off
            out = x[..., off:off + n]
            off += n
            return out

        mu0 = take(1)[..., 0]
        alpha = take(space.C)
        beta = take(space.I)
        gamma = take(len(space.gamma_pairs))
        delta = take(len(space.delta_pairs))
        scales = {n: take(1)[..., 0] for n in space.scale_names}
        interior = take(space.I * space.n_interior).reshape(lead + (space.I, space.n_interior))
        if off != x.shape[-1]:
            raise LayoutError(f"expected {off} constrained columns, got {x.shape[-1]}")
        return cls(mu0, alpha, beta, gamma, delta, scales, _full_cuts(interior))


def _full_cuts(interior: np.ndarray) -> np.ndarray:
    shape = interior.shape[:-1] + (1,)
    return np.concatenate([np.full(shape, -1.0), interior, np.full(shape, 1.0)], axis=-1)


# ------------------------------------------------------------- thresholds

def _threshold_forward(v: np.ndarray):
    """Map ``(..., J)`` reals to ordered interior cuts in (-1, 1).

    Returns cuts, gap fractions ``x`` of shape ``(..., J+1)`` and the
    log-determinant summed over the last axis.
    """
    J = v.shape[-1]
    ext = np.concatenate([v, np.zeros(v.shape[:-1] + (1,))], axis=-1)
    lse = logsumexp(ext, axis=-1, keepdims=True)
    x = np.exp(ext - lse)
    cuts = -1.0 + 2.0 * np.cumsum(x[..., :J], axis=-1)
    logdet = J * math.log(2.0) + np.sum(v, axis=-1) - (J + 1) * lse[..., 0]
    return cuts, x, logdet


def _threshold_inverse(cuts: np.ndarray) -> np.ndarray:
    full = _full_cuts(cuts)
    gaps = np.diff(full, axis=-1)
    if np.any(gaps <= 0):
        raise DomainError("thresholds must be strictly increasing inside (-1, 1)")
    lg = np.log(gaps)
    return lg[..., :-1] - lg[..., -1:]


# -------------------------------------------------------------- transform

def transform(space: ParameterSpace, config: ModelConfig, u) -> tuple[ConstrainedParams, float]:
    """Unconstrained vector (or ``(S, D)`` batch) to constrained parameters.

    Returns the parameters and the log absolute Jacobian determinant of the
    map (per row for a batch).
    """
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != space.D:
        raise LayoutError(f"expected vector of length {space.D}, got {u.shape[-1]}")
    b = space.blocks
    lead = u.shape[:-1]
    scales = {n: np.exp(u[..., b["log_" + n]][..., 0]) for n in space.scale_names}
    logjac = sum(u[..., b["log_" + n]][..., 0] for n in space.scale_names)
    v = u[..., b["theta_raw"]].reshape(lead + (space.I, space.n_interior))
    interior, _, ld = _threshold_forward(v)
    logjac = logjac + ld.sum(axis=-1)
    params = ConstrainedParams(
        mu0=u[..., b["mu0"]][..., 0],
        alpha=scales["sigma_alpha"][..., None] * u[..., b["alpha_raw"]],
        beta=scales["sigma_beta"][..., None] * u[..., b["beta_raw"]],
        gamma=scales["sigma_gamma"][..., None] * u[..., b["gamma_raw"]],
        delta=scales["sigma_delta"][..., None] * u[..., b["delta_raw"]],
        scales=scales,
        thresholds=_full_cuts(interior),
    )
    if not lead:
        logjac = float(logjac)
    return params, logjac


def inverse_transform(space: ParameterSpace, config: ModelConfig, p: ConstrainedParams) -> np.ndarray:
    lead = np.shape(p.mu0)
    b = space.blocks
    u = np.empty(lead + (space.D,))
    u[..., b["mu0"]] = np.reshape(p.mu0, lead + (1,))
    for n in space.scale_names:
        if np.any(np.asarray(p.scales[n]) <= 0):
            raise DomainError(f"{n} must be positive")
        u[..., b["log_" + n]] = np.reshape(np.log(p.scales[n]), lead + (1,))
    for raw, val, sc in (("alpha_raw", p.alpha, "sigma_alpha"), ("beta_raw", p.beta, "sigma_beta"),
                         ("gamma_raw", p.gamma, "sigma_gamma"), ("delta_raw", p.delta, "sigma_delta")):
        u[..., b[raw]] = val / np.reshape(p.scales[sc], lead + (1,))
    v = _threshold_inverse(np.asarray(p.thresholds)[..., 1:-1])
    u[..., b["theta_raw"]] = v.reshape(lead + (-1,))
    return u


# -------------------------------------------------------- cell probabilities

def _log_interval(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """``log(Phi(b) - Phi(a))`` for ``a < b``, stable in both tails."""
    flip = (a + b) > 0
    lo = np.where(flip, -b, a)
    hi = np.where(flip, -a, b)
    lhi = log_ndtr(hi)
    d = log_ndtr(lo) - lhi
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.where(d > -math.log(2.0), np.log(-np.expm1(d)), np.log1p(-np.exp(d)))
    return lhi + tail


def _check_cuts(cuts: np.ndarray) -> None:
    if cuts.shape[-1] >= 2 and np.any(np.diff(cuts, axis=-1) <= 0):
        raise DomainError("cut points must be strictly increasing")


def log_cell_probabilities(m, s, cuts) -> np.ndarray:
    """Log grade probabilities; broadcasts over leading axes of ``m``, ``s``, ``cuts``."""
    cuts = np.asarray(cuts, dtype=float)
    _check_cuts(cuts)
    m = np.asarray(m, dtype=float)[..., None]
    s = np.asarray(s, dtype=float)[..., None]
    if np.any(s <= 0):
        raise DomainError("scale must be positive")
    shape = np.broadcast_shapes(cuts.shape[:-1], m.shape[:-1], s.shape[:-1])
    cuts = np.broadcast_to(cuts, shape + cuts.shape[-1:])
    inf = np.full(shape + (1,), np.inf)
    edges = np.concatenate([-inf, cuts, inf], axis=-1)
    z = (edges - m) / s
    out = _log_interval(z[..., :-1], z[..., 1:])
    return np.where(np.isfinite(out), out, LOG_FLOOR)


def cell_probabilities(m, s, cuts) -> np.ndarray:
    """Probability of each of the ``K = len(cuts) + 1`` grades.

    >>> np.round(cell_probabilities(0.0, 1.0, [-1.0, 0.0, 1.0]), 6)
    array([0.158655, 0.341345, 0.341345, 0.158655])
    """
    return np.exp(log_cell_probabilities(m, s, cuts))


# ------------------------------------------------------------ the density

def _half_cauchy_logpdf(x, scale):
    return math.log(2.0 / (math.pi * scale)) - np.log1p((x / scale) ** 2)


class BHOPM:
    """Log-posterior of the model for a fixed dataset.

    Instances are callable as ``model(u) -> (logp, grad)`` and pickle
    cleanly, so they can be shipped to worker processes.
    """

    def __init__(self, ds: Dataset, config: ModelConfig | None = None):
        self.config = config or ModelConfig()
        self.dataset = ds
        self.space = ParameterSpace.build(ds, self.config)
        sp = self.space
        gi, di = sp.gamma_index(), sp.delta_index()
        self._c = ds.candidate
        self._i = ds.interviewer
        self._g = np.array([gi[(c, r)] for c, r in zip(ds.candidate.tolist(), ds.round.tolist())],
                           dtype=np.int64)
        self._h = np.array([di[(i, r)] for i, r in zip(ds.interviewer.tolist(), ds.round.tolist())],
                           dtype=np.int64)
        width = sp.K + 1
        # columns of the per-interviewer edge table: -inf, -1, interior..., +1, +inf
        self._lo_idx = self._i * width + (ds.grade - 1)
        self._hi_idx = self._i * width + ds.grade
        J = sp.n_interior
        self._n_scales = len(sp.scale_names)
        self._theta_const = float(gammaln(J + 1) - J * math.log(2.0)) * sp.I

    def __call__(self, u):
        return self.log_posterior(u)

    # pieces ------------------------------------------------------------
    def _unpack(self, u):
        sp, b = self.space, self.space.blocks
        sc = {n: math.exp(u[b["log_" + n].start]) for n in sp.scale_names}
        if sp.collapsed:
            s_tot = sc["sigma_eff"]
        else:
            s_tot = math.sqrt(sc["sigma"] ** 2 + sc["sigma_c"] ** 2 + sc["sigma_i"] ** 2)
        raws = {k: u[b[k]] for k in ("alpha_raw", "beta_raw", "gamma_raw", "delta_raw")}
        v = u[b["theta_raw"]].reshape(sp.I, sp.n_interior)
        interior, x, ld = _threshold_forward(v)
        edges = np.empty((sp.I, sp.K + 1))
        edges[:, 0] = -np.inf
        edges[:, 1] = -1.0
        edges[:, 2:sp.K - 1] = interior
        edges[:, sp.K - 1] = 1.0
        edges[:, sp.K] = np.inf
        m = (u[b["mu0"].start]
             + sc["sigma_alpha"] * raws["alpha_raw"][self._c]
             + sc["sigma_gamma"] * raws["gamma_raw"][self._g]
             + sc["sigma_beta"] * raws["beta_raw"][self._i]
             + sc["sigma_delta"] * raws["delta_raw"][self._h])
        return sc, s_tot, raws, v, x, ld, edges, m

    def _loglik_terms(self, edges, m, s_tot):
        flat = edges.ravel()
        lo = flat[self._lo_idx]
        hi = flat[self._hi_idx]
        a = (lo - m) / s_tot
        bb = (hi - m) / s_tot
        with np.errstate(invalid="ignore"):
            lp = _log_interval(a, bb)
        return lp, a, bb

    def log_likelihood_per_obs(self, u) -> np.ndarray:
        u = self._check(u)
        sc, s_tot, raws, v, x, ld, edges, m = self._unpack(u)
        lp, _, _ = self._loglik_terms(edges, m, s_tot)
        return np.where(np.isfinite(lp), lp, LOG_FLOOR)

    def log_prior(self, u) -> float:
        """Prior log-density of the constrained parameters (no Jacobian)."""
        u = self._check(u)
        sc, s_tot, raws, v, x, ld, edges, m = self._unpack(u)
        return self._log_prior(u, sc, raws)

    def log_jacobian(self, u) -> float:
        return transform(self.space, self.config, self._check(u))[1]

    def _log_prior(self, u, sc, raws) -> float:
        cfg = self.config
        mu0 = u[self.space.blocks["mu0"].start]
        sd = cfg.mu0_prior_sd
        out = -0.5 * (mu0 / sd) ** 2 - math.log(sd) - _HALF_LOG_2PI
        for r in raws.values():
            out += -0.5 * float(r @ r) - _HALF_LOG_2PI * r.size
        for n in self.space.scale_names:
            out += float(_half_cauchy_logpdf(sc[n], cfg.cauchy_scale))
        return out + self._theta_const

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.space.D,):
            raise LayoutError(f"expected vector of length {self.space.D}, got shape {u.shape}")
        return u

    # main entry ----------------------------------------------------------
    def log_posterior(self, u):
        """Log-posterior on the unconstrained scale and its exact gradient."""
        u = self._check(u)
        sp, b, cfg = self.space, self.space.blocks, self.config
        return _density_kernel(
            u, self._c, self._i, self._g, self._h, self.dataset.grade,
            sp.C, sp.I, len(sp.gamma_pairs), len(sp.delta_pairs), sp.K,
            b["log_sigma_alpha"].start, b["theta_raw"].start, sp.collapsed,
            float(cfg.cauchy_scale), float(cfg.mu0_prior_sd), self._theta_const,
        )


_SQRT1_2 = 1.0 / math.sqrt(2.0)


@njit(cache=True)
def _log_ndtr_scalar(x):
    if x > 6.0:
        return math.log1p(-0.5 * math.erfc(x * _SQRT1_2))
    if x > -20.0:
        return math.log(0.5 * math.erfc(-x * _SQRT1_2))
    if x == -math.inf:
        return -math.inf
    z = 1.0 / (x * x)
    series = 1.0 + z * (-1.0 + z * (3.0 + z * (-15.0 + z * (105.0 + z * (-945.0)))))
    return -0.5 * x * x - math.log(-x) - _HALF_LOG_2PI + math.log(series)


@njit(cache=True)
def _log_interval_scalar(a, b):
    if a + b > 0.0:
        lo, hi = -b, -a
    else:
        lo, hi = a, b
    lhi = _log_ndtr_scalar(hi)
    d = _log_ndtr_scalar(lo) - lhi
    if d > -0.6931471805599453:
        return lhi + math.log(-math.expm1(d))
    return lhi + math.log1p(-math.exp(d))


@njit(cache=True)
def _density_kernel(u, c_idx, i_idx, g_idx, h_idx, grade, C, I, G, H, K,
                    o_scale, o_theta, collapsed, cauchy, mu0_sd, theta_const):
    D = u.shape[0]
    grad = np.zeros(D)
    o_a = 1
    o_b = o_a + C
    o_g = o_b + I
    o_d = o_g + G
    n_scales = 5 if collapsed else 7
    sc = np.empty(n_scales)
    for k in range(n_scales):
        sc[k] = math.exp(u[o_scale + k])
    sa, sb, sg, sdl = sc[0], sc[1], sc[2], sc[3]
    if collapsed:
        s_tot = sc[4]
    else:
        s_tot = math.sqrt(sc[4] ** 2 + sc[5] ** 2 + sc[6] ** 2)

    J = K - 3
    W = K + 1
    edges = np.empty((I, W))
    x = np.empty((I, J + 1))
    value = 0.0
    for i in range(I):
        mx = 0.0
        for j in range(J):
            if u[o_theta + i * J + j] > mx:
                mx = u[o_theta + i * J + j]
        tot = math.exp(-mx)
        for j in range(J):
            tot += math.exp(u[o_theta + i * J + j] - mx)
        lse = mx + math.log(tot)
        for j in range(J):
            x[i, j] = math.exp(u[o_theta + i * J + j] - lse)
            value += u[o_theta + i * J + j]
        x[i, J] = math.exp(-lse)
        value += J * math.log(2.0) - (J + 1) * lse
        edges[i, 0] = -math.inf
        edges[i, 1] = -1.0
        acc = 0.0
        for j in range(J):
            acc += x[i, j]
            edges[i, 2 + j] = -1.0 + 2.0 * acc
        edges[i, K - 1] = 1.0
        edges[i, K] = math.inf

    g_edges = np.zeros((I, W))
    mu0 = u[0]
    gm_tot = 0.0
    gs_tot = 0.0
    ga_s = 0.0
    gb_s = 0.0
    gg_s = 0.0
    gd_s = 0.0
    inv_s = 1.0 / s_tot
    for n in range(c_idx.shape[0]):
        c = c_idx[n]
        i = i_idx[n]
        g = g_idx[n]
        h = h_idx[n]
        y = grade[n]
        m = (mu0 + sa * u[o_a + c] + sg * u[o_g + g]
             + sb * u[o_b + i] + sdl * u[o_d + h])
        a = (edges[i, y - 1] - m) * inv_s
        b = (edges[i, y] - m) * inv_s
        lp = _log_interval_scalar(a, b)
        if not (lp > -math.inf):
            value += -700.0
            continue
        value += lp
        ra = 0.0
        rb = 0.0
        a_ra = 0.0
        b_rb = 0.0
        if a > -math.inf:
            ra = math.exp(-0.5 * a * a - _HALF_LOG_2PI - lp)
            a_ra = a * ra
        if b < math.inf:
            rb = math.exp(-0.5 * b * b - _HALF_LOG_2PI - lp)
            b_rb = b * rb
        gm = (ra - rb) * inv_s
        gs_tot += a_ra - b_rb
        gm_tot += gm
        grad[o_a + c] += sa * gm
        grad[o_b + i] += sb * gm
        grad[o_g + g] += sg * gm
        grad[o_d + h] += sdl * gm
        ga_s += gm * u[o_a + c]
        gb_s += gm * u[o_b + i]
        gg_s += gm * u[o_g + g]
        gd_s += gm * u[o_d + h]
        g_edges[i, y] += rb * inv_s
        g_edges[i, y - 1] -= ra * inv_s
    gs_tot *= inv_s

    # priors on the raw effects: standard normal
    for k in range(o_a, o_scale):
        value += -0.5 * u[k] * u[k] - _HALF_LOG_2PI
        grad[k] -= u[k]
    grad[o_scale] = sa * ga_s
    grad[o_scale + 1] = sb * gb_s
    grad[o_scale + 2] = sg * gg_s
    grad[o_scale + 3] = sdl * gd_s
    if collapsed:
        grad[o_scale + 4] = gs_tot * sc[4]
    else:
        for k in range(4, 7):
            grad[o_scale + k] = gs_tot * sc[k] * sc[k] / s_tot
    a2 = cauchy * cauchy
    for k in range(n_scales):
        s2 = sc[k] * sc[k]
        value += math.log(2.0 / (math.pi * cauchy)) - math.log1p(s2 / a2) + u[o_scale + k]
        grad[o_scale + k] += 1.0 - 2.0 * s2 / (a2 + s2)

    value += -0.5 * (mu0 / mu0_sd) ** 2 - math.log(mu0_sd) - _HALF_LOG_2PI
    grad[0] = gm_tot - mu0 / (mu0_sd * mu0_sd)
    value += theta_const

    # interior cuts_j = -1 + 2 * cumsum(x)_j with x = softmax([v, 0])
    for i in range(I):
        inner = 0.0
        Gr = 0.0
        Gs = np.empty(J)
        for j in range(J - 1, -1, -1):
            Gr += g_edges[i, 2 + j]
            Gs[j] = Gr
        for j in range(J):
            inner += Gs[j] * x[i, j]
        for j in range(J):
            grad[o_theta + i * J + j] = (2.0 * (Gs[j] * x[i, j] - x[i, j] * inner)
                                         + 1.0 - (J + 1) * x[i, j])
    return value, grad


# functional surface -------------------------------------------------------

def log_posterior(space: ParameterSpace, config: ModelConfig, dataset: Dataset, u):
    return _model_for(space, config, dataset).log_posterior(u)


def log_likelihood_per_obs(space: ParameterSpace, config: ModelConfig, dataset: Dataset, u):
    return _model_for(space, config, dataset).log_likelihood_per_obs(u)


def _model_for(space, config, dataset) -> BHOPM:
    model = BHOPM(dataset, config)
    if model.space.D != space.D or model.space.gamma_pairs != space.gamma_pairs \
            or model.space.delta_pairs != space.delta_pairs:
        raise LayoutError("parameter space does not match dataset")
    return model


def pointwise_loglik_draws(model: BHOPM, U: np.ndarray) -> np.ndarray:
    """``(S, N)`` log-likelihood matrix for a batch of unconstrained draws."""
    return np.stack([model.log_likelihood_per_obs(u) for u in np.atleast_2d(U)])
