"""No-U-Turn sampling with windowed warmup adaptation.

The transition is the multinomial variant of NUTS: the trajectory is grown
by repeated doubling in a random direction, each new subtree is accepted
as a whole with probability ``min(1, w_new / w_old)`` (biased progressive
sampling), and inside a subtree the proposal is drawn in proportion to the
leaf weights ``exp(-H)``. Doubling stops on a U-turn, which is checked on
the merged tree and on the two extended sub-trajectories across the merge
point, or when the energy error of a leaf exceeds ``max_energy_error``
(a divergence). The metric is diagonal; ``inv_metric`` holds the inverse
mass, i.e. the per-coordinate scale estimate squared.

Warmup follows a fixed schedule: 15% step-size-only adaptation, 75% in
expanding windows whose draws estimate the diagonal metric, 10% step-size
only. Step size is tuned by dual averaging towards ``target_accept``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

LogpGrad = Callable[[np.ndarray], tuple[float, np.ndarray]]

#: Published reference setting: 4 chains, 1000 warmup, 4000 draws.
REFERENCE_DEFAULTS = {"chains": 4, "warmup": 1000, "samples": 4000}
#: Shorter run used for desk-scale experiments.
DESK_DEFAULTS = {"chains": 4, "warmup": 500, "samples": 500}


class InvalidStateError(ValueError):
    pass


class AdaptationError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SamplingError(RuntimeError):
    def __init__(self, chain: int, cause: Exception):
        super().__init__(f"chain {chain} failed: {cause}")
        self.chain = chain
        self.cause = cause


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    samples: int = 4000
    max_tree_depth: int = 10
    target_accept: float = 0.8
    master_seed: int = 0
    adapt: bool = True
    step_size: float | None = None  # initial step; the fixed step when adapt=False
    init_radius: float = 2.0
    max_energy_error: float = 1000.0
    n_jobs: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.adapt and self.warmup < 100:
            raise ValueError("warmup must be >= 100 when adaptation is enabled")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.max_tree_depth < 1:
            raise ValueError("max_tree_depth must be >= 1")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        return cls(**d)


@dataclass(frozen=True)
class Point:
    theta: np.ndarray
    logp: float
    grad: np.ndarray


@dataclass(frozen=True)
class TransitionStats:
    accept_stat: float
    n_leapfrog: int
    tree_depth: int
    divergent: bool
    energy: float


@dataclass(eq=False)
class ChainOutput:
    draws: np.ndarray  # (samples, D), unconstrained
    logp: np.ndarray
    accept_stat: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    divergent: np.ndarray
    step_size: float
    inv_metric: np.ndarray
    seed: tuple = ()

    @property
    def divergence_count(self) -> int:
        return int(np.sum(self.divergent))

    def tree_depth_histogram(self) -> dict[int, int]:
        vals, counts = np.unique(self.tree_depth, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}


def _eval(logp_grad: LogpGrad, theta: np.ndarray) -> tuple[float, np.ndarray]:
    with np.errstate(all="ignore"):
        try:
            lp, g = logp_grad(theta)
        except (FloatingPointError, OverflowError, ValueError):
            return -math.inf, np.zeros_like(theta)
    lp = float(lp)
    if not math.isfinite(lp) or not np.all(np.isfinite(g)):
        return -math.inf, np.zeros_like(theta)
    return lp, np.asarray(g, dtype=float)


# ------------------------------------------------------------------- tree

class _Tree:
    __slots__ = ("lt", "lp", "lg", "rt", "rp", "rg", "ps_l", "ps_r", "rho", "proposal",
                 "log_w", "turning", "diverging", "sum_accept", "n")


def _crit(ps_minus, ps_plus, rho) -> bool:
    return float(ps_plus @ rho) > 0.0 and float(ps_minus @ rho) > 0.0


class _Integrator:
    def __init__(self, logp_grad, inv_metric, step, H0, max_err, rng):
        self.f = logp_grad
        self.inv = inv_metric
        self.step = step
        self.H0 = H0
        self.max_err = max_err
        self.rng = rng

    def leaf(self, theta, p, grad, direction) -> _Tree:
        eps = direction * self.step
        p_half = p + 0.5 * eps * grad
        theta_new = theta + eps * (self.inv * p_half)
        lp, g = _eval(self.f, theta_new)
        p_new = p_half + 0.5 * eps * g
        ps = self.inv * p_new
        H = -lp + 0.5 * float(p_new @ ps)
        t = _Tree()
        t.lt = t.rt = theta_new
        t.lp = t.rp = p_new
        t.lg = t.rg = g
        t.ps_l = t.ps_r = ps
        t.rho = p_new
        t.proposal = Point(theta_new, lp, g)
        if math.isfinite(H):
            dH = H - self.H0
            t.log_w = -dH
            t.diverging = dH > self.max_err
            t.sum_accept = math.exp(min(0.0, -dH))
        else:
            t.log_w = -math.inf
            t.diverging = True
            t.sum_accept = 0.0
        t.turning = False
        t.n = 1
        return t

    def merge(self, old: _Tree, new: _Tree, direction: int, biased: bool) -> _Tree:
        log_w = np.logaddexp(old.log_w, new.log_w)
        if biased:
            diff = new.log_w - old.log_w
            accept = 1.0 if diff >= 0.0 or old.log_w == -math.inf else math.exp(diff)
        else:
            accept = math.exp(new.log_w - log_w) if log_w > -math.inf else 0.0
        A, B = (old, new) if direction > 0 else (new, old)
        t = _Tree()
        t.lt, t.lp, t.lg, t.ps_l = A.lt, A.lp, A.lg, A.ps_l
        t.rt, t.rp, t.rg, t.ps_r = B.rt, B.rp, B.rg, B.ps_r
        t.rho = A.rho + B.rho
        t.proposal = new.proposal if self.rng.random() < accept else old.proposal
        t.log_w = float(log_w)
        t.turning = not (_crit(A.ps_l, B.ps_r, t.rho)
                         and _crit(A.ps_l, B.ps_l, A.rho + B.lp)
                         and _crit(A.ps_r, B.ps_r, B.rho + A.rp))
        t.diverging = False
        t.sum_accept = old.sum_accept + new.sum_accept
        t.n = old.n + new.n
        return t

    def build(self, theta, p, grad, direction, depth) -> _Tree:
        if depth == 0:
            return self.leaf(theta, p, grad, direction)
        first = self.build(theta, p, grad, direction, depth - 1)
        if first.turning or first.diverging:
            return first
        if direction > 0:
            second = self.build(first.rt, first.rp, first.rg, direction, depth - 1)
        else:
            second = self.build(first.lt, first.lp, first.lg, direction, depth - 1)
        if second.turning or second.diverging:
            first.turning = second.turning
            first.diverging = second.diverging
            first.sum_accept += second.sum_accept
            first.n += second.n
            return first
        return self.merge(first, second, direction, biased=False)


def nuts_transition(current: Point, logp_grad: LogpGrad, step: float, inv_metric: np.ndarray,
                    max_depth: int, rng: np.random.Generator,
                    max_energy_error: float = 1000.0) -> tuple[Point, TransitionStats]:
    """One multinomial NUTS update from ``current``."""
    if not math.isfinite(current.logp):
        raise InvalidStateError("start state has non-finite log density")
    p0 = rng.standard_normal(current.theta.shape) / np.sqrt(inv_metric)
    ps0 = inv_metric * p0
    H0 = -current.logp + 0.5 * float(p0 @ ps0)
    integ = _Integrator(logp_grad, inv_metric, step, H0, max_energy_error, rng)

    tree = _Tree()
    tree.lt = tree.rt = current.theta
    tree.lp = tree.rp = p0
    tree.lg = tree.rg = current.grad
    tree.ps_l = tree.ps_r = ps0
    tree.rho = p0
    tree.proposal = current
    tree.log_w = 0.0
    tree.turning = tree.diverging = False
    tree.sum_accept = 0.0
    tree.n = 0

    divergent = False
    depth = 0
    sum_accept, n_leap = 0.0, 0
    while depth < max_depth:
        direction = 1 if rng.random() < 0.5 else -1
        if direction > 0:
            sub = integ.build(tree.rt, tree.rp, tree.rg, 1, depth)
        else:
            sub = integ.build(tree.lt, tree.lp, tree.lg, -1, depth)
        sum_accept += sub.sum_accept
        n_leap += sub.n
        depth += 1
        if sub.diverging:
            divergent = True
            break
        if sub.turning:
            break
        merged = integ.merge(tree, sub, direction, biased=True)
        tree = merged
        if tree.turning:
            break
    stats = TransitionStats(
        accept_stat=sum_accept / n_leap if n_leap else 0.0,
        n_leapfrog=n_leap, tree_depth=depth, divergent=divergent, energy=H0,
    )
    return tree.proposal, stats


# --------------------------------------------------------------- warmup

def _reasonable_step(point: Point, logp_grad, inv_metric, step, rng) -> float:
    """Double or halve ``step`` until one leapfrog crosses acceptance 0.8."""
    direction = 0
    for _ in range(100):
        p = rng.standard_normal(point.theta.shape) / np.sqrt(inv_metric)
        H0 = -point.logp + 0.5 * float(p @ (inv_metric * p))
        p_half = p + 0.5 * step * point.grad
        theta = point.theta + step * inv_metric * p_half
        lp, g = _eval(logp_grad, theta)
        p_new = p_half + 0.5 * step * g
        H = -lp + 0.5 * float(p_new @ (inv_metric * p_new))
        delta = H0 - H if math.isfinite(H) else -math.inf
        want = 1 if delta > math.log(0.8) else -1
        if direction == 0:
            direction = want
        elif want != direction:
            break
        step = step * 2.0 if direction > 0 else step * 0.5
        if step > 1e7 or step < 1e-12:
            break
    return step


class DualAveraging:
    def __init__(self, step: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.target, self.gamma, self.t0, self.kappa = target, gamma, t0, kappa
        self.restart(step)

    def restart(self, step: float) -> None:
        self.mu = math.log(10.0 * step)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat: float) -> float:
        self.counter += 1
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = x_eta * x + (1.0 - x_eta) * self.x_bar
        return math.exp(x)

    @property
    def final_step(self) -> float:
        return math.exp(self.x_bar)


def warmup_schedule(n: int) -> tuple[int, list[tuple[int, int]], int]:
    """Split ``n`` warmup iterations into (initial buffer, metric windows, final buffer).

    Windows are ``[start, stop)`` ranges starting at 25 iterations (or the
    whole slow phase if shorter) and doubling; a window is stretched to the
    end of the slow phase when the next one would not fit twice.
    """
    init = int(round(0.15 * n))
    term = int(round(0.10 * n))
    slow_end = n - term
    windows = []
    start = init
    size = min(25, slow_end - init)
    while start < slow_end:
        stop = start + size
        if stop + 2 * size > slow_end:
            stop = slow_end
        windows.append((start, stop))
        start = stop
        size *= 2
    return init, windows, term


@dataclass(frozen=True)
class WarmupResult:
    step_size: float
    inv_metric: np.ndarray
    state: Point
    mean_accept: float


def adapt_warmup(logp_grad: LogpGrad, init: np.ndarray, config: SamplerConfig,
                 rng: np.random.Generator) -> WarmupResult:
    """Tune step size and diagonal metric; returns the final warmup state."""
    if config.warmup < 100:
        raise ValueError("warmup must be >= 100")
    lp, g = _eval(logp_grad, np.asarray(init, dtype=float))
    if not math.isfinite(lp):
        raise InvalidStateError("initial point has non-finite log density")
    point = Point(np.asarray(init, dtype=float), lp, g)
    D = point.theta.size
    inv_metric = np.ones(D)
    step = _reasonable_step(point, logp_grad, inv_metric, config.step_size or 1.0, rng)
    da = DualAveraging(step, config.target_accept)
    _, windows, _ = warmup_schedule(config.warmup)
    window_of = {}
    for w, (a, b) in enumerate(windows):
        for t in range(a, b):
            window_of[t] = w
    ends = {b - 1 for _, b in windows}
    buf: list[np.ndarray] = []
    accepts = np.empty(config.warmup)
    start = point.theta
    moved = False
    for t in range(config.warmup):
        point, st = nuts_transition(point, logp_grad, step, inv_metric, config.max_tree_depth,
                                    rng, config.max_energy_error)
        accepts[t] = st.accept_stat
        moved = moved or not np.array_equal(point.theta, start)
        step = da.update(st.accept_stat)
        if t in window_of:
            buf.append(point.theta)
            if t in ends:
                x = np.asarray(buf)
                n = len(x)
                var = x.var(axis=0, ddof=1) if n > 1 else np.ones(D)
                inv_metric = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
                buf = []
                step = _reasonable_step(point, logp_grad, inv_metric, step, rng)
                da.restart(step)
    # a step that collapsed to the float resolution "accepts" moves of size zero
    if not moved or not np.any(accepts > 0) or not da.final_step > 1e-12:
        raise AdaptationError("every warmup transition was rejected",
                              {"final_step": float(da.final_step), "logp": point.logp,
                               "mean_accept": float(accepts.mean())})
    return WarmupResult(da.final_step, inv_metric, point, float(accepts.mean()))


# ----------------------------------------------------------------- chains

def chain_seeds(master_seed: int, chains: int) -> list[np.random.SeedSequence]:
    """Chain ``j`` uses child ``j`` of ``SeedSequence(master_seed)``."""
    return np.random.SeedSequence(master_seed).spawn(chains)


def _initial_point(logp_grad, D, radius, rng) -> Point:
    for _ in range(100):
        theta = rng.uniform(-radius, radius, D)
        lp, g = _eval(logp_grad, theta)
        if math.isfinite(lp):
            return Point(theta, lp, g)
    raise InvalidStateError("no finite initial point found in 100 attempts")


def run_chain(logp_grad: LogpGrad, D: int, config: SamplerConfig,
              seed: np.random.SeedSequence, init: np.ndarray | None = None) -> ChainOutput:
    rng = np.random.default_rng(seed)
    if init is None:
        point = _initial_point(logp_grad, D, config.init_radius, rng)
    else:
        lp, g = _eval(logp_grad, np.asarray(init, dtype=float))
        point = Point(np.asarray(init, dtype=float), lp, g)
    if config.adapt:
        wu = adapt_warmup(logp_grad, point.theta, config, rng)
        step, inv_metric, point = wu.step_size, wu.inv_metric, wu.state
    else:
        step = config.step_size if config.step_size else 0.1
        inv_metric = np.ones(D)
        for _ in range(config.warmup):
            point, _ = nuts_transition(point, logp_grad, step, inv_metric,
                                       config.max_tree_depth, rng, config.max_energy_error)
    S = config.samples
    draws = np.empty((S, D))
    logp = np.empty(S)
    acc = np.empty(S)
    depth = np.empty(S, dtype=np.int64)
    nleap = np.empty(S, dtype=np.int64)
    div = np.zeros(S, dtype=bool)
    for s in range(S):
        point, st = nuts_transition(point, logp_grad, step, inv_metric, config.max_tree_depth,
                                    rng, config.max_energy_error)
        draws[s] = point.theta
        logp[s] = point.logp
        acc[s] = st.accept_stat
        depth[s] = st.tree_depth
        nleap[s] = st.n_leapfrog
        div[s] = st.divergent
    return ChainOutput(draws, logp, acc, depth, nleap, div, float(step), inv_metric,
                       tuple(seed.spawn_key) + (seed.entropy,))


def _run_chain_job(args):
    logp_grad, D, config, seed, init = args
    return run_chain(logp_grad, D, config, seed, init)


@dataclass(eq=False)
class Posterior:
    """Post-warmup draws of all chains plus the model they came from."""

    chains: list[ChainOutput]
    space: object = None
    model_config: object = None
    fingerprint: str = ""
    sampler_config: SamplerConfig | None = None
    _constrained: object = field(default=None, repr=False)

    def __post_init__(self):
        if not self.chains:
            raise ValueError("posterior needs at least one chain")
        shapes = {c.draws.shape for c in self.chains}
        if len(shapes) != 1:
            raise ValueError(f"chains disagree on draw shape: {shapes}")

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def n_samples(self) -> int:
        return self.chains[0].draws.shape[0]

    def unconstrained(self) -> np.ndarray:
        """``(chains * samples, D)`` pooled draws, chain-major."""
        return np.concatenate([c.draws for c in self.chains], axis=0)

    def constrained(self):
        if self._constrained is None:
            from .model import transform
            self._constrained = transform(self.space, self.model_config, self.unconstrained())[0]
        return self._constrained

    def constrained_matrix(self) -> np.ndarray:
        return self.constrained().flat(self.space)

    def by_chain(self, column: int | str) -> np.ndarray:
        """``(chains, samples)`` constrained draws of one parameter."""
        if isinstance(column, str):
            column = self.space.constrained_names().index(column)
        flat = self.constrained_matrix()[:, column]
        return flat.reshape(self.n_chains, self.n_samples)

    def logp_by_chain(self) -> np.ndarray:
        return np.stack([c.logp for c in self.chains])

    @property
    def divergence_count(self) -> int:
        return sum(c.divergence_count for c in self.chains)


def run_chains(logp_grad: LogpGrad, D: int, config: SamplerConfig, *, space=None,
               model_config=None, fingerprint: str = "",
               inits: list[np.ndarray] | None = None) -> Posterior:
    """Run ``config.chains`` independent chains.

    Results depend only on ``config.master_seed``; ``config.n_jobs > 1``
    runs chains in worker processes (``logp_grad`` must then be picklable).
    """
    seeds = chain_seeds(config.master_seed, config.chains)
    jobs = [(logp_grad, D, config, seeds[j], None if inits is None else inits[j])
            for j in range(config.chains)]
    outputs: list[ChainOutput] = []
    if config.n_jobs > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.n_jobs, config.chains)) as ex:
            futures = [ex.submit(_run_chain_job, job) for job in jobs]
            for j, fut in enumerate(futures):
                try:
                    outputs.append(fut.result())
                except (AdaptationError, InvalidStateError) as exc:
                    raise SamplingError(j, exc) from exc
    else:
        for j, job in enumerate(jobs):
            try:
                outputs.append(_run_chain_job(job))
            except (AdaptationError, InvalidStateError) as exc:
                raise SamplingError(j, exc) from exc
    return Posterior(outputs, space, model_config, fingerprint, config)


def fit(model, config: SamplerConfig | None = None) -> Posterior:
    """Sample a :class:`bhopm.model.BHOPM` posterior."""
    config = config or SamplerConfig()
    return run_chains(model, model.space.D, config, space=model.space,
                      model_config=model.config, fingerprint=model.dataset.fingerprint())
