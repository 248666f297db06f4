"""Coverage, credibility, length, and simulation-study machinery.

Coverage C(s) is the probability, under the generating model at true
signal s, that a method's reported upper limit exceeds s (strictly).
Two estimators are provided: exact enumeration over a truncated
(n, y, z) box for small rates, and Monte Carlo with importance
reweighting of the n margin so one sample batch serves every s on the
grid.  Credibility is the posterior probability that the signal lies
below a submitted limit under a reference model with a flat prior on
s >= 0 and gamma priors on the nuisance parameters.

Work items are keyed by deterministic stream ids, so every report is
reproducible bit-for-bit regardless of the worker count.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy import special as sp
from scipy import stats

from .bayes import PriorConfig, bayes_upper_limit, bayes_upper_limits_batch, prior_preset
from .ds_limits import (
    ChannelObservation,
    Dataset,
    GridConfig,
    UnboundedLimit,
    dataset_limits,
)
from .sampling import DEFAULT_SEED, RngHandle, derive_stream_id

__all__ = [
    "NuisanceTruth",
    "CoverageReport",
    "CredibilityConfig",
    "StudyResult",
    "EnumerationTooLarge",
    "NoPosteriorMass",
    "make_ds_method",
    "make_bayes_method",
    "coverage_enumerate",
    "coverage_importance",
    "credibility",
    "credibility_limit",
    "simulate_study",
    "length_quantiles",
]


class EnumerationTooLarge(RuntimeError):
    """The truncated (n, y, z) box exceeds the configured cell budget."""


class NoPosteriorMass(RuntimeError):
    """The credibility denominator underflowed; no posterior mass remains."""


@dataclass(frozen=True)
class NuisanceTruth:
    """True (s, eps, b) driving a coverage calculation."""

    s: float
    eps: float
    b: float

    def __post_init__(self) -> None:
        if self.s < 0 or self.b < 0 or self.eps <= 0:
            raise ValueError("require s >= 0, b >= 0, eps > 0")

    def rates(self, t: float, u: float) -> tuple[float, float, float]:
        """(mu, nu, rho) = (eps*s + b, t*b, u*eps)."""
        return self.eps * self.s + self.b, t * self.b, u * self.eps


@dataclass
class CoverageReport:
    s_grid: np.ndarray
    estimate: np.ndarray
    std_err: np.ndarray
    method: str
    mode: str
    n_samples: int | None = None
    cutoff: float | None = None
    truncation_bound: float | None = None
    ess: np.ndarray | None = None


@dataclass(frozen=True)
class CredibilityConfig:
    """Gamma priors on b and eps given as (mean, sd) pairs."""

    b_prior: tuple[float, float]
    e_prior: tuple[float, float]

    def __post_init__(self) -> None:
        for mean, sd in (self.b_prior, self.e_prior):
            if mean <= 0 or sd <= 0:
                raise ValueError("prior means and sds must be positive")

    @staticmethod
    def _shape_scale(mean: float, sd: float) -> tuple[float, float]:
        return mean * mean / (sd * sd), sd * sd / mean

    @property
    def b_shape_scale(self) -> tuple[float, float]:
        return self._shape_scale(*self.b_prior)

    @property
    def e_shape_scale(self) -> tuple[float, float]:
        return self._shape_scale(*self.e_prior)


# ---------------------------------------------------------------------------
# limit-method callables (picklable for process pools)


def _ds_limit(dataset: Dataset, q: float, grid: GridConfig, method: str) -> float:
    try:
        return dataset_limits(dataset, [q], grid, method)[0]
    except UnboundedLimit:
        return math.inf


def _bayes_limit(dataset: Dataset, q: float, prior: PriorConfig) -> float:
    if len(dataset.channels) != 1:
        raise ValueError("the Bayesian comparison method is single-channel")
    return bayes_upper_limit(dataset.channels[0], prior, q)


def make_ds_method(grid: GridConfig = GridConfig(), method: str = "auto"):
    """Callable (dataset, q) -> upper limit; +inf when unbounded."""
    return partial(_ds_limit, grid=grid, method=method)


def make_bayes_method(prior: PriorConfig | str):
    """Callable (dataset, q) -> Bayesian upper limit for one prior."""
    if isinstance(prior, str):
        prior = prior_preset(prior)
    return partial(_bayes_limit, prior=prior)


def _parallel_map(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    chunk = max(1, len(items) // (4 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=chunk))


# ---------------------------------------------------------------------------
# coverage


def _poisson_pmf(ks: np.ndarray, rate: float) -> np.ndarray:
    if rate == 0.0:
        return np.where(ks == 0, 1.0, 0.0)
    return np.exp(ks * math.log(rate) - rate - sp.gammaln(ks + 1.0))


def _poisson_box_max(rate: float, tail_eps: float) -> int:
    if rate == 0.0:
        return 0
    return int(stats.poisson.ppf(1.0 - tail_eps, rate))


def coverage_enumerate(
    method,
    t: float,
    u: float,
    truth_nuisance: tuple[float, float],
    s_grid,
    q: float,
    tail_eps: float = 1e-10,
    cell_budget: int = 2_000_000,
    threads: int = 1,
) -> CoverageReport:
    """Exact coverage by enumerating the truncated (n, y, z) box.

    Each margin is enumerated up to cumulative probability
    1 - tail_eps (the n margin at the largest grid rate), so every
    C(s) misses at most 3 * tail_eps of mass; that deterministic bound
    is reported in the ``truncation_bound`` field.
    """
    eps, b = truth_nuisance
    s_grid = np.asarray(s_grid, dtype=float)
    nu, rho = t * b, u * eps
    mu_max = eps * float(s_grid.max()) + b
    n_max = _poisson_box_max(mu_max, tail_eps)
    y_max = _poisson_box_max(nu, tail_eps)
    z_max = _poisson_box_max(rho, tail_eps)
    cells = (n_max + 1) * (y_max + 1) * (z_max + 1)
    if cells > cell_budget:
        raise EnumerationTooLarge(
            f"(n, y, z) box has {cells} cells, beyond the budget {cell_budget}"
        )

    datasets = [
        Dataset(
            (ChannelObservation(n, y, z, t, u),), label=f"{n}-{y}-{z}"
        )
        for n in range(n_max + 1)
        for y in range(y_max + 1)
        for z in range(z_max + 1)
    ]
    limits = np.array(
        _parallel_map(partial(_apply_method, method=method, q=q), datasets, threads)
    ).reshape(n_max + 1, y_max + 1, z_max + 1)

    py = _poisson_pmf(np.arange(y_max + 1, dtype=float), nu)
    pz = _poisson_pmf(np.arange(z_max + 1, dtype=float), rho)
    w_yz = py[:, None] * pz[None, :]
    ks = np.arange(n_max + 1, dtype=float)
    estimate = np.empty(s_grid.size)
    for i, s in enumerate(s_grid):
        pn = _poisson_pmf(ks, eps * s + b)
        covered = (limits > s).astype(float)
        estimate[i] = float(pn @ (covered * w_yz).sum(axis=(1, 2)))
    return CoverageReport(
        s_grid=s_grid,
        estimate=estimate,
        std_err=np.zeros(s_grid.size),
        method=getattr(method, "__name__", "method"),
        mode="enumeration",
        cutoff=tail_eps,
        truncation_bound=3.0 * tail_eps,
    )


def _apply_method(dataset: Dataset, method, q: float) -> float:
    return method(dataset, q)


def coverage_importance(
    method,
    t: float,
    u: float,
    truth_nuisance: tuple[float, float],
    s_grid,
    q: float,
    n_samples: int,
    s_ref: float,
    rng: RngHandle,
    threads: int = 1,
) -> CoverageReport:
    """Monte Carlo coverage with importance reweighting across the s grid.

    (y, z) are drawn from their s-free laws and n from
    Pois(eps * s_ref + b); each grid point s reuses the sample with
    weights w_s(n) = exp(-(mu_s - mu_ref)) (mu_s / mu_ref)^n, whose
    mean is 1 by construction.  An effective-sample-size column flags
    weight degeneracy far from s_ref.
    """
    eps, b = truth_nuisance
    s_grid = np.asarray(s_grid, dtype=float)
    if not (s_grid.min() <= s_ref <= s_grid.max()):
        raise ValueError("s_ref must lie within the hull of s_grid")
    mu_ref = eps * s_ref + b
    if mu_ref <= 0:
        raise ValueError("reference rate eps * s_ref + b must be positive")
    gen = rng.generator
    ns = gen.poisson(mu_ref, n_samples)
    ys = gen.poisson(t * b, n_samples)
    zs = gen.poisson(u * eps, n_samples)
    datasets = [
        Dataset(
            (ChannelObservation(int(n), int(y), int(z), t, u),), label=str(i)
        )
        for i, (n, y, z) in enumerate(zip(ns, ys, zs))
    ]
    limits = np.array(
        _parallel_map(partial(_apply_method, method=method, q=q), datasets, threads)
    )

    estimate = np.empty(s_grid.size)
    std_err = np.empty(s_grid.size)
    ess = np.empty(s_grid.size)
    for i, s in enumerate(s_grid):
        mu_s = eps * s + b
        if mu_s == 0.0:
            w = np.where(ns == 0, math.exp(mu_ref), 0.0)
        else:
            w = np.exp(-(mu_s - mu_ref) + ns * math.log(mu_s / mu_ref))
        wc = w * (limits > s)
        estimate[i] = float(wc.mean())
        std_err[i] = float(wc.std(ddof=1) / math.sqrt(n_samples))
        ess[i] = float(w.sum() ** 2 / (w * w).sum())
    low = ess < 0.05 * n_samples
    if low.any():
        warnings.warn(
            f"importance weights degenerate at {int(low.sum())} grid point(s); "
            f"min effective sample size {ess.min():.1f} of {n_samples}",
            RuntimeWarning,
            stacklevel=2,
        )
    return CoverageReport(
        s_grid=s_grid,
        estimate=estimate,
        std_err=std_err,
        method=getattr(method, "__name__", "method"),
        mode="importance",
        n_samples=n_samples,
        ess=ess,
    )


# ---------------------------------------------------------------------------
# credibility


def _posterior_nuisance_draws(ch, cfg: CredibilityConfig, n_samples, rng: RngHandle):
    sh_b, sc_b = cfg.b_shape_scale
    sh_e, sc_e = cfg.e_shape_scale
    gen = rng.generator
    bs = gen.gamma(sh_b + ch.y, sc_b / (1.0 + ch.t * sc_b), n_samples)
    es = gen.gamma(sh_e + ch.z, sc_e / (1.0 + ch.u * sc_e), n_samples)
    return bs, es


def _credibility_from_draws(limit: float, n: int, bs, es) -> float:
    tail = 1.0 - sp.gammainc(n + 1.0, bs)
    den = float(np.mean(tail / es))
    if not den > 0.0:
        raise NoPosteriorMass("posterior denominator underflowed")
    if math.isinf(limit):
        return 1.0
    num = (sp.gammainc(n + 1.0, bs + es * limit) - sp.gammainc(n + 1.0, bs)) / es
    return float(np.mean(num) / den)


def credibility(
    limit: float,
    ch: ChannelObservation,
    cfg: CredibilityConfig,
    n_samples: int,
    rng: RngHandle,
) -> float:
    """Posterior P(S <= limit | n, y, z) under the reference model.

    Flat prior on s >= 0 and moment-matched gamma priors on (b, eps),
    each updated by its subsidiary count.  Integrating the Poisson
    likelihood over s in closed form leaves a Monte Carlo average over
    the (b, eps) posterior:

        E[(P(n+1, b + eps*R) - P(n+1, b)) / eps]
        -----------------------------------------
        E[(1 - P(n+1, b)) / eps]

    with P the regularized lower incomplete gamma.
    """
    if limit < 0:
        raise ValueError("limit must be >= 0")
    bs, es = _posterior_nuisance_draws(ch, cfg, n_samples, rng)
    return _credibility_from_draws(limit, ch.n, bs, es)


def credibility_limit(
    ch: ChannelObservation,
    cfg: CredibilityConfig,
    q: float,
    n_samples: int,
    rng: RngHandle,
    rel_tol: float = 1e-6,
) -> float:
    """Posterior q-quantile of the credibility model (its own exact
    limit method): the R at which :func:`credibility` reaches q, using
    one shared (b, eps) sample so the bisection target is monotone."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must lie strictly inside (0, 1)")
    bs, es = _posterior_nuisance_draws(ch, cfg, n_samples, rng)
    lo, hi = 0.0, 1.0
    while _credibility_from_draws(hi, ch.n, bs, es) < q:
        lo = hi
        hi *= 2.0
        if hi > 1e15:
            raise NoPosteriorMass("credibility quantile bracket exceeded 1e15")
    while hi - lo > rel_tol * max(hi, 1e-300):
        mid = 0.5 * (lo + hi)
        if _credibility_from_draws(mid, ch.n, bs, es) >= q:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# simulation study


@dataclass
class StudyResult:
    s_grid: np.ndarray
    methods: tuple[str, ...]
    quantiles: tuple[float, ...]
    coverage: dict
    limits: dict

    def summary(self, s_lo: float = 20.0, s_hi: float = 40.0):
        """Rows (method, level, mean, stdev) over the s subrange."""
        sel = (self.s_grid >= s_lo) & (self.s_grid <= s_hi)
        rows = []
        for m in self.methods:
            for q in self.quantiles:
                c = self.coverage[(m, q)][sel]
                sd = float(c.std(ddof=1)) if c.size > 1 else 0.0
                rows.append((m, q, float(c.mean()), sd))
        return rows


def _study_cell(
    idx: int,
    s: float,
    t: float,
    u: float,
    eps: float,
    b: float,
    reps: int,
    methods,
    quantiles,
    grid: GridConfig,
    seed: int,
):
    rng = RngHandle(seed, derive_stream_id("simulate", idx))
    gen = rng.generator
    ns = gen.poisson(eps * s + b, reps)
    ys = gen.poisson(t * b, reps)
    zs = gen.poisson(u * eps, reps)
    out = {}
    for m in methods:
        if m == "ds":
            lims = np.empty((len(quantiles), reps))
            for j in range(reps):
                ds = Dataset(
                    (ChannelObservation(int(ns[j]), int(ys[j]), int(zs[j]), t, u),),
                    label=str(j),
                )
                try:
                    lims[:, j] = dataset_limits(ds, quantiles, grid)
                except UnboundedLimit:
                    lims[:, j] = math.inf
        else:
            lims = bayes_upper_limits_batch(
                ns, ys, zs, t, u, prior_preset(m), quantiles
            )
        out[m] = lims
    return out


def simulate_study(
    t: float,
    u: float,
    eps: float,
    b: float,
    s_grid,
    reps: int,
    methods=("ds", "B1", "B2", "upper", "lower"),
    seed: int = DEFAULT_SEED,
    quantiles=(0.90, 0.99),
    grid: GridConfig = GridConfig(),
    threads: int = 1,
) -> StudyResult:
    """Generate ``reps`` datasets at each s, apply every method to the
    same datasets, and record per-s coverage of the resulting limits.

    Coverage uses the strict event s < limit.  Each s value owns an
    independent random stream keyed by its grid index, so results do
    not depend on scheduling or the worker count.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    s_grid = np.asarray(s_grid, dtype=float)
    methods = tuple(methods)
    quantiles = tuple(float(q) for q in quantiles)
    cell = partial(
        _study_cell_star,
        t=t,
        u=u,
        eps=eps,
        b=b,
        reps=reps,
        methods=methods,
        quantiles=quantiles,
        grid=grid,
        seed=seed,
    )
    cells = _parallel_map(cell, list(enumerate(s_grid)), threads)

    coverage = {}
    limits = {}
    for m in methods:
        for qi, q in enumerate(quantiles):
            lim = np.stack([c[m][qi] for c in cells])
            limits[(m, q)] = lim
            coverage[(m, q)] = (lim > s_grid[:, None]).mean(axis=1)
    return StudyResult(
        s_grid=s_grid,
        methods=methods,
        quantiles=quantiles,
        coverage=coverage,
        limits=limits,
    )


def _study_cell_star(item, **kw):
    idx, s = item
    return _study_cell(idx, float(s), **kw)


# ---------------------------------------------------------------------------
# interval length


def length_quantiles(limits, probs) -> list[float]:
    """Nearest-rank (lower) empirical quantiles of the limit values."""
    values = np.sort(np.asarray(limits, dtype=float))
    if values.size == 0:
        raise ValueError("limits must be nonempty")
    out = []
    for p in probs:
        if not 0.0 <= p <= 1.0:
            raise ValueError("probabilities must lie in [0, 1]")
        rank = max(1, math.ceil(p * values.size))
        out.append(float(values[rank - 1]))
    return out
