"""Conditional CDF machinery for difference-ratios of independent gammas.

Both the per-channel belief-interval CDFs and the Bayesian posterior
CDF reduce to the same object.  For independent A ~ Gamma(kn, wn),
B ~ Gamma(kb, wb), E ~ Gamma(ke, we) (shape-scale; a shape-0 gamma is
the constant 0) define

    survival(x) = P(A > B + x * E),    x >= 0.

The normalized CDF of the ratio (A - B) / E restricted to the
nonnegative half-line is then 1 - survival(x) / den, where den is the
probability of the conditioning event supplied by the caller.

Two interchangeable evaluation routes, cross-checked in the tests:

"series" (exact, integer shapes).  P(A > c) is a Poisson tail for
integer kn, and averaging the tail over the B and E laws yields

    survival(x) = P(NB(kb, pb) + NB(ke, pe(x)) <= kn - 1),
    pb = wb / (wn + wb),    pe(x) = x * we / (wn + x * we),

a finite convolution of negative binomial masses.  Every term is
positive, so no cancellation occurs; cost is O(kn) per point.

"quadrature" (any positive real shapes).  The beta-CDF form

    survival(x) = I_alpha(ke, kn)
        - int_0^alpha I_q(g)(ke + kn, kb) dBeta(g; ke, kn) dg,
    alpha = wn / (wn + x * we),
    q(g)  = wb / (wb + wn * (1 - g / alpha)),

with the inner integral computed by the adaptive Simpson rule after
the substitution g = alpha * v.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import betaincinv

from .specfun import QuadratureConfig, beta_cdf, beta_pdf, integrate

# Above this kn the O(kn) series is slower than quadrature; beyond the
# log-start underflow bound the linear-space recurrences lose the mass
# anyway, so "auto" falls back to quadrature.
_SERIES_MAX_SHAPE = 20_000
_SERIES_LOG_START_MIN = -600.0

# CDF values may stray outside [0, 1] by quadrature noise up to this
# slack and are clamped; larger excursions indicate a numerical failure.
CLAMP_SLACK = 1e-9


class NumericalError(RuntimeError):
    """A numerical result fell outside its mathematically valid range."""


def _validate(kn, wn, kb, wb, ke, we) -> None:
    if min(kn, kb, ke) < 0:
        raise ValueError("gamma shapes must be >= 0")
    if min(wn, wb, we) <= 0:
        raise ValueError("gamma scales must be positive")


def _is_integral(k: float) -> bool:
    return abs(k - round(k)) <= 1e-9


def _nb_pmf_block(r: float, p, count: int):
    """Negative binomial pmf values at 0..count-1, vectorized over p.

    p may be a scalar or a 1-d array; the result has shape
    (count, len(p)).  r == 0 is the degenerate distribution at 0.
    Start values that underflow are returned as exact zeros, which is
    the correct limit for this module's use (the mass below ``count``
    is then negligible relative to double precision).
    """
    p = np.atleast_1d(np.asarray(p, dtype=float))
    out = np.zeros((count, p.size))
    if r == 0:
        out[0] = 1.0
        return out
    with np.errstate(divide="ignore"):
        log_start = r * np.log1p(-p)
    out[0] = np.exp(log_start)
    for m in range(1, count):
        out[m] = out[m - 1] * p * ((r + m - 1.0) / m)
    return out


def survival_series(x, kn, wn, kb, wb, ke, we) -> np.ndarray:
    """Exact evaluation of P(A > B + x*E) for integer shapes."""
    _validate(kn, wn, kb, wb, ke, we)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise ValueError("x must be >= 0")
    for k in (kn, kb, ke):
        if not _is_integral(k):
            raise ValueError("series route requires integer shapes")
    kn, kb, ke = int(round(kn)), int(round(kb)), int(round(ke))
    if kn == 0:
        return np.zeros(x.shape)
    pb = wb / (wn + wb)
    if kb > 0 and kb * math.log1p(-pb) < _SERIES_LOG_START_MIN:
        raise NumericalError(
            "background block underflows in the series route; "
            "use the quadrature route"
        )
    nb_b = _nb_pmf_block(kb, pb, kn)[:, 0]
    with np.errstate(invalid="ignore"):
        pe = np.where(np.isinf(x), 1.0, x * we / (wn + x * we))
    cum_e = np.cumsum(_nb_pmf_block(ke, pe, kn), axis=0)
    return nb_b[::-1] @ cum_e


_BREAK_LEVELS = np.array(
    [1e-14, 1e-10, 1e-6, 1e-3, 0.05, 0.25, 0.5, 0.75, 0.95, 1 - 1e-3, 1 - 1e-6]
)


def _inner_breakpoints(alpha, kn, wn, kb, wb, ke) -> np.ndarray:
    """Subdivision seeds for the inner integral (in v = gamma/alpha).

    The integrand is a product of two localized features: the
    Beta(ke, kn) density mass (at gamma = alpha * v) and the knee where
    the Beta(ke+kn, kb) CDF of q(v) = wb / (wb + wn (1 - v)) switches
    from 0 to 1.  An adaptive rule started on a single interval can
    step straight over either feature, so both are bracketed here by
    their exact quantiles.
    """
    dens_q = betaincinv(ke, kn, _BREAK_LEVELS) / alpha
    knee_q = betaincinv(ke + kn, kb, _BREAK_LEVELS)
    knee_v = 1.0 - (wb / wn) * (1.0 - knee_q) / knee_q
    pts = np.concatenate([[0.0, 1.0], dens_q, knee_v])
    pts = np.unique(pts[(pts >= 0.0) & (pts <= 1.0)])
    return pts


def survival_quadrature(
    x: float, kn, wn, kb, wb, ke, we, quad: QuadratureConfig | None = None
) -> float:
    """Beta-CDF evaluation of P(A > B + x*E) at a single point."""
    _validate(kn, wn, kb, wb, ke, we)
    if x < 0:
        raise ValueError("x must be >= 0")
    quad = quad or QuadratureConfig()
    if kn == 0 or math.isinf(x):
        return 0.0
    alpha = wn / (wn + x * we)
    head = beta_cdf(alpha, ke, kn)
    if ke == 0:
        # E is the constant 0: survival does not depend on x.
        inner = beta_cdf(wb / (wb + wn), kn, kb)
    elif kb == 0:
        inner = 0.0
    else:

        def integrand(v: float) -> float:
            q = wb / (wb + wn * (1.0 - v))
            return (
                beta_cdf(q, ke + kn, kb) * beta_pdf(alpha * v, ke, kn) * alpha
            )

        pts = _inner_breakpoints(alpha, kn, wn, kb, wb, ke)
        piece_cfg = QuadratureConfig(
            rel_tol=quad.rel_tol,
            abs_tol=quad.abs_tol / max(len(pts) - 1, 1),
            max_subdivisions=quad.max_subdivisions,
            rule=quad.rule,
            rectangle_points=quad.rectangle_points,
        )
        inner = sum(
            integrate(integrand, float(a), float(b), piece_cfg)
            for a, b in zip(pts[:-1], pts[1:])
        )
    return min(max(head - inner, 0.0), 1.0)


def survival(
    x,
    kn,
    wn,
    kb,
    wb,
    ke,
    we,
    method: str = "auto",
    quad: QuadratureConfig | None = None,
):
    """P(A > B + x*E); x may be a scalar or an array.

    method "auto" prefers the exact series whenever all shapes are
    integers in range, falling back to quadrature otherwise.
    """
    if method == "auto":
        series_ok = all(
            _is_integral(k) and k <= _SERIES_MAX_SHAPE for k in (kn, kb, ke)
        )
        if series_ok:
            pb = wb / (wn + wb)
            if kb > 0 and kb * math.log1p(-pb) < _SERIES_LOG_START_MIN:
                series_ok = False
        method = "series" if series_ok else "quadrature"
    scalar = np.ndim(x) == 0
    if method == "series":
        out = survival_series(x, kn, wn, kb, wb, ke, we)
        return float(out[0]) if scalar else out
    if method == "quadrature":
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.array(
            [survival_quadrature(float(v), kn, wn, kb, wb, ke, we, quad) for v in xs]
        )
        return float(out[0]) if scalar else out
    raise ValueError(f"unknown method {method!r}")


def conditioning_probability(kn, wn, kb, wb) -> float:
    """P(A >= B) for A ~ Gamma(kn, wn), B ~ Gamma(kb, wb), kn >= 1."""
    _validate(kn, wn, kb, wb, 1.0, 1.0)
    if kn == 0:
        raise ValueError("conditioning requires a nondegenerate numerator")
    return beta_cdf(wn / (wn + wb), kb, kn)


def clamp_unit(values, where: str = "cdf"):
    """Clip CDF values to [0, 1], rejecting excursions beyond CLAMP_SLACK."""
    arr = np.asarray(values, dtype=float)
    if np.any(np.isnan(arr)):
        raise NumericalError(f"{where} evaluation produced NaN")
    low, high = arr.min(initial=0.0), arr.max(initial=1.0)
    if low < -CLAMP_SLACK or high > 1.0 + CLAMP_SLACK:
        raise NumericalError(
            f"{where} value escaped [0, 1] by more than {CLAMP_SLACK}: "
            f"range [{low}, {high}]"
        )
    out = np.clip(arr, 0.0, 1.0)
    return float(out) if np.ndim(values) == 0 else out
