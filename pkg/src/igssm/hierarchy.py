"""Hierarchical prior on the truncation dimension and the resulting
fully data-driven estimator.

On top of the sieve priors of dimension ``m = 1..M`` (``M`` the search
range from :func:`igssm.selection.max_dimension`), the dimension itself
receives the prior

    p(m)  propto  exp(-3 C m / 2) * prod_{j<=m} (v_j / post_var_j)^{1/2},

whose posterior given the data has log-weights

    l_m = (1/2) sum_{j<=m} (post_mean_j - mu_j)^2 / post_var_j  -  (3/2) C m.

``C`` is the operator constant from the regularity diagnostics (an upper
bound for ``max_{j>k} lambda_j^2 / min_{j<=k} lambda_j^2``).  Everything is
normalised through a single max-shifted log-sum-exp, so the weights are
invariant under constant shifts of the log scale.

Under the fully improper prior the contrast reduces to
``sum_{j<=m} Y_j^2 / eps`` and the posterior-mean estimator becomes the
shrunk projection ``omega_j * Y_j / lambda_j``; the dimension *prior*
itself, however, has no improper limit and is reported as undefined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .posterior import PosteriorSummary, PriorSpec, log_variance_ratio
from .rng import HIERARCHY_DRAW, stream
from .selection import max_dimension
from .sequences import OperatorSequence, _readonly

__all__ = [
    "DimensionDistribution",
    "AdaptiveEstimate",
    "ImproperPriorError",
    "dimension_prior",
    "dimension_posterior",
    "adaptive_estimate",
    "sample_hierarchical_posterior",
]


class ImproperPriorError(ValueError):
    """The dimension prior is undefined under improper coordinate priors."""


@dataclass(frozen=True)
class DimensionDistribution:
    """Distribution of the truncation dimension on ``1..M``.

    ``log_weights`` are the unnormalised log-masses as handed in;
    ``probs`` the normalised masses.  Normalisation subtracts the maximum
    before exponentiating, so any constant shift of ``log_weights`` leaves
    ``probs`` unchanged.
    """

    log_weights: np.ndarray
    probs: np.ndarray
    kind: str  # "prior" | "posterior"

    def __post_init__(self) -> None:
        lw = _readonly(self.log_weights)
        p = _readonly(self.probs)
        if lw.ndim != 1 or lw.size == 0 or lw.shape != p.shape:
            raise ValueError("log weights and probabilities must be matching 1-d arrays")
        if not np.all(np.isfinite(lw)):
            raise ValueError("log weights must be finite")
        object.__setattr__(self, "log_weights", lw)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_log_weights(cls, log_weights: np.ndarray, kind: str) -> "DimensionDistribution":
        lw = np.asarray(log_weights, dtype=np.float64)
        shifted = lw - np.max(lw)
        p = np.exp(shifted)
        p /= p.sum()
        return cls(lw, p, kind)

    @property
    def support_size(self) -> int:
        return self.probs.size

    def tail_mass(self, m_lo: int, m_hi: int) -> float:
        """Posterior mass outside the bracket ``[m_lo, m_hi]`` (1-indexed)."""
        if not 1 <= m_lo <= m_hi <= self.support_size:
            raise ValueError(f"bracket [{m_lo}, {m_hi}] outside 1..{self.support_size}")
        return float(np.sum(self.probs[: m_lo - 1]) + np.sum(self.probs[m_hi:]))


def dimension_prior(
    prior: PriorSpec,
    op: OperatorSequence,
    eps: float,
    c_lambda: float,
) -> DimensionDistribution:
    """Prior masses of the truncation dimension on ``1..M``.

    The variance-ratio product is accumulated as a running sum of
    ``log1p(v_j lambda_j^2 / eps)``; improper coordinates inside the search
    range make the prior undefined.
    """
    m_top = max_dimension(op, eps)
    if np.any(prior.improper[:m_top]):
        raise ImproperPriorError(
            "dimension prior is undefined when the search range contains an "
            "improper coordinate; only the dimension posterior exists"
        )
    _check_c(c_lambda)
    log_ratio = log_variance_ratio(prior.head(m_top), op.head(m_top), eps)
    dims = np.arange(1, m_top + 1, dtype=np.float64)
    lw = 0.5 * np.cumsum(log_ratio) - 1.5 * c_lambda * dims
    return DimensionDistribution.from_log_weights(lw, "prior")


def dimension_posterior(
    summary: PosteriorSummary,
    prior: PriorSpec,
    op: OperatorSequence,
    eps: float,
    c_lambda: float,
) -> DimensionDistribution:
    """Posterior masses of the truncation dimension on ``1..M``.

    The data enter through the cumulative contrast
    ``sum_{j<=m} (post_mean_j - mu_j)^2 / post_var_j`` (which equals
    ``sum_{j<=m} Y_j^2 / eps`` under the fully improper prior).
    """
    if summary.n != prior.n or prior.n != op.n:
        raise ValueError("summary, prior and operator lengths must match")
    _check_c(c_lambda)
    m_top = max_dimension(op, eps)
    contrast = (summary.post_mean[:m_top] - prior.means[:m_top]) ** 2 / summary.post_var[:m_top]
    dims = np.arange(1, m_top + 1, dtype=np.float64)
    lw = 0.5 * np.cumsum(contrast) - 1.5 * c_lambda * dims
    return DimensionDistribution.from_log_weights(lw, "posterior")


@dataclass(frozen=True)
class AdaptiveEstimate:
    """The posterior-mean estimator under the hierarchical prior.

    ``values`` is the full estimate (prior mean beyond the search range);
    ``omega[j-1] = P(dimension >= j | data)`` are the non-increasing
    shrinkage weights on ``1..M`` with ``omega_1 = 1``.
    """

    values: np.ndarray
    omega: np.ndarray
    dimension_posterior: DimensionDistribution

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(self.values))
        object.__setattr__(self, "omega", _readonly(self.omega))

    @property
    def search_range(self) -> int:
        return self.omega.size


def adaptive_estimate(
    summary: PosteriorSummary,
    prior: PriorSpec,
    op: OperatorSequence,
    eps: float,
    c_lambda: float,
) -> AdaptiveEstimate:
    """Posterior-mean estimate under the hierarchical prior.

    Coordinatewise it interpolates between the prior mean and the
    coordinate posterior mean,

        est_j = (1 - omega_j) mu_j + omega_j post_mean_j,   j <= M,

    and equals the mixture ``sum_m p(m | data) * sieve-estimate(m)``
    exactly; beyond the search range the estimate is the prior mean.
    """
    dist = dimension_posterior(summary, prior, op, eps, c_lambda)
    m_top = dist.support_size
    omega = np.clip(np.cumsum(dist.probs[::-1])[::-1], 0.0, 1.0)
    values = prior.means.copy()
    values[:m_top] += omega * (summary.post_mean[:m_top] - prior.means[:m_top])
    return AdaptiveEstimate(values, omega, dist)


def sample_hierarchical_posterior(
    summary: PosteriorSummary,
    prior: PriorSpec,
    op: OperatorSequence,
    eps: float,
    c_lambda: float,
    n_draws: int,
    seed: int,
    rep: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw from the joint posterior: first the dimension by inverse-CDF
    lookup, then the sieve posterior of that dimension.

    Returns ``(draws, dims)`` with ``draws`` of shape ``(n_draws, n)`` and
    ``dims`` the 1-indexed dimensions drawn.  The draw order is fixed —
    all dimensions first, then one Gaussian block — so runs are
    reproducible under a fixed seed.
    """
    if n_draws < 1:
        raise ValueError("need at least one draw")
    dist = dimension_posterior(summary, prior, op, eps, c_lambda)
    m_top = dist.support_size
    rng = stream(seed, HIERARCHY_DRAW, rep)
    cdf = np.cumsum(dist.probs)
    u = rng.random(n_draws)
    dims = np.minimum(np.searchsorted(cdf, u, side="right"), m_top - 1) + 1
    width = int(dims.max())
    z = rng.standard_normal((n_draws, width))
    draws = np.tile(prior.means, (n_draws, 1))
    gauss = summary.post_mean[:width] + np.sqrt(summary.post_var[:width]) * z
    keep = np.arange(1, width + 1) <= dims[:, None]
    draws[:, :width] = np.where(keep, gauss, draws[:, :width])
    return draws, dims


def _check_c(c_lambda: float) -> None:
    if not np.isfinite(c_lambda) or c_lambda < 1.0:
        raise ValueError("operator constant must be finite and >= 1")
