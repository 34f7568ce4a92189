"""Truncation-level selection, regularity diagnostics and brackets.

The selection scans are cross-checked against direct reimplementations on
small problems: quadratic-time, no shared helpers, so a regression in the
vectorised code cannot hide.
"""

import math

import numpy as np
import pytest

from igssm import (
    InfeasibleError,
    PriorSpec,
    bias_profile,
    bracket_dimensions,
    check_assumptions,
    composite_constants,
    make_operator,
    make_parameters,
    make_weights,
    max_dimension,
    minimax_dimension,
    oracle_dimension,
    risk_decomposition,
    shift_sq_norm,
)


def brute_oracle(theta_vals, mu, amp, eps, tail):
    """Smallest argmin of max(b_m, eps sum_{j<=m} amp_j), written plainly."""
    n = len(theta_vals)
    best = None
    for m in range(1, n + 1):
        bias = sum((theta_vals[j] - mu[j]) ** 2 for j in range(m, n)) + tail
        var = eps * sum(amp[:m])
        rate = max(bias, var)
        if best is None or rate < best[1] - 1e-15:
            best = (m, rate)
    return best


@pytest.mark.parametrize("seed", range(6))
def test_oracle_dimension_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 40))
    vals = rng.normal(size=n)
    lam = rng.uniform(0.2, 1.5, size=n)
    mu = rng.normal(scale=0.3, size=n)
    eps = float(rng.uniform(0.001, 0.5))
    theta = make_parameters("explicit", n, values=vals)
    op = make_operator("explicit", n, values=lam)
    prior = PriorSpec.gaussian(mu, np.ones(n))
    got = oracle_dimension(theta, prior, op, eps)
    want_m, want_rate = brute_oracle(vals, mu, (lam**-2.0).tolist(), eps, 0.0)
    assert got.dimension == want_m
    assert got.rate == pytest.approx(want_rate, rel=1e-12)


@pytest.mark.parametrize("seed", range(4))
def test_minimax_dimension_against_brute_force(seed):
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(3, 30))
    lam = rng.uniform(0.3, 1.2, size=n)
    w = np.concatenate([[1.0], np.sort(rng.uniform(0.001, 1.0, size=n - 1))[::-1]])
    w = np.minimum.accumulate(w)
    wc = make_weights("explicit", n, values=w, radius=2.0)
    op = make_operator("explicit", n, values=lam)
    eps = float(rng.uniform(0.001, 0.5))
    got = minimax_dimension(wc, op, eps)
    best = None
    for m in range(1, n + 1):
        rate = max(w[m - 1], eps * float(np.sum(lam[:m] ** -2.0)))
        if best is None or rate < best[1] - 1e-15:
            best = (m, rate)
    assert (got.dimension, got.rate) == (best[0], pytest.approx(best[1], rel=1e-12))


def test_search_range_boundaries():
    # direct problem: eps * 1 <= 1 always, so the cap floor(1/eps) binds
    op = make_operator("constant", 1000)
    assert max_dimension(op, 0.01) == 100
    assert max_dimension(op, 0.5) == 2
    # eps m^2 <= 1 for the unit-decay polynomial family
    op = make_operator("polynomial", 1000, decay=1.0)
    assert max_dimension(op, 0.01) == 10
    assert max_dimension(op, 1e-4) == 100
    # the stored length caps the range
    short = make_operator("constant", 3)
    assert max_dimension(short, 0.01) == 3
    # exact boundary eps * max-amp = amp_1 must stay inside
    assert max_dimension(make_operator("polynomial", 100, decay=0.5), 0.04) == 25


def test_risk_decomposition_terms_add_up():
    n = 12
    theta = make_parameters("polynomial", n, exponent=1.0, scale=2.0)
    op = make_operator("polynomial", n, decay=0.5)
    mu = np.full(n, 0.1)
    prior = PriorSpec.gaussian(mu, np.full(n, 0.7))
    eps, m = 0.04, 5
    dec = risk_decomposition(theta, prior, op, eps, m)
    assert dec.bias == pytest.approx(
        float(np.sum((theta.values[m:] - 0.1) ** 2)) + theta.sq_tail(), rel=1e-12
    )
    amp = op.values**-2.0
    assert dec.variance_proxy == pytest.approx(eps * float(np.sum(amp[:m])), rel=1e-12)
    post_var = eps * 0.7 / (0.7 * op.values[:m] ** 2 + eps)
    assert dec.post_var_sum == pytest.approx(float(np.sum(post_var)), rel=1e-12)
    assert dec.post_var_max == pytest.approx(float(np.max(post_var)), rel=1e-12)
    shrink = post_var / 0.7
    want_shift = float(np.sum(shrink**2 * (0.1 - theta.values[:m]) ** 2))
    assert dec.shift == pytest.approx(want_shift, rel=1e-12)
    assert dec.rate == max(dec.bias, dec.variance_proxy)


def test_bias_profile_reverse_accumulation():
    theta = make_parameters("explicit", 4, values=np.array([3.0, 2.0, 1.0, 0.5]))
    prior = PriorSpec.flat(4)
    prof = bias_profile(theta, prior)
    np.testing.assert_allclose(prof, [2**2 + 1 + 0.25, 1 + 0.25, 0.25, 0.0], rtol=1e-15)


def test_checker_certifies_unit_decay_polynomial():
    """The canonical smooth design: severity constant 1, regular variation
    within 3, submultiplicative across the whole checked range."""
    n = 10**6
    op = make_operator("polynomial", n, decay=1.0)
    theta = make_parameters("polynomial", n, exponent=1.6, scale=0.4)
    prior = PriorSpec.flat(n)
    w = make_weights("polynomial", n, exponent=1.0, radius=1.0)
    report = check_assumptions(theta, prior, op, (1e-2, 1e-4), weighted_class=w)
    assert report.c_lambda == pytest.approx(1.0)
    assert report.l_lambda <= 3.0
    assert report.submultiplicative and report.submult_witness is None
    assert report.checked_range == n  # factor pairs verified up to k*l = n
    assert math.isinf(report.d)
    assert report.kappa_oracle is not None and 0.0 < report.kappa_oracle <= 1.0
    assert report.kappa_minimax is not None and 0.0 < report.kappa_minimax <= 1.0


def test_checker_finds_submultiplicativity_violation():
    op = make_operator("exponential", 200, decay=0.5)
    theta = make_parameters("exponential", 200, exponent=0.5)
    prior = PriorSpec.flat(200)
    report = check_assumptions(theta, prior, op, (0.1,))
    assert not report.submultiplicative
    k, l = report.submult_witness
    # the witness really is a counterexample for the certified constant:
    # max-amp(k*l) > C * max-amp(k) * max-amp(l) in log space
    lhs = op.log_amplification[: k * l].max()
    rhs = (
        math.log(report.c_lambda)
        + op.log_amplification[:k].max()
        + op.log_amplification[:l].max()
    )
    assert lhs > rhs


def test_kappa_is_the_two_term_balance():
    n = 200
    op = make_operator("constant", n)
    theta = make_parameters("polynomial", n, exponent=1.0, scale=1.0)
    prior = PriorSpec.flat(n)
    eps = 0.01
    report = check_assumptions(theta, prior, op, (eps,))
    sel = oracle_dimension(theta, prior, op, eps)
    bias = bias_profile(theta, prior)[sel.dimension - 1]
    var = eps * sel.dimension
    assert report.kappa_oracle == pytest.approx(min(bias, var) / max(bias, var))


def test_proper_prior_floor_d():
    n = 50
    op = make_operator("constant", n)
    theta = make_parameters("polynomial", n, exponent=1.0)
    eps = 0.01
    # envelope at the constant design is max(sqrt(eps), eps) = 0.1 everywhere
    prior = PriorSpec.gaussian(np.zeros(n), np.full(n, 0.25))
    report = check_assumptions(theta, prior, op, (eps,))
    assert report.d == pytest.approx(0.25 / 0.1, rel=1e-9)


def test_brackets_contain_selected_dimension():
    n = 10**4
    op = make_operator("polynomial", n, decay=1.0)
    theta = make_parameters("polynomial", n, exponent=1.6, scale=0.4)
    prior = PriorSpec.flat(n)
    report = check_assumptions(theta, prior, op, (1e-3,))
    sel = oracle_dimension(theta, prior, op, 1e-3)
    m_lo, m_hi = bracket_dimensions(theta, prior, op, 1e-3, report)
    assert 1 <= m_lo <= sel.dimension <= m_hi <= max_dimension(op, 1e-3)
    # a larger dimension-prior constant can only widen the lower side
    lo2, hi2 = bracket_dimensions(theta, prior, op, 1e-3, report, c_lambda=4.0)
    assert lo2 <= m_lo and hi2 == m_hi


def test_bracket_infeasible_when_selection_exceeds_range():
    op = make_operator("exponential", 50, decay=0.5)
    theta = make_parameters("polynomial", 50, exponent=0.6, scale=1.0)
    prior = PriorSpec.flat(50)
    report = check_assumptions(theta, prior, op, (0.5,))
    with pytest.raises(InfeasibleError):
        bracket_dimensions(theta, prior, op, 0.5, report)


def test_composite_constants_assembly():
    """Recompute every composite from the report fields by hand."""
    n = 10**5
    op = make_operator("polynomial", n, decay=1.0)
    theta = make_parameters("polynomial", n, exponent=1.6, scale=0.4)
    prior = PriorSpec.flat(n)
    w = make_weights("polynomial", n, exponent=1.0, radius=2.0)
    grid = (1e-2, 1e-3)
    report = check_assumptions(theta, prior, op, grid, weighted_class=w)
    out = composite_constants(report, theta, prior, op, weighted_class=w)

    L, C = report.l_lambda, report.c_lambda
    sup_or = max(
        e * m * op.max_amplification(int(m)) / r
        for e, m, r in zip(report.eps_grid, report.oracle_dims, report.oracle_rates)
    )
    assert out["oracle_sieve"] == pytest.approx(10.0 * sup_or, rel=1e-12)

    d1 = math.ceil(5.0 * L / report.kappa_oracle)
    assert out["oracle_hierarchical"] == pytest.approx(
        10.0 * L**2 * max(8.0 * C, d1 * op.max_amplification(d1)), rel=1e-12
    )
    assert out["oracle_adaptive_mise"] == pytest.approx(
        2.0 * L * d1 * op.max_amplification(d1) + 16.0 * L * C, rel=1e-12
    )

    r = 2.0
    sup_mm = max(
        e * m * op.max_amplification(int(m)) / rate
        for e, m, rate in zip(report.eps_grid, report.minimax_dims, report.minimax_rates)
    )
    assert out["minimax_sieve"] == pytest.approx(
        10.0 * r * sup_mm / report.kappa_minimax, rel=1e-12
    )
    d2 = math.ceil(5.0 * L / report.kappa_minimax)
    assert out["minimax_hierarchical"] == pytest.approx(
        16.0 * L**2 * max(8.0 * C, d2 * op.max_amplification(d2)) * r, rel=1e-12
    )
    d3 = math.ceil(5.0 * L * r / report.kappa_minimax)
    assert out["minimax_adaptive_mise"] == pytest.approx(
        2.0 * L * d3 * op.max_amplification(d3) + 16.0 * L * C * r, rel=1e-12
    )

    # overriding the dimension-prior constant rescales only the C entries
    out2 = composite_constants(report, theta, prior, op, weighted_class=w, c_lambda=3.0)
    assert out2["oracle_sieve"] == out["oracle_sieve"]
    assert out2["oracle_adaptive_mise"] == pytest.approx(
        2.0 * L * d1 * op.max_amplification(d1) + 16.0 * L * 3.0, rel=1e-12
    )


def test_matched_prior_zero_balance_saturates_threshold():
    """A signal equal to the prior mean has zero bias at every cut, so the
    balance constant degenerates to zero and the threshold dimensions inside
    the composites saturate at the full sequence length."""
    n = 4
    op = make_operator("constant", n)
    theta = make_parameters("explicit", n, values=np.zeros(n))
    prior = PriorSpec.flat(n)
    report = check_assumptions(theta, prior, op, (0.1,))
    assert report.kappa_oracle == 0.0
    assert list(report.oracle_dims) == [1]  # variance-only argmin

    out = composite_constants(report, theta, prior, op)
    # Unit amplification everywhere: L = C = 1 and the oracle supremum is
    # eps * 1 * 1 / eps = 1, so by hand:
    #   sieve        = 10 * max(1 + 0, 0) * 1                    = 10
    #   hierarchical = 10 * 1 * max(8 * 1 * 1, D1 * 1), D1 = n   = 80
    #   adaptive     = 2 * 1 * D1 * 1 + 16 * 1 * 1 * 1 + 0       = 24
    assert out["oracle_sieve"] == pytest.approx(10.0, rel=1e-12)
    assert out["oracle_hierarchical"] == pytest.approx(80.0, rel=1e-12)
    assert out["oracle_adaptive_mise"] == pytest.approx(24.0, rel=1e-12)


def test_shift_norm_includes_tail():
    theta = make_parameters("polynomial", 100, exponent=1.0, scale=1.0)
    prior = PriorSpec.flat(100)
    got = shift_sq_norm(theta, prior)
    assert got == pytest.approx(float(np.sum(theta.values**2)) + theta.sq_tail(), rel=1e-12)


def test_eps_grid_validation():
    op = make_operator("constant", 10)
    theta = make_parameters("explicit", 10, values=np.zeros(10))
    prior = PriorSpec.flat(10)
    with pytest.raises(ValueError):
        check_assumptions(theta, prior, op, (0.1, 1.0))
    with pytest.raises(ValueError):
        oracle_dimension(theta, prior, op, 0.0)
