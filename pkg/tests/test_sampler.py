import numpy as np
import pytest

import _oracles as oracle
from conftest import small_dataset
from zinbreg.data import (
    CountMatrix,
    CovariateMatrix,
    Dataset,
    GroupAssignment,
    Hyperparameters,
    ProposalScales,
    standardize_covariates,
    validate_inputs,
)
from zinbreg.errors import NumericalFailure
from zinbreg.normalization import SizeFactors, estimate_css
from zinbreg.sampler import (
    ChainConfig,
    ModelState,
    _Engine,
    init_state,
    run_chain,
    run_chains_parallel,
    update_mu0,
    update_r,
    zero_indicator_prob,
)
from zinbreg.simulate import generate_zinb


HP = Hyperparameters()
SCALES = ProposalScales()


def _trace_arrays(trace):
    return (
        trace.gamma_sums, trace.delta_sums, trace.r_sums, trace.mu0_sum,
        trace.mu_sum, trace.beta_sum, trace.phi_sum, trace.mu_draws,
    )


def assert_traces_equal(a, b):
    for x, y in zip(_trace_arrays(a), _trace_arrays(b)):
        np.testing.assert_array_equal(x, y)
    assert a.accept_counts == b.accept_counts


def test_init_state_deterministic(tiny_dataset):
    s1 = init_state(tiny_dataset, HP, np.random.default_rng(5))
    s2 = init_state(tiny_dataset, HP, np.random.default_rng(5))
    np.testing.assert_array_equal(s1.gamma, s2.gamma)
    np.testing.assert_array_equal(s1.r, s2.r)
    np.testing.assert_array_equal(s1.mu, s2.mu)


def test_init_state_respects_zero_structure(tiny_dataset):
    state = init_state(tiny_dataset, HP, np.random.default_rng(1))
    y = tiny_dataset.counts.counts
    assert np.all(state.r[y > 0] == 0)
    state.check(y)


def test_init_state_distinct_seeds_differ(tiny_dataset):
    s1 = init_state(tiny_dataset, HP, np.random.default_rng(1))
    s2 = init_state(tiny_dataset, HP, np.random.default_rng(2))
    assert not np.array_equal(s1.gamma, s2.gamma) or not np.array_equal(s1.r, s2.r)


def test_zero_indicator_prob_matches_enumeration_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        lam = float(rng.uniform(0.05, 30))
        phi = float(rng.uniform(0.1, 20))
        a_pi = float(rng.uniform(0.2, 3))
        b_pi = float(rng.uniform(0.2, 3))
        assert zero_indicator_prob(lam, phi, a_pi, b_pi) == pytest.approx(
            oracle.zero_indicator_prob(lam, phi, a_pi, b_pi), rel=1e-12
        )


def test_zero_indicator_prob_unit_case_two_thirds():
    # a_pi=b_pi=1, phi=1, s*alpha=1: NB(0)=1/2, so P(r=1) = 1/(1+1/2) = 2/3
    assert zero_indicator_prob(1.0, 1.0, 1.0, 1.0) == pytest.approx(2.0 / 3.0)


def test_zero_indicator_prob_saturates_at_one():
    assert zero_indicator_prob(1e12, 1.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-6)


def _all_zero_column_dataset(n=30):
    # bypasses validate_inputs on purpose: a single feature observed at
    # zero in every sample isolates the r update
    y = np.zeros((n, 1), dtype=int)
    counts = CountMatrix(y, tuple(f"s{i}" for i in range(n)), ("f0",))
    covs = CovariateMatrix(np.zeros((n, 0)), ())
    groups = GroupAssignment(np.ones(n, dtype=int), 1)
    return Dataset(counts=counts, covariates=covs, groups=groups)


def test_update_r_empirical_two_thirds():
    ds = _all_zero_column_dataset()
    sf = SizeFactors(np.ones(ds.n), "css")
    state = ModelState(
        r=np.zeros((ds.n, 1), dtype=np.int8),
        mu0=np.zeros(1),
        mu=np.zeros((1, 1)),
        beta=np.zeros((0, 1)),
        gamma=np.zeros(1, dtype=np.int8),
        delta=np.zeros((0, 1), dtype=np.int8),
        phi=np.ones(1),
    )
    rng = np.random.default_rng(11)
    total = 0
    sweeps = 4000
    for _ in range(sweeps):
        update_r(state, ds, HP, rng, size_factors=sf)
        total += int(state.r.sum())
    assert total / (sweeps * ds.n) == pytest.approx(2.0 / 3.0, abs=0.01)


def test_update_r_prior_only_matches_beta_mean():
    ds = _all_zero_column_dataset()
    sf = SizeFactors(np.ones(ds.n), "css")
    hp = Hyperparameters(a_pi=2.0, b_pi=6.0)
    state = ModelState(
        r=np.zeros((ds.n, 1), dtype=np.int8),
        mu0=np.zeros(1),
        mu=np.zeros((1, 1)),
        beta=np.zeros((0, 1)),
        gamma=np.zeros(1, dtype=np.int8),
        delta=np.zeros((0, 1), dtype=np.int8),
        phi=np.ones(1),
    )
    rng = np.random.default_rng(12)
    total = 0
    sweeps = 4000
    for _ in range(sweeps):
        update_r(state, ds, hp, rng, size_factors=sf, prior_only=True)
        total += int(state.r.sum())
    assert total / (sweeps * ds.n) == pytest.approx(0.25, abs=0.01)


def test_state_invariants_hold_after_sweeps(tiny_dataset):
    sf = estimate_css(tiny_dataset.counts)
    eng = _Engine(tiny_dataset, sf, HP, SCALES)
    rng = np.random.default_rng(21)
    state = eng.init_state(rng)
    for _ in range(30):
        eng.sweep(state, rng)
        state.check(tiny_dataset.counts.counts)


def test_run_chain_exactly_one_draw():
    ds = small_dataset(seed=3)
    trace = run_chain(ds, HP, SCALES, ChainConfig(n_iter=21, burn_in=20, seed=4))
    assert trace.n_recorded == 1
    # a single draw has zero-variance moments
    assert np.all(trace.mu0_sumsq == np.square(trace.mu0_sum))


def test_run_chain_deterministic(tiny_dataset):
    cfg = ChainConfig(n_iter=60, burn_in=30, seed=9)
    t1 = run_chain(tiny_dataset, HP, SCALES, cfg)
    t2 = run_chain(tiny_dataset, HP, SCALES, cfg)
    assert_traces_equal(t1, t2)


def test_thinning_counts(tiny_dataset):
    trace = run_chain(tiny_dataset, HP, SCALES, ChainConfig(n_iter=50, burn_in=20, thin=7, seed=2))
    assert trace.n_recorded == len(range(20, 50, 7))


def test_parallel_matches_sequential(tiny_dataset):
    configs = [ChainConfig(n_iter=40, burn_in=20, seed=s) for s in (101, 202)]
    seq = [run_chain(tiny_dataset, HP, SCALES, c) for c in configs]
    par = run_chains_parallel(tiny_dataset, HP, SCALES, configs, max_workers=2)
    for a, b in zip(seq, par):
        assert_traces_equal(a, b)


def test_parallel_single_chain_identical(tiny_dataset):
    cfg = ChainConfig(n_iter=30, burn_in=10, seed=77)
    one = run_chain(tiny_dataset, HP, SCALES, cfg)
    via_pool = run_chains_parallel(tiny_dataset, HP, SCALES, [cfg])
    assert_traces_equal(one, via_pool[0])


def test_parallel_rejects_duplicate_seeds(tiny_dataset):
    configs = [ChainConfig(n_iter=10, burn_in=5, seed=1)] * 2
    with pytest.raises(ValueError):
        run_chains_parallel(tiny_dataset, HP, SCALES, configs)


def test_numerical_failure_detected(tiny_dataset, monkeypatch):
    def poison(self, state, rng):
        state.mu0[0] = np.nan

    monkeypatch.setattr(_Engine, "step_phi", poison)
    with pytest.raises(NumericalFailure) as err:
        run_chain(tiny_dataset, HP, SCALES, ChainConfig(n_iter=5, burn_in=1, seed=1))
    assert err.value.iteration == 0


def _fit_zinb(counts, covs, groups, n_iter, seed, scales=SCALES):
    ds = validate_inputs(
        counts,
        standardize_covariates(covs) if covs.n_covariates else covs,
        groups,
    )
    sf = SizeFactors(np.ones(ds.n), "css")
    return run_chain(ds, HP, scales, ChainConfig(n_iter=n_iter, seed=seed), size_factors=sf)


def test_mu0_recovery_single_taxon():
    # one feature, no shifts/covariates, true baseline 9
    counts, covs, groups, _ = generate_zinb(
        n=50, p=1, n_disc=0, pi_zero=0.2, phi=10.0, mu0_low=9.0, mu0_high=9.0, seed=31
    )
    trace = _fit_zinb(counts, covs, groups, 1600, seed=5)
    mu0_mean = trace.mu0_sum[0] / trace.n_recorded
    assert abs(mu0_mean - 9.0) < 0.5


def test_phi_recovery_single_taxon():
    counts, covs, groups, _ = generate_zinb(
        n=200, p=1, n_disc=0, pi_zero=0.2, phi=10.0, mu0_low=7.0, mu0_high=7.0, seed=32
    )
    trace = _fit_zinb(counts, covs, groups, 2500, seed=6)
    phi_mean = trace.phi_sum[0] / trace.n_recorded
    assert 5.0 <= phi_mean <= 20.0


def test_strong_signal_ppi_high():
    counts, covs, groups, truth = generate_zinb(
        n=60, p=12, n_disc=4, pi_zero=0.2, phi=10.0, seed=33
    )
    trace = _fit_zinb(counts, covs, groups, 2000, seed=7)
    ppi = trace.ppi_gamma()
    assert np.all(ppi[truth.gamma_true == 1] > 0.9)


def test_group_label_equivariance_three_groups():
    counts, covs, groups, truth = generate_zinb(
        n=90, p=8, n_disc=4, n_groups=3, pi_zero=0.15, phi=10.0, seed=34
    )
    swapped = GroupAssignment(
        np.select(
            [groups.labels == 2, groups.labels == 3], [3, 2], groups.labels
        ),
        3,
        reference_group=1,
    )
    t_orig = _fit_zinb(counts, covs, groups, 2000, seed=8)
    t_swap = _fit_zinb(counts, covs, swapped, 2000, seed=8)
    m_orig = t_orig.mu_sum / t_orig.n_recorded
    m_swap = t_swap.mu_sum / t_swap.n_recorded
    # swapping labels 2 and 3 swaps the recovered shift rows
    np.testing.assert_allclose(m_orig[1], m_swap[2], atol=0.3)
    np.testing.assert_allclose(m_orig[2], m_swap[1], atol=0.3)


def test_taxon_view_matches_state(tiny_dataset):
    state = init_state(tiny_dataset, HP, np.random.default_rng(44))
    params = state.taxon(0)
    assert params.mu0 == state.mu0[0]
    assert params.gamma == state.gamma[0]
    np.testing.assert_array_equal(params.beta, state.beta[:, 0])


def test_update_mu0_identity_proposal_always_accepts(tiny_dataset, monkeypatch):
    # forcing the random-walk step to zero makes the MH ratio exactly one
    sf = estimate_css(tiny_dataset.counts)
    state = init_state(tiny_dataset, HP, np.random.default_rng(3), size_factors=sf)
    before = state.mu0.copy()

    class FixedRng:
        def __init__(self):
            self.inner = np.random.default_rng(0)

        def standard_normal(self, size=None):
            return np.zeros(size)

        def random(self, size=None):
            return self.inner.random(size)

    update_mu0(state, tiny_dataset, HP, SCALES, FixedRng(), size_factors=sf)
    np.testing.assert_array_equal(state.mu0, before)


def test_adaptation_changes_scales_only_during_burn_in(tiny_dataset):
    cfg = ChainConfig(n_iter=220, burn_in=200, seed=13, adapt_scales=True)
    trace = run_chain(tiny_dataset, HP, SCALES, cfg)
    assert trace.n_recorded == 20
    # determinism still holds under adaptation
    trace2 = run_chain(tiny_dataset, HP, SCALES, cfg)
    assert_traces_equal(trace, trace2)


def test_diagnostics_recorded(tiny_dataset):
    cfg = ChainConfig(n_iter=15, burn_in=5, seed=3, diagnostics=True)
    trace = run_chain(tiny_dataset, HP, SCALES, cfg)
    assert trace.diagnostics is not None
    assert trace.diagnostics["log_posterior"].shape == (15,)
    assert np.all(np.isfinite(trace.diagnostics["log_posterior"]))


def _naive_gamma_step(state, ds, sf, hp, scales, rng):
    """Reference add-delete + within-model pass built on taxon_log_lik,
    consuming the same rng draws as the engine."""
    import math

    from zinbreg.likelihood import (
        TaxonParams,
        log_normal_density,
        log_t_density,
        taxon_log_lik,
    )

    p, big_k = ds.p, ds.n_groups
    ref0 = ds.groups.reference_group - 1
    nonref = [k for k in range(big_k) if k != ref0]
    y = ds.counts.counts
    df, ssq = 2 * hp.a_t, hp.b_t / hp.a_t

    def col_ll(j, gamma_j, mu_col):
        params = TaxonParams(
            mu0=float(state.mu0[j]), mu_k=mu_col, beta=state.beta[:, j],
            phi=float(state.phi[j]), gamma=gamma_j, delta=state.delta[:, j],
            reference_group=ds.groups.reference_group,
        )
        return taxon_log_lik(y[:, j], state.r[:, j], params, sf, ds.covariates, ds.groups)

    perm = rng.permutation(p)
    prop = scales.tau_mu * rng.standard_normal((len(nonref), p))
    log_u = np.log(rng.random(p))
    s_gamma = int(state.gamma.sum())
    for j in perm:
        j = int(j)
        if state.gamma[j]:
            flip_mu = np.zeros(big_k)
            cur_mu = state.mu[:, j].copy()
            lr = (
                col_ll(j, 0, flip_mu) - col_ll(j, 1, cur_mu)
                + math.log((hp.b_omega + p - s_gamma) / (hp.a_omega + s_gamma - 1.0))
                + float(np.sum(log_normal_density(cur_mu[nonref], scales.tau_mu**2)))
                - float(np.sum(log_t_density(cur_mu[nonref], df, ssq)))
            )
            if log_u[j] < lr:
                state.gamma[j] = 0
                state.mu[nonref, j] = 0.0
                s_gamma -= 1
        else:
            flip_mu = np.zeros(big_k)
            flip_mu[nonref] = prop[:, j]
            lr = (
                col_ll(j, 1, flip_mu) - col_ll(j, 0, np.zeros(big_k))
                + math.log((hp.a_omega + s_gamma) / (hp.b_omega + p - s_gamma - 1.0))
                + float(np.sum(log_t_density(prop[:, j], df, ssq)))
                - float(np.sum(log_normal_density(prop[:, j], scales.tau_mu**2)))
            )
            if log_u[j] < lr:
                state.gamma[j] = 1
                state.mu[nonref, j] = prop[:, j]
                s_gamma += 1

    act = np.flatnonzero(state.gamma)
    for k in nonref:
        step = 0.5 * scales.tau_mu * rng.standard_normal(act.size)
        log_uu = np.log(rng.random(act.size))
        for idx, j in enumerate(act):
            j = int(j)
            cur_mu = state.mu[:, j].copy()
            new_mu = cur_mu.copy()
            new_mu[k] = cur_mu[k] + step[idx]
            lr = (
                col_ll(j, 1, new_mu) - col_ll(j, 1, cur_mu)
                + float(log_t_density(new_mu[k], df, ssq))
                - float(log_t_density(cur_mu[k], df, ssq))
            )
            if log_uu[idx] < lr:
                state.mu[k, j] = new_mu[k]


def test_gamma_step_matches_naive_reference():
    from zinbreg.sampler import update_gamma_mu

    for k_groups, seed in ((2, 91), (3, 92)):
        n = 12 if k_groups == 2 else 15
        ds = small_dataset(seed=seed, n=n, p=6)
        if k_groups == 3:
            labels = 1 + np.arange(n) % 3
            ds = validate_inputs(
                ds.counts, ds.covariates, GroupAssignment(labels, 3)
            )
        sf = estimate_css(ds.counts)
        s_eng = init_state(ds, HP, np.random.default_rng(seed), size_factors=sf)
        s_ref = s_eng.copy()
        rng_eng = np.random.default_rng(seed + 1)
        rng_ref = np.random.default_rng(seed + 1)
        for _ in range(25):
            update_gamma_mu(s_eng, ds, HP, SCALES, rng_eng, size_factors=sf)
            _naive_gamma_step(s_ref, ds, sf, HP, SCALES, rng_ref)
        np.testing.assert_array_equal(s_eng.gamma, s_ref.gamma)
        np.testing.assert_allclose(s_eng.mu, s_ref.mu, atol=1e-10)


def _naive_delta_step(state, ds, sf, hp, scales, rng):
    import math

    from zinbreg.likelihood import (
        TaxonParams,
        log_normal_density,
        log_t_density,
        taxon_log_lik,
    )

    p, big_r = ds.p, ds.n_covariates
    y = ds.counts.counts
    df, ssq = 2 * hp.a_t, hp.b_t / hp.a_t

    def col_ll(j, beta_col, delta_col):
        params = TaxonParams(
            mu0=float(state.mu0[j]), mu_k=state.mu[:, j], beta=beta_col,
            phi=float(state.phi[j]), gamma=int(state.gamma[j]), delta=delta_col,
            reference_group=ds.groups.reference_group,
        )
        return taxon_log_lik(y[:, j], state.r[:, j], params, sf, ds.covariates, ds.groups)

    pick = rng.integers(0, big_r, size=p)
    prop = scales.tau_beta * rng.standard_normal(p)
    log_u = np.log(rng.random(p))
    for j in range(p):
        r_idx = int(pick[j])
        s_j = int(state.delta[:, j].sum())
        cur_beta = state.beta[:, j].copy()
        cur_delta = state.delta[:, j].copy()
        new_beta = cur_beta.copy()
        new_delta = cur_delta.copy()
        if cur_delta[r_idx]:
            new_beta[r_idx] = 0.0
            new_delta[r_idx] = 0
            lr = (
                col_ll(j, new_beta, new_delta) - col_ll(j, cur_beta, cur_delta)
                + math.log((hp.b_p + big_r - s_j) / (hp.a_p + s_j - 1.0))
                + float(log_normal_density(cur_beta[r_idx], scales.tau_beta**2))
                - float(log_t_density(cur_beta[r_idx], df, ssq))
            )
        else:
            new_beta[r_idx] = prop[j]
            new_delta[r_idx] = 1
            lr = (
                col_ll(j, new_beta, new_delta) - col_ll(j, cur_beta, cur_delta)
                + math.log((hp.a_p + s_j) / (hp.b_p + big_r - s_j - 1.0))
                + float(log_t_density(prop[j], df, ssq))
                - float(log_normal_density(prop[j], scales.tau_beta**2))
            )
        if log_u[j] < lr:
            state.beta[:, j] = new_beta
            state.delta[:, j] = new_delta

    for r_idx in range(big_r):
        act = np.flatnonzero(state.delta[r_idx])
        step = 0.5 * scales.tau_beta * rng.standard_normal(act.size)
        log_uu = np.log(rng.random(act.size))
        for idx, j in enumerate(act):
            j = int(j)
            cur_beta = state.beta[:, j].copy()
            new_beta = cur_beta.copy()
            new_beta[r_idx] = cur_beta[r_idx] + step[idx]
            lr = (
                col_ll(j, new_beta, state.delta[:, j]) - col_ll(j, cur_beta, state.delta[:, j])
                + float(log_t_density(new_beta[r_idx], df, ssq))
                - float(log_t_density(cur_beta[r_idx], df, ssq))
            )
            if log_uu[idx] < lr:
                state.beta[r_idx, j] = new_beta[r_idx]


def test_delta_step_matches_naive_reference():
    from zinbreg.sampler import update_delta_beta

    ds = small_dataset(seed=93, n=12, p=6, n_covariates=3)
    sf = estimate_css(ds.counts)
    s_eng = init_state(ds, HP, np.random.default_rng(6), size_factors=sf)
    s_ref = s_eng.copy()
    rng_eng = np.random.default_rng(7)
    rng_ref = np.random.default_rng(7)
    for _ in range(25):
        update_delta_beta(s_eng, ds, HP, SCALES, rng_eng, size_factors=sf)
        _naive_delta_step(s_ref, ds, sf, HP, SCALES, rng_ref)
    np.testing.assert_array_equal(s_eng.delta, s_ref.delta)
    np.testing.assert_allclose(s_eng.beta, s_ref.beta, atol=1e-10)
