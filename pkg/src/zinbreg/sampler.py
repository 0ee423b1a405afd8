"""Metropolis-Hastings-within-Gibbs sampler for the zero-inflated negative
binomial regression model.

One sweep applies, in order:

1. redraw of the extra-zero indicators at observed zeros,
2. random-walk update of each feature baseline,
3. add-delete move on each feature's discrimination indicator with its
   group shifts, then within-model walks on active shifts,
4. add-delete move on one covariate indicator per feature, then
   within-model walks on active effects,
5. truncated-normal random-walk update of each dispersion.

Indicator priors enter through their collapsed Beta-Bernoulli ratios: the
whole-vector ratio for the discrimination indicators, the per-feature
vector ratio over covariate slots, and the per-entry ratio for the
extra-zero indicators.

Everything a chain does is a pure function of (data, size factors,
hyperparameters, proposal scales, chain config); identical seeds give
bit-identical traces regardless of how chains are scheduled.

The likelihood ratio of every move touches only the affected matrix
cells, and moves that are conditionally independent across features are
evaluated in single vectorized passes; the one sequential scan (the
discrimination add-delete, coupled across features by the collapsed
prior) precomputes its likelihood ratios in a vectorized pass as well.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln, gammaln, log_ndtr, ndtr, ndtri

from .data import Dataset, Hyperparameters, ProposalScales
from .errors import EmptyTrace, NumericalFailure
from .likelihood import TaxonParams, log_normal_density, log_t_density
from .normalization import SizeFactors, estimate_css

__all__ = [
    "ChainConfig",
    "ModelState",
    "ChainTrace",
    "init_state",
    "update_r",
    "update_mu0",
    "update_gamma_mu",
    "update_delta_beta",
    "update_phi",
    "run_chain",
    "run_chains_parallel",
    "zero_indicator_prob",
    "THREADS_ENV_VAR",
]

THREADS_ENV_VAR = "ZINBREG_THREADS"

# Linear predictors are clipped here before exponentiation; combined with
# log-space addition this keeps every likelihood term finite for any
# finite parameter value.
_ETA_CLIP = 700.0

_MOVES = (
    "r",
    "mu0",
    "gamma_add",
    "gamma_delete",
    "mu_within",
    "delta_add",
    "delta_delete",
    "beta_within",
    "phi",
)


@dataclass(frozen=True)
class ChainConfig:
    """Length, seeding, and mode switches for one chain."""

    n_iter: int = 20000
    burn_in: int | None = None
    seed: int = 0
    thin: int = 1
    prior_only: bool = False
    adapt_scales: bool = False
    diagnostics: bool = False

    def __post_init__(self):
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.n_iter // 2)
        if self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if not 0 <= self.burn_in < self.n_iter:
            raise ValueError(f"burn_in must lie in [0, n_iter), got {self.burn_in}")
        if self.thin < 1:
            raise ValueError(f"thin must be >= 1, got {self.thin}")

    @property
    def n_recorded(self) -> int:
        return len(range(self.burn_in, self.n_iter, self.thin))


@dataclass
class ModelState:
    """One chain's full latent configuration (mutated in place by sweeps)."""

    r: np.ndarray          # (n, p) int8, extra-zero indicators
    mu0: np.ndarray        # (p,)
    mu: np.ndarray         # (K, p), reference row identically zero
    beta: np.ndarray       # (R, p)
    gamma: np.ndarray      # (p,) int8
    delta: np.ndarray      # (R, p) int8
    phi: np.ndarray        # (p,)

    def copy(self) -> "ModelState":
        return ModelState(
            r=self.r.copy(), mu0=self.mu0.copy(), mu=self.mu.copy(),
            beta=self.beta.copy(), gamma=self.gamma.copy(),
            delta=self.delta.copy(), phi=self.phi.copy(),
        )

    def check(self, counts: np.ndarray, reference_group: int = 1) -> None:
        """Assert the state invariants; used by tests and debugging."""
        assert np.all((self.r == 0) | (counts == 0)), "r=1 at a positive count"
        assert np.all(self.mu[reference_group - 1] == 0.0), "reference shift not pinned"
        assert np.all(self.mu[:, self.gamma == 0] == 0.0), "shifts left over at gamma=0"
        assert np.all(self.beta[self.delta == 0] == 0.0), "effects left over at delta=0"
        assert np.all(self.phi > 0), "nonpositive dispersion"

    def taxon(self, j: int, reference_group: int = 1) -> TaxonParams:
        """View of one feature's parameters as a validated bundle."""
        return TaxonParams(
            mu0=float(self.mu0[j]),
            mu_k=self.mu[:, j],
            beta=self.beta[:, j],
            phi=float(self.phi[j]),
            gamma=int(self.gamma[j]),
            delta=self.delta[:, j],
            reference_group=reference_group,
        )


@dataclass
class ChainTrace:
    """Post-burn-in accumulators and stored draws for one chain."""

    n_iter: int
    burn_in: int
    thin: int
    seed: int
    n_recorded: int
    gamma_sums: np.ndarray      # (p,)
    delta_sums: np.ndarray      # (R, p)
    r_sums: np.ndarray          # (n, p)
    mu0_sum: np.ndarray
    mu0_sumsq: np.ndarray
    mu_sum: np.ndarray          # (K, p)
    mu_sumsq: np.ndarray
    beta_sum: np.ndarray        # (R, p)
    beta_sumsq: np.ndarray
    phi_sum: np.ndarray
    phi_sumsq: np.ndarray
    mu_draws: np.ndarray        # (n_recorded, K, p) float32
    proposal_counts: dict[str, int]
    accept_counts: dict[str, int]
    diagnostics: dict[str, np.ndarray] | None = None

    def ppi_gamma(self) -> np.ndarray:
        return self.gamma_sums / self.n_recorded

    def ppi_delta(self) -> np.ndarray:
        return self.delta_sums / self.n_recorded

    def acceptance_rate(self, move: str) -> float:
        n = self.proposal_counts.get(move, 0)
        return self.accept_counts.get(move, 0) / n if n else float("nan")


class _Engine:
    """Precomputed data views plus the five update steps."""

    def __init__(
        self,
        data: Dataset,
        size_factors: SizeFactors,
        hp: Hyperparameters,
        scales: ProposalScales,
        prior_only: bool = False,
    ):
        y = data.counts.counts
        self.n, self.p = y.shape
        self.R = data.n_covariates
        self.K = data.n_groups
        self.y = y
        self.yf = y.astype(np.float64)
        self.x = data.covariates.values
        self.z0 = data.groups.zero_based()
        self.ref0 = data.groups.reference_group - 1
        self.nonref = [k for k in range(self.K) if k != self.ref0]
        self.s = size_factors.values
        self.log_s = np.log(self.s)
        self.zero_rows, self.zero_cols = np.nonzero(y == 0)
        self.group_rows = [np.flatnonzero(self.z0 == k) for k in range(self.K)]
        self.hp = hp
        self.prior_only = prior_only
        self.t_df = 2.0 * hp.a_t
        self.t_scale_sq = hp.b_t / hp.a_t
        # live scales (mutated only by the optional burn-in adaptation)
        self.tau_mu0 = scales.tau_mu0
        self.tau_mu = scales.tau_mu
        self.tau_beta = scales.tau_beta
        self.tau_phi = scales.tau_phi
        self.proposal_counts = {m: 0 for m in _MOVES}
        self.accept_counts = {m: 0 for m in _MOVES}
        self._window_prop = {m: 0 for m in _MOVES}
        self._window_acc = {m: 0 for m in _MOVES}
        self.active: np.ndarray | None = None  # (n, p) float, 1 - r
        self.xb: np.ndarray | None = None      # (n, p) cache of x @ beta

    # -- bookkeeping ---------------------------------------------------

    def attach(self, state: ModelState) -> None:
        self.active = 1.0 - state.r.astype(np.float64)
        self.xb = self.x @ state.beta if self.R else np.zeros((self.n, self.p))

    def _count(self, move: str, proposed: int, accepted: int) -> None:
        self.proposal_counts[move] += int(proposed)
        self.accept_counts[move] += int(accepted)
        self._window_prop[move] += int(proposed)
        self._window_acc[move] += int(accepted)

    # -- likelihood kernels ---------------------------------------------

    def _mu_z(self, state: ModelState) -> np.ndarray:
        return state.mu[self.z0, :]

    def _eta(self, state: ModelState) -> np.ndarray:
        return np.clip(state.mu0[None, :] + self._mu_z(state) + self.xb, -_ETA_CLIP, _ETA_CLIP)

    def _cols_ll(self, eta: np.ndarray, phi: np.ndarray, log_phi: np.ndarray) -> np.ndarray:
        """Per-column log likelihood over non-structural-zero cells, up to
        terms constant in everything but the linear predictor."""
        loglam = self.log_s[:, None] + eta
        la = np.logaddexp(loglam, log_phi[None, :])
        t = self.yf * loglam - (self.yf + phi[None, :]) * la
        t *= self.active
        return t.sum(axis=0)

    def _subcols_ll(self, rows, cols, eta_sub, phi_cols, log_phi_cols) -> np.ndarray:
        ix = np.ix_(rows, cols)
        loglam = self.log_s[rows, None] + eta_sub
        la = np.logaddexp(loglam, log_phi_cols[None, :])
        t = self.yf[ix] * loglam - (self.yf[ix] + phi_cols[None, :]) * la
        t *= self.active[ix]
        return t.sum(axis=0)

    def _phi_cols_ll(self, loglam: np.ndarray, phi: np.ndarray, log_phi: np.ndarray) -> np.ndarray:
        """Per-column phi-dependent likelihood terms (lam held fixed)."""
        la = np.logaddexp(loglam, log_phi[None, :])
        t = gammaln(self.yf + phi[None, :]) - (self.yf + phi[None, :]) * la
        t *= self.active
        n_act = self.active.sum(axis=0)
        return t.sum(axis=0) + n_act * (phi * log_phi - gammaln(phi))

    def log_posterior(self, state: ModelState) -> float:
        """Full log posterior up to an additive constant (diagnostics)."""
        hp = self.hp
        loglam = self.log_s[:, None] + self._eta(state)
        la = np.logaddexp(loglam, np.log(state.phi)[None, :])
        t = (
            gammaln(self.yf + state.phi[None, :])
            - gammaln(self.yf + 1.0)
            - gammaln(state.phi)[None, :]
            + state.phi[None, :] * (np.log(state.phi)[None, :] - la)
            + self.yf * (loglam - la)
        )
        ll = float((t * self.active).sum())
        lp = float(np.sum(log_normal_density(state.mu0, hp.sigma0_sq)))
        act = state.gamma == 1
        for k in self.nonref:
            lp += float(np.sum(log_t_density(state.mu[k, act], self.t_df, self.t_scale_sq)))
        lp += float(np.sum(log_t_density(state.beta[state.delta == 1], self.t_df, self.t_scale_sq)))
        lp += float(
            np.sum(
                hp.a_phi * math.log(hp.b_phi)
                - gammaln(hp.a_phi)
                + (hp.a_phi - 1.0) * np.log(state.phi)
                - hp.b_phi * state.phi
            )
        )
        s_gamma = int(state.gamma.sum())
        lp += betaln(hp.a_omega + s_gamma, hp.b_omega + self.p - s_gamma) - betaln(
            hp.a_omega, hp.b_omega
        )
        if self.R:
            s_delta = state.delta.sum(axis=0)
            lp += float(
                np.sum(
                    betaln(hp.a_p + s_delta, hp.b_p + self.R - s_delta)
                    - betaln(hp.a_p, hp.b_p)
                )
            )
        n_r1 = int(state.r.sum())
        lp += n_r1 * math.log(hp.a_pi / (hp.a_pi + hp.b_pi))
        lp += (self.n * self.p - n_r1) * math.log(hp.b_pi / (hp.a_pi + hp.b_pi))
        return ll + lp

    # -- initialization ---------------------------------------------------

    def init_state(self, rng: np.random.Generator) -> ModelState:
        n, p, R, K = self.n, self.p, self.R, self.K
        gamma = rng.integers(0, 2, size=p).astype(np.int8)
        delta = rng.integers(0, 2, size=(R, p)).astype(np.int8)
        mu = np.zeros((K, p))
        draws = rng.standard_normal((len(self.nonref), p))
        for i, k in enumerate(self.nonref):
            mu[k] = np.where(gamma == 1, draws[i], 0.0)
        beta = rng.standard_normal((R, p)) * delta
        norm_mean = (self.yf / self.s[:, None]).mean(axis=0)
        mu0 = np.log(norm_mean + 0.01)
        phi = np.full(p, 10.0)
        r = np.zeros((n, p), dtype=np.int8)
        u = rng.random(self.zero_rows.size)
        r[self.zero_rows, self.zero_cols] = u < 0.5
        state = ModelState(r=r, mu0=mu0, mu=mu, beta=beta, gamma=gamma, delta=delta, phi=phi)
        self.attach(state)
        return state

    # -- step 1: extra-zero indicators ------------------------------------

    def step_r(self, state: ModelState, rng: np.random.Generator) -> None:
        m = self.zero_rows.size
        if m == 0:
            return
        hp = self.hp
        u = rng.random(m)
        if self.prior_only:
            p1 = hp.a_pi / (hp.a_pi + hp.b_pi)
        else:
            eta = self._eta(state)
            loglam0 = self.log_s[self.zero_rows] + eta[self.zero_rows, self.zero_cols]
            phi0 = state.phi[self.zero_cols]
            log_nb0 = phi0 * (np.log(phi0) - np.logaddexp(loglam0, np.log(phi0)))
            p1 = hp.a_pi / (hp.a_pi + hp.b_pi * np.exp(log_nb0))
        rnew = u < p1
        state.r[self.zero_rows, self.zero_cols] = rnew
        self.active[self.zero_rows, self.zero_cols] = ~rnew
        self._count("r", m, int(rnew.sum()))

    # -- step 2: feature baselines ----------------------------------------

    def step_mu0(self, state: ModelState, rng: np.random.Generator) -> None:
        p = self.p
        prop = state.mu0 + self.tau_mu0 * rng.standard_normal(p)
        log_u = np.log(rng.random(p))
        if self.prior_only:
            llr = 0.0
        else:
            base = self._mu_z(state) + self.xb
            phi, log_phi = state.phi, np.log(state.phi)
            cur = self._cols_ll(
                np.clip(state.mu0[None, :] + base, -_ETA_CLIP, _ETA_CLIP), phi, log_phi
            )
            new = self._cols_ll(
                np.clip(prop[None, :] + base, -_ETA_CLIP, _ETA_CLIP), phi, log_phi
            )
            llr = new - cur
        lpr = (np.square(state.mu0) - np.square(prop)) / (2.0 * self.hp.sigma0_sq)
        accept = log_u < llr + lpr
        state.mu0[accept] = prop[accept]
        self._count("mu0", p, int(accept.sum()))

    # -- step 3: discrimination indicators and group shifts ----------------

    def step_gamma_mu(self, state: ModelState, rng: np.random.Generator) -> None:
        p, hp = self.p, self.hp
        nonref = self.nonref
        nr = len(nonref)
        perm = rng.permutation(p)
        prop = self.tau_mu * rng.standard_normal((nr, p))
        log_u = np.log(rng.random(p))

        if self.prior_only:
            llr = np.zeros(p)
        else:
            phi, log_phi = state.phi, np.log(state.phi)
            base = state.mu0[None, :] + self.xb
            eta_cur = np.clip(base + self._mu_z(state), -_ETA_CLIP, _ETA_CLIP)
            flip = np.zeros((self.K, p))
            on = state.gamma.astype(bool)
            for i, k in enumerate(nonref):
                flip[k] = np.where(on, 0.0, prop[i])
            eta_flip = np.clip(base + flip[self.z0, :], -_ETA_CLIP, _ETA_CLIP)
            llr = self._cols_ll(eta_flip, phi, log_phi) - self._cols_ll(eta_cur, phi, log_phi)

        t_prop = log_t_density(prop, self.t_df, self.t_scale_sq).sum(axis=0)
        q_prop = log_normal_density(prop, self.tau_mu**2).sum(axis=0)
        mu_cur = state.mu[nonref, :] if nr else np.zeros((0, p))
        t_cur = log_t_density(mu_cur, self.t_df, self.t_scale_sq).sum(axis=0)
        q_cur = log_normal_density(mu_cur, self.tau_mu**2).sum(axis=0)

        s_gamma = int(state.gamma.sum())
        n_add = n_del = acc_add = acc_del = 0
        for j in perm:
            if state.gamma[j]:
                n_del += 1
                lr = (
                    llr[j]
                    + math.log((hp.b_omega + p - s_gamma) / (hp.a_omega + s_gamma - 1.0))
                    + q_cur[j] - t_cur[j]
                )
                if log_u[j] < lr:
                    state.gamma[j] = 0
                    for k in nonref:
                        state.mu[k, j] = 0.0
                    s_gamma -= 1
                    acc_del += 1
            else:
                n_add += 1
                lr = (
                    llr[j]
                    + math.log((hp.a_omega + s_gamma) / (hp.b_omega + p - s_gamma - 1.0))
                    + t_prop[j] - q_prop[j]
                )
                if log_u[j] < lr:
                    state.gamma[j] = 1
                    for i, k in enumerate(nonref):
                        state.mu[k, j] = prop[i, j]
                    s_gamma += 1
                    acc_add += 1
        self._count("gamma_add", n_add, acc_add)
        self._count("gamma_delete", n_del, acc_del)

        # within-model refresh of every active shift, one group at a time
        act = np.flatnonzero(state.gamma)
        for k in nonref:
            step = 0.5 * self.tau_mu * rng.standard_normal(act.size)
            log_uu = np.log(rng.random(act.size))
            if act.size == 0:
                continue
            cur = state.mu[k, act]
            prp = cur + step
            if self.prior_only:
                llr_w = 0.0
            else:
                rows = self.group_rows[k]
                phi_c = state.phi[act]
                log_phi_c = np.log(phi_c)
                base_sub = (
                    state.mu0[act][None, :] + self.xb[np.ix_(rows, act)]
                )
                cur_ll = self._subcols_ll(
                    rows, act,
                    np.clip(base_sub + cur[None, :], -_ETA_CLIP, _ETA_CLIP),
                    phi_c, log_phi_c,
                )
                new_ll = self._subcols_ll(
                    rows, act,
                    np.clip(base_sub + prp[None, :], -_ETA_CLIP, _ETA_CLIP),
                    phi_c, log_phi_c,
                )
                llr_w = new_ll - cur_ll
            lpr = log_t_density(prp, self.t_df, self.t_scale_sq) - log_t_density(
                cur, self.t_df, self.t_scale_sq
            )
            accept = log_uu < llr_w + lpr
            state.mu[k, act[accept]] = prp[accept]
            self._count("mu_within", act.size, int(accept.sum()))

    # -- step 4: covariate indicators and effects --------------------------

    def step_delta_beta(self, state: ModelState, rng: np.random.Generator) -> None:
        R, p, hp = self.R, self.p, self.hp
        if R == 0:
            return
        pick = rng.integers(0, R, size=p)
        prop = self.tau_beta * rng.standard_normal(p)
        log_u = np.log(rng.random(p))

        cols = np.arange(p)
        cur_on = state.delta[pick, cols].astype(bool)
        old_b = state.beta[pick, cols]
        new_b = np.where(cur_on, 0.0, prop)

        if self.prior_only:
            llr = np.zeros(p)
        else:
            phi, log_phi = state.phi, np.log(state.phi)
            base = state.mu0[None, :] + self._mu_z(state)
            eta_cur = np.clip(base + self.xb, -_ETA_CLIP, _ETA_CLIP)
            xb_new = self.xb + self.x[:, pick] * (new_b - old_b)[None, :]
            eta_new = np.clip(base + xb_new, -_ETA_CLIP, _ETA_CLIP)
            llr = self._cols_ll(eta_new, phi, log_phi) - self._cols_ll(eta_cur, phi, log_phi)

        s_delta = state.delta.sum(axis=0).astype(np.float64)
        lr = np.empty(p)
        add = ~cur_on
        svals = s_delta[add]
        lr[add] = (
            llr[add]
            + np.log((hp.a_p + svals) / (hp.b_p + R - svals - 1.0))
            + log_t_density(prop[add], self.t_df, self.t_scale_sq)
            - log_normal_density(prop[add], self.tau_beta**2)
        )
        svals = s_delta[cur_on]
        lr[cur_on] = (
            llr[cur_on]
            + np.log((hp.b_p + R - svals) / (hp.a_p + svals - 1.0))
            + log_normal_density(old_b[cur_on], self.tau_beta**2)
            - log_t_density(old_b[cur_on], self.t_df, self.t_scale_sq)
        )
        accept = log_u < lr
        jacc = np.flatnonzero(accept)
        if jacc.size:
            state.delta[pick[jacc], jacc] = ~cur_on[jacc]
            state.beta[pick[jacc], jacc] = new_b[jacc]
            self.xb[:, jacc] += self.x[:, pick[jacc]] * (new_b - old_b)[jacc][None, :]
        self._count("delta_add", int(add.sum()), int((accept & add).sum()))
        self._count("delta_delete", int(cur_on.sum()), int((accept & cur_on).sum()))

        # within-model refresh of every active effect, one covariate at a time
        for r_idx in range(R):
            act = np.flatnonzero(state.delta[r_idx])
            step = 0.5 * self.tau_beta * rng.standard_normal(act.size)
            log_uu = np.log(rng.random(act.size))
            if act.size == 0:
                continue
            cur = state.beta[r_idx, act]
            prp = cur + step
            if self.prior_only:
                llr_w = 0.0
            else:
                rows = np.arange(self.n)
                phi_c = state.phi[act]
                log_phi_c = np.log(phi_c)
                base_sub = (
                    state.mu0[act][None, :]
                    + state.mu[self.z0][:, act]
                    + self.xb[:, act]
                )
                dx = self.x[:, r_idx][:, None] * step[None, :]
                cur_ll = self._subcols_ll(
                    rows, act, np.clip(base_sub, -_ETA_CLIP, _ETA_CLIP), phi_c, log_phi_c
                )
                new_ll = self._subcols_ll(
                    rows, act, np.clip(base_sub + dx, -_ETA_CLIP, _ETA_CLIP), phi_c, log_phi_c
                )
                llr_w = new_ll - cur_ll
            lpr = log_t_density(prp, self.t_df, self.t_scale_sq) - log_t_density(
                cur, self.t_df, self.t_scale_sq
            )
            accept = log_uu < llr_w + lpr
            if np.any(accept):
                cols_acc = act[accept]
                state.beta[r_idx, cols_acc] = prp[accept]
                self.xb[:, cols_acc] += self.x[:, r_idx][:, None] * step[accept][None, :]
            self._count("beta_within", act.size, int(accept.sum()))

    # -- step 5: dispersions ------------------------------------------------

    def step_phi(self, state: ModelState, rng: np.random.Generator) -> None:
        p, hp = self.p, self.hp
        tau = self.tau_phi
        u01 = rng.random(p)
        log_u = np.log(rng.random(p))
        cdf_lo = ndtr(-state.phi / tau)
        z = ndtri(cdf_lo + u01 * (1.0 - cdf_lo))
        prop = state.phi + tau * z
        valid = np.isfinite(prop) & (prop > 0)
        prop_safe = np.where(valid, prop, state.phi)
        if self.prior_only:
            llr = 0.0
        else:
            loglam = self.log_s[:, None] + self._eta(state)
            llr = self._phi_cols_ll(loglam, prop_safe, np.log(prop_safe)) - self._phi_cols_ll(
                loglam, state.phi, np.log(state.phi)
            )
        lpr = (hp.a_phi - 1.0) * (np.log(prop_safe) - np.log(state.phi)) - hp.b_phi * (
            prop_safe - state.phi
        )
        corr = log_ndtr(state.phi / tau) - log_ndtr(prop_safe / tau)
        accept = valid & (log_u < llr + lpr + corr)
        state.phi[accept] = prop[accept]
        self._count("phi", p, int(accept.sum()))

    # -- one sweep ------------------------------------------------------------

    def sweep(self, state: ModelState, rng: np.random.Generator) -> None:
        self.step_r(state, rng)
        self.step_mu0(state, rng)
        self.step_gamma_mu(state, rng)
        self.step_delta_beta(state, rng)
        self.step_phi(state, rng)

    def adapt(self, round_index: int, target: float = 0.3) -> None:
        """Robbins-Monro rescaling of the live proposal scales from the
        acceptance rates of the last window."""
        gain = 1.0 / (round_index**0.6)
        for attr, moves in (
            ("tau_mu0", ("mu0",)),
            ("tau_mu", ("mu_within",)),
            ("tau_beta", ("beta_within",)),
            ("tau_phi", ("phi",)),
        ):
            prop = sum(self._window_prop[m] for m in moves)
            if prop == 0:
                continue
            rate = sum(self._window_acc[m] for m in moves) / prop
            setattr(self, attr, getattr(self, attr) * math.exp(gain * (rate - target)))
        for m in _MOVES:
            self._window_prop[m] = 0
            self._window_acc[m] = 0


def _engine_for(data, hp, size_factors, scales=None, prior_only=False) -> _Engine:
    sf = size_factors if size_factors is not None else estimate_css(data.counts)
    return _Engine(data, sf, hp, scales or ProposalScales(), prior_only)


def init_state(
    data: Dataset,
    hp: Hyperparameters,
    rng: np.random.Generator,
    size_factors: SizeFactors | None = None,
) -> ModelState:
    """Draw the randomized starting configuration.

    Indicators start at independent fair coin flips, baselines at the log
    normalized mean count, active coefficients at standard normal draws,
    dispersions at 10, and extra-zero indicators at coin flips over the
    observed zeros.
    """
    return _engine_for(data, hp, size_factors).init_state(rng)


def _single_step(step_name, state, data, hp, scales, rng, size_factors, prior_only):
    eng = _engine_for(data, hp, size_factors, scales, prior_only)
    eng.attach(state)
    getattr(eng, step_name)(state, rng)
    return state


def update_r(state, data, hp, rng, size_factors=None, prior_only=False) -> ModelState:
    """Redraw the extra-zero indicators at cells with an observed zero."""
    return _single_step("step_r", state, data, hp, None, rng, size_factors, prior_only)


def update_mu0(state, data, hp, scales, rng, size_factors=None, prior_only=False) -> ModelState:
    """Random-walk Metropolis update of every feature baseline."""
    return _single_step("step_mu0", state, data, hp, scales, rng, size_factors, prior_only)


def update_gamma_mu(state, data, hp, scales, rng, size_factors=None, prior_only=False) -> ModelState:
    """Add-delete move on each discrimination indicator plus within-model
    walks on the active group shifts."""
    return _single_step("step_gamma_mu", state, data, hp, scales, rng, size_factors, prior_only)


def update_delta_beta(state, data, hp, scales, rng, size_factors=None, prior_only=False) -> ModelState:
    """Add-delete move on one covariate slot per feature plus within-model
    walks on the active effects."""
    return _single_step("step_delta_beta", state, data, hp, scales, rng, size_factors, prior_only)


def update_phi(state, data, hp, scales, rng, size_factors=None, prior_only=False) -> ModelState:
    """Truncated-normal random-walk update of every dispersion."""
    return _single_step("step_phi", state, data, hp, scales, rng, size_factors, prior_only)


def zero_indicator_prob(lam, phi, a_pi: float, b_pi: float):
    """Conditional probability that an observed zero is an extra zero.

    The two unnormalized weights are the Beta-function ratios of the
    collapsed per-entry prior, the r=0 one additionally carrying the NB
    mass at zero.
    """
    lam = np.asarray(lam, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    log_nb0 = phi * (np.log(phi) - np.logaddexp(np.log(lam), np.log(phi)))
    out = a_pi / (a_pi + b_pi * np.exp(log_nb0))
    return out if out.ndim else float(out)


_ADAPT_WINDOW = 50


def run_chain(
    data: Dataset,
    hp: Hyperparameters,
    scales: ProposalScales,
    config: ChainConfig,
    size_factors: SizeFactors | None = None,
) -> ChainTrace:
    """Run one chain and return its trace.

    Deterministic given (data, size factors, hyperparameters, scales,
    config); a non-finite parameter mid-run raises ``NumericalFailure``
    with the offending iteration.
    """
    sf = size_factors if size_factors is not None else estimate_css(data.counts)
    eng = _Engine(data, sf, hp, scales, config.prior_only)
    rng = np.random.default_rng(config.seed)
    state = eng.init_state(rng)

    n, p = eng.n, eng.p
    R, K = eng.R, eng.K
    gamma_sums = np.zeros(p, dtype=np.int64)
    delta_sums = np.zeros((R, p), dtype=np.int64)
    r_sums = np.zeros((n, p), dtype=np.int64)
    mu0_sum = np.zeros(p)
    mu0_sumsq = np.zeros(p)
    mu_sum = np.zeros((K, p))
    mu_sumsq = np.zeros((K, p))
    beta_sum = np.zeros((R, p))
    beta_sumsq = np.zeros((R, p))
    phi_sum = np.zeros(p)
    phi_sumsq = np.zeros(p)
    mu_draws = np.zeros((config.n_recorded, K, p), dtype=np.float32)
    diag_logpost = np.zeros(config.n_iter) if config.diagnostics else None
    diag_sumgamma = np.zeros(config.n_iter, dtype=np.int64) if config.diagnostics else None

    t_rec = 0
    for it in range(config.n_iter):
        eng.sweep(state, rng)
        if not (
            np.all(np.isfinite(state.mu0))
            and np.all(np.isfinite(state.mu))
            and np.all(np.isfinite(state.beta))
            and np.all(np.isfinite(state.phi))
            and np.all(state.phi > 0)
        ):
            raise NumericalFailure(it)
        if config.adapt_scales and it < config.burn_in and (it + 1) % _ADAPT_WINDOW == 0:
            eng.adapt((it + 1) // _ADAPT_WINDOW)
        if config.diagnostics:
            diag_logpost[it] = eng.log_posterior(state)
            diag_sumgamma[it] = int(state.gamma.sum())
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            gamma_sums += state.gamma
            delta_sums += state.delta
            r_sums += state.r
            mu0_sum += state.mu0
            mu0_sumsq += np.square(state.mu0)
            mu_sum += state.mu
            mu_sumsq += np.square(state.mu)
            beta_sum += state.beta
            beta_sumsq += np.square(state.beta)
            phi_sum += state.phi
            phi_sumsq += np.square(state.phi)
            mu_draws[t_rec] = state.mu
            t_rec += 1

    diagnostics = None
    if config.diagnostics:
        diagnostics = {
            "iteration": np.arange(config.n_iter, dtype=np.int64),
            "log_posterior": diag_logpost,
            "sum_gamma": diag_sumgamma,
        }
    return ChainTrace(
        n_iter=config.n_iter,
        burn_in=config.burn_in,
        thin=config.thin,
        seed=config.seed,
        n_recorded=t_rec,
        gamma_sums=gamma_sums,
        delta_sums=delta_sums,
        r_sums=r_sums,
        mu0_sum=mu0_sum,
        mu0_sumsq=mu0_sumsq,
        mu_sum=mu_sum,
        mu_sumsq=mu_sumsq,
        beta_sum=beta_sum,
        beta_sumsq=beta_sumsq,
        phi_sum=phi_sum,
        phi_sumsq=phi_sumsq,
        mu_draws=mu_draws,
        proposal_counts=dict(eng.proposal_counts),
        accept_counts=dict(eng.accept_counts),
        diagnostics=diagnostics,
    )


def _chain_worker(args):
    data, hp, scales, config, sf = args
    return run_chain(data, hp, scales, config, size_factors=sf)


def default_max_workers() -> int:
    env = os.environ.get(THREADS_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_chains_parallel(
    data: Dataset,
    hp: Hyperparameters,
    scales: ProposalScales,
    configs: list[ChainConfig],
    size_factors: SizeFactors | None = None,
    max_workers: int | None = None,
) -> list[ChainTrace]:
    """Run several chains, in worker processes when available.

    Traces are bit-identical to running each chain sequentially; the chain
    seeds must be pairwise distinct.
    """
    if not configs:
        raise EmptyTrace("no chain configs given")
    seeds = [c.seed for c in configs]
    if len(set(seeds)) != len(seeds):
        raise ValueError(f"chain seeds must be distinct, got {seeds}")
    sf = size_factors if size_factors is not None else estimate_css(data.counts)
    workers = max_workers if max_workers is not None else default_max_workers()
    workers = min(workers, len(configs))
    if workers <= 1 or len(configs) == 1:
        return [run_chain(data, hp, scales, c, size_factors=sf) for c in configs]
    jobs = [(data, hp, scales, c, sf) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_chain_worker, jobs))
