"""Recursive estimators: RLS filter banks, the recursive channel estimator,
and the alternating filter/power recursions with RAKE-based group formation.

All recursions share one inverse-covariance estimate maintained with the
matrix inversion lemma; the group power recursion runs unconstrained and
the power constraint is imposed on the emitted allocation by projection.
"""

from dataclasses import dataclass, field

import numpy as np

from .config import NetworkConfig
from .modulation import qpsk_slice
from .mmse import project_power
from .spreading import signature_matrix


def hermitize(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + A.conj().swapaxes(-1, -2))


def rls_gain_and_inverse_update(R_inv: np.ndarray, r: np.ndarray, alpha: float):
    """One inversion-lemma step: returns (gain, updated inverse estimate).

    The denominator is >= 1 for PSD estimates, so the step cannot blow up.
    """
    Rr = R_inv @ r
    denom = 1.0 + np.real(np.vdot(r, Rr)) / alpha
    gain = Rr / (alpha * denom)
    R_new = (R_inv - np.outer(gain, Rr.conj())) / alpha
    return gain, hermitize(R_new)


def rls_filter_update(w: np.ndarray, gain: np.ndarray, xi: complex) -> np.ndarray:
    """Filter recursion w <- w + k xi* on the a-priori error xi."""
    return w + gain * np.conj(xi)


def rals_power_update(a_raw: np.ndarray, R_S_inv: np.ndarray, b_ref: complex, v: np.ndarray, alpha: float):
    """Unconstrained group power recursion on input v.

    Returns (a_raw_new, R_S_inv_new, xi_a).  The update applies the
    conjugated a-priori error (same form as the filter recursion; this
    is what makes the recursion agree with the batch least-squares
    solution).  The caller imposes the power constraint on the emitted
    allocation: projection is a read-out, the recursion itself estimates
    the unconstrained solution.
    """
    xi_a = b_ref - np.vdot(a_raw, v)
    gain, R_new = rls_gain_and_inverse_update(R_S_inv, v, alpha)
    return a_raw + np.conj(xi_a) * gain, R_new, xi_a


def rls_channel_update(P_h: np.ndarray, h_prev: np.ndarray, C: np.ndarray, amps_k: np.ndarray, phase_symbols_k: np.ndarray, y: np.ndarray, alpha: float):
    """Recursive channel estimate of one user.

    P_h accumulates the outer products of past estimates; y is the
    shared inverse-covariance estimate applied to the current
    observation (R_inv @ r), reshaped per phase by the caller.

    Returns (h_raw, P_h_new); h_raw is the estimate before the per-link
    normalization.
    """
    P_h_new = alpha * P_h + np.outer(h_prev, h_prev.conj())
    n_p = amps_k.shape[0]
    M, L = C.shape
    coef = (amps_k * phase_symbols_k).conj()
    qy = np.einsum("ml,pm,p->pl", C.conj(), y.reshape(n_p, M), coef).reshape(-1)
    h_raw = P_h_new.conj().T @ qy
    return h_raw, P_h_new


def normalize_per_link(h: np.ndarray, n_p: int, fallback: np.ndarray | None = None) -> np.ndarray:
    """Scale each per-link L-tap block to unit norm (generator convention)."""
    blocks = h.reshape(n_p, -1).copy()
    norms = np.linalg.norm(blocks, axis=1)
    for p in range(n_p):
        if norms[p] < 1e-30:
            if fallback is not None:
                blocks[p] = fallback.reshape(n_p, -1)[p]
            else:
                blocks[p] = 0.0
                blocks[p, 0] = 1.0
        else:
            blocks[p] /= norms[p]
    return blocks.reshape(-1)


@dataclass
class RakeStatistic:
    """Per-user RAKE magnitudes and the induced ranking (a permutation)."""

    z_rake: np.ndarray
    ranking: np.ndarray


def rake_statistic(r: np.ndarray, p_hat_all: np.ndarray) -> RakeStatistic:
    """Correlate every user's estimated effective signature with the observation."""
    z = p_hat_all.conj() @ r
    mags = np.abs(z)
    ranking = np.argsort(-mags, kind="stable")
    return RakeStatistic(z_rake=z, ranking=ranking)


def rake_group_select(r: np.ndarray, p_hat_all: np.ndarray, G: int) -> np.ndarray:
    """Indices (ascending) of the G users with the largest RAKE magnitudes.

    Ties break toward the lower user index.
    """
    K = p_hat_all.shape[0]
    if G > K:
        raise ValueError(f"G={G} exceeds user count {K}")
    stat = rake_statistic(r, p_hat_all)
    return np.sort(stat.ranking[:G])


class RlsFilterBank:
    """Per-user RLS receivers sharing one inverse-covariance recursion."""

    def __init__(self, K: int, dim: int, alpha: float, delta: float = 0.01):
        self.K = K
        self.dim = dim
        self.alpha = alpha
        self.R_inv = delta * np.eye(dim, dtype=complex)
        self.w = np.zeros((K, dim), dtype=complex)

    def step(self, r: np.ndarray, refs: np.ndarray | None = None) -> np.ndarray:
        """Process one observation; adapt on refs (training) or own decisions."""
        z = self.w.conj() @ r
        decisions = qpsk_slice(z)
        ref = decisions if refs is None else refs
        gain, self.R_inv = rls_gain_and_inverse_update(self.R_inv, r, self.alpha)
        xi = ref - z
        self.w = self.w + np.outer(xi.conj(), gain)
        return decisions


@dataclass
class RalsState:
    """Full recursive state of the joint destination receiver."""

    R_inv: np.ndarray
    w_hat: np.ndarray
    h_hat: np.ndarray
    P_h_hat: np.ndarray
    alpha: float
    iter_per_symbol: int
    group: np.ndarray | None = None
    R_S_inv: np.ndarray | None = None
    a_raw: np.ndarray | None = None
    rake_acc: np.ndarray | None = None
    symbol_index: int = 0
    extras: dict = field(default_factory=dict)

    def allocation(self, P_G: float) -> np.ndarray | None:
        """Projected per-designer allocations (rows satisfy the power constraint)."""
        if self.a_raw is None:
            return None
        out = np.empty_like(self.a_raw)
        for g in range(self.a_raw.shape[0]):
            out[g] = project_power(self.a_raw[g], P_G)
        return out

    def save(self, path) -> None:
        arrays = {
            "R_inv": self.R_inv,
            "w_hat": self.w_hat,
            "h_hat": self.h_hat,
            "P_h_hat": self.P_h_hat,
            "alpha": np.array(self.alpha),
            "iter_per_symbol": np.array(self.iter_per_symbol),
            "symbol_index": np.array(self.symbol_index),
        }
        for name in ("group", "R_S_inv", "a_raw", "rake_acc"):
            val = getattr(self, name)
            if val is not None:
                arrays[name] = val
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "RalsState":
        with np.load(path, allow_pickle=False) as data:
            kw = dict(
                R_inv=data["R_inv"],
                w_hat=data["w_hat"],
                h_hat=data["h_hat"],
                P_h_hat=data["P_h_hat"],
                alpha=float(data["alpha"]),
                iter_per_symbol=int(data["iter_per_symbol"]),
                symbol_index=int(data["symbol_index"]),
            )
            for name in ("group", "R_S_inv", "a_raw", "rake_acc"):
                if name in data:
                    kw[name] = data[name]
        return cls(**kw)


class RalsReceiver:
    """Joint adaptive destination: shared covariance recursion, recursive
    channel estimation, RAKE group formation, and the alternating
    filter/power recursions (1 or 2 iterations per symbol).
    """

    def __init__(self, cfg: NetworkConfig, codes: np.ndarray, G: int | None = None,
                 iter_per_symbol: int = 2, P_G: float | None = None,
                 user_powers: np.ndarray | None = None,
                 rake_window: tuple[int, int] | None = None, delta: float = 0.01,
                 rewarm_every: int = 400):
        self.cfg = cfg
        self.K, self.N = codes.shape
        self.L = cfg.L
        self.M = cfg.M
        self.n_p = cfg.n_p
        self.D = cfg.D
        self.G = cfg.G if G is None else G
        self.P_G = cfg.P_G if P_G is None else P_G
        self.user_powers = None if user_powers is None else np.asarray(user_powers, dtype=float)
        self.C = np.stack([signature_matrix(codes[k], self.L) for k in range(self.K)])
        hdim = self.n_p * self.L
        h0 = np.zeros((self.K, hdim), dtype=complex)
        h0[:, ::self.L] = 1.0  # unit first tap per link
        self.state = RalsState(
            R_inv=delta * np.eye(self.D, dtype=complex),
            w_hat=np.zeros((self.K, self.D), dtype=complex),
            h_hat=h0,
            P_h_hat=np.broadcast_to(np.eye(hdim, dtype=complex), (self.K, hdim, hdim)).copy(),
            alpha=cfg.alpha,
            iter_per_symbol=iter_per_symbol,
            rake_acc=np.zeros(self.K),
        )
        n_tr = cfg.N_tr
        self.rake_window = rake_window if rake_window is not None else (max(1, n_tr // 4), max(2, n_tr // 2))
        self.delta = delta
        self.p_hat = self._effective_signatures()
        self.gdim = self.G * self.n_p
        # information-form channel accumulators: matched outputs and the
        # de-biasing Gram matrix, both through the shared inverse estimate
        self._U = np.zeros((self.K, hdim), dtype=complex)
        self._T = np.zeros((self.K, hdim, hdim), dtype=complex)
        self._t_interval = 10
        self._since_t_update = 0
        # individual-constraint recursions (phase split of each user's own
        # budget); group members are governed by the joint recursion instead
        self.a_ind = np.zeros((self.K, self.n_p), dtype=complex)
        self.R_ind_inv = np.broadcast_to(delta * np.eye(self.n_p, dtype=complex), (self.K, self.n_p, self.n_p)).copy()
        self._alloc_active = False
        # fresh alternation iterates: periodically restart the power
        # recursions from the closed-form solve at the current estimates
        self.rewarm_every = rewarm_every
        self._select_i: int | None = None

    def _effective_signatures(self) -> np.ndarray:
        h = self.state.h_hat.reshape(self.K, self.n_p, self.L)
        return np.einsum("kml,kpl->kpm", self.C, h)

    def _select_group(self) -> None:
        order = np.argsort(-self.state.rake_acc, kind="stable")
        self.state.group = np.sort(order[: self.G])
        if self.user_powers is not None:
            self.P_G = float(self.user_powers[self.state.group].sum())
        self.state.R_S_inv = np.broadcast_to(self.delta * np.eye(self.gdim, dtype=complex), (self.G, self.gdim, self.gdim)).copy()
        self.state.a_raw = self._warm_allocation()
        self.a_ind = self._own_filter_responses().conj()
        self._alloc_active = True

    def _own_filter_responses(self) -> np.ndarray:
        """(K, n_p) responses of each user's effective signature through its own filter."""
        w = self.state.w_hat.reshape(self.K, self.n_p, self.M)
        return np.einsum("kpm,kpm->kp", self.p_hat.conj(), w)

    def _warm_allocation(self, lam: float = 0.025) -> np.ndarray:
        """Closed-form first alternation iterate from the current estimates.

        Solves the regularized allocation per member from the rank-one
        group statistics implied by the current filters and effective
        signatures; the recursions then track from this initial value
        (which the inverse-covariance initialization treats as a prior
        mean) instead of from a flat split.
        """
        st = self.state
        gidx = st.group
        a0 = np.zeros((self.G, self.gdim), dtype=complex)
        p_grp = self.p_hat[gidx]  # (G, n_p, M)
        w_grp = st.w_hat[gidx].reshape(self.G, self.n_p, self.M)
        e = np.einsum("gpm,gpm->gp", p_grp.conj(), w_grp)  # own-filter responses
        for g in range(self.G):
            eb = e[g].conj()
            A = np.outer(eb, eb.conj()).real + lam * np.eye(self.n_p)
            blk = np.linalg.solve(A, eb.real)
            blk = np.clip(blk, 0.0, None)
            if np.linalg.norm(blk) < 1e-12:
                blk = np.ones(self.n_p)
            a0[g, g * self.n_p : (g + 1) * self.n_p] = blk
        # scale so the reconciled projection starts from these proportions
        nrm = np.linalg.norm(np.abs(a0))
        if nrm < 1e-12:
            return np.full((self.G, self.gdim), np.sqrt(self.P_G / self.gdim), dtype=complex)
        return a0 * (np.sqrt(self.P_G) / nrm * np.sqrt(self.G))

    def reconciled_allocation(self) -> np.ndarray:
        """One applied group allocation from the per-member designs.

        Each member contributes the magnitudes of its own-link block of
        its own recursion; the concatenation is projected onto the group
        budget.  Falls back to the equal split while the recursions are
        still near zero.
        """
        st = self.state
        idx = np.arange(self.G)
        blocks = np.abs(st.a_raw.reshape(self.G, self.G, self.n_p)[idx, idx])
        flat = blocks.reshape(-1)
        if np.linalg.norm(flat) < 1e-12:
            flat = np.ones(self.gdim)
        return project_power(flat, self.P_G)

    def allocation_matrix(self) -> np.ndarray:
        """(K, n_p) applied amplitudes for every user.

        Group members share the joint budget via the reconciled group
        allocation; every other user's own budget is split across phases
        by its individual recursion.
        """
        powers = self.user_powers if self.user_powers is not None else np.full(self.K, self.cfg.P_Ak)
        amps = np.sqrt(powers[:, None] / self.n_p) * np.ones((self.K, self.n_p))
        if self.state.group is None:
            return amps
        rows = np.abs(self.a_ind)
        norms = np.linalg.norm(rows, axis=1)
        ok = norms > 1e-12
        scale = np.sqrt(powers[ok]) / norms[ok]
        amps[ok] = rows[ok] * scale[:, None]
        amps[self.state.group] = self.reconciled_allocation().reshape(self.G, self.n_p)
        return amps

    def step(self, r: np.ndarray, training_symbols: np.ndarray | None, applied_amps: np.ndarray):
        """Process one stacked observation.

        Args:
            r: (D,) stacked destination window of the current symbol.
            training_symbols: (K,) known symbols during the preamble, else None.
            applied_amps: (K, n_p) amplitudes actually transmitted for
                this symbol (the destination knows its own feedback).

        Returns:
            (decisions, diagnostics) where decisions is the (K,) a-priori
            joint detection of the source symbols.
        """
        st = self.state
        i = st.symbol_index
        training = training_symbols is not None

        # a-priori detection with the incoming filters
        z = st.w_hat.conj() @ r
        decisions = qpsk_slice(z)

        if training:
            refs = np.asarray(training_symbols)
            phase_refs = np.repeat(refs[:, None], self.n_p, axis=1)
        else:
            refs = decisions
            # the relay copies are modelled by the joint decision: with
            # working relays it estimates the regenerated symbols far
            # better than slicing the weak per-phase branches separately
            phase_refs = np.repeat(decisions[:, None], self.n_p, axis=1)

        # shared covariance recursion and its application to the data
        gain, st.R_inv = rls_gain_and_inverse_update(st.R_inv, r, st.alpha)
        y = st.R_inv @ r

        # recursive channel estimation (all users, batched): matched outputs
        # de-biased by the Gram matrix of the regression through the same
        # shared inverse estimate (information form of the linear MMSE
        # estimator, exponentially weighted)
        s_coef = applied_amps * phase_refs  # (K, n_p) amplitude-symbol products
        y_ph = y.reshape(self.n_p, self.M)
        qy = np.einsum("kml,pm,kp->kpl", self.C.conj(), y_ph, s_coef.conj()).reshape(self.K, -1)
        self._U = st.alpha * self._U + qy
        self._since_t_update += 1
        if self._since_t_update >= self._t_interval or st.symbol_index < 2:
            F = self._since_t_update
            R3 = st.R_inv.reshape(self.D, self.n_p, self.M)
            RQ = np.einsum("dpm,kml,kp->kdpl", R3, self.C, s_coef).reshape(self.K, self.D, -1)
            RQ4 = RQ.reshape(self.K, self.n_p, self.M, self.n_p * self.L)
            T_now = np.einsum("kml,kqmj,kq->kqlj", self.C.conj(), RQ4, s_coef.conj()).reshape(self.K, self.n_p * self.L, -1)
            self._T = (st.alpha ** F) * self._T + F * T_now
            self._since_t_update = 0
        hdim = self.n_p * self.L
        ridge = 1e-6 * (np.einsum("kaa->k", self._T).real / hdim) + 1e-12
        Treg = self._T + ridge[:, None, None] * np.eye(hdim)
        h_raw = np.linalg.solve(Treg, self._U[:, :, None])[:, :, 0]
        # recursive autocorrelation of the emitted estimates (exported state)
        st.P_h_hat = st.alpha * st.P_h_hat + np.einsum("ka,kb->kab", st.h_hat, st.h_hat.conj())
        h_norm = h_raw.reshape(self.K, self.n_p, self.L)
        norms = np.linalg.norm(h_norm, axis=2, keepdims=True)
        ok = norms[:, :, 0] > 1e-30
        prev = st.h_hat.reshape(self.K, self.n_p, self.L)
        st.h_hat = np.where(ok[:, :, None], np.divide(h_norm, norms, out=np.zeros_like(h_norm), where=norms > 0), prev).reshape(self.K, -1)
        self.p_hat = self._effective_signatures()

        # RAKE accumulation and group formation
        lo, hi = self.rake_window
        if st.group is None:
            if lo <= i < hi:
                st.rake_acc += np.abs(np.einsum("kpm,pm->k", self.p_hat.conj(), r.reshape(self.n_p, self.M)))
            if i + 1 == hi:
                self._select_group()
                self._select_i = i
        elif self.rewarm_every and self._select_i is not None and (i - self._select_i) % self.rewarm_every == 0 and i > self._select_i:
            self.state.R_S_inv = np.broadcast_to(self.delta * np.eye(self.gdim, dtype=complex), (self.G, self.gdim, self.gdim)).copy()
            self.state.a_raw = self._warm_allocation()
            self.R_ind_inv = np.broadcast_to(self.delta * np.eye(self.n_p, dtype=complex), (self.K, self.n_p, self.n_p)).copy()
            self.a_ind = self._own_filter_responses().conj()

        # alternating filter / power recursions
        for _ in range(st.iter_per_symbol):
            if st.group is not None:
                gidx = st.group
                p_grp = self.p_hat[gidx]  # (G, n_p, M)
                w_grp = st.w_hat[gidx].reshape(self.G, self.n_p, self.M)
                e = np.einsum("hpm,gpm->ghp", p_grp.conj(), w_grp)
                v = (phase_refs[gidx][None, :, :] * e.conj()).reshape(self.G, -1)
                Rv = np.einsum("gij,gj->gi", st.R_S_inv, v)
                denom = 1.0 + np.real(np.einsum("gi,gi->g", v.conj(), Rv)) / st.alpha
                kS = Rv / (st.alpha * denom)[:, None]
                st.R_S_inv = hermitize((st.R_S_inv - np.einsum("gi,gj->gij", kS, Rv.conj())) / st.alpha)
                xi_a = refs[gidx] - np.einsum("gi,gi->g", st.a_raw.conj(), v)
                st.a_raw = st.a_raw + xi_a.conj()[:, None] * kS
            if self._alloc_active:
                # individual phase-split recursions for every user
                e_own = self._own_filter_responses()
                v_i = phase_refs * e_own.conj()  # (K, n_p)
                Rv_i = np.einsum("kij,kj->ki", self.R_ind_inv, v_i)
                den_i = 1.0 + np.real(np.einsum("ki,ki->k", v_i.conj(), Rv_i)) / st.alpha
                k_i = Rv_i / (st.alpha * den_i)[:, None]
                self.R_ind_inv = hermitize((self.R_ind_inv - np.einsum("ki,kj->kij", k_i, Rv_i.conj())) / st.alpha)
                xi_i = refs - np.einsum("ki,ki->k", self.a_ind.conj(), v_i)
                self.a_ind = self.a_ind + xi_i.conj()[:, None] * k_i
            z_cur = st.w_hat.conj() @ r
            xi = refs - z_cur
            st.w_hat = st.w_hat + np.outer(xi.conj(), gain)

        st.symbol_index += 1
        diag = {"gain": gain, "phase_refs": phase_refs}
        return decisions, diag
