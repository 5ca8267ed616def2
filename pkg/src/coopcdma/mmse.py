"""Closed-form constrained MMSE designs built from exact second-order statistics.

Everything here is a pure function of known channels, codes and
amplitudes: receive filters, the group power allocation with its power
constraint, the linear channel estimator, and the alternating
filter/allocation optimization.  These serve both as a deployable
full-knowledge scheme and as the convergence target for the recursive
estimators.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channels import ChannelState
from .synthesis import isi_tail_vectors, response_matrix


class NumericalError(RuntimeError):
    """Raised when a statistics matrix stays singular after regularization."""


def solve_hermitian(A: np.ndarray, B: np.ndarray, diag_load_rel: float = 1e-10) -> np.ndarray:
    """Solve A X = B for Hermitian PSD A, with diagonal-loading fallback.

    Singular systems are retried once with eps*I added, eps =
    diag_load_rel * trace(A) / dim; a second failure raises
    NumericalError with conditioning diagnostics.
    """
    A = np.asarray(A)
    if not np.all(np.isfinite(A)):
        raise NumericalError("covariance contains non-finite entries")
    try:
        return cho_solve(cho_factor(A, lower=True), B)
    except np.linalg.LinAlgError:
        pass
    eps = diag_load_rel * max(np.trace(A).real, np.finfo(float).tiny) / A.shape[0]
    loaded = A + eps * np.eye(A.shape[0])
    try:
        return cho_solve(cho_factor(loaded, lower=True), B)
    except np.linalg.LinAlgError as exc:
        eigs = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
        raise NumericalError(
            f"covariance solve failed after loading eps={eps:.3e}; "
            f"eigenvalue range [{eigs.min():.3e}, {eigs.max():.3e}]"
        ) from exc


def mmse_receive_filter(R: np.ndarray, p_xcorr: np.ndarray) -> np.ndarray:
    """Linear MMSE filter: the solution of R w = p, never an explicit inverse."""
    return solve_hermitian(R, p_xcorr)


def filter_mse(w: np.ndarray, R: np.ndarray, p_xcorr: np.ndarray, signal_power: float = 1.0) -> float:
    """Mean squared error of a filter against given statistics."""
    w = np.asarray(w)
    return float(signal_power - 2.0 * np.real(np.vdot(w, p_xcorr)) + np.real(np.vdot(w, R @ w)))


def project_power(a: np.ndarray, P_G: float, paper_scaling: bool = False) -> np.ndarray:
    """Scale an allocation onto the power-constraint surface ||a||^2 = P_G.

    paper_scaling reproduces the alternative P_G/||a|| normalization
    (which lands on ||a||^2 = P_G^2 instead) for compatibility checks.
    """
    nrm = np.linalg.norm(a)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise NumericalError("cannot project a zero or non-finite allocation")
    scale = (P_G if paper_scaling else np.sqrt(P_G)) / nrm
    return a * scale


def power_allocation_mmse(R_S: np.ndarray, p_S: np.ndarray, lam: float, P_G: float, paper_scaling: bool = False) -> np.ndarray:
    """Regularized group power allocation, projected onto the power constraint.

    Amplitudes are real and non-negative by design, so the regularized
    system is solved in the real domain (the stationarity condition for
    real amplitudes); negative components are clipped before the radial
    projection onto ||a||^2 = P_G.
    """
    A = 0.5 * (R_S + R_S.conj().T).real + lam * np.eye(R_S.shape[0])
    b = np.asarray(p_S).real
    a = np.linalg.solve(A, b)
    a = np.clip(a, 0.0, None)
    if np.linalg.norm(a) == 0.0:
        raise NumericalError("degenerate cross-correlation: allocation collapsed to zero")
    return project_power(a, P_G, paper_scaling=paper_scaling)


# ---------------------------------------------------------------------------
# group statistics
# ---------------------------------------------------------------------------


@dataclass
class GroupPowerStats:
    """Second-order statistics of the group input seen through one filter."""

    R_S: np.ndarray
    p_S: np.ndarray
    count: int

    def __post_init__(self):
        self.R_S = np.asarray(self.R_S)
        self.p_S = np.asarray(self.p_S)


def group_input_vector(w: np.ndarray, sig_blocks: np.ndarray, phase_symbols: np.ndarray) -> np.ndarray:
    """Input vector of the allocation recursion for one symbol.

    sig_blocks is (G, n_p, M): amplitude-free effective-signature blocks
    of the group members; phase_symbols is (G, n_p).  Entry (g, p) is
    b_{g,p} * (w_p^H p_{g,p}), flattened; a real allocation a then makes
    a @ v the group part of the filter output.
    """
    n_p, M = sig_blocks.shape[1], sig_blocks.shape[2]
    e = np.einsum("gpm,pm->gp", sig_blocks.conj(), w.reshape(n_p, M))
    return (phase_symbols * e.conj()).reshape(-1)


def estimate_group_stats(w: np.ndarray, sig_blocks: np.ndarray, phase_symbols_seq: np.ndarray, b_ref_seq: np.ndarray) -> GroupPowerStats:
    """Sample-average group statistics over a window of symbols.

    phase_symbols_seq is (T, G, n_p) and b_ref_seq (T,): the desired
    user's reference symbols.  Warns (via count) when the window is
    shorter than the allocation dimension.
    """
    T = phase_symbols_seq.shape[0]
    if T == 0:
        raise ValueError("empty sample window")
    n_p, M = sig_blocks.shape[1], sig_blocks.shape[2]
    e = np.einsum("gpm,pm->gp", sig_blocks.conj(), w.reshape(n_p, M))
    V = (phase_symbols_seq * e.conj()[None, :, :]).reshape(T, -1)  # (T, G*n_p)
    R_S = np.einsum("ti,tj->ij", V, V.conj()) / T
    p_S = V.T @ b_ref_seq.conj() / T
    return GroupPowerStats(R_S=R_S, p_S=p_S, count=T)


def analytic_group_stats(w: np.ndarray, sig_blocks: np.ndarray, member_index: int, relay_fidelity: float = 1.0) -> GroupPowerStats:
    """Exact expectations of the group statistics over i.i.d. unit symbols.

    relay_fidelity is the correlation E[b b~*] between a source symbol
    and its relay-regenerated copy (1.0 for error-free regeneration).
    """
    G, n_p, M = sig_blocks.shape
    e = np.einsum("gpm,pm->gp", sig_blocks.conj(), w.reshape(n_p, M))
    eb = e.conj()  # (G, n_p)
    rho = np.full(n_p, relay_fidelity)
    rho[0] = 1.0
    # within-user phase correlation: source phase correlates with relay
    # copies via the regeneration fidelity
    corr = np.outer(rho, rho)
    np.fill_diagonal(corr, 1.0)
    dim = G * n_p
    R_S = np.zeros((dim, dim), dtype=complex)
    for g in range(G):
        blk = np.outer(eb[g], eb[g].conj()) * corr
        R_S[g * n_p : (g + 1) * n_p, g * n_p : (g + 1) * n_p] = blk
    p_S = np.zeros(dim, dtype=complex)
    p_S[member_index * n_p : (member_index + 1) * n_p] = eb[member_index] * rho
    return GroupPowerStats(R_S=R_S, p_S=p_S, count=0)


# ---------------------------------------------------------------------------
# exact destination statistics
# ---------------------------------------------------------------------------


class OracleModel:
    """Exact destination statistics for fixed channels and amplitudes.

    Assembles the stacked signal signatures, the exact ISI covariance of
    interior symbols (assuming correct relay regeneration), and the full
    received covariance; everything a full-knowledge linear receiver
    needs.
    """

    def __init__(self, codes: np.ndarray, channels: ChannelState, amps: np.ndarray, sigma2: float):
        self.K, self.N = codes.shape
        self.L = channels.L
        self.M = self.N + self.L - 1
        self.n_r = channels.n_r
        self.n_p = self.n_r + 1
        self.D = self.n_p * self.M
        self.amps = np.asarray(amps, dtype=float)
        if self.amps.shape != (self.K, self.n_p):
            raise ValueError(f"amps must be (K, n_p) = ({self.K}, {self.n_p})")
        self.sigma2 = float(sigma2)
        # destination-terminating responses per phase: (n_p, K, M)
        resp = [response_matrix(codes, channels.sd)]
        for j in range(self.n_r):
            resp.append(response_matrix(codes, channels.rd[j]))
        self.resp = np.stack(resp)
        # stacked signal signatures with amplitudes: q[k] = [a_k0 g_0k; a_k1 g_1k; ...]
        self.q = np.transpose(self.resp * self.amps.T[:, :, None], (1, 0, 2)).reshape(self.K, self.D)
        self.R = self._covariance()

    def _covariance(self) -> np.ndarray:
        R = np.einsum("kd,ke->de", self.q, self.q.conj())
        R += self.isi_covariance()
        R += self.sigma2 * np.eye(self.D)
        return R

    def isi_covariance(self) -> np.ndarray:
        """Exact ISI covariance of interior symbols (correct relay copies)."""
        pre = np.empty_like(self.resp)
        post = np.empty_like(self.resp)
        for p in range(self.n_p):
            for k in range(self.K):
                pre[p, k], post[p, k] = isi_tail_vectors(self.resp[p, k], self.N)
        P_eta = np.zeros((self.D, self.D), dtype=complex)
        for p in range(self.n_p):
            for pp in range(self.n_p):
                blk = np.zeros((self.M, self.M), dtype=complex)
                wts = self.amps[:, p] * self.amps[:, pp]
                blk += np.einsum("k,km,kn->mn", wts, pre[p], pre[pp].conj())
                blk += np.einsum("k,km,kn->mn", wts, post[p], post[pp].conj())
                P_eta[p * self.M : (p + 1) * self.M, pp * self.M : (pp + 1) * self.M] = blk
        return P_eta

    def sig_blocks(self, users) -> np.ndarray:
        """(len(users), n_p, M) amplitude-free effective-signature blocks."""
        return np.transpose(self.resp[:, users, :], (1, 0, 2))

    def receive_filter(self, k: int) -> np.ndarray:
        return mmse_receive_filter(self.R, self.q[k])

    def receive_filters(self, users=None) -> np.ndarray:
        users = range(self.K) if users is None else users
        sols = solve_hermitian(self.R, self.q[list(users)].T)
        return sols.T

    def mse(self, w: np.ndarray, k: int) -> float:
        return filter_mse(w, self.R, self.q[k])


def relay_oracle_filters(codes: np.ndarray, channels: ChannelState, src_amps: np.ndarray, sigma2: float, j: int) -> np.ndarray:
    """(K, M) exact MMSE filters at relay j for the source-phase observation."""
    g = response_matrix(codes, channels.sr[j])  # (K, M)
    K, M = g.shape
    N = codes.shape[1]
    qs = src_amps[:, None] * g
    R = np.einsum("km,kn->mn", qs, qs.conj())
    for k in range(K):
        pre, post = isi_tail_vectors(g[k], N)
        R += src_amps[k] ** 2 * (np.outer(pre, pre.conj()) + np.outer(post, post.conj()))
    R += sigma2 * np.eye(M)
    return solve_hermitian(R, qs.T).T


def rake_filters(codes: np.ndarray, taps: np.ndarray, amps: np.ndarray) -> np.ndarray:
    """(K, M) matched-filter (RAKE) receivers for a single-phase link bank."""
    g = response_matrix(codes, taps)
    return amps[:, None] * g


# ---------------------------------------------------------------------------
# channel estimation
# ---------------------------------------------------------------------------


def build_q_matrix(C: np.ndarray, amps_k: np.ndarray, symbols_k: np.ndarray) -> np.ndarray:
    """Dense (n_p*M, n_p*L) regression matrix mapping stacked taps to the signal."""
    M, L = C.shape
    n_p = amps_k.shape[0]
    Q = np.zeros((n_p * M, n_p * L), dtype=complex)
    for p in range(n_p):
        Q[p * M : (p + 1) * M, p * L : (p + 1) * L] = amps_k[p] * symbols_k[p] * C
    return Q


def channel_estimate_mmse(r: np.ndarray, Q_all, P_h_all, P_eta: np.ndarray, sigma2: float, k: int) -> np.ndarray:
    """From-scratch linear MMSE channel estimate of user k from one observation.

    Q_all / P_h_all are the per-user regression matrices and channel
    priors of every user; the model covariance sums all of them.
    """
    D = r.shape[0]
    R = np.zeros((D, D), dtype=complex)
    for Q, P_h in zip(Q_all, P_h_all):
        R += Q @ P_h @ Q.conj().T
    R += P_eta + sigma2 * np.eye(D)
    return P_h_all[k].conj().T @ (Q_all[k].conj().T @ solve_hermitian(R, r))


class ChannelEstimator:
    """Linear MMSE channel estimator with one shared covariance factorization.

    With unit-magnitude symbols the model covariance does not depend on
    the symbol values, so the factorization is computed once per packet
    and shared by every user's estimate (and by any filter solve against
    the same covariance).
    """

    def __init__(self, codes: np.ndarray, amps: np.ndarray, P_h_blocks, P_eta: np.ndarray, sigma2: float):
        self.K, self.N = codes.shape
        self.n_p = amps.shape[1]
        self.P_h = [np.asarray(P) for P in P_h_blocks]  # per user, (n_p*L, n_p*L)
        self.L = self.P_h[0].shape[0] // self.n_p
        self.M = self.N + self.L - 1
        D = self.n_p * self.M
        self.amps = np.asarray(amps, dtype=float)
        self.C = np.stack([_sig(codes[k], self.L) for k in range(self.K)])  # (K, M, L)
        R = np.zeros((D, D), dtype=complex)
        for k in range(self.K):
            for p in range(self.n_p):
                Pblk = self.P_h[k][p * self.L : (p + 1) * self.L, p * self.L : (p + 1) * self.L]
                blk = self.amps[k, p] ** 2 * (self.C[k] @ Pblk @ self.C[k].conj().T)
                R[p * self.M : (p + 1) * self.M, p * self.M : (p + 1) * self.M] += blk
        R += P_eta + sigma2 * np.eye(D)
        self.R = R
        eps = 1e-10 * np.trace(R).real / D
        try:
            self._factor = cho_factor(R, lower=True)
        except np.linalg.LinAlgError:
            self._factor = cho_factor(R + eps * np.eye(D), lower=True)

    def solve(self, x: np.ndarray) -> np.ndarray:
        """Solve against the shared model covariance (reusable for filter design)."""
        return cho_solve(self._factor, x)

    def estimate(self, r: np.ndarray, k: int, phase_symbols_k: np.ndarray) -> np.ndarray:
        """Stacked tap estimate of user k given its per-phase symbols."""
        y = self.solve(r).reshape(self.n_p, self.M)
        coef = (self.amps[k] * phase_symbols_k).conj()  # (n_p,)
        qy = np.einsum("ml,pm,p->pl", self.C[k].conj(), y, coef).reshape(-1)
        return self.P_h[k].conj().T @ qy


def _sig(code, L):
    from .spreading import signature_matrix

    return signature_matrix(code, L)


# ---------------------------------------------------------------------------
# alternating optimization
# ---------------------------------------------------------------------------


@dataclass
class AlternationResult:
    w: np.ndarray
    a: np.ndarray
    mse_trajectory: list


def _amp_matrix(K, n_p, user_powers, group, a_group):
    """(K, n_p) applied amplitudes: group rows from a_group, others equal split."""
    amps = np.sqrt(np.asarray(user_powers)[:, None] / n_p) * np.ones((K, n_p))
    for g_idx, k in enumerate(group):
        amps[k] = a_group[g_idx * n_p : (g_idx + 1) * n_p]
    return amps


def dump_covariance_spectrum(R: np.ndarray, path) -> None:
    """Write the eigenvalue spectrum of a covariance matrix as CSV."""
    import csv as _csv

    eigs = np.linalg.eigvalsh(0.5 * (R + R.conj().T))
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["index", "eigenvalue"])
        for i, e in enumerate(sorted(eigs, reverse=True)):
            w.writerow([i, e])


def alternate_oracle(codes, channels, sigma2, user_powers, group, k, a0, n_iter, lam=0.025, P_G=None, debug_csv=None, spectrum_csv=None):
    """Alternate the exact filter and allocation designs for one desired user.

    Each iteration: filter step (exact MMSE under the current applied
    allocation), then allocation step (regularized solve + projection),
    rebuilding the statistics under the new allocation.  The analytic MSE
    of user k is recorded after every half-step.
    """
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")
    group = list(group)
    n_p = channels.n_r + 1
    K = codes.shape[0]
    if P_G is None:
        P_G = float(np.sum(np.asarray(user_powers)[group]))
    a = np.asarray(a0, dtype=float)
    traj = []
    w = None
    for _ in range(n_iter):
        model = OracleModel(codes, channels, _amp_matrix(K, n_p, user_powers, group, a), sigma2)
        w = model.receive_filter(k)
        traj.append(model.mse(w, k))
        g_idx = group.index(k)
        stats = analytic_group_stats(w, model.sig_blocks(group), g_idx)
        a = power_allocation_mmse(stats.R_S, stats.p_S, lam, P_G)
        model_a = OracleModel(codes, channels, _amp_matrix(K, n_p, user_powers, group, a), sigma2)
        traj.append(model_a.mse(w, k))
    if debug_csv is not None:
        import csv

        with open(debug_csv, "w", newline="") as fh:
            wtr = csv.writer(fh)
            wtr.writerow(["half_step", "mse"])
            for i, m in enumerate(traj):
                wtr.writerow([i, m])
    if spectrum_csv is not None:
        final = OracleModel(codes, channels, _amp_matrix(K, n_p, user_powers, group, a), sigma2)
        dump_covariance_spectrum(final.R, spectrum_csv)
    return AlternationResult(w=w, a=a, mse_trajectory=traj)


def network_power_allocation(codes, channels, sigma2, user_powers, group, n_iter=4, lam=0.025):
    """Applied amplitude matrix under the group-based power constraint.

    Group members share one joint budget: each member's own-link block is
    taken from its own regularized design (relative norms preserved,
    which is what shifts power toward the weaker members) and the
    concatenation is projected onto the group budget.  Every other user
    splits its own fixed budget across its phases by the same design
    with an individual constraint.  Returns the (K, n_p) matrix.
    """
    group = list(group)
    user_powers = np.asarray(user_powers, dtype=float)
    K = codes.shape[0]
    n_p = channels.n_r + 1
    G = len(group)
    P_G = float(user_powers[group].sum())
    amps = np.sqrt(user_powers[:, None] / n_p) * np.ones((K, n_p))
    outside = [k for k in range(K) if k not in group]
    for _ in range(n_iter):
        model = OracleModel(codes, channels, amps, sigma2)
        new_amps = amps.copy()
        blocks = np.zeros((G, n_p))
        for g_idx, k in enumerate(group):
            w = model.receive_filter(k)
            stats = analytic_group_stats(w, model.sig_blocks(group), g_idx)
            A = 0.5 * (stats.R_S + stats.R_S.conj().T).real + lam * np.eye(G * n_p)
            x = np.linalg.solve(A, stats.p_S.real)
            blocks[g_idx] = np.clip(x[g_idx * n_p : (g_idx + 1) * n_p], 0.0, None)
        flat = blocks.reshape(-1)
        if np.linalg.norm(flat) > 0.0:
            new_amps[group] = project_power(flat, P_G).reshape(G, n_p)
        for k in outside:
            w = model.receive_filter(k)
            stats = analytic_group_stats(w, model.sig_blocks([k]), 0)
            try:
                new_amps[k] = power_allocation_mmse(stats.R_S, stats.p_S, lam, user_powers[k])
            except NumericalError:
                pass
        amps = new_amps
    return amps
