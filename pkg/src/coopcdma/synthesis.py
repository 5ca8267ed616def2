"""Chip-level synthesis of every transmission phase.

Each transmitter emits one spread symbol every N chips; the receiver
observes M = N + L - 1 chips per symbol, so neighbouring symbols leak
into the window through the multipath tails.  Synthesis builds the full
packet chip stream per link and slices it, which makes intersymbol
interference emerge physically instead of being modelled statistically.
Signal and noise streams are kept separate so tests and oracle
receivers can observe the interference component exactly.
"""

from dataclasses import dataclass

import numpy as np

from .channels import ChannelState


@dataclass
class SymbolFrame:
    """Source symbols and their relay-regenerated copies for one packet.

    b: (K, P) QPSK symbols from the sources; b_tilde: (n_r, K, P) symbols
    the relays actually retransmit (equal to b wherever relays decoded
    correctly).
    """

    b: np.ndarray
    b_tilde: np.ndarray

    @property
    def K(self) -> int:
        return self.b.shape[0]

    @property
    def P(self) -> int:
        return self.b.shape[1]

    @property
    def n_r(self) -> int:
        return self.b_tilde.shape[0]

    def phase_symbols(self, i: int) -> np.ndarray:
        """(K, n_p) symbols carried at index i: source column then one per relay."""
        if self.n_r == 0:
            return self.b[:, i : i + 1].copy()
        return np.column_stack([self.b[:, i]] + [self.b_tilde[j, :, i] for j in range(self.n_r)])


def empty_frame(K: int, P: int, n_r: int, b: np.ndarray) -> SymbolFrame:
    """Frame with source symbols set and relay copies unfilled (NaN-marked)."""
    bt = np.full((n_r, K, P), np.nan, dtype=complex)
    return SymbolFrame(b=np.asarray(b, dtype=complex), b_tilde=bt)


def link_response(code: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Chip response of one symbol through one link: code convolved with the taps."""
    return np.convolve(code, h)


def response_matrix(codes: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """(K, M) responses for a bank of links; taps is (K, L)."""
    K, N = codes.shape
    L = taps.shape[1]
    out = np.empty((K, N + L - 1), dtype=complex)
    for k in range(K):
        out[k] = np.convolve(codes[k], taps[k])
    return out


def isi_tail_vectors(g: np.ndarray, N: int):
    """Leakage of the previous/next symbol into an M-chip window.

    Returns (pre, post): pre holds the response tail of the previous
    symbol in the first L-1 chips; post holds the response head of the
    next symbol in the last L-1 chips.
    """
    M = g.shape[-1]
    L = M - N + 1
    pre = np.zeros(M, dtype=complex)
    post = np.zeros(M, dtype=complex)
    if L > 1:
        pre[: L - 1] = g[N:]
        post[N:] = g[: L - 1]
    return pre, post


def complex_noise(rng: np.random.Generator, shape, sigma2: float) -> np.ndarray:
    """Circularly-symmetric Gaussian noise with E|n|^2 = sigma2 per entry."""
    if sigma2 == 0.0:
        return np.zeros(shape, dtype=complex)
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class StreamSynthesizer:
    """Incremental per-link chip-stream builder with per-symbol amplitudes.

    Symbols are appended in index order (amplitudes may change per
    symbol, which is how power-allocation feedback enters the air
    interface).  Windows for symbol i are valid once symbols up to i+1
    have been appended on every phase.
    """

    def __init__(self, codes: np.ndarray, channels: ChannelState, P: int, noise_dest=None, noise_relay=None):
        self.K, self.N = codes.shape
        self.L = channels.L
        self.M = self.N + self.L - 1
        self.n_r = channels.n_r
        self.n_p = self.n_r + 1
        self.P = P
        self.g_sd = response_matrix(codes, channels.sd)
        self.g_sr = np.stack([response_matrix(codes, channels.sr[j]) for j in range(self.n_r)]) if self.n_r else np.zeros((0, self.K, self.M), dtype=complex)
        self.g_rd = np.stack([response_matrix(codes, channels.rd[j]) for j in range(self.n_r)]) if self.n_r else np.zeros((0, self.K, self.M), dtype=complex)
        S = P * self.N + self.L - 1
        self.signal_dest = np.zeros((self.n_p, S), dtype=complex)
        self.signal_relay = np.zeros((self.n_r, S), dtype=complex)
        self.noise_dest = np.zeros((self.n_p, S), dtype=complex) if noise_dest is None else noise_dest
        self.noise_relay = np.zeros((self.n_r, S), dtype=complex) if noise_relay is None else noise_relay
        if self.noise_dest.shape != (self.n_p, S) or self.noise_relay.shape != (self.n_r, S):
            raise ValueError("noise stream shape mismatch")
        self.src_filled = 0
        self.relay_filled = np.zeros(self.n_r, dtype=int)
        # amplitude schedule actually transmitted, for diagnostics and oracles
        self.amp_history = np.zeros((P, self.K, self.n_p))

    def add_source_symbol(self, i: int, amps: np.ndarray, symbols: np.ndarray, relay_amps: np.ndarray | None = None) -> None:
        """Transmit source symbol i (amps, symbols are (K,)) toward destination and relays.

        relay_amps sets the amplitudes seen on the source->relay links
        (favorable relay link budgets); defaults to the destination-link
        amplitudes.
        """
        if i != self.src_filled:
            raise ValueError(f"source symbols must be appended in order (expected {self.src_filled}, got {i})")
        x = np.asarray(amps) * np.asarray(symbols)
        sl = slice(i * self.N, i * self.N + self.M)
        self.signal_dest[0, sl] += self.g_sd.T @ x
        if self.n_r:
            xr = x if relay_amps is None else np.asarray(relay_amps) * np.asarray(symbols)
            for j in range(self.n_r):
                self.signal_relay[j, sl] += self.g_sr[j].T @ xr
        self.amp_history[i, :, 0] = amps
        self.src_filled += 1

    def add_relay_symbol(self, j: int, i: int, amps: np.ndarray, symbols: np.ndarray) -> None:
        """Transmit relay j's regenerated symbol i toward the destination."""
        if i != self.relay_filled[j]:
            raise ValueError(f"relay {j} symbols must be appended in order")
        x = np.asarray(amps) * np.asarray(symbols)
        sl = slice(i * self.N, i * self.N + self.M)
        self.signal_dest[j + 1, sl] += self.g_rd[j].T @ x
        self.amp_history[i, :, j + 1] = amps
        self.relay_filled[j] += 1

    def _check_window(self, i: int) -> None:
        need = min(i + 2, self.P)
        if self.src_filled < need or (self.n_r and np.any(self.relay_filled < need)):
            raise ValueError(f"window {i} requested before symbols {need - 1} were transmitted")

    def dest_window(self, i: int) -> np.ndarray:
        """(n_p, M) noisy observation of symbol i at the destination."""
        self._check_window(i)
        sl = slice(i * self.N, i * self.N + self.M)
        return self.signal_dest[:, sl] + self.noise_dest[:, sl]

    def dest_window_stacked(self, i: int) -> np.ndarray:
        """Stacked (n_p*M,) destination observation of symbol i."""
        return self.dest_window(i).reshape(-1)

    def relay_window(self, j: int, i: int) -> np.ndarray:
        """(M,) noisy observation of source symbol i at relay j."""
        if self.src_filled < min(i + 2, self.P):
            raise ValueError(f"relay window {i} requested before source symbol {i + 1} was sent")
        sl = slice(i * self.N, i * self.N + self.M)
        return self.signal_relay[j, sl] + self.noise_relay[j, sl]

    def signal_window(self, i: int) -> np.ndarray:
        """(n_p, M) noise-free destination observation (signal plus ISI only)."""
        self._check_window(i)
        sl = slice(i * self.N, i * self.N + self.M)
        return self.signal_dest[:, sl].copy()

    def own_contribution(self, i: int, frame: SymbolFrame) -> np.ndarray:
        """(n_p, M) part of window i carrying symbol i itself, per transmitted amplitudes."""
        out = np.empty((self.n_p, self.M), dtype=complex)
        out[0] = self.g_sd.T @ (self.amp_history[i, :, 0] * frame.b[:, i])
        for j in range(self.n_r):
            out[j + 1] = self.g_rd[j].T @ (self.amp_history[i, :, j + 1] * frame.b_tilde[j, :, i])
        return out

    def isi_window(self, i: int, frame: SymbolFrame) -> np.ndarray:
        """(n_p, M) intersymbol-interference component of window i (exact)."""
        return self.signal_window(i) - self.own_contribution(i, frame)

    def all_dest_windows(self) -> np.ndarray:
        """(P, n_p*M) stacked noisy windows; requires a fully transmitted packet."""
        self._check_window(self.P - 1)
        stream = self.signal_dest + self.noise_dest
        wins = np.lib.stride_tricks.sliding_window_view(stream, self.M, axis=1)[:, :: self.N, :]
        return np.transpose(wins[:, : self.P, :], (1, 0, 2)).reshape(self.P, -1)

    def all_relay_windows(self, j: int) -> np.ndarray:
        """(P, M) noisy windows at relay j; requires all source symbols transmitted."""
        if self.src_filled < self.P:
            raise ValueError("source packet not fully transmitted")
        stream = self.signal_relay[j] + self.noise_relay[j]
        wins = np.lib.stride_tricks.sliding_window_view(stream, self.M)[:: self.N]
        return wins[: self.P]


def fill_source_phase(s: StreamSynthesizer, frame: SymbolFrame, amps: np.ndarray, relay_amps: np.ndarray | None = None) -> None:
    """Transmit the whole source packet with a constant (K,) amplitude vector."""
    for i in range(s.P):
        s.add_source_symbol(i, amps, frame.b[:, i], relay_amps=relay_amps)


def fill_relay_phase(s: StreamSynthesizer, frame: SymbolFrame, j: int, amps: np.ndarray) -> None:
    """Transmit relay j's whole packet with a constant (K,) amplitude vector."""
    if np.any(np.isnan(frame.b_tilde[j])):
        raise ValueError(f"relay {j} symbols not decoded yet")
    for i in range(s.P):
        s.add_relay_symbol(j, i, amps, frame.b_tilde[j, :, i])


def synthesize_phase(gmat: np.ndarray, symbols: np.ndarray, amps: np.ndarray, N: int, noise_stream=None) -> np.ndarray:
    """Standalone single-phase synthesis: (P, M) windows for one link bank.

    gmat is (K, M) per-user chip responses for this phase, symbols (K, P),
    amps (K,).  NaN symbols (undediced relay data) are rejected.
    """
    symbols = np.asarray(symbols)
    if np.any(np.isnan(symbols)):
        raise ValueError("phase symbols contain undecoded entries")
    K, M = gmat.shape
    P = symbols.shape[1]
    L = M - N + 1
    S = P * N + L - 1
    stream = np.zeros(S, dtype=complex)
    weighted = np.asarray(amps)[:, None] * symbols  # (K, P)
    for k in range(K):
        ups = np.zeros(P * N, dtype=complex)
        ups[::N] = weighted[k]
        stream += np.convolve(ups, gmat[k])[:S]
    if noise_stream is not None:
        stream = stream + noise_stream
    wins = np.lib.stride_tricks.sliding_window_view(stream, M)[::N]
    return wins[:P].copy()


def stack_received(phase_windows) -> np.ndarray:
    """Concatenate per-phase (P, M) window matrices into (P, n_p*M) vectors."""
    mats = list(phase_windows)
    if not mats:
        raise ValueError("no phases supplied")
    P = mats[0].shape[0]
    for m in mats:
        if m.shape[0] != P:
            raise ValueError("phase window counts disagree")
    return np.hstack(mats)
