"""Per-packet simulation engines for every scheme under comparison.

A packet is one block-fading realization: fixed channels, one preamble,
then decision-directed data.  Relays regenerate the preamble verbatim
(it is known network-wide) and decode the data portion with their own
receivers, so decoding errors propagate.  All physical randomness is
drawn from dedicated seed-sequence children so different schemes run on
common channels, symbols and noise.
"""

from dataclasses import dataclass, field

import numpy as np

from .channels import generate_channels
from .config import NetworkConfig
from .modulation import bit_errors, qpsk_slice, random_symbols
from .mmse import OracleModel, network_power_allocation, project_power, relay_oracle_filters
from .rals import RalsReceiver, RlsFilterBank
from .spreading import generate_codes
from .synthesis import StreamSynthesizer, empty_frame, fill_relay_phase, fill_source_phase

NCIS = "NCIS"
CIS = "CIS"
JPAIS_GBC = "JPAIS_GBC"
JPAIS_MMSE = "JPAIS_MMSE"
ORACLE_MMSE = "ORACLE_MMSE"
ADAPTIVE_RLS = "ADAPTIVE_RLS"

_VARIANTS = (NCIS, CIS, JPAIS_GBC, JPAIS_MMSE)
_RECEIVERS = (ORACLE_MMSE, ADAPTIVE_RLS)


@dataclass(frozen=True)
class Scheme:
    """One scheme under test: cooperation variant plus receiver family."""

    variant: str
    receiver: str
    group_size: int | None = None
    iter_per_symbol: int = 2

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.receiver not in _RECEIVERS:
            raise ValueError(f"unknown receiver {self.receiver!r}")
        if self.variant == JPAIS_MMSE and self.receiver != ORACLE_MMSE:
            raise ValueError("JPAIS_MMSE uses exact statistics by definition")

    @property
    def allocates_power(self) -> bool:
        return self.variant in (JPAIS_GBC, JPAIS_MMSE)

    @property
    def label(self) -> str:
        rx = "MMSE" if self.receiver == ORACLE_MMSE else "RLS"
        if self.variant == JPAIS_GBC:
            rx = "MMSE" if self.receiver == ORACLE_MMSE else "RALS"
            g = f"(G={self.group_size})" if self.group_size else ""
            return f"JPAIS-GBC{g}-{rx}"
        if self.variant == JPAIS_MMSE:
            return "JPAIS-MMSE"
        return f"{self.variant}-{rx}"

    def effective_config(self, cfg: NetworkConfig) -> NetworkConfig:
        if self.variant == NCIS:
            return cfg.replace(n_r=0)
        return cfg

    def group_size_for(self, cfg: NetworkConfig) -> int:
        if self.group_size is not None:
            return self.group_size
        return cfg.K if self.variant == JPAIS_MMSE else cfg.G


def parse_scheme(text: str) -> Scheme:
    """Parse labels like NCIS-RLS, CIS-MMSE, JPAIS-GBC-RALS:G=3, JPAIS-MMSE."""
    t = text.strip().upper().replace("_", "-")
    g = None
    if ":" in t:
        t, opt = t.split(":", 1)
        if not opt.startswith("G="):
            raise ValueError(f"unknown scheme option {opt!r}")
        g = int(opt[2:])
    if t == "JPAIS-MMSE":
        return Scheme(JPAIS_MMSE, ORACLE_MMSE, group_size=g)
    for var in (NCIS, CIS):
        if t in (f"{var}-RLS", var):
            return Scheme(var, ADAPTIVE_RLS)
        if t == f"{var}-MMSE":
            return Scheme(var, ORACLE_MMSE)
    if t in ("JPAIS-GBC-RALS", "JPAIS-GBC"):
        return Scheme(JPAIS_GBC, ADAPTIVE_RLS, group_size=g)
    if t == "JPAIS-GBC-MMSE":
        return Scheme(JPAIS_GBC, ORACLE_MMSE, group_size=g)
    raise ValueError(f"cannot parse scheme {text!r}")


@dataclass
class PacketResult:
    """Error accounting and diagnostics for one simulated packet."""

    err_bits: np.ndarray  # (P,) bit errors summed over users
    err_syms: np.ndarray  # (P,) symbol errors summed over users
    bits_per_symbol: int
    n_train: int
    per_user_errors: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def data_errors(self) -> int:
        return int(self.err_bits[self.n_train :].sum())

    @property
    def data_bits(self) -> int:
        return (len(self.err_bits) - self.n_train) * self.bits_per_symbol

    @property
    def data_symbol_errors(self) -> int:
        return int(self.err_syms[self.n_train :].sum())

    @property
    def ber(self) -> float:
        return self.data_errors / self.data_bits

    def window_errors(self, start: int, stop: int | None = None):
        """(errors, bits) over symbol indices [start, stop)."""
        sl = self.err_bits[start:stop]
        return int(sl.sum()), len(sl) * self.bits_per_symbol


@dataclass
class PacketRandomness:
    codes: np.ndarray
    channels: object
    b: np.ndarray
    noise_dest: np.ndarray
    noise_relay: np.ndarray
    user_powers: np.ndarray


def _complex_rows(rng: np.random.Generator, rows: int, S: int, sigma2: float) -> np.ndarray:
    # interleaved re/im keeps row r's stream identical whatever rows is
    if sigma2 == 0.0:
        return np.zeros((rows, S), dtype=complex)
    x = rng.standard_normal((rows, S, 2))
    return (x[..., 0] + 1j * x[..., 1]) * np.sqrt(sigma2 / 2.0)


def draw_packet_randomness(cfg: NetworkConfig, seed, lognormal_db: float = 3.0) -> PacketRandomness:
    """All physical randomness of one packet, from dedicated seed children."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    kids = [np.random.Generator(np.random.PCG64(c)) for c in ss.spawn(6)]
    rng_codes, rng_chan, rng_sym, rng_nd, rng_nr, rng_pow = kids
    codes = generate_codes(rng_codes, cfg.K, cfg.N)
    channels = generate_channels(cfg.K, cfg.L, cfg.n_r, rng_chan)
    b = random_symbols(rng_sym, (cfg.K, cfg.P))
    S = cfg.P * cfg.N + cfg.L - 1
    noise_dest = _complex_rows(rng_nd, cfg.n_p, S, cfg.sigma2)
    noise_relay = _complex_rows(rng_nr, cfg.n_r, S, cfg.sigma2)
    if lognormal_db > 0:
        offsets_db = rng_pow.normal(0.0, lognormal_db, size=cfg.K)
        powers = cfg.P_Ak * 10.0 ** (offsets_db / 10.0)
    else:
        powers = np.full(cfg.K, cfg.P_Ak)
    return PacketRandomness(codes, channels, b, noise_dest, noise_relay, powers)


def relay_hop_amps(cfg: NetworkConfig, powers: np.ndarray) -> np.ndarray:
    """Source->relay amplitudes: nominal user power times the relay hop gain."""
    return np.sqrt(np.asarray(powers) * 10.0 ** (cfg.relay_hop_gain_db / 10.0))


def equal_split_amps(powers: np.ndarray, n_p: int) -> np.ndarray:
    """(K, n_p) equal per-phase split of each user's own power budget."""
    return np.sqrt(np.asarray(powers)[:, None] / n_p) * np.ones((len(powers), n_p))


def oracle_group_select(powers: np.ndarray, G: int) -> np.ndarray:
    """Full-knowledge group formation: the G strongest power budgets."""
    order = np.argsort(-np.asarray(powers), kind="stable")
    return np.sort(order[:G])


def decode_at_relay_oracle(windows: np.ndarray, filters: np.ndarray, b: np.ndarray, n_train: int, genie: bool = False) -> np.ndarray:
    """(K, P) relay symbols: preamble passed through, data sliced from filters."""
    if genie:
        return b.copy()
    z = windows @ filters.conj().T  # (P, K)
    out = qpsk_slice(z).T
    out[:, :n_train] = b[:, :n_train]
    return out


def decode_at_relay_rls(synth: StreamSynthesizer, j: int, b: np.ndarray, n_train: int, alpha: float, genie: bool = False) -> np.ndarray:
    """Sequential RLS decoding of the whole source packet at relay j."""
    if genie:
        return b.copy()
    K, P = b.shape
    bank = RlsFilterBank(K, synth.M, alpha)
    out = np.empty_like(b)
    for i in range(P):
        r = synth.relay_window(j, i)
        refs = b[:, i] if i < n_train else None
        dec = bank.step(r, refs)
        out[:, i] = b[:, i] if i < n_train else dec
    return out


def _count_errors(decided_rows: np.ndarray, b: np.ndarray):
    """decided_rows is (P, K): per-symbol summed bit errors and per-user totals."""
    errs = bit_errors(decided_rows.T, b)  # (K, P)
    return errs.sum(axis=0), errs


def run_packet(cfg: NetworkConfig, scheme: Scheme, seed, genie_relays: bool = False, lognormal_db: float = 3.0) -> PacketResult:
    """Simulate one packet of one scheme on seed-derived physical randomness."""
    eff = scheme.effective_config(cfg)
    rnd = draw_packet_randomness(eff, seed, lognormal_db)
    try:
        if scheme.receiver == ORACLE_MMSE:
            return _static_oracle_packet(eff, scheme, rnd, genie_relays)
        if scheme.variant in (NCIS, CIS):
            return _static_rls_packet(eff, scheme, rnd, genie_relays)
        return _jpais_rals_packet(eff, scheme, rnd, genie_relays)
    except Exception as exc:
        raise RuntimeError(f"packet failed (scheme={scheme.label}, seed={seed!r})") from exc


def _finish(eff, decided_rows, b, diagnostics) -> PacketResult:
    per_symbol, per_user = _count_errors(decided_rows, b)
    return PacketResult(
        err_bits=per_symbol,
        err_syms=(per_user > 0).sum(axis=0),
        bits_per_symbol=2 * eff.K,
        n_train=eff.N_tr,
        per_user_errors=per_user[:, eff.N_tr :].sum(axis=1),
        diagnostics=diagnostics,
    )


def _static_oracle_packet(eff: NetworkConfig, scheme: Scheme, rnd: PacketRandomness, genie: bool) -> PacketResult:
    n_p = eff.n_p
    if scheme.allocates_power:
        group = oracle_group_select(rnd.user_powers, scheme.group_size_for(eff))
        amps = network_power_allocation(rnd.codes, rnd.channels, eff.sigma2, rnd.user_powers, group)
    else:
        group = None
        amps = equal_split_amps(rnd.user_powers, n_p)
        if scheme.variant == NCIS:
            amps = np.sqrt(rnd.user_powers)[:, None]
    relay_amps = relay_hop_amps(eff, rnd.user_powers)
    synth = StreamSynthesizer(rnd.codes, rnd.channels, eff.P, rnd.noise_dest, rnd.noise_relay)
    frame = empty_frame(eff.K, eff.P, eff.n_r, rnd.b)
    fill_source_phase(synth, frame, amps[:, 0], relay_amps=relay_amps)
    relay_ser = []
    for j in range(eff.n_r):
        filters = relay_oracle_filters(rnd.codes, rnd.channels, relay_amps, eff.sigma2, j)
        bt = decode_at_relay_oracle(synth.all_relay_windows(j), filters, rnd.b, eff.N_tr, genie)
        frame.b_tilde[j] = bt
        relay_ser.append(float(np.mean(bt[:, eff.N_tr :] != rnd.b[:, eff.N_tr :])))
        fill_relay_phase(synth, frame, j, amps[:, j + 1])
    model = OracleModel(rnd.codes, rnd.channels, amps, eff.sigma2)
    W = model.receive_filters()
    Z = synth.all_dest_windows() @ W.conj().T
    decided = qpsk_slice(Z)
    diag = {"amps": amps, "group": group, "relay_ser": relay_ser}
    return _finish(eff, decided, rnd.b, diag)


def _static_rls_packet(eff: NetworkConfig, scheme: Scheme, rnd: PacketRandomness, genie: bool) -> PacketResult:
    n_p = eff.n_p
    amps = equal_split_amps(rnd.user_powers, n_p)
    if scheme.variant == NCIS:
        amps = np.sqrt(rnd.user_powers)[:, None]
    synth = StreamSynthesizer(rnd.codes, rnd.channels, eff.P, rnd.noise_dest, rnd.noise_relay)
    frame = empty_frame(eff.K, eff.P, eff.n_r, rnd.b)
    fill_source_phase(synth, frame, amps[:, 0], relay_amps=relay_hop_amps(eff, rnd.user_powers))
    relay_ser = []
    for j in range(eff.n_r):
        bt = decode_at_relay_rls(synth, j, rnd.b, eff.N_tr, eff.alpha, genie)
        frame.b_tilde[j] = bt
        relay_ser.append(float(np.mean(bt[:, eff.N_tr :] != rnd.b[:, eff.N_tr :])))
        fill_relay_phase(synth, frame, j, amps[:, j + 1])
    windows = synth.all_dest_windows()
    bank = RlsFilterBank(eff.K, eff.D, eff.alpha)
    decided = np.empty((eff.P, eff.K), dtype=complex)
    for i in range(eff.P):
        refs = rnd.b[:, i] if i < eff.N_tr else None
        decided[i] = bank.step(windows[i], refs)
    diag = {"amps": amps, "relay_ser": relay_ser}
    return _finish(eff, decided, rnd.b, diag)


def _jpais_rals_packet(eff: NetworkConfig, scheme: Scheme, rnd: PacketRandomness, genie: bool,
                       feedback_delay: int = 16, feedback_smoothing: float = 1 / 128) -> PacketResult:
    """Interleaved synthesis / adaptation loop with power-allocation feedback.

    The group allocation estimated at the destination is applied to the
    transmitted amplitudes three symbols later (the window of symbol i
    overlaps the head of symbol i+1, so decisions about symbol i can
    only steer symbols from i+3 on).  The applied allocation is an
    exponentially smoothed, re-projected version of the per-symbol
    estimates: the feedback channel has finite bandwidth and the
    receivers should not chase recursion jitter.
    """
    K, P, n_p, n_r = eff.K, eff.P, eff.n_p, eff.n_r
    G = scheme.group_size_for(eff)
    receiver = RalsReceiver(eff, rnd.codes, G=G, iter_per_symbol=scheme.iter_per_symbol,
                            user_powers=rnd.user_powers)
    synth = StreamSynthesizer(rnd.codes, rnd.channels, P, rnd.noise_dest, rnd.noise_relay)
    frame = empty_frame(K, P, n_r, rnd.b)
    relay_banks = [RlsFilterBank(K, eff.M, eff.alpha) for _ in range(n_r)]
    default_amps = equal_split_amps(rnd.user_powers, n_p)
    amps_sched = np.zeros((P, K, n_p))
    applied = default_amps.copy()
    feedback_on = receiver.rake_window[1] + feedback_delay

    relay_amps = relay_hop_amps(eff, rnd.user_powers)

    def transmit_source(idx):
        amps_sched[idx] = applied
        synth.add_source_symbol(idx, applied[:, 0], rnd.b[:, idx], relay_amps=relay_amps)

    def relay_step(idx):
        for j in range(n_r):
            if genie:
                bt = rnd.b[:, idx]
            else:
                r_rel = synth.relay_window(j, idx)
                refs = rnd.b[:, idx] if idx < eff.N_tr else None
                dec = relay_banks[j].step(r_rel, refs)
                bt = rnd.b[:, idx] if idx < eff.N_tr else dec
            frame.b_tilde[j, :, idx] = bt
            synth.add_relay_symbol(j, idx, amps_sched[idx][:, j + 1], bt)

    for idx in range(min(3, P)):
        transmit_source(idx)
    for idx in range(min(2, P)):
        relay_step(idx)

    decided = np.empty((P, K), dtype=complex)
    smoothed = None
    for i in range(P):
        r = synth.dest_window_stacked(i)
        train = rnd.b[:, i] if i < eff.N_tr else None
        dec, _ = receiver.step(r, train, amps_sched[i])
        decided[i] = dec
        if receiver.state.group is not None and i >= feedback_on:
            alloc = receiver.allocation_matrix()
            if smoothed is None:
                smoothed = alloc
            else:
                smoothed = (1.0 - feedback_smoothing) * smoothed + feedback_smoothing * alloc
                # keep each budget exact after smoothing
                grp = receiver.state.group
                smoothed[grp] = project_power(smoothed[grp].reshape(-1), receiver.P_G).reshape(G, n_p)
                mask = np.ones(K, dtype=bool)
                mask[grp] = False
                nrm = np.linalg.norm(smoothed[mask], axis=1)
                smoothed[mask] *= (np.sqrt(rnd.user_powers[mask]) / np.maximum(nrm, 1e-30))[:, None]
            applied = smoothed
        if i + 3 < P:
            transmit_source(i + 3)
        if i + 2 < P:
            relay_step(i + 2)

    h_err = _channel_angles(receiver, rnd)
    relay_ser = [float(np.mean(frame.b_tilde[j, :, eff.N_tr :] != rnd.b[:, eff.N_tr :])) for j in range(n_r)]
    diag = {
        "group": None if receiver.state.group is None else receiver.state.group.copy(),
        "final_allocation": None if receiver.state.a_raw is None else receiver.reconciled_allocation(),
        "channel_angle_err": h_err,
        "relay_ser": relay_ser,
        "amps_schedule": amps_sched,
    }
    return _finish(eff, decided, rnd.b, diag)


def _channel_angles(receiver: RalsReceiver, rnd: PacketRandomness) -> np.ndarray:
    """Per-user angle between estimated and true stacked channels."""
    true = rnd.channels.stacked_all()
    est = receiver.state.h_hat
    dots = np.abs(np.einsum("ka,ka->k", est.conj(), true))
    norms = np.linalg.norm(est, axis=1) * np.linalg.norm(true, axis=1)
    cos = np.clip(dots / np.maximum(norms, 1e-30), 0.0, 1.0)
    return np.arccos(cos)
