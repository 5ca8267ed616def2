"""Fast invariant self-tests runnable from the CLI (desk-scale versions of
the acceptance checks)."""

import numpy as np

from .config import NetworkConfig
from .harness import packet_seed
from .mmse import project_power
from .rals import hermitize, rls_gain_and_inverse_update
from .simulation import draw_packet_randomness, parse_scheme, run_packet
from .spreading import signature_matrix
from .synthesis import StreamSynthesizer, empty_frame, fill_relay_phase, fill_source_phase
from .modulation import random_symbols


def _check_signature_structure() -> bool:
    rng = np.random.default_rng(0)
    code = (rng.integers(0, 2, 16) * 2 - 1) / 4.0
    C = signature_matrix(code, 5)
    ok = True
    for r in range(C.shape[0]):
        for c in range(C.shape[1]):
            want = code[r - c] if 0 <= r - c < 16 else 0.0
            ok &= C[r, c] == want
    return ok


def _check_model_consistency() -> bool:
    cfg = NetworkConfig(K=3, N=8, L=3, n_r=1, P=24, N_tr=4, G=2, sigma2=0.0)
    rnd = draw_packet_randomness(cfg, np.random.SeedSequence(5), lognormal_db=0.0)
    amps = np.sqrt(rnd.user_powers / cfg.n_p)[:, None] * np.ones((cfg.K, cfg.n_p))
    synth = StreamSynthesizer(rnd.codes, rnd.channels, cfg.P)
    frame = empty_frame(cfg.K, cfg.P, cfg.n_r, rnd.b)
    frame.b_tilde[:] = rnd.b
    fill_source_phase(synth, frame, amps[:, 0])
    for j in range(cfg.n_r):
        fill_relay_phase(synth, frame, j, amps[:, j + 1])
    from .spreading import effective_signature

    ok = True
    for i in range(2, cfg.P - 2):
        window = synth.dest_window_stacked(i)
        eta = synth.isi_window(i, frame).reshape(-1)
        compact = np.zeros(cfg.D, dtype=complex)
        for k in range(cfg.K):
            C = signature_matrix(rnd.codes[k], cfg.L)
            _, Pk = effective_signature(C, rnd.channels.stacked(k), cfg.n_p)
            Bk = np.diag(frame.phase_symbols(i)[k])
            compact += Pk @ Bk @ amps[k]
        ok &= np.linalg.norm(window - eta - compact) <= 1e-10 * max(np.linalg.norm(window), 1.0)
    return ok


def _check_inversion_lemma() -> bool:
    rng = np.random.default_rng(3)
    dim, alpha, delta = 12, 0.998, 0.01
    R_inv = delta * np.eye(dim, dtype=complex)
    acc = np.eye(dim, dtype=complex) / delta
    for _ in range(80):
        r = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        _, R_inv = rls_gain_and_inverse_update(R_inv, r, alpha)
        acc = alpha * acc + np.outer(r, r.conj())
    direct = np.linalg.inv(hermitize(acc))
    return np.linalg.norm(R_inv - direct) <= 1e-6 * np.linalg.norm(direct)


def _check_constraint_projection() -> bool:
    rng = np.random.default_rng(11)
    eps = np.finfo(float).eps
    for _ in range(2000):
        dim = rng.integers(1, 9)
        a = rng.standard_normal(dim) * 10 ** rng.uniform(-3, 3)
        if np.linalg.norm(a) == 0:
            continue
        P_G = 10 ** rng.uniform(-2, 2)
        proj = project_power(np.abs(a), P_G)
        if abs(proj @ proj - P_G) > 8 * eps * P_G:
            return False
    return True


def _check_determinism() -> bool:
    cfg = NetworkConfig(K=3, N=8, L=2, n_r=1, P=80, N_tr=24, G=2)
    sch = parse_scheme("CIS-RLS")
    a = run_packet(cfg, sch, packet_seed(9, 0, 0))
    b = run_packet(cfg, sch, packet_seed(9, 0, 0))
    return np.array_equal(a.err_bits, b.err_bits) and a.data_errors == b.data_errors


CHECKS = [
    ("signature shift structure", _check_signature_structure),
    ("phase-stacked vs compact model", _check_model_consistency),
    ("inversion-lemma recursion", _check_inversion_lemma),
    ("power-constraint projection", _check_constraint_projection),
    ("packet determinism", _check_determinism),
]


def run_selftest(verbose: bool = False) -> bool:
    all_ok = True
    for name, fn in CHECKS:
        ok = bool(fn())
        all_ok &= ok
        if verbose:
            print(f"[{'PASS' if ok else 'FAIL'}] {name}")
    return all_ok
