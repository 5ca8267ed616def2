"""Spreading codes and the banded signature matrices they induce.

The signature matrix of a user is the M x L convolution matrix whose
column j is the code shifted down by j-1 chips; multiplying it by an
L-tap channel yields the effective signature the receiver correlates
against.  Stacked (block-diagonal) forms cover the multi-phase relay
links.
"""

from dataclasses import dataclass, field

import numpy as np


def generate_codes(rng: np.random.Generator, K: int, N: int) -> np.ndarray:
    """Random binary +/-1 codes, unit-normalized, one row per user."""
    chips = rng.integers(0, 2, size=(K, N)) * 2.0 - 1.0
    return chips / np.sqrt(N)


def load_codes(path, N: int | None = None) -> np.ndarray:
    """Load codes from text: one line per user, N whitespace-separated +/-1 entries.

    Returned rows are unit-normalized.
    """
    rows = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            vals = np.array([float(tok) for tok in line.split()])
            if not np.all(np.isin(vals, (-1.0, 1.0))):
                raise ValueError(f"{path}:{ln}: code entries must be +/-1")
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no codes found")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"{path}: inconsistent code lengths {sorted(lengths)}")
    codes = np.vstack(rows)
    if N is not None and codes.shape[1] != N:
        raise ValueError(f"{path}: expected length {N}, found {codes.shape[1]}")
    return codes / np.sqrt(codes.shape[1])


def signature_matrix(code: np.ndarray, L: int) -> np.ndarray:
    """M x L banded matrix with column j the code shifted down j-1 chips."""
    code = np.asarray(code, dtype=complex)
    if code.ndim != 1 or code.size < 1:
        raise ValueError("code must be a non-empty 1-D vector")
    if L < 1:
        raise ValueError(f"L must be >= 1 (got {L})")
    if np.any(code == 0):
        raise ValueError("code entries must be nonzero")
    N = code.size
    M = N + L - 1
    C = np.zeros((M, L), dtype=complex)
    for j in range(L):
        C[j : j + N, j] = code
    return C


def stacked_signature(C: np.ndarray, n_phases: int) -> np.ndarray:
    """Block-diagonal stack of C, one copy per transmission phase."""
    M, L = C.shape
    out = np.zeros((n_phases * M, n_phases * L), dtype=complex)
    for p in range(n_phases):
        out[p * M : (p + 1) * M, p * L : (p + 1) * L] = C
    return out


@dataclass
class SignatureMatrix:
    """A user's code together with its banded and phase-stacked forms."""

    code: np.ndarray
    matrix: np.ndarray
    n_phases: int = 1
    stacked: np.ndarray = field(init=False)

    def __post_init__(self):
        self.stacked = stacked_signature(self.matrix, self.n_phases)

    @property
    def L(self) -> int:
        return self.matrix.shape[1]


def build_signature_matrix(code: np.ndarray, L: int, n_r: int = 0) -> SignatureMatrix:
    """Construct the signature matrix and its (n_r+1)-phase stacked form."""
    C = signature_matrix(code, L)
    return SignatureMatrix(code=np.asarray(code, dtype=complex), matrix=C, n_phases=n_r + 1)


def effective_signature(C: np.ndarray, h_stacked: np.ndarray, n_phases: int):
    """Effective signature p (per-phase code/channel convolutions) and its placement matrix.

    Args:
        C: M x L signature matrix (single-phase block).
        h_stacked: concatenated per-phase L-tap channels, length n_phases*L.
        n_phases: number of transmission phases.

    Returns:
        (p, P): p of length n_phases*M with block j = C @ h_j; P of shape
        (n_phases*M, n_phases) with block j of p placed in rows j*M..(j+1)*M-1
        of column j, zeros elsewhere.
    """
    M, L = C.shape
    h = np.asarray(h_stacked, dtype=complex)
    if h.shape != (n_phases * L,):
        raise ValueError(f"expected stacked channel of length {n_phases * L}, got {h.shape}")
    blocks = C @ h.reshape(n_phases, L).T  # (M, n_phases)
    p = blocks.T.reshape(-1)
    P = np.zeros((n_phases * M, n_phases), dtype=complex)
    for j in range(n_phases):
        P[j * M : (j + 1) * M, j] = blocks[:, j]
    return p, P
