"""QPSK mapping, hard-decision slicing and bit accounting."""

import numpy as np

_SCALE = 1.0 / np.sqrt(2.0)


def qpsk_modulate(bits: np.ndarray) -> np.ndarray:
    """Gray-map bit pairs (..., 2) to unit-magnitude QPSK symbols.

    (0,0) -> (+1+1j)/sqrt(2); first bit drives the real sign, second the
    imaginary sign.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] != 2:
        raise ValueError("expected trailing axis of length 2 (bit pairs)")
    re = 1.0 - 2.0 * bits[..., 0]
    im = 1.0 - 2.0 * bits[..., 1]
    return (re + 1j * im) * _SCALE


def qpsk_slice(z: np.ndarray) -> np.ndarray:
    """Map each sample to the constellation point in its quadrant.

    Samples exactly on a decision axis resolve toward the positive
    half-plane so slicing is deterministic.
    """
    z = np.asarray(z)
    re = np.where(z.real >= 0.0, 1.0, -1.0)
    im = np.where(z.imag >= 0.0, 1.0, -1.0)
    return (re + 1j * im) * _SCALE


def qpsk_demodulate(symbols: np.ndarray) -> np.ndarray:
    """Inverse of qpsk_modulate for exact constellation points: (..., 2) bits."""
    s = np.asarray(symbols)
    out = np.empty(s.shape + (2,), dtype=np.int64)
    out[..., 0] = (s.real < 0.0).astype(np.int64)
    out[..., 1] = (s.imag < 0.0).astype(np.int64)
    return out


def random_symbols(rng: np.random.Generator, shape) -> np.ndarray:
    """Draw i.i.d. uniform QPSK symbols."""
    bits = rng.integers(0, 2, size=tuple(shape) + (2,))
    return qpsk_modulate(bits)


def bit_errors(decided: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Per-symbol bit-error count (0, 1 or 2) between sliced QPSK streams."""
    d = np.asarray(decided)
    r = np.asarray(reference)
    errs = (np.sign(d.real) != np.sign(r.real)).astype(np.int64)
    errs += (np.sign(d.imag) != np.sign(r.imag)).astype(np.int64)
    return errs
