"""Block-fading multipath channel generation for every network link."""

import csv
from dataclasses import dataclass

import numpy as np


def draw_link_taps(rng: np.random.Generator, L: int):
    """One L-tap link draw: random exponential power profile, complex Gaussian gains.

    The decay rate is uniform in [0, 1] per draw and the profile sums to
    one, so the raw vector has unit expected power.  Returns (raw, unit)
    where unit is the raw draw scaled to exactly unit norm.
    """
    rate = rng.uniform(0.0, 1.0)
    profile = np.exp(-rate * np.arange(L))
    profile /= profile.sum()
    g = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    raw = g * np.sqrt(profile / 2.0)
    return raw, raw / np.linalg.norm(raw)


@dataclass
class ChannelState:
    """Unit-norm L-tap vectors for every link, fixed for one packet.

    sd: (K, L) source->destination; sr: (n_r, K, L) source->relay;
    rd: (n_r, K, L) relay->destination.
    """

    sd: np.ndarray
    sr: np.ndarray
    rd: np.ndarray

    @property
    def K(self) -> int:
        return self.sd.shape[0]

    @property
    def L(self) -> int:
        return self.sd.shape[1]

    @property
    def n_r(self) -> int:
        return self.sr.shape[0]

    def stacked(self, k: int) -> np.ndarray:
        """Destination-terminating links of user k: [sd_k, r1d_k, ..., r_nr d_k]."""
        if self.n_r == 0:
            return self.sd[k].copy()
        return np.concatenate([self.sd[k]] + [self.rd[j, k] for j in range(self.n_r)])

    def stacked_all(self) -> np.ndarray:
        """(K, (n_r+1)*L) matrix of stacked destination channels."""
        return np.vstack([self.stacked(k) for k in range(self.K)])


def generate_channels(K: int, L: int, n_r: int, rng: np.random.Generator) -> ChannelState:
    """Draw every link of the network; each link vector has exactly unit norm."""
    sd = np.empty((K, L), dtype=complex)
    sr = np.empty((n_r, K, L), dtype=complex)
    rd = np.empty((n_r, K, L), dtype=complex)
    for k in range(K):
        _, sd[k] = draw_link_taps(rng, L)
    for j in range(n_r):
        for k in range(K):
            _, sr[j, k] = draw_link_taps(rng, L)
    for j in range(n_r):
        for k in range(K):
            _, rd[j, k] = draw_link_taps(rng, L)
    return ChannelState(sd=sd, sr=sr, rd=rd)


def dump_channels_csv(state: ChannelState, path) -> None:
    """Write taps as CSV rows (user, link, tap, re, im) for test fixtures."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "link", "tap", "re", "im"])
        for k in range(state.K):
            for t in range(state.L):
                w.writerow([k, "sd", t, state.sd[k, t].real, state.sd[k, t].imag])
        for j in range(state.n_r):
            for k in range(state.K):
                for t in range(state.L):
                    w.writerow([k, f"sr{j + 1}", t, state.sr[j, k, t].real, state.sr[j, k, t].imag])
        for j in range(state.n_r):
            for k in range(state.K):
                for t in range(state.L):
                    w.writerow([k, f"r{j + 1}d", t, state.rd[j, k, t].real, state.rd[j, k, t].imag])


def load_channels_csv(path, K: int, L: int, n_r: int) -> ChannelState:
    """Inverse of dump_channels_csv."""
    sd = np.zeros((K, L), dtype=complex)
    sr = np.zeros((n_r, K, L), dtype=complex)
    rd = np.zeros((n_r, K, L), dtype=complex)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            k, t = int(row["user"]), int(row["tap"])
            val = float(row["re"]) + 1j * float(row["im"])
            link = row["link"]
            if link == "sd":
                sd[k, t] = val
            elif link.startswith("sr"):
                sr[int(link[2:]) - 1, k, t] = val
            else:
                rd[int(link[1:-1]) - 1, k, t] = val
    return ChannelState(sd=sd, sr=sr, rd=rd)
