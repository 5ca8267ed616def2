"""Scenario parameters for the cooperative DS-CDMA network."""

from dataclasses import dataclass, replace, fields


@dataclass(frozen=True)
class NetworkConfig:
    """All scenario parameters for one simulated network.

    Attributes:
        K: number of users.
        N: processing gain (chips per symbol).
        L: multipath taps per link.
        n_r: number of decode-and-forward relays.
        P: symbols per packet.
        G: group size for the joint power allocation.
        P_G: group power budget (sum of squared amplitudes over the group).
        sigma2: complex noise variance per received chip.
        P_Ak: nominal per-user power (SNR = P_Ak / sigma2).
        N_tr: training-preamble length in symbols.
        alpha: RLS forgetting factor.
    """

    K: int = 8
    N: int = 16
    L: int = 5
    n_r: int = 2
    P: int = 1500
    G: int = 3
    P_G: float | None = None
    sigma2: float = 0.1
    P_Ak: float = 1.0
    N_tr: int = 200
    alpha: float = 0.998
    # link-budget advantage of the source->relay hop over the direct hop
    # (fixed relays sit at favorable positions); not part of any scheme's
    # controlled power budget and identical for all cooperative schemes
    relay_hop_gain_db: float = 10.0

    def __post_init__(self):
        if self.K < 1 or self.N < 1 or self.L < 1:
            raise ValueError(f"K, N, L must be >= 1 (got K={self.K}, N={self.N}, L={self.L})")
        if self.n_r < 0:
            raise ValueError(f"n_r must be >= 0 (got {self.n_r})")
        if not 1 <= self.G <= self.K:
            raise ValueError(f"G must satisfy 1 <= G <= K (got G={self.G}, K={self.K})")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must be in (0, 1] (got {self.alpha})")
        if self.N_tr > self.P:
            raise ValueError(f"N_tr must not exceed P (got N_tr={self.N_tr}, P={self.P})")
        if self.sigma2 < 0 or self.P_Ak <= 0:
            raise ValueError("sigma2 must be >= 0 and P_Ak > 0")
        if self.P_G is None:
            # default budget: the group pools what its members would get individually
            object.__setattr__(self, "P_G", self.G * self.P_Ak)
        if self.P_G <= 0:
            raise ValueError(f"P_G must be > 0 (got {self.P_G})")

    @property
    def M(self) -> int:
        """Chips per observation window: N + L - 1."""
        return self.N + self.L - 1

    @property
    def n_p(self) -> int:
        """Transmission phases (hops): source phase plus one per relay."""
        return self.n_r + 1

    @property
    def D(self) -> int:
        """Stacked received-vector dimension at the destination."""
        return self.n_p * self.M

    @property
    def P_T(self) -> float:
        """Total network power budget."""
        return self.P_G + (self.K - self.G) * self.P_Ak

    @property
    def snr_db(self) -> float:
        import math

        return 10.0 * math.log10(self.P_Ak / self.sigma2)

    def with_snr_db(self, snr_db: float) -> "NetworkConfig":
        """Return a copy whose noise variance realizes the given SNR."""
        return replace(self, sigma2=self.P_Ak / (10.0 ** (snr_db / 10.0)))

    def replace(self, **kw) -> "NetworkConfig":
        # P_G tracks G unless explicitly pinned by the caller
        if "G" in kw and "P_G" not in kw and self.P_G == self.G * self.P_Ak:
            kw["P_G"] = None
        return replace(self, **kw)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
