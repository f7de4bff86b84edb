"""Network configuration, user pairing and reciprocal block-fading channels."""

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError


def coding_power(snr_db, K):
    """Second moment of the coarse lattice, ``10^(snr_db/10) / K``."""
    if K < 1:
        raise ValueError("K must be positive")
    return 10.0 ** (snr_db / 10.0) / K


@dataclass(frozen=True)
class SystemConfig:
    """Network dimensions, powers, fronthaul capacities and tolerances.

    Power limits left as ``None`` follow the SNR: every user may transmit
    ``K * p_ul`` (so ``b_k`` up to ``sqrt(K)``) and every RRH gets the same
    per-node limit. A fronthaul capacity of ``inf`` means uncompressed.
    """

    L: int
    K: int
    snr_db: float
    fronthaul: tuple
    uplink_power_limits: tuple = None
    downlink_power_limits: tuple = None
    eps: float = 1e-6
    max_outer_iters: int = 20
    outer_rtol: float = 1e-4
    rate_match_eps: float = 1e-3
    dl_restarts: int = 10
    dl_max_iter: int = 200
    infeasible_value: float = 1e9

    def __post_init__(self):
        if self.L < 1:
            raise ConfigError("L must be at least 1")
        if self.K < 2 or self.K % 2:
            raise ConfigError("K must be a positive even number")
        fh = tuple(float(c) for c in self.fronthaul)
        if len(fh) == 1 and self.L > 1:
            fh = fh * self.L
        if len(fh) != self.L:
            raise ConfigError(f"fronthaul needs {self.L} values, got {len(fh)}")
        if any(c < 0 or math.isnan(c) for c in fh):
            raise ConfigError("fronthaul capacities must be non-negative")
        object.__setattr__(self, "fronthaul", fh)
        for name, size in (("uplink_power_limits", self.K), ("downlink_power_limits", self.L)):
            val = getattr(self, name)
            if val is None:
                continue
            val = tuple(float(v) for v in val)
            if len(val) == 1 and size > 1:
                val = val * size
            if len(val) != size:
                raise ConfigError(f"{name} needs {size} values, got {len(val)}")
            if any(not v > 0 for v in val):
                raise ConfigError(f"{name} must be positive")
            object.__setattr__(self, name, val)
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if self.max_outer_iters < 1:
            raise ConfigError("max_outer_iters must be at least 1")

    @property
    def M(self):
        return self.K // 2

    @property
    def p_ul(self):
        return coding_power(self.snr_db, self.K)

    @property
    def capacities(self):
        return np.array(self.fronthaul, dtype=np.float64)

    @property
    def uplink_limits(self):
        if self.uplink_power_limits is None:
            return np.full(self.K, self.K * self.p_ul)
        return np.array(self.uplink_power_limits, dtype=np.float64)

    @property
    def downlink_limits(self):
        if self.downlink_power_limits is None:
            return np.full(self.L, self.K * self.p_ul)
        return np.array(self.downlink_power_limits, dtype=np.float64)

    def with_snr(self, snr_db):
        return replace(self, snr_db=float(snr_db))

    def with_fronthaul(self, capacity):
        return replace(self, fronthaul=(float(capacity),) * self.L)


def make_adjacent_pairing(M):
    """Pairing matrix grouping users ``2m`` and ``2m + 1`` (0-based) into pair ``m``."""
    if M < 1:
        raise ValueError("M must be at least 1")
    W = np.zeros((M, 2 * M), dtype=np.int64)
    for m in range(M):
        W[m, 2 * m] = 1
        W[m, 2 * m + 1] = 1
    check_pairing(W)
    return W


def check_pairing(W):
    """Raise ``ValueError`` unless ``W`` is a valid binary M x 2M pairing."""
    W = np.asarray(W)
    if W.ndim != 2 or W.shape[1] != 2 * W.shape[0]:
        raise ValueError(f"pairing matrix must be M x 2M, got {W.shape}")
    if not np.all((W == 0) | (W == 1)):
        raise ValueError("pairing matrix must be binary")
    if not np.all(W.sum(axis=0) == 1):
        raise ValueError("every user must belong to exactly one pair")
    if not np.all(W.sum(axis=1) == 2):
        raise ValueError("every pair must contain exactly two users")
    return W


def partner(W, k):
    """Index of the user paired with user ``k``."""
    m = int(np.flatnonzero(W[:, k])[0])
    return int(next(u for u in np.flatnonzero(W[m]) if u != k))


@dataclass(frozen=True)
class ChannelRealization:
    H_ul: np.ndarray
    seed: int
    index: int

    def __post_init__(self):
        H = np.array(self.H_ul, dtype=np.float64)
        if not np.all(np.isfinite(H)):
            raise ValueError("channel has non-finite entries")
        H.setflags(write=False)
        object.__setattr__(self, "H_ul", H)

    @property
    def H_dl(self):
        """Downlink channel: the transpose of the uplink one (reciprocity)."""
        return self.H_ul.T


def channel_rng(seed, index, *tags):
    """Generator keyed on ``(seed, index, *tags)``, independent of call order."""
    return np.random.default_rng([int(seed), int(index), *map(int, tags)])


def sample_channel(config, seed, index):
    """i.i.d. standard normal ``L x K`` uplink gains for realization ``index``."""
    H = channel_rng(seed, index).standard_normal((config.L, config.K))
    return ChannelRealization(H_ul=H, seed=int(seed), index=int(index))
