"""User placement, path loss, and random channel generation.

Channels follow Rayleigh fading on top of distance-based path loss: LOS
between the BS and any user, NLOS between an uplink and a downlink user.
The BS loop (self-interference) channel is unit-variance CSCG; the
residual-SI attenuation is applied later, in the rate engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig

_MAX_RESAMPLES = 10**6


def path_loss_db(kind: str, d: float) -> float:
    """Distance-based path loss in dB.

    kind is "LOS" (BS <-> user) or "NLOS" (uplink user -> downlink user).
    """
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    if kind == "LOS":
        return 103.8 + 20.9 * math.log10(d)
    if kind == "NLOS":
        return 145.4 + 37.5 * math.log10(d)
    raise ValueError(f"unknown path-loss kind: {kind!r}")


def path_loss_gain(kind: str, d: float) -> float:
    """Linear power gain 10^(-PL/10)."""
    return 10.0 ** (-path_loss_db(kind, d) / 10.0)


@dataclass(frozen=True)
class UserLayout:
    """2-D positions of all users; the BS sits at the origin."""

    dl_positions: np.ndarray  # (K, 2) [m]
    ul_positions: np.ndarray  # (L, 2) [m]

    @property
    def bs_position(self) -> np.ndarray:
        return np.zeros(2)

    def dl_distances(self) -> np.ndarray:
        return np.linalg.norm(self.dl_positions, axis=1)

    def ul_distances(self) -> np.ndarray:
        return np.linalg.norm(self.ul_positions, axis=1)

    def cross_distances(self) -> np.ndarray:
        """(L, K) distances between each ULU and each DLU."""
        diff = self.ul_positions[:, None, :] - self.dl_positions[None, :, :]
        return np.linalg.norm(diff, axis=2)


@dataclass(frozen=True)
class ChannelSet:
    """One realization of all channels plus the derived path-loss gains."""

    h: np.ndarray        # (K, Ntx) complex, BS -> DLU k
    g: np.ndarray        # (L, Nrx) complex, ULU l -> BS
    g_hat: np.ndarray    # (L, K) complex, ULU l -> DLU k
    G_I: np.ndarray      # (Ntx, Nrx) complex loop channel, unit variance
    pl_dl: np.ndarray    # (K,) linear gains
    pl_ul: np.ndarray    # (L,) linear gains
    pl_cross: np.ndarray  # (L, K) linear gains

    @property
    def K(self) -> int:
        return self.h.shape[0]

    @property
    def L(self) -> int:
        return self.g.shape[0]

    @property
    def Ntx(self) -> int:
        return self.h.shape[1]

    @property
    def Nrx(self) -> int:
        return self.g.shape[1]


def _sample_disk(rng: np.random.Generator, n: int, radius: float,
                 min_radius: float) -> np.ndarray:
    """Uniform points on the disk, rejecting those closer than min_radius."""
    out = np.empty((n, 2))
    filled = 0
    attempts = 0
    while filled < n:
        if attempts > _MAX_RESAMPLES:
            raise RuntimeError("layout rejection sampling did not terminate")
        m = n - filled
        r = radius * np.sqrt(rng.random(m))
        phi = 2 * np.pi * rng.random(m)
        pts = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
        keep = pts[r >= min_radius]
        out[filled:filled + len(keep)] = keep
        filled += len(keep)
        attempts += m
    return out


def generate_layout(config: SystemConfig, rng: np.random.Generator) -> UserLayout:
    """Place K DLUs and L ULUs uniformly over the annulus around the BS."""
    dl = _sample_disk(rng, config.K, config.cell_radius, config.min_bs_distance)
    ul = _sample_disk(rng, config.L, config.cell_radius, config.min_bs_distance)
    return UserLayout(dl_positions=dl, ul_positions=ul)


def _cscg(rng: np.random.Generator, shape) -> np.ndarray:
    """Unit-variance circularly symmetric complex Gaussian entries."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def generate_channels(layout: UserLayout, config: SystemConfig,
                      rng: np.random.Generator) -> ChannelSet:
    """Draw one Rayleigh/path-loss channel realization for the layout."""
    if layout.dl_positions.shape[0] != config.K or layout.ul_positions.shape[0] != config.L:
        raise ValueError("layout user counts do not match config")
    pl_dl = np.array([path_loss_gain("LOS", d) for d in layout.dl_distances()])
    pl_ul = np.array([path_loss_gain("LOS", d) for d in layout.ul_distances()])
    dcross = layout.cross_distances()
    pl_cross = np.vectorize(lambda d: path_loss_gain("NLOS", d))(dcross) \
        if dcross.size else np.zeros((config.L, config.K))

    h = np.sqrt(pl_dl)[:, None] * _cscg(rng, (config.K, config.Ntx))
    g = np.sqrt(pl_ul)[:, None] * _cscg(rng, (config.L, config.Nrx))
    g_hat = np.sqrt(pl_cross) * _cscg(rng, (config.L, config.K))
    G_I = _cscg(rng, (config.Ntx, config.Nrx))
    return ChannelSet(h=h, g=g, g_hat=g_hat, G_I=G_I,
                      pl_dl=pl_dl, pl_ul=pl_ul, pl_cross=pl_cross)


def draw_scenario(config: SystemConfig,
                  seed_seq: np.random.SeedSequence | None = None
                  ) -> tuple[UserLayout, ChannelSet]:
    """Layout + channels as a pure function of (config, seed)."""
    if seed_seq is None:
        seed_seq = np.random.SeedSequence(config.seed)
    rng = np.random.default_rng(seed_seq)
    layout = generate_layout(config, rng)
    channels = generate_channels(layout, config, rng)
    return layout, channels
