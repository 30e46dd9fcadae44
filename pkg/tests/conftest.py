"""Shared fixtures: small deterministic scenarios that keep tests fast."""

import numpy as np
import pytest

from fdgrouper.channels import draw_scenario
from fdgrouper.config import SystemConfig, bps_to_nats
from fdgrouper.rates import DesignPoint


@pytest.fixture
def small_cfg() -> SystemConfig:
    """2 users each way, 2 antennas, 2 groups: smallest interesting setup."""
    return SystemConfig(K=2, L=2, G=2, Ntx=2, Nrx=2, seed=3,
                        Rbar_dl=bps_to_nats(0.5), Rbar_ul=bps_to_nats(0.5))


@pytest.fixture
def small_scenario(small_cfg):
    layout, ch = draw_scenario(small_cfg)
    return layout, ch, small_cfg


def random_point(cfg: SystemConfig, rng: np.random.Generator,
                 power_scale: float = 1.0) -> DesignPoint:
    """A random feasible-magnitude design point for oracle tests."""
    K, L, G, Ntx = cfg.K, cfg.L, cfg.G, cfg.Ntx
    w = (rng.standard_normal((K, G, Ntx)) + 1j * rng.standard_normal((K, G, Ntx)))
    if K:
        w *= np.sqrt(power_scale * cfg.P_bs / max(1.0, np.sum(np.abs(w) ** 2)))
    p = rng.random((L, G)) * np.sqrt(power_scale * cfg.P_ul / max(G, 1))
    t = rng.random(G) + 0.1
    t = t / t.sum()
    return DesignPoint(w=w, p=p,
                       alpha=rng.random((K, G)),
                       beta=rng.random((L, G)),
                       t=t)
