"""Scenario configuration and unit conversions.

All powers are stored in Watts and all rate thresholds in nats per channel
use. Values quoted in dBm / bps/Hz (the usual units in the wireless
literature) are converted once, at the boundary, by the helpers below.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

LN2 = math.log(2.0)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def bps_to_nats(bps_per_hz: float) -> float:
    """Spectral efficiency in bps/Hz -> nats per channel use."""
    return bps_per_hz * LN2


def nats_to_bps(nats: float) -> float:
    return nats / LN2


class PowerConstraintMode(str, Enum):
    """How transmit power budgets are enforced.

    TIME_WEIGHTED: the budget caps the time-weighted sum of powers over
    groups (sum_g t_g * power_g <= P), so a group using a short slot may
    transmit harder.  RELAXED: the budget caps the plain sum over groups,
    which generally leaves power on the table.
    """

    TIME_WEIGHTED = "time_weighted"
    RELAXED = "relaxed"


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters for one simulation setup.

    Defaults correspond to the small-cell setup used throughout the
    experiments: a 100 m cell, 4x4 antenna BS, 26 dBm BS budget, 10 dBm
    per uplink user, -75 dB residual self-interference and 1 bps/Hz
    per-user rate thresholds.
    """

    K: int = 4                      # number of downlink users
    L: int = 4                      # number of uplink users
    G: int = 2                      # number of groups / time slots
    Ntx: int = 4                    # BS transmit antennas
    Nrx: int = 4                    # BS receive antennas
    P_bs: float = dbm_to_watt(26.0)     # BS power budget [W]
    P_ul: float = dbm_to_watt(10.0)     # per-ULU power budget [W]
    rho: float = db_to_linear(-75.0)    # residual SI attenuation, linear
    sigma_dl: float = dbm_to_watt(-174.0)   # DLU noise power [W]
    sigma_ul: float = dbm_to_watt(-174.0)   # BS receive noise power [W]
    Rbar_dl: float = bps_to_nats(1.0)   # per-DLU rate threshold [nats]
    Rbar_ul: float = bps_to_nats(1.0)   # per-ULU rate threshold [nats]
    cell_radius: float = 100.0      # [m]
    min_bs_distance: float = 10.0   # [m]
    eps_group: float = 0.0          # grouping threshold; 0 -> auto scale
    eps_err: float = 1e-3           # relative convergence tolerance
    omega: float = 10.0             # grouping-forcing constant; 0 disables
    power_constraint_mode: PowerConstraintMode = PowerConstraintMode.TIME_WEIGHTED
    max_iters: int = 100            # SCA iteration cap
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 and self.L < 1:
            raise ValueError("need at least one user")
        if min(self.K, self.L) < 0 or self.G < 1:
            raise ValueError("K, L must be >= 0 and G >= 1")
        if self.Ntx < 1 or self.Nrx < 1:
            raise ValueError("antenna counts must be >= 1")
        for name in ("P_bs", "P_ul", "sigma_dl", "sigma_ul",
                     "cell_radius", "min_bs_distance", "eps_err"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.Rbar_dl < 0 or self.Rbar_ul < 0:
            raise ValueError("rate thresholds must be nonnegative")
        if self.eps_group < 0 or self.omega < 0:
            raise ValueError("eps_group and omega must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @property
    def grouping_eps(self) -> float:
        """Threshold for hardening the beam/power based group assignment."""
        if self.eps_group > 0:
            return self.eps_group
        return 1e-3 * math.sqrt(self.P_bs / max(self.K, 1))

    def with_overrides(self, **kwargs) -> "SystemConfig":
        return replace(self, **kwargs)


_FIELD_NAMES = {f.name for f in fields(SystemConfig)}


def load_config(path: str | Path, **overrides) -> SystemConfig:
    """Read a SystemConfig from a TOML or JSON file.

    The file holds a flat table whose keys mirror the SystemConfig field
    names.  Convenience keys with explicit units are also accepted:
    ``P_bs_dbm``, ``P_ul_dbm``, ``sigma_dl_dbm``, ``sigma_ul_dbm``,
    ``rho_db``, ``Rbar_dl_bps``, ``Rbar_ul_bps``, ``Rbar_bps``.
    Keyword overrides win over file contents.
    """
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        raw = json.loads(text)
    else:
        try:
            import tomllib
        except ModuleNotFoundError:      # Python < 3.11
            import tomli as tomllib

        raw = tomllib.loads(text)
    kwargs = {}
    for key, value in raw.items():
        if key == "P_bs_dbm":
            kwargs["P_bs"] = dbm_to_watt(value)
        elif key == "P_ul_dbm":
            kwargs["P_ul"] = dbm_to_watt(value)
        elif key == "sigma_dl_dbm":
            kwargs["sigma_dl"] = dbm_to_watt(value)
        elif key == "sigma_ul_dbm":
            kwargs["sigma_ul"] = dbm_to_watt(value)
        elif key == "rho_db":
            kwargs["rho"] = db_to_linear(value)
        elif key == "Rbar_dl_bps":
            kwargs["Rbar_dl"] = bps_to_nats(value)
        elif key == "Rbar_ul_bps":
            kwargs["Rbar_ul"] = bps_to_nats(value)
        elif key == "Rbar_bps":
            kwargs["Rbar_dl"] = bps_to_nats(value)
            kwargs["Rbar_ul"] = bps_to_nats(value)
        elif key == "power_constraint_mode":
            kwargs[key] = PowerConstraintMode(value)
        elif key in _FIELD_NAMES:
            kwargs[key] = value
        else:
            raise KeyError(f"unknown config key: {key}")
    kwargs.update(overrides)
    return SystemConfig(**kwargs)
