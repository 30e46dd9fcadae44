"""Joint beamforming, power, and user-grouping optimization for a
full-duplex multiuser base station, with a self-contained SOCP
interior-point solver and Monte-Carlo experiment drivers."""

from .config import PowerConstraintMode, SystemConfig, load_config

__all__ = ["SystemConfig", "PowerConstraintMode", "load_config"]
__version__ = "0.1.0"
