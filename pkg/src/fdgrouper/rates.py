"""Exact SINR, rate, and feasibility evaluation.

This module is the ground truth that every convex surrogate is measured
against: downlink SINR with inter-user and co-channel interference,
uplink MMSE-SIC SINR with residual self-interference, the time-weighted
sum rate, and residual checks for all original constraints.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .channels import ChannelSet
from .config import PowerConstraintMode, SystemConfig


@dataclass
class DesignPoint:
    """One full assignment of the design variables.

    Beamformers are indexed (k, g), uplink amplitudes (l, g).  alpha/beta
    are the (relaxed) group-assignment indicators and t the per-group time
    fractions.  phi carries the interference-plus-noise surrogate used by
    the convex subproblems; aux holds any extra subproblem variables.
    """

    w: np.ndarray              # (K, G, Ntx) complex
    p: np.ndarray              # (L, G) >= 0
    alpha: np.ndarray          # (K, G) in [0, 1]
    beta: np.ndarray           # (L, G) in [0, 1]
    t: np.ndarray              # (G,) >= 0, sum <= 1
    phi: np.ndarray | None = None   # (K, G) > 0
    aux: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.w.shape[0]

    @property
    def L(self) -> int:
        return self.p.shape[0]

    @property
    def G(self) -> int:
        return self.t.shape[0]

    def copy(self) -> "DesignPoint":
        return replace(
            self,
            w=self.w.copy(),
            p=self.p.copy(),
            alpha=self.alpha.copy(),
            beta=self.beta.copy(),
            t=self.t.copy(),
            phi=None if self.phi is None else self.phi.copy(),
            aux={key: np.array(val, copy=True) for key, val in self.aux.items()},
        )


def zero_point(K: int, L: int, G: int, Ntx: int) -> DesignPoint:
    return DesignPoint(
        w=np.zeros((K, G, Ntx), dtype=complex),
        p=np.zeros((L, G)),
        alpha=np.ones((K, G)),
        beta=np.ones((L, G)),
        t=np.full(G, 1.0 / G),
    )


def dl_interference(k: int, g: int, point: DesignPoint, ch: ChannelSet,
                    sigma: float) -> float:
    """Inter-user plus co-channel interference plus noise at DLU k, group g."""
    acc = sigma
    hk = ch.h[k]
    for i in range(point.K):
        if i != k:
            acc += abs(np.vdot(hk, point.w[i, g])) ** 2
    for ell in range(point.L):
        acc += point.p[ell, g] ** 2 * abs(ch.g_hat[ell, k]) ** 2
    return acc


def dl_sinr(k: int, g: int, point: DesignPoint, ch: ChannelSet,
            cfg: SystemConfig) -> float:
    """Downlink SINR of user k in group g."""
    sig = abs(np.vdot(ch.h[k], point.w[k, g])) ** 2
    return sig / dl_interference(k, g, point, ch, cfg.sigma_dl)


def ul_covariance(ell: int, g: int, point: DesignPoint, ch: ChannelSet,
                  cfg: SystemConfig) -> np.ndarray:
    """Interference-plus-noise covariance seen when decoding ULU ell.

    SIC in ascending user index: users j > ell are still undecoded and
    interfere; the residual self-interference of all downlink beams is
    attenuated by rho.
    """
    Nrx = ch.Nrx
    cov = cfg.sigma_ul * np.eye(Nrx, dtype=complex)
    for j in range(ell + 1, point.L):
        gj = ch.g[j]
        cov += point.p[j, g] ** 2 * np.outer(gj, gj.conj())
    if cfg.rho > 0:
        for k in range(point.K):
            v = ch.G_I.conj().T @ point.w[k, g]
            cov += cfg.rho * np.outer(v, v.conj())
    return cov


def ul_sinr_mmse_sic(ell: int, g: int, point: DesignPoint, ch: ChannelSet,
                     cfg: SystemConfig) -> float:
    """Uplink MMSE-SIC SINR of user ell in group g (Cholesky solve)."""
    if point.p[ell, g] == 0.0:
        return 0.0
    cov = ul_covariance(ell, g, point, ch, cfg)
    gl = ch.g[ell]
    sol = cho_solve(cho_factor(cov), gl)
    return float(point.p[ell, g] ** 2 * np.real(gl.conj() @ sol))


def group_rates(point: DesignPoint, ch: ChannelSet, cfg: SystemConfig
                ) -> tuple[np.ndarray, np.ndarray]:
    """Per-group log-rates ln(1+SINR), shapes (K, G) and (L, G), in nats."""
    rd = np.zeros((point.K, point.G))
    ru = np.zeros((point.L, point.G))
    for g in range(point.G):
        for k in range(point.K):
            rd[k, g] = np.log1p(dl_sinr(k, g, point, ch, cfg))
        for ell in range(point.L):
            ru[ell, g] = np.log1p(ul_sinr_mmse_sic(ell, g, point, ch, cfg))
    return rd, ru


def user_rates(point: DesignPoint, ch: ChannelSet, cfg: SystemConfig
               ) -> tuple[np.ndarray, np.ndarray]:
    """Time-weighted per-user rates summed over groups, in nats."""
    rd, ru = group_rates(point, ch, cfg)
    wd = (point.t * point.alpha * rd).sum(axis=1)
    wu = (point.t * point.beta * ru).sum(axis=1)
    return wd, wu


def weighted_sum_rate(point: DesignPoint, ch: ChannelSet,
                      cfg: SystemConfig) -> float:
    """Objective value sum_k R_k + sum_l R_l in nats."""
    wd, wu = user_rates(point, ch, cfg)
    return float(wd.sum() + wu.sum())


@dataclass(frozen=True)
class FeasibilityReport:
    """Signed residuals for every original constraint; <= 0 means satisfied."""

    rate_dl: np.ndarray       # (K,) Rbar - R_k
    rate_ul: np.ndarray       # (L,)
    power_bs: float           # used - budget
    power_ul: np.ndarray      # (L,)
    p_nonneg: float           # max(-p)
    alpha_box: float
    beta_box: float
    time_simplex: float
    worst: float
    feasible: bool

    def summary(self) -> str:
        return (f"worst={self.worst:.3e} feasible={self.feasible} "
                f"(rate_dl={self.rate_dl.max(initial=-np.inf):.3e}, "
                f"rate_ul={self.rate_ul.max(initial=-np.inf):.3e}, "
                f"P_bs={self.power_bs:.3e})")


def check_feasibility(point: DesignPoint, ch: ChannelSet, cfg: SystemConfig,
                      tol: float = 1e-6) -> FeasibilityReport:
    """Evaluate all original constraints at the point.

    Residuals are normalized by each constraint's natural scale so the
    single tolerance is meaningful across power and rate constraints.
    """
    wd, wu = user_rates(point, ch, cfg)
    rate_dl = (cfg.Rbar_dl - wd) / max(cfg.Rbar_dl, 1.0)
    rate_ul = (cfg.Rbar_ul - wu) / max(cfg.Rbar_ul, 1.0)

    w_pow = np.sum(np.abs(point.w) ** 2, axis=2)   # (K, G)
    p_pow = point.p ** 2                           # (L, G)
    if cfg.power_constraint_mode is PowerConstraintMode.TIME_WEIGHTED:
        used_bs = float((point.t * w_pow).sum())
        used_ul = (point.t * p_pow).sum(axis=1)
    else:
        used_bs = float(w_pow.sum())
        used_ul = p_pow.sum(axis=1)
    power_bs = (used_bs - cfg.P_bs) / cfg.P_bs
    power_ul = (used_ul - cfg.P_ul) / cfg.P_ul

    p_nonneg = float((-point.p).max(initial=-np.inf))
    alpha_box = float(np.max(np.abs(point.alpha - 0.5), initial=0.0) - 0.5)
    beta_box = float(np.max(np.abs(point.beta - 0.5), initial=0.0) - 0.5)
    time_simplex = max(float(point.t.sum() - 1.0), float((-point.t).max()))

    worst = max(
        float(rate_dl.max(initial=-np.inf)),
        float(rate_ul.max(initial=-np.inf)),
        power_bs,
        float(power_ul.max(initial=-np.inf)),
        p_nonneg, alpha_box, beta_box, time_simplex,
    )
    return FeasibilityReport(
        rate_dl=rate_dl, rate_ul=rate_ul, power_bs=power_bs,
        power_ul=power_ul, p_nonneg=p_nonneg, alpha_box=alpha_box,
        beta_box=beta_box, time_simplex=time_simplex,
        worst=worst, feasible=worst <= tol,
    )
