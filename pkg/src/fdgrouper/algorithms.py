"""Outer path-following loops.

Algorithm 1 improves beamformers and uplink powers under a fixed group
assignment and time split; Algorithm 2 optimizes the full tuple including
the relaxed assignment indicators and time shares.  Both start from a
maximin initializer that drives every per-user rate above its threshold,
and both terminate on a relative-improvement test of the exact sum rate.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channels import ChannelSet, UserLayout, generate_channels
from .config import PowerConstraintMode, SystemConfig
from .rates import (DesignPoint, check_feasibility, group_rates, user_rates,
                    weighted_sum_rate)
from .solver import SolverSettings
from .subproblems import Subproblem, SubproblemKind, build_subproblem

INIT_ITER_CAP = 30

# retry settings for a subproblem whose solution failed to improve the
# exact objective: heavier regularization, more iterations
_RETRY_SETTINGS = SolverSettings(static_regularization=1e-7,
                                 max_ipm_iters=300)


class AlgorithmKind(Enum):
    ALG1 = "alg1"
    ALG2 = "alg2"


class InfeasibleScenario(RuntimeError):
    """The rate thresholds are unattainable for this channel draw."""


@dataclass
class RunTrace:
    """Per-iteration record of one outer-loop run."""

    surrogate: list[float] = field(default_factory=list)   # nats
    exact: list[float] = field(default_factory=list)       # nats, kept point
    statuses: list[str] = field(default_factory=list)
    residuals: list[float] = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    initial_rate: float = 0.0
    converged: bool = False
    iterations: int = 0
    point: DesignPoint | None = None
    alpha_hard: np.ndarray | None = None
    beta_hard: np.ndarray | None = None
    rates_dl: np.ndarray | None = None   # (K, G) weighted rates, nats
    rates_ul: np.ndarray | None = None   # (L, G)

    @property
    def sum_rate(self) -> float:
        return self.exact[-1] if self.exact else self.initial_rate


def heuristic_seed(kind: AlgorithmKind, ch: ChannelSet,
                   cfg: SystemConfig) -> DesignPoint:
    """Matched-filter beams sharing the budget equally, full uplink power.

    Assignment starts at 1 (all users in every group) for Algorithm 1 and
    at 1/2 for Algorithm 2; time is split evenly.
    """
    K, L, G, Ntx = cfg.K, cfg.L, cfg.G, cfg.Ntx
    w = np.zeros((K, G, Ntx), dtype=complex)
    for k in range(K):
        hk = ch.h[k]
        wk = hk / np.linalg.norm(hk) * math.sqrt(cfg.P_bs / (max(K, 1) * G))
        for g in range(G):
            w[k, g] = wk
    p = np.full((L, G), math.sqrt(cfg.P_ul / G))
    frac = 0.5 if kind is AlgorithmKind.ALG2 else 1.0
    return DesignPoint(w=w, p=p,
                       alpha=np.full((K, G), frac),
                       beta=np.full((L, G), frac),
                       t=np.full(G, 1.0 / G))


def _has_thresholds(cfg: SystemConfig) -> bool:
    return (cfg.K > 0 and cfg.Rbar_dl > 0) or (cfg.L > 0 and cfg.Rbar_ul > 0)


def exact_level(point: DesignPoint, ch: ChannelSet, cfg: SystemConfig) -> float:
    """Worst exact rate-to-threshold ratio; >= 1 means all thresholds met."""
    wd, wu = user_rates(point, ch, cfg)
    vals = []
    if cfg.Rbar_dl > 0:
        vals.extend(wd / cfg.Rbar_dl)
    if cfg.Rbar_ul > 0:
        vals.extend(wu / cfg.Rbar_ul)
    return float(min(vals)) if vals else math.inf


def initialize(kind: AlgorithmKind, ch: ChannelSet, cfg: SystemConfig,
               seed_point: DesignPoint | None = None,
               max_init_iters: int = INIT_ITER_CAP) -> DesignPoint:
    """Find a starting point whose per-user rates meet every threshold.

    Repeatedly maximizes the worst rate-to-threshold ratio until it
    reaches 1; raises InfeasibleScenario if the cap is hit first.

    The maximin rounds keep the assignment and time shares pinned at the
    seed values even for the joint algorithm: the joint level surrogate
    is a tangent of a square at sqrt(current rate), which is identically
    zero for a user whose current rate is zero and therefore cannot lift
    rates off the floor.  The fixed-assignment surrogate has no such
    degeneracy.  A final joint maximin round then polishes the point and
    is kept only if it preserves feasibility.
    """
    point = seed_point if seed_point is not None else heuristic_seed(kind, ch, cfg)
    if not _has_thresholds(cfg):
        return point
    level = exact_level(point, ch, cfg)
    rounds = 0
    while level < 1.0:
        if rounds >= max_init_iters:
            raise InfeasibleScenario(
                f"thresholds unattained after {max_init_iters} maximin "
                f"rounds (best level {level:.4f})")
        sub = build_subproblem(SubproblemKind.ALG1_INIT, point, ch, cfg)
        res = sub.solve()
        if res.x is None:
            raise InfeasibleScenario(
                f"initializer subproblem failed: {res.status.value}")
        point = sub.extract_point(res.x)
        level = exact_level(point, ch, cfg)
        rounds += 1
    if kind is AlgorithmKind.ALG2:
        sub = build_subproblem(SubproblemKind.ALG2_INIT, point, ch, cfg)
        res = sub.solve()
        if res.x is not None:
            polished = sub.extract_point(res.x)
            if exact_level(polished, ch, cfg) >= 1.0:
                point = polished
    return point


def _blend(a: DesignPoint, b: DesignPoint, lam: float) -> DesignPoint:
    """Convex combination (1-lam)*a + lam*b of two design points."""
    out = a.copy()
    out.w = (1 - lam) * a.w + lam * b.w
    out.p = (1 - lam) * a.p + lam * b.p
    out.alpha = (1 - lam) * a.alpha + lam * b.alpha
    out.beta = (1 - lam) * a.beta + lam * b.beta
    out.t = (1 - lam) * a.t + lam * b.t
    return out


def _ray_polish(point: DesignPoint, ch: ChannelSet, cfg: SystemConfig,
                rounds: int = 2, grid: int = 8) -> DesignPoint:
    """Exact-objective ascent along the two feasible power-scaling rays.

    The uplink minorant's quadratic loop-interference term is a global
    bound, so it badly over-penalizes raising downlink power when the
    MMSE receiver actually absorbs the extra interference (the loop
    covariance has rank at most K beams per group).  The convex step can
    therefore stall with most of the power budget unused.  This polish
    scales all beams (then all uplink powers) toward their budget limits
    and keeps the best scaling measured on the exact rates, subject to
    the exact per-user thresholds, which preserves the ascent property.
    """
    tw = cfg.power_constraint_mode is PowerConstraintMode.TIME_WEIGHTED

    def w_headroom(pt: DesignPoint) -> float:
        per_g = np.sum(np.abs(pt.w) ** 2, axis=(0, 2))
        used = float(np.dot(pt.t, per_g) if tw else per_g.sum())
        return math.sqrt(cfg.P_bs / used) if used > 0 else 1.0

    def p_headroom(pt: DesignPoint) -> float:
        per_lg = pt.p ** 2
        used = (per_lg @ pt.t) if tw else per_lg.sum(axis=1)
        used = used[used > 0]
        return math.sqrt(cfg.P_ul / used.max()) if used.size else 1.0

    best = point
    r_best = weighted_sum_rate(point, ch, cfg)
    for _ in range(rounds):
        moved = False
        for which in ("w", "p"):
            base = best
            cap = w_headroom(base) if which == "w" else p_headroom(base)
            if cap <= 1.0 + 1e-12:
                continue
            for c in np.geomspace(1.0, cap, grid)[1:]:
                cand = base.copy()
                if which == "w":
                    cand.w = base.w * c
                else:
                    cand.p = base.p * c
                if exact_level(cand, ch, cfg) < 1.0 - 1e-9:
                    continue
                r = weighted_sum_rate(cand, ch, cfg)
                if r > r_best:
                    best, r_best, moved = cand, r, True
        if not moved:
            break
    return best


def _run_loop(main_kind: SubproblemKind, point: DesignPoint, ch: ChannelSet,
              cfg: SystemConfig) -> RunTrace:
    """Shared outer loop: solve, extract, accept improvements, terminate
    when the relative improvement of the exact sum rate drops to eps_err.

    Subproblem solutions that fail to improve the exact objective are
    retried with heavier solver settings and, failing that, damped halfway
    toward the previous iterate once; if nothing improves, the loop is at
    its numerical fixed point and terminates keeping the previous point.
    """
    trace = RunTrace()
    point = _ray_polish(point, ch, cfg)
    trace.initial_rate = weighted_sum_rate(point, ch, cfg)
    r_prev = trace.initial_rate
    small_gains = 0

    for _ in range(cfg.max_iters):
        t0 = time.perf_counter()
        sub = build_subproblem(main_kind, point, ch, cfg)
        res = sub.solve()
        if res.x is None:
            trace.statuses.append(res.status.value)
            trace.surrogate.append(math.nan)
            trace.exact.append(r_prev)
            trace.residuals.append(math.nan)
            trace.wall_ms.append(1e3 * (time.perf_counter() - t0))
            trace.iterations += 1
            break

        cand = sub.extract_point(res.x)
        r_new = weighted_sum_rate(cand, ch, cfg)
        status = res.status

        if r_new < r_prev and not res.ok:
            retry = sub.solve(_RETRY_SETTINGS)
            if retry.x is not None:
                cand2 = sub.extract_point(retry.x)
                r2 = weighted_sum_rate(cand2, ch, cfg)
                if r2 > r_new:
                    cand, r_new, status = cand2, r2, retry.status
        if r_new < r_prev:
            damped = _blend(point, cand, 0.5)
            r_damp = weighted_sum_rate(damped, ch, cfg)
            if r_damp > r_new:
                cand, r_new = damped, r_damp

        improved = r_new > r_prev
        kept = cand if improved else point
        r_kept = r_new if improved else r_prev

        polished = _ray_polish(kept, ch, cfg)
        r_pol = weighted_sum_rate(polished, ch, cfg)
        if r_pol > r_kept:
            kept, r_kept = polished, r_pol

        trace.statuses.append(status.value)
        trace.surrogate.append(sub.minorant_objective(kept))
        trace.exact.append(r_kept)
        trace.residuals.append(check_feasibility(kept, ch, cfg).worst)
        trace.wall_ms.append(1e3 * (time.perf_counter() - t0))
        trace.iterations += 1

        gain = (r_kept - r_prev) / max(abs(r_prev), 1e-12)
        point, r_prev = kept, r_kept
        # two consecutive below-threshold improvements are required, so a
        # single imprecise subproblem solve cannot fake convergence
        small_gains = small_gains + 1 if gain <= cfg.eps_err else 0
        if small_gains >= 2:
            trace.converged = True
            break

    trace.point = point
    trace.alpha_hard, trace.beta_hard = extract_grouping(point, cfg.grouping_eps)
    rd, ru = group_rates(point, ch, cfg)
    trace.rates_dl = point.t[None, :] * point.alpha * rd
    trace.rates_ul = point.t[None, :] * point.beta * ru
    return trace


def run_algorithm1(ch: ChannelSet, cfg: SystemConfig,
                   fixed_alpha_beta_t: tuple[np.ndarray, np.ndarray,
                                             np.ndarray] | None = None
                   ) -> RunTrace:
    """Beamformer / uplink-power optimization at a fixed grouping.

    By default every user participates in every group (alpha = beta = 1)
    and time is split evenly; pass fixed (alpha, beta, t) to evaluate a
    specific grouping.
    """
    seed = heuristic_seed(AlgorithmKind.ALG1, ch, cfg)
    if fixed_alpha_beta_t is not None:
        alpha, beta, t = fixed_alpha_beta_t
        seed.alpha = np.asarray(alpha, dtype=float).reshape(cfg.K, cfg.G)
        seed.beta = np.asarray(beta, dtype=float).reshape(cfg.L, cfg.G)
        seed.t = np.asarray(t, dtype=float).reshape(cfg.G)
    point = initialize(AlgorithmKind.ALG1, ch, cfg, seed_point=seed)
    return _run_loop(SubproblemKind.ALG1_MAIN, point, ch, cfg)


def run_algorithm2(ch: ChannelSet, cfg: SystemConfig,
                   warm_start: DesignPoint | None = None) -> RunTrace:
    """Joint optimization of beams, powers, grouping, and time shares.

    By default the joint loop starts from a converged fixed-grouping run
    (every such point is feasible for the joint problem, so the joint
    objective can only move up from there).  Pass ``warm_start`` to begin
    from a specific threshold-feasible point instead.
    """
    if warm_start is not None:
        point = warm_start.copy()
    else:
        point = run_algorithm1(ch, cfg).point
    trace = _run_loop(SubproblemKind.ALG2_MAIN, point, ch, cfg)
    return trace


def extract_grouping(point: DesignPoint, eps: float
                     ) -> tuple[np.ndarray, np.ndarray]:
    """Harden the relaxed assignment: a user belongs to a group iff its
    beam norm (downlink) or power magnitude (uplink) strictly exceeds eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    alpha = (np.linalg.norm(point.w, axis=2) > eps).astype(float)
    beta = (np.abs(point.p) > eps).astype(float)
    return alpha, beta


def _restrict(ch: ChannelSet, K: int, L: int) -> ChannelSet:
    """Channel set with only the first K downlink / L uplink users."""
    return ChannelSet(h=ch.h[:K], g=ch.g[:L], g_hat=ch.g_hat[:L, :K],
                      G_I=ch.G_I, pl_dl=ch.pl_dl[:K], pl_ul=ch.pl_ul[:L],
                      pl_cross=ch.pl_cross[:L, :K])


def hd_baseline(layout: UserLayout, cfg: SystemConfig,
                seed_seq: np.random.SeedSequence) -> float:
    """Half-duplex reference sum rate in nats.

    The BS spends all Ntx + Nrx antennas on one direction at a time, so
    downlink-only and uplink-only problems are solved independently (each
    with Algorithm 1, no grouping) and their rates averaged.  Because a
    user is served during half the resource block, its delivered rate is
    half its in-slot rate, so the per-user thresholds are doubled inside
    the sub-runs to deliver the same per-user quality of service.  Fading
    is redrawn for the larger arrays from a sub-seed derived from the
    scenario seed; path losses (user positions) are shared with the
    full-duplex run.
    """
    n_all = cfg.Ntx + cfg.Nrx
    sub_seq = np.random.SeedSequence(entropy=seed_seq.entropy,
                                     spawn_key=tuple(seed_seq.spawn_key) + (97,))
    rng = np.random.default_rng(sub_seq)
    cfg_hd = cfg.with_overrides(Ntx=n_all, Nrx=n_all, G=1)
    ch_hd = generate_channels(layout, cfg_hd, rng)

    total = 0.0
    if cfg.K > 0:
        cfg_dl = cfg_hd.with_overrides(L=0, Rbar_dl=2.0 * cfg.Rbar_dl)
        trace = run_algorithm1(_restrict(ch_hd, cfg.K, 0), cfg_dl)
        total += trace.sum_rate
    if cfg.L > 0:
        cfg_ul = cfg_hd.with_overrides(K=0, Rbar_ul=2.0 * cfg.Rbar_ul)
        trace = run_algorithm1(_restrict(ch_hd, 0, cfg.L), cfg_ul)
        total += trace.sum_rate
    return 0.5 * total
