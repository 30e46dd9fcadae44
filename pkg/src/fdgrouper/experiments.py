"""Monte-Carlo experiment drivers with CSV output.

Each scenario sweeps one knob (or none), draws an independent layout and
channel realization per (grid point, trial) from deterministic seed
arithmetic, runs the requested methods on the same draw (paired
comparisons), and writes a fixed-schema CSV in bps/Hz.  Infeasible draws
are counted and excluded from the means.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .algorithms import (InfeasibleScenario, RunTrace, hd_baseline,
                         run_algorithm1, run_algorithm2)
from .channels import draw_scenario
from .config import SystemConfig, bps_to_nats, db_to_linear, nats_to_bps


class Method(str, Enum):
    ALG1 = "alg1"
    ALG2 = "alg2"
    FD_G1 = "fd_g1"    # no grouping: single group, Algorithm 1
    HD = "hd"          # half-duplex reference


class ScenarioName(str, Enum):
    CONVERGENCE = "convergence"
    SWEEP_RHO = "sweep-rho"
    SWEEP_RBAR = "sweep-rbar"
    SWEEP_USERS = "sweep-users"
    GROUPING_TABLE = "grouping-table"


_DEFAULT_GRIDS: dict[ScenarioName, list[float]] = {
    ScenarioName.CONVERGENCE: [0.0],
    ScenarioName.SWEEP_RHO: [-75.0, -65.0, -55.0, -45.0, -35.0],  # dB
    ScenarioName.SWEEP_RBAR: [0.5, 1.0, 2.0],                     # bps/Hz
    ScenarioName.SWEEP_USERS: [2.0, 4.0, 6.0],                    # K = L
    ScenarioName.GROUPING_TABLE: [0.0],
}

_DEFAULT_METHODS: dict[ScenarioName, tuple[Method, ...]] = {
    ScenarioName.CONVERGENCE: (Method.ALG1, Method.ALG2),
    ScenarioName.SWEEP_RHO: (Method.ALG1, Method.ALG2, Method.FD_G1, Method.HD),
    ScenarioName.SWEEP_RBAR: (Method.ALG1, Method.ALG2),
    ScenarioName.SWEEP_USERS: (Method.ALG1, Method.ALG2, Method.FD_G1, Method.HD),
    ScenarioName.GROUPING_TABLE: (Method.ALG2, Method.FD_G1),
}

_GRID_PARAM: dict[ScenarioName, str] = {
    ScenarioName.CONVERGENCE: "none",
    ScenarioName.SWEEP_RHO: "rho_db",
    ScenarioName.SWEEP_RBAR: "rbar_bps",
    ScenarioName.SWEEP_USERS: "users",
    ScenarioName.GROUPING_TABLE: "none",
}


@dataclass(frozen=True)
class Scenario:
    name: ScenarioName
    trials: int = 20
    grid: tuple[float, ...] = ()
    methods: tuple[Method, ...] = ()
    out: Path = Path("results.csv")

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.grid:
            object.__setattr__(self, "grid",
                               tuple(_DEFAULT_GRIDS[self.name]))
        if not self.methods:
            object.__setattr__(self, "methods",
                               tuple(_DEFAULT_METHODS[self.name]))


def apply_grid_value(cfg: SystemConfig, name: ScenarioName,
                     value: float) -> SystemConfig:
    if name is ScenarioName.SWEEP_RHO:
        return cfg.with_overrides(rho=db_to_linear(value))
    if name is ScenarioName.SWEEP_RBAR:
        return cfg.with_overrides(Rbar_dl=bps_to_nats(value),
                                  Rbar_ul=bps_to_nats(value))
    if name is ScenarioName.SWEEP_USERS:
        n = int(value)
        return cfg.with_overrides(K=n, L=n)
    return cfg


@dataclass
class TrialResult:
    grid_idx: int
    grid_value: float
    trial: int
    infeasible: bool = False
    rates: dict[str, float] = field(default_factory=dict)   # method -> nats
    traces: dict[str, RunTrace] = field(default_factory=dict)


def run_trial(scenario: Scenario, cfg: SystemConfig, grid_idx: int,
              trial: int, keep_traces: bool = False) -> TrialResult:
    """All requested methods on one shared channel draw.

    The draw depends only on (cfg.seed, grid_idx, trial), so extending the
    trial count never changes earlier trials.
    """
    value = scenario.grid[grid_idx]
    tcfg = apply_grid_value(cfg, scenario.name, value)
    seq = np.random.SeedSequence(tcfg.seed, spawn_key=(grid_idx, trial))
    layout, ch = draw_scenario(tcfg, seq)
    result = TrialResult(grid_idx=grid_idx, grid_value=value, trial=trial)
    try:
        alg1_trace = None
        for method in scenario.methods:
            if method is Method.ALG1:
                trace = alg1_trace = run_algorithm1(ch, tcfg)
            elif method is Method.ALG2:
                # reuse the fixed-grouping run as the joint warm start;
                # run_algorithm2 would redo the identical run otherwise
                warm = alg1_trace.point if alg1_trace is not None else None
                trace = run_algorithm2(ch, tcfg, warm_start=warm)
            elif method is Method.FD_G1:
                trace = run_algorithm1(ch, tcfg.with_overrides(G=1))
            else:
                result.rates[method.value] = hd_baseline(layout, tcfg, seq)
                continue
            result.rates[method.value] = trace.sum_rate
            if keep_traces or scenario.name in (ScenarioName.CONVERGENCE,
                                                ScenarioName.GROUPING_TABLE):
                result.traces[method.value] = trace
    except InfeasibleScenario:
        result.infeasible = True
        result.rates.clear()
        result.traces.clear()
    return result


def _worker(args) -> TrialResult:
    scenario, cfg, grid_idx, trial = args
    return run_trial(scenario, cfg, grid_idx, trial)


def _pool_size() -> int:
    cap = os.environ.get("FDGROUPER_THREADS")
    n = os.cpu_count() or 1
    if cap is not None:
        n = min(n, max(1, int(cap)))
    return n


def run_all_trials(scenario: Scenario, cfg: SystemConfig) -> list[TrialResult]:
    tasks = [(scenario, cfg, gi, tr)
             for gi in range(len(scenario.grid))
             for tr in range(scenario.trials)]
    workers = min(_pool_size(), len(tasks))
    if workers <= 1:
        results = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_worker, tasks))
    results.sort(key=lambda r: (r.grid_idx, r.trial))
    return results


def _fmt(v: float) -> str:
    return f"{v:.6f}"


def _write_sweep_csv(scenario: Scenario, results: list[TrialResult],
                     path: Path) -> None:
    param = _GRID_PARAM[scenario.name]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", "method", "grid_param", "grid_value",
                     "trials", "excluded", "mean_sr_bps", "stderr_sr_bps"])
        for gi, value in enumerate(scenario.grid):
            bucket = [r for r in results if r.grid_idx == gi]
            kept = [r for r in bucket if not r.infeasible]
            excluded = len(bucket) - len(kept)
            for method in scenario.methods:
                vals = np.array([nats_to_bps(r.rates[method.value])
                                 for r in kept])
                mean = float(vals.mean()) if len(vals) else math.nan
                stderr = (float(vals.std(ddof=1) / math.sqrt(len(vals)))
                          if len(vals) > 1 else 0.0)
                wr.writerow([scenario.name.value, method.value, param,
                             _fmt(value), len(bucket), excluded,
                             _fmt(mean), _fmt(stderr)])


def _write_convergence_csv(scenario: Scenario, results: list[TrialResult],
                           path: Path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", "method", "trial", "iteration",
                     "exact_sr_bps", "surrogate_sr_bps", "solver_status"])
        for r in results:
            if r.infeasible:
                continue
            for method in scenario.methods:
                trace = r.traces.get(method.value)
                if trace is None:
                    continue
                wr.writerow([scenario.name.value, method.value, r.trial, 0,
                             _fmt(nats_to_bps(trace.initial_rate)), "", "init"])
                for i in range(trace.iterations):
                    wr.writerow([scenario.name.value, method.value, r.trial,
                                 i + 1, _fmt(nats_to_bps(trace.exact[i])),
                                 _fmt(nats_to_bps(trace.surrogate[i])),
                                 trace.statuses[i]])


def _write_grouping_csv(scenario: Scenario, results: list[TrialResult],
                        path: Path) -> None:
    """Per-user per-group achieved rates (hardened grouping) plus totals."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["scenario", "method", "trial", "user_type", "user_index",
                     "group", "active", "rate_bps"])
        for r in results:
            if r.infeasible:
                continue
            for method in scenario.methods:
                trace = r.traces.get(method.value)
                if trace is None:
                    if method.value in r.rates:
                        wr.writerow([scenario.name.value, method.value,
                                     r.trial, "total", "", "", "",
                                     _fmt(nats_to_bps(r.rates[method.value]))])
                    continue
                K, G = trace.rates_dl.shape
                L = trace.rates_ul.shape[0]
                for k in range(K):
                    for g in range(G):
                        wr.writerow([scenario.name.value, method.value,
                                     r.trial, "dl", k, g,
                                     int(trace.alpha_hard[k, g]),
                                     _fmt(nats_to_bps(trace.rates_dl[k, g]))])
                for ell in range(L):
                    for g in range(G):
                        wr.writerow([scenario.name.value, method.value,
                                     r.trial, "ul", ell, g,
                                     int(trace.beta_hard[ell, g]),
                                     _fmt(nats_to_bps(trace.rates_ul[ell, g]))])
                wr.writerow([scenario.name.value, method.value, r.trial,
                             "total", "", "", "",
                             _fmt(nats_to_bps(trace.sum_rate))])


def run_scenario(scenario: Scenario, cfg: SystemConfig) -> int:
    """Run the full scenario and write its CSV; returns the number of
    infeasible (excluded) trials."""
    results = run_all_trials(scenario, cfg)
    path = Path(scenario.out)
    if scenario.name is ScenarioName.CONVERGENCE:
        _write_convergence_csv(scenario, results, path)
    elif scenario.name is ScenarioName.GROUPING_TABLE:
        _write_grouping_csv(scenario, results, path)
    else:
        _write_sweep_csv(scenario, results, path)
    return sum(1 for r in results if r.infeasible)
