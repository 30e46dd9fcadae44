"""Command-line entry points.

`fdgrouper run` executes one Monte-Carlo scenario and writes a CSV;
`fdgrouper dump-program` exports one convex subproblem in the documented
text format for external cross-checking.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from .algorithms import AlgorithmKind, heuristic_seed
from .channels import draw_scenario
from .config import SystemConfig, load_config
from .experiments import Method, Scenario, ScenarioName, run_scenario
from .subproblems import SubproblemKind, build_subproblem


def _parse_overrides(pairs: tuple[str, ...]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.BadParameter(f"expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        try:
            value: object = int(raw)
        except ValueError:
            try:
                value = float(raw)
            except ValueError:
                value = raw
        out[key] = value
    return out


def _build_config(config_path: str | None, seed: int | None,
                  overrides: tuple[str, ...]) -> SystemConfig:
    kwargs = _parse_overrides(overrides)
    if seed is not None:
        kwargs["seed"] = seed
    if config_path is not None:
        return load_config(config_path, **kwargs)
    return SystemConfig(**kwargs)


@click.group()
def main():
    """Full-duplex sum-rate maximization experiments."""


@main.command("run")
@click.option("--scenario", "scenario_name", required=True,
              type=click.Choice([s.value for s in ScenarioName]))
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None, help="TOML or JSON config file.")
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=None,
              help="Overrides the config seed.")
@click.option("--out", type=click.Path(), default="results.csv",
              show_default=True)
@click.option("--grid", default=None,
              help="Comma-separated sweep values (scenario-specific units).")
@click.option("--method", "methods", multiple=True,
              type=click.Choice([m.value for m in Method]),
              help="Restrict to these methods (repeatable).")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Config field overrides (repeatable).")
def run_cmd(scenario_name, config_path, trials, seed, out, grid, methods,
            overrides):
    """Run one scenario and write its CSV.

    Exit code 0 on success, 2 if any infeasible trials were excluded,
    1 on errors.
    """
    try:
        cfg = _build_config(config_path, seed, overrides)
        scenario = Scenario(
            name=ScenarioName(scenario_name),
            trials=trials,
            grid=tuple(float(v) for v in grid.split(",")) if grid else (),
            methods=tuple(Method(m) for m in methods),
            out=Path(out),
        )
        excluded = run_scenario(scenario, cfg)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {out} ({excluded} infeasible trials excluded)")
    sys.exit(2 if excluded else 0)


@main.command("dump-program")
@click.option("--kind", required=True,
              type=click.Choice([k.value for k in SubproblemKind]))
@click.option("--config", "config_path", type=click.Path(exists=True),
              default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(), required=True)
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE")
def dump_program_cmd(kind, config_path, seed, out, overrides):
    """Build one subproblem at the heuristic seed point and dump it."""
    try:
        cfg = _build_config(config_path, seed, overrides)
        _, ch = draw_scenario(cfg)
        skind = SubproblemKind(kind)
        akind = (AlgorithmKind.ALG2 if skind.is_joint else AlgorithmKind.ALG1)
        point = heuristic_seed(akind, ch, cfg)
        sub = build_subproblem(skind, point, ch, cfg)
        sub.program.dump(out)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
