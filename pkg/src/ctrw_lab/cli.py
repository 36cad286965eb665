"""Command line entry point: ``ctrw-lab <subcommand> --config --seed --out [--threads]``."""
from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .errors import ConfigInvalid
from .harness import EXPERIMENTS, ExperimentConfig, env_seed, run_experiment


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
def main():
    """Simulation and verification experiments for heavy-tailed CTRWs."""


def _make_command(name: str):
    spec = EXPERIMENTS[name]
    doc = f"Run the {name} experiment"
    doc += f" (acceptance criterion {spec.criterion})." if spec.criterion else "."

    @click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                  help="JSON config; fields left out take their defaults.")
    @click.option("--seed", type=int, default=None, help="64-bit seed (overrides the config, env CTRW_LAB_SEED).")
    @click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
    @click.option("--threads", type=int, default=None, help="Worker threads; results do not depend on it.")
    def command(config_path, seed, out, threads):
        raw = {}
        if config_path:
            try:
                raw = json.loads(Path(config_path).read_text())
            except json.JSONDecodeError as e:
                raise click.ClickException(f"invalid config: {e}")
        if raw.get("experiment", name) != name:
            raise click.ClickException(f"config is for {raw['experiment']!r}, not {name!r}")
        raw["experiment"] = name
        if seed is None and "seed" not in raw:
            seed = env_seed()
        try:
            cfg = ExperimentConfig.from_dict(raw, seed=seed, out=out or raw.get("out") or f"out/{name}",
                                             threads=threads)
        except ConfigInvalid as e:
            raise click.ClickException(f"ConfigInvalid: {e}")
        code, result = run_experiment(cfg)
        for rep in result.reports:
            click.echo(rep.line())
        click.echo(f"artifacts written to {cfg.out}")
        sys.exit(code)

    command.__doc__ = doc
    return click.command(name=name)(command)


for _name in sorted(EXPERIMENTS):
    main.add_command(_make_command(_name))


if __name__ == "__main__":
    main()
