"""Command-line entry point.

Every subcommand takes --config PATH, --out DIR and an optional --seed that
overrides the config. Exit code is 0 on success; failures print one
machine-readable JSON line on stderr.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import harness
from .config import ExperimentConfig, load_config


def _load(config_path: str | None, seed: int | None) -> ExperimentConfig:
    cfg = load_config(config_path) if config_path else ExperimentConfig()
    if seed is not None:
        cfg.seed = seed
    return cfg


def _fail(exc: BaseException) -> None:
    line = json.dumps({"error": type(exc).__name__, "message": str(exc)})
    click.echo(line, err=True)
    sys.exit(1)


@click.group()
def main():
    """Learned structured subsampling: training, baselines, CRB sweeps and
    sparse recovery benchmarks."""


_common = [
    click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                 default=None, help="INI configuration file."),
    click.option("--out", "out_dir", type=click.Path(file_okay=False),
                 default="out", show_default=True, help="Output directory."),
    click.option("--seed", type=int, default=None,
                 help="Seed override (takes precedence over the config)."),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@main.command()
@common_options
def train(config_path, out_dir, seed):
    """Train the structured selector; write the report and selection."""
    try:
        cfg = _load(config_path, seed)
        report = harness.run_train(cfg, Path(out_dir))
    except Exception as exc:
        _fail(exc)
    click.echo(f"final allocation: {report.selection.counts}")


@main.command()
@common_options
def sweep(config_path, out_dir, seed):
    """CRB-vs-compression sweep across methods and budgets."""
    try:
        cfg = _load(config_path, seed)
        csv_path = harness.run_sweep(cfg, Path(out_dir))
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {csv_path}")


@main.command()
@common_options
@click.argument("selections", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
def recover(config_path, out_dir, seed, selections):
    """FISTA recovery benchmark for the given selection files."""
    try:
        cfg = _load(config_path, seed)
        csv_path = harness.run_recover(cfg, Path(out_dir),
                                       [Path(p) for p in selections])
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {csv_path}")


@main.command()
@click.option("--out", "out_dir", type=click.Path(file_okay=False),
              default="out", show_default=True)
@click.argument("sweep_csv", type=click.Path(exists=True, dir_okay=False))
def plot(out_dir, sweep_csv):
    """Render a sweep CSV as an SVG line chart."""
    try:
        path = harness.run_plot(Path(sweep_csv), Path(out_dir))
    except Exception as exc:
        _fail(exc)
    click.echo(f"wrote {path}")


if __name__ == "__main__":
    main()
