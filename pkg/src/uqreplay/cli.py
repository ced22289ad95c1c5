"""Command-line interface: single runs and seeded grids."""

import json

import click

from . import harness
from .harness import GRID_KEYS, SCORE_CHOICES
from .memory import STRATEGIES
from .models import MODEL_KINDS


def _parse_list(text):
    return [part.strip() for part in text.split(",") if part.strip()]


def _build_config(config_path, overrides):
    data = harness.load_config_dict(config_path) if config_path else {}
    for key, value in overrides.items():
        if value is not None:
            data[key] = value
    return harness.config_from_dict(data)


def _common_options(command):
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     default=None, help="YAML config file."),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                     help="Output directory."),
        click.option("--seeds", default=None, help="Comma-separated run seeds, e.g. 0,1,2."),
        click.option("--model", "model_kind", type=click.Choice(MODEL_KINDS), default=None,
                     help="Classifier kind."),
        click.option("--hidden", type=int, default=None, help="MLP hidden width."),
        click.option("--tta-views", type=int, default=None,
                     help="Number of views per sample (incl. the identity view)."),
        click.option("--tta-sigma", type=float, default=None,
                     help="Gaussian noise scale of the perturbed views."),
    ]
    for option in reversed(options):
        command = option(command)
    return command


@click.group()
def main():
    """Online class-incremental learning with uncertainty-driven replay memory."""


@main.command()
@click.option("--score", type=click.Choice(SCORE_CHOICES), default=None,
              help="Uncertainty score (or er-random for the baseline).")
@click.option("--strategy", type=click.Choice(STRATEGIES), default=None,
              help="Retention strategy.")
@click.option("--memory", "memory_capacity", type=int, default=None,
              help="Replay memory capacity in samples.")
@_common_options
def run(config_path, out_dir, seeds, model_kind, hidden, tta_views, tta_sigma,
        score, strategy, memory_capacity):
    """Run one configuration across its seeds and write per-run artifacts."""
    overrides = {
        "out_dir": out_dir,
        "score": score,
        "strategy": strategy,
        "memory_capacity": memory_capacity,
        "model": model_kind,
        "hidden": hidden,
        "tta_views": tta_views,
        "tta_sigma": tta_sigma,
    }
    if seeds is not None:
        overrides["seeds"] = [int(s) for s in _parse_list(seeds)]
    try:
        cfg = _build_config(config_path, overrides)
        for seed in cfg.seeds:
            artifacts = harness.run_single(cfg, seed)
            with open(artifacts.summary_path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            click.echo(
                f"seed {seed}: last_accuracy={payload['last_accuracy']:.4f} "
                f"last_forgetting={payload['last_forgetting']:.4f} -> {artifacts.summary_path}"
            )
    except Exception as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--score", "scores", default=None,
              help=f"Comma-separated score kinds from {SCORE_CHOICES}.")
@click.option("--strategy", "strategies", default=None,
              help=f"Comma-separated strategies from {STRATEGIES}.")
@click.option("--memory", "capacities", default=None,
              help="Comma-separated memory capacities.")
@_common_options
def grid(config_path, out_dir, seeds, model_kind, hidden, tta_views, tta_sigma,
         scores, strategies, capacities):
    """Run a (score x strategy x capacity) x seeds grid and write grid.csv."""
    try:
        data = harness.load_config_dict(config_path) if config_path else {}
        grid_axes = {key: data.pop(key) for key in GRID_KEYS if key in data}
        overrides = {
            "model": model_kind,
            "hidden": hidden,
            "tta_views": tta_views,
            "tta_sigma": tta_sigma,
        }
        if seeds is not None:
            overrides["seeds"] = [int(s) for s in _parse_list(seeds)]
        for key, value in overrides.items():
            if value is not None:
                data[key] = value
        cfg = harness.config_from_dict(data)

        if scores is not None:
            grid_axes["scores"] = _parse_list(scores)
        if strategies is not None:
            grid_axes["strategies"] = _parse_list(strategies)
        if capacities is not None:
            grid_axes["capacities"] = [int(c) for c in _parse_list(capacities)]

        out = out_dir or cfg.out_dir
        result = harness.run_grid(
            cfg,
            scores=grid_axes.get("scores"),
            strategies=grid_axes.get("strategies"),
            capacities=grid_axes.get("capacities"),
            seeds=cfg.seeds,
            out_dir=out,
        )
        failed = sum(row["n_failed"] for row in result.cells)
        click.echo(f"{len(result.cells)} cells, {len(result.runs)} runs "
                   f"({failed} failed) -> {out}/grid.csv")
        if failed:
            raise click.ClickException("some grid cells failed; see the error column")
    except click.ClickException:
        raise
    except Exception as exc:
        raise click.ClickException(str(exc))


if __name__ == "__main__":
    main()
