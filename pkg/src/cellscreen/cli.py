"""Command-line interface: segment / features / hitval / eval / all."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import CellscreenError, ConfigError
from .pipeline import RunConfig, run_eval, run_features, run_hitval, run_segment

CONFIG_EXIT_CODE = 2


def _load_config(config_path, seed, backend, workers, out) -> RunConfig:
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if backend is not None:
        overrides["backend"] = backend
    if workers is not None:
        overrides["workers"] = workers
    if out is not None:
        overrides["output"] = out
    try:
        return RunConfig.from_file(config_path, overrides)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(CONFIG_EXIT_CODE)


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(exists=False), help="Run configuration file.")(fn)
    fn = click.option("--seed", type=int, default=None, help="Override the RNG seed.")(fn)
    fn = click.option("--backend", default=None, help="oracle or graph:PATH.")(fn)
    fn = click.option("--workers", type=int, default=None, help="Concurrent workers.")(fn)
    fn = click.option("--out", default=None, help="Output directory.")(fn)
    return fn


@click.group()
def main():
    """Zero-shot (sub)cellular segmentation and hit-validation analytics."""


def _report_segment(manifest) -> int:
    failed = [e for e in manifest["images"] if e["status"] != "ok"]
    for entry in manifest["images"]:
        click.echo(f"{entry['image_id']}: {entry['status']}")
    if failed:
        click.echo(f"{len(failed)} image(s) failed", err=True)
    return 0


@main.command()
@_common_options
def segment(config_path, seed, backend, workers, out):
    """Segment nuclei, cells, and subcellular entities for a batch."""
    config = _load_config(config_path, seed, backend, workers, out)
    manifest = run_segment(config)
    sys.exit(_report_segment(manifest))


@main.command()
@_common_options
def features(config_path, seed, backend, workers, out):
    """Extract the per-object feature table from segmentation artifacts."""
    config = _load_config(config_path, seed, backend, workers, out)
    try:
        table = run_features(config)
    except (CellscreenError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"wrote {len(table)} feature rows to {Path(config.out_dir) / 'features.csv'}")


@main.command()
@_common_options
def hitval(config_path, seed, backend, workers, out):
    """Z'-factor and EC50 reports plus dose-response plots."""
    config = _load_config(config_path, seed, backend, workers, out)
    try:
        report = run_hitval(config)
    except (CellscreenError, FileNotFoundError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"best feature: {report['best_feature']} (Z' = {report['best_zprime']:.4f})")
    for compound_id, result in report["compounds"].items():
        if "error" in result:
            click.echo(f"{compound_id}: {result['error']}")
        else:
            click.echo(f"{compound_id}: EC50 = {result['ec50']:.4e} M")


@main.command("eval")
@_common_options
@click.option("--pred", "pred_glob", required=True, help="Prediction label map glob.")
@click.option("--gt", "gt_glob", required=True, help="Ground-truth label map glob.")
def eval_cmd(config_path, seed, backend, workers, out, pred_glob, gt_glob):
    """Score predictions against ground truth (DSC / IoU)."""
    import glob as globlib

    config = _load_config(config_path, seed, backend, workers, out)
    pred_paths = sorted(globlib.glob(pred_glob))
    gt_paths = sorted(globlib.glob(gt_glob))
    if len(pred_paths) != len(gt_paths):
        click.echo(
            f"pairing failure: {len(pred_paths)} predictions vs {len(gt_paths)} ground truths",
            err=True,
        )
        sys.exit(1)
    report = run_eval(config, pred_paths, gt_paths)
    click.echo(f"mean DSC = {report.mean_dsc:.4f}, mean IoU = {report.mean_iou:.4f}")


@main.command("all")
@_common_options
def run_all(config_path, seed, backend, workers, out):
    """segment + features (+ hitval when a layout is configured)."""
    config = _load_config(config_path, seed, backend, workers, out)
    manifest = run_segment(config)
    _report_segment(manifest)
    table = run_features(config)
    click.echo(f"wrote {len(table)} feature rows")
    if config.layout_path:
        report = run_hitval(config, table)
        click.echo(f"best feature: {report['best_feature']}")


if __name__ == "__main__":
    main()
