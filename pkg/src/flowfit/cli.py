"""Command-line entry point: ``flowfit run <preset> [options]``."""

from __future__ import annotations

import json
import sys

import click

from .presets import PRESET_NAMES, run_preset


def _parse_size(value: str) -> tuple[int, int]:
    try:
        h, w = value.lower().split("x")
        return int(h), int(w)
    except ValueError as exc:
        raise click.BadParameter(f"expected HxW, got {value!r}") from exc


@click.group()
def main():
    """Online-fitted optical flow experiments."""


@main.command()
@click.argument("preset", type=click.Choice(PRESET_NAMES))
@click.option("--seed", type=int, default=None, help="Base RNG seed.")
@click.option("--size", type=str, default=None, metavar="HxW",
              help="Frame size, e.g. 64x64.")
@click.option("--interval", type=int, default=None,
              help="Optimize every N frames on a batch of N pairs.")
@click.option("--iters", type=int, default=None,
              help="Optimization iterations per update.")
@click.option("--history", type=click.Choice(["0", "1", "2"]), default=None,
              help="History depth for the integration presets.")
@click.option("--out", type=click.Path(), default=None,
              help="Output directory for report.json and artifacts.")
@click.option("--input", "input_dir", type=click.Path(exists=True),
              default=None, help="Load a sequence directory instead of "
              "synthesizing one.")
@click.option("--lambda-l1", type=float, default=None,
              help="Photometric L1 weight.")
@click.option("--lambda-ssim", type=float, default=None,
              help="Photometric structural term weight.")
@click.option("--literal-eq4", is_flag=True, default=False,
              help="Use the raw signed SSIM term (may go negative).")
def run(preset, seed, size, interval, iters, history, out, input_dir,
        lambda_l1, lambda_ssim, literal_eq4):
    """Run PRESET and print a short summary; write report.json with --out."""
    overrides = {}
    if seed is not None:
        overrides["seed"] = seed
    if size is not None:
        overrides["height"], overrides["width"] = _parse_size(size)
    if interval is not None:
        overrides["interval"] = interval
    if iters is not None:
        overrides["iterations"] = iters
    if history is not None:
        overrides["history_depth"] = int(history)
    if input_dir is not None:
        overrides["input_dir"] = input_dir
    if lambda_l1 is not None:
        overrides["lambda_l1"] = lambda_l1
    if lambda_ssim is not None:
        overrides["lambda_ssim"] = lambda_ssim
    if literal_eq4:
        overrides["literal_ssim_sign"] = True

    try:
        report = run_preset(preset, overrides, out_dir=out)
    except (ValueError, OSError, RuntimeError) as exc:
        click.echo(json.dumps({"error": str(exc),
                               "type": type(exc).__name__}), err=True)
        sys.exit(1)
    summary = {"preset": preset, "schema_version": report["schema_version"]}
    if out is not None:
        summary["report"] = str(out)
    click.echo(json.dumps(summary))


if __name__ == "__main__":
    main()
