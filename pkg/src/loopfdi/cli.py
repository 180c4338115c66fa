"""Command-line driver: run, serve, replay, validate."""

from __future__ import annotations

import sys
import time as _time

import click

from .errors import LoopFdiError
from .graph import default_config_text, load_system_config, validate_graph
from .plant import load_scenarios
from .service import replay as replay_log
from .service import run_pipeline, serve as serve_service


def _load_graph(config_path: str | None):
    if config_path:
        with open(config_path) as fh:
            return load_system_config(fh.read())
    return load_system_config(default_config_text())


def _load_scenarios(graph, scenario_path: str | None):
    if not scenario_path:
        return []
    with open(scenario_path) as fh:
        return load_scenarios(fh.read(), graph)


@click.group()
def main():
    """Model-based fault diagnosis for the sodium purification loop."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), default=None)
@click.option("--duration", type=float, default=900.0, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None, help="Run-log path (JSON lines).")
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Also export the raw sample stream as CSV.")
@click.option("--calibration-batches", type=int, default=None)
def run(config_path, scenario_path, duration, seed, out_path, csv_path, calibration_batches):
    """Run the pipeline in batch mode and print the final diagnosis."""
    try:
        graph = _load_graph(config_path)
        scenarios = _load_scenarios(graph, scenario_path)
        snapshots = run_pipeline(
            graph, scenarios, duration, seed, out_path, calibration_batches
        )
        if csv_path:
            from .plant import Simulator, samples_to_csv

            # identical stream: the simulator is seed-reproducible
            times, streams = Simulator(graph, scenarios, seed=seed).run_samples(duration)
            with open(csv_path, "w") as fh:
                fh.write(samples_to_csv(times, streams))
    except LoopFdiError as exc:
        raise click.ClickException(str(exc))
    if not snapshots:
        click.echo("no detection batches completed (duration too short?)")
        return
    final = snapshots[-1].to_dict()
    diag = final["diagnosis"]
    click.echo(f"snapshots: {len(snapshots)}  final t={final['timestamp_s']:.0f}s")
    click.echo(f"active residuals: {diag.get('observed_active', [])}")
    click.echo(f"matched faults:  {diag.get('matched_faults', [])}")
    if out_path:
        click.echo(f"run log written to {out_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=8571, show_default=True)
@click.option("--time-scale", type=float, default=1.0, show_default=True,
              help="Simulated seconds per wall second.")
@click.option("--duration", type=float, default=7200.0, show_default=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--console", "console_dir", type=click.Path(exists=True), default=None,
              help="Serve a built operator console (static files) under /console.")
def serve(config_path, scenario_path, port, time_scale, duration, seed, console_dir):
    """Serve the operator API over HTTP/WebSocket with a live pipeline."""
    try:
        graph = _load_graph(config_path)
        scenarios = _load_scenarios(graph, scenario_path)
        serve_service(graph, scenarios, port, time_scale, duration, seed, console_dir)
    except LoopFdiError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--log", "log_path", type=click.Path(exists=True), required=True)
@click.option("--speed", type=float, default=0.0, show_default=True,
              help="Snapshots per second; 0 replays as fast as possible.")
def replay(log_path, speed):
    """Re-emit the snapshots of a run log to stdout."""
    try:
        for snapshot in replay_log(log_path):
            diag = snapshot.get("diagnosis", {})
            click.echo(
                f"t={snapshot['timestamp_s']:.0f}s active={diag.get('observed_active', [])} "
                f"matched={diag.get('matched_faults', [])}"
            )
            if speed > 0:
                _time.sleep(1.0 / speed)
    except LoopFdiError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def validate(config_path):
    """Load a config and report structural diagnostics."""
    try:
        graph = _load_graph(config_path)
    except LoopFdiError as exc:
        raise click.ClickException(str(exc))
    diagnostics = validate_graph(graph)
    if not diagnostics:
        click.echo("configuration valid: no diagnostics")
        return
    for d in diagnostics:
        click.echo(f"{d.kind}: {d.message}")
    sys.exit(1)


if __name__ == "__main__":
    main()
