"""
FILMLAB CLI — The Interface

Four commands, all driven by one JSON run config:
  1. filmlab simulate   --config run.json    (seeded ensemble, report + CSV + plots)
  2. filmlab verify     --config run.json    (identity/inequality corpus)
  3. filmlab mass-study --config run.json    (mass drift over dyadic h)
  4. filmlab constants  --config run.json    (scheme constants as JSON)

Exit codes: 0 ok, 1 verification failure, 2 configuration or usage error.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

import click
import typer
from dotenv import load_dotenv
from loguru import logger
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from filmlab.config_loader import RunConfig, load_config, resolve
from filmlab.diagnostics.corpus import run_corpus
from filmlab.ensemble import EnsembleReport, mass_drift_study, run_ensemble
from filmlab.governance import ConfigurationError, FilmlabError
from filmlab.identity import BANNER, __codename__, __tagline__, __version__
from filmlab.noise import log_noise_summary
from filmlab.persist import export_schema, persist, write_json
from filmlab.plots import emit_plots

# FILMLAB_OUTPUT_DIR may live in ./.env
load_dotenv()

MASS_STUDY_FILE = "mass_study.json"

app = typer.Typer(
    name="filmlab",
    help=f"{__codename__} — {__tagline__}\nStochastic thin-film FE scheme and check suite.",
    no_args_is_help=True,
    rich_markup_mode="rich",
)

console = Console()


def version_callback(value: bool):
    if value:
        console.print(f"{__codename__} v{__version__}")
        raise typer.Exit()


@app.callback()
def root(
    version: Optional[bool] = typer.Option(
        None,
        "--version",
        callback=version_callback,
        is_eager=True,
        help="Show the version and exit.",
    ),
):
    pass


# ---------------------------------------------------------------------------
# Banner
# ---------------------------------------------------------------------------


def _print_banner():
    console.print(f"[bright_green]{BANNER}[/]")
    console.print(f"  [dim]v{__version__} — {__tagline__}[/]\n")


def _load(config: Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    try:
        return load_config(config, overrides)
    except ConfigurationError as e:
        console.print(f"[red]{escape(str(e))}[/]")
        raise typer.Exit(2)


def _overrides(**sections: dict[str, Any]) -> dict[str, Any]:
    """Drop unset flags so they never shadow the config file."""
    out = {}
    for name, values in sections.items():
        kept = {k: v for k, v in values.items() if v is not None}
        if kept:
            out[name] = kept
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


@app.command()
def simulate(
    config: Path = typer.Option(..., "--config", "-c", help="JSON run config"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", help="Override noise.seed"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Path-parallel workers"),
    plots: bool = typer.Option(True, "--plots/--no-plots", help="Write PNG figures"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    """Run the seeded path ensemble and write report.json + CSV files."""
    _print_banner()
    _configure_logging(verbose)

    cfg = _load(config, _overrides(
        noise={"seed": seed},
        ensemble={"workers": workers, "output_dir": str(out) if out is not None else None},
    ))
    try:
        run = resolve(cfg)
        log_noise_summary(run.spec, run.grid)
        result = run_ensemble(
            cfg.ensemble, run.params, run.scheme, run.spec, cfg.initial, run.grid,
        )
    except ConfigurationError as e:
        console.print(f"[red]{escape(str(e))}[/]")
        raise typer.Exit(2)

    directory = Path(cfg.ensemble.output_dir)
    try:
        persist(result.report, directory, result.records)
        export_schema(directory)
        if plots:
            emit_plots(result.report, directory, result.records)
    except FilmlabError as e:
        console.print(f"[red]{escape(str(e))}[/]")
        raise typer.Exit(1)

    _print_report(result.report)
    console.print(f"\n[green]Report written to {directory}[/]")


@app.command()
def verify(
    config: Path = typer.Option(..., "--config", "-c", help="JSON run config"),
    samples: Optional[int] = typer.Option(None, "--samples", "-n", help="Fields per family, split across combinations"),
    workers: int = typer.Option(1, "--workers", "-w", help="Parallel corpus chunks"),
    report: Optional[Path] = typer.Option(None, "--report", "-r", help="Write the summary as JSON"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    """Run every identity and inequality over the random field corpus."""
    _print_banner()
    _configure_logging(verbose)

    cfg = _load(config, _overrides(verify={"samples": samples}))
    try:
        run = resolve(cfg, check_initial=False)
        suite, errors = run_corpus(cfg.verify, run.params, run.spec, workers)
    except ConfigurationError as e:
        console.print(f"[red]{escape(str(e))}[/]")
        raise typer.Exit(2)

    summary = suite.summary()
    _print_suite(summary)

    if report is not None:
        summary["chunk_errors"] = errors
        try:
            write_json(summary, report)
        except FilmlabError as e:
            console.print(f"[red]{escape(str(e))}[/]")
            raise typer.Exit(1)

    if errors:
        console.print(f"[red]{len(errors)} corpus chunks failed[/]")
    if not suite.ok or errors:
        console.print(
            f"[red]✗ {suite.identity_failures} identity and "
            f"{suite.sign_failures} sign failures over {suite.fields} fields[/]"
        )
        raise typer.Exit(1)
    console.print(f"[green]✓ All checks passed over {suite.fields} fields[/]")


@app.command(name="mass-study")
def mass_study(
    config: Path = typer.Option(..., "--config", "-c", help="JSON run config"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Output directory"),
    workers: Optional[int] = typer.Option(None, "--workers", "-w", help="Path-parallel workers"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    """Mass drift E[sup |mean u - mean u0|] over the configured h_list."""
    _print_banner()
    _configure_logging(verbose)

    cfg = _load(config, _overrides(
        ensemble={"workers": workers, "output_dir": str(out) if out is not None else None},
    ))
    try:
        run = resolve(cfg, h_levels=cfg.ensemble.h_list)
        study = mass_drift_study(cfg.ensemble, run.params, run.scheme, run.spec, cfg.initial)
    except ConfigurationError as e:
        console.print(f"[red]{escape(str(e))}[/]")
        raise typer.Exit(2)

    directory = Path(cfg.ensemble.output_dir)
    try:
        write_json(study, directory / MASS_STUDY_FILE)
        emit_plots(None, directory, study=study)
    except FilmlabError as e:
        console.print(f"[red]{escape(str(e))}[/]")
        raise typer.Exit(1)

    table = Table(title="Mass Drift", border_style="cyan")
    table.add_column("h", justify="right")
    table.add_column("L_h", justify="right")
    table.add_column("drift", justify="right")
    table.add_column("± s.e.", justify="right")
    table.add_column("stopped", justify="right")
    for row in study.rows:
        table.add_row(
            f"{row.h:.6g}", str(row.L_h), f"{row.mass_drift:.4e}",
            f"{row.mass_drift_std_error:.2e}", f"{row.stop_fraction:.3f}",
        )
    console.print(table)

    if study.conservative:
        console.print("[green]Mass conserved to round-off at every level[/]")
    elif study.slope is not None:
        console.print(f"[cyan]log-log slope: {study.slope:.3f}[/]")
    else:
        console.print("[yellow]Drift vanishes at some level; no slope fitted[/]")
    trend = "[green]monotone[/]" if study.stopping_trend_monotone else "[yellow]not monotone[/]"
    console.print(f"Stopping fraction trend: {trend}")


@app.command()
def constants(
    config: Path = typer.Option(..., "--config", "-c", help="JSON run config"),
    verbose: bool = typer.Option(False, "--verbose", "-v"),
):
    """Print C_Strat, C_osc, sigma, E_max_h, s_min, s_opt as JSON."""
    _configure_logging(verbose)

    cfg = _load(config)
    try:
        run = resolve(cfg, check_initial=False)
        values = run.constants()
    except FilmlabError as e:
        console.print(f"[red]{escape(str(e))}[/]")
        raise typer.Exit(2)
    # Plain echo: stdout must stay parseable JSON.
    typer.echo(json.dumps(values, indent=2))


# ---------------------------------------------------------------------------
# Entry
# ---------------------------------------------------------------------------


def main(argv: list[str] | None = None) -> int:
    """Run the app without sys.exit and return its exit code."""
    try:
        result = app(args=argv, standalone_mode=False)
    except click.ClickException as e:
        e.show()
        return e.exit_code
    except click.exceptions.Abort:
        return 1
    except ConfigurationError as e:
        console.print(f"[red]{escape(str(e))}[/]")
        return 2
    return result if isinstance(result, int) else 0


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _print_report(report: EnsembleReport) -> None:
    overview = Table(title="Ensemble", border_style="cyan")
    overview.add_column("Property")
    overview.add_column("Value")
    overview.add_row("Paths", f"{report.completed}/{report.n_paths}")
    overview.add_row("Grid", f"L_h={report.L_h}, h={report.h:.6g}")
    overview.add_row("T_max", f"{report.T_max:g}")
    overview.add_row("Stopped", f"{report.stopping.fraction:.3f} {report.stopping.causes or ''}")
    overview.add_row("Mass drift", f"{report.mass_drift:.4e}")
    osc = report.oscillation_violations
    overview.add_row("Oscillation", "[green]0 violations[/]" if osc == 0 else f"[red]{osc} violations[/]")
    console.print(overview)

    if not report.quantities:
        console.print("[yellow]No completed paths; nothing to estimate[/]")
        return
    table = Table(title="Estimates", border_style="magenta")
    table.add_column("Quantity")
    table.add_column("Mean", justify="right")
    table.add_column("± s.e.", justify="right")
    for name, q in report.quantities.items():
        table.add_row(name, f"{q.mean:.6e}", f"{q.std_error:.2e}")
    console.print(table)


def _print_suite(summary: dict) -> None:
    table = Table(title=f"Check Suite ({summary['fields']} fields)", border_style="cyan")
    table.add_column("Check")
    table.add_column("Kind")
    table.add_column("Evaluated", justify="right")
    table.add_column("Failures", justify="right")
    table.add_column("Out of hyp.", justify="right")
    table.add_column("Max residual", justify="right")
    table.add_column("Margin [min, max]", justify="right")
    for c in summary["checks"]:
        margin = "—" if c["min_margin"] is None else f"[{c['min_margin']:.3g}, {c['max_margin']:.3g}]"
        failures = f"[red]{c['failures']}[/]" if c["failures"] else "0"
        table.add_row(
            c["name"], c["kind"], str(c["evaluated"]), failures,
            str(c["out_of_hypothesis"]), f"{c['max_residual']:.2e}", margin,
        )
    console.print(table)


def _configure_logging(verbose: bool) -> None:
    logger.remove()
    if verbose:
        logger.add(
            lambda msg: console.print(f"[dim]{msg}[/]", highlight=False),
            level="DEBUG",
            format="{time:HH:mm:ss} | {level:<7} | {message}",
        )
    else:
        logger.add(
            lambda msg: console.print(f"[dim]{msg}[/]", highlight=False),
            level="WARNING",
            format="{message}",
        )


if __name__ == "__main__":
    raise SystemExit(main())
