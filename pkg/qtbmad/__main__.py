import logging
import os
import sys
from contextlib import contextmanager
from typing import List, Optional

import numpy as np
import typer

try:  # newer typer vendors its own click; catch the exceptions it actually raises
    from typer import _click as click
except ImportError:
    import click
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn
from rich.table import Table

from . import dual as ad
from .config import RunConfig, load_config
from .design import gradient_check, multi_start, predicted_currents, zero_current_observations
from .errors import ConfigError, QTBMError
from .models import PARAMETER_NAMES, IVCurve
from .physics.observables import iv_curve, iv_metrics, transmission_spectrum
from .physics.potential import total_potential
from .physics.solver import scattering_state
from .utils.csv_helpers import write_csv

app = typer.Typer(help="qtbmad: differentiable 1D quantum transport and inverse design",
                  no_args_is_help=True)
console = Console()

# Number of parallel workers for multi-start optimisation
DEFAULT_WORKERS = min(4, os.cpu_count() or 1)

EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="key=value run configuration")


@app.callback()
def _setup(verbose: bool = typer.Option(False, "--verbose", "-v", help="Log solver and optimiser details")):
    _configure_logging(verbose)


def _configure_logging(verbose: bool) -> None:
    logger = logging.getLogger("qtbmad")
    logger.handlers.clear()
    logger.addHandler(RichHandler(console=Console(stderr=True), show_path=False))
    logger.setLevel(logging.DEBUG if verbose else logging.WARNING)


@contextmanager
def _exit_codes():
    """Turn library errors into the documented exit codes."""
    try:
        yield
    except ConfigError as e:
        console.print(f"[red]Config error:[/] {e}")
        raise typer.Exit(EXIT_CONFIG)
    except OSError as e:
        console.print(f"[red]I/O error:[/] {e}")
        raise typer.Exit(EXIT_CONFIG)
    except QTBMError as e:
        console.print(f"[red]Numerical failure:[/] {e}")
        raise typer.Exit(EXIT_NUMERICAL)


@app.command()
def wavefunction(
    energy: float = typer.Option(..., "--energy", "-e", help="Injection energy in eV"),
    bias: float = typer.Option(0.0, "--bias", "-b", help="Drain bias V0 in eV"),
    config: Optional[str] = CONFIG_OPTION,
    out: str = typer.Option("wavefunction.csv", "--out", "-o", help="Output CSV"),
):
    """Scattering state psi(x) at one energy and bias."""
    with _exit_codes():
        cfg = load_config(config)
        device = cfg.device()
        state = scattering_state(energy, bias, cfg.barriers, device)
        x = device.geometry.nodes()
        u = total_potential(x, cfg.barriers, energy, bias, device)
        psi = np.asarray(state.psi)
        density = ad.abs2(psi)
        rows = zip(x, u, psi.real, psi.imag, density)
        write_csv(out, ["x_nm", "potential_ev", "psi_re", "psi_im", "density"], rows)
    console.print(f"[bold green]✓[/] Created: {out}")


@app.command()
def transmission(
    bias: float = typer.Option(0.0, "--bias", "-b", help="Drain bias V0 in eV"),
    config: Optional[str] = CONFIG_OPTION,
    out: str = typer.Option("transmission.csv", "--out", "-o", help="Output CSV"),
):
    """T(E) on the energy grid [0, fermi_ev]."""
    with _exit_codes():
        cfg = load_config(config)
        energies, t = transmission_spectrum(bias, cfg.barriers, cfg.fermi_ev, cfg.device(),
                                            cfg.grids.energy_points)
        write_csv(out, ["energy_ev", "transmission"], zip(energies, t))
    console.print(f"[bold green]✓[/] Created: {out}")


@app.command()
def iv(
    bias: Optional[List[float]] = typer.Option(None, "--bias", "-b",
                                               help="Bias in eV; repeat for several (default: sweep.* grid)"),
    config: Optional[str] = CONFIG_OPTION,
    out: str = typer.Option("iv.csv", "--out", "-o", help="Output CSV"),
):
    """Current-voltage curve and its peak/valley figures."""
    with _exit_codes():
        cfg = load_config(config)
        biases = list(bias) if bias else cfg.sweep.biases()
        with Progress(SpinnerColumn(), TextColumn("[cyan]Sweeping {task.fields[n]} biases..."),
                      console=console) as p:
            p.add_task("", n=len(biases))
            curve = iv_curve(biases, cfg.barriers, cfg.fermi_ev, cfg.device(),
                             cfg.grids.energy_points, cfg.grids.interp_points)
        write_csv(out, ["bias_ev", "current"], zip(curve.biases, curve.currents))
    console.print(f"[bold green]✓[/] Created: {out}")
    _print_metrics(curve)


def _print_metrics(curve: IVCurve) -> None:
    m = iv_metrics(curve)
    if not m.has_ndr:
        console.print("[yellow]No negative differential resistance in this sweep.[/]")
        return
    table = Table(title="I-V figures of merit")
    table.add_column("Quantity")
    table.add_column("Value", justify="right")
    table.add_row("Peak (V, I)", f"{m.peak_bias:.4g} eV, {m.peak_current:.4e}")
    table.add_row("Valley (V, I)", f"{m.valley_bias:.4g} eV, {m.valley_current:.4e}")
    table.add_row("Peak-to-valley ratio", f"{m.peak_to_valley:.4g}")
    table.add_row("Steepest negative slope", f"{m.steepest_negative_slope:.4e}")
    table.add_row("NDR intervals", ", ".join(f"[{a:.3g}, {b:.3g}]" for a, b in m.ndr_intervals))
    console.print(table)


@app.command()
def invert(
    config: Optional[str] = CONFIG_OPTION,
    out: str = typer.Option("invert_results", "--out", "-o", help="Output folder"),
    seed: Optional[int] = typer.Option(None, "--seed", "-s", min=0, help="Override invert.seed"),
    starts: Optional[int] = typer.Option(None, "--starts", min=1, help="Override invert.starts"),
    iterations: Optional[int] = typer.Option(None, "--iterations", min=0, help="Override invert.iterations"),
    workers: int = typer.Option(DEFAULT_WORKERS, "--workers", "-w", min=1, help="Parallel workers"),
):
    """Fit barriers and Fermi level to the invert.targets I-V points."""
    with _exit_codes():
        cfg = load_config(config)
        obs = cfg.observations()
        if obs is None:
            raise ConfigError("at least one V:I target is required", "invert.targets")
        inv = cfg.invert
        seed = inv.seed if seed is None else seed
        starts = starts or inv.starts
        iterations = inv.iterations if iterations is None else iterations
        device = cfg.device()

        console.print(f"[cyan]Fitting {obs.count} targets from {starts} starts with {workers} workers...[/]")
        with Progress(TextColumn("[bold blue]{task.fields[fn]}"), BarColumn(), MofNCompleteColumn(),
                      console=console) as progress:
            task = progress.add_task("Optimising...", total=starts, fn="Starts")

            def advance(record):
                progress.update(task, advance=1, fn=f"Start {record.index}")

            result = multi_start(obs, starts, inv.bounds, seed, iterations, inv.hyper, device, cfg.grids,
                                 cfg.design_vector().sharpness, workers, advance)

        _write_invert(out, result, obs, device, cfg)

    failed = result.diagnostics["failed_starts"]
    if failed:
        console.print(f"\n[red]Failed: {failed} starts[/]")
        for err in result.diagnostics["failure_messages"][:5]:
            console.print(f"  [dim]{err}[/]")
    console.print(f"[bold green]✓[/] Best loss {result.best_loss:.6e} from start {result.start_index}; "
                  f"results in {out}/")


def _write_invert(out_dir: str, result, obs, device, cfg: RunConfig) -> None:
    os.makedirs(out_dir, exist_ok=True)
    best = result.best_params
    write_csv(os.path.join(out_dir, "result.csv"),
              list(PARAMETER_NAMES) + ["loss", "seed", "start_index"],
              [list(best.to_array()) + [result.best_loss, result.seed, result.start_index]])
    write_csv(os.path.join(out_dir, "history.csv"), ["iteration", "start", "loss"],
              ((it, record.index, value)
               for record in result.starts for it, value in enumerate(record.loss_history)))
    fitted = predicted_currents(best, obs.v_targets, device, cfg.grids)
    write_csv(os.path.join(out_dir, "fit_iv.csv"), ["bias_ev", "target_current", "fitted_current"],
              zip(obs.v_targets, obs.i_targets, fitted))


@app.command()
def gradcheck(
    config: Optional[str] = CONFIG_OPTION,
    step: float = typer.Option(1e-5, "--step", help="Relative central-difference step"),
):
    """Check the forward-mode loss gradient against finite differences."""
    with _exit_codes():
        cfg = load_config(config)
        params = cfg.design_vector()
        obs = cfg.observations() or zero_current_observations(params, cfg.grids)
        check = gradient_check(params, obs, step, cfg.device(), cfg.grids)

    table = Table(title=f"Loss gradient at {obs.count} targets")
    table.add_column("Parameter")
    table.add_column("Forward mode", justify="right")
    table.add_column("Finite difference", justify="right")
    table.add_column("Relative error", justify="right")
    for name, g, fd, err in zip(PARAMETER_NAMES, check.forward, check.finite_difference,
                                check.relative_error):
        style = "green" if err < check.tolerance else "red"
        table.add_row(name, f"{g:.10e}", f"{fd:.10e}", f"[{style}]{err:.3e}[/]")
    console.print(table)

    if not check.passed:
        console.print(f"[red]Gradient check failed: max relative error "
                      f"{float(np.max(check.relative_error)):.3e} >= {check.tolerance:g}[/]")
        raise typer.Exit(EXIT_NUMERICAL)
    console.print("[bold green]✓[/] Gradient check passed")


def main(argv: Optional[List[str]] = None) -> int:
    """Console entry point; usage errors exit with 1 instead of click's 2."""
    try:
        code = app(args=argv, prog_name="qtbmad", standalone_mode=False)
    except click.exceptions.UsageError as e:
        e.show()
        return EXIT_USAGE
    except click.exceptions.Abort:
        return EXIT_USAGE
    return code if isinstance(code, int) else 0


if __name__ == "__main__":
    sys.exit(main())
