"""CLI entrypoint for kp-spectral."""
import json
import logging
from pathlib import Path
from typing import Optional

import typer

from .errors import ConfigurationError, KPError, SnapshotFormatError

app = typer.Typer(
    name="kp-spectral",
    help="Pseudospectral ETDRK4 simulations of generalized KP equations",
)

EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_VERIFY_FAILED = 3


def _setup_logging() -> None:
    from .config import load_settings

    try:
        level = load_settings().log_level
    except ConfigurationError as e:
        typer.echo(f"❌ Configuration error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG)
    logging.basicConfig(level=level, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s")


def _resolve(target: str):
    """A TOML path if it exists, otherwise a preset name."""
    from .config import load_config
    from .presets import get_preset

    path = Path(target)
    if path.suffix == ".toml" or path.exists():
        return load_config(path)
    return get_preset(target)


@app.command()
def run(
    target: str = typer.Argument(..., help="Config file (.toml) or preset name"),
    nx: Optional[int] = typer.Option(None, "--nx", help="Override N_x"),
    ny: Optional[int] = typer.Option(None, "--ny", help="Override N_y"),
    nt: Optional[int] = typer.Option(None, "--nt", help="Override N_t"),
    tmax: Optional[float] = typer.Option(None, "--tmax", help="Override final time T"),
    lx: Optional[float] = typer.Option(None, "--lx", help="Override L_x"),
    ly: Optional[float] = typer.Option(None, "--ly", help="Override L_y"),
    out: Optional[Path] = typer.Option(None, "--out", help="Output directory"),
):
    """Run a configured experiment or a named preset."""
    from .config import apply_overrides
    from .harness import run_experiment

    _setup_logging()
    try:
        cfg = apply_overrides(_resolve(target), nx=nx, ny=ny, nt=nt, tmax=tmax, lx=lx, ly=ly, out=out)
        result = run_experiment(cfg)
    except (SnapshotFormatError, OSError) as e:
        typer.echo(f"❌ I/O error: {e}", err=True)
        raise typer.Exit(EXIT_IO)
    except (KPError, ValueError) as e:
        typer.echo(f"❌ Configuration error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG)

    last = result.records[-1]
    typer.echo(f"✅ Run finished in {result.wall_time:.1f}s -> {result.output_dir}")
    typer.echo(f"   t={last.t:.6g}  delta={last.delta:.3e}  linf={last.linf:.6g}  l2_uy={last.l2_uy:.6g}")
    if result.stop is not None:
        typer.echo(f"⚠️  Stopped early: {result.stop.kind.value} at t={result.stop.t_stop:.6g}")


@app.command()
def verify(
    suite: str = typer.Argument("fast", help="fast, paper-soliton, paper-perturbed, paper-blowup, "
                                             "paper-regularity, paper-residuals or all"),
    report: Optional[Path] = typer.Option(None, "--report", help="Write the JSON report here"),
    out: Optional[Path] = typer.Option(None, "--out", help="Directory for run outputs"),
):
    """Run an acceptance suite and print a JSON report."""
    from .verify import verify as run_suite

    _setup_logging()
    try:
        result = run_suite(suite, out_dir=out)
    except ConfigurationError as e:
        typer.echo(f"❌ Configuration error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG)

    text = json.dumps(result, indent=4)
    if report is not None:
        try:
            report.parent.mkdir(parents=True, exist_ok=True)
            report.write_text(text)
        except OSError as e:
            typer.echo(f"❌ I/O error: {e}", err=True)
            raise typer.Exit(EXIT_IO)
    typer.echo(text)
    for check in result["checks"]:
        mark = "✅" if check["passed"] else "❌"
        typer.echo(f"{mark} {check['name']}: {check['detail'] or check['value']}", err=True)
    if not result["passed"]:
        raise typer.Exit(EXIT_VERIFY_FAILED)


@app.command()
def fit(
    snapshot: Path = typer.Argument(..., help="Snapshot file (.kplb)"),
    threshold: float = typer.Option(0.3, "--threshold", help="Peak height relative to the maximum"),
    count: Optional[int] = typer.Option(None, "--count", help="Fit only the highest COUNT peaks"),
):
    """Find peaks in a snapshot and fit a lump to each."""
    from .harness import fit_snapshot

    _setup_logging()
    try:
        result = fit_snapshot(snapshot, threshold, count)
    except (SnapshotFormatError, OSError) as e:
        typer.echo(f"❌ I/O error: {e}", err=True)
        raise typer.Exit(EXIT_IO)
    except KPError as e:
        typer.echo(f"❌ Fit error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG)
    typer.echo(json.dumps(result, indent=4))


@app.command()
def export(
    run_dir: Path = typer.Argument(..., help="Run output directory"),
    out: Optional[Path] = typer.Option(None, "--out", help="Export directory (default <run_dir>/export)"),
):
    """Write plot-ready tables (normalized norms, snapshot matrices)."""
    from .storage import export_run

    _setup_logging()
    try:
        written = export_run(run_dir, out)
    except (SnapshotFormatError, OSError) as e:
        typer.echo(f"❌ I/O error: {e}", err=True)
        raise typer.Exit(EXIT_IO)
    except KPError as e:
        typer.echo(f"❌ Configuration error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG)
    for path in written.values():
        typer.echo(str(path))


@app.command()
def presets():
    """List the named experiments."""
    from .presets import list_presets

    for name, description in list_presets():
        typer.echo(f"{name:32s} {description}")


@app.command()
def doctor():
    """Check settings and the numerical backend."""
    import numpy as np
    import scipy
    from scipy import fft as sp_fft

    from .config import load_settings

    typer.echo("🏥 Running health check...")
    try:
        settings = load_settings()
        typer.echo("✅ Settings loaded successfully")
        typer.echo(f"   FFT workers: {settings.workers}")
        typer.echo(f"   Memory budget: {settings.memory_budget_mb:.0f} MB")
        typer.echo(f"   Output directory: {settings.output_dir}")
        typer.echo(f"   Heavy diagnostics every: {settings.heavy_every}")
        typer.echo(f"   Log level: {settings.log_level}")
        typer.echo(f"✅ numpy {np.__version__}, scipy {scipy.__version__}")

        u = np.random.default_rng(0).standard_normal((64, 32))
        with sp_fft.set_workers(settings.workers):
            err = float(np.max(np.abs(sp_fft.ifft2(sp_fft.fft2(u)).real - u)))
        if err > 1e-12:
            typer.echo(f"❌ FFT round trip error {err:.2e}", err=True)
            raise typer.Exit(EXIT_CONFIG)
        typer.echo(f"✅ FFT round trip error {err:.2e}")

        typer.echo("\n✅ All checks passed!")

    except ConfigurationError as e:
        typer.echo(f"❌ Configuration error: {e}", err=True)
        raise typer.Exit(EXIT_CONFIG)


if __name__ == "__main__":
    app()
