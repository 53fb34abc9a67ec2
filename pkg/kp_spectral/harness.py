"""Run orchestration: initial data, integration, diagnostics and persisted artifacts."""
import json
import logging
from dataclasses import asdict, dataclass, field
from datetime import datetime
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import fft as sp_fft

from .config import RunConfig, Settings, load_settings
from .diagnostics import DEFAULT_PEAK_THRESHOLD, DiagnosticsMonitor, DiagnosticsRecord, StopReason, fit_lumps, \
    gradient_ratio, mass
from .errors import MemoryBudgetError, UndefinedDeltaError
from .integrator import StepState, integrate
from .model import build_initial_data
from .spectral import Field, to_physical
from .storage import SNAPSHOT_DIR, SUMMARY_FILE, TIMESERIES_FILE, load_snapshot, save_snapshot, snapshot_name, \
    write_timeseries

logger = logging.getLogger("kp_spectral.harness")

RUN_LOG = "run.log"
LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


@dataclass
class RunResult:
    """Outcome of ``run_experiment``; snapshots are (t, path) of files already written."""
    records: List[DiagnosticsRecord]
    snapshots: List[Tuple[float, Path]]
    stop: Optional[StopReason]
    wall_time: float
    final: Field
    output_dir: Path
    config: Optional[RunConfig] = field(default=None, repr=False)

    @property
    def final_time(self) -> float:
        return self.records[-1].t if self.records else 0.0

    def summary(self) -> Dict[str, Any]:
        last = self.records[-1] if self.records else None
        return {
            "stop": None if self.stop is None else {"kind": self.stop.kind.value, "t_stop": self.stop.t_stop},
            "wall_time": self.wall_time,
            "records": len(self.records),
            "last_record": None if last is None else last.as_row(),
            "final_gradient_ratio": gradient_ratio(self.final),
            "snapshots": [{"t": t, "path": str(p)} for t, p in self.snapshots],
            "config": None if self.config is None else self.config.as_dict(),
        }


def _run_dir(cfg: RunConfig, settings: Settings) -> Path:
    if cfg.output_dir is not None:
        return cfg.output_dir
    stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path(settings.output_dir) / f"{cfg.preset or 'run'}-{stamp}"


def _attach_run_log(run_dir: Path) -> RotatingFileHandler:
    handler = RotatingFileHandler(run_dir / RUN_LOG, maxBytes=1024 * 1024, backupCount=3)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler.setLevel(logging.DEBUG)
    package_logger = logging.getLogger("kp_spectral")
    package_logger.addHandler(handler)
    if package_logger.level == logging.NOTSET or package_logger.level > logging.INFO:
        package_logger.setLevel(logging.INFO)
    return handler


def snapshot_steps(cfg: RunConfig) -> Dict[int, List[float]]:
    """Requested snapshot times grouped by their nearest step index."""
    steps: Dict[int, List[float]] = {}
    for t in cfg.snapshot_times:
        k = min(cfg.N_t, max(0, int(round(t / cfg.dt))))
        steps.setdefault(k, []).append(t)
    return steps


def check_memory(cfg: RunConfig, settings: Settings) -> None:
    """
    Raises:
        MemoryBudgetError: the run's estimate exceeds KP_MEMORY_BUDGET_MB
    """
    estimate = cfg.memory_estimate_mb()
    if estimate > settings.memory_budget_mb:
        half = max(2, cfg.N_x // 2), max(2, cfg.N_y // 2)
        raise MemoryBudgetError(
            f"Grid {cfg.N_x}x{cfg.N_y} needs about {estimate:.0f} MB, budget is "
            f"{settings.memory_budget_mb:.0f} MB. Reduce the resolution (e.g. --nx {half[0]} --ny {half[1]}, "
            f"or a '-half' preset) or raise KP_MEMORY_BUDGET_MB."
        )


def run_experiment(cfg: RunConfig, settings: Optional[Settings] = None) -> RunResult:
    """
    Execute one configured run and persist its artifacts.

    Blow-up (non-finite state) and delta above the stop threshold end the
    run early and are reported in ``RunResult.stop``; the last accepted
    state is always written as a snapshot in that case.

    Raises:
        MemoryBudgetError: memory estimate above the budget
        UndefinedDeltaError: initial data with zero mass
        OSError: output directory or files cannot be written
    """
    settings = settings or load_settings()
    check_memory(cfg, settings)

    run_dir = _run_dir(cfg, settings)
    run_dir.mkdir(parents=True, exist_ok=True)
    handler = _attach_run_log(run_dir)
    start_time = datetime.now()

    logger.info("=" * 60)
    logger.info(f"run_experiment: {cfg.preset or 'custom config'} ({cfg.params.name})")
    logger.info(f"Grid L=({cfg.L_x:g}, {cfg.L_y:g}) N=({cfg.N_x}, {cfg.N_y}); T={cfg.T:g}, N_t={cfg.N_t}, "
                f"dt={cfg.dt:.3e}, stepper={cfg.stepper}")
    logger.info(f"Output: {run_dir}")

    try:
        with sp_fft.set_workers(settings.workers):
            grid = cfg.grid
            u0 = build_initial_data(grid, cfg.initial)
            if mass(u0) == 0:
                raise UndefinedDeltaError("Initial data has zero mass; relative mass conservation is undefined")

            targets = snapshot_steps(cfg)
            snapshots: List[Tuple[float, Path]] = []

            def capture(state: StepState) -> None:
                if not cfg.write_snapshots or state.step_index not in targets:
                    return
                path = save_snapshot(to_physical(state.u_hat), state.t, run_dir / SNAPSHOT_DIR / snapshot_name(state.t))
                snapshots.append((state.t, path))

            monitor = DiagnosticsMonitor(cfg.params, cfg.stop_threshold, cfg.heavy_every)
            outcome = integrate(
                u0, cfg.T, cfg.N_t, cfg.params,
                callbacks=(monitor,), cadence=cfg.cadence, stepper=cfg.stepper, on_step=capture,
            )

            final = to_physical(outcome.state.u_hat)
            if outcome.stop is not None and not any(t == outcome.state.t for t, _ in snapshots):
                path = save_snapshot(final, outcome.state.t, run_dir / SNAPSHOT_DIR / snapshot_name(outcome.state.t))
                snapshots.append((outcome.state.t, path))

        elapsed = (datetime.now() - start_time).total_seconds()
        result = RunResult(outcome.records, snapshots, outcome.stop, elapsed, final, run_dir, cfg)

        write_timeseries(result.records, run_dir / TIMESERIES_FILE)
        with open(run_dir / SUMMARY_FILE, "w") as fh:
            json.dump(result.summary(), fh, indent=4)

        last = result.records[-1]
        logger.info(f"run_experiment completed in {elapsed:.3f}s")
        if result.stop is not None:
            logger.info(f"Stop: {result.stop.kind.value} at t={result.stop.t_stop:.6g}")
        logger.info(f"Final t={last.t:.6g} delta={last.delta:.3e} linf={last.linf:.6g} l2_uy={last.l2_uy:.6g}")
        logger.info(f"Snapshots written: {len(snapshots)}")
        logger.info("=" * 60)
        return result

    except Exception as e:
        elapsed = (datetime.now() - start_time).total_seconds()
        logger.error(f"run_experiment aborted after {elapsed:.3f}s: {e}", exc_info=True)
        logger.info("=" * 60)
        raise
    finally:
        logging.getLogger("kp_spectral").removeHandler(handler)
        handler.close()


def fit_snapshot(path: Path, rel_threshold: float = DEFAULT_PEAK_THRESHOLD, count: Optional[int] = None) -> Dict[str, Any]:
    """
    Peak finding and single-lump fits on a stored snapshot.

    Returns:
        Report with the snapshot time, one entry per fitted peak and the
        largest remaining |residual| after subtracting every fitted lump
    """
    f, t = load_snapshot(path)
    fits, residual = fit_lumps(f, rel_threshold, count)
    return {
        "snapshot": str(path),
        "t": t,
        "peaks": [asdict(fit) for fit in fits],
        "residual_max": float(np.max(np.abs(residual.values()))),
    }
