"""Run artifacts: binary field snapshots, diagnostics tables and plot-ready exports.

Snapshot layout (little endian):

    b"KPLB1" | N_x, N_y (uint64) | L_x, L_y, t (float64) | N_x * N_y float64, row-major [x, y]
"""
import logging
import re
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from .diagnostics import DiagnosticsRecord, is_resolved
from .errors import ConfigurationError, SnapshotFormatError
from .spectral import Field, make_grid

logger = logging.getLogger("kp_spectral.storage")

MAGIC = b"KPLB1"
HEADER = struct.Struct("<QQddd")
PAYLOAD_DTYPE = np.dtype("<f8")

TIMESERIES_COLUMNS = ["t", "mass", "delta", "linf", "l2_uy", "energy", "I_transverse", "fourier_decay"]
TIMESERIES_FILE = "timeseries.csv"
SUMMARY_FILE = "summary.json"
SNAPSHOT_DIR = "snapshots"


# ============================================
# Snapshots
# ============================================

def snapshot_name(t: float) -> str:
    return f"t_{t:.6f}.kplb"


def save_snapshot(f: Field, t: float, path: Path) -> Path:
    """Write the physical values of ``f`` at time ``t``; parent directories are created."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid = f.grid
    header = MAGIC + HEADER.pack(grid.N_x, grid.N_y, grid.L_x, grid.L_y, float(t))
    payload = np.ascontiguousarray(f.values(), dtype=PAYLOAD_DTYPE).tobytes(order="C")
    path.write_bytes(header + payload)
    logger.debug(f"Saved snapshot t={t:.6g} to {path}")
    return path


def load_snapshot(path: Path) -> Tuple[Field, float]:
    """
    Read a snapshot written by ``save_snapshot``.

    Raises:
        SnapshotFormatError: wrong magic, truncated header, invalid grid or payload size mismatch
    """
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise SnapshotFormatError(f"{path}: not a snapshot file (bad magic {data[:len(MAGIC)]!r})")
    offset = len(MAGIC) + HEADER.size
    if len(data) < offset:
        raise SnapshotFormatError(f"{path}: truncated header ({len(data)} bytes)")
    N_x, N_y, L_x, L_y, t = HEADER.unpack_from(data, len(MAGIC))
    try:
        grid = make_grid(L_x, L_y, N_x, N_y)
    except ConfigurationError as e:
        raise SnapshotFormatError(f"{path}: invalid grid in header: {e}") from e
    expected = N_x * N_y * PAYLOAD_DTYPE.itemsize
    if len(data) - offset != expected:
        raise SnapshotFormatError(
            f"{path}: payload has {len(data) - offset} bytes, header declares {N_x}x{N_y} ({expected} bytes)"
        )
    values = np.frombuffer(data, dtype=PAYLOAD_DTYPE, offset=offset).reshape(N_x, N_y).astype(np.float64)
    return Field.from_physical(grid, values), t


def list_snapshots(run_dir: Path) -> List[Path]:
    """Snapshot files of a run ordered by time."""
    files = list((Path(run_dir) / SNAPSHOT_DIR).glob("t_*.kplb"))
    return sorted(files, key=lambda p: float(re.sub(r"^t_|\.kplb$", "", p.name)))


# ============================================
# Diagnostics tables
# ============================================

def records_frame(records: Iterable[DiagnosticsRecord]) -> pd.DataFrame:
    """One row per record with the time-series columns; skipped heavy values are NaN."""
    return pd.DataFrame([r.as_row() for r in records], columns=TIMESERIES_COLUMNS)


def write_timeseries(records: Iterable[DiagnosticsRecord], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    records_frame(records).to_csv(path, index=False, float_format="%.17g")
    return path


def read_timeseries(path: Path) -> pd.DataFrame:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in TIMESERIES_COLUMNS if c not in frame.columns]
    if missing:
        raise ConfigurationError(f"{path}: missing time-series columns {missing}")
    return frame


# ============================================
# Plot-ready export
# ============================================

def norms_frame(series: pd.DataFrame) -> pd.DataFrame:
    """
    linf and l2_uy normalized to 1 at t = 0, with delta and the resolution flag.

    ``resolved`` is empty on rows where fourier_decay was not computed.
    """
    first = series.iloc[0]
    frame = pd.DataFrame({
        "t": series["t"],
        "linf": series["linf"] / first["linf"] if first["linf"] else series["linf"],
        "l2_uy": series["l2_uy"] / first["l2_uy"] if first["l2_uy"] else series["l2_uy"],
        "delta": series["delta"],
    })
    frame["resolved"] = series["fourier_decay"].map(
        lambda d: pd.NA if pd.isna(d) else is_resolved(float(d))
    )
    return frame


def export_run(run_dir: Path, out_dir: Optional[Path] = None) -> Dict[str, Path]:
    """
    Emit plot-ready tables for a finished run.

    Writes norms.csv and one CSV matrix per snapshot (first row y nodes,
    first column x nodes) into ``out_dir`` (default <run_dir>/export).

    Raises:
        FileNotFoundError: the run has no timeseries.csv
    """
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "export"
    out_dir.mkdir(parents=True, exist_ok=True)
    series_path = run_dir / TIMESERIES_FILE
    if not series_path.exists():
        raise FileNotFoundError(f"No {TIMESERIES_FILE} in {run_dir}")

    written: Dict[str, Path] = {}
    norms_path = out_dir / "norms.csv"
    norms_frame(read_timeseries(series_path)).to_csv(norms_path, index=False, float_format="%.17g")
    written["norms"] = norms_path

    for snap in list_snapshots(run_dir):
        f, t = load_snapshot(snap)
        grid = f.grid
        matrix = pd.DataFrame(f.values(), index=grid.x_nodes, columns=grid.y_nodes)
        matrix.index.name = "x\\y"
        target = out_dir / snap.with_suffix(".csv").name
        matrix.to_csv(target, float_format="%.17g")
        written[snap.stem] = target

    logger.info(f"Exported {len(written)} table(s) from {run_dir} to {out_dir}")
    return written


def read_matrix(path: Path) -> pd.DataFrame:
    """Snapshot matrix written by ``export_run``: rows are x nodes, columns y nodes."""
    frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
    frame.columns = frame.columns.astype(float)
    return frame
