"""Frame and table persistence.

A frame is a 16-bit binary PGM (``P5``, maxval 65535, big-endian) plus a
sibling ``.meta`` text file of ``key = value`` lines holding geometry,
metadata (JSON-encoded values) and a SHA-256 of the pixel payload.

Other pixel formats can be plugged in with :func:`register_reader`; the
sidecar is still required for geometry.
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import FrameScalingError, IntegrityError
from .kernel import ModeGrid
from .simulator import Frame

MAXVAL = 65535


def pgm_header(width: int, height: int) -> bytes:
    return f"P5\n{width} {height}\n{MAXVAL}\n".encode("ascii")


def _payload(counts: np.ndarray) -> bytes:
    if counts.dtype.kind == "f" and not np.array_equal(counts, np.rint(counts)):
        raise FrameScalingError("analog (non-integer) counts cannot be stored as PGM")
    if counts.size and (counts.min() < 0 or counts.max() > MAXVAL):
        raise FrameScalingError(
            f"counts span [{counts.min()}, {counts.max()}], outside 0..{MAXVAL}")
    return np.ascontiguousarray(counts, dtype=">u2").tobytes()


def write_pgm(path, counts: np.ndarray) -> bytes:
    counts = np.asarray(counts)
    payload = _payload(counts)
    h, w = counts.shape
    Path(path).write_bytes(pgm_header(w, h) + payload)
    return payload


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    pos += 1    # single whitespace before raster
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != b"P5" or maxval != MAXVAL:
        raise IntegrityError(f"{path}: not a 16-bit binary PGM")
    raster = data[pos:]
    if len(raster) != 2 * w * h:
        raise IntegrityError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=">u2").reshape(h, w)


READERS: dict[str, Callable[[Path], np.ndarray]] = {".pgm": read_pgm}


def register_reader(suffix: str, reader: Callable[[Path], np.ndarray]) -> None:
    """Hook for vendor/FITS converters: ``reader(path) -> 2-D counts array``."""
    READERS[suffix.lower()] = reader


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def write_frame(path, frame: Frame, config_hash: str | None = None) -> None:
    path = Path(path)
    payload = write_pgm(path, frame.counts)
    g = frame.grid
    lines = {
        "format": "pgm16",
        "dtype": str(frame.counts.dtype),
        "data_sha256": hashlib.sha256(payload).hexdigest(),
        "config_hash": config_hash or frame.metadata.get("config_hash", ""),
        "block_rows": frame.block_shape[0],
        "block_cols": frame.block_shape[1],
        "symmetry_center_row": repr(float(frame.symmetry_center[0])),
        "symmetry_center_col": repr(float(frame.symmetry_center[1])),
        "grid_nx": g.n_x,
        "grid_ny": g.n_y,
        "grid_dq_per_m": repr(g.dq),
        "focal_length_m": repr(g.focal_f),
        "pixel_pitch_m": repr(g.pixel_pitch),
        "wavelength_m": repr(g.wavelength),
    }
    text = "".join(f"{k} = {v}\n" for k, v in lines.items())
    text += "".join(f"meta.{k} = {json.dumps(v)}\n" for k, v in frame.metadata.items())
    sidecar_path(path).write_text(text)


def read_sidecar(path) -> dict[str, str]:
    out = {}
    for line in sidecar_path(path).read_text().splitlines():
        if line.strip():
            k, v = line.split("=", 1)
            out[k.strip()] = v.strip()
    return out


def read_frame(path) -> Frame:
    path = Path(path)
    reader = READERS.get(path.suffix.lower())
    if reader is None:
        raise IntegrityError(f"no reader registered for {path.suffix!r}")
    side = sidecar_path(path)
    if not side.exists():
        raise IntegrityError(f"missing sidecar {side}")
    meta = read_sidecar(path)
    counts = reader(path)
    if meta.get("format") == "pgm16":
        digest = hashlib.sha256(np.ascontiguousarray(counts, dtype=">u2").tobytes()).hexdigest()
        if digest != meta.get("data_sha256"):
            raise IntegrityError(f"{path}: pixel data does not match sidecar hash")
    counts = counts.astype(meta.get("dtype", "int64"))
    grid = ModeGrid(int(meta["grid_nx"]), int(meta["grid_ny"]), float(meta["grid_dq_per_m"]),
                    float(meta["focal_length_m"]), float(meta["pixel_pitch_m"]),
                    float(meta["wavelength_m"]))
    extra = {k[5:]: json.loads(v) for k, v in meta.items() if k.startswith("meta.")}
    return Frame(counts, grid,
                 (float(meta["symmetry_center_row"]), float(meta["symmetry_center_col"])),
                 (int(meta["block_rows"]), int(meta["block_cols"])), extra)


def frame_paths(directory) -> list[Path]:
    d = Path(directory)
    return sorted(p for p in d.iterdir() if p.suffix.lower() in READERS)


# --- tables -------------------------------------------------------------------

def _cell(v) -> str:
    # numpy scalars are written as plain Python numbers
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(columns)
        for row in rows:
            wr.writerow([_cell(row.get(c, "")) for c in columns])


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def column(rows: Iterable[dict], name: str) -> np.ndarray:
    vals = []
    for r in rows:
        v = r[name]
        vals.append(float(v) if v not in ("", None) else np.nan)
    return np.asarray(vals)
