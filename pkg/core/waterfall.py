"""
Waterfall matrix data model and file formats
Time x distance amplitude grid (rows = time, columns = fiber channels) shared by every stage
"""

import csv
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

logger = logging.getLogger("Waterfall")

DASW_MAGIC = b"DASW"
DASW_VERSION = 1
DASW_HEADER = struct.Struct("<4sHIIdddd")
GAUGE_TRAILER = struct.Struct("<4sd")
GAUGE_TAG = b"GLEN"

FORMATS = ("binary", "csv")

PathLike = Union[str, Path]


class WaterfallFormatError(ValueError):
    """Malformed waterfall file"""


@dataclass(frozen=True, eq=False)
class WaterfallMatrix:
    """Immutable waterfall diagram with sampling metadata"""
    values: np.ndarray
    dt: float
    dx: float
    t0: float = 0.0
    x0: float = 0.0
    gauge_length_m: Optional[float] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"waterfall values must be 2-D, got {values.ndim}-D")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"empty matrix {values.shape}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not (np.isfinite(self.dx) and self.dx > 0):
            raise ValueError(f"dx must be positive, got {self.dx}")
        if not (np.isfinite(self.t0) and np.isfinite(self.x0)):
            raise ValueError("t0/x0 must be finite")
        if self.gauge_length_m is not None and not self.gauge_length_m > 0:
            raise ValueError(f"gauge length must be positive, got {self.gauge_length_m}")
        if not np.all(np.isfinite(values)):
            raise ValueError("non-finite value in waterfall")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "x0", float(self.x0))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple:
        return self.values.shape

    def time_of_row(self, row: float) -> float:
        return self.t0 + row * self.dt

    def position_of_col(self, col: float) -> float:
        return self.x0 + col * self.dx

    def with_values(self, values: np.ndarray) -> "WaterfallMatrix":
        """Same sampling metadata, new amplitudes"""
        return WaterfallMatrix(values, self.dt, self.dx, self.t0, self.x0, self.gauge_length_m)

    def metadata(self) -> dict:
        meta = {"dt": self.dt, "dx": self.dx, "t0": self.t0, "x0": self.x0}
        if self.gauge_length_m is not None:
            meta["gauge_length_m"] = self.gauge_length_m
        return meta


@dataclass(frozen=True)
class WindowSelector:
    """Half-open row/column window [start, end)"""
    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self):
        if not 0 <= self.row_start < self.row_end:
            raise ValueError(f"invalid row window [{self.row_start}, {self.row_end})")
        if not 0 <= self.col_start < self.col_end:
            raise ValueError(f"invalid column window [{self.col_start}, {self.col_end})")

    @classmethod
    def full(cls, m: WaterfallMatrix) -> "WindowSelector":
        return cls(0, m.m, 0, m.n)

    def fits(self, rows: int, cols: int) -> bool:
        return self.row_end <= rows and self.col_end <= cols

    def then(self, inner: "WindowSelector") -> "WindowSelector":
        """Window equivalent to cropping by self and then by inner (inner is relative to self)"""
        if not inner.fits(self.row_end - self.row_start, self.col_end - self.col_start):
            raise ValueError("inner window exceeds outer window")
        return WindowSelector(
            self.row_start + inner.row_start,
            self.row_start + inner.row_end,
            self.col_start + inner.col_start,
            self.col_start + inner.col_end,
        )


def crop(m: WaterfallMatrix, w: WindowSelector) -> WaterfallMatrix:
    """Sub-matrix with t0/x0 shifted to the window origin"""
    if not w.fits(m.m, m.n):
        raise ValueError(f"window {w} out of bounds for matrix {m.m}x{m.n}")
    return WaterfallMatrix(
        m.values[w.row_start:w.row_end, w.col_start:w.col_end],
        m.dt,
        m.dx,
        m.time_of_row(w.row_start),
        m.position_of_col(w.col_start),
        m.gauge_length_m,
    )


def decimate_time(m: WaterfallMatrix, factor: int, reducer: str = "mean") -> WaterfallMatrix:
    """Reduce consecutive blocks of `factor` rows to one row (trailing partial block dropped)"""
    if factor < 1:
        raise ValueError(f"decimation factor must be >= 1, got {factor}")
    if factor > m.m:
        raise ValueError(f"decimation factor {factor} exceeds row count {m.m}")
    if reducer not in ("mean", "max"):
        raise ValueError(f"unknown reducer {reducer!r}")

    rows = m.m // factor
    blocks = m.values[: rows * factor].reshape(rows, factor, m.n)
    reduced = blocks.mean(axis=1) if reducer == "mean" else blocks.max(axis=1)
    return WaterfallMatrix(reduced, m.dt * factor, m.dx, m.t0, m.x0, m.gauge_length_m)


def _resolve_format(path: Path, format: Optional[str]) -> str:
    if format is None:
        return "csv" if path.suffix.lower() == ".csv" else "binary"
    if format not in FORMATS:
        raise ValueError(f"unknown waterfall format {format!r}")
    return format


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def encode_dasw(m: WaterfallMatrix) -> bytes:
    """Serialize to DASW v1 bytes"""
    payload = m.values.astype("<f4")
    if not np.all(np.isfinite(payload)):
        raise ValueError("values overflow 32-bit float range")
    parts = [
        DASW_HEADER.pack(DASW_MAGIC, DASW_VERSION, m.m, m.n, m.dt, m.dx, m.t0, m.x0),
        payload.tobytes(order="C"),
    ]
    if m.gauge_length_m is not None:
        parts.append(GAUGE_TRAILER.pack(GAUGE_TAG, m.gauge_length_m))
    return b"".join(parts)


def decode_dasw(blob: bytes) -> WaterfallMatrix:
    """Parse DASW v1 bytes"""
    if len(blob) < 4 or blob[:4] != DASW_MAGIC:
        raise WaterfallFormatError("bad magic")
    if len(blob) < DASW_HEADER.size:
        raise WaterfallFormatError("truncated header")

    _, version, rows, cols, dt, dx, t0, x0 = DASW_HEADER.unpack_from(blob, 0)
    if version != DASW_VERSION:
        raise WaterfallFormatError(f"unsupported version {version}")
    if rows < 1 or cols < 1:
        raise WaterfallFormatError(f"empty matrix {rows}x{cols}")

    payload_end = DASW_HEADER.size + rows * cols * 4
    if len(blob) < payload_end:
        raise WaterfallFormatError(f"truncated payload: expected {rows * cols} values")

    gauge = None
    trailer = blob[payload_end:]
    if trailer:
        if len(trailer) != GAUGE_TRAILER.size or trailer[:4] != GAUGE_TAG:
            raise WaterfallFormatError(f"{len(trailer)} trailing bytes after payload")
        gauge = GAUGE_TRAILER.unpack(trailer)[1]

    values = np.frombuffer(blob, dtype="<f4", count=rows * cols, offset=DASW_HEADER.size)
    if not np.all(np.isfinite(values)):
        raise WaterfallFormatError("non-finite value")
    try:
        return WaterfallMatrix(values.reshape(rows, cols).astype(np.float64), dt, dx, t0, x0, gauge)
    except ValueError as e:
        raise WaterfallFormatError(str(e))


def encode_csv(m: WaterfallMatrix) -> str:
    """CSV body: one line per row, shortest round-trip decimal repr"""
    return "".join(",".join(repr(float(v)) for v in row) + "\n" for row in m.values)


def _read_csv(path: Path) -> WaterfallMatrix:
    meta_path = sidecar_path(path)
    if not meta_path.exists():
        raise WaterfallFormatError(f"missing metadata sidecar: {meta_path}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as e:
        raise WaterfallFormatError(f"invalid sidecar JSON: {e}")
    missing = [k for k in ("dt", "dx", "t0", "x0") if k not in meta]
    if missing:
        raise WaterfallFormatError(f"sidecar missing keys: {missing}")

    rows = []
    with open(path, newline="") as f:
        for line_no, record in enumerate(csv.reader(f), start=1):
            if not record:
                continue
            try:
                row = [float(cell) for cell in record]
            except ValueError:
                raise WaterfallFormatError(f"invalid number on line {line_no}")
            if rows and len(row) != len(rows[0]):
                raise WaterfallFormatError(
                    f"inconsistent CSV row lengths: line {line_no} has {len(row)} values, expected {len(rows[0])}"
                )
            rows.append(row)
    if not rows:
        raise WaterfallFormatError("empty matrix")

    values = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise WaterfallFormatError("non-finite value")
    try:
        return WaterfallMatrix(values, meta["dt"], meta["dx"], meta["t0"], meta["x0"], meta.get("gauge_length_m"))
    except ValueError as e:
        raise WaterfallFormatError(str(e))


def load_waterfall(path: PathLike, format: Optional[str] = None) -> WaterfallMatrix:
    """Load a waterfall matrix; format inferred from the suffix when omitted"""
    path = Path(path)
    fmt = _resolve_format(path, format)
    if not path.exists():
        raise FileNotFoundError(f"Waterfall file not found: {path}")

    m = _read_csv(path) if fmt == "csv" else decode_dasw(path.read_bytes())
    logger.debug(f"Loaded {fmt} waterfall {path} ({m.m}x{m.n}, dt={m.dt}, dx={m.dx})")
    return m


def save_waterfall(m: WaterfallMatrix, path: PathLike, format: Optional[str] = None) -> None:
    """Write a waterfall matrix (CSV gets a <path>.meta.json sidecar)"""
    path = Path(path)
    fmt = _resolve_format(path, format)
    if fmt == "csv":
        path.write_text(encode_csv(m))
        meta = {"schema_version": 1, **m.metadata()}
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    else:
        path.write_bytes(encode_dasw(m))
    logger.debug(f"Saved {fmt} waterfall {path} ({m.m}x{m.n})")
