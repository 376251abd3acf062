"""File formats: binary PGM frames, telemetry CSV and key-value config files."""

from __future__ import annotations

import configparser
import csv
import math
import re
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

TELEMETRY_COLUMNS = ("t", "px", "py", "pz", "vx", "vy", "vz",
                     "phi", "theta", "psi", "p", "q", "r", "rho")
CONFIG_SECTION = "scenario"

_PGM_TOKEN = re.compile(rb"(#[^\n]*\n)|(\s+)|(\S+)")


def write_pgm(path, img: np.ndarray) -> Path:
    """Write an 8-bit grayscale image as binary PGM (P5)."""
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError(f"PGM frames must be 2-D uint8, got {img.dtype} {img.shape}")
    path = Path(path)
    h, w = img.shape
    try:
        with open(path, "wb") as f:
            f.write(b"P5\n%d %d\n255\n" % (w, h))
            f.write(np.ascontiguousarray(img).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write frame {path}: {exc}") from exc
    return path


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM (P5) with maxval <= 255; header comments are skipped."""
    path = Path(path)
    data = path.read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = _PGM_TOKEN.match(data, pos)
        if m is None:
            raise ValueError(f"{path}: truncated PGM header")
        pos = m.end()
        if m.group(3):
            tokens.append(m.group(3))
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    w, h, maxval = (int(t) for t in tokens[1:])
    if not 0 < maxval <= 255:
        raise ValueError(f"{path}: only 8-bit PGM is supported (maxval {maxval})")
    # a single whitespace byte separates maxval from the raster
    if len(data) < pos + 1 + w * h:
        raise ValueError(f"{path}: raster shorter than {w}x{h}")
    pix = np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1)
    return pix.reshape(h, w).copy()


@dataclass(frozen=True)
class TelemetryRecord:
    """One telemetry row: world position/velocity, attitude, camera rates and range."""

    t: float
    px: float
    py: float
    pz: float
    vx: float
    vy: float
    vz: float
    phi: float
    theta: float
    psi: float
    p: float
    q: float
    r: float
    rho: float


def write_telemetry(path, records: Iterable[TelemetryRecord]) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as f:
            wr = csv.writer(f)
            wr.writerow(TELEMETRY_COLUMNS)
            for rec in records:
                wr.writerow([repr(float(v)) for v in astuple(rec)])
    except OSError as exc:
        raise OSError(f"cannot write telemetry {path}: {exc}") from exc
    return path


def read_telemetry(path) -> list[TelemetryRecord]:
    path = Path(path)
    with open(path, newline="") as f:
        rd = csv.DictReader(f)
        missing = set(TELEMETRY_COLUMNS) - set(rd.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: telemetry lacks columns {sorted(missing)}")
        return [TelemetryRecord(*(float(row[c]) for c in TELEMETRY_COLUMNS)) for row in rd]


def read_config(path) -> dict[str, str]:
    """Key-value config: ``key = value`` lines, ``#`` comments, optional ``[scenario]`` header."""
    path = Path(path)
    text = path.read_text()
    if not re.search(r"^\s*\[", text, flags=re.M):
        text = f"[{CONFIG_SECTION}]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                       interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if not parser.has_section(CONFIG_SECTION):
        raise ValueError(f"{path}: missing [{CONFIG_SECTION}] section")
    return {k: v.strip() for k, v in parser.items(CONFIG_SECTION)}


def write_config(path, values: Mapping[str, object]) -> Path:
    path = Path(path)
    lines = [f"[{CONFIG_SECTION}]"]
    for k, v in values.items():
        if v is None:
            continue
        if isinstance(v, float):
            v = repr(v) if math.isfinite(v) else str(v)
        lines.append(f"{k} = {v}")
    path.write_text("\n".join(lines) + "\n")
    return path
