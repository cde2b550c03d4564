"""File formats: data matrices (CSV or SPKD binary) and key=value documents.

SPKD layout: ``b"SPKD"``, ``uint32 n``, ``uint32 d`` (little endian), then
``n*d`` little-endian float64 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"SPKD"
_HEADER = struct.Struct("<4sII")


class FormatError(ValueError):
    pass


def write_spkd(path, X) -> None:
    X = np.asarray(X, dtype="<f8")
    if X.ndim == 1:
        X = X[None, :]
    n, d = X.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, d))
        fh.write(np.ascontiguousarray(X).tobytes())


def read_spkd(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: file too short for SPKD header ({len(data)} bytes)")
    magic, n, d = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    expected = n * d * 8
    actual = len(data) - _HEADER.size
    if actual != expected:
        raise FormatError(
            f"{path}: payload length mismatch, expected {expected} bytes for {n}x{d}, got {actual}"
        )
    return np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(n, d).astype(np.float64)


def read_csv_matrix(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(v) for v in line.split(",")]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise FormatError(f"{path}:{lineno}: ragged row with {len(row)} fields, expected {width}")
            rows.append(row)
    if not rows:
        raise FormatError(f"{path}: no data rows")
    return np.array(rows, dtype=np.float64)


def read_matrix(path) -> np.ndarray:
    """Load a data matrix, detecting SPKD by its magic bytes."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_spkd(path)
    return read_csv_matrix(path)


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v)) if not np.isfinite(v) else f"{float(v):.17g}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def write_kv(path, fields: dict) -> None:
    """Write ``key=value`` lines (UTF-8, LF)."""
    lines = []
    for key, value in fields.items():
        text = format_value(value)
        if "\n" in text:
            raise ValueError(f"value for {key!r} spans lines")
        lines.append(f"{key}={text}\n")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(lines)


def read_kv(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                key, _, value = line.partition("=")
                out[key] = value
    return out


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) if v is not None else "" for v in row) + "\n")


def save_fitted(directory, fit) -> None:
    """Write ``fit.txt`` plus ``U_x.spkd`` and ``mean.spkd`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_kv(
        directory / "fit.txt",
        {
            "k": fit.k,
            "d": fit.d,
            "sigma2": fit.sigma2,
            "explained_fraction": fit.explained_fraction,
            "lambdas": list(fit.lambdas),
            "U_x": "U_x.spkd",
            "mean": "mean.spkd",
        },
    )
    write_spkd(directory / "U_x.spkd", fit.U_x if fit.k else np.zeros((fit.d, 0)))
    write_spkd(directory / "mean.spkd", fit.mean[None, :])


def load_fitted(directory):
    from .pca import FittedSpike

    directory = Path(directory)
    meta = read_kv(directory / "fit.txt")
    k, d = int(meta["k"]), int(meta["d"])
    lambdas = np.array([float(v) for v in meta["lambdas"].split(",")]) if k else np.zeros(0)
    U = read_spkd(directory / meta["U_x"]) if k else np.zeros((d, 0))
    mean = read_spkd(directory / meta["mean"])[0]
    return FittedSpike(
        k=k,
        U_x=U,
        lambdas=lambdas,
        sigma2=float(meta["sigma2"]),
        mean=mean,
        explained_fraction=float(meta["explained_fraction"]),
        eigvals=np.zeros(0),
    )
