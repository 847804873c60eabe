# src/common/serialization.py
import os
import csv
import json
import logging
import numpy as np

logger = logging.getLogger(__name__)

# 17 significant digits round-trips every float64 exactly
FLOAT_FMT = "%.17g"


def _convert_numpy(obj):
    """Recursively convert numpy scalars/arrays to plain Python for JSON."""
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_convert_numpy(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): _convert_numpy(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_convert_numpy(v) for v in obj]
    return obj


def to_builtin(obj):
    """Plain-Python copy of a (possibly numpy-laden) structure."""
    return _convert_numpy(obj)


def dumps(obj):
    return json.dumps(to_builtin(obj), sort_keys=True, indent=2)


def format_float(x):
    return FLOAT_FMT % float(x)


def dump_matrices(path, matrices, header=None):
    """
    Write named matrices to a plain-text file.

    Layout: optional '# ' header lines, then per matrix a line
    'matrix <name> <rows> <cols>' followed by <rows> whitespace-separated rows.
    """
    logger.debug(f"Writing {len(matrices)} matrices to {path}")
    try:
        with open(path, "w") as fh:
            for line in (header or []):
                fh.write(f"# {line}\n")
            for name, mat in matrices.items():
                mat = np.atleast_2d(np.asarray(mat, dtype=float))
                rows, cols = mat.shape
                fh.write(f"matrix {name} {rows} {cols}\n")
                for row in mat:
                    fh.write(" ".join(format_float(v) for v in row) + "\n")
    except OSError as e:
        raise OSError(f"failed writing matrix file {path}: {e}") from e


def load_matrices(path):
    """Parse a file written by dump_matrices. Returns (matrices, header_lines)."""
    matrices = {}
    header = []
    try:
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
    except OSError as e:
        raise OSError(f"failed reading matrix file {path}: {e}") from e

    i = 0
    while i < len(lines):
        line = lines[i].strip()
        i += 1
        if not line:
            continue
        if line.startswith("#"):
            header.append(line[1:].strip())
            continue
        parts = line.split()
        if parts[0] != "matrix" or len(parts) != 4:
            raise ValueError(f"{path}:{i}: expected 'matrix <name> <rows> <cols>', got {line!r}")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        data = []
        for _ in range(rows):
            row = [float(v) for v in lines[i].split()]
            i += 1
            if len(row) != cols:
                raise ValueError(f"{path}:{i}: matrix {name} expects {cols} columns, got {len(row)}")
            data.append(row)
        matrices[name] = np.array(data, dtype=float).reshape(rows, cols)
    logger.debug(f"Loaded matrices {list(matrices)} from {path}")
    return matrices, header


def write_csv(path, fieldnames, rows, meta=None):
    """
    Comma-delimited file with a mandatory header row.

    `meta` (dict) goes on a leading '# k=v ...' comment line so artifacts carry the
    config hash and seed; read_csv skips it.
    """
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    try:
        with open(path, "w", newline="") as fh:
            if meta:
                fh.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(fieldnames)
            for row in rows:
                writer.writerow([format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    except OSError as e:
        raise OSError(f"failed writing {path}: {e}") from e
    logger.debug(f"Wrote {path}")


def read_csv(path):
    """Returns (meta dict, header list, rows as list of string lists)."""
    meta = {}
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            for token in line[1:].split():
                if "=" in token:
                    k, v = token.split("=", 1)
                    meta[k] = v
        else:
            body.append(line)
    reader = csv.reader(body)
    rows = list(reader)
    if not rows:
        return meta, [], []
    return meta, rows[0], rows[1:]
