"""Reading and writing count matrices, rate matrices, observations and packings.

Formats
-------
* MatrixMarket ``coordinate integer general`` for sparse count matrices.
* Dense CSV (no header) for count and rate matrices.
* Sparse observation CSV: a ``# m=<m> n=<n> p=<p> seed=<seed>`` header line
  followed by 1-based ``i,j,count`` triples, one per sampled index
  (zero counts included, so the file also encodes the mask).
* Packing sets: a ``# m=<m> min_dist=<d> count=<c>`` header, then one
  hex-encoded codeword per line (first bit most significant).

Reals are written with ``repr``, the shortest string that round-trips to the
same double.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .constructions import PackingSet
from .linalg import Mask, MaskedObservations

__all__ = [
    "DataError",
    "read_count_matrix",
    "read_rate_matrix",
    "write_dense_csv",
    "write_matrix_market",
    "write_observations",
    "read_observations",
    "write_mask",
    "write_packing",
    "read_packing",
    "write_json",
]


class DataError(ValueError):
    """Malformed or invalid input file."""


def _lines(path):
    text = Path(path).read_text()
    return text.splitlines()


def _parse_count(token, where):
    token = token.strip()
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"{where}: cannot parse {token!r} as a count") from None
    if not math.isfinite(value) or value < 0 or value != int(value):
        raise DataError(f"{where}: invalid count {token!r} (must be a nonnegative integer)")
    return int(value)


def _read_matrix_market(path, lines):
    header = lines[0].lower().split()
    if len(header) < 5 or header[1] != "matrix" or header[2] != "coordinate":
        raise DataError(f"{path}:1: only 'matrix coordinate' MatrixMarket files are supported")
    if header[3] != "integer" or header[4] != "general":
        raise DataError(f"{path}:1: expected 'integer general' field/symmetry, got {header[3:5]}")
    it = iter(enumerate(lines[1:], start=2))
    for lineno, line in it:
        if line.strip() and not line.lstrip().startswith("%"):
            break
    else:
        raise DataError(f"{path}: missing size line")
    try:
        m, n, nnz = (int(t) for t in line.split())
    except ValueError:
        raise DataError(f"{path}:{lineno}: bad size line {line!r}") from None
    if m < 1 or n < 1 or nnz < 0:
        raise DataError(f"{path}:{lineno}: invalid dimensions {m} x {n}, {nnz} entries")
    X = np.zeros((m, n), dtype=np.int64)
    seen = 0
    for lineno, line in it:
        if not line.strip() or line.lstrip().startswith("%"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'i j count', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad index in {line!r}") from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise DataError(f"{path}:{lineno}: index ({i}, {j}) outside {m} x {n}")
        X[i - 1, j - 1] += _parse_count(parts[2], f"{path}:{lineno}")
        seen += 1
    if seen != nnz:
        raise DataError(f"{path}: header declares {nnz} entries, found {seen}")
    return X


def _read_csv_rows(path, lines):
    rows = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        rows.append((lineno, [t.strip() for t in line.split(",")]))
    if not rows:
        raise DataError(f"{path}: file contains no data")
    width = len(rows[0][1])
    for lineno, row in rows:
        if len(row) != width:
            raise DataError(f"{path}:{lineno}: expected {width} columns, found {len(row)}")
    return rows


def read_count_matrix(path) -> np.ndarray:
    """Nonnegative integer matrix from MatrixMarket coordinate or dense CSV."""
    lines = _lines(path)
    if not lines or not any(l.strip() for l in lines):
        raise DataError(f"{path}: file is empty")
    if lines[0].startswith("%%MatrixMarket"):
        return _read_matrix_market(path, lines)
    rows = _read_csv_rows(path, lines)
    return np.array([[_parse_count(tok, f"{path}:{lineno}:{c + 1}") for c, tok in enumerate(row)]
                     for lineno, row in rows], dtype=np.int64)


def read_rate_matrix(path) -> np.ndarray:
    """Dense CSV of nonnegative finite reals."""
    lines = _lines(path)
    rows = _read_csv_rows(path, lines)
    out = []
    for lineno, row in rows:
        vals = []
        for c, tok in enumerate(row):
            try:
                v = float(tok)
            except ValueError:
                raise DataError(f"{path}:{lineno}:{c + 1}: cannot parse {tok!r}") from None
            if not math.isfinite(v) or v < 0:
                raise DataError(f"{path}:{lineno}:{c + 1}: rate {tok!r} must be finite and >= 0")
            vals.append(v)
        out.append(vals)
    return np.array(out, dtype=np.float64)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_dense_csv(path, A):
    A = np.asarray(A)
    integral = np.issubdtype(A.dtype, np.integer)
    with open(path, "w") as fh:
        for row in A:
            fh.write(",".join(str(int(v)) if integral else repr(float(v)) for v in row) + "\n")


def write_matrix_market(path, X):
    X = np.asarray(X, dtype=np.int64)
    r, c = np.nonzero(X)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate integer general\n")
        fh.write(f"{X.shape[0]} {X.shape[1]} {r.size}\n")
        for i, j in zip(r, c):
            fh.write(f"{i + 1} {j + 1} {X[i, j]}\n")


def _header(meta):
    return "# " + " ".join(f"{k}={_fmt(v)}" for k, v in meta.items()) + "\n"


def _parse_header(path, line):
    if not line.startswith("#"):
        raise DataError(f"{path}:1: missing '# key=value' header line")
    meta = {}
    for tok in line[1:].split():
        if "=" not in tok:
            raise DataError(f"{path}:1: bad header token {tok!r}")
        k, v = tok.split("=", 1)
        meta[k] = v
    return meta


def write_observations(path, obs: MaskedObservations, p: float, seed: int):
    m, n = obs.shape
    with open(path, "w") as fh:
        fh.write(_header({"m": m, "n": n, "p": float(p), "seed": int(seed)}))
        for (i, j), x in zip(obs.mask.pairs(), obs.counts):
            fh.write(f"{i},{j},{x}\n")


def write_mask(path, mask: Mask, p: float, seed: int):
    m, n = mask.shape
    with open(path, "w") as fh:
        fh.write(_header({"m": m, "n": n, "p": float(p), "seed": int(seed)}))
        for i, j in mask.pairs():
            fh.write(f"{i},{j}\n")


def read_observations(path):
    """Return ``(MaskedObservations, header dict)`` from a sparse triple file."""
    lines = _lines(path)
    if not lines:
        raise DataError(f"{path}: file is empty")
    meta = _parse_header(path, lines[0])
    try:
        m, n = int(meta["m"]), int(meta["n"])
        parsed = {"m": m, "n": n, "p": float(meta.get("p", 1.0)),
                  "seed": int(meta["seed"]) if "seed" in meta else None}
    except (KeyError, ValueError):
        raise DataError(f"{path}:1: header must define integer m and n") from None
    pairs, counts = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 'i,j,count', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad index in {line!r}") from None
        if not (1 <= i <= m and 1 <= j <= n):
            raise DataError(f"{path}:{lineno}: index ({i}, {j}) outside {m} x {n}")
        pairs.append((i, j))
        counts.append(_parse_count(parts[2], f"{path}:{lineno}"))
    try:
        mask = Mask.from_pairs(m, n, pairs)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    # Mask stores indices row-major sorted; reorder counts to match
    idx = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    order = np.lexsort((idx[:, 1], idx[:, 0]))
    return MaskedObservations(mask, np.asarray(counts, dtype=np.int64)[order]), parsed


def write_packing(path, packing: PackingSet):
    with open(path, "w") as fh:
        fh.write(_header({"m": packing.m, "min_dist": packing.min_dist, "count": len(packing)}))
        for h in packing.to_hex():
            fh.write(h + "\n")


def read_packing(path) -> PackingSet:
    lines = _lines(path)
    if not lines:
        raise DataError(f"{path}: file is empty")
    meta = _parse_header(path, lines[0])
    try:
        m, d = int(meta["m"]), int(meta["min_dist"])
        return PackingSet.from_hex(m, d, [l.strip() for l in lines[1:] if l.strip()])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from None


def write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")
