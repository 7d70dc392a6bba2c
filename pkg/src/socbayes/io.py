"""CSV readers for the three case-study inputs and writers for report files."""

from __future__ import annotations

import csv
import json
import logging
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

CONSULTAS_HEADER = ("group", "candidate", "count")
SPARROWS_HEADER = ("offspring", "age")
SABER11_HEADER = ("score", "sex", "work", "department")


def bundled_consultas() -> Path:
    """Path of the bundled poll counts (three party consultations, five candidates each)."""
    return Path(str(resources.files("socbayes") / "data" / "invamer_2022.csv"))


def _read_rows(path, header):
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        missing = [h for h in header if h not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: missing column(s) {', '.join(missing)}; expected header {','.join(header)}")
        rows, dropped = [], 0
        for row in reader:
            values = [(row.get(h) or "").strip() for h in header]
            if any(v == "" or v.upper() == "NA" for v in values):
                dropped += 1
                continue
            rows.append(values)
    if dropped:
        log.warning("%s: dropped %d row(s) with missing fields", path, dropped)
    return rows, dropped


def _as_int(value: str, what: str, line: int) -> int:
    try:
        f = float(value)
    except ValueError:
        raise DataError(f"row {line}: {what} {value!r} is not a number") from None
    if f != int(f):
        raise DataError(f"row {line}: {what} {value!r} is not an integer")
    return int(f)


def read_consultas(path):
    """Returns ``{group: (candidates, counts)}`` keeping file order."""
    rows, _ = _read_rows(path, CONSULTAS_HEADER)
    groups: dict = {}
    for i, (group, cand, count) in enumerate(rows, start=2):
        c = _as_int(count, "count", i)
        if c < 0:
            raise DataError(f"row {i}: negative count {c}")
        names, counts = groups.setdefault(group, ([], []))
        names.append(cand)
        counts.append(c)
    if not groups:
        raise DataError(f"{path}: no data rows")
    for g, (names, _) in groups.items():
        if len(names) < 2:
            raise DataError(f"group {g!r} has fewer than 2 categories")
    return {g: (names, np.array(counts, dtype=np.int64)) for g, (names, counts) in groups.items()}


def read_sparrows(path, max_age: int | None = None):
    """Returns ``(offspring, age)`` integer arrays."""
    rows, _ = _read_rows(path, SPARROWS_HEADER)
    if not rows:
        raise DataError(f"{path}: no data rows")
    y = np.array([_as_int(r[0], "offspring", i) for i, r in enumerate(rows, start=2)])
    age = np.array([_as_int(r[1], "age", i) for i, r in enumerate(rows, start=2)])
    if np.any(y < 0):
        raise DataError("offspring counts must be non-negative")
    if np.any(age < 1) or (max_age is not None and np.any(age > max_age)):
        raise DataError(f"ages must be integers in 1..{max_age or 'inf'}")
    return y, age


def read_saber11(path):
    """Returns ``(score, sex, work, department)``."""
    rows, _ = _read_rows(path, SABER11_HEADER)
    if not rows:
        raise DataError(f"{path}: no data rows")
    try:
        score = np.array([float(r[0]) for r in rows])
    except ValueError as exc:
        raise DataError(f"non-numeric score: {exc}") from None
    sex = np.array([_as_int(r[1], "sex", i) for i, r in enumerate(rows, start=2)])
    work = np.array([_as_int(r[2], "work", i) for i, r in enumerate(rows, start=2)])
    if not (np.isin(sex, (0, 1)).all() and np.isin(work, (0, 1)).all()):
        raise DataError("sex and work must be coded 0/1")
    dept = np.array([r[3] for r in rows])
    return score, sex, work, dept


def fmt(x) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_table(path, header, rows) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def read_table(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def write_chains(path, chains) -> None:
    """One row per retained draw: ``chain, iteration, <parameters...>``."""
    names = chains[0].parameter_names
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iteration", *names])
        for c, chain in enumerate(chains, start=1):
            for it, row in zip(chain.iterations, chain.draws):
                w.writerow([c, int(it), *(repr(float(v)) for v in row)])


def read_chains(path):
    """Inverse of :func:`write_chains`: ``(names, {chain_id: draws})``."""
    header, rows = read_table(path)
    names = header[2:]
    data = np.array([[float(v) for v in r] for r in rows]) if rows else np.empty((0, len(header)))
    out = {}
    for cid in dict.fromkeys(data[:, 0].astype(int).tolist()):
        out[cid] = data[data[:, 0] == cid, 2:]
    return names, out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj
