"""Text formats for poses and dictionaries, plus CSV result tables.

Poses
    One record per line: ``id<TAB>P<TAB>joint_1<TAB>...<TAB>joint_P`` where
    each joint is its 2 or 3 coordinates separated by single spaces.  Blank
    lines and lines starting with ``#`` are ignored.  All records of a file
    share P and the dimension.

Dictionaries
    A JSON document holding ``k``, ``n_joints``, the learning configuration
    and the two atom arrays tagged with their kind (global structure first,
    deformation second).

Results
    CSV with a header row of column names.

Floats are always written with :func:`repr`, the shortest string that
parses back to the same double, so every format round-trips bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .core import DictKind, Pose2D, Pose3D, PoseDictionary, as_joints
from .errors import DimensionMismatch, InvalidDictionary, IoError, ParseError, SchemaMismatch

DICT_FORMAT = "sdmpose-dictionary"
DICT_VERSION = 1


def _fmt(v: float) -> str:
    v = float(v)
    if not math.isfinite(v):
        raise ValueError(f"refusing to serialise non-finite value {v!r}")
    return repr(v)


def _open(path, mode: str):
    try:
        return open(path, mode, encoding="utf-8", newline="")
    except OSError as exc:
        raise IoError(f"{path}: {exc.strerror or exc}") from exc


# --- poses -------------------------------------------------------------------


def format_pose(pose_id: str, pose: Pose3D | Pose2D) -> str:
    if not pose_id or any(c.isspace() for c in pose_id):
        raise ValueError(f"pose id must be non-empty without whitespace: {pose_id!r}")
    joints = as_joints(pose)
    cols = ("\t" + " ".join(_fmt(v) for v in joints[:, j]) for j in range(joints.shape[1]))
    return f"{pose_id}\t{joints.shape[1]}" + "".join(cols)


def write_records(path, records: Iterable[tuple[str, Pose3D | Pose2D]]) -> None:
    lines = []
    shape = None
    for pose_id, pose in records:
        s = as_joints(pose).shape
        if shape is not None and s != shape:
            raise DimensionMismatch(f"record {pose_id!r} has shape {s}, earlier records {shape}")
        shape = s
        lines.append(format_pose(pose_id, pose) + "\n")
    with _open(path, "w") as fh:
        fh.writelines(lines)


def write_poses(path, poses: Sequence[Pose3D | Pose2D], ids: Sequence[str] | None = None) -> None:
    """Write poses one per line; ids default to ``0, 1, ...``."""
    if ids is None:
        ids = [str(i) for i in range(len(poses))]
    if len(ids) != len(poses):
        raise ValueError("ids and poses differ in length")
    write_records(path, zip(ids, poses))


def _parse_line(text: str, lineno: int, path: str) -> tuple[str, np.ndarray]:
    fields = text.split("\t")
    if len(fields) < 2:
        raise ParseError("expected 'id<TAB>P<TAB>joints...'", lineno, path)
    pose_id = fields[0]
    try:
        p = int(fields[1])
    except ValueError:
        raise ParseError(f"joint count {fields[1]!r} is not an integer", lineno, path) from None
    if p < 1:
        raise ParseError(f"joint count must be positive, got {p}", lineno, path)
    joints = fields[2:]
    if len(joints) != p:
        raise ParseError(f"declared {p} joints but found {len(joints)}", lineno, path)
    rows = [j.split(" ") for j in joints]
    dim = len(rows[0])
    if dim not in (2, 3):
        raise ParseError(f"joint 1 has {dim} fields, expected 2 or 3", lineno, path)
    for i, r in enumerate(rows):
        if len(r) != dim:
            raise ParseError(f"joint {i + 1} has {len(r)} fields, expected {dim}", lineno, path)
    try:
        arr = np.array([[float(v) for v in r] for r in rows]).T
    except ValueError as exc:
        raise ParseError(f"bad number: {exc}", lineno, path) from None
    if not np.all(np.isfinite(arr)):
        raise ParseError("non-finite coordinate", lineno, path)
    return pose_id, arr


def read_records(path) -> list[tuple[str, Pose3D | Pose2D]]:
    """Read ``(id, pose)`` pairs; an empty file yields an empty list."""
    out = []
    shape = None
    with _open(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.rstrip("\r\n")
            if not text.strip() or text.startswith("#"):
                continue
            pose_id, arr = _parse_line(text, lineno, str(path))
            if shape is not None and arr.shape != shape:
                raise DimensionMismatch(f"{path}:{lineno}: record shape {arr.shape} differs from {shape}")
            shape = arr.shape
            out.append((pose_id, Pose3D(arr) if arr.shape[0] == 3 else Pose2D(arr)))
    return out


def read_poses(path) -> list[Pose3D | Pose2D]:
    return [pose for _, pose in read_records(path)]


# --- dictionaries ------------------------------------------------------------


def write_dictionary(path, dict_u: PoseDictionary, dict_v: PoseDictionary,
                     config: Mapping[str, Any] | None = None) -> None:
    """Write a dictionary pair with an optional echo of the learning config."""
    if dict_u.kind is not DictKind.GLOBAL_STRUCTURE or dict_v.kind is not DictKind.DEFORMATION:
        raise InvalidDictionary("expected a (global_structure, deformation) pair")
    if dict_u.n_joints != dict_v.n_joints:
        raise DimensionMismatch("dictionaries disagree on the joint count")
    doc = {
        "format": DICT_FORMAT,
        "version": DICT_VERSION,
        "k": dict_u.k,
        "n_joints": dict_u.n_joints,
        "learn_config": dict(config or {}),
        "dictionaries": [
            {"kind": d.kind.value, "k": d.k, "atoms": d.atoms.tolist()} for d in (dict_u, dict_v)
        ],
    }
    text = json.dumps(doc, indent=1, allow_nan=False) + "\n"
    with _open(path, "w") as fh:
        fh.write(text)


def read_dictionary(path) -> tuple[PoseDictionary, PoseDictionary]:
    """Read and validate a dictionary pair written by :func:`write_dictionary`."""
    with _open(path, "r") as fh:
        text = fh.read()
    try:
        doc = json.loads(text, parse_constant=lambda c: float("nan"))
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, exc.lineno, str(path)) from None
    if not isinstance(doc, dict) or doc.get("format") != DICT_FORMAT:
        raise ParseError(f"not a {DICT_FORMAT} document", 1, str(path))
    if doc.get("version") != DICT_VERSION:
        raise ParseError(f"unsupported version {doc.get('version')!r}", 1, str(path))
    entries = doc.get("dictionaries")
    if not isinstance(entries, list) or len(entries) != 2:
        raise InvalidDictionary(f"{path}: expected two dictionaries")
    expected = (DictKind.GLOBAL_STRUCTURE, DictKind.DEFORMATION)
    out = []
    for want, entry in zip(expected, entries):
        kind = entry.get("kind") if isinstance(entry, dict) else None
        if kind != want.value:
            raise InvalidDictionary(f"{path}: expected kind {want.value!r}, found {kind!r}")
        try:
            atoms = np.array(entry["atoms"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidDictionary(f"{path}: unreadable atoms ({exc})") from None
        try:
            d = PoseDictionary(atoms, want)
        except InvalidDictionary as exc:
            raise InvalidDictionary(f"{path}: {want.value}: {exc}") from None
        if entry.get("k", d.k) != d.k:
            raise InvalidDictionary(f"{path}: {want.value} declares k={entry.get('k')} but holds {d.k} atoms")
        out.append(d)
    du, dv = out
    if du.n_joints != dv.n_joints or doc.get("n_joints", du.n_joints) != du.n_joints:
        raise InvalidDictionary(f"{path}: inconsistent joint counts")
    return du, dv


def read_dictionary_config(path) -> dict[str, Any]:
    with _open(path, "r") as fh:
        return dict(json.load(fh).get("learn_config", {}))


# --- result tables -----------------------------------------------------------


@dataclass
class ResultTable:
    """Named columns and rows of cells (str, int or float)."""

    columns: tuple[str, ...]
    rows: list[tuple]

    def __post_init__(self):
        self.columns = tuple(self.columns)
        if len(set(self.columns)) != len(self.columns):
            raise SchemaMismatch(f"duplicate column names in {self.columns}")
        self.rows = [tuple(r) for r in self.rows]
        for r in self.rows:
            if len(r) != len(self.columns):
                raise SchemaMismatch(f"row {r} does not match columns {self.columns}")

    @classmethod
    def from_dicts(cls, rows: Sequence[Mapping[str, Any]], columns: Sequence[str] | None = None) -> ResultTable:
        cols = tuple(columns) if columns is not None else tuple(rows[0]) if rows else ()
        return cls(cols, [_row_from_mapping(r, cols) for r in rows])

    def as_dicts(self) -> list[dict[str, Any]]:
        return [dict(zip(self.columns, r)) for r in self.rows]


def _row_from_mapping(row: Mapping[str, Any], columns: Sequence[str]) -> tuple:
    if set(row) != set(columns):
        missing = sorted(set(columns) - set(row))
        extra = sorted(set(row) - set(columns))
        raise SchemaMismatch(f"row columns differ from header (missing {missing}, extra {extra})")
    return tuple(row[c] for c in columns)


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _fmt(v)
    return str(v)


def _parse_cell(s: str):
    if s in ("true", "false"):
        return s == "true"
    for conv in (int, float):
        try:
            return conv(s)
        except ValueError:
            pass
    return s


def write_results(path, table: ResultTable) -> None:
    with _open(path, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for r in table.rows:
            w.writerow([_cell(v) for v in r])


def read_results(path) -> ResultTable:
    with _open(path, "r") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("missing header row", 1, str(path))
    header = tuple(rows[0])
    body = []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != len(header):
            raise ParseError(f"{len(r)} cells for {len(header)} columns", lineno, str(path))
        body.append(tuple(_parse_cell(c) for c in r))
    return ResultTable(header, body)


def append_results(path, row: Mapping[str, Any]) -> None:
    """Append one row; creates the file (header from the row's keys) if absent."""
    if not os.path.exists(path) or os.path.getsize(path) == 0:
        write_results(path, ResultTable.from_dicts([row]))
        return
    with _open(path, "r") as fh:
        header = next(csv.reader(fh), None)
    if header is None:
        raise ParseError("missing header row", 1, str(path))
    values = _row_from_mapping(row, header)
    with _open(path, "a") as fh:
        csv.writer(fh, lineterminator="\n").writerow([_cell(v) for v in values])


def ensure_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"{p}: {exc.strerror or exc}") from exc
    return p
