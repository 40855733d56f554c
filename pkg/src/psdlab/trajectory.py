"""Arc-length indexed trajectory records and their text file format.

File layout: the first line is a JSON object (keys sorted) with

    magic        "PSDLAB-TRAJ"
    schema       integer schema version
    config_hash  hex digest of the producing configuration (or null)
    columns      ordered column names
    units        unit label per column
    masses, gamma, status, message, meta

Every following line is one sample: space separated ``repr`` floats in the
column order of the header.  ``repr`` round-trips IEEE doubles exactly, so a
write/read cycle reproduces the record bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

MAGIC = "PSDLAB-TRAJ"
SCHEMA_VERSION = 1

CORE_COLUMNS = ("s", "nx", "ny", "nz", "tx", "ty", "tz", "kappa", "branch", "potential", "com")
CORE_UNITS = {
    "s": "shape arc-length",
    "nx": "unit", "ny": "unit", "nz": "unit",
    "tx": "unit", "ty": "unit", "tz": "unit",
    "kappa": "dimensionless",
    "branch": "sign",
    "potential": "dimensionless",
    "com": "dimensionless",
}
EXTRA_UNITS = {
    "t": "time",
    "scale": "length (sqrt of I_cm)",
    "vq": "dimensionless",
    "vq_sup": "dimensionless",
    "delta": "dimensionless",
    "norm": "dimensionless",
    "tau": "field time",
    "energy": "energy",
}


class TrajectoryFormatError(ValueError):
    """A trajectory file does not follow the schema; ``problems`` itemizes why."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Samples of a curve on the shape sphere.

    ``points`` are unit vectors n (the sphere of radius 1/2 is n / 2) and
    ``tangents`` the unit tangent directions on the unit sphere, both in the
    standard frame.  Optional ``positions``/``velocities`` hold Newtonian
    configurations when the record comes from the oracle.
    """

    s: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    kappa: np.ndarray
    branch: np.ndarray
    potential: np.ndarray
    com: np.ndarray
    masses: tuple = (1.0, 1.0, 1.0)
    gamma: float = -1.0
    extra: dict = field(default_factory=dict)
    positions: np.ndarray = None
    velocities: np.ndarray = None
    status: str = "complete"
    message: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.s)
        for name in ("s", "kappa", "branch", "potential", "com"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if arr.shape[0] != n:
                raise ValueError(f"column {name} has {arr.shape[0]} samples, expected {n}")
            object.__setattr__(self, name, arr)
        for name in ("points", "tangents"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(n, 3)
            object.__setattr__(self, name, arr)
        extra = {}
        for key in sorted(self.extra):
            arr = np.asarray(self.extra[key], dtype=float).reshape(-1)
            if arr.shape[0] != n:
                raise ValueError(f"extra column {key} has {arr.shape[0]} samples, expected {n}")
            extra[key] = arr
        object.__setattr__(self, "extra", extra)
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        for name in ("positions", "velocities"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=float)
                if val.shape[0] != n:
                    raise ValueError(f"{name} has {val.shape[0]} samples, expected {n}")
                object.__setattr__(self, name, val)

    def __len__(self):
        return len(self.s)

    @property
    def n_samples(self):
        return len(self.s)

    @property
    def final_point(self):
        return self.points[-1]

    def reversed(self) -> "TrajectoryRecord":
        """The same curve traversed the other way, arc-length measured from the old end."""
        s = self.s[-1] - self.s[::-1] if len(self.s) else self.s
        extra = {k: v[::-1] for k, v in self.extra.items()}
        meta = dict(self.meta)
        meta["reversed"] = not meta.get("reversed", False)
        return replace(
            self,
            s=s,
            points=self.points[::-1],
            tangents=-self.tangents[::-1],
            kappa=self.kappa[::-1],
            branch=-self.branch[::-1],
            potential=self.potential[::-1],
            com=self.com[::-1],
            extra=extra,
            positions=None if self.positions is None else self.positions[::-1],
            velocities=None if self.velocities is None else -self.velocities[::-1],
            meta=meta,
        )

    def subsample(self, index) -> "TrajectoryRecord":
        if not isinstance(index, slice):
            index = np.asarray(index)
        return replace(
            self,
            s=self.s[index],
            points=self.points[index],
            tangents=self.tangents[index],
            kappa=self.kappa[index],
            branch=self.branch[index],
            potential=self.potential[index],
            com=self.com[index],
            extra={k: v[index] for k, v in self.extra.items()},
            positions=None if self.positions is None else self.positions[index],
            velocities=None if self.velocities is None else self.velocities[index],
        )

    # ------------------------------------------------------------------ table view

    def columns(self):
        """Ordered (name, values) pairs for the text format."""
        cols = [
            ("s", self.s),
            ("nx", self.points[:, 0]), ("ny", self.points[:, 1]), ("nz", self.points[:, 2]),
            ("tx", self.tangents[:, 0]), ("ty", self.tangents[:, 1]), ("tz", self.tangents[:, 2]),
            ("kappa", self.kappa), ("branch", self.branch),
            ("potential", self.potential), ("com", self.com),
        ]
        cols += [(k, self.extra[k]) for k in sorted(self.extra)]
        for name, arr in (("x", self.positions), ("v", self.velocities)):
            if arr is None:
                continue
            flat = arr.reshape(len(self.s), int(np.prod(arr.shape[1:])))
            dim = arr.shape[-1]
            for j in range(flat.shape[1]):
                body, axis = divmod(j, dim)
                cols.append((f"{name}{body}_{'xyz'[axis]}", flat[:, j]))
        return cols


def _unit_for(name):
    if name in CORE_UNITS:
        return CORE_UNITS[name]
    if name in EXTRA_UNITS:
        return EXTRA_UNITS[name]
    if name.startswith("x"):
        return "length"
    if name.startswith("v"):
        return "length/time"
    return "dimensionless"


def format_header(record: TrajectoryRecord, config_hash=None) -> str:
    names = [name for name, _ in record.columns()]
    header = {
        "magic": MAGIC,
        "schema": SCHEMA_VERSION,
        "config_hash": config_hash,
        "columns": names,
        "units": [_unit_for(n) for n in names],
        "masses": list(record.masses),
        "gamma": record.gamma,
        "status": record.status,
        "message": record.message,
        "meta": record.meta,
    }
    return json.dumps(header, sort_keys=True)


def write_trajectory(path, record: TrajectoryRecord, config_hash=None):
    cols = record.columns()
    table = np.column_stack([v for _, v in cols]) if len(record) else np.empty((0, len(cols)))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_header(record, config_hash) + "\n")
        for row in table:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def read_header(path):
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline()
    try:
        header = json.loads(first)
    except json.JSONDecodeError as exc:
        raise TrajectoryFormatError([f"{path}: header is not JSON ({exc.msg})"]) from None
    problems = []
    if not isinstance(header, dict):
        raise TrajectoryFormatError([f"{path}: header is not a JSON object"])
    if header.get("magic") != MAGIC:
        problems.append(f"{path}: magic is {header.get('magic')!r}, expected {MAGIC!r}")
    if header.get("schema") != SCHEMA_VERSION:
        problems.append(f"{path}: schema {header.get('schema')!r} unsupported (expected {SCHEMA_VERSION})")
    cols = header.get("columns")
    if not isinstance(cols, list):
        problems.append(f"{path}: header lacks a column list")
    else:
        missing = [c for c in CORE_COLUMNS if c not in cols]
        if missing:
            problems.append(f"{path}: missing columns {', '.join(missing)}")
    if problems:
        raise TrajectoryFormatError(problems)
    return header


def read_table(path):
    """Return (header, dict of column arrays)."""
    header = read_header(path)
    names = header["columns"]
    rows = []
    problems = []
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != len(names):
                problems.append(f"{path}:{lineno}: {len(parts)} fields, expected {len(names)}")
                continue
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                problems.append(f"{path}:{lineno}: non-numeric field")
    if problems:
        raise TrajectoryFormatError(problems)
    table = np.array(rows, dtype=float).reshape(-1, len(names))
    return header, {name: table[:, j] for j, name in enumerate(names)}


def read_trajectory(path) -> TrajectoryRecord:
    header, cols = read_table(path)
    core = set(CORE_COLUMNS)
    pos_cols = sorted((c for c in cols if c[0] in "xv" and "_" in c and c[1:].split("_")[0].isdigit()))
    extra = {k: v for k, v in cols.items() if k not in core and k not in pos_cols}
    n = len(cols["s"])

    def stack(prefix):
        names = [c for c in header["columns"] if c in pos_cols and c.startswith(prefix)]
        if not names:
            return None
        bodies = 1 + max(int(c[1:].split("_")[0]) for c in names)
        dim = len(names) // bodies
        return np.column_stack([cols[c] for c in names]).reshape(n, bodies, dim)

    return TrajectoryRecord(
        s=cols["s"],
        points=np.column_stack([cols["nx"], cols["ny"], cols["nz"]]),
        tangents=np.column_stack([cols["tx"], cols["ty"], cols["tz"]]),
        kappa=cols["kappa"],
        branch=cols["branch"],
        potential=cols["potential"],
        com=cols["com"],
        masses=tuple(header.get("masses", (1.0, 1.0, 1.0))),
        gamma=header.get("gamma", -1.0),
        extra=extra,
        positions=stack("x"),
        velocities=stack("v"),
        status=header.get("status", "complete"),
        message=header.get("message", ""),
        meta=header.get("meta", {}),
    )
