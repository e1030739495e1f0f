"""Per-environment sample sets and their on-disk container.

Binary layout (all little-endian)::

    b"ENVDS\\n"
    one JSON header line: version, task, k_sub, pilots, d, x_shape, y_shape, meta
    x as float64, then y as float64

The CSV variant writes the same header as ``# {json}`` followed by one row per
sample, ``x`` then ``y`` flattened, each value printed with ``repr`` so the
round trip is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import UsageError

FORMAT_VERSION = 1
MAGIC = b"ENVDS\n"


@dataclass
class EnvironmentDataset:
    x: np.ndarray
    y: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if len(self.x) != len(self.y):
            raise UsageError("x and y must hold the same number of samples")

    def __len__(self):
        return len(self.x)

    def subset(self, idx) -> "EnvironmentDataset":
        return EnvironmentDataset(self.x[idx], self.y[idx], dict(self.meta))

    def head(self, count) -> "EnvironmentDataset":
        return self.subset(slice(0, count))

    def header(self) -> dict:
        return {"version": FORMAT_VERSION, "task": self.meta.get("task"),
                "k_sub": self.meta.get("k_sub"), "pilots": self.meta.get("pilots"),
                "d": len(self), "x_shape": list(self.x.shape), "y_shape": list(self.y.shape),
                "meta": self.meta}


def save(ds: EnvironmentDataset, path) -> Path:
    path = Path(path)
    head = json.dumps(ds.header(), sort_keys=True).encode()
    if path.suffix == ".csv":
        rows = np.concatenate([ds.x.reshape(len(ds), -1), ds.y.reshape(len(ds), -1)], axis=1)
        with open(path, "w") as fh:
            fh.write("# " + head.decode() + "\n")
            for row in rows:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        return path
    with open(path, "wb") as fh:
        fh.write(MAGIC + head + b"\n")
        fh.write(ds.x.astype("<f8").tobytes())
        fh.write(ds.y.astype("<f8").tobytes())
    return path


def load(path) -> EnvironmentDataset:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path) as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise UsageError(f"{path}: missing dataset header")
            head = json.loads(first[2:])
            rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
        _check_version(head, path)
        arr = np.array(rows, dtype=np.float64).reshape(head["d"], -1)
        nx = int(np.prod(head["x_shape"][1:]))
        x = arr[:, :nx].reshape(head["x_shape"])
        y = arr[:, nx:].reshape(head["y_shape"])
        return EnvironmentDataset(x, y, head["meta"])
    raw = path.read_bytes()
    if not raw.startswith(MAGIC):
        raise UsageError(f"{path}: not a dataset file")
    end = raw.index(b"\n", len(MAGIC))
    head = json.loads(raw[len(MAGIC):end])
    _check_version(head, path)
    body = np.frombuffer(raw[end + 1:], dtype="<f8")
    nx = int(np.prod(head["x_shape"]))
    x = body[:nx].reshape(head["x_shape"]).astype(np.float64)
    y = body[nx:].reshape(head["y_shape"]).astype(np.float64)
    return EnvironmentDataset(x, y, head["meta"])


def _check_version(head, path):
    if head.get("version") != FORMAT_VERSION:
        raise UsageError(f"{path}: unsupported dataset version {head.get('version')}")
