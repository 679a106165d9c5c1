"""Input/output sequences, train/val/test datasets, min-max normalization,
CSV persistence and the Fit metric.

CSV layout (UTF-8, ``\\n`` newlines)::

    k,u1,...,u7,y1,...,y12
    0,0.5,...,21.3
"""

import csv
import io
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .numerics import DomainError

SPLITS = ("train", "val", "test")
N_U = 7
N_Y = 12


class CsvParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


def atomic_write_text(path, text):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass(frozen=True)
class Sequence:
    id: str
    inputs: np.ndarray  # (N, n_u)
    outputs: np.ndarray  # (N, n_y)
    sample_period_s: float = 30.0

    def __post_init__(self):
        u = np.asarray(self.inputs, dtype=np.float64)
        y = np.asarray(self.outputs, dtype=np.float64)
        if u.ndim != 2 or y.ndim != 2:
            raise DomainError("inputs and outputs must be 2-D (steps x channels)")
        if len(u) != len(y):
            raise DomainError(f"sequence {self.id}: {len(u)} input rows vs {len(y)} output rows")
        if len(u) < 2:
            raise DomainError(f"sequence {self.id} needs at least 2 samples")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(y))):
            raise DomainError(f"sequence {self.id} has non-finite values")
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    def __len__(self):
        return len(self.inputs)


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormStats:
    u_min: np.ndarray
    u_max: np.ndarray
    y_min: np.ndarray
    y_max: np.ndarray

    @property
    def u_const(self):
        return ~(self.u_max > self.u_min)

    @property
    def y_const(self):
        return ~(self.y_max > self.y_min)


def _scale(x, lo, hi):
    span = hi - lo
    const = ~(span > 0)
    z = 2.0 * (x - lo) / np.where(const, 1.0, span) - 1.0
    return np.where(const, 0.0, z)


def _unscale(z, lo, hi):
    return (z + 1.0) * 0.5 * (hi - lo) + lo


def fit_norm(train_sequences):
    """Per-channel min/max over the training sequences."""
    seqs = list(train_sequences)
    if not seqs:
        raise DomainError("cannot fit normalization on an empty training split")
    U = np.concatenate([s.inputs for s in seqs])
    Y = np.concatenate([s.outputs for s in seqs])
    return NormStats(U.min(axis=0), U.max(axis=0), Y.min(axis=0), Y.max(axis=0))


def apply_norm(seq, stats):
    """Map every channel affinely so the training range becomes [-1, 1].

    Constant training channels map to 0. Values outside the training range
    are not clipped.
    """
    return Sequence(
        seq.id,
        _scale(seq.inputs, stats.u_min, stats.u_max),
        _scale(seq.outputs, stats.y_min, stats.y_max),
        seq.sample_period_s,
    )


def invert_norm(seq, stats):
    return Sequence(
        seq.id,
        _unscale(seq.inputs, stats.u_min, stats.u_max),
        _unscale(seq.outputs, stats.y_min, stats.y_max),
        seq.sample_period_s,
    )


def invert_outputs(Y, stats):
    return _unscale(np.asarray(Y, dtype=np.float64), stats.y_min, stats.y_max)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------

@dataclass
class Dataset:
    sequences: list
    split: dict  # id -> "train" | "val" | "test"
    norm: Optional[NormStats] = None
    kinds: dict = field(default_factory=dict)  # id -> excitation kind

    def __post_init__(self):
        ids = [s.id for s in self.sequences]
        if len(set(ids)) != len(ids):
            raise DomainError("duplicate sequence ids")
        if set(self.split) != set(ids):
            raise DomainError("split must assign every sequence exactly once")
        bad = {v for v in self.split.values() if v not in SPLITS}
        if bad:
            raise DomainError(f"unknown split labels {sorted(bad)}")

    def subset(self, which):
        return [s for s in self.sequences if self.split[s.id] == which]

    @property
    def train(self):
        return self.subset("train")

    @property
    def val(self):
        return self.subset("val")

    @property
    def test(self):
        return self.subset("test")

    def normalized(self, stats=None):
        """Normalized copy; stats default to a fit on the training split."""
        stats = fit_norm(self.train) if stats is None else stats
        return Dataset([apply_norm(s, stats) for s in self.sequences], dict(self.split), stats, dict(self.kinds))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def fit_metric(y_true, y_pred):
    """``1 - RMSE / (max(y_true) - min(y_true))`` for one channel."""
    y = np.asarray(y_true, dtype=np.float64).ravel()
    yh = np.asarray(y_pred, dtype=np.float64).ravel()
    if y.shape != yh.shape or y.size < 2:
        raise DomainError("fit needs two equally long series of length >= 2")
    span = y.max() - y.min()
    if not span > 0:
        raise DomainError("fit undefined for a constant target (zero range)")
    rmse = np.sqrt(np.mean((y - yh) ** 2))
    return float(1.0 - rmse / span)


def fit_per_channel(Y, Y_hat):
    Y = np.asarray(Y, dtype=np.float64)
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    return np.array([fit_metric(Y[:, j], Y_hat[:, j]) for j in range(Y.shape[1])])


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def csv_header(n_u=N_U, n_y=N_Y):
    return ["k"] + [f"u{j}" for j in range(1, n_u + 1)] + [f"y{j}" for j in range(1, n_y + 1)]


def format_csv(seq):
    n_u, n_y = seq.inputs.shape[1], seq.outputs.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(n_u, n_y))
    for k in range(len(seq)):
        w.writerow([k] + [format(v, ".17g") for v in seq.inputs[k]] + [format(v, ".17g") for v in seq.outputs[k]])
    return buf.getvalue()


def save_csv(seq, path):
    atomic_write_text(path, format_csv(seq))


def load_csv(path, seq_id=None, n_u=N_U, n_y=N_Y, sample_period_s=30.0):
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvParseError(path, 1, "empty file")
    expected = csv_header(n_u, n_y)
    header = [c.strip() for c in rows[0]]
    if header != expected:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        detail = []
        if missing:
            detail.append("missing column(s) " + ", ".join(missing))
        if extra:
            detail.append("unexpected column(s) " + ", ".join(extra))
        if not detail:
            detail.append("columns out of order")
        raise CsvParseError(path, 1, "bad header: " + "; ".join(detail))
    body = rows[1:]
    if not body:
        raise CsvParseError(path, 2, "no data rows")
    values = np.empty((len(body), len(expected)))
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(expected):
            raise CsvParseError(path, line, f"expected {len(expected)} fields, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise CsvParseError(path, line, f"non-numeric value {cell!r} in column {expected[c]}") from None
        if values[r, 0] != r:
            raise CsvParseError(path, line, f"expected k = {r}, got {row[0]}")
    try:
        return Sequence(seq_id or path.stem, values[:, 1 : 1 + n_u], values[:, 1 + n_u :], sample_period_s)
    except DomainError as exc:
        raise CsvParseError(path, 2, str(exc)) from None


MANIFEST = "manifest.csv"


def save_dataset(ds, directory):
    """One CSV per sequence plus ``manifest.csv`` (id, file, split, kind)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "file", "split", "kind"])
    for s in ds.sequences:
        fname = f"{s.id}.csv"
        save_csv(s, directory / fname)
        w.writerow([s.id, fname, ds.split[s.id], ds.kinds.get(s.id, "")])
    atomic_write_text(directory / MANIFEST, buf.getvalue())


def load_dataset(directory):
    directory = Path(directory)
    mpath = directory / MANIFEST
    with open(mpath, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["id", "file", "split", "kind"]:
        raise CsvParseError(mpath, 1, "manifest header must be id,file,split,kind")
    seqs, split, kinds = [], {}, {}
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise CsvParseError(mpath, r, f"expected 4 fields, got {len(row)}")
        sid, fname, which, kind = row
        seqs.append(load_csv(directory / fname, sid))
        split[sid] = which
        kinds[sid] = kind
    return Dataset(seqs, split, None, kinds)
