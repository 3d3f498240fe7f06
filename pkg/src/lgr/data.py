"""Datasets: synthetic generators, CSV ingestion, splits and error metrics."""

import csv
import fnmatch
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, UsageError

CLEAN_COLUMN = "y_clean"


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    clean_targets: np.ndarray = None
    input_names: list = None
    target_name: str = "y"

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        self.targets = np.asarray(self.targets, dtype=float).reshape(-1)
        if self.clean_targets is not None:
            self.clean_targets = np.asarray(self.clean_targets, dtype=float).reshape(-1)
        if self.inputs.ndim != 2 or self.inputs.shape[0] != self.targets.size:
            raise UsageError(f"inputs {self.inputs.shape} and targets {self.targets.shape} disagree")
        if self.clean_targets is not None and self.clean_targets.size != self.targets.size:
            raise UsageError("clean_targets length differs from targets")
        if self.input_names is None:
            self.input_names = [f"x{d + 1}" for d in range(self.inputs.shape[1])]

    def __len__(self):
        return self.targets.size

    @property
    def dim(self):
        return self.inputs.shape[1]

    def check_finite(self):
        if not (np.all(np.isfinite(self.inputs)) and np.all(np.isfinite(self.targets))):
            raise UsageError("dataset contains non-finite values")

    def subset(self, idx):
        return Dataset(
            self.inputs[idx],
            self.targets[idx],
            None if self.clean_targets is None else self.clean_targets[idx],
            list(self.input_names),
            self.target_name,
        )


def gen_sine(n, noise_sd=0.1, seed=0):
    """x ~ U[0, 2 pi], y = sin(x) + N(0, noise_sd^2)."""
    if n < 1:
        raise UsageError("n must be at least 1")
    if noise_sd < 0:
        raise UsageError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 2 * np.pi, size=n)
    clean = np.sin(x)
    return Dataset(x[:, None], clean + noise_sd * rng.standard_normal(n), clean)


def cross_function(X):
    """max{exp(-10 x1^2), exp(-50 x2^2), 1.25 exp(-5 (x1^2 + x2^2))}."""
    X = np.asarray(X, dtype=float)
    x1, x2 = X[..., 0], X[..., 1]
    return np.maximum.reduce(
        [np.exp(-10 * x1**2), np.exp(-50 * x2**2), 1.25 * np.exp(-5 * (x1**2 + x2**2))]
    )


def gen_cross2d(n, noise_sd=0.2, seed=0):
    """Uniform inputs on [-1, 1]^2, cross-function targets plus Gaussian noise."""
    if n < 1:
        raise UsageError("n must be at least 1")
    if noise_sd < 0:
        raise UsageError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 2))
    clean = cross_function(X)
    return Dataset(X, clean + noise_sd * rng.standard_normal(n), clean)


def cross2d_grid(edge=41):
    """Noise-free ``edge x edge`` regular grid on [-1, 1]^2."""
    if edge < 2:
        raise UsageError("grid edge must be at least 2")
    g = np.linspace(-1.0, 1.0, edge)
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    clean = cross_function(X)
    return Dataset(X, clean, clean.copy())


def gen_inverse_dynamics(n, noise_sd=0.05, seed=0, n_joints=7):
    """Synthetic stand-in with the SARCOS layout: 3*n_joints inputs, n_joints torques.

    Joint trajectories are sums of a few sinusoids, so the inputs occupy a
    low-dimensional manifold the way sampled robot trajectories do. Torques come
    from a smooth nonlinear rigid-body-like map. Returns ``(inputs, torques,
    input_names, torque_names)``.
    """
    if n < 1:
        raise UsageError("n must be at least 1")
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0.0, 60.0, size=n))
    freq = rng.uniform(0.05, 0.4, size=(n_joints, 3))
    amp = rng.uniform(0.1, 0.6, size=(n_joints, 3))
    phase = rng.uniform(0, 2 * np.pi, size=(n_joints, 3))
    arg = 2 * np.pi * freq[None] * t[:, None, None] + phase[None]
    w = 2 * np.pi * freq[None]
    q = np.sum(amp * np.sin(arg), axis=2)
    qd = np.sum(amp * w * np.cos(arg), axis=2)
    qdd = -np.sum(amp * w**2 * np.sin(arg), axis=2)
    mass = rng.uniform(0.5, 2.0, size=n_joints)
    grav = rng.uniform(1.0, 5.0, size=n_joints)
    coupling = rng.uniform(-0.3, 0.3, size=(n_joints, n_joints))
    torque = (
        mass * qdd
        + qdd @ coupling * np.cos(q)
        + grav * np.sin(q + np.roll(q, 1, axis=1))
        + 0.5 * qd * np.abs(qd)
    )
    torque += noise_sd * rng.standard_normal(torque.shape)
    inputs = np.hstack([q, qd, qdd])
    names = [f"q{j + 1}" for j in range(n_joints)]
    names += [f"qd{j + 1}" for j in range(n_joints)]
    names += [f"qdd{j + 1}" for j in range(n_joints)]
    return inputs, torque, names, [f"tau{j + 1}" for j in range(n_joints)]


def _select(header, target_column, select_columns):
    if target_column not in header:
        raise DataError(f"target column {target_column!r} not found; columns are {header}")
    if select_columns:
        patterns = [p.strip() for p in select_columns.split(",") if p.strip()]
        picked = [c for c in header if c != target_column and any(fnmatch.fnmatchcase(c, p) for p in patterns)]
        if not picked:
            raise DataError(f"column selection {select_columns!r} matched no input columns")
    else:
        picked = [c for c in header if c not in (target_column, CLEAN_COLUMN)]
    return picked


def load_csv(path, target_column="y", select_columns=None):
    """Read a headered numeric CSV into a :class:`Dataset`.

    All columns other than the target (and an optional ``y_clean`` column) are
    inputs in header order, unless ``select_columns`` gives a comma-separated
    list of glob patterns (``"q*,qd*,qdd*"``) choosing the input columns.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise DataError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    if len(rows) < 2:
        raise DataError(f"{path}: header only, no data rows")
    inputs = _select(header, target_column, select_columns)
    values = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: line {i} has {len(row)} fields, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                values[i - 2, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {i}, column {header[j]!r}: non-numeric value {cell!r}") from None
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise DataError(f"{path}: line {bad[0] + 2}, column {header[bad[1]]!r}: non-finite value")
    col = {name: j for j, name in enumerate(header)}
    clean = values[:, col[CLEAN_COLUMN]] if CLEAN_COLUMN in col and CLEAN_COLUMN != target_column else None
    return Dataset(
        values[:, [col[c] for c in inputs]],
        values[:, col[target_column]],
        clean,
        input_names=inputs,
        target_name=target_column,
    )


def save_csv(dataset, path):
    """Write ``dataset`` with 17 significant digits so :func:`load_csv` recovers it exactly."""
    header = list(dataset.input_names) + [dataset.target_name]
    cols = [dataset.inputs, dataset.targets[:, None]]
    if dataset.clean_targets is not None:
        header.append(CLEAN_COLUMN)
        cols.append(dataset.clean_targets[:, None])
    table = np.hstack(cols)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows([[f"{v:.17g}" for v in row] for row in table])


def mse(predictions, targets):
    p = np.asarray(predictions, dtype=float).reshape(-1)
    t = np.asarray(targets, dtype=float).reshape(-1)
    if p.shape != t.shape:
        raise UsageError(f"length mismatch: {p.size} predictions, {t.size} targets")
    if p.size == 0:
        raise UsageError("mse of empty arrays")
    return float(np.mean((p - t) ** 2))


def nmse(predictions, targets):
    """MSE divided by the population variance of ``targets``."""
    t = np.asarray(targets, dtype=float).reshape(-1)
    if t.size < 2:
        raise UsageError("nmse needs at least two targets")
    err = mse(predictions, t)
    var = float(np.var(t))
    if var == 0.0:
        raise UsageError("nmse undefined: targets have zero variance")
    return err / var


def train_test_split(dataset, fraction=0.8, seed=0):
    """Seeded shuffle, then the first ``round(fraction * N)`` rows train."""
    if not 0 < fraction < 1:
        raise UsageError("fraction must lie strictly between 0 and 1")
    perm = np.random.default_rng(seed).permutation(len(dataset))
    cut = int(round(fraction * len(dataset)))
    return dataset.subset(perm[:cut]), dataset.subset(perm[cut:])
