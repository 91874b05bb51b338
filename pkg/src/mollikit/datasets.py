"""Synthetic 2-D generators and tabular CSV ingestion."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Dataset",
    "DataError",
    "GMM_SIGMA",
    "gmm_means",
    "gen_two_gaussians",
    "sample_von_mises",
    "gen_von_mises_circle",
    "toy_dataset",
    "load_csv",
    "save_matrix",
    "load_matrix",
]


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    name: str
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    source: str = ""
    columns: tuple[str, ...] = ()
    dropped: tuple[str, ...] = ()
    split_index: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.train.shape[1]

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std

    def unstandardize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) * self.std + self.mean


# two-component mixture: means (2 sin(pi k), 2 cos(pi k)), isotropic sd (2/3) sin(pi/2)
GMM_SIGMA = 2.0 / 3.0 * math.sin(math.pi / 2.0)


def gmm_means() -> np.ndarray:
    k = np.arange(2)
    means = np.stack([2.0 * np.sin(np.pi * k), 2.0 * np.cos(np.pi * k)], axis=1)
    # sin(pi) evaluates to 1.2e-16 in floating point; the intended value is 0
    return np.round(means, 12) + 0.0


def gen_two_gaussians(n: int, rng: np.random.Generator, return_labels: bool = False):
    """Equal-weight mixture of two isotropic Gaussians centred at (0, 2) and (0, -2)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    labels = rng.integers(0, 2, size=n)
    pts = gmm_means()[labels] + GMM_SIGMA * rng.standard_normal((n, 2))
    return (pts, labels) if return_labels else pts


def sample_von_mises(n: int, rng: np.random.Generator, mu: float = 0.0,
                     kappa: float = 1.0) -> np.ndarray:
    """Angles from a von Mises distribution by Best & Fisher (1979) rejection sampling."""
    if kappa < 0:
        raise ValueError(f"kappa must be non-negative, got {kappa}")
    if kappa < 1e-8:
        return np.mod(mu + rng.uniform(-np.pi, np.pi, size=n) + np.pi, 2 * np.pi) - np.pi
    a = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
    b = (a - math.sqrt(2.0 * a)) / (2.0 * kappa)
    r = (1.0 + b * b) / (2.0 * b)
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 16)
        u1, u2, u3 = rng.uniform(size=(3, m))
        z = np.cos(np.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        ok = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        take = (np.sign(u3[ok] - 0.5) * np.arccos(f[ok]))[: n - filled]
        out[filled:filled + len(take)] = take
        filled += len(take)
    return np.mod(out + mu + np.pi, 2 * np.pi) - np.pi


def gen_von_mises_circle(n: int, rng: np.random.Generator, mu: float = 0.0,
                         kappa: float = 1.0) -> np.ndarray:
    """Points ``(cos t, sin t)`` on the unit circle with von Mises distributed angle ``t``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    theta = sample_von_mises(n, rng, mu, kappa)
    return np.stack([np.cos(theta), np.sin(theta)], axis=1)


TOYS = {
    "gmm": gen_two_gaussians,
    "vonmises": gen_von_mises_circle,
}


def toy_dataset(name: str, seed: int, n_train: int = 10_000, n_test: int = 10_000,
                n_val: int = 0) -> Dataset:
    """Fresh i.i.d. train/val/test draws from a toy generator; no standardisation applied."""
    try:
        gen = TOYS[name]
    except KeyError:
        raise DataError(f"unknown toy dataset {name!r}; choose from {sorted(TOYS)}") from None
    rng = np.random.default_rng(seed)
    train = gen(n_train, rng)
    val = gen(n_val, rng) if n_val else np.zeros((0, 2))
    test = gen(n_test, rng)
    return Dataset(name=name, train=train, val=val, test=test, mean=np.zeros(2), std=np.ones(2),
                   source=f"toy:{name}:seed={seed}", columns=("x", "y"))


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path: str | Path, split_seed: int = 0, drop_columns: tuple[str, ...] = (),
             name: str | None = None) -> Dataset:
    """Read a numeric CSV, shuffle, split 10% test / 10% of the rest val, standardise on train.

    A header is detected when the first row has a non-numeric cell.  Files
    using ``;`` as the separator (as the UCI wine-quality files do) are
    recognised too.  Constant training columns are dropped with a warning.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    first = text.split("\n", 1)[0]
    delim = ";" if first.count(";") > first.count(",") else ","
    rows = [r for r in csv.reader(text.splitlines(), delimiter=delim) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path}: empty file")
    header: list[str] | None = None
    if not all(_is_number(c) for c in rows[0]):
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(header) if header else len(rows[0])
    columns = header or [f"c{j}" for j in range(width)]
    data = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        line = i + (2 if header else 1)
        if len(row) != width:
            raise DataError(f"{path}: row {line} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {line}, column {j + 1} ({columns[j]}): "
                                f"cannot parse {cell!r}") from None
    if not np.isfinite(data).all():
        raise DataError(f"{path}: non-finite values present")
    keep = [j for j, c in enumerate(columns) if c not in set(drop_columns)]
    unknown = set(drop_columns) - set(columns)
    if unknown:
        raise DataError(f"{path}: cannot drop unknown columns {sorted(unknown)}")
    data = data[:, keep]
    columns = [columns[j] for j in keep]
    n = len(data)
    if n < 10:
        raise DataError(f"{path}: too small ({n} rows); need at least 10")

    perm = np.random.default_rng(split_seed).permutation(n)
    n_test = n // 10
    n_val = (n - n_test) // 10
    idx_test = perm[:n_test]
    idx_val = perm[n_test:n_test + n_val]
    idx_train = perm[n_test + n_val:]

    train = data[idx_train]
    std = train.std(axis=0)
    const = [columns[j] for j in range(len(columns)) if std[j] == 0.0]
    if const:
        warnings.warn(f"{path}: dropping constant columns {const}", stacklevel=2)
        live = std > 0.0
        data, std = data[:, live], std[live]
        columns = [c for c, ok in zip(columns, live) if ok]
        train = data[idx_train]
    mean = train.mean(axis=0)
    return Dataset(
        name=name or path.stem,
        train=(train - mean) / std,
        val=(data[idx_val] - mean) / std,
        test=(data[idx_test] - mean) / std,
        mean=mean,
        std=std,
        source=f"csv:{path}",
        columns=tuple(columns),
        dropped=tuple(drop_columns) + tuple(const),
        split_index={"train": idx_train, "val": idx_val, "test": idx_test},
    )


def save_matrix(path: str | Path, x: np.ndarray, header: str | None = None) -> None:
    """Space-separated rows, one point per line, optional ``#`` header line."""
    x = np.asarray(x, dtype=np.float64)
    lines = [] if header is None else [f"# {header}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in np.atleast_2d(x)] if x.size else []
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_matrix(path: str | Path) -> np.ndarray:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        rows.append([float(v) for v in line.split()])
    if not rows:
        return np.zeros((0, 0))
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: ragged matrix")
    return np.array(rows, dtype=np.float64)
