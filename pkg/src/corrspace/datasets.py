"""Dataset ingestion (CSV / UCR-style TSV), splitting, synthetic generators.

The synthetic families build a spectrum directly and inverse-transform it:

* `gen_example1`: the second quarter of the spectrum copies the first, so
  exactly one quarter of the coefficients carries all pairwise-distance
  information and 4*d_{M/4}^2 == 2 - 2*corr holds for every pair.
* `gen_example2`: all series share a base spectrum; the first `m`
  coefficients get noise of scale `eps` while the rest get unit-scale noise,
  so truncating to the first coefficients is as good as guessing.
"""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import TimeSeries, normalize
from .errors import EmptyFile, InvalidM, ParseError, RaggedRows, TooSmall

log = logging.getLogger(__name__)

@dataclass
class Dataset:
    """Uniform-length series as an (n, M) matrix with stable int ids."""

    ids: np.ndarray
    values: np.ndarray
    provenance: str = ""
    seed: int | None = None
    n_constant_dropped: int = 0

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("values must be a (n, M) matrix")
        if self.ids.shape[0] != self.values.shape[0]:
            raise ValueError("ids/values row counts differ")
        if len(np.unique(self.ids)) != len(self.ids):
            raise ValueError("record ids must be unique")

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def length(self):
        return self.values.shape[1]

    def series(self, row: int) -> TimeSeries:
        return TimeSeries(id=int(self.ids[row]), values=self.values[row])

    def rows_for(self, ids) -> np.ndarray:
        """Row indices for the given record ids, in the given order."""
        lookup = {int(rid): i for i, rid in enumerate(self.ids)}
        return np.array([lookup[int(r)] for r in ids], dtype=np.int64)

    def normalized_matrix(self) -> np.ndarray:
        """All series l2-normalized, as an (n, M) matrix."""
        centered = self.values - self.values.mean(axis=1, keepdims=True)
        norms = np.linalg.norm(centered, axis=1, keepdims=True)
        return centered / norms


@dataclass
class SplitDataset:
    """Disjoint train/validation/test record-id partitions."""

    train_ids: np.ndarray
    val_ids: np.ndarray
    test_ids: np.ndarray
    seed: int
    ratios: tuple = (0.8, 0.1, 0.1)

    def __post_init__(self):
        self.train_ids = np.asarray(self.train_ids, dtype=np.int64)
        self.val_ids = np.asarray(self.val_ids, dtype=np.int64)
        self.test_ids = np.asarray(self.test_ids, dtype=np.int64)
        all_ids = np.concatenate([self.train_ids, self.val_ids, self.test_ids])
        if len(np.unique(all_ids)) != len(all_ids):
            raise ValueError("split partitions overlap")


def _parse_rows(path, delimiter):
    try:
        fh = open(path, "r", newline="")
    except FileNotFoundError:
        raise ParseError(0, f"cannot open {path}")
    with fh:
        rows = [(lineno, row) for lineno, row in enumerate(csv.reader(fh, delimiter=delimiter), start=1) if row]
    return rows


def load_csv(path, fmt: str = "csv") -> Dataset:
    """Load a dataset from disk.

    fmt "csv":    comma-separated doubles, one series per row, ids = row order.
    fmt "csv_id": like "csv" with a leading integer id column.
    fmt "ucr":    tab-separated UCR style; the leading class label is dropped.

    Constant rows are rejected with a warning and counted in
    `n_constant_dropped`; they would make the correlation undefined.
    """
    if fmt not in ("csv", "csv_id", "ucr"):
        raise ValueError(f"unknown format {fmt!r}")
    rows = _parse_rows(path, "\t" if fmt == "ucr" else ",")
    if not rows:
        raise EmptyFile(f"{path}: no data rows")

    ids, data = [], []
    width = None
    n_constant = 0
    for lineno, row in rows:
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise RaggedRows(lineno, f"expected {width} columns, got {len(row)}")
        try:
            nums = [float(tok) for tok in row]
        except ValueError as exc:
            raise ParseError(lineno, str(exc))
        if fmt == "csv_id":
            rid, vals = int(nums[0]), nums[1:]
        elif fmt == "ucr":
            rid, vals = len(ids) + n_constant, nums[1:]  # label column dropped
        else:
            rid, vals = len(ids) + n_constant, nums
        if len(vals) < 4:
            raise ParseError(lineno, f"series length {len(vals)} < 4")
        if max(vals) == min(vals):
            n_constant += 1
            continue
        ids.append(rid)
        data.append(vals)

    if n_constant:
        log.warning("%s: dropped %d constant series", path, n_constant)
    if not data:
        raise EmptyFile(f"{path}: all rows were constant")
    return Dataset(
        ids=np.array(ids),
        values=np.array(data),
        provenance=f"{fmt}:{path}",
        n_constant_dropped=n_constant,
    )


def save_csv(ds: Dataset, path, include_ids: bool = True) -> None:
    """Write as CSV with 17 significant digits (value-exact round trip)."""
    with open(path, "w", newline="") as fh:
        for rid, row in zip(ds.ids, ds.values):
            cells = [f"{x:.17g}" for x in row]
            if include_ids:
                cells.insert(0, str(int(rid)))
            fh.write(",".join(cells) + "\n")


def split(ds: Dataset, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> SplitDataset:
    """Seeded shuffle, then partition record ids; remainder goes to train."""
    n = ds.n
    if n < 10:
        raise TooSmall(f"need at least 10 series to split, got {n}")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three values summing to 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = int(n * ratios[1])
    n_test = int(n * ratios[2])
    n_train = n - n_val - n_test
    shuffled = ds.ids[perm]
    return SplitDataset(
        train_ids=shuffled[:n_train],
        val_ids=shuffled[n_train : n_train + n_val],
        test_ids=shuffled[n_train + n_val :],
        seed=seed,
        ratios=tuple(ratios),
    )


def _inverse_real_spectrum(coeffs: np.ndarray) -> np.ndarray:
    """Invert a scaled, conjugate-symmetric spectrum to a real series."""
    big_m = coeffs.shape[-1]
    x = np.fft.ifft(coeffs, axis=-1) * np.sqrt(big_m)
    if np.max(np.abs(x.imag)) > 1e-9:
        raise AssertionError("spectrum was not conjugate-symmetric")
    return x.real


def _mirror_half_spectrum(half: np.ndarray, big_m: int) -> np.ndarray:
    """Build a full length-M spectrum from coefficients 1..M/2 (DC = 0)."""
    n = half.shape[0]
    coeffs = np.zeros((n, big_m), dtype=np.complex128)
    coeffs[:, 1 : big_m // 2 + 1] = half
    coeffs[:, big_m // 2 + 1 :] = np.conj(half[:, -2::-1])
    return coeffs


def gen_example1(n: int, big_m: int, seed: int = 0) -> Dataset:
    """Series whose spectrum repeats its first quarter in the second.

    Coefficients 1..M/4-1 are random complex; the quarter-boundary
    coefficient M/4 (and with it the Nyquist M/2) is zero so the inverse
    transform is real and 4*d_{M/4}^2 == 2 - 2*corr holds exactly.
    """
    if big_m < 8 or big_m % 4 != 0:
        raise InvalidM(f"M={big_m} must be a multiple of 4, at least 8")
    rng = np.random.default_rng(seed)
    q = big_m // 4
    quarter = np.zeros((n, q), dtype=np.complex128)
    quarter[:, : q - 1] = (
        rng.standard_normal((n, q - 1)) + 1j * rng.standard_normal((n, q - 1))
    ) / np.sqrt(2.0)
    half = np.concatenate([quarter, quarter], axis=1)  # indices 1..M/2, Nyquist = 0
    values = _inverse_real_spectrum(_mirror_half_spectrum(half, big_m))
    return Dataset(
        ids=np.arange(n),
        values=values,
        provenance=f"gen_example1(n={n}, M={big_m}, seed={seed})",
        seed=seed,
    )


def gen_example2(n: int, big_m: int, m: int, eps: float = 0.01, seed: int = 0) -> Dataset:
    """Shared base spectrum, eps-scale noise on coefficients 1..m, unit elsewhere.

    The base is zero on coefficients 1..m: series norms vary across the pool,
    and a nonzero shared value there would couple that norm spread into the
    truncated coordinates after per-series normalization, handing the
    truncation baseline a ranking signal this family is built to deny it.
    """
    if big_m < 8 or big_m % 2 != 0:
        raise InvalidM(f"M={big_m} must be even, at least 8")
    if not 1 <= m < big_m // 2:
        raise InvalidM(f"m={m} outside [1, M/2) for M={big_m}")
    rng = np.random.default_rng(seed)
    n_half = big_m // 2  # coefficients 1..M/2; the last one is the (real) Nyquist

    base = np.empty(n_half, dtype=np.complex128)
    base[:-1] = (rng.standard_normal(n_half - 1) + 1j * rng.standard_normal(n_half - 1)) / np.sqrt(2.0)
    base[-1] = rng.standard_normal()
    base[:m] = 0.0
    sigma = rng.uniform(0.5, 1.5, size=n_half)

    noise = np.empty((n, n_half), dtype=np.complex128)
    noise[:, :-1] = (
        rng.standard_normal((n, n_half - 1)) + 1j * rng.standard_normal((n, n_half - 1))
    ) / np.sqrt(2.0)
    noise[:, -1] = rng.standard_normal(n)

    scale = np.ones(n_half)
    scale[:m] = eps
    half = base[np.newaxis, :] + noise * (scale * sigma)[np.newaxis, :]
    values = _inverse_real_spectrum(_mirror_half_spectrum(half, big_m))
    return Dataset(
        ids=np.arange(n),
        values=values,
        provenance=f"gen_example2(n={n}, M={big_m}, m={m}, eps={eps}, seed={seed})",
        seed=seed,
    )


def normalized_or_raise(ds: Dataset, row: int):
    """Normalize one series of the dataset (ConstantSeries on zero variance)."""
    return normalize(ds.series(row))
