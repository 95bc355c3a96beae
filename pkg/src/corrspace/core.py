"""Exact time-series math: normalization, Pearson correlation, scaled DFT.

The identities used throughout the package:

    corr(s, r) = 1 - ||s_hat - r_hat||^2 / 2        (l2-normalized series)
    ||x||^2    = ||DFT_scaled(x)||^2                 (Parseval, 1/sqrt(M) scale)

so squared Euclidean distance between (truncated) frequency vectors is an
estimator of 2 - 2*corr. Coefficients are indexed 0..M-1 with index 0 the DC
component; normalized input has zero mean, hence zero DC, and "the first m
coefficients" always means indices 1..m.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConstantSeries, InvalidM, LengthMismatch

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class TimeSeries:
    """A raw, finite, real-valued series with a stable record id."""

    id: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size < 2:
            raise ValueError("series must be a 1-d sequence of length >= 2")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"series {self.id}: non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class NormalizedSeries:
    """l2-normalized series: zero mean, unit Euclidean norm.

    `mean` and `stddev` (population, i.e. divide-by-M) allow reconstructing
    the raw values as  raw = stddev * sqrt(M) * values + mean.
    """

    values: np.ndarray
    mean: float
    stddev: float


@dataclass(frozen=True)
class FrequencyVector:
    """Scaled DFT coefficients, complex, index 0 = DC.

    Real input gives conjugate symmetry coeffs[j] == conj(coeffs[M-j]) and,
    because of the 1/sqrt(M) scale, Parseval: ||coeffs|| == ||input||.
    """

    coeffs: np.ndarray

    def __len__(self):
        return self.coeffs.size


def normalize(s: TimeSeries) -> NormalizedSeries:
    """Subtract the mean and scale to unit Euclidean norm.

    Raises ConstantSeries when the series has zero variance (the Pearson
    correlation of a constant series is undefined).
    """
    v = s.values
    mean = float(np.mean(v))
    centered = v - mean
    norm = float(np.linalg.norm(centered))
    if norm <= _NORM_EPS * max(1.0, float(np.max(np.abs(v)))):
        raise ConstantSeries(f"series {s.id} is constant (stddev = 0)")
    stddev = norm / np.sqrt(v.size)
    return NormalizedSeries(values=centered / norm, mean=mean, stddev=float(stddev))


def pearson(s: TimeSeries, r: TimeSeries) -> float:
    """Pearson correlation of two equal-length, non-constant series."""
    if len(s) != len(r):
        raise LengthMismatch(f"lengths {len(s)} != {len(r)}")
    s_hat = normalize(s).values
    r_hat = normalize(r).values
    c = float(np.dot(s_hat, r_hat))
    return min(1.0, max(-1.0, c))


def dft(x) -> FrequencyVector:
    """Scaled discrete Fourier transform: coeffs[j] = (1/sqrt(M)) * sum_l x_l e^{-2pi i jl/M}.

    Computed with an FFT; output is identical (within 1e-9) to the direct
    O(M^2) evaluation of the sum.
    """
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1 or v.size < 4:
        raise InvalidM(f"need a 1-d series of length >= 4, got shape {v.shape}")
    return FrequencyVector(coeffs=np.fft.fft(v) / np.sqrt(v.size))


def truncated_distance_sq(a: FrequencyVector, b: FrequencyVector, m: int) -> float:
    """Squared Euclidean distance over frequency coefficients 1..m (DC excluded).

    Requires 1 <= m < M/2, strictly below the Nyquist half-spectrum.
    """
    if len(a) != len(b):
        raise LengthMismatch(f"coefficient counts {len(a)} != {len(b)}")
    big_m = len(a)
    if m < 1 or 2 * m >= big_m:
        raise InvalidM(f"m={m} outside [1, M/2) for M={big_m}")
    d = a.coeffs[1 : m + 1] - b.coeffs[1 : m + 1]
    return float(np.sum(d.real * d.real + d.imag * d.imag))


def distance_sq(a: NormalizedSeries, b: NormalizedSeries) -> float:
    """Exact squared distance between normalized series (= 2 - 2*corr)."""
    d = a.values - b.values
    return float(np.dot(d, d))
