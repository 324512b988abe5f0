"""Realization conditioning ahead of spectral estimation: trend removal,
centering/normalization, cosine tapering, zero padding, FIR filtering, and
the stationarity/ergodicity admissibility tests.

Conventions: standard deviations are population (divide by N) throughout,
so that normalized realizations integrate to unit power under the spectral
estimators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import stats

from .errors import DegenerateInputError
from .signal_model import TimeSeries, is_power_of_two


@dataclass(frozen=True)
class PreprocessReport:
    """What was done to a realization, with enough parameters to replay
    the conditioning bit-for-bit on the raw series."""

    steps: tuple = ()
    removed_trend: tuple = ()
    original_mean: float = 0.0
    original_std: float = 0.0
    taper_power_correction: float = 1.0

    def extended(self, step: tuple, **changes) -> "PreprocessReport":
        updates = dict(
            steps=self.steps + (step,),
            removed_trend=self.removed_trend,
            original_mean=self.original_mean,
            original_std=self.original_std,
            taper_power_correction=self.taper_power_correction,
        )
        updates.update(changes)
        return PreprocessReport(**updates)

    def as_dict(self) -> dict:
        return {
            "steps": [list(s) for s in self.steps],
            "removed_trend": list(self.removed_trend),
            "original_mean": self.original_mean,
            "original_std": self.original_std,
            "taper_power_correction": self.taper_power_correction,
        }


@dataclass(frozen=True)
class StationarityVerdict:
    statistic: float
    p_value: float
    n_segments: int
    quantity: str
    alpha: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n_segments": self.n_segments,
            "quantity": self.quantity,
            "alpha": self.alpha,
            "passed": self.passed,
        }


@dataclass(frozen=True)
class ErgodicityVerdict:
    statistic: float
    p_value: float
    n_members: int
    alpha: float
    passed: bool

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "n_members": self.n_members,
            "alpha": self.alpha,
            "passed": self.passed,
        }


def center_normalize(series: TimeSeries) -> tuple[TimeSeries, PreprocessReport]:
    """Center on the mean and scale to unit (population) standard deviation."""
    x = series.values
    mean = float(np.mean(x))
    std = float(np.std(x))
    if std == 0.0:
        raise DegenerateInputError(
            f"series {series.label!r} is constant; cannot normalize")
    out = series.with_values((x - mean) / std)
    report = PreprocessReport().extended(
        ("center_normalize",), original_mean=mean, original_std=std)
    return out, report


def detrend(series: TimeSeries, degree: int) -> tuple[TimeSeries, np.ndarray]:
    """Remove the least-squares polynomial of the given degree.

    The polynomial is taken over t = sample_index * dt; the returned
    coefficients are in ascending degree on that axis, so
    ``P(t) = c0 + c1 t + ... `` reproduces the removed trend.
    """
    n = len(series)
    if not (0 <= degree <= 5):
        raise ValueError(f"detrend degree must be in 0..5, got {degree}")
    if n < degree + 2:
        raise ValueError(
            f"series of length {n} too short for degree-{degree} detrend")
    t = np.arange(n) * series.dt
    # Fit on a scaled abscissa for conditioning, convert back exactly.
    poly = np.polynomial.Polynomial.fit(t, series.values, degree)
    coeffs = poly.convert().coef
    if coeffs.size < degree + 1:
        coeffs = np.pad(coeffs, (0, degree + 1 - coeffs.size))
    residual = series.values - npoly.polyval(t, coeffs)
    return series.with_values(residual), coeffs


def taper_window(n: int, p: float) -> np.ndarray:
    """Raised-cosine (Tukey-family) window of length ``n``.

    Ramps cover a fraction ``p/2`` of the record at each end; the plateau
    is closed so the window always attains 1.  ``p = 0`` is the identity,
    ``p = 1`` the full raised-cosine window with zero endpoints.
    """
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"taper fraction must be in [0, 1], got {p}")
    w = np.ones(n)
    ramp = int(math.floor(p * (n - 1) / 2.0))
    if ramp > 0:
        k = np.arange(ramp + 1)
        rise = 0.5 * (1.0 - np.cos(np.pi * k / ramp))
        w[: ramp + 1] = rise
        w[n - ramp - 1:] = rise[::-1]
    return w


def cosine_taper(series: TimeSeries, p: float = 0.1
                 ) -> tuple[TimeSeries, float]:
    """Taper the record ends with raised-cosine ramps.

    Returns the tapered series and the power correction U = mean(w^2);
    spectral densities of the tapered series must be divided by U.
    """
    w = taper_window(len(series), p)
    u = float(np.mean(w * w))
    return series.with_values(series.values * w), u


def zero_pad(series: TimeSeries, n_fft: int) -> TimeSeries:
    """Append zeros up to a power-of-two transform length."""
    n = len(series)
    if n_fft < n:
        raise ValueError(f"n_fft={n_fft} is shorter than the series ({n})")
    if not is_power_of_two(n_fft):
        raise ValueError(f"n_fft must be a power of two, got {n_fft}")
    if n_fft == n:
        return series
    padded = np.concatenate([series.values, np.zeros(n_fft - n)])
    return series.with_values(padded)


def fir_filter(series: TimeSeries, taps) -> TimeSeries:
    """Causal FIR convolution with zero initial state; output length equals
    input length."""
    taps = np.asarray(taps, dtype=float)
    if taps.size == 0:
        raise ValueError("taps must be non-empty")
    y = np.convolve(series.values, taps)[: len(series)]
    return series.with_values(y)


def condition(series: TimeSeries, *, detrend_degree: int | None = 0,
              normalize: bool = False, taper: float = 0.0
              ) -> tuple[TimeSeries, PreprocessReport]:
    """Standard conditioning chain: detrend, optionally normalize, taper."""
    report = PreprocessReport()
    out = series
    if detrend_degree is not None:
        out, coeffs = detrend(out, detrend_degree)
        report = report.extended(("detrend", detrend_degree),
                                 removed_trend=tuple(coeffs))
    if normalize:
        out, norm_report = center_normalize(out)
        report = report.extended(("center_normalize",),
                                 original_mean=norm_report.original_mean,
                                 original_std=norm_report.original_std)
    if taper > 0.0:
        out, u = cosine_taper(out, taper)
        report = report.extended(("taper", taper), taper_power_correction=u)
    return out, report


def replay(raw: TimeSeries, report: PreprocessReport) -> TimeSeries:
    """Re-apply the recorded steps to the raw series.

    Reproduces the conditioned series bit-for-bit: the same operations are
    executed with the stored parameters, in the stored order.
    """
    out = raw
    for step in report.steps:
        name = step[0]
        if name == "detrend":
            t = np.arange(len(out)) * out.dt
            out = out.with_values(
                out.values - npoly.polyval(t, np.asarray(report.removed_trend)))
        elif name == "center_normalize":
            out = out.with_values(
                (out.values - report.original_mean) / report.original_std)
        elif name == "taper":
            out = out.with_values(out.values * taper_window(len(out), step[1]))
        else:
            raise ValueError(f"unknown preprocessing step {name!r}")
    return out


def _reverse_arrangements(z: np.ndarray) -> int:
    """Number of pairs (i, j), i < j, with z_i > z_j."""
    count = 0
    for i in range(z.size - 1):
        count += int(np.sum(z[i] > z[i + 1:]))
    return count


def stationarity_test(series: TimeSeries, n_segments: int = 12,
                      quantity: str = "mean", alpha: float = 0.05
                      ) -> StationarityVerdict:
    """Reverse-arrangements test on per-segment means or variances.

    The series is cut into ``n_segments`` equal blocks (remainder samples
    dropped); the reverse-arrangements count of the block statistics is
    compared against its iid null via the normal approximation, two-sided.
    """
    if n_segments < 8:
        raise ValueError(f"need at least 8 segments, got {n_segments}")
    if quantity not in ("mean", "variance"):
        raise ValueError(f"quantity must be 'mean' or 'variance', got {quantity!r}")
    n = len(series)
    if n < 4 * n_segments:
        raise ValueError(
            f"series of length {n} too short for {n_segments} segments")
    if float(np.std(series.values)) == 0.0:
        raise DegenerateInputError("constant series: stationarity undefined")
    block = n // n_segments
    segments = series.values[: block * n_segments].reshape(n_segments, block)
    z = segments.mean(axis=1) if quantity == "mean" else segments.var(axis=1)
    a = _reverse_arrangements(z)
    m = n_segments
    mu = m * (m - 1) / 4.0
    sigma = math.sqrt(m * (2 * m + 5) * (m - 1) / 72.0)
    p = math.erfc(abs(a - mu) / (sigma * math.sqrt(2.0)))
    return StationarityVerdict(statistic=float(a), p_value=min(p, 1.0),
                               n_segments=n_segments, quantity=quantity,
                               alpha=alpha, passed=p >= alpha)


def ergodicity_check(ensemble: list[TimeSeries], alpha: float = 0.05
                     ) -> ErgodicityVerdict:
    """One-way dispersion-ratio check of per-member time averages.

    Members of an ergodic stationary process share the ensemble mean; a
    significant between-member to within-member variance ratio rejects
    that.  Passes iff p >= alpha.
    """
    if len(ensemble) < 2:
        raise ValueError("need at least 2 ensemble members")
    n = len(ensemble[0])
    if any(len(s) != n for s in ensemble):
        raise ValueError("ensemble members must have equal lengths")
    data = np.stack([s.values for s in ensemble])
    k = data.shape[0]
    grand = data.mean()
    between = n * np.sum((data.mean(axis=1) - grand) ** 2) / (k - 1)
    within = np.sum((data - data.mean(axis=1, keepdims=True)) ** 2) / (k * (n - 1))
    if between == 0.0:
        return ErgodicityVerdict(statistic=0.0, p_value=1.0, n_members=k,
                                 alpha=alpha, passed=True)
    if within == 0.0:
        return ErgodicityVerdict(statistic=math.inf, p_value=0.0, n_members=k,
                                 alpha=alpha, passed=False)
    f = float(between / within)
    p = float(stats.f.sf(f, k - 1, k * (n - 1)))
    return ErgodicityVerdict(statistic=f, p_value=p, n_members=k,
                             alpha=alpha, passed=p >= alpha)
