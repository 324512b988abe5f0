"""Transform kernels and spectral estimators.

The transform kernels (radix-2 FFT, fast Walsh-Hadamard) are implemented
here directly and operate on the last axis of an array, so segment
ensembles and permutation replicates batch through a single call.

Spectral densities are one-sided with the factor-2 convention,
``G(f_k) = 2 |X_k|^2 dt / (N U)``, DC and Nyquist un-doubled, where U is
the taper power correction.  With that normalization the unsmoothed
single-segment estimate satisfies Parseval exactly: sum(G) * df equals
the population variance of the conditioned record.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .preprocess import detrend, taper_window
from .signal_model import FrequencyGrid, TimeSeries, frequency_grid, is_power_of_two


# ---------------------------------------------------------------------------
# Transform kernels
# ---------------------------------------------------------------------------

def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x, inverse: bool = False) -> np.ndarray:
    """Radix-2 Cooley-Tukey transform along the last axis.

    Forward is the unnormalized DFT ``X_k = sum_n x_n exp(-2 pi i k n / N)``;
    the inverse scales by 1/N, so ``fft(fft(x), inverse=True) == x``.
    """
    x = np.asarray(x)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"transform length must be a power of two, got {n}")
    out = np.array(x, dtype=complex)
    if n == 1:
        return out
    out = out[..., _bit_reverse_indices(n)]
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        twiddle = np.exp(sign * 2j * np.pi * np.arange(half) / m)
        shaped = out.reshape(out.shape[:-1] + (n // m, m))
        even = shaped[..., :half]
        odd = shaped[..., half:] * twiddle
        upper = even + odd
        lower = even - odd
        shaped[..., :half] = upper
        shaped[..., half:] = lower
        m *= 2
    if inverse:
        out /= n
    return out


def fwht(x) -> np.ndarray:
    """Unnormalized fast Walsh-Hadamard transform, natural (Hadamard)
    ordering, along the last axis.  Self-inverse up to N: applying it
    twice multiplies the input by the transform length.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"transform length must be a power of two, got {n}")
    out = x.copy()
    h = 1
    while h < n:
        shaped = out.reshape(out.shape[:-1] + (n // (2 * h), 2 * h))
        a = shaped[..., :h]
        b = shaped[..., h:]
        upper = a + b
        lower = a - b
        shaped[..., :h] = upper
        shaped[..., h:] = lower
        h *= 2
    return out


def sequency_order(n: int) -> np.ndarray:
    """Permutation mapping natural(Hadamard)-ordered FWHT output to
    sequency order: entry k of the permuted output has k sign changes."""
    if not is_power_of_two(n):
        raise ValueError(f"length must be a power of two, got {n}")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    gray = idx ^ (idx >> 1)
    perm = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        perm |= ((gray >> b) & 1) << (bits - 1 - b)
    return perm


# ---------------------------------------------------------------------------
# Spectral estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralEstimate:
    """One-sided spectral estimate over a frequency grid.

    ``values`` is real for auto spectra and cepstra, complex for cross
    spectra.  ``n_averages`` counts effective averages (segments times
    smoothing span) for bias/variance assessment downstream.
    """

    grid: FrequencyGrid
    values: np.ndarray
    kind: str
    n_averages: int = 1
    window_correction: float = 1.0
    label: str = ""

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != (self.grid.n_bins + 1,):
            raise ValueError(
                f"values length {values.shape} does not match grid "
                f"({self.grid.n_bins + 1} bins)")
        if self.kind == "auto" and np.any(values < 0):
            raise ValueError("auto spectral density must be non-negative")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    @property
    def co(self) -> np.ndarray:
        """Co-spectrum (real part) of a cross estimate."""
        return np.real(self.values)

    @property
    def quad(self) -> np.ndarray:
        """Quadrature spectrum, minus the imaginary part."""
        return -np.imag(self.values)

    @property
    def quefrencies(self) -> np.ndarray:
        """Quefrency axis in seconds (cepstrum estimates only)."""
        if self.kind != "cepstrum":
            raise ValueError("quefrencies are defined for cepstrum estimates")
        dt = 1.0 / (2.0 * self.grid.fmax)
        return np.arange(self.grid.n_bins + 1) * dt

    def total_power(self) -> float:
        """sum(G) * df; equals the record variance for unsmoothed
        single-segment auto estimates."""
        return float(np.sum(np.real(self.values)) * self.grid.df)


def _resolve_n_fft(n: int, n_fft: int | None) -> int:
    if n_fft is None:
        if n < 4:
            raise ValueError("series too short for spectral estimation")
        return 2 ** int(math.floor(math.log2(n)))
    if not is_power_of_two(n_fft) or n_fft < 4:
        raise ValueError(f"n_fft must be a power of two >= 4, got {n_fft}")
    return n_fft


def segment_ffts(series: TimeSeries, *, n_fft: int | None = None,
                 taper_p: float = 0.0, detrend_degree: int | None = 0,
                 n_segments: int | None = 1, overlap: float = 0.0,
                 allow_pad: bool = False):
    """Condition, segment and transform a series under one shared scheme.

    Returns ``(X, u, n_fft)`` where X has shape (n_segments, n_fft) and u
    is the taper power correction of the segment window.  This is the
    common substrate of ``psd``, ``cross_psd`` and the spectral matrix, so
    multi-channel estimates share segmentation and taper exactly.
    """
    n = len(series)
    n_fft = _resolve_n_fft(n, n_fft)
    if n < n_fft:
        if not allow_pad:
            raise ValueError(
                f"series of length {n} is shorter than n_fft={n_fft} "
                "and padding was not allowed")
        seg_len = n
        starts = [0]
    else:
        seg_len = n_fft
        if not (0.0 <= overlap < 1.0):
            raise ValueError(f"overlap must be in [0, 1), got {overlap}")
        hop = max(1, int(round(n_fft * (1.0 - overlap))))
        max_segments = (n - n_fft) // hop + 1
        if n_segments is None:
            n_segments = max_segments
        if n_segments < 1 or n_segments > max_segments:
            raise ValueError(
                f"cannot place {n_segments} segments of {n_fft} samples "
                f"(hop {hop}) in {n} samples")
        starts = [i * hop for i in range(n_segments)]

    window = taper_window(seg_len, taper_p)
    u = float(np.sum(window * window) / seg_len)
    blocks = np.empty((len(starts), n_fft))
    for row, s in enumerate(starts):
        seg = series.values[s:s + seg_len]
        if detrend_degree is not None:
            seg = detrend(TimeSeries(seg, series.dt), detrend_degree)[0].values
        blocks[row, :seg_len] = seg * window
        blocks[row, seg_len:] = 0.0
    return fft(blocks), u, n_fft


def _one_sided(power: np.ndarray, n_fft: int) -> np.ndarray:
    """Fold a full-length spectral product to the one-sided convention."""
    n_bins = n_fft // 2
    one = 2.0 * power[..., : n_bins + 1]
    one[..., 0] *= 0.5
    one[..., n_bins] *= 0.5
    return one


def psd(series: TimeSeries, *, n_fft: int | None = None, taper_p: float = 0.0,
        detrend_degree: int | None = 0, n_segments: int | None = 1,
        overlap: float = 0.0, allow_pad: bool = False) -> SpectralEstimate:
    """One-sided power spectral density, periodogram or Welch average.

    Each segment is detrended (default: mean removal), tapered, and
    transformed; ``G(f_k) = 2 |X_k|^2 dt / (N U)`` with the ends
    un-doubled.  ``n_segments=None`` uses every full segment that fits.
    """
    x, u, n_fft = segment_ffts(series, n_fft=n_fft, taper_p=taper_p,
                               detrend_degree=detrend_degree,
                               n_segments=n_segments, overlap=overlap,
                               allow_pad=allow_pad)
    n_data = min(len(series), n_fft)
    scale = series.dt / (n_data * u)
    power = (x.real ** 2 + x.imag ** 2) * scale
    values = _one_sided(power, n_fft).mean(axis=0)
    return SpectralEstimate(grid=frequency_grid(n_fft, series.dt),
                            values=values, kind="auto",
                            n_averages=x.shape[0], window_correction=u,
                            label=series.label)


def cross_psd(x: TimeSeries, y: TimeSeries, *, n_fft: int | None = None,
              taper_p: float = 0.0, detrend_degree: int | None = 0,
              n_segments: int | None = 1, overlap: float = 0.0,
              allow_pad: bool = False) -> SpectralEstimate:
    """One-sided cross-spectral density between two equally sampled series.

    Convention: ``G_xy = 2 conj(X) Y dt / (N U)``, so a pure delay of y by
    L samples gives the phase ramp ``-2 pi f L dt``.  The co-spectrum is
    the real part and the quadrature spectrum minus the imaginary part.
    """
    if len(x) != len(y):
        raise ValueError("series must have equal lengths")
    if not math.isclose(x.dt, y.dt, rel_tol=1e-12):
        raise ValueError(f"sampling steps differ: {x.dt} vs {y.dt}")
    opts = dict(n_fft=n_fft, taper_p=taper_p, detrend_degree=detrend_degree,
                n_segments=n_segments, overlap=overlap, allow_pad=allow_pad)
    fx, u, n_fft = segment_ffts(x, **opts)
    fy, _, _ = segment_ffts(y, **opts)
    n_data = min(len(x), n_fft)
    scale = x.dt / (n_data * u)
    values = _one_sided(np.conj(fx) * fy * scale, n_fft).mean(axis=0)
    return SpectralEstimate(grid=frequency_grid(n_fft, x.dt), values=values,
                            kind="cross", n_averages=fx.shape[0],
                            window_correction=u,
                            label=f"{x.label}*{y.label}")


def smooth_frequency(estimate: SpectralEstimate, span: int) -> SpectralEstimate:
    """Boxcar (Daniell) smoothing over ``span`` bins, edges truncated to
    the available window."""
    if span < 1 or span % 2 == 0:
        raise ValueError(f"span must be odd and >= 1, got {span}")
    if span == 1:
        return estimate
    v = estimate.values
    half = span // 2
    smoothed = np.empty_like(v)
    for k in range(v.size):
        lo = max(0, k - half)
        hi = min(v.size, k + half + 1)
        smoothed[k] = v[lo:hi].mean()
    return SpectralEstimate(grid=estimate.grid, values=smoothed,
                            kind=estimate.kind,
                            n_averages=estimate.n_averages * span,
                            window_correction=estimate.window_correction,
                            label=estimate.label)


# ---------------------------------------------------------------------------
# Higher-order and log-spectral estimates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Bispectrum:
    """Third-order spectrum over the principal triangle
    f1 >= f2 >= 0, f1 + f2 <= fmax; the full plane follows by symmetry."""

    grid: FrequencyGrid
    k1: np.ndarray
    k2: np.ndarray
    values: np.ndarray
    bicoherence: np.ndarray
    n_segments: int

    @property
    def f1(self) -> np.ndarray:
        return self.k1 * self.grid.df

    @property
    def f2(self) -> np.ndarray:
        return self.k2 * self.grid.df

    def value_at(self, i: int, j: int) -> complex:
        """B at bin pair (i, j); arguments may come in either order."""
        a, b = (i, j) if i >= j else (j, i)
        hit = np.nonzero((self.k1 == a) & (self.k2 == b))[0]
        if hit.size == 0:
            raise ValueError(f"bin pair ({i}, {j}) outside the stored triangle")
        return complex(self.values[hit[0]])


def bispectrum(series: TimeSeries, n_fft: int, n_segments: int,
               taper_p: float = 0.0) -> Bispectrum:
    """Segment-averaged bispectrum with bicoherence normalization.

    ``B(f1, f2) = mean_seg X(f1) X(f2) conj(X(f1+f2))`` over non-overlapping
    mean-removed segments, and ``b^2 = |B|^2 / (mean |X(f1)X(f2)|^2 *
    mean |X(f1+f2)|^2)``, which lies in [0, 1] by Cauchy-Schwarz.
    """
    if not is_power_of_two(n_fft) or n_fft < 8:
        raise ValueError(f"n_fft must be a power of two >= 8, got {n_fft}")
    if n_segments < 1:
        raise ValueError("n_segments must be >= 1")
    if len(series) < n_fft * n_segments:
        raise ValueError(
            f"need {n_fft * n_segments} samples for {n_segments} "
            f"non-overlapping segments, have {len(series)}")
    n_bins = n_fft // 2
    k1_list, k2_list = [], []
    for a in range(n_bins + 1):
        top = min(a, n_bins - a)
        k1_list.extend([a] * (top + 1))
        k2_list.extend(range(top + 1))
    k1 = np.asarray(k1_list, dtype=np.intp)
    k2 = np.asarray(k2_list, dtype=np.intp)
    ksum = k1 + k2

    window = taper_window(n_fft, taper_p)
    num = np.zeros(k1.size, dtype=complex)
    d_pair = np.zeros(k1.size)
    d_sum = np.zeros(k1.size)
    for s in range(n_segments):
        seg = series.values[s * n_fft:(s + 1) * n_fft]
        seg = (seg - seg.mean()) * window
        x = fft(seg)
        prod = x[k1] * x[k2]
        num += prod * np.conj(x[ksum])
        d_pair += np.abs(prod) ** 2
        d_sum += np.abs(x[ksum]) ** 2
    num /= n_segments
    d_pair /= n_segments
    d_sum /= n_segments
    denom = d_pair * d_sum
    with np.errstate(invalid="ignore", divide="ignore"):
        bicoh = np.where(denom > 0, (np.abs(num) ** 2) / denom, 0.0)
    bicoh = np.clip(bicoh, 0.0, 1.0)
    return Bispectrum(grid=frequency_grid(n_fft, series.dt), k1=k1, k2=k2,
                      values=num, bicoherence=bicoh, n_segments=n_segments)


def cepstrum(series: TimeSeries, n_fft: int | None = None,
             taper_p: float = 0.0) -> SpectralEstimate:
    """Real cepstrum: inverse transform of the log power spectrum.

    The PSD is floored at ``max(G) * 1e-12`` before the logarithm, so the
    output is always finite; an all-zero spectrum is degenerate.
    """
    est = psd(series, n_fft=n_fft, taper_p=taper_p, n_segments=1)
    g = est.values
    peak = float(np.max(g))
    if peak == 0.0:
        raise DegenerateInputError("all-zero spectrum has no cepstrum")
    log_g = np.log(np.maximum(g, peak * 1e-12))
    n_fft = 2 * est.grid.n_bins
    full = np.empty(n_fft)
    full[: est.grid.n_bins + 1] = log_g
    full[est.grid.n_bins + 1:] = log_g[-2:0:-1]
    ceps = np.real(fft(full, inverse=True))
    return SpectralEstimate(grid=est.grid,
                            values=ceps[: est.grid.n_bins + 1],
                            kind="cepstrum", n_averages=1,
                            window_correction=est.window_correction,
                            label=series.label)
