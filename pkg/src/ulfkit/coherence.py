"""Coherence-family functions over multi-channel process complexes:
ordinary, partial (the literal three-channel form and the general
Schur-complement conditioning), multiple coherence, gain/phase, and
correlation functions.

Undefined bins (singular conditioning, zero auto-spectra) are carried as
NaN, never as 0 or 1 - both of those are meaningful coherence values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .signal_model import FrequencyGrid, ProcessComplex, TimeSeries, frequency_grid
from .spectral import segment_ffts

_EPS_BRACKET = 1e-12


@dataclass(frozen=True)
class SpectralMatrix:
    """Per-frequency Hermitian matrix of auto/cross spectral densities.

    ``values[k]`` is the m x m matrix at bin k; the diagonal is real and
    non-negative, and Hermitian symmetry holds by construction.
    """

    grid: FrequencyGrid
    values: np.ndarray
    labels: tuple[str, ...]
    n_averages: int

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        m = len(self.labels)
        if v.ndim != 3 or v.shape[1:] != (m, m) or v.shape[0] != self.grid.n_bins + 1:
            raise ValueError(f"expected ({self.grid.n_bins + 1}, {m}, {m}) "
                             f"matrix stack, got {v.shape}")
        if not np.allclose(v, np.conj(np.swapaxes(v, 1, 2)), atol=1e-12):
            raise ValueError("spectral matrix must be Hermitian at every bin")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n_channels(self) -> int:
        return len(self.labels)

    def index(self, channel) -> int:
        """Resolve a channel given by index or label."""
        if isinstance(channel, str):
            try:
                return self.labels.index(channel)
            except ValueError:
                raise ValueError(f"unknown channel {channel!r}; "
                                 f"have {list(self.labels)}") from None
        i = int(channel)
        if not (0 <= i < self.n_channels):
            raise ValueError(f"channel index {i} out of range")
        return i

    def auto(self, i) -> np.ndarray:
        i = self.index(i)
        return np.real(self.values[:, i, i])

    def cross(self, i, j) -> np.ndarray:
        return self.values[:, self.index(i), self.index(j)]


@dataclass(frozen=True)
class CoherenceFunction:
    """gamma^2(f) in [0, 1]; undefined bins are NaN."""

    grid: FrequencyGrid
    values: np.ndarray
    kind: str
    n_averages: int
    label: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_bins + 1,):
            raise ValueError("coherence length does not match grid")
        defined = np.isfinite(v)
        if np.any(v[defined] < 0) or np.any(v[defined] > 1):
            raise ValueError("coherence values must lie in [0, 1]")
        if self.n_averages < 2:
            raise ValueError("coherence of a single average is identically 1; "
                             "need n_averages >= 2")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def frequencies(self) -> np.ndarray:
        return self.grid.frequencies

    def band_mean(self, f_lo: float, f_hi: float) -> float:
        """Mean over defined bins with f_lo <= f <= f_hi."""
        f = self.frequencies
        mask = (f >= f_lo) & (f <= f_hi) & self.defined
        if not np.any(mask):
            raise ValueError(f"no defined bins in band [{f_lo}, {f_hi}]")
        return float(np.mean(self.values[mask]))


def _clamp(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=float)
    finite = np.isfinite(out)
    out[finite] = np.clip(out[finite], 0.0, 1.0)
    out[~finite] = np.nan
    return out


def spectral_matrix(complex_: ProcessComplex, *, n_fft: int | None = None,
                    taper_p: float = 0.0, detrend_degree: int | None = 0,
                    n_segments: int | None = None, overlap: float = 0.0
                    ) -> SpectralMatrix:
    """Estimate the full auto/cross spectral matrix of a process complex.

    All channels share one segmentation and taper.  At least two segment
    averages are required: coherence estimated from one average is
    identically 1 and carries no information.
    """
    channels = complex_.channels
    if len(channels) < 2:
        raise ValueError("need at least 2 channels")
    opts = dict(n_fft=n_fft, taper_p=taper_p, detrend_degree=detrend_degree,
                n_segments=n_segments, overlap=overlap)
    ffts = []
    u = 1.0
    used_n_fft = None
    for ch in channels:
        x, u, used_n_fft = segment_ffts(ch, **opts)
        ffts.append(x)
    stack = np.stack(ffts)          # (m, n_seg, n_fft)
    n_seg = stack.shape[1]
    if n_seg < 2:
        raise ValueError("single-segment spectral matrix cannot feed "
                         "coherence (one average gives gamma^2 = 1); "
                         "request n_segments >= 2")
    n_bins = used_n_fft // 2
    one_sided = stack[:, :, : n_bins + 1]
    dt = complex_.dt
    scale = 2.0 * dt / (used_n_fft * u)
    # S[k, i, j] = scale * mean_seg conj(X_i) X_j
    s = np.einsum("isk,jsk->kij", np.conj(one_sided), one_sided) * (scale / n_seg)
    s[0] *= 0.5
    s[n_bins] *= 0.5
    # force exact Hermitian symmetry against roundoff
    s = 0.5 * (s + np.conj(np.swapaxes(s, 1, 2)))
    return SpectralMatrix(grid=frequency_grid(used_n_fft, dt), values=s,
                          labels=complex_.labels, n_averages=n_seg)


def ordinary_coherence(s: SpectralMatrix, i, j) -> CoherenceFunction:
    """gamma^2_ij = |S_ij|^2 / (S_ii S_jj), clamped to [0, 1]."""
    i, j = s.index(i), s.index(j)
    if i == j:
        raise ValueError("ordinary coherence needs two distinct channels")
    gii, gjj = s.auto(i), s.auto(j)
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.abs(s.cross(i, j)) ** 2 / (gii * gjj)
    gamma[(gii <= 0) | (gjj <= 0)] = np.nan
    return CoherenceFunction(grid=s.grid, values=_clamp(gamma),
                             kind="ordinary", n_averages=s.n_averages,
                             label=f"{s.labels[i]}:{s.labels[j]}")


def partial_coherence_eq6(s: SpectralMatrix, p, n, t) -> CoherenceFunction:
    """Three-channel partial coherence in its explicit closed form.

    Channel roles: p is the retained input, n the output, t the excluded
    channel whose least-squares influence is removed from both.  Squared
    cross-spectra enter as squared magnitudes and the t-to-n cross term in
    the numerator as G_pt G_tn, which keeps the estimate real and equal to
    the general conditioning route.  Bins where the excluded channel
    explains either remaining channel entirely are undefined.
    """
    p, n, t = s.index(p), s.index(n), s.index(t)
    if len({p, n, t}) != 3:
        raise ValueError("channels p, n, t must be distinct")
    g_p, g_n, g_t = s.auto(p), s.auto(n), s.auto(t)
    g_pn = s.cross(p, n)
    g_pt = s.cross(p, t)
    g_tn = s.cross(t, n)
    with np.errstate(invalid="ignore", divide="ignore"):
        bracket_p = 1.0 - np.abs(g_pt) ** 2 / (g_p * g_t)
        bracket_n = 1.0 - np.abs(g_tn) ** 2 / (g_n * g_t)
        numerator = np.abs(g_pn - g_pt * g_tn / g_t) ** 2
        gamma = numerator / (g_p * bracket_p * g_n * bracket_n)
    bad = ((g_t <= 0) | (g_p <= 0) | (g_n <= 0)
           | (bracket_p <= _EPS_BRACKET) | (bracket_n <= _EPS_BRACKET))
    gamma[bad] = np.nan
    return CoherenceFunction(grid=s.grid, values=_clamp(gamma),
                             kind="partial", n_averages=s.n_averages,
                             label=f"{s.labels[p]}:{s.labels[n]}.{s.labels[t]}")


def _conditioned_block(s: SpectralMatrix, keep: list[int], drop: list[int]
                       ) -> tuple[np.ndarray, np.ndarray]:
    """Schur complement S_XX - S_XZ S_ZZ^-1 S_ZX per bin.

    Returns (block, ok) where ok flags bins whose conditioning inverse
    exists; a ridge of 1e-10 tr(S)/m is retried on bins that fail plain
    inversion, and bins that still fail are marked undefined.
    """
    v = s.values
    sxx = v[np.ix_(np.arange(v.shape[0]), keep, keep)]
    if not drop:
        return sxx.copy(), np.ones(v.shape[0], dtype=bool)
    sxz = v[np.ix_(np.arange(v.shape[0]), keep, drop)]
    szz = v[np.ix_(np.arange(v.shape[0]), drop, drop)]
    szx = np.conj(np.swapaxes(sxz, 1, 2))
    n_bins = v.shape[0]
    ok = np.ones(n_bins, dtype=bool)
    solved = np.empty_like(szx)
    ridge = 1e-10 * np.real(np.trace(v, axis1=1, axis2=2)) / s.n_channels
    eye = np.eye(len(drop))
    for k in range(n_bins):
        try:
            solved[k] = np.linalg.solve(szz[k], szx[k])
        except np.linalg.LinAlgError:
            try:
                solved[k] = np.linalg.solve(szz[k] + ridge[k] * eye, szx[k])
            except np.linalg.LinAlgError:
                ok[k] = False
                solved[k] = 0.0
        if ok[k] and not np.all(np.isfinite(solved[k])):
            ok[k] = False
    return sxx - sxz @ solved, ok


def partial_coherence(s: SpectralMatrix, i, j, conditioning=()) -> CoherenceFunction:
    """Partial coherence of channels i, j after removing the least-squares
    influence of the conditioning set (general case; an empty set gives
    ordinary coherence)."""
    i, j = s.index(i), s.index(j)
    z = [s.index(c) for c in conditioning]
    if i == j:
        raise ValueError("partial coherence needs two distinct channels")
    if i in z or j in z:
        raise ValueError("conditioning set must not contain i or j")
    if len(z) > s.n_channels - 2:
        raise ValueError("conditioning set too large")
    block, ok = _conditioned_block(s, [i, j], z)
    cii = np.real(block[:, 0, 0])
    cjj = np.real(block[:, 1, 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        gamma = np.abs(block[:, 0, 1]) ** 2 / (cii * cjj)
    gamma[~ok | (cii <= _EPS_BRACKET * np.maximum(s.auto(i), 1e-300))
          | (cjj <= _EPS_BRACKET * np.maximum(s.auto(j), 1e-300))] = np.nan
    cond = ",".join(s.labels[c] for c in z)
    return CoherenceFunction(grid=s.grid, values=_clamp(gamma),
                             kind="partial", n_averages=s.n_averages,
                             label=f"{s.labels[i]}:{s.labels[j]}" +
                                   (f".{cond}" if cond else ""))


def multiple_coherence(s: SpectralMatrix, output, inputs) -> CoherenceFunction:
    """gamma^2_{j:X} = 1 - 1 / (S_jj [S~^-1]_jj) over the X union {j}
    submatrix: the fraction of the output spectrum explained jointly by
    the input set."""
    j = s.index(output)
    x = [s.index(c) for c in inputs]
    if not x:
        raise ValueError("need at least one input channel")
    if j in x:
        raise ValueError("output must not be among the inputs")
    sel = [j] + x
    sub = s.values[np.ix_(np.arange(s.values.shape[0]), sel, sel)]
    sjj = s.auto(j)
    n_bins = sub.shape[0]
    gamma = np.full(n_bins, np.nan)
    ridge = 1e-10 * np.real(np.trace(s.values, axis1=1, axis2=2)) / s.n_channels
    eye = np.eye(len(sel))
    for k in range(n_bins):
        inv = None
        try:
            inv = np.linalg.inv(sub[k])
        except np.linalg.LinAlgError:
            try:
                inv = np.linalg.inv(sub[k] + ridge[k] * eye)
            except np.linalg.LinAlgError:
                continue
        denom = sjj[k] * np.real(inv[0, 0])
        if np.isfinite(denom) and denom > 0:
            gamma[k] = 1.0 - 1.0 / denom
    label = f"{s.labels[j]}:{{{','.join(s.labels[c] for c in x)}}}"
    return CoherenceFunction(grid=s.grid, values=_clamp(gamma),
                             kind="multiple", n_averages=s.n_averages,
                             label=label)


def gain_phase(s: SpectralMatrix, i, j) -> tuple[np.ndarray, np.ndarray]:
    """Frequency-response estimate from input i to output j:
    H = S_ij / S_ii; returns (|H|, arg in (-pi, pi]) with NaN where the
    input auto-spectrum vanishes."""
    i, j = s.index(i), s.index(j)
    if i == j:
        raise ValueError("gain/phase needs two distinct channels")
    gii = s.auto(i)
    with np.errstate(invalid="ignore", divide="ignore"):
        h = s.cross(i, j) / gii
    gain = np.abs(h)
    phase = np.angle(h)
    bad = gii <= 0
    gain[bad] = np.nan
    phase[bad] = np.nan
    return gain, phase


@dataclass(frozen=True)
class CorrelationFunction:
    """Biased correlation estimate over integer lags."""

    lags: np.ndarray
    values: np.ndarray
    dt: float
    kind: str

    @property
    def lag_seconds(self) -> np.ndarray:
        return self.lags * self.dt

    def at(self, lag: int) -> float:
        hit = np.nonzero(self.lags == lag)[0]
        if hit.size == 0:
            raise ValueError(f"lag {lag} outside computed range")
        return float(self.values[hit[0]])


def correlation(x: TimeSeries, y: TimeSeries | None = None,
                max_lag: int | None = None) -> CorrelationFunction:
    """Biased (1/N) correlation function on centered inputs.

    ``R_xy(l) = (1/N) sum_t x_t y_{t+l}`` for l in [-max_lag, max_lag];
    the auto case at lag 0 is the population variance.
    """
    n = len(x)
    if max_lag is None:
        max_lag = n - 1
    if max_lag >= n:
        raise ValueError(f"max_lag={max_lag} must be below the length {n}")
    if max_lag < 0:
        raise ValueError("max_lag must be non-negative")
    auto = y is None
    if not auto:
        if len(y) != n:
            raise ValueError("series must have equal lengths")
        if not math.isclose(x.dt, y.dt, rel_tol=1e-12):
            raise ValueError("sampling steps differ")
    a = x.values - x.values.mean()
    b = a if auto else y.values - y.values.mean()
    lags = np.arange(-max_lag, max_lag + 1)
    vals = np.empty(lags.size)
    for idx, lag in enumerate(lags):
        if lag >= 0:
            vals[idx] = np.dot(a[: n - lag], b[lag:]) / n
        else:
            vals[idx] = np.dot(a[-lag:], b[: n + lag]) / n
    return CorrelationFunction(lags=lags, values=vals, dt=x.dt,
                               kind="auto" if auto else "cross")
