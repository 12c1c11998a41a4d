"""Audio front end and the handcrafted functional-feature + PCA baseline.

Front end: windowed-sinc resampling to 16 kHz, pad/truncate to a fixed
duration, and HTK-scale log-Mel spectrograms (400-sample Hann frames, hop
160, 512-point FFT, natural log with a 1e-10 floor).

The 88-dimensional functional set is a documented stand-in for the
eGeMAPS inventory: 14 frame-level descriptors, each summarized by six
functionals, plus four voicing/rhythm statistics. See ``FEATURE_NAMES``
for the exact order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import SAMPLE_RATE, AudioClip

LOG_FLOOR = 1e-10
WIN_LENGTH = 400
HOP_LENGTH = 160
N_FFT = 512
RESAMPLE_HALF_TAPS = 32
KAISER_BETA = 8.6
RESAMPLE_ROLLOFF = 0.95


class RateError(ValueError):
    pass


class AudioLengthError(ValueError):
    pass


# -------------------------------------------------------------------- resample

def resample_to_16k(clip: AudioClip) -> AudioClip:
    """Kaiser-windowed sinc interpolation, 64 taps per output phase.

    Weights are renormalized to unit sum for every output sample, which keeps
    DC exact including near the clip edges.
    """
    rate = clip.sample_rate
    if not 8000 <= rate <= 96000:
        raise RateError(f"unsupported sample rate {rate} Hz (need 8000..96000)")
    x = np.asarray(clip.samples, dtype=np.float64)
    if rate == SAMPLE_RATE:
        return clip
    n_in = len(x)
    n_out = int(round(n_in * SAMPLE_RATE / rate))
    cutoff = min(1.0, SAMPLE_RATE / rate) * RESAMPLE_ROLLOFF
    offsets = np.arange(-RESAMPLE_HALF_TAPS + 1, RESAMPLE_HALF_TAPS + 1)
    out = np.empty(n_out)
    step = rate / SAMPLE_RATE
    for start in range(0, n_out, 8192):
        pos = np.arange(start, min(start + 8192, n_out)) * step
        base = np.floor(pos).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        tau = pos[:, None] - idx
        w = cutoff * np.sinc(cutoff * tau) * _kaiser(tau / RESAMPLE_HALF_TAPS)
        valid = (idx >= 0) & (idx < n_in)
        w = np.where(valid, w, 0.0)
        w /= w.sum(axis=1, keepdims=True)
        out[start:start + len(pos)] = np.sum(w * x[np.clip(idx, 0, n_in - 1)], axis=1)
    return AudioClip(out.astype(np.float32), SAMPLE_RATE)


def _kaiser(u):
    """Kaiser window evaluated at normalized positions ``u`` in [-1, 1]."""
    u = np.clip(u, -1.0, 1.0)
    return np.i0(KAISER_BETA * np.sqrt(1.0 - u * u)) / np.i0(KAISER_BETA)


def pad_or_truncate(clip: AudioClip, duration_s: float = 30.0) -> AudioClip:
    if clip.sample_rate != SAMPLE_RATE:
        raise RateError(f"expected {SAMPLE_RATE} Hz input, got {clip.sample_rate}")
    n = int(round(duration_s * SAMPLE_RATE))
    x = np.asarray(clip.samples)
    if len(x) == n:
        return clip
    if len(x) > n:
        return AudioClip(x[:n].copy(), SAMPLE_RATE)
    out = np.zeros(n, dtype=x.dtype)
    out[: len(x)] = x
    return AudioClip(out, SAMPLE_RATE)


# --------------------------------------------------------------------- log-Mel

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_mels: int = 80, n_fft: int = N_FFT, sr: int = SAMPLE_RATE,
                   fmin: float = 0.0, fmax: float = 8000.0):
    """Peak-one triangular filters on the HTK mel scale; returns (weights, centers_hz)."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return weights, edges[1:-1]


def frame_signal(x, win: int, hop: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if len(x) < win:
        raise AudioLengthError(f"need at least {win} samples, got {len(x)}")
    return sliding_window_view(x, win)[::hop]


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)


def power_spectrogram(x, win: int = WIN_LENGTH, hop: int = HOP_LENGTH, n_fft: int = N_FFT):
    frames = frame_signal(x, win, hop) * hann(win)
    return np.abs(np.fft.rfft(frames, n=n_fft, axis=1)) ** 2


@dataclass(frozen=True)
class LogMel:
    frames: np.ndarray  # T x n_mels
    n_mels: int
    win_length: int = WIN_LENGTH
    hop_length: int = HOP_LENGTH


def log_mel(clip: AudioClip, n_mels: int = 80) -> LogMel:
    if clip.sample_rate != SAMPLE_RATE:
        raise RateError(f"expected {SAMPLE_RATE} Hz input, got {clip.sample_rate}")
    spec = power_spectrogram(clip.samples)
    fb, _ = mel_filterbank(n_mels)
    mel = spec @ fb.T
    return LogMel(np.log(np.maximum(mel, LOG_FLOOR)), n_mels)


def normalize_log_mel(frames: np.ndarray) -> np.ndarray:
    """Encoder input scaling in log10 units, referenced to the utterance maximum.

    Cells are clamped to 8 decades below the peak and mapped by
    ``(x - max + 4) / 4`` into [-1, 1], so overall recording gain cancels.
    """
    x = np.asarray(frames, dtype=np.float64) / math.log(10.0)
    top = x.max()
    x = np.maximum(x, top - 8.0)
    return (x - top + 4.0) / 4.0


# --------------------------------------------------------- functional features

FUNC_WIN = 640
FUNC_HOP = 160
FUNC_NFFT = 1024
F0_MIN, F0_MAX = 60.0, 400.0
VOICING_THRESHOLD = 0.5

LLD_NAMES = (
    "log_energy", "zcr", "f0", "spectral_centroid", "spectral_slope", "spectral_flux",
    "spectral_rolloff85", "spectral_flatness", "band_ratio_0_500", "band_ratio_500_1000",
    "band_ratio_1000_2000", "band_ratio_2000_4000", "alpha_ratio", "delta_log_energy",
)
FUNCTIONALS = ("mean", "stddev", "p20", "p50", "p80", "range")
GLOBAL_NAMES = ("voiced_fraction", "voiced_segments_per_s", "mean_voiced_segment_s",
                "energy_peaks_per_s")
FEATURE_NAMES = tuple(f"{l}_{f}" for l in LLD_NAMES for f in FUNCTIONALS) + GLOBAL_NAMES
N_FUNCTIONAL_FEATURES = len(FEATURE_NAMES)  # 88


def _f0_track(frames: np.ndarray, sr: int):
    """Autocorrelation pitch with parabolic peak refinement; 0 for unvoiced frames."""
    lag_min = int(math.floor(sr / F0_MAX))
    lag_max = int(math.ceil(sr / F0_MIN))
    n_frames, win = frames.shape
    x = frames - frames.mean(axis=1, keepdims=True)
    spec = np.fft.rfft(x, n=2 * FUNC_NFFT, axis=1)
    ac = np.fft.irfft(np.abs(spec) ** 2, axis=1)[:, : lag_max + 2]
    # energy of the overlapping segments for normalization
    csum = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(x * x, axis=1)], axis=1)
    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    lags = np.arange(lag_min, lag_max + 1)
    for i in range(n_frames):
        e_head = csum[i, win - lags]
        e_tail = csum[i, win] - csum[i, lags]
        denom = np.sqrt(e_head * e_tail)
        if csum[i, win] <= 1e-8 or np.any(denom <= 0):
            continue
        r = ac[i, lags] / denom
        best = float(r.max())
        if best < VOICING_THRESHOLD:
            continue
        # smallest lag within 90% of the best peak avoids octave-down errors
        cand = np.flatnonzero(r >= 0.9 * best)
        j = cand[0]
        while j + 1 < len(r) and r[j + 1] > r[j]:
            j += 1
        lag = float(lags[j])
        if 0 < j < len(r) - 1:
            a, b, c = r[j - 1], r[j], r[j + 1]
            den = a - 2 * b + c
            if den != 0:
                lag += 0.5 * (a - c) / den
        f0[i] = sr / lag
        voiced[i] = True
    return f0, voiced


def _functionals(values: np.ndarray) -> np.ndarray:
    if values.size == 0:
        return np.zeros(len(FUNCTIONALS))
    p20, p50, p80 = np.percentile(values, [20, 50, 80])
    return np.array([values.mean(), values.std(), p20, p50, p80, values.max() - values.min()])


def _runs(mask: np.ndarray) -> list[int]:
    runs, n = [], 0
    for v in mask:
        if v:
            n += 1
        elif n:
            runs.append(n)
            n = 0
    if n:
        runs.append(n)
    return runs


def low_level_descriptors(clip: AudioClip) -> tuple[np.ndarray, np.ndarray]:
    """Frame-level descriptor matrix (frames x 14) and voicing mask."""
    if clip.sample_rate != SAMPLE_RATE:
        raise RateError(f"expected {SAMPLE_RATE} Hz input, got {clip.sample_rate}")
    x = np.asarray(clip.samples, dtype=np.float64)
    if len(x) < SAMPLE_RATE // 2:
        raise AudioLengthError(f"need at least 0.5 s of audio, got {len(x)} samples")
    sr = SAMPLE_RATE
    frames = frame_signal(x, FUNC_WIN, FUNC_HOP)
    n_frames = frames.shape[0]

    log_energy = np.log(np.maximum(np.mean(frames ** 2, axis=1), LOG_FLOOR))
    signs = np.signbit(frames)
    zcr = np.mean(signs[:, 1:] != signs[:, :-1], axis=1)
    f0, voiced = _f0_track(frames, sr)

    power = np.abs(np.fft.rfft(frames * hann(FUNC_WIN), n=FUNC_NFFT, axis=1)) ** 2
    freqs = np.fft.rfftfreq(FUNC_NFFT, 1.0 / sr)
    total = power.sum(axis=1)
    safe_total = np.where(total > 0, total, 1.0)
    centroid = np.where(total > 0, power @ freqs / safe_total, 0.0)

    log_power = np.log10(np.maximum(power, LOG_FLOOR))
    fk = freqs / 1000.0
    fk_c = fk - fk.mean()
    slope = (log_power - log_power.mean(axis=1, keepdims=True)) @ fk_c / np.sum(fk_c ** 2)

    norm = power / safe_total[:, None]
    flux = np.zeros(n_frames)
    flux[1:] = np.sum(np.diff(norm, axis=0) ** 2, axis=1)

    cum = np.cumsum(power, axis=1)
    roll_idx = np.argmax(cum >= 0.85 * safe_total[:, None], axis=1)
    rolloff = np.where(total > 0, freqs[roll_idx], 0.0)

    geo = np.exp(np.mean(np.log(np.maximum(power, LOG_FLOOR)), axis=1))
    flatness = np.where(total > 0, geo / np.maximum(power.mean(axis=1), LOG_FLOOR), 0.0)

    def band(lo, hi):
        return power[:, (freqs >= lo) & (freqs < hi)].sum(axis=1)

    ratios = [np.log((band(lo, hi) + LOG_FLOOR) / (total + LOG_FLOOR))
              for lo, hi in ((0, 500), (500, 1000), (1000, 2000), (2000, 4000))]
    alpha = np.log((band(50, 1000) + LOG_FLOOR) / (band(1000, 5000) + LOG_FLOOR))
    delta = np.zeros(n_frames)
    delta[1:] = np.diff(log_energy)

    llds = np.column_stack([log_energy, zcr, f0, centroid, slope, flux, rolloff, flatness,
                            *ratios, alpha, delta])
    return llds, voiced


def functional_features(clip: AudioClip) -> np.ndarray:
    """88 utterance-level values ordered as ``FEATURE_NAMES``."""
    llds, voiced = low_level_descriptors(clip)
    n_frames = llds.shape[0]
    parts = []
    for j, name in enumerate(LLD_NAMES):
        col = llds[:, j]
        parts.append(_functionals(col[voiced] if name == "f0" else col))
    duration = n_frames * FUNC_HOP / SAMPLE_RATE
    runs = _runs(voiced)
    energy = llds[:, 0]
    interior = energy[1:-1]
    peaks = np.sum((interior > energy[:-2]) & (interior >= energy[2:]) & (interior > energy.mean()))
    globals_ = np.array([
        voiced.mean(),
        len(runs) / duration,
        (np.mean(runs) * FUNC_HOP / SAMPLE_RATE) if runs else 0.0,
        peaks / duration,
    ])
    out = np.concatenate(parts + [globals_])
    assert out.shape == (N_FUNCTIONAL_FEATURES,)
    return out


# ------------------------------------------------------------------ scaling/PCA

@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x) -> "Standardizer":
        x = np.asarray(x, dtype=np.float64)
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.scale


@dataclass
class PCAModel:
    mean: np.ndarray
    components: np.ndarray  # D x n_components, orthonormal columns
    explained_variance: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[1]


def pca_fit(x, n_components: int = 100) -> PCAModel:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("PCA needs a 2-D matrix with at least 2 rows")
    n, d = x.shape
    limit = min(n - 1, d)
    if n_components > limit:
        warnings.warn(f"n_components={n_components} clamped to {limit} (n={n}, D={d})",
                      stacklevel=2)
        n_components = limit
    if n_components < 1:
        raise ValueError("n_components must be >= 1")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:n_components]
    comps = evecs[:, order]
    # deterministic sign: largest-magnitude loading positive
    flip = np.sign(comps[np.argmax(np.abs(comps), axis=0), np.arange(n_components)])
    comps = comps * np.where(flip == 0, 1.0, flip)
    return PCAModel(mean, comps, np.maximum(evals[order], 0.0))


def pca_transform(model: PCAModel, x) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) - model.mean) @ model.components


def pca_inverse(model: PCAModel, z) -> np.ndarray:
    return np.asarray(z, dtype=np.float64) @ model.components.T + model.mean
