"""Frame-level descriptors: energies, silence, channel ratio, mel bands, MFCCs and HPCP."""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

RATE = 44100
FRAME_LEN = 2048
N_MELS = 128
SILENCE_DB = -35.0

VOCAL_BAND = (500.0, 6000.0)
LOW_BAND = (80.0, 400.0)

MFCC_WIN = 1014   # 23 ms
MFCC_HOP = 441    # 10 ms
MFCC_NFFT = 1024
MFCC_BANDS = 26
N_MFCC = 13
MFCC_SMOOTH = 101  # 1 s of hops

HPCP_FRAME = 4096
HPCP_FMIN, HPCP_FMAX = 40.0, 5000.0
HPCP_PEAK_DB = -60.0
PITCH_CLASSES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")


def frame_signal(signal, frame_len=FRAME_LEN, hop=None):
    """Split into frames of ``frame_len``; trailing samples are dropped."""
    hop = frame_len if hop is None else hop
    signal = np.asarray(signal, dtype=np.float64)
    if len(signal) < frame_len:
        return np.zeros((0, frame_len))
    return sliding_window_view(signal, frame_len)[::hop]


def frame_energies(signal) -> np.ndarray:
    """Sum of squared samples per non-overlapping 2048-sample frame."""
    frames = frame_signal(signal)
    return np.einsum("ij,ij->i", frames, frames)


def silence_mask(energies) -> np.ndarray:
    """True for frames at least 35 dB below the loudest frame (zero energy is always silent)."""
    e = np.asarray(energies, dtype=np.float64)
    if e.size == 0:
        raise ValueError("silence_mask needs at least one energy value")
    e_max = e.max()
    if e_max <= 0.0:
        return np.ones(e.shape, dtype=bool)
    with np.errstate(divide="ignore"):
        db = 10.0 * np.log10(e / e_max)
    # tiny slack so that frames placed exactly on the threshold count as silent
    return (e <= 0.0) | (db <= SILENCE_DB + 1e-9)


@lru_cache(maxsize=None)
def _hann(n):
    return np.hanning(n + 1)[:-1]  # periodic


def magnitude_spectra(signal, frame_len=FRAME_LEN, hop=None, nfft=None, window=True):
    frames = frame_signal(signal, frame_len, hop)
    if window:
        frames = frames * _hann(frame_len)
    return np.abs(np.fft.rfft(frames, n=nfft or frame_len, axis=1))


def band_ratios(signal, rate=RATE) -> np.ndarray:
    """Per-frame ratio of summed |DFT| in 500 Hz-6 kHz over 80-400 Hz."""
    mags = magnitude_spectra(signal)
    freqs = np.fft.rfftfreq(FRAME_LEN, 1.0 / rate)
    hi = mags[:, (freqs >= VOCAL_BAND[0]) & (freqs <= VOCAL_BAND[1])].sum(axis=1)
    lo = mags[:, (freqs >= LOW_BAND[0]) & (freqs <= LOW_BAND[1])].sum(axis=1)
    return hi / (lo + 1e-12 * (hi + lo) + 1e-300)


def select_vocal_channel(left, right, rate=RATE) -> int:
    """Index (0 or 1) of the channel with the higher mean band ratio over non-silent frames.

    Ties go to channel 0. If every frame is silent a warning is issued and 0 is returned.
    """
    e = frame_energies(left) + frame_energies(right)
    if e.size == 0 or e.max() <= 0.0:
        warnings.warn("degenerate input for channel selection, defaulting to channel 0", RuntimeWarning)
        return 0
    active = ~silence_mask(e)
    r_left = band_ratios(left, rate)[active].mean()
    r_right = band_ratios(right, rate)[active].mean()
    return 1 if r_right > r_left else 0


# -- mel filterbanks ---------------------------------------------------------

def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=None)
def mel_filterbank(n_mels=N_MELS, nfft=FRAME_LEN, rate=RATE, fmin=0.0, fmax=None) -> np.ndarray:
    """Triangular filters with unit peak, evaluated at the DFT bin frequencies.

    Returns a read-only (n_mels, nfft // 2 + 1) matrix.
    """
    fmax = rate / 2.0 if fmax is None else fmax
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.fft.rfftfreq(nfft, 1.0 / rate)
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lower) / (center - lower)
    falling = (upper - freqs[None, :]) / (upper - center)
    fb = np.clip(np.minimum(rising, falling), 0.0, None)
    fb.setflags(write=False)
    return fb


def mel_energies(signal, log_scaled=False) -> np.ndarray:
    """128 mel-band energies per 2048-sample frame, shape (n_frames, 128).

    Band energy is the filter-weighted sum of the Hann-windowed power spectrum;
    ``log_scaled`` applies ln(1 + e).
    """
    power = magnitude_spectra(signal) ** 2
    mel = power @ mel_filterbank().T
    return np.log1p(mel) if log_scaled else mel


# -- MFCC baseline features ---------------------------------------------------

def deltas(x, width=2):
    """Regression-based time derivative along axis 0 with edge replication."""
    if len(x) == 0:
        return x.copy()
    padded = np.pad(x, ((width, width), (0, 0)), mode="edge")
    n = len(x)
    num = sum(k * (padded[width + k:width + k + n] - padded[width - k:width - k + n])
              for k in range(1, width + 1))
    return num / (2.0 * sum(k * k for k in range(1, width + 1)))


def moving_average(x, width):
    """Centered moving average along axis 0; windows shrink at the edges."""
    if len(x) == 0:
        return x.copy()
    half = width // 2
    c = np.vstack([np.zeros((1, x.shape[1])), np.cumsum(x, axis=0)])
    idx = np.arange(len(x))
    lo = np.clip(idx - half, 0, len(x))
    hi = np.clip(idx + half + 1, 0, len(x))
    return (c[hi] - c[lo]) / (hi - lo)[:, None]


def mfcc_raw(signal, rate=RATE) -> np.ndarray:
    """13 MFCCs per 23 ms window at a 10 ms hop (no deltas, no smoothing)."""
    mags = magnitude_spectra(signal, MFCC_WIN, MFCC_HOP, nfft=MFCC_NFFT)
    if len(mags) == 0:
        return np.zeros((0, N_MFCC))
    mel = (mags ** 2) @ mel_filterbank(MFCC_BANDS, MFCC_NFFT, rate, 0.0, rate / 2.0).T
    return dct(np.log(mel + 1e-10), type=2, axis=1, norm="ortho")[:, :N_MFCC]


def mfcc_features(signal, rate=RATE, smooth=True) -> np.ndarray:
    """MFCC + delta + delta-delta (39 dims), averaged over a centered 1 s window."""
    c = mfcc_raw(signal, rate)
    if len(c) == 0:
        return np.zeros((0, 3 * N_MFCC))
    d1 = deltas(c)
    feats = np.hstack([c, d1, deltas(d1)])
    return moving_average(feats, MFCC_SMOOTH) if smooth else feats


def mfcc_frame_times(n_frames, rate=RATE):
    """Center time (s) of each MFCC frame."""
    return (np.arange(n_frames) * MFCC_HOP + MFCC_WIN / 2.0) / rate


# -- pitch class profiles -----------------------------------------------------

def pitch_class_of(freq):
    """Nearest equal-tempered pitch class (C = 0) with A4 = 440 Hz."""
    midi = 69.0 + 12.0 * np.log2(np.asarray(freq, dtype=np.float64) / 440.0)
    return np.mod(np.rint(midi).astype(int), 12)


def hpcp_frames(signal, rate=RATE, normalize=True) -> np.ndarray:
    """Peak-based 12-bin chroma for non-overlapping 4096-sample frames, shape (n_frames, 12).

    Spectral peaks within 60 dB of the frame maximum and inside 40-5000 Hz are
    located with parabolic interpolation and their magnitudes summed into the
    nearest pitch class.
    """
    mags = magnitude_spectra(signal, HPCP_FRAME)
    out = np.zeros((len(mags), 12))
    if len(mags) == 0:
        return out
    df = rate / HPCP_FRAME
    kmin = max(1, int(np.ceil(HPCP_FMIN / df)))
    kmax = min(mags.shape[1] - 2, int(np.floor(HPCP_FMAX / df)))
    for i, m in enumerate(mags):
        peak = m.max()
        if peak <= 0.0:
            continue
        seg = m[kmin:kmax + 1]
        left, right = m[kmin - 1:kmax], m[kmin + 1:kmax + 2]
        is_peak = (seg > left) & (seg >= right) & (seg >= peak * 10 ** (HPCP_PEAK_DB / 20.0))
        k = np.nonzero(is_peak)[0] + kmin
        if k.size == 0:
            continue
        a, b, c = (np.log(m[k - 1] + 1e-300), np.log(m[k] + 1e-300), np.log(m[k + 1] + 1e-300))
        denom = a - 2 * b + c
        shift = np.where(denom != 0.0, 0.5 * (a - c) / np.where(denom == 0.0, 1.0, denom), 0.0)
        freqs = (k + np.clip(shift, -0.5, 0.5)) * df
        np.add.at(out[i], pitch_class_of(freqs), m[k])
    if normalize:
        peaks = out.max(axis=1, keepdims=True)
        out = np.divide(out, peaks, out=np.zeros_like(out), where=peaks > 0)
    return out
