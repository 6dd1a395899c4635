"""WAV decoding, peak normalization, band-limited resampling and channel views."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TARGET_RATE = 44100

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE

RESAMPLER_TAPS = 64
RESAMPLER_BETA = 8.0


class AudioFormatError(ValueError):
    """Raised for unreadable, unsupported or empty audio files."""


@dataclass
class AudioClip:
    """Decoded audio: ``samples`` has shape (n_channels, n_samples), floats in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[np.newaxis, :]
        if samples.ndim != 2 or samples.shape[0] not in (1, 2):
            raise ValueError(f"expected 1 or 2 channels, got array of shape {samples.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = samples

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate


def _parse_chunks(data: bytes):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError("unreadable file: missing RIFF/WAVE header")
    pos = 12
    chunks = {}
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack("<I", data[pos + 4:pos + 8])[0]
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise AudioFormatError(f"unreadable file: truncated {cid!r} chunk")
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)
    return chunks


def load_wav(path) -> AudioClip:
    """Decode a RIFF WAV file (16/24-bit PCM or 32-bit float, mono or stereo)."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise AudioFormatError(f"unreadable file: {exc}") from exc
    chunks = _parse_chunks(data)
    if b"fmt " not in chunks or len(chunks[b"fmt "]) < 16:
        raise AudioFormatError("unreadable file: missing fmt chunk")
    if b"data" not in chunks:
        raise AudioFormatError("unreadable file: missing data chunk")
    fmt_tag, n_channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", chunks[b"fmt "][:16])
    if fmt_tag == _WAVE_FORMAT_EXTENSIBLE and len(chunks[b"fmt "]) >= 26:
        fmt_tag = struct.unpack("<H", chunks[b"fmt "][24:26])[0]
    if n_channels not in (1, 2):
        raise AudioFormatError(f"unsupported encoding: {n_channels} channels")
    if rate <= 0:
        raise AudioFormatError("unreadable file: zero sample rate")

    raw = chunks[b"data"]
    n_frames = len(raw) // block_align if block_align else 0
    if n_frames == 0:
        raise AudioFormatError("zero-length audio")
    raw = raw[:n_frames * block_align]

    if fmt_tag == _WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif fmt_tag == _WAVE_FORMAT_PCM and bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v & 0x800000, v - 0x1000000, v)
        x = v.astype(np.float64) / 8388608.0
    elif fmt_tag == _WAVE_FORMAT_FLOAT and bits == 32:
        x = np.clip(np.frombuffer(raw, dtype="<f4").astype(np.float64), -1.0, 1.0)
    else:
        raise AudioFormatError(f"unsupported encoding: format tag {fmt_tag}, {bits} bits")
    return AudioClip(x.reshape(n_frames, n_channels).T.copy(), rate)


def write_wav(path, clip: AudioClip) -> None:
    """Write ``clip`` as 16-bit PCM (values are clipped to [-1, 1))."""
    pcm = np.clip(np.round(clip.samples.T * 32768.0), -32768, 32767).astype("<i2")
    payload = pcm.tobytes()
    n_ch = clip.n_channels
    header = b"RIFF" + struct.pack("<I", 36 + len(payload)) + b"WAVE"
    fmt = b"fmt " + struct.pack("<IHHIIHH", 16, _WAVE_FORMAT_PCM, n_ch, clip.sample_rate,
                                clip.sample_rate * 2 * n_ch, 2 * n_ch, 16)
    Path(path).write_bytes(header + fmt + b"data" + struct.pack("<I", len(payload)) + payload)


def normalize(clip: AudioClip) -> AudioClip:
    """Scale jointly over channels so the peak magnitude is 1; silent clips are returned as is."""
    peak = np.max(np.abs(clip.samples)) if clip.n_samples else 0.0
    if peak == 0.0:
        return clip
    return AudioClip(clip.samples / peak, clip.sample_rate)


def _resample_channel(x: np.ndarray, ratio: float, n_out: int, chunk: int = 32768) -> np.ndarray:
    half = RESAMPLER_TAPS // 2
    cutoff = min(1.0, ratio)
    padded = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    out = np.empty(n_out)
    offsets = np.arange(-half + 1, half + 1)
    for start in range(0, n_out, chunk):
        pos = np.arange(start, min(start + chunk, n_out)) / ratio
        base = np.floor(pos).astype(np.int64)
        taps = base[:, None] + offsets[None, :]
        u = pos[:, None] - taps
        window = np.i0(RESAMPLER_BETA * np.sqrt(np.clip(1.0 - (u / half) ** 2, 0.0, None))) / np.i0(RESAMPLER_BETA)
        kernel = cutoff * np.sinc(cutoff * u) * window
        out[start:start + len(pos)] = np.sum(padded[taps + half] * kernel, axis=1)
    return out


def resample(clip: AudioClip, target_rate: int = TARGET_RATE) -> AudioClip:
    """Kaiser-windowed sinc interpolation (64 taps, beta 8) to ``target_rate``."""
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return clip
    ratio = target_rate / clip.sample_rate
    n_out = int(round(clip.n_samples * ratio))
    chans = [_resample_channel(ch, ratio, n_out) for ch in clip.samples]
    return AudioClip(np.vstack(chans), target_rate)


def prepare(clip: AudioClip):
    """Return ``(vocal_view, guitar_view, mono_mix)`` for a normalized 44.1 kHz clip.

    For mono input all three views are the very same array.
    """
    if clip.n_channels == 1:
        mono = clip.samples[0]
        return mono, mono, mono
    from .dsp import select_vocal_channel

    left, right = clip.samples
    mono = (left + right) / 2.0
    vocal_idx = select_vocal_channel(left, right, clip.sample_rate)
    return clip.samples[vocal_idx], clip.samples[1 - vocal_idx], mono


def load_prepared(path):
    """Decode, resample to 44.1 kHz and normalize; returns the clip."""
    return normalize(resample(load_wav(path), TARGET_RATE))
