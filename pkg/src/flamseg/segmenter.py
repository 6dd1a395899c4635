"""Multi-stage structural annotation of a recording.

silence detection -> channel selection -> vocal detector on the vocal channel
-> picking/strumming classifier on non-vocal instants of the guitar channel
-> palmas detector on the mono mix, followed by median smoothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsp, gmm, micronet
from .audio_io import TARGET_RATE, AudioClip, normalize, prepare, resample
from .images import CENTER_OFFSET, DECISION_HOP, IMAGE_HOP, build_images, decision_times, n_images

GUITAR_NA, GUITAR_STRUMMED, GUITAR_PICKED = -1, 0, 1
TASKS = ("vocal", "guitar", "palmas")
SEGMENT_LABELS = ("silence", "vocal", "guitar-picked", "guitar-strummed")
# interior silent runs up to this many decisions are shown with their neighbours' labels
DISPLAY_FILL_MAX = 4


def median_smooth(decisions, window: int) -> np.ndarray:
    """Centered running median of a binary sequence.

    Near the ends the window is truncated to the available samples; an even
    split inside a truncated window resolves to 0.
    """
    if window < 1 or window % 2 == 0:
        raise ValueError(f"median window must be odd and positive, got {window}")
    x = np.asarray(decisions, dtype=int)
    if x.size == 0:
        return x.copy()
    half = window // 2
    c = np.concatenate([[0], np.cumsum(x)])
    idx = np.arange(len(x))
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, len(x))
    ones = c[hi] - c[lo]
    return (2 * ones > hi - lo).astype(int)


@dataclass
class AnnotateConfig:
    vocal_window: int = 5     # ~1.16 s of decisions
    guitar_window: int = 5
    palmas_window: int = 21   # ~4.88 s


@dataclass
class DecisionTrack:
    """Per-instant labels on the common ~0.232 s decision grid."""

    times: np.ndarray
    silent: np.ndarray
    vocal: np.ndarray
    guitar: np.ndarray   # GUITAR_PICKED / GUITAR_STRUMMED / GUITAR_NA
    palmas: np.ndarray
    duration: float
    hop: float = DECISION_HOP
    short_input: bool = False

    def __len__(self):
        return len(self.times)

    def labels(self):
        """Segment label per instant."""
        out = np.full(len(self), "silence", dtype=object)
        out[self.vocal == 1] = "vocal"
        out[self.guitar == GUITAR_PICKED] = "guitar-picked"
        out[self.guitar == GUITAR_STRUMMED] = "guitar-strummed"
        out[self.silent == 1] = "silence"
        return out

    def display_index(self, max_fill: int = DISPLAY_FILL_MAX) -> np.ndarray:
        """Instant whose labels are displayed at each position.

        Short silent runs strictly inside the track point at the nearest non-silent
        instant (the earlier one on ties). Statistics never go through this mapping.
        """
        idx = np.arange(len(self))
        for s, e, v in _runs(list(self.silent == 1)):
            if v and s > 0 and e < len(self) and e - s <= max_fill:
                for i in range(s, e):
                    idx[i] = s - 1 if i - (s - 1) <= e - i else e
        return idx

    def to_dict(self):
        return {
            "times": [round(float(t), 6) for t in self.times],
            "silent": self.silent.astype(int).tolist(),
            "vocal": self.vocal.astype(int).tolist(),
            "guitar": self.guitar.astype(int).tolist(),
            "palmas": self.palmas.astype(int).tolist(),
        }

    @classmethod
    def from_dict(cls, d, duration, hop=DECISION_HOP):
        return cls(np.asarray(d["times"], dtype=float), np.asarray(d["silent"], dtype=int),
                   np.asarray(d["vocal"], dtype=int), np.asarray(d["guitar"], dtype=int),
                   np.asarray(d["palmas"], dtype=int), float(duration), hop)


@dataclass
class Segment:
    start: float
    end: float
    label: str


@dataclass
class StructuralAnnotation:
    segments: list
    palmas: list          # (start, end) pairs, independent of the segments
    duration: float
    track: DecisionTrack | None = None
    flags: list = field(default_factory=list)


@dataclass
class InstrumentationProfile:
    pct_vocal: float
    pct_picked: float
    pct_strummed: float
    pct_palmas: float
    n_decisions: int = 0
    n_counted: int = 0
    all_silent: bool = False

    def vector(self):
        return np.array([self.pct_vocal, self.pct_picked, self.pct_strummed, self.pct_palmas])

    def to_dict(self):
        return {"pct_vocal": self.pct_vocal, "pct_picked": self.pct_picked, "pct_strummed": self.pct_strummed,
                "pct_palmas": self.pct_palmas, "n_decisions": self.n_decisions, "n_counted": self.n_counted,
                "all_silent": self.all_silent}

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("pct_vocal", "pct_picked", "pct_strummed", "pct_palmas",
                                        "n_decisions", "n_counted", "all_silent")})


# -- classification of one view ------------------------------------------------

def view_features(signal, task, family):
    """Per-instant classifier inputs for one signal view.

    CNN: normalized feature images (log mel for palmas); GMM: the smoothed
    MFCC vector nearest to each decision instant.
    """
    n_frames = len(signal) // dsp.FRAME_LEN
    if family == "cnn":
        return build_images(dsp.mel_energies(signal, log_scaled=(task == "palmas"))).matrices
    feats = dsp.mfcc_features(signal)
    times = decision_times(n_frames)
    if len(feats) == 0:
        return np.zeros((len(times), 3 * dsp.N_MFCC))
    ftimes = dsp.mfcc_frame_times(len(feats))
    idx = np.clip(np.searchsorted(ftimes, times), 0, len(feats) - 1)
    prev = np.clip(idx - 1, 0, len(feats) - 1)
    idx = np.where(np.abs(ftimes[prev] - times) <= np.abs(ftimes[idx] - times), prev, idx)
    return feats[idx]


def model_family(model):
    if isinstance(model, micronet.CnnModel):
        return "cnn"
    if isinstance(model, gmm.GmmClassifier):
        return "gmm"
    raise TypeError(f"unsupported model type {type(model).__name__}")


def classify(model, inputs):
    if len(inputs) == 0:
        return np.zeros(0, dtype=int)
    if model_family(model) == "cnn":
        return micronet.predict_sequence(model, inputs)
    return model.classify(inputs)


def smooth_subset(decisions, mask, window):
    """Median-smooth only the instants selected by ``mask`` (as one contiguous sequence)."""
    out = np.zeros(len(mask), dtype=int)
    out[mask] = median_smooth(decisions, window)
    return out


def instant_silence(mono_energy_frames, n_decisions):
    """Silent flag per decision instant, taken from the frame at the image center."""
    mask = dsp.silence_mask(mono_energy_frames)
    centers = np.arange(n_decisions) * IMAGE_HOP + CENTER_OFFSET
    return mask[centers].astype(int)


def prepared_views(clip: AudioClip):
    if clip.sample_rate != TARGET_RATE:
        clip = resample(clip, TARGET_RATE)
    clip = normalize(clip)
    return clip, prepare(clip)


def annotate(clip: AudioClip, models: dict, config: AnnotateConfig | None = None,
             recording_id: str = "") -> StructuralAnnotation:
    """Full pipeline on one recording; ``models`` maps task name to a CNN or GMM model."""
    config = config or AnnotateConfig()
    for task in TASKS:
        if models.get(task) is None:
            raise ValueError(f"missing model for task {task!r}")
    clip, (vocal_view, guitar_view, mono) = prepared_views(clip)
    duration = clip.duration
    n_frames = clip.n_samples // dsp.FRAME_LEN
    n_dec = n_images(n_frames)
    times = decision_times(n_frames)
    empty = np.zeros(n_dec, dtype=int)
    if n_dec == 0:
        track = DecisionTrack(times, empty, empty, empty - 1, empty, duration, short_input=True)
        return assemble(track, flags=["short_input"])

    energies = sum(dsp.frame_energies(ch) for ch in clip.samples)
    silent = instant_silence(energies, n_dec)
    active = silent == 0

    vocal = np.zeros(n_dec, dtype=int)
    if active.any():
        raw = classify(models["vocal"], view_features(vocal_view, "vocal", model_family(models["vocal"]))[active])
        vocal = smooth_subset(raw, active, config.vocal_window)

    guitar = np.full(n_dec, GUITAR_NA, dtype=int)
    gmask = active & (vocal == 0)
    if gmask.any():
        raw = classify(models["guitar"], view_features(guitar_view, "guitar", model_family(models["guitar"]))[gmask])
        guitar[gmask] = median_smooth(raw, config.guitar_window)

    palmas = np.zeros(n_dec, dtype=int)
    if active.any():
        raw = classify(models["palmas"], view_features(mono, "palmas", model_family(models["palmas"]))[active])
        palmas = smooth_subset(raw, active, config.palmas_window)

    track = DecisionTrack(times, silent, vocal, guitar, palmas, duration)
    return assemble(track, recording_id=recording_id)


def _runs(values):
    """(start_index, end_index_exclusive, value) for each run of equal values."""
    runs = []
    start = 0
    for i in range(1, len(values) + 1):
        if i == len(values) or values[i] != values[start]:
            runs.append((start, i, values[start]))
            start = i
    return runs


def _instant_edges(track: DecisionTrack):
    """Boundaries between instants: midpoints, with 0 and the duration at the ends."""
    t = track.times
    mids = (t[:-1] + t[1:]) / 2.0
    return np.concatenate([[0.0], mids, [track.duration]])


def assemble(track: DecisionTrack, flags=None, recording_id: str = "",
             max_fill: int = DISPLAY_FILL_MAX) -> StructuralAnnotation:
    """Contiguous, non-overlapping segments covering [0, duration) plus the palmas overlay.

    Brief interior silences (``max_fill`` decisions or fewer) take the nearest
    neighbour's labels here; pass ``max_fill=0`` for the raw labels.
    """
    flags = list(flags or [])
    if len(track) == 0:
        segs = [Segment(0.0, track.duration, "silence")] if track.duration > 0 else []
        return StructuralAnnotation(segs, [], track.duration, track, flags)
    edges = _instant_edges(track)
    idx = track.display_index(max_fill)
    labels = track.labels()[idx]
    segments = [Segment(float(edges[s]), float(edges[e]), str(lab)) for s, e, lab in _runs(list(labels))]
    palmas_on = ((track.palmas == 1) & (track.silent == 0))[idx]
    palmas = [(float(edges[s]), float(edges[e])) for s, e, v in _runs(list(palmas_on)) if v]
    return StructuralAnnotation(segments, palmas, track.duration, track, flags)


def profile(track: DecisionTrack, over: str = "nonsilent") -> InstrumentationProfile:
    """Fractions of vocal / picked / strummed / palmas decisions.

    ``over="nonsilent"`` divides by the non-silent instants, ``over="all"`` by every instant.
    """
    n = len(track)
    if n == 0:
        return InstrumentationProfile(0.0, 0.0, 0.0, 0.0, 0, 0, True)
    active = track.silent == 0
    denom = int(active.sum()) if over == "nonsilent" else n
    if not active.any():
        return InstrumentationProfile(0.0, 0.0, 0.0, 0.0, n, 0, True)
    v = int(np.sum(active & (track.vocal == 1)))
    p = int(np.sum(active & (track.guitar == GUITAR_PICKED)))
    s = int(np.sum(active & (track.guitar == GUITAR_STRUMMED)))
    pal = int(np.sum(active & (track.palmas == 1)))
    return InstrumentationProfile(v / denom, p / denom, s / denom, pal / denom, n, denom, False)


def sequence_1hz(track: DecisionTrack) -> np.ndarray:
    """(vocal, palmas, picked) binary vector per whole second, from the instant nearest t + 0.5."""
    n_sec = int(np.floor(track.duration))
    if n_sec == 0 or len(track) == 0:
        return np.zeros((0, 3), dtype=int)
    targets = np.arange(n_sec) + 0.5
    idx = np.abs(track.times[None, :] - targets[:, None]).argmin(axis=1)
    active = track.silent[idx] == 0
    return np.stack([
        (track.vocal[idx] == 1) & active,
        (track.palmas[idx] == 1) & active,
        (track.guitar[idx] == GUITAR_PICKED) & active,
    ], axis=1).astype(int)
