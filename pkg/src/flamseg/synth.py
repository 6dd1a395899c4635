"""Deterministic synthetic recordings with known instrumentation.

A recording is described by a :class:`RecordingPlan`: an ordered list of
sections (``voice``, ``picked``, ``strummed`` or ``silence``), each optionally
overlaid with palmas. Voice and guitar are panned to opposite channels with a
little cross-bleed, palmas sit in the center.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .audio_io import AudioClip

RATE = 44100
KINDS = ("voice", "picked", "strummed", "silence")

SCALES = {
    # semitone offsets from the tonic and their relative occurrence weights
    "major": ([0, 2, 4, 5, 7, 9, 11], [5, 2, 4, 2, 4, 2, 1.5]),
    "flamenco": ([0, 1, 3, 4, 5, 7, 8, 10], [5, 4, 2, 2.5, 3, 2, 2.5, 1.5]),
}
CHORDS = {
    "major": [(0, 4, 7), (5, 9, 0), (7, 11, 2), (9, 0, 4)],
    "flamenco": [(0, 4, 7), (1, 5, 8), (3, 7, 10), (5, 8, 0)],
}


@dataclass
class Section:
    kind: str
    duration: float
    palmas: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown section kind {self.kind!r}")
        if not self.duration > 0:
            raise ValueError("section duration must be positive")


@dataclass
class RecordingPlan:
    recording_id: str
    sections: list
    seed: int = 0
    artist: str = "a0"
    style: str = ""
    anthology: str = "synthetic"
    vocal_mode: str = "flamenco"
    guitar_mode: str = "flamenco"
    tonic: int = 4            # pitch class of the tonic (E)
    vocal_side: int | None = 0  # channel carrying the voice, None for a mono recording
    accompaniment: bool = True  # soft guitar under the voice sections
    group: str = ""

    def __post_init__(self):
        self.sections = [s if isinstance(s, Section) else Section(**s) for s in self.sections]
        if not self.sections:
            raise ValueError("a recording needs at least one section")
        for mode in (self.vocal_mode, self.guitar_mode):
            if mode not in SCALES:
                raise ValueError(f"unknown mode {mode!r}")

    @property
    def duration(self):
        return float(sum(s.duration for s in self.sections))

    def boundaries(self):
        edges = np.concatenate([[0.0], np.cumsum([s.duration for s in self.sections])])
        return [(float(edges[i]), float(edges[i + 1]), s) for i, s in enumerate(self.sections)]


# -- ground truth ---------------------------------------------------------------

def truth_at(plan: RecordingPlan, times) -> dict:
    """Ground-truth labels at the given times: vocal, guitar (-1/0/1), palmas, silent."""
    times = np.asarray(times, dtype=float)
    out = {k: np.zeros(len(times), dtype=int) for k in ("vocal", "palmas", "silent")}
    out["guitar"] = np.full(len(times), -1, dtype=int)
    for start, end, sec in plan.boundaries():
        m = (times >= start) & (times < end)
        if sec.kind == "silence":
            out["silent"][m] = 1
            continue
        out["vocal"][m] = sec.kind == "voice"
        if sec.kind in ("picked", "strummed"):
            out["guitar"][m] = 1 if sec.kind == "picked" else 0
        out["palmas"][m] = sec.palmas
    return out


def truth_annotation(plan: RecordingPlan) -> dict:
    """Ground truth in the annotation-file layout (segments + palmas overlay)."""
    names = {"voice": "vocal", "picked": "guitar-picked", "strummed": "guitar-strummed", "silence": "silence"}
    segs, palmas = [], []
    for start, end, sec in plan.boundaries():
        if segs and segs[-1]["label"] == names[sec.kind]:
            segs[-1]["end"] = end
        else:
            segs.append({"start": start, "end": end, "label": names[sec.kind]})
        if sec.palmas and sec.kind != "silence":
            if palmas and abs(palmas[-1]["end"] - start) < 1e-9:
                palmas[-1]["end"] = end
            else:
                palmas.append({"start": start, "end": end})
    return {"recording_id": plan.recording_id, "duration": plan.duration, "segments": segs, "palmas": palmas}


# -- sound sources ----------------------------------------------------------------

def _midi_hz(m):
    return 440.0 * 2.0 ** ((np.asarray(m, dtype=float) - 69.0) / 12.0)


def _scale_notes(mode, tonic, lo, hi):
    degrees, weights = SCALES[mode]
    notes, w = [], []
    for m in range(lo, hi + 1):
        rel = (m - tonic) % 12
        if rel in degrees:
            notes.append(m)
            w.append(weights[degrees.index(rel)])
    w = np.asarray(w, dtype=float)
    return np.asarray(notes), w / w.sum()


def _formant_gain(freq, formants, bandwidths):
    g = np.zeros_like(freq)
    for f, bw in zip(formants, bandwidths):
        g += 1.0 / (1.0 + ((freq - f) / bw) ** 2)
    return g + 0.02


VOWELS = [(700, 1220, 2600), (400, 2000, 2800), (300, 870, 2250), (550, 1700, 2650), (500, 900, 2500)]


def voice_section(n, rng, mode, tonic, artist_rng):
    """Sung phrase: glided notes with 5-7 Hz vibrato, slow drift and vowel formants."""
    out = np.zeros(n)
    t_pos = 0
    vib_rate = artist_rng.uniform(5.0, 7.0)
    vib_depth = artist_rng.uniform(0.25, 0.6)       # semitones
    formant_shift = artist_rng.uniform(0.9, 1.15)
    register = int(artist_rng.integers(52, 60))    # lowest sung midi note
    notes, probs = _scale_notes(mode, tonic, register, register + 14)
    while t_pos < n:
        # one phrase: 3-8 notes, then a short breath
        n_notes = int(rng.integers(3, 9))
        durs = (rng.uniform(0.3, 1.1, n_notes) * RATE).astype(int)
        pitches = rng.choice(notes, size=n_notes, p=probs).astype(float)
        length = min(int(durs.sum()), n - t_pos)
        if length <= 0:
            break
        target = np.repeat(pitches, durs)[:length]
        glide = max(1, int(0.06 * RATE))
        kern = np.ones(glide) / glide
        midi = np.convolve(np.pad(target, (glide, glide), mode="edge"), kern, mode="same")[glide:glide + length]
        tt = np.arange(length) / RATE
        midi = midi + vib_depth * np.sin(2 * np.pi * vib_rate * tt + rng.uniform(0, 2 * np.pi))
        midi = midi + 0.25 * np.sin(2 * np.pi * rng.uniform(0.05, 0.2) * tt + rng.uniform(0, 2 * np.pi))
        f0 = _midi_hz(midi)
        phase = 2 * np.pi * np.cumsum(f0) / RATE
        vowel_idx = np.repeat(rng.integers(0, len(VOWELS), n_notes), durs)[:length]
        sig = np.zeros(length)
        n_harm = int(7000 // f0.max())
        for h in range(1, n_harm + 1):
            fh = h * f0
            gain = np.zeros(length)
            for v, (f1, f2, f3) in enumerate(VOWELS):
                sel = vowel_idx == v
                if sel.any():
                    fm = np.array([f1, f2, f3]) * formant_shift
                    gain[sel] = _formant_gain(fh[sel], fm, (90, 120, 180))
            sig += gain * h ** -0.6 * np.sin(h * phase)
        env = np.ones(length)
        ramp = min(int(0.05 * RATE), length // 2)
        if ramp:
            env[:ramp] = np.linspace(0, 1, ramp)
            env[-ramp:] = np.linspace(1, 0, ramp)
        swell = 0.8 + 0.2 * np.sin(2 * np.pi * rng.uniform(0.3, 0.8) * tt)
        out[t_pos:t_pos + length] += sig * env * swell
        t_pos += length + int(rng.uniform(0.1, 0.4) * RATE)
    return out / (np.sqrt(np.mean(out ** 2)) + 1e-12)


@nb.njit(cache=True)
def _damped_partials(z, amp, n, lengths):
    """sum_h Im(amp[h] * z[h]**t) for t < lengths[h], by running products."""
    out = np.zeros(n)
    w = amp.copy()
    active = len(z)
    for t in range(n):
        acc = 0.0
        # partials are sorted by decay rate, so the live ones are a prefix
        while active > 0 and t >= lengths[active - 1]:
            active -= 1
        if active == 0:
            break
        for h in range(active):
            acc += w[h].imag
            w[h] *= z[h]
        out[t] = acc
    return out


def _pluck(f0, dur_s, tau, rng, n_harm_max=14):
    """Decaying slightly inharmonic partials plus a short noise click."""
    n = int(dur_s * RATE)
    n_harm = max(1, min(n_harm_max, int(8000 // f0)))
    h = np.arange(1, n_harm + 1)
    fh = h * f0 * (1.0 + 0.0004 * h * h)
    rate = (1.0 + 0.35 * h) / tau
    z = np.exp((-rate + 2j * np.pi * fh) / RATE)
    amp = np.exp(1j * rng.uniform(0, 2 * np.pi, n_harm)) / h
    # partials are dropped once they have decayed by ~90 dB
    sig = _damped_partials(z, amp, n, (10.0 / rate * RATE).astype(np.int64))
    click = int(0.004 * RATE)
    sig[:click] += 0.3 * rng.standard_normal(click) * np.linspace(1, 0, click)
    return sig


def picked_section(n, rng, mode, tonic):
    """Monophonic falseta: single plucks with fast exponential decay."""
    out = np.zeros(n)
    notes, probs = _scale_notes(mode, tonic, 45, 76)
    pos = 0
    rate = rng.uniform(3.0, 7.0)
    while pos < n:
        f0 = float(_midi_hz(rng.choice(notes, p=probs)))
        tau = rng.uniform(0.12, 0.3)
        note = _pluck(f0, min(5 * tau, 1.5), tau, rng) * rng.uniform(0.6, 1.0)
        end = min(n, pos + len(note))
        out[pos:end] += note[:end - pos]
        pos += int(RATE / rate * rng.uniform(0.7, 1.3))
    return out / (np.sqrt(np.mean(out ** 2)) + 1e-12)


def strummed_section(n, rng, mode, tonic):
    """Rhythmic chord strokes: 5-6 strings spread over ~20 ms, long sustain."""
    out = np.zeros(n)
    chords = CHORDS[mode]
    pos = 0
    period = rng.uniform(0.35, 0.8)
    chord = chords[0]
    while pos < n:
        if rng.random() < 0.3:
            chord = chords[int(rng.integers(len(chords)))]
        strings = sorted({40 + ((tonic + chord[i % 3] - 40) % 12) + 12 * (i // 3) for i in range(6)})
        spread = rng.uniform(0.008, 0.025)
        tau = rng.uniform(0.8, 1.5)
        down = rng.random() < 0.6
        for j, m in enumerate(strings if down else strings[::-1]):
            off = pos + int(j * spread * RATE)
            if off >= n:
                break
            note = _pluck(float(_midi_hz(m)), min(2.5 * tau, 2.5), tau, rng, n_harm_max=8) * rng.uniform(0.5, 0.8)
            end = min(n, off + len(note))
            out[off:end] += note[:end - off]
        pos += int(period * RATE * rng.uniform(0.9, 1.1))
    return out / (np.sqrt(np.mean(out ** 2)) + 1e-12)


def palmas_track(n, rng):
    """Hand claps: short band-passed noise bursts at 2-4 Hz with accents."""
    out = np.zeros(n)
    rate = rng.uniform(2.0, 4.0)
    burst = int(0.06 * RATE)
    t = np.arange(burst) / RATE
    freqs = np.fft.rfftfreq(burst, 1.0 / RATE)
    band = ((freqs > 800) & (freqs < 5000)).astype(float)
    pos = int(rng.uniform(0, 0.2) * RATE)
    k = 0
    while pos < n:
        noise = np.fft.irfft(np.fft.rfft(rng.standard_normal(burst)) * band, n=burst)
        clap = noise * np.exp(-t / rng.uniform(0.008, 0.015))
        clap *= (1.0 if k % 3 == 0 else 0.7) * rng.uniform(0.8, 1.0)
        end = min(n, pos + burst)
        out[pos:end] += clap[:end - pos]
        pos += int(RATE / rate * rng.uniform(0.95, 1.05))
        k += 1
    peak = np.max(np.abs(out))
    return out / peak if peak > 0 else out


def _gate(n, start, end, fade):
    g = np.zeros(n)
    g[start:end] = 1.0
    f = min(fade, (end - start) // 2)
    if f > 0:
        g[start:start + f] = np.linspace(0, 1, f)
        g[end - f:end] = np.linspace(1, 0, f)
    return g


def synth_recording(plan: RecordingPlan) -> AudioClip:
    """Render a plan deterministically (same plan and seed give bit-identical audio)."""
    rng = np.random.default_rng([plan.seed, 7919])
    artist_rng = np.random.default_rng([_stable_hash(plan.artist), 1])
    n_total = int(round(plan.duration * RATE))
    voice = np.zeros(n_total)
    guitar = np.zeros(n_total)
    palmas = np.zeros(n_total)
    fade = int(0.005 * RATE)
    levels = {"voice": 1.0, "picked": rng.uniform(0.8, 1.1), "strummed": rng.uniform(0.8, 1.1)}
    palmas_level = rng.uniform(0.6, 1.0)
    for start_s, end_s, sec in plan.boundaries():
        a, b = int(round(start_s * RATE)), int(round(end_s * RATE))
        n = b - a
        if n <= 0 or sec.kind == "silence":
            continue
        gate = _gate(n, 0, n, fade)
        if sec.kind == "voice":
            voice[a:b] += levels["voice"] * gate * voice_section(n, rng, plan.vocal_mode, plan.tonic, artist_rng)
            if plan.accompaniment:
                acc = picked_section if rng.random() < 0.5 else strummed_section
                guitar[a:b] += 0.3 * gate * acc(n, rng, plan.guitar_mode, plan.tonic)
        elif sec.kind == "picked":
            guitar[a:b] += levels["picked"] * gate * picked_section(n, rng, plan.guitar_mode, plan.tonic)
        else:
            guitar[a:b] += levels["strummed"] * gate * strummed_section(n, rng, plan.guitar_mode, plan.tonic)
        if sec.palmas:
            palmas[a:b] += palmas_level * gate * palmas_track(n, rng)
    floor = 1e-4 * rng.standard_normal((2, n_total))
    if plan.vocal_side is None:
        mix = voice + guitar + palmas + floor[0]
        samples = mix[None, :]
    else:
        bleed = rng.uniform(0.08, 0.2)
        vocal_ch = voice + bleed * guitar + palmas + floor[0]
        guitar_ch = guitar + bleed * voice + palmas + floor[1]
        samples = np.vstack([vocal_ch, guitar_ch] if plan.vocal_side == 0 else [guitar_ch, vocal_ch])
    peak = np.max(np.abs(samples))
    if peak > 0:
        samples = 0.9 * samples / peak
    return AudioClip(samples, RATE)


def _stable_hash(s: str) -> int:
    h = 2166136261
    for ch in s.encode():
        h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
    return h


def synth_corpus(plans, seed=None):
    """Yield ``(plan, clip)`` for every plan; ``seed`` (if given) re-seeds the plans in order."""
    for i, plan in enumerate(plans):
        if seed is not None:
            plan.seed = int(np.random.default_rng([seed, i]).integers(2**31))
        yield plan, synth_recording(plan)


# -- corpus plans -------------------------------------------------------------------

def _alternate(rng, total, kinds, dur_range, palmas_prob=0.0, silence_prob=0.0):
    sections = []
    t = 0.0
    last = None
    while t < total - 1e-9:
        choices = [k for k in kinds if k != last] or kinds
        kind = choices[int(rng.integers(len(choices)))]
        d = float(min(rng.uniform(*dur_range), total - t))
        if d < 1.5 and sections:
            sections[-1].duration += d
            break
        sections.append(Section(kind, round(d, 3), bool(rng.random() < palmas_prob)))
        t += d
        last = kind
        if silence_prob and rng.random() < silence_prob and t < total - 3:
            sections.append(Section("silence", 1.0))
            t += 1.0
    return sections


def acceptance_corpus(seed=0, n_per_task=20, dur_range=(30.0, 45.0)):
    """60 labeled recordings, a third each emphasizing vocals, guitar technique and palmas."""
    rng = np.random.default_rng([seed, 101])
    plans = []
    for task in ("vocal", "guitar", "palmas"):
        for i in range(n_per_task):
            total = float(rng.uniform(*dur_range))
            artist = f"artist{i // 2:02d}" if task == "vocal" else f"{task}artist{i:02d}"
            if task == "vocal":
                secs = _alternate(rng, total, ["voice", "picked", "voice", "strummed"], (3.0, 8.0), 0.15, 0.1)
            elif task == "guitar":
                secs = _alternate(rng, total, ["picked", "strummed", "picked", "strummed", "voice"], (3.0, 8.0),
                                  0.15, 0.05)
            else:
                prob = 0.85 if i % 2 == 0 else 0.0
                secs = _alternate(rng, total, ["voice", "picked", "strummed"], (4.0, 9.0), prob)
                if prob and not any(s.palmas for s in secs):
                    secs[0].palmas = True
            vocal_mode, guitar_mode = ("major", "major") if rng.random() < 0.4 else ("flamenco", "flamenco")
            plans.append(RecordingPlan(
                recording_id=f"{task}{i:02d}", sections=secs, seed=int(rng.integers(2**31)), artist=artist,
                style=f"{task}-set", vocal_mode=vocal_mode, guitar_mode=guitar_mode, tonic=int(rng.integers(12)),
                vocal_side=int(rng.integers(2)), group=artist if task == "vocal" else f"{task}{i:02d}"))
    return plans


# style templates: section kinds with weights, palmas probability, duration range, modes
STYLE_TEMPLATES = {
    "bulerias": dict(kinds=["voice", "strummed", "strummed", "voice"], palmas=0.9, dur=(2.0, 5.0),
                     modes=("flamenco", "flamenco")),
    "tangos": dict(kinds=["voice", "strummed", "voice", "picked"], palmas=0.8, dur=(3.0, 6.0),
                   modes=("flamenco", "flamenco")),
    "malaguenas": dict(kinds=["voice", "picked", "voice", "picked"], palmas=0.0, dur=(5.0, 10.0),
                       modes=("major", "flamenco")),
    "soleares": dict(kinds=["voice", "picked", "strummed"], palmas=0.05, dur=(4.0, 9.0),
                     modes=("flamenco", "flamenco")),
    "siguiriyas": dict(kinds=["voice", "picked", "voice"], palmas=0.0, dur=(6.0, 12.0),
                       modes=("flamenco", "flamenco")),
    "alegrias": dict(kinds=["voice", "strummed", "picked"], palmas=0.4, dur=(3.0, 7.0), modes=("major", "major")),
    "fandangos": dict(kinds=["voice", "picked", "strummed", "voice"], palmas=0.05, dur=(4.0, 8.0),
                      modes=("major", "flamenco")),
    "tonas": dict(kinds=["voice"], palmas=0.0, dur=(4.0, 9.0), modes=("flamenco", "flamenco"), acappella=True),
}


def style_corpus(seed=0, n_per_style=4, dur_range=(20.0, 30.0), styles=None, n_instrumental=2):
    """Recordings whose instrumentation and modes follow simple per-style tendencies."""
    rng = np.random.default_rng([seed, 202])
    plans = []
    for style in styles or STYLE_TEMPLATES:
        tpl = STYLE_TEMPLATES[style]
        for i in range(n_per_style):
            total = float(rng.uniform(*dur_range))
            acappella = tpl.get("acappella", False)
            secs = _alternate(rng, total, tpl["kinds"], tpl["dur"], tpl["palmas"], 0.3 if acappella else 0.0)
            plans.append(RecordingPlan(
                recording_id=f"{style}{i:02d}", sections=secs, seed=int(rng.integers(2**31)),
                artist=f"{style}-singer{i % 3}", style=style, vocal_mode=tpl["modes"][0],
                guitar_mode=tpl["modes"][1], tonic=int(rng.integers(12)), vocal_side=int(rng.integers(2)),
                accompaniment=not acappella, anthology="synthetic",
                group=f"{style}{i:02d}"))
    for i in range(n_instrumental):
        total = float(rng.uniform(*dur_range))
        secs = _alternate(rng, total, ["picked", "strummed"], (3.0, 8.0), 0.1)
        plans.append(RecordingPlan(recording_id=f"instrumental{i:02d}", sections=secs, seed=int(rng.integers(2**31)),
                                   artist="guitarist", style="instrumental", vocal_mode="flamenco",
                                   guitar_mode="flamenco", tonic=int(rng.integers(12)),
                                   vocal_side=int(rng.integers(2)), group=f"instrumental{i:02d}"))
    return plans


def instrumentation_label(plan: RecordingPlan) -> str:
    """``acappella`` (voice only), ``instrumental`` (no voice) or ``mixed``."""
    kinds = {s.kind for s in plan.sections} - {"silence"}
    if kinds == {"voice"} and not plan.accompaniment:
        return "acappella"
    if "voice" not in kinds:
        return "instrumental"
    return "mixed"


def scale_tones(tonic=0, mode="major", note_dur=0.5, octave=4, seed=0, harmonics=6, rolloff=1.0):
    """Ascending and descending scale of harmonic tones ending on a held tonic (mono clip).

    Partial h has amplitude h ** -rolloff.
    """
    degrees, _ = SCALES[mode]
    base = 12 * (octave + 1) + tonic
    seq = [base + d for d in degrees] + [base + 12] + [base + d for d in reversed(degrees)]
    durs = [note_dur] * (len(seq) - 1) + [2 * note_dur]
    rng = np.random.default_rng(seed)
    out = []
    for m, dur in zip(seq, durs):
        t = np.arange(int(dur * RATE)) / RATE
        env = np.minimum(1.0, t / 0.01) * np.exp(-t / (note_dur * 0.8))
        f0 = float(_midi_hz(m))
        x = sum(h ** -rolloff * np.sin(2 * np.pi * h * f0 * t + rng.uniform(0, 2 * np.pi))
                for h in range(1, harmonics + 1) if h * f0 < 8000)
        out.append(env * x)
    sig = np.concatenate(out)
    return AudioClip(0.9 * sig / np.max(np.abs(sig)), RATE)
