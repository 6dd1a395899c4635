# # Pitch-class profiles and the flamenco mode
#
# Chroma (HPCP) frames are averaged into a 12-bin profile, rotated into a
# common key and correlated with mode templates. The major template is the
# bundled Krumhansl-Kessler profile; a flamenco template is derived here from
# recordings played in the flamenco mode.
#
# Run: python demos/03_tonality.py

import numpy as np

from flamseg import dsp, synth, tonality as T
from flamseg.audio_io import prepare
from flamseg.segmenter import Segment, StructuralAnnotation

major = T.load_template()
print("major template:", np.round(major.values, 2))

# ## A scale, in every key
#
# HPCP is computed per frame and averaged; a transposition rotates the profile,
# and key normalization undoes the rotation.

for tonic in (0, 2, 7):
    clip = synth.scale_tones(tonic=tonic, mode="major")
    prof = T.max_normalize(dsp.hpcp_frames(clip.samples[0], normalize=False).mean(axis=0))
    print(f"  scale on {dsp.PITCH_CLASSES[tonic]:2s}: strongest bin {dsp.PITCH_CLASSES[int(np.argmax(prof))]:2s}, "
          f"key shift {T.key_shift(prof, major.values):2d}, r(major) {T.template_correlation(prof, major):.3f}")

# ## Deriving a flamenco template
#
# Three recordings in the flamenco mode at different tonics. Their per-class
# profiles (vocal, picked, strummed), computed over ground-truth segments, are
# key-aligned and averaged.

profiles = {}
for i, tonic in enumerate((4, 9, 11)):
    plan = synth.RecordingPlan(f"sol{i}", [synth.Section("voice", 8.0), synth.Section("picked", 8.0),
                                           synth.Section("strummed", 8.0)], seed=30 + i, tonic=tonic)
    doc = synth.truth_annotation(plan)
    truth = StructuralAnnotation([Segment(s["start"], s["end"], s["label"]) for s in doc["segments"]], [],
                                 plan.duration)
    profs, _ = T.segment_profiles(synth.synth_recording(plan), truth)
    for cls, p in profs.items():
        profiles[f"{plan.recording_id}:{cls}"] = p
flamenco = T.derive_template(profiles, "flamenco")
print("\nflamenco template:", np.round(flamenco.values, 2))

# A major scale should prefer the major template; a flamenco-mode melody the other.

scale = synth.scale_tones(tonic=5, mode="major")
prof = T.max_normalize(dsp.hpcp_frames(scale.samples[0], normalize=False).mean(axis=0))
print(f"major scale:   r(major) {T.template_correlation(prof, major):.3f}, "
      f"r(flamenco) {T.template_correlation(prof, flamenco):.3f}")

plan = synth.RecordingPlan("test", [synth.Section("picked", 10.0)], seed=99, tonic=2)
mono = prepare(synth.synth_recording(plan))[2]
prof = T.max_normalize(dsp.hpcp_frames(mono, normalize=False).mean(axis=0))
print(f"flamenco mode: r(major) {T.template_correlation(prof, major):.3f}, "
      f"r(flamenco) {T.template_correlation(prof, flamenco):.3f}")
