import numpy as np
import pytest

from flamseg import dsp, synth
from flamseg.audio_io import prepare
from conftest import three_section_plan


def test_rendering_is_deterministic(short_plan, short_clip):
    again = synth.synth_recording(short_plan)
    np.testing.assert_array_equal(again.samples, short_clip.samples)
    assert short_clip.n_samples == round(short_plan.duration * 44100)
    assert np.abs(short_clip.samples).max() == pytest.approx(0.9)


def test_truth_layout(short_plan):
    doc = synth.truth_annotation(short_plan)
    assert [s["label"] for s in doc["segments"]] == ["vocal", "guitar-picked", "guitar-strummed"]
    assert doc["palmas"] == [{"start": 4.0, "end": 8.0}]
    t = synth.truth_at(short_plan, [1.0, 5.0, 9.0])
    assert list(t["vocal"]) == [1, 0, 0] and list(t["guitar"]) == [-1, 1, 0] and list(t["palmas"]) == [0, 1, 0]


def test_adjacent_equal_sections_merge():
    plan = three_section_plan(kinds=("voice", "voice", "silence"), durs=(1.0, 2.0, 1.0), palmas=(True, True, True))
    doc = synth.truth_annotation(plan)
    assert doc["segments"] == [{"start": 0.0, "end": 3.0, "label": "vocal"},
                               {"start": 3.0, "end": 4.0, "label": "silence"}]
    assert doc["palmas"] == [{"start": 0.0, "end": 3.0}]


def test_silence_section_is_silent():
    plan = three_section_plan(kinds=("picked", "silence", "strummed"), durs=(2.0, 2.0, 2.0))
    clip = synth.synth_recording(plan)
    _, _, mono = prepare(clip)
    mask = dsp.silence_mask(dsp.frame_energies(mono))
    t = (np.arange(len(mask)) + 0.5) * 2048 / 44100
    assert mask[(t > 2.2) & (t < 3.8)].all()
    assert not mask[(t < 1.8) | (t > 4.2)].any()


def test_voice_is_on_the_vocal_side():
    for side in (0, 1):
        plan = three_section_plan(kinds=("voice",), durs=(3.0,), palmas=(False,), vocal_side=side,
                                  accompaniment=False)
        clip = synth.synth_recording(plan)
        assert dsp.select_vocal_channel(*clip.samples) == side


def test_plan_validation():
    with pytest.raises(ValueError):
        synth.Section("drums", 1.0)
    with pytest.raises(ValueError):
        synth.Section("voice", 0.0)
    with pytest.raises(ValueError):
        synth.RecordingPlan("x", [])
    with pytest.raises(ValueError):
        synth.RecordingPlan("x", [synth.Section("voice", 1.0)], vocal_mode="lydian")


def test_corpus_plans():
    plans = synth.acceptance_corpus(0)
    assert len(plans) == 60 and len({p.recording_id for p in plans}) == 60
    assert all(30 <= p.duration <= 45 for p in plans)
    vocal = [p for p in plans if p.style == "vocal-set"]
    assert len({p.artist for p in vocal}) == 10
    assert [p.recording_id for p in synth.acceptance_corpus(0)] == [p.recording_id for p in plans]
    styles = synth.style_corpus(0, n_per_style=2)
    assert len(styles) == 2 * len(synth.STYLE_TEMPLATES) + 2
    labels = {synth.instrumentation_label(p) for p in styles}
    assert {"acappella", "instrumental", "mixed"} <= labels


def test_scale_tones_length():
    clip = synth.scale_tones(note_dur=0.25)
    assert clip.duration == pytest.approx(0.25 * 14 + 0.5, abs=1e-3)
