import numpy as np
import pytest
from hypothesis import given, strategies as st

from flamseg import gmm, segmenter as S
from flamseg.audio_io import AudioClip
from flamseg.evaluation import task_data
from flamseg.images import DECISION_HOP


def naive_median(x, w):
    half = w // 2
    out = []
    for i in range(len(x)):
        win = x[max(0, i - half):i + half + 1]
        out.append(1 if 2 * sum(win) > len(win) else 0)
    return np.array(out, dtype=int)


binary = st.lists(st.integers(0, 1), max_size=80)
windows = st.sampled_from([1, 3, 5, 7, 21])


@given(binary, windows)
def test_median_smooth_oracle(x, w):
    np.testing.assert_array_equal(S.median_smooth(x, w), naive_median(x, w))


@given(binary, windows)
def test_median_smooth_converges_to_a_root(x, w):
    # one pass is not always idempotent, but repeated passes settle on a fixed point
    y = np.asarray(x, dtype=int)
    for _ in range(len(x) + 2):
        nxt = S.median_smooth(y, w)
        if np.array_equal(nxt, y):
            break
        y = nxt
    np.testing.assert_array_equal(S.median_smooth(y, w), y)


def test_median_smooth_one_pass_is_not_idempotent():
    once = S.median_smooth([0, 1, 0, 1, 0, 1, 0], 3)
    assert not np.array_equal(S.median_smooth(once, 3), once)


def test_median_smooth_rejects_even_windows():
    with pytest.raises(ValueError):
        S.median_smooth([0, 1], 4)


def _track(vocal, guitar, palmas, silent=None, hop=DECISION_HOP):
    n = len(vocal)
    times = (np.arange(n) + 0.5) * hop
    silent = np.zeros(n, int) if silent is None else np.asarray(silent)
    return S.DecisionTrack(times, silent, np.asarray(vocal), np.asarray(guitar), np.asarray(palmas), n * hop)


track_st = st.integers(1, 40).flatmap(lambda n: st.tuples(
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(-1, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n),
    st.lists(st.integers(0, 1), min_size=n, max_size=n)))


@given(track_st, st.sampled_from([0, 4]))
def test_assemble_partitions_the_timeline(parts, max_fill):
    vocal, guitar, palmas, silent = map(np.asarray, parts)
    vocal = np.where(silent == 1, 0, vocal)
    # guitar is undefined on vocal and silent instants
    guitar = np.where((vocal == 1) | (silent == 1), S.GUITAR_NA, np.maximum(guitar, 0))
    track = _track(vocal, guitar, palmas, silent)
    ann = S.assemble(track, max_fill=max_fill)
    assert ann.segments[0].start == 0.0
    assert np.isclose(ann.segments[-1].end, track.duration)
    for a, b in zip(ann.segments, ann.segments[1:]):
        assert a.end == b.start and a.label != b.label
    labels = track.labels()[track.display_index(max_fill)]
    if max_fill == 0:
        assert list(labels) == list(track.labels())
    for t, lab in zip(track.times, labels):
        seg = next(s for s in ann.segments if s.start <= t < s.end)
        assert seg.label == lab
    for a, b in ann.palmas:
        assert 0 <= a < b <= track.duration + 1e-9
    prof = S.profile(track)
    assert 0 <= prof.pct_vocal + prof.pct_picked + prof.pct_strummed <= 1 + 1e-12


def test_labels_priority():
    tr = _track([1, 0, 0, 0, 1], [-1, 1, 0, -1, 1], [0, 0, 1, 1, 0], silent=[0, 0, 0, 0, 1])
    assert list(tr.labels()) == ["vocal", "guitar-picked", "guitar-strummed", "silence", "silence"]


def test_display_fill_of_short_silences():
    silent = [1, 0, 1, 0, 0, 1, 1, 1, 1, 1, 0, 1]
    vocal = [0, 1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0]
    guitar = [-1, -1, -1, 1, 1, -1, -1, -1, -1, -1, 0, -1]
    tr = _track(vocal, guitar, [0] * 12, silent, hop=1.0)
    # edges stay silent, the 1-instant gap splits to the earlier side, the 5-instant gap is kept
    assert list(tr.display_index()) == [0, 1, 1, 3, 4, 5, 6, 7, 8, 9, 10, 11]
    labels = [s.label for s in S.assemble(tr).segments]
    assert labels == ["silence", "vocal", "guitar-picked", "silence", "guitar-strummed", "silence"]
    assert [s.label for s in S.assemble(tr, max_fill=0).segments][:4] == ["silence", "vocal", "silence",
                                                                           "guitar-picked"]
    # a two-instant gap splits between both neighbours
    tr = _track([1, 0, 0, 0], [-1, -1, -1, 1], [1, 0, 0, 1], [0, 1, 1, 0], hop=1.0)
    ann = S.assemble(tr)
    assert [(s.start, s.end, s.label) for s in ann.segments] == [(0.0, 2.0, "vocal"), (2.0, 4.0, "guitar-picked")]
    assert ann.palmas == [(0.0, 4.0)]
    assert S.profile(tr).pct_vocal == 0.5      # statistics ignore the fill


def test_profile_hand_case():
    tr = _track([1, 1, 0, 0, 0, 0], [-1, -1, 1, 0, 0, -1], [1, 0, 0, 1, 0, 1], silent=[0, 0, 0, 0, 0, 1])
    p = S.profile(tr)
    assert (p.pct_vocal, p.pct_picked, p.pct_strummed, p.pct_palmas) == (2 / 5, 1 / 5, 2 / 5, 2 / 5)
    assert p.n_counted == 5 and p.n_decisions == 6
    q = S.profile(tr, "all")
    assert q.pct_vocal == 2 / 6
    empty = S.profile(_track([0], [-1], [0], silent=[1]))
    assert empty.all_silent and empty.pct_vocal == 0.0


def test_sequence_1hz():
    hop = 0.25
    vocal = [1] * 4 + [0] * 4 + [0] * 4
    guitar = [-1] * 4 + [1] * 4 + [0] * 4
    palmas = [0] * 8 + [1] * 4
    seq = S.sequence_1hz(_track(vocal, guitar, palmas, hop=hop))
    np.testing.assert_array_equal(seq, [[1, 0, 0], [0, 0, 1], [0, 1, 0]])


def test_annotate_short_input(random_cnn_models):
    ann = S.annotate(AudioClip(np.zeros((2, 1000)), 44100), random_cnn_models)
    assert ann.flags == ["short_input"] and ann.segments[0].label == "silence"
    with pytest.raises(ValueError, match="missing model"):
        S.annotate(AudioClip(np.zeros((2, 1000)), 44100), {"vocal": random_cnn_models["vocal"]})


def test_annotate_cnn_pipeline_structure(short_clip, random_cnn_models):
    ann = S.annotate(short_clip, random_cnn_models, recording_id="short")
    tr = ann.track
    assert np.isclose(ann.duration, short_clip.duration)
    assert np.all(tr.guitar[tr.vocal == 1] == S.GUITAR_NA)
    assert np.all(tr.guitar[tr.silent == 1] == S.GUITAR_NA)
    assert np.all(tr.vocal[tr.silent == 1] == 0)
    assert np.isclose(ann.segments[-1].end, ann.duration)


def test_annotate_with_gmm_models(short_plan, short_clip):
    from flamseg.synth import truth_annotation
    truth = truth_annotation(short_plan)
    models = {}
    for task in S.TASKS:
        d = task_data(short_clip, truth, task, "gmm")
        models[task] = gmm.train_classifier(d.inputs, d.labels, k=2, seed=0, task=task)
    ann = S.annotate(short_clip, models)
    labels = [s.label for s in ann.segments]
    assert "vocal" in labels
    assert S.model_family(models["vocal"]) == "gmm"
    with pytest.raises(TypeError):
        S.model_family(object())
