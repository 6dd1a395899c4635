import numpy as np
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from flamseg.images import DECISION_HOP, build_images, decision_times, n_images, normalize_image


def test_counts_and_times():
    assert n_images(21) == 0
    assert n_images(22) == 1
    assert n_images(26) == 1 and n_images(27) == 2
    t = decision_times(100)
    assert len(t) == n_images(100) == 16
    assert np.isclose(t[0], 11 * 2048 / 44100)
    np.testing.assert_allclose(np.diff(t), DECISION_HOP)
    assert np.isclose(DECISION_HOP, 0.2322, atol=1e-4)


def test_image_content_matches_window():
    rng = np.random.default_rng(0)
    mel = rng.random((60, 128))
    seq = build_images(mel, dtype=np.float64)
    assert seq.matrices.shape == (n_images(60), 128, 22)
    for k in range(len(seq)):
        win = mel[5 * k:5 * k + 22].T
        np.testing.assert_allclose(seq.matrices[k], win / win.max())
    np.testing.assert_array_equal(seq.center_frames, np.arange(len(seq)) * 5 + 11)


def test_short_input():
    seq = build_images(np.ones((10, 128)))
    assert seq.short_input and len(seq) == 0 and seq.matrices.shape == (0, 128, 22)


@given(arrays(np.float64, (4, 5), elements=st.floats(-1e3, 1e3)))
def test_normalize_image_bounds(img):
    out = normalize_image(img)
    if np.abs(img).max() == 0:
        assert np.all(out == 0)
    else:
        assert np.isclose(np.abs(out).max(), 1.0)
        np.testing.assert_allclose(out * np.abs(img).max(), img, atol=1e-9)
