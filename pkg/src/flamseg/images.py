"""Slice mel frame sequences into normalized 128x22 classifier inputs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dsp import FRAME_LEN, RATE

IMAGE_WIDTH = 22
IMAGE_HOP = 5
CENTER_OFFSET = IMAGE_WIDTH // 2
DECISION_HOP = IMAGE_HOP * FRAME_LEN / RATE  # ~0.2322 s


@dataclass
class ImageSequence:
    """Stack of feature images for one signal.

    ``matrices`` has shape (n_images, 128, 22). ``short_input`` is set when the
    signal had fewer than 22 frames and no image could be built.
    """

    matrices: np.ndarray
    center_frames: np.ndarray
    short_input: bool = False

    @property
    def center_times(self) -> np.ndarray:
        return self.center_frames * FRAME_LEN / RATE

    def __len__(self):
        return len(self.matrices)


def n_images(n_frames: int) -> int:
    return 0 if n_frames < IMAGE_WIDTH else (n_frames - IMAGE_WIDTH) // IMAGE_HOP + 1


def decision_times(n_frames: int) -> np.ndarray:
    """Time stamps (s) of the decision instants for a signal with ``n_frames`` frames."""
    return (np.arange(n_images(n_frames)) * IMAGE_HOP + CENTER_OFFSET) * FRAME_LEN / RATE


def normalize_image(image):
    """Divide by the maximum absolute entry; all-zero input comes back unchanged.

    Works on a single image or on a stack with the image axes last.
    """
    image = np.asarray(image)
    peak = np.max(np.abs(image), axis=(-2, -1), keepdims=True)
    return np.divide(image, peak, out=np.zeros_like(image), where=peak > 0)


def build_images(mel: np.ndarray, normalize: bool = True, dtype=np.float32) -> ImageSequence:
    """Images over frames [5k, 5k + 21], one per decision instant, bands on the row axis."""
    mel = np.asarray(mel)
    count = n_images(len(mel))
    if count == 0:
        return ImageSequence(np.zeros((0, mel.shape[1] if mel.ndim == 2 else 128, IMAGE_WIDTH), dtype),
                             np.zeros(0, dtype=int), short_input=True)
    # windows: (n_windows, n_mels, 22)
    windows = sliding_window_view(mel, IMAGE_WIDTH, axis=0)[::IMAGE_HOP][:count]
    mats = normalize_image(windows.astype(np.float64)) if normalize else windows.astype(np.float64)
    centers = np.arange(count) * IMAGE_HOP + CENTER_OFFSET
    return ImageSequence(mats.astype(dtype), centers)
