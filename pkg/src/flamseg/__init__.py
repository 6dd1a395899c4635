"""Instrumentation-based structural annotation of flamenco-style recordings.

The pipeline detects silence, picks the vocal channel, runs three small
binary classifiers (singing voice, picked vs. strummed guitar, palmas) on
128x22 mel images and smooths their decisions into segments. Corpus-level
tools build statistics, distances, layouts and retrieval scores on top of
the resulting instrumentation profiles.
"""

from .audio_io import AudioClip, load_wav, prepare, resample, write_wav
from .micronet import CnnModel, load_model, save_model
from .segmenter import (AnnotateConfig, DecisionTrack, InstrumentationProfile, StructuralAnnotation, annotate,
                        median_smooth, profile, sequence_1hz)

__version__ = "0.1.0"

__all__ = [
    "AudioClip", "load_wav", "prepare", "resample", "write_wav",
    "CnnModel", "load_model", "save_model",
    "AnnotateConfig", "DecisionTrack", "InstrumentationProfile", "StructuralAnnotation",
    "annotate", "median_smooth", "profile", "sequence_1hz",
]
