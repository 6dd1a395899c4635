"""Pitch-class profiles per instrumentation class and template-based mode estimation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import dsp
from .audio_io import AudioClip, normalize, prepare, resample, TARGET_RATE

PROFILE_CLASSES = ("vocal", "picked", "strummed")
_SEGMENT_CLASS = {"vocal": "vocal", "guitar-picked": "picked", "guitar-strummed": "strummed"}
KDE_GRID = 64
KDE_FALLBACK_BW = 0.1


class DegenerateProfileError(ValueError):
    """A constant profile has no defined correlation."""


@dataclass
class PitchClassProfile:
    values: np.ndarray        # 12 bins, C = 0
    kind: str = ""            # vocal | picked | strummed
    n_frames: int = 0


@dataclass
class PitchClassTemplate:
    values: np.ndarray
    mode: str                 # major | flamenco
    source: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (12,):
            raise ValueError("a template needs 12 values")
        if np.ptp(self.values) == 0:
            raise DegenerateProfileError("template values are all equal")


def max_normalize(x):
    x = np.asarray(x, dtype=float)
    m = x.max() if x.size else 0.0
    return x / m if m > 0 else x.copy()


# -- profiles ------------------------------------------------------------------------------

def segment_profiles(clip, annotation, rate=TARGET_RATE):
    """Average raw HPCP frames of the mono mix over vocal / picked / strummed segments.

    ``clip`` is an :class:`AudioClip` (resampled and normalized here) or a mono
    signal at ``rate``. Each 4096-sample frame goes to the segment covering its
    center. Returns ``(profiles, flags)`` where classes without frames are
    omitted and ``flags`` contains ``"no_profiles"`` when nothing was covered.
    """
    if isinstance(clip, AudioClip):
        if clip.sample_rate != TARGET_RATE:
            clip = resample(clip, TARGET_RATE)
        signal = prepare(normalize(clip))[2]
        rate = TARGET_RATE
    else:
        signal = np.asarray(clip, dtype=float)
    frames = dsp.hpcp_frames(signal, rate, normalize=False)
    centers = (np.arange(len(frames)) + 0.5) * dsp.HPCP_FRAME / rate
    kinds = np.full(len(frames), "", dtype=object)
    for seg in annotation.segments:
        cls = _SEGMENT_CLASS.get(seg.label)
        if cls:
            kinds[(centers >= seg.start) & (centers < seg.end)] = cls
    profiles = {}
    for cls in PROFILE_CLASSES:
        sel = kinds == cls
        if sel.any() and frames[sel].sum() > 0:
            profiles[cls] = PitchClassProfile(max_normalize(frames[sel].mean(axis=0)), cls, int(sel.sum()))
    return profiles, ([] if profiles else ["no_profiles"])


# -- correlation and key normalization ------------------------------------------------------

def pearson(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xc, yc = x - x.mean(), y - y.mean()
    nx, ny = np.sqrt(xc @ xc), np.sqrt(yc @ yc)
    if nx == 0 or ny == 0:
        raise DegenerateProfileError("correlation undefined for a constant profile")
    return float(np.clip(xc @ yc / (nx * ny), -1.0, 1.0))


def _values(p):
    return p.values if isinstance(p, (PitchClassProfile, PitchClassTemplate)) else np.asarray(p, dtype=float)


def shift_correlations(profile, reference) -> np.ndarray:
    """Pearson correlation of ``roll(profile, -s)`` with the reference for s = 0..11."""
    p, r = _values(profile), _values(reference)
    return np.array([pearson(np.roll(p, -s), r) for s in range(12)])


def key_shift(profile, reference) -> int:
    """Rotation s (0-11) such that ``roll(profile, -s)`` correlates best with ``reference``; ties to smallest s."""
    c = shift_correlations(profile, reference)
    # exact rotations can differ from the best one in the last bits only
    return int(np.flatnonzero(c >= c.max() - 1e-12)[0])


def to_key(profile, reference) -> np.ndarray:
    return np.roll(_values(profile), -key_shift(profile, reference))


def derive_template(profiles: dict, mode="flamenco", source="corpus-derived") -> PitchClassTemplate:
    """Average of key-normalized profiles; the reference is the lexicographically smallest id."""
    if not profiles:
        raise ValueError("need at least one profile to derive a template")
    ids = sorted(profiles)
    ref = _values(profiles[ids[0]])
    aligned = [to_key(profiles[i], ref) for i in ids]
    return PitchClassTemplate(max_normalize(np.mean(aligned, axis=0)), mode, f"{source} (reference {ids[0]})")


def template_correlation(profile, template) -> float:
    """Pearson correlation after rotating the profile into the template's key."""
    t = _values(template)
    return pearson(to_key(profile, t), t)


# -- template files ---------------------------------------------------------------------------

def load_template(path=None) -> PitchClassTemplate:
    """Read a one-row template CSV (mode, source, then the 12 pitch classes); default: bundled major."""
    if path is None:
        text = resources.files("flamseg").joinpath("data/major_krumhansl_kessler.csv").read_text()
    else:
        text = Path(path).read_text()
    rows = list(csv.DictReader(text.splitlines()))
    if len(rows) != 1:
        raise ValueError("template file must contain exactly one data row")
    row = rows[0]
    return PitchClassTemplate(np.array([float(row[pc]) for pc in dsp.PITCH_CLASSES]), row["mode"], row["source"])


def save_template(path, template: PitchClassTemplate) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "source", *dsp.PITCH_CLASSES])
        w.writerow([template.mode, template.source, *(f"{v:.10g}" for v in template.values)])


# -- density export ----------------------------------------------------------------------------

def silverman_bandwidth(x) -> float:
    """Per-axis Silverman rule for a 2-d product kernel; falls back to a fixed width for zero spread."""
    x = np.asarray(x, dtype=float)
    sd = x.std(ddof=1) if len(x) > 1 else 0.0
    return float(sd * len(x) ** (-1.0 / 6.0)) if sd > 0 else KDE_FALLBACK_BW


def kde_export(points, grid_size=KDE_GRID, lo=-1.0, hi=1.0):
    """Gaussian product-kernel density on a grid of cell centers over [lo, hi]^2.

    Returns ``(centers, density)`` with ``density[iy, ix]``; the grid is scaled
    so that it integrates to one over the square.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise ValueError("need at least one point")
    step = (hi - lo) / grid_size
    centers = lo + (np.arange(grid_size) + 0.5) * step
    hx, hy = silverman_bandwidth(pts[:, 0]), silverman_bandwidth(pts[:, 1])
    kx = np.exp(-0.5 * ((centers[:, None] - pts[None, :, 0]) / hx) ** 2) / (hx * np.sqrt(2 * np.pi))
    ky = np.exp(-0.5 * ((centers[:, None] - pts[None, :, 1]) / hy) ** 2) / (hy * np.sqrt(2 * np.pi))
    dens = ky @ kx.T / len(pts)
    mass = dens.sum() * step * step
    if mass > 0:
        dens = dens / mass
    return centers, dens


def write_kde_csv(path, centers, dens) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "density"])
        for iy, y in enumerate(centers):
            for ix, x in enumerate(centers):
                w.writerow([f"{x:.6f}", f"{y:.6f}", f"{dens[iy, ix]:.10g}"])
