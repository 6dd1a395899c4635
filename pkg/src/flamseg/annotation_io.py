"""Annotation files (JSON) and SVG timelines.

An annotation document looks like::

    {"schema_version": 1, "recording_id": "...", "duration": 31.2,
     "decision_hop": 0.2322, "segments": [{"start": 0.0, "end": 4.1, "label": "vocal"}, ...],
     "palmas": [{"start": 12.0, "end": 20.5}, ...],
     "profile": {...}, "profile_all_frames": {...}, "flags": [], "track": {...}}

``track`` holds the per-instant decisions and is optional.
"""

from __future__ import annotations

import json
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np

from .images import DECISION_HOP
from .segmenter import (SEGMENT_LABELS, DecisionTrack, InstrumentationProfile, Segment, StructuralAnnotation,
                        profile)

SCHEMA_VERSION = 1
LANE_COLORS = {
    "silence": "#d9d9d9",
    "vocal": "#d62728",
    "guitar-picked": "#1f77b4",
    "guitar-strummed": "#2ca02c",
    "palmas": "#ff7f0e",
}


class AnnotationSchemaError(ValueError):
    pass


def _r(x):
    return round(float(x), 6)


def annotation_to_dict(ann: StructuralAnnotation, recording_id: str = "", include_track: bool = True) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "recording_id": recording_id,
        "duration": _r(ann.duration),
        "decision_hop": _r(ann.track.hop if ann.track is not None else DECISION_HOP),
        "segments": [{"start": _r(s.start), "end": _r(s.end), "label": s.label} for s in ann.segments],
        "palmas": [{"start": _r(a), "end": _r(b)} for a, b in ann.palmas],
        "flags": list(ann.flags),
    }
    if ann.track is not None:
        doc["profile"] = profile(ann.track, "nonsilent").to_dict()
        doc["profile_all_frames"] = profile(ann.track, "all").to_dict()
        if include_track:
            doc["track"] = ann.track.to_dict()
    return doc


def validate_annotation(doc: dict) -> None:
    """Raise :class:`AnnotationSchemaError` unless ``doc`` is a well-formed annotation."""
    for key in ("schema_version", "recording_id", "duration", "decision_hop", "segments", "palmas"):
        if key not in doc:
            raise AnnotationSchemaError(f"missing field {key!r}")
    if doc["schema_version"] != SCHEMA_VERSION:
        raise AnnotationSchemaError(f"unsupported schema version {doc['schema_version']}")
    duration = doc["duration"]
    if not duration >= 0:
        raise AnnotationSchemaError("duration must be non-negative")
    t = 0.0
    for seg in doc["segments"]:
        if seg["label"] not in SEGMENT_LABELS:
            raise AnnotationSchemaError(f"unknown segment label {seg['label']!r}")
        if abs(seg["start"] - t) > 1e-6 or seg["end"] <= seg["start"]:
            raise AnnotationSchemaError(f"segments do not partition the timeline at t={seg['start']}")
        t = seg["end"]
    if doc["segments"] and abs(t - duration) > 1e-6:
        raise AnnotationSchemaError("segments do not reach the end of the recording")
    for iv in doc["palmas"]:
        if not 0.0 <= iv["start"] < iv["end"] <= duration + 1e-6:
            raise AnnotationSchemaError(f"palmas interval out of range: {iv}")
    for key in ("profile", "profile_all_frames"):
        if key in doc:
            for name in ("pct_vocal", "pct_picked", "pct_strummed", "pct_palmas"):
                if not 0.0 <= doc[key][name] <= 1.0:
                    raise AnnotationSchemaError(f"{key}.{name} outside [0, 1]")


def write_annotation(path, ann: StructuralAnnotation, recording_id: str = "", include_track: bool = True) -> dict:
    doc = annotation_to_dict(ann, recording_id, include_track)
    validate_annotation(doc)
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")
    return doc


def read_annotation(path) -> tuple[StructuralAnnotation, dict]:
    """Parse an annotation file back into a :class:`StructuralAnnotation` (plus the raw document)."""
    doc = json.loads(Path(path).read_text())
    validate_annotation(doc)
    track = None
    if "track" in doc:
        track = DecisionTrack.from_dict(doc["track"], doc["duration"], doc["decision_hop"])
    ann = StructuralAnnotation(
        [Segment(s["start"], s["end"], s["label"]) for s in doc["segments"]],
        [(p["start"], p["end"]) for p in doc["palmas"]],
        doc["duration"], track, list(doc.get("flags", [])))
    return ann, doc


def read_profile(doc: dict, over: str = "nonsilent") -> InstrumentationProfile:
    return InstrumentationProfile.from_dict(doc["profile" if over == "nonsilent" else "profile_all_frames"])


# -- SVG timeline ------------------------------------------------------------------

def timeline_svg(ann: StructuralAnnotation, title: str = "", width: int = 900, px_per_lane: int = 28) -> str:
    """Two-lane timeline: segments on top, palmas overlay below, with a seconds axis."""
    margin_l, margin_r, top = 110, 20, 30 if title else 12
    plot_w = width - margin_l - margin_r
    height = top + 2 * px_per_lane + 40
    dur = ann.duration if ann.duration > 0 else 1.0

    def x(t):
        return f"{margin_l + plot_w * t / dur:.2f}"

    svg = ET.Element("svg", xmlns="http://www.w3.org/2000/svg", width=str(width), height=str(height),
                     viewBox=f"0 0 {width} {height}", style="font-family:sans-serif;font-size:11px")
    if title:
        ET.SubElement(svg, "text", x=str(margin_l), y="18", style="font-size:13px").text = title
    lanes = (("segments", top), ("palmas", top + px_per_lane + 4))
    for name, y in lanes:
        ET.SubElement(svg, "text", x="8", y=str(y + px_per_lane * 0.65)).text = name
        ET.SubElement(svg, "rect", x=str(margin_l), y=str(y), width=str(plot_w), height=str(px_per_lane),
                      fill="none", stroke="#888888")
    seg_group = ET.SubElement(svg, "g", id="segments")
    for s in ann.segments:
        r = ET.SubElement(seg_group, "rect", x=x(s.start), y=str(top), height=str(px_per_lane),
                          width=f"{plot_w * (s.end - s.start) / dur:.2f}", fill=LANE_COLORS[s.label])
        r.set("data-label", s.label)
        ET.SubElement(r, "title").text = f"{s.label} {s.start:.2f}-{s.end:.2f} s"
    pal_group = ET.SubElement(svg, "g", id="palmas")
    y_pal = lanes[1][1]
    for a, b in ann.palmas:
        r = ET.SubElement(pal_group, "rect", x=x(a), y=str(y_pal), height=str(px_per_lane),
                          width=f"{plot_w * (b - a) / dur:.2f}", fill=LANE_COLORS["palmas"])
        ET.SubElement(r, "title").text = f"palmas {a:.2f}-{b:.2f} s"
    axis_y = y_pal + px_per_lane + 14
    step = max(1, int(np.ceil(dur / 15.0 / 5.0)) * 5) if dur > 15 else 1
    for t in np.arange(0.0, dur + 1e-9, step):
        ET.SubElement(svg, "line", x1=x(t), x2=x(t), y1=str(axis_y - 10), y2=str(axis_y - 6), stroke="#444444")
        ET.SubElement(svg, "text", x=x(t), y=str(axis_y + 4), style="text-anchor:middle").text = f"{t:g}"
    legend_x = margin_l
    for label, color in LANE_COLORS.items():
        ET.SubElement(svg, "rect", x=str(legend_x), y=str(axis_y + 10), width="10", height="10", fill=color)
        ET.SubElement(svg, "text", x=str(legend_x + 14), y=str(axis_y + 19)).text = label
        legend_x += 24 + 7 * len(label)
    return ET.tostring(svg, encoding="unicode")


def write_timeline(path, ann: StructuralAnnotation, title: str = "") -> None:
    Path(path).write_text(timeline_svg(ann, title) + "\n")
