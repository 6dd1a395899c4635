"""Corpus-level analytics on instrumentation profiles and 1 Hz sequences.

Covers metadata ingestion, decision-weighted global statistics, threshold
based a cappella / instrumental discovery, profile and DTW distances, a
simple force-directed layout of a distance matrix and mean-reciprocal-rank
style retrieval.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numba as nb
import numpy as np

from .segmenter import InstrumentationProfile

REQUIRED_COLUMNS = ("id", "path", "style", "artist_id", "anthology")
STYLE_SEP = ";"


class MetadataError(ValueError):
    pass


# -- metadata -------------------------------------------------------------------------

@dataclass
class CorpusRecord:
    id: str
    path: str
    style: str | None
    artist_id: str
    anthology: str
    instrumentation: str | None = None   # optional ground truth: acappella | instrumental | mixed

    @property
    def styles(self):
        if not self.style:
            return []
        return [s.strip() for s in self.style.split(STYLE_SEP) if s.strip()]

    @property
    def multi_style(self):
        return len(self.styles) > 1


@dataclass
class CorpusIndex:
    records: list
    root: Path = field(default_factory=Path)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self):
        return [r.id for r in self.records]

    def by_id(self, rid):
        for r in self.records:
            if r.id == rid:
                return r
        raise KeyError(rid)

    def style_histogram(self):
        """Recording count per style; multi-style entries count once for each of their styles."""
        return dict(sorted(Counter(s for r in self.records for s in r.styles).items()))

    def single_style(self):
        """Records carrying exactly one style label (multi-style and unlabeled entries dropped)."""
        return CorpusIndex([r for r in self.records if len(r.styles) == 1], self.root)

    def audio_path(self, record):
        p = Path(record.path)
        return p if p.is_absolute() else self.root / p


def ingest_metadata(path) -> CorpusIndex:
    """Read a metadata CSV with columns id, path, style, artist_id, anthology (+ optional instrumentation)."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [c.strip() for c in (reader.fieldnames or [])]
        missing = [c for c in REQUIRED_COLUMNS if c not in cols]
        if missing:
            raise MetadataError(f"{path}: missing column(s) {', '.join(missing)}")
        records, seen = [], set()
        for row in reader:
            row = {k.strip(): (v or "").strip() for k, v in row.items() if k is not None}
            rid = row["id"]
            if not rid:
                raise MetadataError(f"{path}: empty id")
            if rid in seen:
                raise MetadataError(f"{path}: duplicate id {rid!r}")
            seen.add(rid)
            records.append(CorpusRecord(rid, row["path"], row["style"] or None, row["artist_id"], row["anthology"],
                                        row.get("instrumentation") or None))
    return CorpusIndex(records, path.parent)


def write_metadata(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REQUIRED_COLUMNS + ("instrumentation",))
        for r in records:
            w.writerow([r.id, r.path, r.style or "", r.artist_id, r.anthology, r.instrumentation or ""])


# -- global statistics ------------------------------------------------------------------

def global_stats(profiles, weights=None) -> dict:
    """Decision-weighted mean of the profile fractions.

    ``weights`` defaults to each profile's count of non-silent decisions.
    """
    profiles = list(profiles)
    if not profiles:
        raise ValueError("need at least one profile")
    w = np.asarray([p.n_counted for p in profiles] if weights is None else weights, dtype=float)
    if w.sum() <= 0:
        w = np.ones(len(profiles))
    v = np.stack([p.vector() for p in profiles])
    agg = w @ v / w.sum()
    return {"pct_vocal": float(agg[0]), "pct_picked": float(agg[1]), "pct_strummed": float(agg[2]),
            "pct_palmas": float(agg[3]), "n_recordings": len(profiles), "total_weight": float(w.sum())}


# -- a cappella / instrumental discovery --------------------------------------------------

@dataclass
class RetrievalSet:
    mode: str
    threshold: float
    retrieved: list          # ids
    n_true: int | None
    precision: float | None  # None when nothing was retrieved or no labels were given


def _retrieve_mask(pct_vocal, mode, threshold):
    if mode == "acappella":
        return pct_vocal >= threshold
    if mode == "instrumental":
        return pct_vocal <= threshold
    raise ValueError(f"unknown retrieval mode {mode!r}")


def threshold_retrieval(profiles: dict, labels: dict | None, mode: str, threshold: float) -> RetrievalSet:
    """Retrieve recordings by their vocal fraction.

    ``profiles`` maps id to :class:`InstrumentationProfile`; ``labels`` maps id
    to True when the recording really is of the sought kind.
    """
    ids = list(profiles)
    pv = np.array([profiles[i].pct_vocal for i in ids])
    hit = _retrieve_mask(pv, mode, threshold) if ids else np.zeros(0, dtype=bool)
    retrieved = [i for i, h in zip(ids, hit) if h]
    if labels is None:
        return RetrievalSet(mode, threshold, retrieved, None, None)
    n_true = sum(bool(labels[i]) for i in retrieved)
    precision = n_true / len(retrieved) if retrieved else None
    return RetrievalSet(mode, threshold, retrieved, n_true, precision)


def precision_curve(profiles: dict, labels: dict | None, mode: str, thresholds) -> list:
    """(threshold, precision, count) for each threshold, in the order given."""
    out = []
    for t in thresholds:
        r = threshold_retrieval(profiles, labels, mode, float(t))
        out.append((float(t), r.precision, len(r.retrieved)))
    return out


# -- distances ------------------------------------------------------------------------------

def profile_distance(a: InstrumentationProfile, b: InstrumentationProfile) -> float:
    return float(np.linalg.norm(a.vector() - b.vector()))


def itakura_allowed(i, j, n, m):
    """Whether 1-based cell (i, j) lies inside the slope-[1/2, 2] parallelogram of an n x m grid."""
    return j <= 2 * i and i <= 2 * j and (m - j + 1) <= 2 * (n - i + 1) and (n - i + 1) <= 2 * (m - j + 1)


@nb.njit(cache=True, nogil=True)
def _dtw_kernel(a, b):
    n, m = a.shape[0], b.shape[0]
    inf = np.inf
    acc = np.full((n + 1, m + 1), inf)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            if not (j <= 2 * i and i <= 2 * j and (m - j + 1) <= 2 * (n - i + 1) and (n - i + 1) <= 2 * (m - j + 1)):
                continue
            d = 0.0
            for k in range(a.shape[1]):
                d += abs(a[i - 1, k] - b[j - 1, k])
            if i == 1 and j == 1:
                acc[i, j] = 2.0 * d
                continue
            best = acc[i - 1, j - 1] + 2.0 * d
            v = acc[i - 1, j] + d
            if v < best:
                best = v
            v = acc[i, j - 1] + d
            if v < best:
                best = v
            acc[i, j] = best
    return acc[n, m] / (n + m)


def dtw_distance(a, b) -> float:
    """Itakura-constrained DTW between two sequences of binary vectors.

    Local cost is the Manhattan distance. Diagonal steps weigh twice, so every
    admissible path carries total weight n + m and the accumulated cost is
    divided by that. Returns ``inf`` when no admissible path exists (length
    ratio above 2).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if len(a) == 0 or len(b) == 0:
        raise ValueError("DTW needs non-empty sequences")
    if a.shape[1] != b.shape[1]:
        raise ValueError("sequences differ in dimension")
    return float(_dtw_kernel(a, b))


@dataclass
class DistanceMatrix:
    values: np.ndarray
    ids: list
    metric: str

    @property
    def n(self):
        return len(self.ids)

    def infeasible_pairs(self):
        i, j = np.nonzero(np.isinf(np.triu(self.values, 1)))
        return [(self.ids[a], self.ids[b]) for a, b in zip(i, j)]


METRICS = {"profile-euclidean": profile_distance, "dtw-itakura": dtw_distance}


def distance_matrix(items, metric="profile-euclidean", ids=None, workers=1) -> DistanceMatrix:
    """Pairwise distances (upper triangle computed, then mirrored)."""
    items = list(items)
    fn = METRICS[metric]
    n = len(items)
    ids = list(ids) if ids is not None else [str(i) for i in range(n)]
    out = np.zeros((n, n))

    def row(i):
        return [fn(items[i], items[j]) for j in range(i + 1, n)]

    if workers > 1 and n > 2:
        with ThreadPoolExecutor(workers) as ex:
            rows = list(ex.map(row, range(n)))
    else:
        rows = [row(i) for i in range(n)]
    for i, vals in enumerate(rows):
        out[i, i + 1:] = vals
    out = np.triu(out, 1)
    out = out + out.T
    return DistanceMatrix(out, ids, metric)


# -- layout --------------------------------------------------------------------------------

def force_layout(matrix, seed=0, iterations=300, eps=None, repulsion=0.05) -> np.ndarray:
    """Force-directed 2-d embedding of a distance matrix, deterministic per seed.

    Edge weights w = 1/(eps + d) (scaled to a maximum of 1) pull pairs together
    linearly in their separation; every pair repels with strength
    ``repulsion * (deg_i + 1) * (deg_j + 1) / dist``, where deg is the weighted
    degree. Infinite distances are clamped to the largest finite one. The step
    size decays linearly to zero over the iterations.
    """
    d = np.array(matrix.values if isinstance(matrix, DistanceMatrix) else matrix, dtype=float)
    n = len(d)
    rng = np.random.default_rng(seed)
    pos = rng.uniform(-1.0, 1.0, size=(n, 2))
    if n < 2:
        return pos
    off = ~np.eye(n, dtype=bool)
    finite = np.isfinite(d) & off
    fmax = d[finite].max() if finite.any() else 1.0
    d = np.where(np.isfinite(d), d, fmax)
    if eps is None:
        pos_d = d[off & (d > 0)]
        eps = 0.1 * pos_d.mean() if pos_d.size else 1.0
    w = np.where(off, 1.0 / (eps + d), 0.0)
    w /= w.max()
    deg = w.sum(axis=1) / max(n - 1, 1)
    mass = np.outer(deg + 1.0, deg + 1.0) * off
    for it in range(iterations):
        step = 0.1 * (1.0 - it / iterations)
        diff = pos[None, :, :] - pos[:, None, :]          # diff[i, j] = x_j - x_i
        dist2 = np.sum(diff ** 2, axis=-1) + 1e-9
        attract = np.sum(w[..., None] * diff, axis=1)
        repel = -np.sum((repulsion * mass / dist2)[..., None] * diff, axis=1)
        force = attract + repel
        norm = np.linalg.norm(force, axis=1, keepdims=True)
        pos = pos + step * force / np.maximum(1.0, norm)
    return pos - pos.mean(axis=0)


# -- retrieval --------------------------------------------------------------------------------

@dataclass
class RetrievalResult:
    per_style: dict        # style -> {"M": int, "ranks": [int or None], "mrr": float}
    k: int | None

    @property
    def mean_mrr(self):
        vals = [v["mrr"] for v in self.per_style.values()]
        return float(np.mean(vals)) if vals else 0.0


def first_match_rank(dist_row, labels, query, k=10):
    """1-based rank of the first neighbour sharing the query's label, or None.

    Neighbours are ordered by distance with index as tie-break; the query itself
    is skipped. Only the first ``k`` neighbours are inspected (all if k is None).
    """
    order = np.lexsort((np.arange(len(dist_row)), dist_row))
    order = order[order != query]
    if k is not None:
        order = order[:k]
    hits = np.nonzero(np.asarray([labels[j] for j in order], dtype=object) == labels[query])[0]
    return int(hits[0]) + 1 if hits.size else None


def mrr_retrieval(matrix, labels, k: int | None = 10) -> RetrievalResult:
    """Mean reciprocal rank per style; misses contribute 0. ``k=None`` ranks the full list."""
    d = np.asarray(matrix.values if isinstance(matrix, DistanceMatrix) else matrix, dtype=float)
    labels = list(labels)
    if any(lab is None or lab == "" for lab in labels):
        raise ValueError("every item needs a style label")
    if k is not None and len(labels) <= k:
        raise ValueError(f"need more than k={k} items, got {len(labels)}")
    per_style = {}
    for q in range(len(labels)):
        rank = first_match_rank(d[q], labels, q, k)
        entry = per_style.setdefault(labels[q], {"M": 0, "ranks": []})
        entry["M"] += 1
        entry["ranks"].append(rank)
    for entry in per_style.values():
        entry["mrr"] = float(np.mean([1.0 / r if r else 0.0 for r in entry["ranks"]]))
    return RetrievalResult(dict(sorted(per_style.items())), k)


# -- exports -----------------------------------------------------------------------------------

def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return "inf" if np.isinf(x) else f"{float(x):.10g}"
    return str(x)


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_distance_csv(path, dm: DistanceMatrix) -> None:
    write_rows(path, ["id"] + dm.ids, ([dm.ids[i]] + list(dm.values[i]) for i in range(dm.n)))


def write_layout_json(path, ids, coords, styles) -> None:
    recs = [{"id": i, "x": round(float(x), 6), "y": round(float(y), 6), "style": s}
            for i, (x, y), s in zip(ids, coords, styles)]
    Path(path).write_text(json.dumps(recs, indent=1) + "\n")


def write_curve_csv(path, curve) -> None:
    write_rows(path, ["threshold", "precision", "count"], curve)


def write_mrr_csv(path, result: RetrievalResult) -> None:
    write_rows(path, ["style", "M_style", "MRR", "ranks"],
               ([s, v["M"], v["mrr"], " ".join(str(r or 0) for r in v["ranks"])]
                for s, v in result.per_style.items()))


def write_scatter_csv(path, ids, styles, profiles) -> None:
    write_rows(path, ["id", "style", "pct_vocal", "pct_picked", "pct_strummed", "pct_palmas"],
               ([i, s, *p.vector()] for i, s, p in zip(ids, styles, profiles)))
