# # Corpus-level analysis of instrumentation
#
# Once every recording has an instrumentation track, a corpus can be
# summarized, searched for unaccompanied singing, and compared style by style.
# To keep this fast we skip the classifiers and read the tracks straight from
# synthetic ground truth; annotations written by `flamseg annotate` plug into
# the same functions.
#
# Run: python demos/02_corpus_analytics.py

import numpy as np

from flamseg import corpus as C, synth
from flamseg.images import DECISION_HOP
from flamseg.segmenter import DecisionTrack, profile, sequence_1hz

plans = synth.style_corpus(seed=1, n_per_style=6)
tracks = {}
for plan in plans:
    times = (np.arange(int(plan.duration / DECISION_HOP)) + 0.5) * DECISION_HOP
    t = synth.truth_at(plan, times)
    tracks[plan.recording_id] = DecisionTrack(times, t["silent"], t["vocal"], t["guitar"], t["palmas"],
                                              plan.duration)
styles = {p.recording_id: p.style for p in plans}
ids = sorted(tracks)
profiles = {i: profile(tracks[i]) for i in ids}
print(len(ids), "recordings in", len(set(styles.values())), "styles")

# ## Global statistics
#
# Decision-weighted shares across the whole corpus.

print({k: round(v, 3) if isinstance(v, float) else v
       for k, v in C.global_stats([profiles[i] for i in ids]).items()})

# ## Finding unaccompanied singing
#
# A recording is retrieved as a cappella when its vocal share reaches the
# threshold. Lowering the threshold can only add recordings, so precision is
# traded for recall.

acappella = {p.recording_id: synth.instrumentation_label(p) == "acappella" for p in plans}
for thr, prec, count in C.precision_curve(profiles, acappella, "acappella", [1.0, 0.9, 0.8, 0.7, 0.6]):
    print(f"  vocal share >= {thr:.1f}: {count:2d} retrieved, precision {prec if prec is None else round(prec, 2)}")

# ## Style similarity
#
# Two distances: Euclidean between profiles, and DTW between 1 Hz
# instrumentation sequences under an Itakura slope constraint (pairs whose
# lengths differ by more than a factor 2 are infinitely far apart).

seqs = [sequence_1hz(tracks[i]) for i in ids]
for metric, items in (("profile-euclidean", [profiles[i] for i in ids]), ("dtw-itakura", seqs)):
    dm = C.distance_matrix(items, metric, ids)
    res = C.mrr_retrieval(dm, [styles[i] for i in ids], k=10)
    print(f"\n{metric}: mean reciprocal rank per style")
    for style, entry in res.per_style.items():
        print(f"  {style:13s} {entry['mrr']:.2f}  ranks {entry['ranks']}")

    # a 2-d force layout of the same matrix: same-style recordings should sit together
    xy = C.force_layout(dm, seed=0)
    spread = {s: float(np.linalg.norm(xy[[styles[i] == s for i in ids]].std(axis=0)))
              for s in sorted(set(styles.values()))}
    print("  layout spread per style:", {s: round(v, 2) for s, v in spread.items()})
