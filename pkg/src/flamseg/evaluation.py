"""Frame-level metrics, grouped cross-validation and the synthetic benchmark driver.

For each task the dataset holds, per recording, the classifier inputs and the
ground-truth labels at the decision instants that task is evaluated on:

* vocal:  non-silent instants of the vocal channel, positive = singing
* guitar: non-silent instants whose ground truth is a guitar section, on the
  guitar channel, positive = picked
* palmas: non-silent instants of the mono mix, positive = palmas

Held-out predictions go through the same median smoothing as the full
pipeline before they are pooled.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import dsp, gmm, micronet
from .annotation_io import SCHEMA_VERSION
from .audio_io import write_wav
from .images import DECISION_HOP, decision_times, n_images
from .segmenter import AnnotateConfig, instant_silence, median_smooth, prepared_views, view_features
from .synth import synth_corpus, synth_recording, truth_annotation  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

POSITIVE_CLASS = {"vocal": "vocal", "guitar": "guitar-picked", "palmas": "palmas"}
TASK_VIEW = {"vocal": 0, "guitar": 1, "palmas": 2}


class EvaluationError(RuntimeError):
    pass


# -- metrics ------------------------------------------------------------------------------

@dataclass
class PRF:
    precision: float
    recall: float
    f_measure: float
    tp: int
    fp: int
    fn: int
    degenerate: bool = False   # P or R undefined (no predicted or no true positives), reported as 0


def prf(predicted, truth) -> PRF:
    p = np.asarray(predicted).astype(bool)
    t = np.asarray(truth).astype(bool)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    tp = int(np.sum(p & t))
    fp = int(np.sum(p & ~t))
    fn = int(np.sum(~p & t))
    degenerate = (tp + fp == 0) or (tp + fn == 0)
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    return PRF(prec, rec, f, tp, fp, fn, degenerate)


# -- folds ------------------------------------------------------------------------------------

@dataclass
class FoldPlan:
    folds: list                 # list of sorted id lists
    group_of: dict              # id -> group key
    grouping: str = "song"

    def train_test(self, i):
        test = set(self.folds[i])
        train = [x for j, f in enumerate(self.folds) if j != i for x in f]
        return train, sorted(test)


def make_folds(group_of: dict, k=10, seed=0, grouping="song") -> FoldPlan:
    """Shuffle groups by seed, then deal them round-robin in order of descending size."""
    groups = {}
    for item in sorted(group_of):
        groups.setdefault(group_of[item], []).append(item)
    keys = sorted(groups)
    if len(keys) < k:
        raise ValueError(f"{len(keys)} groups cannot fill {k} folds")
    rng = np.random.default_rng(seed)
    keys = [keys[i] for i in rng.permutation(len(keys))]
    keys.sort(key=lambda g: -len(groups[g]))      # stable: shuffled order among equal sizes
    folds = [[] for _ in range(k)]
    for i, g in enumerate(keys):
        folds[i % k].extend(groups[g])
    return FoldPlan([sorted(f) for f in folds], dict(group_of), grouping)


# -- per-recording task data ----------------------------------------------------------------------

def truth_from_annotation(doc: dict, times) -> dict:
    """Ground-truth vocal / guitar / palmas / silent labels at ``times`` from an annotation document."""
    times = np.asarray(times, dtype=float)
    out = {k: np.zeros(len(times), dtype=int) for k in ("vocal", "palmas", "silent")}
    out["guitar"] = np.full(len(times), -1, dtype=int)
    for seg in doc["segments"]:
        m = (times >= seg["start"]) & (times < seg["end"])
        out["silent"][m] = seg["label"] == "silence"
        out["vocal"][m] = seg["label"] == "vocal"
        out["guitar"][m] = {"guitar-picked": 1, "guitar-strummed": 0}.get(seg["label"], -1)
    for iv in doc["palmas"]:
        out["palmas"][(times >= iv["start"]) & (times < iv["end"])] = 1
    return out


@dataclass
class TaskData:
    """Inputs and labels of one recording for one task and model family."""

    id: str
    group: str
    inputs: np.ndarray
    labels: np.ndarray


def task_data(clip, truth_doc, task, family, recording_id="", group="") -> TaskData:
    clip, views = prepared_views(clip)
    n_frames = clip.n_samples // dsp.FRAME_LEN
    n_dec = n_images(n_frames)
    times = decision_times(n_frames)
    truth = truth_from_annotation(truth_doc, times)
    if n_dec == 0:
        shape = (0,) + ((128, 22) if family == "cnn" else (3 * dsp.N_MFCC,))
        return TaskData(recording_id, group, np.zeros(shape, np.float32), np.zeros(0, dtype=int))
    energies = sum(dsp.frame_energies(ch) for ch in clip.samples)
    active = instant_silence(energies, n_dec) == 0
    if task == "vocal":
        sel, labels = active, truth["vocal"]
    elif task == "guitar":
        sel = active & (truth["guitar"] >= 0)
        labels = truth["guitar"]
    elif task == "palmas":
        sel, labels = active, truth["palmas"]
    else:
        raise ValueError(f"unknown task {task!r}")
    inputs = view_features(views[TASK_VIEW[task]], task, family)[sel]
    return TaskData(recording_id, group, inputs, labels[sel].astype(int))


def smoothing_window(task, config: AnnotateConfig | None = None):
    config = config or AnnotateConfig()
    return {"vocal": config.vocal_window, "guitar": config.guitar_window, "palmas": config.palmas_window}[task]


# -- cross-validation ----------------------------------------------------------------------------

@dataclass
class FoldResult:
    fold: int
    test_ids: list
    metrics: PRF
    epochs: int = 0


@dataclass
class EvalReport:
    task: str
    family: str
    pooled: PRF
    folds: list = field(default_factory=list)
    positive_class: str = ""
    grouping: str = "song"

    def to_dict(self):
        return {"task": self.task, "family": self.family, "positive_class": self.positive_class,
                "grouping": self.grouping, "pooled": asdict(self.pooled),
                "folds": [{"fold": f.fold, "test_ids": f.test_ids, "epochs": f.epochs, **asdict(f.metrics)}
                          for f in self.folds]}


@dataclass
class CVConfig:
    k: int = 10
    seed: int = 0
    train: micronet.TrainConfig = field(default_factory=micronet.TrainConfig)
    gmm_components: int = gmm.N_COMPONENTS
    annotate: AnnotateConfig = field(default_factory=AnnotateConfig)
    workers: int = 1


def fit_task_model(train_items, task, family, seed, config: CVConfig):
    x = np.concatenate([d.inputs for d in train_items])
    y = np.concatenate([d.labels for d in train_items])
    if family == "cnn":
        tc = micronet.TrainConfig(**{**asdict(config.train), "seed": seed})
        res = micronet.train(x, y, tc, task=task)
        return res.model, len(res.history)
    return gmm.train_classifier(x, y, k=config.gmm_components, seed=seed, task=task), 0


def predict_task(model, item: TaskData, task, config: CVConfig):
    if len(item.inputs) == 0:
        return np.zeros(0, dtype=int)
    if isinstance(model, micronet.CnnModel):
        raw = micronet.predict_sequence(model, item.inputs)
    else:
        raw = model.classify(item.inputs)
    return median_smooth(raw, smoothing_window(task, config.annotate))


def _run_fold(args):
    i, train_items, test_items, task, family, config = args
    try:
        model, epochs = fit_task_model(train_items, task, family, int(np.random.default_rng([config.seed, i]).integers(2**31)),
                                       config)
        preds = [predict_task(model, d, task, config) for d in test_items]
    except Exception as exc:
        raise EvaluationError(f"fold {i} failed: {exc}") from exc
    return i, preds, epochs


def cross_validate(items, task, family, config: CVConfig | None = None, grouping="song") -> EvalReport:
    """k-fold grouped CV over a list of :class:`TaskData`; decisions are pooled over all folds."""
    config = config or CVConfig()
    by_id = {d.id: d for d in items}
    if len(by_id) != len(items):
        raise ValueError("duplicate recording ids")
    plan = make_folds({d.id: d.group for d in items}, config.k, config.seed, grouping)
    jobs = []
    for i in range(config.k):
        train_ids, test_ids = plan.train_test(i)
        train_groups = {plan.group_of[x] for x in train_ids}
        assert not train_groups & {plan.group_of[x] for x in test_ids}, f"group leak in fold {i}"
        jobs.append((i, [by_id[x] for x in train_ids], [by_id[x] for x in test_ids], task, family, config))
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as ex:
            results = list(ex.map(_run_fold, jobs))
    else:
        results = []
        for job in jobs:
            results.append(_run_fold(job))
            log.info("%s/%s fold %d done", task, family, job[0])
    all_pred, all_true, folds = [], [], []
    for (i, preds, epochs), job in zip(results, jobs):
        test_items = job[2]
        truth = [d.labels for d in test_items]
        fp = np.concatenate(preds) if preds else np.zeros(0, int)
        ft = np.concatenate(truth) if truth else np.zeros(0, int)
        folds.append(FoldResult(i, [d.id for d in test_items], prf(fp, ft), epochs))
        all_pred.append(fp)
        all_true.append(ft)
    pooled = prf(np.concatenate(all_pred), np.concatenate(all_true))
    return EvalReport(task, family, pooled, folds, POSITIVE_CLASS[task], grouping)


# -- benchmark helpers -------------------------------------------------------------------------------

TASK_GROUPING = {"vocal": "artist", "guitar": "song", "palmas": "song"}


def plan_group(plan, task):
    return plan.artist if TASK_GROUPING[task] == "artist" else plan.recording_id


def benchmark_items(plans_and_clips, task, family):
    """TaskData for every ``(plan, clip)`` pair."""
    return [task_data(clip, truth_annotation(plan), task, family, plan.recording_id, plan_group(plan, task))
            for plan, clip in plans_and_clips]


def write_report_csv(path, reports) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["task", "family", "fold", "precision", "recall", "f_measure", "tp", "fp", "fn", "degenerate"])
        for r in reports:
            rows = [(f.fold, f.metrics) for f in r.folds] + [("pooled", r.pooled)]
            for fold, m in rows:
                w.writerow([r.task, r.family, fold, f"{m.precision:.6f}", f"{m.recall:.6f}", f"{m.f_measure:.6f}",
                            m.tp, m.fp, m.fn, int(m.degenerate)])


def write_report_json(path, reports) -> None:
    Path(path).write_text(json.dumps([r.to_dict() for r in reports], indent=1) + "\n")


# -- synthetic corpus on disk ----------------------------------------------------------------------------

def export_synth_corpus(out_dir, plans, workers=1) -> list:
    """Write every plan as ``<id>.wav`` plus ``<id>.truth.json`` and a ``metadata.csv``.

    The truth files follow the annotation schema (segments + palmas overlay).
    """
    from .corpus import CorpusRecord, write_metadata
    from .synth import instrumentation_label

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = []
    if workers > 1 and len(plans) > 1:
        with ProcessPoolExecutor(workers) as ex:
            clips = ex.map(synth_recording, plans)
    else:
        clips = map(synth_recording, plans)
    for plan, clip in zip(plans, clips):
        write_wav(out / f"{plan.recording_id}.wav", clip)
        doc = truth_annotation(plan)
        doc = {"schema_version": SCHEMA_VERSION, "recording_id": plan.recording_id, "duration": doc["duration"],
               "decision_hop": DECISION_HOP, "segments": doc["segments"], "palmas": doc["palmas"], "flags": [],
               "group": plan.group or plan.recording_id, "artist": plan.artist}
        (out / f"{plan.recording_id}.truth.json").write_text(json.dumps(doc, indent=1) + "\n")
        records.append(CorpusRecord(plan.recording_id, f"{plan.recording_id}.wav", plan.style or None, plan.artist,
                                    plan.anthology, instrumentation_label(plan)))
    write_metadata(out / "metadata.csv", records)
    return records
