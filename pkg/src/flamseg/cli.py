"""Command line interface.

Every command writes its artifacts into ``--out`` together with a
``manifest.json`` that records the resolved options and a sha256 per artifact.

Option values are resolved in this order: command line flag, environment
variable ``FLAMSEG_<OPTION>`` (e.g. ``FLAMSEG_SEED``), the JSON file given by
``--config`` (top-level keys or a section named after the subcommand), then
the built-in default.

Exit codes::

    0  success
    2  usage error (unknown subcommand, bad flag)
    3  missing input (file or directory not found)
    4  invalid input (unreadable audio, corrupt model, malformed metadata or annotation)
    5  processing failure (training or evaluation error)
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("flamseg")

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_INVALID, EXIT_FAILURE = 0, 2, 3, 4, 5
TASKS = ("vocal", "guitar", "palmas")
ENV_PREFIX = "FLAMSEG_"


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _missing(msg):
    return CliError(msg, EXIT_MISSING)


# -- option resolution ----------------------------------------------------------------------------

# dest -> (default, type); options declared with default=None on the parser and resolved here
GLOBAL_OPTIONS = {"seed": (0, int), "workers": (None, int), "config": (None, str), "log_level": ("WARNING", str)}
COMMAND_OPTIONS = {
    "synth": {"kind": ("acceptance", str), "n_per_task": (20, int), "n_per_style": (4, int),
              "dur_min": (None, float), "dur_max": (None, float)},
    "train": {"task": ("all", str), "family": ("cnn", str), "epochs": (50, int), "batch_size": (128, int)},
    "annotate": {"family": ("cnn", str)},
    "inspect": {"time": (None, float)},
    "stats": {},
    "discover": {"mode": ("acappella", str), "threshold": (None, float), "thresholds": (None, str)},
    "similarity": {"iterations": (300, int)},
    "retrieve": {"metric": ("dtw-itakura", str), "k": (10, int), "full_ranking": (False, bool)},
    "tonality": {"template_style": ("soleares", str), "major_template": (None, str)},
    "evaluate": {"task": ("all", str), "family": ("both", str), "folds": (10, int), "epochs": (50, int)},
}


def _coerce(value, typ):
    if typ is bool:
        return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
    return typ(value)


def resolve_options(args) -> dict:
    config = {}
    cfg_path = args.config or os.environ.get(ENV_PREFIX + "CONFIG")
    if cfg_path:
        p = Path(cfg_path)
        if not p.is_file():
            raise _missing(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise CliError(f"config file {p} is not valid JSON: {exc}", EXIT_INVALID) from exc
        config = {k: v for k, v in raw.items() if not isinstance(v, dict)}
        config.update(raw.get(args.command, {}))
    resolved = {}
    spec = {**GLOBAL_OPTIONS, **COMMAND_OPTIONS.get(args.command, {})}
    for dest, (default, typ) in spec.items():
        value = getattr(args, dest, None)
        if value is None or value is False and typ is bool:
            env = os.environ.get(ENV_PREFIX + dest.upper())
            if env is not None:
                value = env
            elif dest in config:
                value = config[dest]
            elif value is None:
                value = default
        resolved[dest] = None if value is None else _coerce(value, typ)
    if resolved["workers"] is None:
        resolved["workers"] = os.cpu_count() or 1
    return resolved


# -- run directory ----------------------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(out: Path, command: str, options: dict, inputs: dict) -> Path:
    """Hash every file under ``out`` (except the manifest) into ``manifest.json``."""
    artifacts = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            artifacts[p.relative_to(out).as_posix()] = _sha256(p)
    opts = {k: v for k, v in options.items() if k not in ("workers", "log_level", "config")}
    doc = {"tool": "flamseg", "version": __version__, "command": command, "options": opts,
           "inputs": {k: str(v) for k, v in inputs.items()}, "artifacts": artifacts}
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def _need_dir(path, what):
    p = Path(path)
    if not p.is_dir():
        raise _missing(f"{what} not found: {p}")
    return p


def _need_file(path, what):
    p = Path(path)
    if not p.is_file():
        raise _missing(f"{what} not found: {p}")
    return p


def _tasks(value):
    if value == "all":
        return list(TASKS)
    if value not in TASKS:
        raise CliError(f"unknown task {value!r}", EXIT_USAGE)
    return [value]


def _model_path(model_dir, task, family):
    return Path(model_dir) / f"{task}.{family}.model"


# -- corpus helpers ----------------------------------------------------------------------------------

def _load_corpus(corpus_dir):
    from .corpus import ingest_metadata
    corpus_dir = _need_dir(corpus_dir, "corpus directory")
    meta = _need_file(corpus_dir / "metadata.csv", "corpus metadata")
    return ingest_metadata(meta)


def _truth_doc(index, rec):
    p = index.root / f"{rec.id}.truth.json"
    if not p.is_file():
        raise _missing(f"ground truth for {rec.id} not found: {p}")
    return json.loads(p.read_text())


def _task_items(index, task, family, grouping):
    from .audio_io import load_wav
    from .evaluation import task_data
    items = []
    for rec in index:
        doc = _truth_doc(index, rec)
        group = rec.artist_id if grouping == "artist" else rec.id
        items.append(task_data(load_wav(index.audio_path(rec)), doc, task, family, rec.id, group))
    return items


def _task_subset(index, task):
    """Recordings styled ``<task>-set`` when the corpus has them, otherwise the whole corpus."""
    from .corpus import CorpusIndex
    sub = [r for r in index if r.style == f"{task}-set"]
    return CorpusIndex(sub, index.root) if sub else index


def _load_annotations(ann_dir):
    from .annotation_io import read_annotation
    ann_dir = _need_dir(ann_dir, "annotation directory")
    out = {}
    for p in sorted(ann_dir.glob("*.annotation.json")):
        ann, doc = read_annotation(p)
        out[doc["recording_id"] or p.name.split(".")[0]] = (ann, doc)
    if not out:
        raise _missing(f"no *.annotation.json files in {ann_dir}")
    return out


def _labeled(annotations, index):
    """(ids, styles) of annotated, single-style recordings."""
    ids, styles = [], []
    for rid in annotations:
        try:
            rec = index.by_id(rid)
        except KeyError:
            continue
        if len(rec.styles) == 1:
            ids.append(rid)
            styles.append(rec.styles[0])
    return ids, styles


# -- commands -------------------------------------------------------------------------------------------

def cmd_synth(args, opt, out):
    from . import synth
    from .evaluation import export_synth_corpus
    if opt["kind"] == "acceptance":
        dur = (opt["dur_min"] or 30.0, opt["dur_max"] or 45.0)
        plans = synth.acceptance_corpus(opt["seed"], opt["n_per_task"], dur)
    elif opt["kind"] == "styles":
        dur = (opt["dur_min"] or 20.0, opt["dur_max"] or 30.0)
        plans = synth.style_corpus(opt["seed"], opt["n_per_style"], dur)
    else:
        raise CliError(f"unknown corpus kind {opt['kind']!r}", EXIT_USAGE)
    export_synth_corpus(out, plans, workers=opt["workers"])
    return {}


def cmd_train(args, opt, out):
    from . import gmm, micronet
    from .evaluation import TASK_GROUPING
    index = _load_corpus(args.corpus)
    for task in _tasks(opt["task"]):
        sub = _task_subset(index, task)
        items = _task_items(sub, task, opt["family"], TASK_GROUPING[task])
        x = np.concatenate([d.inputs for d in items])
        y = np.concatenate([d.labels for d in items])
        try:
            if opt["family"] == "cnn":
                cfg = micronet.TrainConfig(epochs=opt["epochs"], batch_size=opt["batch_size"], seed=opt["seed"])
                res = micronet.train(x, y, cfg, task=task)
                micronet.save_model(res.model, _model_path(out, task, "cnn"))
                history = res.history
            elif opt["family"] == "gmm":
                clf = gmm.train_classifier(x, y, seed=opt["seed"], task=task)
                gmm.save_classifier(clf, _model_path(out, task, "gmm"))
                history = clf.positive.log_likelihood
            else:
                raise CliError(f"unknown family {opt['family']!r}", EXIT_USAGE)
        except ValueError as exc:
            raise CliError(f"training {task} failed: {exc}", EXIT_FAILURE) from exc
        (out / f"{task}.{opt['family']}.history.json").write_text(
            json.dumps({"task": task, "n_examples": int(len(y)), "n_positive": int(y.sum()),
                        "history": [round(float(h), 8) for h in history]}, indent=1) + "\n")
    return {"corpus": args.corpus}


def load_models(model_dir, family):
    from . import gmm, micronet
    model_dir = _need_dir(model_dir, "model directory")
    models = {}
    for task in TASKS:
        p = _need_file(_model_path(model_dir, task, family), f"{task} model")
        models[task] = micronet.load_model(p) if family == "cnn" else gmm.load_classifier(p)
    return models


def _annotate_one(job):
    from .annotation_io import write_annotation, write_timeline
    from .audio_io import load_wav
    from .segmenter import annotate
    rid, wav, models, out = job
    ann = annotate(load_wav(wav), models, recording_id=rid)
    write_annotation(Path(out) / f"{rid}.annotation.json", ann, rid)
    write_timeline(Path(out) / f"{rid}.timeline.svg", ann, rid)
    return rid


def cmd_annotate(args, opt, out):
    models = load_models(args.models, opt["family"])
    src = Path(args.input)
    if src.is_dir():
        index = _load_corpus(src)
        jobs = [(r.id, index.audio_path(r), models, out) for r in index]
    elif src.is_file():
        jobs = [(src.stem, src, models, out)]
    else:
        raise _missing(f"input not found: {src}")
    for _, wav, _, _ in jobs:
        _need_file(wav, "audio file")
    if opt["workers"] > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(opt["workers"], len(jobs))) as ex:
            list(ex.map(_annotate_one, jobs))
    else:
        for job in jobs:
            _annotate_one(job)
    return {"input": src, "models": args.models}


def cmd_inspect(args, opt, out):
    from . import dsp, micronet
    from .audio_io import load_wav
    from .images import decision_times
    from .segmenter import prepared_views, view_features
    model = micronet.load_model(_need_file(args.model, "model file"))
    clip, views = prepared_views(load_wav(_need_file(args.input, "audio file")))
    view = views[{"vocal": 0, "guitar": 1, "palmas": 2}[model.task]]
    images = view_features(view, model.task, "cnn")
    if len(images) == 0:
        raise CliError("recording is shorter than one feature image", EXIT_INVALID)
    times = decision_times(len(view) // dsp.FRAME_LEN)
    t = opt["time"] if opt["time"] is not None else clip.duration / 2
    k = int(np.argmin(np.abs(times - t)))
    probs, dump = micronet.forward(model, images[k], activations=True)
    micronet.write_activation_csv(dump, out / "activations.csv")
    decisions = micronet.predict_sequence(model, images)
    rows = []
    for cls in (0, 1):
        sel = images[decisions == cls]
        m1, m2 = micronet.mean_filter_activations(model, sel)
        rows += [(cls, "conv1", f, v) for f, v in enumerate(m1)] + [(cls, "conv2", f, v) for f, v in enumerate(m2)]
    with open(out / "filter_means.csv", "w") as fh:
        fh.write("predicted_class,layer,filter,mean_activation\n")
        for r in rows:
            fh.write(f"{r[0]},{r[1]},{r[2]},{r[3]:.8g}\n")
    (out / "image.json").write_text(json.dumps({"index": k, "center_time": round(float(times[k]), 6),
                                                "probabilities": [round(float(p), 8) for p in probs]}) + "\n")
    return {"model": args.model, "input": args.input}


def cmd_stats(args, opt, out):
    from .annotation_io import read_profile
    from .corpus import global_stats, write_rows
    anns = _load_annotations(args.annotations)
    profs = {rid: read_profile(doc) for rid, (_, doc) in anns.items()}
    profs_all = {rid: read_profile(doc, "all") for rid, (_, doc) in anns.items()}
    stats = {"nonsilent": global_stats(profs.values()),
             "all_frames": global_stats(profs_all.values(), weights=[p.n_decisions for p in profs_all.values()])}
    (out / "global_stats.json").write_text(json.dumps(stats, indent=1, sort_keys=True) + "\n")
    write_rows(out / "profiles.csv", ["id", "pct_vocal", "pct_picked", "pct_strummed", "pct_palmas", "n_counted"],
               ([rid, *p.vector(), p.n_counted] for rid, p in profs.items()))
    return {"annotations": args.annotations}


def cmd_discover(args, opt, out):
    from .annotation_io import read_profile
    from .corpus import precision_curve, threshold_retrieval, write_curve_csv
    anns = _load_annotations(args.annotations)
    index = None
    if args.metadata:
        from .corpus import ingest_metadata
        index = ingest_metadata(_need_file(args.metadata, "metadata file"))
    profs = {rid: read_profile(doc) for rid, (_, doc) in anns.items()}
    labels = None
    if index is not None:
        known = {r.id: r.instrumentation for r in index}
        if all(known.get(rid) for rid in profs):
            labels = {rid: known[rid] == opt["mode"] for rid in profs}
    if opt["thresholds"]:
        thresholds = [float(t) for t in opt["thresholds"].split(",")]
    else:
        thresholds = list(np.round(np.arange(1.0, 0.49, -0.05), 2)) if opt["mode"] == "acappella" \
            else list(np.round(np.arange(0.0, 0.51, 0.05), 2))
    write_curve_csv(out / f"{opt['mode']}_precision.csv", precision_curve(profs, labels, opt["mode"], thresholds))
    if opt["threshold"] is not None:
        r = threshold_retrieval(profs, labels, opt["mode"], opt["threshold"])
        (out / f"{opt['mode']}_retrieved.json").write_text(json.dumps(
            {"mode": r.mode, "threshold": r.threshold, "retrieved": r.retrieved, "n_true": r.n_true,
             "precision": r.precision}, indent=1) + "\n")
    return {"annotations": args.annotations, "metadata": args.metadata or ""}


def _sequences(anns, ids):
    from .segmenter import sequence_1hz
    seqs = []
    for rid in ids:
        ann = anns[rid][0]
        if ann.track is None:
            raise CliError(f"annotation {rid} carries no decision track", EXIT_INVALID)
        seqs.append(sequence_1hz(ann.track))
    return seqs


def cmd_similarity(args, opt, out):
    from .annotation_io import read_profile
    from .corpus import distance_matrix, force_layout, ingest_metadata, write_distance_csv, write_layout_json, \
        write_scatter_csv
    anns = _load_annotations(args.annotations)
    index = ingest_metadata(_need_file(args.metadata, "metadata file"))
    ids, styles = _labeled(anns, index)
    profs = [read_profile(anns[i][1]) for i in ids]
    write_scatter_csv(out / "scatter.csv", ids, styles, profs)
    seqs = [s if len(s) else np.zeros((1, 3), dtype=int) for s in _sequences(anns, ids)]
    for metric, items in (("profile-euclidean", profs), ("dtw-itakura", seqs)):
        dm = distance_matrix(items, metric, ids, workers=opt["workers"])
        write_distance_csv(out / f"distances_{metric}.csv", dm)
        coords = force_layout(dm, seed=opt["seed"], iterations=opt["iterations"])
        write_layout_json(out / f"layout_{metric}.json", ids, coords, styles)
    return {"annotations": args.annotations, "metadata": args.metadata}


def cmd_retrieve(args, opt, out):
    from .annotation_io import read_profile
    from .corpus import distance_matrix, ingest_metadata, mrr_retrieval, write_mrr_csv
    anns = _load_annotations(args.annotations)
    index = ingest_metadata(_need_file(args.metadata, "metadata file"))
    ids, styles = _labeled(anns, index)
    if opt["metric"] == "dtw-itakura":
        items = [s if len(s) else np.zeros((1, 3), dtype=int) for s in _sequences(anns, ids)]
    elif opt["metric"] == "profile-euclidean":
        items = [read_profile(anns[i][1]) for i in ids]
    else:
        raise CliError(f"unknown metric {opt['metric']!r}", EXIT_USAGE)
    dm = distance_matrix(items, opt["metric"], ids, workers=opt["workers"])
    k = None if opt["full_ranking"] else opt["k"]
    try:
        res = mrr_retrieval(dm, styles, k=k)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_INVALID) from exc
    write_mrr_csv(out / f"mrr_{opt['metric']}.csv", res)
    return {"annotations": args.annotations, "metadata": args.metadata}


def cmd_tonality(args, opt, out):
    from .audio_io import load_wav
    from .corpus import ingest_metadata, write_rows
    from .tonality import derive_template, kde_export, load_template, save_template, segment_profiles, \
        template_correlation, write_kde_csv
    anns = _load_annotations(args.annotations)
    index = ingest_metadata(_need_file(args.metadata, "metadata file"))
    major = load_template(_need_file(opt["major_template"], "template file") if opt["major_template"] else None)
    profiles = {}
    for rid, (ann, _) in anns.items():
        try:
            rec = index.by_id(rid)
        except KeyError:
            continue
        profs, _ = segment_profiles(load_wav(_need_file(index.audio_path(rec), "audio file")), ann)
        profiles[rid] = (rec, profs)
    source = {f"{rid}:{cls}": p for rid, (rec, profs) in profiles.items() if opt["template_style"] in rec.styles
              for cls, p in profs.items()}
    if not source:
        raise CliError(f"no recordings of style {opt['template_style']!r} to derive the flamenco template",
                       EXIT_INVALID)
    flamenco = derive_template(source, "flamenco", f"derived from {opt['template_style']} recordings")
    save_template(out / "flamenco_template.csv", flamenco)
    rows, points = [], {}
    for rid, (rec, profs) in sorted(profiles.items()):
        for cls, p in profs.items():
            if np.ptp(p.values) == 0:
                continue
            rm, rf = template_correlation(p, major), template_correlation(p, flamenco)
            rows.append([rid, rec.style or "", cls, rm, rf])
            points.setdefault(cls, []).append((rm, rf))
    write_rows(out / "correlations.csv", ["id", "style", "class", "r_major", "r_flamenco"], rows)
    for cls, pts in sorted(points.items()):
        centers, dens = kde_export(pts)
        write_kde_csv(out / f"kde_{cls}.csv", centers, dens)
    return {"annotations": args.annotations, "metadata": args.metadata}


def cmd_evaluate(args, opt, out):
    from .evaluation import CVConfig, EvaluationError, TASK_GROUPING, cross_validate, write_report_csv, \
        write_report_json
    from .micronet import TrainConfig
    index = _load_corpus(args.corpus)
    families = ["gmm", "cnn"] if opt["family"] == "both" else [opt["family"]]
    reports = []
    for task in _tasks(opt["task"]):
        sub = _task_subset(index, task)
        for fam in families:
            items = _task_items(sub, task, fam, TASK_GROUPING[task])
            cfg = CVConfig(k=opt["folds"], seed=opt["seed"], train=TrainConfig(epochs=opt["epochs"]),
                           workers=opt["workers"])
            try:
                reports.append(cross_validate(items, task, fam, cfg, TASK_GROUPING[task]))
            except (EvaluationError, ValueError) as exc:
                raise CliError(f"evaluation of {task}/{fam} failed: {exc}", EXIT_FAILURE) from exc
            log.info("%s %s F=%.3f", task, fam, reports[-1].pooled.f_measure)
    write_report_csv(out / "report.csv", reports)
    write_report_json(out / "report.json", reports)
    return {"corpus": args.corpus}


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "annotate": cmd_annotate, "inspect": cmd_inspect, "stats": cmd_stats,
    "discover": cmd_discover, "similarity": cmd_similarity, "retrieve": cmd_retrieve, "tonality": cmd_tonality,
    "evaluate": cmd_evaluate,
}


# -- parser --------------------------------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--workers", type=int, help="parallel workers (default: CPU count)")
    common.add_argument("--log-level", dest="log_level", help="logging level (default WARNING)")
    common.add_argument("--out", required=True, help="output directory for this run")

    ap = argparse.ArgumentParser(prog="flamseg", description="Instrumentation-based structural annotation.")
    ap.add_argument("--version", action="version", version=f"flamseg {__version__}")
    sub = ap.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("synth", parents=[common], help="generate a labeled synthetic corpus")
    p.add_argument("--kind", choices=["acceptance", "styles"])
    p.add_argument("--n-per-task", dest="n_per_task", type=int)
    p.add_argument("--n-per-style", dest="n_per_style", type=int)
    p.add_argument("--dur-min", dest="dur_min", type=float)
    p.add_argument("--dur-max", dest="dur_max", type=float)

    p = sub.add_parser("train", parents=[common], help="train classifiers on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["all", *TASKS])
    p.add_argument("--family", choices=["cnn", "gmm"])
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)

    p = sub.add_parser("annotate", parents=[common], help="annotate a WAV file or a corpus directory")
    p.add_argument("--models", required=True, help="directory holding <task>.<family>.model files")
    p.add_argument("--input", required=True)
    p.add_argument("--family", choices=["cnn", "gmm"])

    p = sub.add_parser("inspect", parents=[common], help="dump conv activations of a CNN model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--time", type=float, help="time (s) of the image to dump (default: middle)")

    p = sub.add_parser("stats", parents=[common], help="global instrumentation statistics")
    p.add_argument("--annotations", required=True)

    p = sub.add_parser("discover", parents=[common], help="a cappella / instrumental discovery")
    p.add_argument("--annotations", required=True)
    p.add_argument("--metadata")
    p.add_argument("--mode", choices=["acappella", "instrumental"])
    p.add_argument("--threshold", type=float)
    p.add_argument("--thresholds", help="comma-separated list for the precision curve")

    p = sub.add_parser("similarity", parents=[common], help="scatter data, distance matrices and layouts")
    p.add_argument("--annotations", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--iterations", type=int)

    p = sub.add_parser("retrieve", parents=[common], help="style retrieval scored by mean reciprocal rank")
    p.add_argument("--annotations", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--metric", choices=["dtw-itakura", "profile-euclidean"])
    p.add_argument("--k", type=int)
    p.add_argument("--full-ranking", dest="full_ranking", action="store_true", default=None)

    p = sub.add_parser("tonality", parents=[common], help="template correlations and density grids")
    p.add_argument("--annotations", required=True)
    p.add_argument("--metadata", required=True)
    p.add_argument("--template-style", dest="template_style")
    p.add_argument("--major-template", dest="major_template")

    p = sub.add_parser("evaluate", parents=[common], help="grouped cross-validation of CNN and GMM classifiers")
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", choices=["all", *TASKS])
    p.add_argument("--family", choices=["cnn", "gmm", "both"])
    p.add_argument("--folds", type=int)
    p.add_argument("--epochs", type=int)
    return ap


def main(argv=None) -> int:
    from .annotation_io import AnnotationSchemaError
    from .audio_io import AudioFormatError
    from .corpus import MetadataError
    from .modelfile import ModelFileError

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        opt = resolve_options(args)
        logging.basicConfig(level=getattr(logging, str(opt["log_level"]).upper(), logging.WARNING),
                            format="%(levelname)s %(name)s: %(message)s")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        inputs = COMMANDS[args.command](args, opt, out) or {}
        write_manifest(out, args.command, opt, inputs)
    except CliError as exc:
        print(f"flamseg: error: {exc}", file=sys.stderr)
        return exc.code
    except FileNotFoundError as exc:
        print(f"flamseg: error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (AudioFormatError, ModelFileError, MetadataError, AnnotationSchemaError, json.JSONDecodeError) as exc:
        print(f"flamseg: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
