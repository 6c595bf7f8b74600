"""Pipeline orchestration: subcommands over a single JSON config with seeded
determinism, per-stage manifests, and canned ablation experiments.

Stages write their artifacts plus a manifest under the output directory;
re-running a completed stage with unchanged config and inputs is a no-op, and
re-running the whole pipeline with the same seed reproduces byte-identical
artifact trees. Exit codes: 0 success, 2 config error, 3 missing artifact,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import corpus, evalkit, labeling, langparse, pipeline, scenegen, storage, targets
from .groundnet import (GroundingModel, NumericError, TrainConfig, TrainExample,
                        Vocabulary, load_checkpoint, save_checkpoint, save_history, train)
from .seeding import derive_seed

OUTPUT_ENV_VAR = "GROUNDDESK_OUT"


class ConfigError(ValueError):
    pass


class MissingArtifactError(FileNotFoundError):
    pass


DEFAULT_CONFIG = {
    "pool": "desk20",
    "descriptions": {"num_descriptions": 20, "target_length_words": 10},
    "images_per_description": 8,
    "distractors": {"confuser_prob": 0.5, "min_fillers": 1, "max_fillers": 2,
                    "negation_confuser_prob": 0.8,
                    "extra_attribute_weights": [0.45, 0.35, 0.2]},
    "features": {"dim": 64, "background_boxes": 2, "noise_sigma": 0.05},
    "detector": {"gamma": 0.93, "length_floor": 4, "noise_scale": 0.05, "seed": 0},
    "labeler": {"threshold_p": 0.5, "max_dets_per_phrase": 3, "strategy": "weak_to_strong"},
    "targets": {"k_neg": 2, "include_struct_pos": True, "sentence_level_positive": True,
                "structural_negative": True, "sentence_positive_covers_nonsubject": True,
                "absent_categories": 2},
    "train": {"epochs": 30, "learning_rate": 0.1, "momentum": 0.9, "batch_size": 8,
              "d_model": 32, "detection_mix_ratio": 0.25,
              "freeze": {"visual": False, "language": False, "fusion": False}},
    "eval": {"benchmark_scenes": 120, "fraction_negative": 0.5,
             "nw_choices": [4, 6, 8, 10, 12, 10, 12], "iou_threshold": 0.5,
             "score_threshold": 0.6, "aggregation": "max"},
    "output_dir": "runs/default",
    "seed": 0,
}

_SCHEMA = {
    "pool": str,
    "descriptions.num_descriptions": int,
    "descriptions.target_length_words": int,
    "images_per_description": int,
    "distractors.confuser_prob": float,
    "distractors.min_fillers": int,
    "distractors.max_fillers": int,
    "distractors.negation_confuser_prob": float,
    "distractors.extra_attribute_weights": list,
    "features.dim": int,
    "features.background_boxes": int,
    "features.noise_sigma": float,
    "detector.gamma": float,
    "detector.length_floor": int,
    "detector.noise_scale": float,
    "detector.seed": int,
    "labeler.threshold_p": float,
    "labeler.max_dets_per_phrase": int,
    "labeler.strategy": str,
    "targets.k_neg": int,
    "targets.include_struct_pos": bool,
    "targets.sentence_level_positive": bool,
    "targets.structural_negative": bool,
    "targets.sentence_positive_covers_nonsubject": bool,
    "targets.absent_categories": int,
    "train.epochs": int,
    "train.learning_rate": float,
    "train.momentum": float,
    "train.batch_size": int,
    "train.d_model": int,
    "train.detection_mix_ratio": float,
    "train.freeze.visual": bool,
    "train.freeze.language": bool,
    "train.freeze.fusion": bool,
    "eval.benchmark_scenes": int,
    "eval.fraction_negative": float,
    "eval.nw_choices": list,
    "eval.iou_threshold": float,
    "eval.score_threshold": float,
    "eval.aggregation": str,
    "output_dir": str,
    "seed": int,
}


def _get(config, dotted):
    node = config
    for part in dotted.split("."):
        node = node[part]
    return node


def _set(config, dotted, value):
    parts = dotted.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value


def validate_config(config) -> None:
    """Type-check every known field and reject unknown ones (dotted paths)."""
    def walk(node, prefix):
        for key, value in node.items():
            path = f"{prefix}{key}"
            if isinstance(value, dict):
                walk(value, path + ".")
            else:
                if path not in _SCHEMA:
                    raise ConfigError(f"unknown config field: {path}")
                expected = _SCHEMA[path]
                if expected is float and isinstance(value, int) and not isinstance(value, bool):
                    continue
                if not isinstance(value, expected) or (expected is int and isinstance(value, bool)):
                    raise ConfigError(f"config field {path}: expected {expected.__name__}, "
                                      f"got {type(value).__name__}")
    walk(config, "")
    for path in _SCHEMA:
        try:
            _get(config, path)
        except KeyError:
            raise ConfigError(f"missing config field: {path}") from None
    if not 0.0 <= config["labeler"]["threshold_p"] <= 1.0:
        raise ConfigError("config field labeler.threshold_p: must lie in [0, 1]")
    if config["images_per_description"] < 1:
        raise ConfigError("config field images_per_description: must be >= 1")
    if config["descriptions"]["target_length_words"] < 3:
        raise ConfigError("config field descriptions.target_length_words: must be >= 3")


def load_config(path=None, overrides=(), output_dir=None) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        def merge(base, new, prefix=""):
            for key, value in new.items():
                if isinstance(value, dict) and isinstance(base.get(key), dict):
                    merge(base[key], value, f"{prefix}{key}.")
                else:
                    base[key] = value
        merge(config, user)
    for dotted, raw in overrides:
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        _set(config, dotted, value)
    env_dir = os.environ.get(OUTPUT_ENV_VAR)
    if env_dir:
        config["output_dir"] = env_dir
    if output_dir:
        config["output_dir"] = output_dir
    validate_config(config)
    return config


# stage plumbing ---------------------------------------------------------

def _out(config) -> str:
    out = config["output_dir"]
    os.makedirs(out, exist_ok=True)
    return out


def _require(out_dir, filename, producer):
    path = os.path.join(out_dir, filename)
    if not os.path.exists(path):
        raise MissingArtifactError(
            f"missing artifact {filename}; run 'grounddesk {producer}' first")
    return path


def _pool_and_lexicon(config):
    pool = corpus.build_entity_pool(config["pool"])
    return pool, langparse.Lexicon.from_categories(pool)


def _distractor_config(config) -> scenegen.DistractorConfig:
    d = config["distractors"]
    return scenegen.DistractorConfig(
        confuser_prob=d["confuser_prob"], min_fillers=d["min_fillers"],
        max_fillers=d["max_fillers"], negation_confuser_prob=d["negation_confuser_prob"],
        extra_attribute_weights=tuple(d["extra_attribute_weights"]))


def _detector(config) -> labeling.BowDetector:
    d = config["detector"]
    return labeling.BowDetector(labeling.BowConfig(
        gamma=d["gamma"], length_floor=d["length_floor"],
        noise_scale=d["noise_scale"], seed=d["seed"]))


def _labeler_config(config) -> labeling.LabelerConfig:
    l = config["labeler"]
    return labeling.LabelerConfig(threshold_p=l["threshold_p"],
                                  max_dets_per_phrase=l["max_dets_per_phrase"])


def _train_config(config) -> TrainConfig:
    t = config["train"]
    return TrainConfig(epochs=t["epochs"], learning_rate=t["learning_rate"],
                       momentum=t["momentum"], batch_size=t["batch_size"],
                       freeze_visual=t["freeze"]["visual"],
                       freeze_language=t["freeze"]["language"],
                       freeze_fusion=t["freeze"]["fusion"],
                       detection_mix_ratio=t["detection_mix_ratio"],
                       seed=config["seed"])


def _target_config(config) -> targets.TargetConfig:
    t = config["targets"]
    return targets.TargetConfig(
        sentence_level_positive=t["sentence_level_positive"],
        structural_negative=t["structural_negative"],
        sentence_positive_covers_nonsubject=t["sentence_positive_covers_nonsubject"])


def _benchmark_config(config) -> scenegen.BenchmarkConfig:
    e, f = config["eval"], config["features"]
    return scenegen.BenchmarkConfig(
        fraction_negative=e["fraction_negative"], nw_choices=tuple(e["nw_choices"]),
        feature_dim=f["dim"], background_boxes=f["background_boxes"],
        noise_sigma=f["noise_sigma"], distractors=_distractor_config(config))


def fanout(fn, items, workers: int = 1, initializer=None, initargs=()):
    """Order-preserving map; output does not depend on the worker count."""
    if workers <= 1:
        if initializer:
            initializer(*initargs)
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers, initializer=initializer,
                             initargs=initargs) as pool:
        return list(pool.map(fn, items, chunksize=8))


_WORKER_CTX: dict = {}


def _init_gen_worker(config):
    _WORKER_CTX["config"] = config
    _WORKER_CTX["pool"] = corpus.build_entity_pool(config["pool"])


def _gen_one_category(cat_id: int):
    config = _WORKER_CTX["config"]
    cat = _WORKER_CTX["pool"][cat_id]
    spec = corpus.DescriptionSpec(
        config["descriptions"]["num_descriptions"],
        config["descriptions"]["target_length_words"],
        seed=derive_seed(config["seed"], "gen", cat.id))
    return corpus.generate_descriptions(cat, spec)


def _init_scene_worker(config):
    _WORKER_CTX["config"] = config
    pool = corpus.build_entity_pool(config["pool"])
    _WORKER_CTX["pool"] = {c.id: c for c in pool}
    _WORKER_CTX["lexicon"] = langparse.Lexicon.from_categories(pool)
    _WORKER_CTX["distractors"] = _distractor_config(config)


def _scenes_for_description(args):
    desc_id, category_id, text, scene_id_base = args
    config = _WORKER_CTX["config"]
    tree = langparse.parse(text, _WORKER_CTX["lexicon"])
    cat = _WORKER_CTX["pool"][category_id]
    fc = config["features"]
    out = []
    for k in range(config["images_per_description"]):
        scene_id = scene_id_base + k
        scene = scenegen.synthesize_scene(
            tree, cat, image_seed=derive_seed(config["seed"], "img", desc_id, k),
            distractor_config=_WORKER_CTX["distractors"],
            scene_id=scene_id, description_id=desc_id)
        rf = scenegen.render_features(
            scene, noise_seed=derive_seed(config["seed"], "feat", scene_id),
            d=fc["dim"], b=fc["background_boxes"], sigma=fc["noise_sigma"])
        out.append((scene, rf))
    return out


def _init_label_worker(config, descriptions_path):
    _WORKER_CTX["config"] = config
    pool = corpus.build_entity_pool(config["pool"])
    _WORKER_CTX["lexicon"] = langparse.Lexicon.from_categories(pool)
    _WORKER_CTX["detector"] = _detector(config)
    _WORKER_CTX["descriptions"] = {d.id: d for d in corpus.read_descriptions(descriptions_path)}


def _label_one_scene(scene_row):
    config = _WORKER_CTX["config"]
    scene = scenegen.scene_from_json(scene_row)
    desc = _WORKER_CTX["descriptions"][scene.description_id]
    labeler = (labeling.weak_to_strong_label if config["labeler"]["strategy"] == "weak_to_strong"
               else labeling.grounding_label)
    triplet = labeler(scene, desc.text, _WORKER_CTX["detector"], _labeler_config(config),
                      lexicon=_WORKER_CTX["lexicon"])
    return labeling.triplet_to_json(triplet)


# stages -----------------------------------------------------------------

def cmd_gen(config, workers: int = 1) -> int:
    out = _out(config)
    slice_ = {k: config[k] for k in ("pool", "descriptions", "seed")}
    if storage.stage_is_current(out, "gen", slice_, {}):
        print("gen: up to date, skipping")
        return 0
    pool, _ = _pool_and_lexicon(config)
    nd = config["descriptions"]["num_descriptions"]
    per_cat = fanout(_gen_one_category, range(len(pool)), workers,
                     initializer=_init_gen_worker, initargs=(config,))
    descriptions = []
    for descs in per_cat:
        for d in descs:
            descriptions.append(corpus.ObjectDescription(
                id=len(descriptions), category_id=d.category_id, text=d.text,
                seed=d.seed, provenance=d.provenance, generator_metadata=d.generator_metadata))
    path = os.path.join(out, "descriptions.jsonl")
    corpus.write_descriptions(path, descriptions)
    if nd == 0:
        print("warning: num_descriptions is 0, wrote an empty corpus")
    storage.write_manifest(out, "gen", slice_, {},
                           {"descriptions.jsonl": storage.sha256_file(path)})
    print(f"gen: wrote {len(descriptions)} descriptions for {len(pool)} categories")
    return 0


def cmd_scenes(config, workers: int = 1) -> int:
    out = _out(config)
    desc_path = _require(out, "descriptions.jsonl", "gen")
    slice_ = {k: config[k] for k in
              ("pool", "images_per_description", "distractors", "features", "seed")}
    inputs = {"descriptions.jsonl": storage.sha256_file(desc_path)}
    if storage.stage_is_current(out, "scenes", slice_, inputs):
        print("scenes: up to date, skipping")
        return 0
    descriptions = corpus.read_descriptions(desc_path)
    images = config["images_per_description"]
    items = [(d.id, d.category_id, d.text, i * images) for i, d in enumerate(descriptions)]
    results = fanout(_scenes_for_description, items, workers,
                     initializer=_init_scene_worker, initargs=(config,))
    feat_dir = os.path.join(out, "features")
    os.makedirs(feat_dir, exist_ok=True)
    scenes = []
    index_rows = []
    for group in results:
        for scene, rf in group:
            scenes.append(scene)
            fname = f"features/scene_{scene.scene_id:06d}.bin"
            scenegen.write_features(os.path.join(out, fname), rf)
            index_rows.append({"scene_id": scene.scene_id, "file": fname,
                               "noise_seed": rf.noise_seed,
                               "proposals": [list(p) for p in rf.proposals]})
    scenes_path = os.path.join(out, "scenes.jsonl")
    scenegen.write_scenes(scenes_path, scenes)
    index_path = os.path.join(out, "features", "index.jsonl")
    with open(index_path, "w", encoding="utf-8") as fh:
        for row in index_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    outputs = {"scenes.jsonl": storage.sha256_file(scenes_path),
               "features/index.jsonl": storage.sha256_file(index_path)}
    for row in index_rows:
        outputs[row["file"]] = storage.sha256_file(os.path.join(out, row["file"]))
    storage.write_manifest(out, "scenes", slice_, inputs, outputs)
    print(f"scenes: wrote {len(scenes)} scenes "
          f"({len(descriptions)} descriptions x {images} seeds)")
    return 0


def _load_features(out_dir) -> dict:
    index_path = _require(out_dir, os.path.join("features", "index.jsonl"), "scenes")
    table = {}
    with open(index_path, encoding="utf-8") as fh:
        for line in fh:
            row = json.loads(line)
            rf = scenegen.read_features(os.path.join(out_dir, row["file"]),
                                        proposals=[tuple(p) for p in row["proposals"]],
                                        noise_seed=row["noise_seed"])
            table[row["scene_id"]] = rf
    return table


def cmd_label(config, workers: int = 1) -> int:
    out = _out(config)
    desc_path = _require(out, "descriptions.jsonl", "gen")
    scenes_path = _require(out, "scenes.jsonl", "scenes")
    slice_ = {k: config[k] for k in ("detector", "labeler", "seed")}
    inputs = {"descriptions.jsonl": storage.sha256_file(desc_path),
              "scenes.jsonl": storage.sha256_file(scenes_path)}
    if storage.stage_is_current(out, "label", slice_, inputs):
        print("label: up to date, skipping")
        return 0
    with open(scenes_path, encoding="utf-8") as fh:
        scene_rows = [json.loads(line) for line in fh]
    rows = fanout(_label_one_scene, scene_rows, workers,
                  initializer=_init_label_worker, initargs=(config, desc_path))
    path = os.path.join(out, "triplets.jsonl")
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    storage.write_manifest(out, "label", slice_, inputs,
                           {"triplets.jsonl": storage.sha256_file(path)})
    n_assigned = sum(1 for r in rows if r["assignments"])
    print(f"label: wrote {len(rows)} pseudo-triplets ({n_assigned} with assignments)")
    return 0


def cmd_targets(config, workers: int = 1) -> int:
    out = _out(config)
    desc_path = _require(out, "descriptions.jsonl", "gen")
    scenes_path = _require(out, "scenes.jsonl", "scenes")
    triplets_path = _require(out, "triplets.jsonl", "label")
    slice_ = {k: config[k] for k in ("targets", "seed")}
    inputs = {name: storage.sha256_file(p) for name, p in
              (("descriptions.jsonl", desc_path), ("scenes.jsonl", scenes_path),
               ("triplets.jsonl", triplets_path))}
    if storage.stage_is_current(out, "targets", slice_, inputs):
        print("targets: up to date, skipping")
        return 0
    pool, lexicon = _pool_and_lexicon(config)
    descriptions = corpus.read_descriptions(desc_path)
    scenes = scenegen.read_scenes(scenes_path)
    features = _load_features(out)
    with open(triplets_path, encoding="utf-8") as fh:
        triplets = [labeling.triplet_from_json(json.loads(line)) for line in fh]
    tc = config["targets"]
    target_config = _target_config(config)
    examples_path = os.path.join(out, "examples.jsonl")
    with open(examples_path, "w", encoding="utf-8") as fh:
        for triplet in triplets:
            if not triplet.assignments:
                continue
            query = targets.assemble_query(
                triplet, descriptions, tc["k_neg"], tc["include_struct_pos"],
                seed=derive_seed(config["seed"], "query"), lexicon=lexicon)
            n = features[triplet.scene_id].features.shape[0]
            target = targets.build_alignment_target(query, triplet, n,
                                                    config=target_config, lexicon=lexicon)
            fh.write(json.dumps(targets.example_to_json(triplet.scene_id, query, target),
                                sort_keys=True) + "\n")
    det_path = os.path.join(out, "detection_examples.jsonl")
    names = [c.name for c in pool]
    with open(det_path, "w", encoding="utf-8") as fh:
        for scene in scenes:
            rng = np.random.default_rng(derive_seed(config["seed"], "det-example", scene.scene_id))
            present = sorted({o.category for o in scene.objects})
            absent = [n for n in names if n not in present]
            k = min(tc["absent_categories"], len(absent))
            extra = [absent[int(i)] for i in rng.choice(len(absent), size=k, replace=False)]
            listed = present + extra
            order = rng.permutation(len(listed))
            query = targets.make_detection_query([listed[int(i)] for i in order])
            n = features[scene.scene_id].features.shape[0]
            target = targets.build_detection_target(query, scene, n)
            fh.write(json.dumps(targets.example_to_json(scene.scene_id, query, target),
                                sort_keys=True) + "\n")
    outputs = {"examples.jsonl": storage.sha256_file(examples_path),
               "detection_examples.jsonl": storage.sha256_file(det_path)}
    storage.write_manifest(out, "targets", slice_, inputs, outputs)
    print(f"targets: wrote alignment targets to examples.jsonl and detection_examples.jsonl")
    return 0


def _read_examples(path, features) -> list[TrainExample]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            scene_id, query, target = targets.example_from_json(json.loads(line))
            out.append(TrainExample(features=features[scene_id].features, query=query,
                                    target=target, scene_id=scene_id))
    return out


def cmd_train(config, workers: int = 1) -> int:
    out = _out(config)
    examples_path = _require(out, "examples.jsonl", "targets")
    det_path = _require(out, "detection_examples.jsonl", "targets")
    slice_ = {k: config[k] for k in ("train", "pool", "features", "seed")}
    inputs = {"examples.jsonl": storage.sha256_file(examples_path),
              "detection_examples.jsonl": storage.sha256_file(det_path)}
    if storage.stage_is_current(out, "train", slice_, inputs):
        print("train: up to date, skipping")
        return 0
    pool, _ = _pool_and_lexicon(config)
    features = _load_features(out)
    triplet_examples = _read_examples(examples_path, features)
    detection_examples = _read_examples(det_path, features)
    vocab = pipeline.build_vocabulary(pool)
    model = GroundingModel(vocab, d_in=config["features"]["dim"],
                           d_model=config["train"]["d_model"], seed=config["seed"])
    model, history = train(model, triplet_examples, detection_examples, _train_config(config))
    ckpt_path = os.path.join(out, "model.ckpt")
    save_checkpoint(model, ckpt_path)
    vocab_path = os.path.join(out, "model.vocab.json")
    storage.write_json(vocab_path, {"tokens": list(vocab.tokens)})
    hist_path = os.path.join(out, "history.csv")
    save_history(hist_path, history)
    outputs = {name: storage.sha256_file(os.path.join(out, name))
               for name in ("model.ckpt", "model.vocab.json", "history.csv")}
    storage.write_manifest(out, "train", slice_, inputs, outputs)
    print(f"train: {len(triplet_examples)} triplet examples, "
          f"loss {history[0][1]:.4f} -> {history[-1][1]:.4f}")
    return 0


def _load_model(out_dir):
    ckpt_path = _require(out_dir, "model.ckpt", "train")
    vocab_path = _require(out_dir, "model.vocab.json", "train")
    vocab = Vocabulary(tokens=tuple(storage.read_json(vocab_path)["tokens"]))
    return load_checkpoint(ckpt_path, vocab)


def _run_eval(config, model, lexicon):
    e = config["eval"]
    pool = corpus.build_entity_pool(config["pool"])
    bench = scenegen.make_benchmark(
        pool, corpus.DescriptionSpec(1, config["descriptions"]["target_length_words"],
                                     seed=config["seed"]),
        e["benchmark_scenes"], derive_seed(config["seed"], "benchmark"),
        config=_benchmark_config(config), lexicon=lexicon)
    rows = pipeline.run_model_on_benchmark(model, bench, e["score_threshold"],
                                           lexicon, agg=e["aggregation"])
    report = evalkit.omnilabel_report(rows, bench, iou_threshold=e["iou_threshold"],
                                      lexicon=lexicon)
    d3 = evalkit.d3_report(rows, bench, iou_threshold=e["iou_threshold"], lexicon=lexicon)
    return bench, rows, report, d3


def cmd_eval(config, workers: int = 1) -> int:
    out = _out(config)
    slice_ = {k: config[k] for k in
              ("eval", "pool", "descriptions", "features", "distractors", "seed")}
    inputs = {"model.ckpt": storage.sha256_file(_require(out, "model.ckpt", "train"))}
    if storage.stage_is_current(out, "eval", slice_, inputs):
        print("eval: up to date, skipping")
        return 0
    _, lexicon = _pool_and_lexicon(config)
    model = _load_model(out)
    bench, rows, report, d3 = _run_eval(config, model, lexicon)
    results_path = os.path.join(out, "results.jsonl")
    evalkit.write_results(results_path, rows)
    bench_path = os.path.join(out, "benchmark_scenes.jsonl")
    scenegen.write_scenes(bench_path, bench.scenes)
    report_path = os.path.join(out, "report.json")
    payload = report.to_json()
    payload["d3"] = {"full": None if d3[0] != d3[0] else d3[0],
                     "pres": None if d3[1] != d3[1] else d3[1],
                     "abs": None if d3[2] != d3[2] else d3[2]}
    storage.write_json(report_path, payload)
    outputs = {name: storage.sha256_file(os.path.join(out, name))
               for name in ("results.jsonl", "benchmark_scenes.jsonl", "report.json")}
    storage.write_manifest(out, "eval", slice_, inputs, outputs)
    print(f"eval: AP={report.AP:.2f} AP_categ={report.AP_categ:.2f} "
          f"AP_descr={report.AP_descr:.2f}")
    return 0


def cmd_report(config, workers: int = 1) -> int:
    out = _out(config)
    report_path = _require(out, "report.json", "eval")
    hashed = {k: v for k, v in config.items() if k != "output_dir"}
    summary = {"config_hash": storage.config_hash(hashed), "seed": config["seed"],
               "metrics": storage.read_json(report_path)}
    triplets_path = os.path.join(out, "triplets.jsonl")
    if os.path.exists(triplets_path):
        scenes = scenegen.read_scenes(os.path.join(out, "scenes.jsonl"))
        by_id = {s.scene_id: s for s in scenes}
        pool, lexicon = _pool_and_lexicon(config)
        recalls = []
        with open(triplets_path, encoding="utf-8") as fh:
            for line in fh:
                t = labeling.triplet_from_json(json.loads(line))
                recalls.append(labeling.label_recall(t, by_id[t.scene_id], lexicon=lexicon))
        summary["label_recall_mean"] = float(np.mean(recalls)) if recalls else 0.0
    hist_path = os.path.join(out, "history.csv")
    if os.path.exists(hist_path):
        from .groundnet import load_history
        history = load_history(hist_path)
        summary["training"] = {"epochs": len(history),
                               "initial_loss": history[0][1], "final_loss": history[-1][1]}
    storage.write_json(os.path.join(out, "summary.json"), summary)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return 0


PIPELINE_STAGES = ("gen", "scenes", "label", "targets", "train", "eval", "report")


def cmd_all(config, workers: int = 1) -> int:
    for stage in PIPELINE_STAGES:
        code = STAGE_COMMANDS[stage](config, workers)
        if code != 0:
            return code
    return 0


# ablations ---------------------------------------------------------------

def _ablate_dir(config, name):
    path = os.path.join(_out(config), "ablate", name)
    os.makedirs(path, exist_ok=True)
    return path


def _bundle_from_config(config, images=None):
    fc = config["features"]
    return pipeline.build_corpus(
        config["pool"],
        num_descriptions=config["descriptions"]["num_descriptions"],
        target_length_words=config["descriptions"]["target_length_words"],
        images_per_description=images or config["images_per_description"],
        seed=config["seed"],
        distractors=_distractor_config(config),
        features=pipeline.FeatureConfig(dim=fc["dim"], background_boxes=fc["background_boxes"],
                                        noise_sigma=fc["noise_sigma"]))


def _train_and_eval(config, bundle, triplets, variant, train_config):
    model, history = pipeline.train_variant(bundle, triplets, variant, train_config)
    e = config["eval"]
    bench = scenegen.make_benchmark(
        bundle.pool, corpus.DescriptionSpec(1, config["descriptions"]["target_length_words"],
                                            seed=config["seed"]),
        e["benchmark_scenes"], derive_seed(config["seed"], "benchmark"),
        config=_benchmark_config(config), lexicon=bundle.lexicon)
    report = pipeline.evaluate_model(model, bench, score_threshold=e["score_threshold"],
                                     iou_threshold=e["iou_threshold"],
                                     lexicon=bundle.lexicon, agg=e["aggregation"])
    return model, history, report


def cmd_ablate_threshold(config, workers: int = 1) -> int:
    out_dir = _ablate_dir(config, "threshold")
    bundle = _bundle_from_config(config)
    detector = _detector(config)
    rows = []
    for p in (0.3, 0.5, 0.7):
        lc = labeling.LabelerConfig(threshold_p=p,
                                    max_dets_per_phrase=config["labeler"]["max_dets_per_phrase"])
        triplets = pipeline.label_corpus(bundle, detector, lc)
        recall = pipeline.mean_label_recall(bundle, triplets)
        _, _, report = _train_and_eval(config, bundle, triplets, pipeline.FULL_VARIANT,
                                       _train_config(config))
        rows.append({"threshold_p": p, "recall": recall,
                     "AP": report.AP, "AP_descr": report.AP_descr})
        print(f"ablate threshold p={p}: recall={recall:.3f} AP_descr={report.AP_descr:.2f}")
    storage.write_json(os.path.join(out_dir, "threshold.json"), rows)
    return 0


def cmd_ablate_freeze(config, workers: int = 1) -> int:
    out_dir = _ablate_dir(config, "freeze")
    bundle = _bundle_from_config(config)
    triplets = pipeline.label_corpus(bundle, _detector(config), _labeler_config(config))
    rows = []
    base = _train_config(config)
    for name in ("none", "visual", "language", "fusion"):
        tc = TrainConfig(epochs=base.epochs, learning_rate=base.learning_rate,
                         momentum=base.momentum, batch_size=base.batch_size,
                         freeze_visual=name == "visual", freeze_language=name == "language",
                         freeze_fusion=name == "fusion",
                         detection_mix_ratio=base.detection_mix_ratio, seed=base.seed)
        model, _, report = _train_and_eval(config, bundle, triplets,
                                           pipeline.FULL_VARIANT, tc)
        rows.append({"freeze": name, "AP": report.AP, "AP_categ": report.AP_categ,
                     "AP_descr": report.AP_descr})
        print(f"ablate freeze {name}: AP={report.AP:.2f} AP_descr={report.AP_descr:.2f}")
    storage.write_json(os.path.join(out_dir, "freeze.json"), rows)
    return 0


def cmd_ablate_length(config, workers: int = 1) -> int:
    out_dir = _ablate_dir(config, "length")
    pool, _ = _pool_and_lexicon(config)
    rows = []
    for nw in (6, 8, 10, 12):
        descs = pipeline.build_description_corpus(
            pool, config["descriptions"]["num_descriptions"], nw, config["seed"])
        stats = corpus.text_stats(descs)
        rows.append({"target_length_words": nw, "mean_nouns": stats.mean_nouns,
                     "mean_adjectives": stats.mean_adjectives, "count": stats.count})
        print(f"ablate length NW={nw}: NOUN={stats.mean_nouns:.2f} ADJ={stats.mean_adjectives:.2f}")
    storage.write_json(os.path.join(out_dir, "length.json"), rows)
    return 0


def cmd_ablate_density(config, workers: int = 1) -> int:
    out_dir = _ablate_dir(config, "density")
    rows = []
    for images in (2, 4, 8):
        bundle = _bundle_from_config(config, images=images)
        triplets = pipeline.label_corpus(bundle, _detector(config), _labeler_config(config))
        _, _, report = _train_and_eval(config, bundle, triplets, pipeline.FULL_VARIANT,
                                       _train_config(config))
        rows.append({"images_per_description": images, "AP": report.AP,
                     "AP_descr": report.AP_descr, "AP_descr_L": report.AP_descr_L})
        print(f"ablate density images={images}: AP_descr={report.AP_descr:.2f}")
    storage.write_json(os.path.join(out_dir, "density.json"), rows)
    return 0


def cmd_ablate_signals(config, workers: int = 1) -> int:
    out_dir = _ablate_dir(config, "signals")
    bundle = _bundle_from_config(config)
    triplets = pipeline.label_corpus(bundle, _detector(config), _labeler_config(config))
    tc = _train_config(config)
    rows = []
    for variant in pipeline.SIGNAL_LADDER:
        _, _, report = _train_and_eval(config, bundle, triplets, variant, tc)
        rows.append({"signals": variant.name, "AP": report.AP, "AP_categ": report.AP_categ,
                     "AP_descr": report.AP_descr, "AP_descr_L": report.AP_descr_L})
        print(f"ablate signals {variant.name}: AP_descr={report.AP_descr:.2f} "
              f"AP_descr_L={report.AP_descr_L:.2f}")
    storage.write_json(os.path.join(out_dir, "signals.json"), rows)
    return 0


STAGE_COMMANDS = {
    "gen": cmd_gen, "scenes": cmd_scenes, "label": cmd_label, "targets": cmd_targets,
    "train": cmd_train, "eval": cmd_eval, "report": cmd_report, "all": cmd_all,
}

ABLATIONS = {
    "threshold": cmd_ablate_threshold, "freeze": cmd_ablate_freeze,
    "length": cmd_ablate_length, "density": cmd_ablate_density,
    "signals": cmd_ablate_signals,
}


def run(subcommand: str, config: dict, workers: int = 1) -> int:
    """Execute one pipeline subcommand; returns the process exit code."""
    try:
        if subcommand in STAGE_COMMANDS:
            return STAGE_COMMANDS[subcommand](config, workers)
        if subcommand.startswith("ablate:"):
            return ABLATIONS[subcommand.split(":", 1)[1]](config, workers)
        raise ConfigError(f"unknown subcommand {subcommand!r}")
    except (ConfigError, corpus.PoolError, corpus.CorpusError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="grounddesk",
                                     description="Synthetic grounding workbench pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="JSON config file merged over defaults")
        p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                       help="override a config field by dotted path")
        p.add_argument("--threshold-p", type=float, default=None,
                       help="shorthand for --set labeler.threshold_p=...")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--workers", type=int, default=1,
                       help="worker processes for fan-out stages")

    for name in PIPELINE_STAGES + ("all",):
        add_common(sub.add_parser(name))
    ablate = sub.add_parser("ablate")
    ablate.add_argument("experiment", choices=sorted(ABLATIONS))
    add_common(ablate)
    parse_cmd = sub.add_parser("parse", help="print the parse tree of a description")
    parse_cmd.add_argument("text")

    args = parser.parse_args(argv)
    if args.command == "parse":
        try:
            print(langparse.format_tree(langparse.parse(args.text)))
            return 0
        except langparse.ParseError as exc:
            print(f"parse error: {exc}", file=sys.stderr)
            return 2

    overrides = []
    for item in args.set:
        if "=" not in item:
            print(f"config error: --set expects PATH=VALUE, got {item!r}", file=sys.stderr)
            return 2
        overrides.append(tuple(item.split("=", 1)))
    if args.threshold_p is not None:
        overrides.append(("labeler.threshold_p", str(args.threshold_p)))
    try:
        config = load_config(args.config, overrides, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    subcommand = f"ablate:{args.experiment}" if args.command == "ablate" else args.command
    return run(subcommand, config, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
