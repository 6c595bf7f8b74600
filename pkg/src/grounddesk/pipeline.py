"""End-to-end assembly of the workbench stages: description corpora, scene
rendering, pseudo-labeling, training-example construction for each learning
signal variant, and benchmark evaluation of a trained model.

These functions are the single code path shared by the CLI subcommands, the
ablation presets and the acceptance suite.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import pools
from .corpus import DescriptionSpec, EntityCategory, GrammarConfig, ObjectDescription, generate_descriptions
from .evalkit import BenchmarkInstance, MetricReport, omnilabel_report
from .groundnet import (GroundingModel, TrainConfig, TrainExample, Vocabulary,
                        predict_grouped, train)
from .labeling import BowDetector, LabelerConfig, PseudoTriplet, \
    grounding_label, label_recall, weak_to_strong_label
from .langparse import Lexicon, parse
from .scenegen import BenchmarkConfig, DistractorConfig, RegionFeatures, Scene, \
    make_benchmark, render_features, synthesize_scene
from .seeding import derive_seed
from .targets import TargetConfig, assemble_query, build_alignment_target, \
    build_detection_target, make_detection_query


@dataclass(frozen=True)
class FeatureConfig:
    dim: int = 64
    background_boxes: int = 2
    noise_sigma: float = 0.05


@dataclass
class CorpusBundle:
    pool: list[EntityCategory]
    lexicon: Lexicon
    descriptions: list[ObjectDescription]
    scenes: list[Scene]
    features: dict[int, RegionFeatures]

    def description_by_id(self, description_id: int) -> ObjectDescription:
        return self.descriptions[description_id]


def build_vocabulary(pool) -> Vocabulary:
    """Token vocabulary covering everything the pool's grammar can emit."""
    words = set(pools.DETERMINERS) | set(pools.PARTICIPLES) | set(pools.GENERIC_ATTRIBUTES)
    for rel in pools.RELATION_WORDS:
        words.update(rel.split())
    for noun in pools.EXTRA_NOUNS:
        words.update(noun.split())
    for cat in pool:
        words.update(cat.name.split())
        words.update(cat.attribute_vocab)
        for partner in cat.relation_partners:
            words.update(partner.split())
    return Vocabulary.build(words)


def build_description_corpus(pool, num_descriptions: int, target_length_words: int,
                             seed: int, grammar: GrammarConfig | None = None) -> list[ObjectDescription]:
    """Per-category generation with globally unique description ids."""
    out: list[ObjectDescription] = []
    for cat in pool:
        spec = DescriptionSpec(num_descriptions, target_length_words,
                               seed=derive_seed(seed, "gen", cat.id),
                               grammar_config=grammar or GrammarConfig())
        for desc in generate_descriptions(cat, spec):
            out.append(replace(desc, id=len(out)))
    return out


def build_scene_corpus(pool, descriptions, images_per_description: int, seed: int,
                       distractors: DistractorConfig | None = None,
                       features: FeatureConfig | None = None,
                       lexicon: Lexicon | None = None):
    """Seed-indexed scene variants plus rendered region features per scene."""
    distractors = distractors or DistractorConfig()
    fc = features or FeatureConfig()
    lexicon = lexicon or Lexicon.from_categories(pool)
    by_id = {c.id: c for c in pool}
    scenes: list[Scene] = []
    feats: dict[int, RegionFeatures] = {}
    for desc in descriptions:
        tree = parse(desc.text, lexicon)
        cat = by_id[desc.category_id]
        for k in range(images_per_description):
            scene_id = len(scenes)
            scene = synthesize_scene(tree, cat,
                                     image_seed=derive_seed(seed, "img", desc.id, k),
                                     distractor_config=distractors,
                                     scene_id=scene_id, description_id=desc.id)
            scenes.append(scene)
            feats[scene_id] = render_features(scene, noise_seed=derive_seed(seed, "feat", scene_id),
                                              d=fc.dim, b=fc.background_boxes, sigma=fc.noise_sigma)
    return scenes, feats


def build_corpus(pool_name: str = "desk20", num_descriptions: int = 5,
                 target_length_words: int = 10, images_per_description: int = 2,
                 seed: int = 0, distractors: DistractorConfig | None = None,
                 features: FeatureConfig | None = None) -> CorpusBundle:
    from .corpus import build_entity_pool

    pool = build_entity_pool(pool_name)
    lexicon = Lexicon.from_categories(pool)
    descriptions = build_description_corpus(pool, num_descriptions, target_length_words, seed)
    scenes, feats = build_scene_corpus(pool, descriptions, images_per_description,
                                       seed, distractors, features, lexicon)
    return CorpusBundle(pool=pool, lexicon=lexicon, descriptions=descriptions,
                        scenes=scenes, features=feats)


def default_corpus(seed: int = 0) -> CorpusBundle:
    """The default 200-scene corpus: desk20 x 5 descriptions x 2 scenes."""
    return build_corpus("desk20", num_descriptions=5, target_length_words=10,
                        images_per_description=2, seed=seed)


def label_corpus(bundle: CorpusBundle, detector=None, config: LabelerConfig | None = None,
                 strategy: str = "weak_to_strong") -> list[PseudoTriplet]:
    detector = detector or BowDetector()
    config = config or LabelerConfig()
    labeler = weak_to_strong_label if strategy == "weak_to_strong" else grounding_label
    out = []
    for scene in bundle.scenes:
        desc = bundle.description_by_id(scene.description_id)
        out.append(labeler(scene, desc.text, detector, config, lexicon=bundle.lexicon))
    return out


def mean_label_recall(bundle: CorpusBundle, triplets) -> float:
    vals = [label_recall(t, bundle.scenes[t.scene_id], lexicon=bundle.lexicon) for t in triplets]
    return float(np.mean(vals)) if vals else 0.0


@dataclass(frozen=True)
class SignalVariant:
    """One rung of the learning-signal ladder."""
    name: str
    k_neg: int
    include_struct_pos: bool
    target_config: TargetConfig


SIGNAL_LADDER = (
    SignalVariant("naive", 0, False,
                  TargetConfig(sentence_level_positive=False, structural_negative=False)),
    SignalVariant("intra_neg", 2, False,
                  TargetConfig(sentence_level_positive=False, structural_negative=False)),
    SignalVariant("struct_neg", 2, False,
                  TargetConfig(sentence_level_positive=True, structural_negative=True)),
    SignalVariant("struct_pos", 2, True,
                  TargetConfig(sentence_level_positive=True, structural_negative=True)),
)

FULL_VARIANT = SIGNAL_LADDER[-1]


def build_training_examples(bundle: CorpusBundle, triplets, variant: SignalVariant = FULL_VARIANT,
                            seed: int = 0) -> list[TrainExample]:
    out = []
    for triplet in triplets:
        if not triplet.assignments:
            continue
        query = assemble_query(triplet, bundle.descriptions, variant.k_neg,
                               variant.include_struct_pos,
                               seed=derive_seed(seed, "query", variant.name),
                               lexicon=bundle.lexicon)
        rf = bundle.features[triplet.scene_id]
        target = build_alignment_target(query, triplet, rf.features.shape[0],
                                        config=variant.target_config, lexicon=bundle.lexicon)
        out.append(TrainExample(features=rf.features, query=query, target=target,
                                scene_id=triplet.scene_id))
    return out


def build_detection_examples(bundle: CorpusBundle, seed: int = 0, absent_categories: int = 2) -> list[TrainExample]:
    """GLIP-style detection-format examples: category prompts over each scene."""
    names = [c.name for c in bundle.pool]
    out = []
    for scene in bundle.scenes:
        rng = np.random.default_rng(derive_seed(seed, "det-example", scene.scene_id))
        present = sorted({o.category for o in scene.objects})
        absent = [n for n in names if n not in present]
        extra = [absent[int(i)] for i in rng.choice(len(absent), size=min(absent_categories, len(absent)), replace=False)]
        listed = present + extra
        order = rng.permutation(len(listed))
        query = make_detection_query([listed[int(i)] for i in order])
        rf = bundle.features[scene.scene_id]
        target = build_detection_target(query, scene, rf.features.shape[0])
        out.append(TrainExample(features=rf.features, query=query, target=target,
                                scene_id=scene.scene_id))
    return out


def run_model_on_benchmark(model: GroundingModel, benchmark: BenchmarkInstance,
                           score_threshold: float = 0.5,
                           lexicon: Lexicon | None = None,
                           prompt_chunk: int = 8, agg: str = "max") -> list[dict]:
    """Detector results rows {label_id, scene_id, detections} for every label.

    Labels are scored through multi-caption prompts, the query format the
    model trains on: each scene's description labels form one prompt, and
    category labels are chunked into detection-style prompts per scene.
    """
    rows = []

    def emit(label_id, scene_id, dets):
        if dets:
            rows.append({"label_id": label_id, "scene_id": scene_id,
                         "detections": [{"box": list(d.box), "score": d.score} for d in dets]})

    cat_labels = list(benchmark.category_labels)
    for scene in benchmark.scenes:
        rf = benchmark.features[scene.scene_id]
        for lo in range(0, len(cat_labels), prompt_chunk):
            chunk = cat_labels[lo:lo + prompt_chunk]
            per_label = predict_grouped(model, rf, [c.name for c in chunk],
                                        score_threshold=score_threshold, lexicon=lexicon,
                                        agg=agg)
            for label, dets in zip(chunk, per_label):
                emit(label.label_id, scene.scene_id, dets)

    by_scene: dict[int, list] = {}
    for label in benchmark.description_labels:
        by_scene.setdefault(label.scene_id, []).append(label)
    for scene_id, labels in by_scene.items():
        rf = benchmark.features[scene_id]
        for lo in range(0, len(labels), prompt_chunk):
            chunk = labels[lo:lo + prompt_chunk]
            per_label = predict_grouped(model, rf, [l.text for l in chunk],
                                        score_threshold=score_threshold, lexicon=lexicon,
                                        agg=agg)
            for label, dets in zip(chunk, per_label):
                emit(label.label_id, scene_id, dets)
    return rows


def evaluate_model(model: GroundingModel, benchmark: BenchmarkInstance,
                   score_threshold: float = 0.5, iou_threshold: float = 0.5,
                   lexicon: Lexicon | None = None, agg: str = "max") -> MetricReport:
    rows = run_model_on_benchmark(model, benchmark, score_threshold, lexicon, agg=agg)
    return omnilabel_report(rows, benchmark, iou_threshold=iou_threshold, lexicon=lexicon)


def train_variant(bundle: CorpusBundle, triplets, variant: SignalVariant,
                  train_config: TrainConfig, detection_examples=(),
                  d_model: int = 32, model_seed: int = 0) -> tuple[GroundingModel, list]:
    """Fresh model trained on the bundle's triplets under one signal variant."""
    vocab = build_vocabulary(bundle.pool)
    dim = next(iter(bundle.features.values())).features.shape[1]
    model = GroundingModel(vocab, d_in=dim, d_model=d_model, seed=model_seed)
    examples = build_training_examples(bundle, triplets, variant, seed=train_config.seed)
    return train(model, examples, list(detection_examples), train_config)


def default_benchmark(pool, seed: int = 0, n_scenes: int = 40,
                      config: BenchmarkConfig | None = None, lexicon=None) -> BenchmarkInstance:
    """Held-out benchmark; its seed space is disjoint from corpus seeds."""
    spec = DescriptionSpec(1, 10, seed=seed)
    return make_benchmark(pool, spec, n_scenes, derive_seed(seed, "heldout"),
                          config=config, lexicon=lexicon)
