"""Training query assembly and binary alignment-target construction.

A query concatenates caption items separated by "." tokens: the positive
description, sampled intra-class negative captions, and standalone structural
positives (one per non-negated non-subject phrase). The target matrix encodes,
in order: sentence-level positives for subject boxes, structural negatives for
non-subject boxes inside the sentence, structural positives on the standalone
items, all-zero columns for intra-class negatives, and zeros elsewhere.
Separator columns are masked out of the loss, everything else is supervised.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .labeling import PseudoTriplet
from .langparse import Lexicon, parse
from .scenegen import Scene
from .seeding import derive_seed

SEPARATOR = "."

KINDS = ("positive_description", "intra_class_negative", "structural_positive",
         "detection_category")


@dataclass(frozen=True)
class CaptionItem:
    tokens: tuple[str, ...]
    kind: str
    source_description_id: int | None = None
    source_span: tuple[int, int] | None = None  # phrase span for structural positives


@dataclass
class Query:
    items: tuple[CaptionItem, ...]
    tokens: tuple[str, ...] = ()
    item_offsets: tuple[int, ...] = ()
    token_map: dict = field(default_factory=dict)  # flat index -> (item, within-item)

    def __post_init__(self):
        flat: list[str] = []
        offsets = []
        token_map = {}
        for idx, item in enumerate(self.items):
            if idx > 0:
                flat.append(SEPARATOR)
            offsets.append(len(flat))
            for j, tok in enumerate(item.tokens):
                token_map[len(flat)] = (idx, j)
                flat.append(tok)
        self.tokens = tuple(flat)
        self.item_offsets = tuple(offsets)
        self.token_map = token_map

    @property
    def m(self) -> int:
        return len(self.tokens)

    def item_columns(self, item_index: int) -> range:
        off = self.item_offsets[item_index]
        return range(off, off + len(self.items[item_index].tokens))


@dataclass(frozen=True)
class AlignmentTarget:
    matrix: np.ndarray  # N x M, entries in {0, 1}
    loss_mask: np.ndarray  # N x M, 0 on separator columns


@dataclass(frozen=True)
class TargetConfig:
    """Which compositional signals the target matrix encodes.

    With sentence_level_positive off, subject boxes align with their span only
    (plain phrase-level grounding); with structural_negative off, non-subject
    boxes align positively with their in-sentence span. The default is the
    full method.
    """

    sentence_level_positive: bool = True
    structural_negative: bool = True
    sentence_positive_covers_nonsubject: bool = True


def assemble_query(triplet: PseudoTriplet, pool, k_neg: int, include_struct_pos: bool,
                   seed: int, lexicon: Lexicon | None = None) -> Query:
    """Positive description + k_neg intra-class negatives + structural
    positives, deterministically shuffled by seed."""
    positive = next((d for d in pool if d.text == triplet.description), None)
    if positive is None:
        raise ValueError(f"triplet description not found in pool: {triplet.description!r}")
    candidates = [d for d in pool
                  if d.category_id == positive.category_id and d.text != positive.text]
    if len(candidates) < k_neg:
        raise ValueError(f"pool has {len(candidates)} same-category alternatives, need {k_neg}")
    rng = np.random.default_rng(derive_seed(seed, "query", triplet.scene_id, positive.id))
    items = [CaptionItem(tuple(positive.text.split()), "positive_description", positive.id)]
    if k_neg:
        for i in rng.choice(len(candidates), size=k_neg, replace=False):
            neg = candidates[int(i)]
            items.append(CaptionItem(tuple(neg.text.split()), "intra_class_negative", neg.id))
    if include_struct_pos:
        tree = parse(triplet.description, lexicon)
        for phrase in tree.phrases[1:]:
            if phrase.negated:
                continue
            toks = tree.tokens[phrase.start_token:phrase.end_token]
            items.append(CaptionItem(tuple(toks), "structural_positive", positive.id,
                                     source_span=(phrase.start_token, phrase.end_token)))
    order = rng.permutation(len(items))
    return Query(items=tuple(items[int(i)] for i in order))


def build_alignment_target(query: Query, triplet: PseudoTriplet, n_regions: int,
                           config: TargetConfig | None = None,
                           lexicon: Lexicon | None = None) -> AlignmentTarget:
    """N x M binary target for a query/triplet pair (see module docstring)."""
    config = config or TargetConfig()
    tree = parse(triplet.description, lexicon)
    spans = {(p.start_token, p.end_token): p for p in tree.phrases}
    subject_span = (tree.subject.start_token, tree.subject.end_token)

    for idx, span in triplet.assignments:
        if idx >= n_regions:
            raise ValueError(f"assignment proposal {idx} out of range for N={n_regions}")
        if span not in spans:
            raise ValueError(f"assignment span {span} matches no phrase of the description")

    pos_items = [i for i, item in enumerate(query.items) if item.kind == "positive_description"]
    if len(pos_items) != 1:
        raise ValueError("query must contain exactly one positive_description item")
    pos_idx = pos_items[0]
    pos_off = query.item_offsets[pos_idx]

    t = np.zeros((n_regions, query.m))
    mask = np.ones((n_regions, query.m))
    for col, tok in enumerate(query.tokens):
        if col not in query.token_map:
            mask[:, col] = 0.0

    subject_boxes = sorted({idx for idx, span in triplet.assignments if span == subject_span})
    nonsubject = [(idx, span) for idx, span in triplet.assignments if span != subject_span]

    # sentence-level positive (or plain phrase-level alignment)
    if config.sentence_level_positive:
        cols = list(query.item_columns(pos_idx))
        if not config.sentence_positive_covers_nonsubject:
            drop = set()
            for span, phrase in spans.items():
                if phrase.role != "subject":
                    drop.update(range(pos_off + span[0], pos_off + span[1]))
            cols = [c for c in cols if c not in drop]
    else:
        cols = list(range(pos_off + subject_span[0], pos_off + subject_span[1]))
    for b in subject_boxes:
        t[b, cols] = 1.0

    # non-subject boxes: the structural negative pins their in-sentence span to
    # 0 (overriding any sentence-level positive for boxes that also carry a
    # subject assignment); without it they align positively with their span as
    # in conventional grounding data
    for idx, span in nonsubject:
        value = 0.0 if config.structural_negative else 1.0
        t[idx, pos_off + span[0]:pos_off + span[1]] = value

    # standalone structural positives
    for i, item in enumerate(query.items):
        if item.kind != "structural_positive":
            continue
        cols = list(query.item_columns(i))
        for idx, span in nonsubject:
            if span == item.source_span:
                t[idx, cols] = 1.0
        for b in subject_boxes:
            t[b, cols] = 0.0

    return AlignmentTarget(matrix=t, loss_mask=mask)


def make_detection_query(category_names) -> Query:
    """GLIP-style multi-category prompt: one detection_category item per name."""
    items = tuple(CaptionItem(tuple(name.split()), "detection_category") for name in category_names)
    return Query(items=items)


def build_detection_target(query: Query, scene: Scene, n_regions: int) -> AlignmentTarget:
    """Box rows get 1 on their category's token columns; background rows stay 0."""
    t = np.zeros((n_regions, query.m))
    mask = np.ones((n_regions, query.m))
    for col in range(query.m):
        if col not in query.token_map:
            mask[:, col] = 0.0
    by_category = {}
    for i, item in enumerate(query.items):
        if item.kind == "detection_category":
            by_category.setdefault(item.tokens, []).append(i)
    for obj in scene.objects:
        if obj.instance_id >= n_regions:
            continue
        for i in by_category.get(tuple(obj.category.split()), ()):
            t[obj.instance_id, list(query.item_columns(i))] = 1.0
    return AlignmentTarget(matrix=t, loss_mask=mask)


def example_to_json(scene_id: int, query: Query, target: AlignmentTarget) -> dict:
    n, m = target.matrix.shape
    return {
        "scene_id": scene_id,
        "flat_tokens": list(query.tokens),
        "item_kinds": [item.kind for item in query.items],
        "token_map": [[flat, loc[0], loc[1]] for flat, loc in sorted(query.token_map.items())],
        "n_regions": n,
        "target": "".join(str(int(v)) for v in target.matrix.reshape(-1)),
        "mask": "".join(str(int(v)) for v in target.loss_mask.reshape(-1)),
    }


def example_from_json(row: dict) -> tuple[int, Query, AlignmentTarget]:
    kinds = row["item_kinds"]
    groups: dict[int, list[tuple[int, str]]] = {i: [] for i in range(len(kinds))}
    for flat, item, within in row["token_map"]:
        groups[item].append((within, row["flat_tokens"][flat]))
    items = tuple(CaptionItem(tuple(tok for _w, tok in sorted(groups[i])), kinds[i])
                  for i in range(len(kinds)))
    query = Query(items=items)
    n, m = row["n_regions"], len(row["flat_tokens"])
    t = np.asarray([float(c) for c in row["target"]]).reshape(n, m)
    mask = np.asarray([float(c) for c in row["mask"]]).reshape(n, m)
    return row["scene_id"], query, AlignmentTarget(matrix=t, loss_mask=mask)
