import numpy as np
import pytest

from grounddesk import targets
from grounddesk.corpus import ObjectDescription
from grounddesk.labeling import PseudoTriplet
from grounddesk.scenegen import Scene, SceneObject
from grounddesk.targets import (CaptionItem, Query, TargetConfig, assemble_query,
                                build_alignment_target, build_detection_target,
                                make_detection_query)

POSITIVE = "an avocado lying on a cutting board"
# tokens: an(0) avocado(1) lying(2) on(3) a(4) cutting(5) board(6)
SUBJ_SPAN = (0, 2)
BOARD_SPAN = (4, 7)


def make_pool():
    texts = [POSITIVE,
             "a ripe avocado inside a white bowl",
             "a green avocado near a small knife",
             "a halved avocado on a wooden table"]
    pool = [ObjectDescription(i, 3, t, i, "procedural") for i, t in enumerate(texts)]
    pool.append(ObjectDescription(4, 1, "a black dog with a ball", 4, "procedural"))
    return pool


def make_triplet():
    return PseudoTriplet(scene_id=0, description=POSITIVE,
                         assignments=((0, SUBJ_SPAN), (1, BOARD_SPAN)),
                         provenance="weak_to_strong")


def test_assemble_counts_and_kinds():
    query = assemble_query(make_triplet(), make_pool(), k_neg=1, include_struct_pos=True, seed=0)
    kinds = sorted(item.kind for item in query.items)
    assert kinds == ["intra_class_negative", "positive_description", "structural_positive"]
    struct = next(i for i in query.items if i.kind == "structural_positive")
    assert struct.tokens == ("a", "cutting", "board")
    assert struct.source_span == BOARD_SPAN


def test_assemble_bare_query():
    query = assemble_query(make_triplet(), make_pool(), k_neg=0, include_struct_pos=False, seed=0)
    assert len(query.items) == 1
    assert query.tokens == tuple(POSITIVE.split())


def test_assemble_negatives_share_category_and_differ(desk20):
    pool = make_pool()
    for seed in range(1000):
        query = assemble_query(make_triplet(), pool, k_neg=2, include_struct_pos=False, seed=seed)
        negs = [i for i in query.items if i.kind == "intra_class_negative"]
        assert len(negs) == 2
        texts = {" ".join(i.tokens) for i in negs}
        assert POSITIVE not in texts
        assert len(texts) == 2
        assert all(i.source_description_id in (1, 2, 3) for i in negs)


def test_assemble_requires_enough_pool():
    with pytest.raises(ValueError, match="same-category"):
        assemble_query(make_triplet(), make_pool(), k_neg=5, include_struct_pos=False, seed=0)
    with pytest.raises(ValueError, match="not found"):
        assemble_query(PseudoTriplet(0, "a missing description", (), "weak_to_strong"),
                       make_pool(), k_neg=0, include_struct_pos=False, seed=0)


def test_assemble_deterministic_and_seed_sensitive():
    pool = make_pool()
    q1 = assemble_query(make_triplet(), pool, 2, True, seed=0)
    q2 = assemble_query(make_triplet(), pool, 2, True, seed=0)
    assert q1.tokens == q2.tokens
    orders = {assemble_query(make_triplet(), pool, 2, True, seed=s).tokens
              for s in range(20)}
    assert len(orders) > 1


def test_separators_between_items():
    query = assemble_query(make_triplet(), make_pool(), 1, True, seed=0)
    seps = [i for i, t in enumerate(query.tokens) if i not in query.token_map]
    assert len(seps) == len(query.items) - 1
    assert all(query.tokens[i] == "." for i in seps)
    # token_map round-trips every non-separator token
    for flat, (item, within) in query.token_map.items():
        assert query.items[item].tokens[within] == query.tokens[flat]


def fig5_query():
    items = (
        CaptionItem(tuple(POSITIVE.split()), "positive_description", 0),
        CaptionItem(tuple("an avocado spread on a toasted bagel".split()),
                    "intra_class_negative", 1),
        CaptionItem(("a", "cutting", "board"), "structural_positive", 0,
                    source_span=BOARD_SPAN),
    )
    return Query(items=items)


def test_alignment_target_fig5_layout():
    query = fig5_query()
    target = build_alignment_target(query, make_triplet(), n_regions=2)
    t, mask = target.matrix, target.loss_mask
    assert t.shape == (2, query.m)
    pos_cols = list(query.item_columns(0))
    neg_cols = list(query.item_columns(1))
    struct_cols = list(query.item_columns(2))
    sep_cols = [c for c in range(query.m) if c not in query.token_map]

    # subject box: the entire positive sentence, nothing else
    assert t[0, pos_cols].tolist() == [1.0] * 7
    assert t[0, neg_cols].sum() == 0
    assert t[0, struct_cols].sum() == 0
    # board box: only the standalone phrase, suppressed inside the sentence
    board_in_sentence = [pos_cols[0] + i for i in range(*BOARD_SPAN)]
    assert t[1, struct_cols].tolist() == [1.0] * 3
    assert t[1, board_in_sentence] .sum() == 0
    assert t[1].sum() == 3.0
    # separators masked, everything else supervised
    assert mask[:, sep_cols].sum() == 0
    assert mask.sum() == 2 * (query.m - len(sep_cols))


def test_alignment_single_phrase_no_negatives():
    desc = "a green avocado"
    triplet = PseudoTriplet(0, desc, ((0, (0, 3)),), "weak_to_strong")
    query = Query(items=(CaptionItem(tuple(desc.split()), "positive_description", 0),))
    target = build_alignment_target(query, triplet, n_regions=3)
    assert target.matrix[0].tolist() == [1.0, 1.0, 1.0]
    assert target.matrix[1:].sum() == 0


def test_phrase_level_mode_keeps_nonsubject_positive():
    query = fig5_query()
    config = TargetConfig(sentence_level_positive=False, structural_negative=False)
    target = build_alignment_target(query, make_triplet(), 2, config=config)
    pos_cols = list(query.item_columns(0))
    subj_cols = [pos_cols[0] + i for i in range(*SUBJ_SPAN)]
    board_cols = [pos_cols[0] + i for i in range(*BOARD_SPAN)]
    assert target.matrix[0, subj_cols].tolist() == [1.0, 1.0]
    assert target.matrix[0].sum() == 2.0  # subject span only
    assert target.matrix[1, board_cols].tolist() == [1.0, 1.0, 1.0]


def test_sentence_positive_exclusion_variant():
    query = fig5_query()
    config = TargetConfig(sentence_positive_covers_nonsubject=False)
    target = build_alignment_target(query, make_triplet(), 2, config=config)
    pos_cols = list(query.item_columns(0))
    board_cols = [pos_cols[0] + i for i in range(*BOARD_SPAN)]
    assert target.matrix[0, board_cols].sum() == 0
    kept = [c for c in pos_cols if c not in board_cols]
    assert target.matrix[0, kept].tolist() == [1.0] * 4


def test_role_discrimination_property(default_bundle, default_triplets):
    checked = 0
    for triplet in default_triplets:
        if len([s for _i, s in triplet.assignments]) < 2:
            continue
        query = assemble_query(triplet, default_bundle.descriptions, 2, True, seed=1,
                               lexicon=default_bundle.lexicon)
        n = default_bundle.features[triplet.scene_id].features.shape[0]
        target = build_alignment_target(query, triplet, n, lexicon=default_bundle.lexicon)
        pos_idx = next(i for i, it in enumerate(query.items)
                       if it.kind == "positive_description")
        pos_off = query.item_offsets[pos_idx]
        from grounddesk.langparse import parse
        tree = parse(triplet.description, default_bundle.lexicon)
        subj_span = (tree.subject.start_token, tree.subject.end_token)
        subject_boxes = {b for b, span in triplet.assignments if span == subj_span}
        for i, item in enumerate(query.items):
            if item.kind != "structural_positive":
                continue
            boxes = [b for b, span in triplet.assignments if span == item.source_span]
            for b in boxes:
                inside = [pos_off + k for k in range(*item.source_span)]
                standalone = list(query.item_columns(i))
                assert target.matrix[b, inside].sum() == 0
                if b in subject_boxes:
                    # a box assigned to both roles resolves subject-first
                    assert target.matrix[b, standalone].sum() == 0
                else:
                    assert target.matrix[b, standalone].min() == 1.0
                    checked += 1
        for i, item in enumerate(query.items):
            if item.kind == "intra_class_negative":
                assert target.matrix[:, list(query.item_columns(i))].sum() == 0
        if checked >= 25:
            break
    assert checked >= 25


def test_shuffle_permutes_columns_consistently():
    pool = make_pool()
    triplet = make_triplet()
    qa = assemble_query(triplet, pool, 2, True, seed=3)
    perm = [2, 0, 3, 1]
    qb = Query(items=tuple(qa.items[i] for i in perm))
    assert qa.tokens != qb.tokens  # same items, different order
    ta = build_alignment_target(qa, triplet, 4)
    tb = build_alignment_target(qb, triplet, 4)
    for item_b, item_a in enumerate(perm):
        for within in range(len(qa.items[item_a].tokens)):
            col_a = qa.item_offsets[item_a] + within
            col_b = qb.item_offsets[item_b] + within
            assert np.array_equal(ta.matrix[:, col_a], tb.matrix[:, col_b])


def test_alignment_errors():
    query = fig5_query()
    bad_span = PseudoTriplet(0, POSITIVE, ((0, (1, 3)),), "weak_to_strong")
    with pytest.raises(ValueError, match="matches no phrase"):
        build_alignment_target(query, bad_span, 2)
    big_index = PseudoTriplet(0, POSITIVE, ((9, SUBJ_SPAN),), "weak_to_strong")
    with pytest.raises(ValueError, match="out of range"):
        build_alignment_target(query, big_index, 2)


def test_detection_target_two_categories():
    query = make_detection_query(["avocado", "cutting board"])
    objs = (SceneObject(0, "avocado", frozenset(), (0.1, 0.1, 0.2, 0.2)),
            SceneObject(1, "cutting board", frozenset(), (0.1, 0.4, 0.3, 0.1)))
    scene = Scene(0, 0, 0, objs, frozenset({0}), ())
    target = build_detection_target(query, scene, n_regions=4)
    avocado_cols = list(query.item_columns(0))
    board_cols = list(query.item_columns(1))
    assert target.matrix[0, avocado_cols].tolist() == [1.0]
    assert target.matrix[0, board_cols].sum() == 0
    assert target.matrix[1, board_cols].tolist() == [1.0, 1.0]
    assert target.matrix[2:].sum() == 0


def test_example_serialization_roundtrip():
    query = fig5_query()
    triplet = make_triplet()
    target = build_alignment_target(query, triplet, 3)
    row = targets.example_to_json(7, query, target)
    assert set(row) == {"scene_id", "flat_tokens", "item_kinds", "token_map",
                        "n_regions", "target", "mask"}
    scene_id, query2, target2 = targets.example_from_json(row)
    assert scene_id == 7
    assert query2.tokens == query.tokens
    assert [i.kind for i in query2.items] == [i.kind for i in query.items]
    assert np.array_equal(target2.matrix, target.matrix)
    assert np.array_equal(target2.loss_mask, target.loss_mask)
