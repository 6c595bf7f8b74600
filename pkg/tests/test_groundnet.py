import numpy as np
import pytest

from grounddesk import groundnet, pipeline, targets
from grounddesk.groundnet import (GroundingDetector, GroundingModel, NumericError,
                                  TrainConfig, TrainExample, Vocabulary, alignment_loss,
                                  forward, load_checkpoint, load_history, loss_and_grad,
                                  predict, save_checkpoint, save_history, sigmoid, train)
from grounddesk.targets import AlignmentTarget, CaptionItem, Query

WORDS = ["a", "an", "the", "green", "red", "ripe", "avocado", "cutting", "board",
         "dog", "on", "near", "bowl", "table"]


def small_model(seed=0, d_in=12, d_model=6):
    return GroundingModel(Vocabulary.build(WORDS), d_in=d_in, d_model=d_model,
                          max_positions=16, seed=seed)


def small_query():
    return Query(items=(
        CaptionItem(("a", "green", "avocado", "on", "a", "cutting", "board"),
                    "positive_description"),
        CaptionItem(("a", "red", "dog"), "intra_class_negative"),
        CaptionItem(("a", "cutting", "board"), "structural_positive"),
    ))


def random_target(rng, n, query):
    t = (rng.random((n, query.m)) < 0.4).astype(float)
    mask = np.ones((n, query.m))
    return t, mask


def test_zeroed_model_scores_zero():
    model = small_model()
    model.params["text.embeddings"][:] = 0.0
    query = small_query()
    scores = forward(model, np.ones((3, 12)), query)
    assert np.array_equal(scores.S, np.zeros((3, query.m)))


def test_single_pair_is_scalar_dot():
    model = small_model(seed=3)
    rng = np.random.default_rng(0)
    for k in model.params:
        model.params[k] = rng.normal(0, 0.4, model.params[k].shape)
    feats = rng.normal(0, 1, (1, 12))
    query = Query(items=(CaptionItem(("avocado",), "positive_description"),))
    scores = forward(model, feats, query)
    assert scores.S.shape == (1, 1)
    o = feats @ model.params["visual.weight"] + model.params["visual.bias"]
    h = scores.token_features
    expected = model.params["logit_scale"][0, 0] * float((o @ h.T)[0, 0])
    assert scores.S[0, 0] == pytest.approx(expected)


def test_feature_width_mismatch():
    model = small_model()
    with pytest.raises(ValueError, match="feature width"):
        forward(model, np.ones((2, 5)), small_query())


def test_loss_at_zero_scores_is_ln2():
    query = small_query()
    n = 4
    mask = np.ones((n, query.m))
    target = AlignmentTarget(np.zeros((n, query.m)), mask)
    assert alignment_loss(np.zeros((n, query.m)), target) == pytest.approx(np.log(2))
    target1 = AlignmentTarget(np.ones((n, query.m)), mask)
    assert alignment_loss(np.zeros((n, query.m)), target1) == pytest.approx(np.log(2))


def test_saturated_scores_reach_tiny_loss():
    rng = np.random.default_rng(5)
    t = (rng.random((3, 9)) < 0.5).astype(float)
    target = AlignmentTarget(t, np.ones_like(t))
    s = 20.0 * (2.0 * t - 1.0)
    assert alignment_loss(s, target) < 1e-3


def test_empty_mask_rejected():
    t = np.zeros((2, 3))
    target = AlignmentTarget(t, np.zeros_like(t))
    with pytest.raises(ValueError, match="mask"):
        alignment_loss(np.zeros((2, 3)), target)


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    model = small_model(seed=seed)
    for k in model.params:
        model.params[k] = rng.normal(0, 0.5, model.params[k].shape)
    model.params["logit_scale"] = np.array([[rng.uniform(0.5, 2.0)]])
    query = small_query()
    feats = rng.normal(0, 1, (4, 12))
    t = (rng.random((4, query.m)) < 0.4).astype(float)
    mask = np.ones((4, query.m))
    mask[:, [c for c in range(query.m) if c not in query.token_map]] = 0
    target = AlignmentTarget(t, mask)
    _, grads = loss_and_grad(model, forward(model, feats, query), target)
    eps = 1e-5
    for name, grad in grads.items():
        arr = model.params[name]
        coords = zip(rng.integers(0, arr.shape[0], 5), rng.integers(0, arr.shape[1], 5))
        for i, j in coords:
            i, j = int(i), int(j)
            orig = arr[i, j]
            arr[i, j] = orig + eps
            up = alignment_loss(forward(model, feats, query).S, target)
            arr[i, j] = orig - eps
            down = alignment_loss(forward(model, feats, query).S, target)
            arr[i, j] = orig
            fd = (up - down) / (2 * eps)
            rel = abs(fd - grad[i, j]) / max(abs(fd), abs(grad[i, j]), 1e-8)
            assert rel < 1e-4, f"{name}[{i},{j}]: analytic {grad[i, j]} vs fd {fd}"


def test_context_separates_repeated_tokens_after_one_step():
    model = small_model(seed=1)
    query = small_query()
    rng = np.random.default_rng(0)
    feats = rng.normal(0, 1, (2, 12))
    scores = forward(model, feats, query)
    h = scores.token_features
    # "cutting" inside the sentence vs in the standalone item
    in_sentence = query.item_offsets[0] + 5
    standalone = query.item_offsets[2] + 1
    assert np.allclose(h[in_sentence], h[standalone])  # mixing starts at zero
    t = np.zeros((2, query.m))
    t[0, in_sentence] = 1.0
    target = AlignmentTarget(t, np.ones_like(t))
    example = TrainExample(features=feats, query=query, target=target)
    train(model, [example], [], TrainConfig(epochs=1, batch_size=1, seed=0))
    h2 = forward(model, feats, query).token_features
    assert not np.allclose(h2[in_sentence], h2[standalone])


def tiny_examples(n_examples=16, seed=0):
    rng = np.random.default_rng(seed)
    vocab_words = WORDS
    out = []
    for _ in range(n_examples):
        query = small_query()
        feats = rng.normal(0, 1, (3, 12))
        t = (rng.random((3, query.m)) < 0.3).astype(float)
        mask = np.ones_like(t)
        mask[:, [c for c in range(query.m) if c not in query.token_map]] = 0
        out.append(TrainExample(features=feats, query=query,
                                target=AlignmentTarget(t, mask)))
    return out


def test_training_reduces_loss_and_records_history():
    model = small_model(seed=2, d_model=12)
    examples = tiny_examples(8)
    model, history = train(model, examples, [],
                           TrainConfig(epochs=100, learning_rate=0.3, batch_size=4, seed=0))
    assert len(history) == 100
    assert history[-1][1] < 0.5 * history[0][1]
    assert all(total == grounding for _e, grounding, total in history)


@pytest.mark.parametrize("flag,block", [
    ("freeze_visual", "visual"),
    ("freeze_language", "language"),
    ("freeze_fusion", "fusion"),
])
def test_freeze_flags_keep_blocks_bit_identical(flag, block):
    model = small_model(seed=4)
    before = {k: v.tobytes() for k, v in model.params.items()}
    config = TrainConfig(epochs=3, seed=0, **{flag: True})
    train(model, tiny_examples(), [], config)
    frozen_names = groundnet.PARAM_BLOCKS[block]
    for name in frozen_names:
        assert model.params[name].tobytes() == before[name]
    for name in set(model.params) - set(frozen_names):
        assert model.params[name].tobytes() != before[name]


def test_no_freeze_changes_every_block():
    model = small_model(seed=4)
    before = {k: v.tobytes() for k, v in model.params.items()}
    train(model, tiny_examples(), [], TrainConfig(epochs=3, seed=0))
    for name, raw in before.items():
        assert model.params[name].tobytes() != raw


def test_training_is_deterministic():
    runs = []
    for _ in range(2):
        model = small_model(seed=7)
        model, history = train(model, tiny_examples(), [], TrainConfig(epochs=5, seed=3))
        runs.append(({k: v.tobytes() for k, v in model.params.items()}, history))
    assert runs[0] == runs[1]


def test_detection_ratio_one_uses_detections_only():
    model = small_model(seed=1)
    det_examples = tiny_examples(8, seed=9)
    model, history = train(model, [], det_examples,
                           TrainConfig(epochs=2, detection_mix_ratio=1.0, seed=0))
    assert len(history) == 2
    with pytest.raises(ValueError, match="triplet"):
        train(small_model(), [], det_examples, TrainConfig(detection_mix_ratio=0.5))
    with pytest.raises(ValueError, match="detection"):
        train(small_model(), tiny_examples(4), [], TrainConfig(detection_mix_ratio=0.5))


def test_divergent_training_raises_numeric_error():
    model = small_model(seed=2)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(NumericError, match="epoch"):
            train(model, tiny_examples(), [],
                  TrainConfig(epochs=30, learning_rate=1e12, seed=0))


def test_predict_untrained_zero_model_scores_half():
    model = small_model()
    for k in model.params:
        model.params[k][:] = 0.0
    feats = np.ones((3, 12))
    dets = predict(model, feats, "a green avocado", score_threshold=0.0)
    assert [d.score for d in dets] == [0.5, 0.5, 0.5]
    assert predict(model, feats, "a green avocado", score_threshold=1.0) == []


def test_predict_empty_query_fails():
    model = small_model()
    with pytest.raises(Exception):
        predict(model, np.ones((2, 12)), "")


def test_grounding_detector_adapts_model(default_bundle):
    vocab = pipeline.build_vocabulary(default_bundle.pool)
    model = GroundingModel(vocab, d_in=64, d_model=8, seed=0)
    rf = default_bundle.features[0]
    detector = GroundingDetector(model, lexicon=default_bundle.lexicon)
    dets = detector.detect(rf, "an avocado")
    assert len(dets) == rf.features.shape[0]
    assert all(0.0 <= d.score <= 1.0 for d in dets)


def test_checkpoint_roundtrip(tmp_path):
    model = small_model(seed=11)
    rng = np.random.default_rng(2)
    for k in model.params:
        model.params[k] = rng.normal(0, 1, model.params[k].shape)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    assert raw[:4] == b"WSCL"
    loaded = load_checkpoint(path, model.vocabulary)
    assert set(loaded.params) == set(model.params)
    for k in model.params:
        assert np.array_equal(loaded.params[k], model.params[k])
    assert (loaded.d_in, loaded.d_model) == (model.d_in, model.d_model)
    wrong_vocab = Vocabulary.build(["just", "two"])
    with pytest.raises(ValueError, match="vocabulary"):
        load_checkpoint(path, wrong_vocab)


def test_checkpoint_rejects_other_files(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"JUNKxxxx")
    with pytest.raises(ValueError, match="not a model checkpoint"):
        load_checkpoint(path, small_model().vocabulary)


def test_history_roundtrip(tmp_path):
    history = [(0, 0.7, 0.7), (1, 0.35001, 0.35001)]
    path = tmp_path / "history.csv"
    save_history(path, history)
    text = path.read_text()
    assert text.splitlines()[0] == "epoch,grounding_loss,total"
    assert load_history(path) == history


def test_sigmoid_stability():
    x = np.array([-800.0, 0.0, 800.0])
    s = sigmoid(x)
    assert s[0] == 0.0 and s[1] == 0.5 and s[2] == 1.0
