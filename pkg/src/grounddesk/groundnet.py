"""The trainable grounding model: an affine visual encoder and a contextual
token encoder scoring every (region, token) pair, with analytic gradients,
momentum-SGD training with freeze flags and detection-data mixing, and a
binary checkpoint format.

Token features are context-mixed: position i gets its embedding plus a
learned map of its own caption's mean, of its own (embedding + position)
vector, and of the previous position's. Positions count within the caption
item, so a caption encodes the same wherever it lands in the prompt. The same
token string therefore encodes differently across captions and differently
inside a sentence than standing alone, which is what lets training separate
intra-class negatives and structural positives from structural negatives.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .labeling import Detection
from .langparse import Lexicon, parse
from .targets import AlignmentTarget, CaptionItem, Query
from .seeding import derive_seed

UNK = "<unk>"

PARAM_BLOCKS = {
    "visual": ("visual.weight", "visual.bias"),
    "language": ("text.embeddings",),
    "fusion": ("mix.global", "mix.self", "mix.prev", "text.positions", "logit_scale"),
}


class NumericError(RuntimeError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]

    @staticmethod
    def build(words) -> "Vocabulary":
        toks = sorted(set(words) | {UNK, "."})
        return Vocabulary(tokens=tuple(toks))

    @property
    def index(self) -> dict:
        cached = getattr(self, "_index", None)
        if cached is None:
            cached = {t: i for i, t in enumerate(self.tokens)}
            object.__setattr__(self, "_index", cached)
        return cached

    def ids(self, tokens) -> np.ndarray:
        unk = self.index[UNK]
        return np.asarray([self.index.get(t, unk) for t in tokens], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.tokens)


class GroundingModel:
    """Parameter container; every parameter is a 2-D float64 array."""

    def __init__(self, vocabulary: Vocabulary, d_in: int, d_model: int = 32,
                 max_positions: int = 64, seed: int = 0):
        self.vocabulary = vocabulary
        self.d_in = d_in
        self.d_model = d_model
        self.max_positions = max_positions
        rng = np.random.default_rng(derive_seed(seed, "model-init"))
        v = len(vocabulary)
        self.params: dict[str, np.ndarray] = {
            "visual.weight": rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_in, d_model)),
            "visual.bias": np.zeros((1, d_model)),
            "text.embeddings": rng.normal(0.0, 0.3, (v, d_model)),
            "text.positions": rng.normal(0.0, 0.1, (max_positions, d_model)),
            "mix.global": np.zeros((d_model, d_model)),
            "mix.self": np.zeros((d_model, d_model)),
            "mix.prev": np.zeros((d_model, d_model)),
            "logit_scale": np.array([[1.0]]),
        }

    def frozen_names(self, visual=False, language=False, fusion=False) -> set:
        out: set[str] = set()
        if visual:
            out.update(PARAM_BLOCKS["visual"])
        if language:
            out.update(PARAM_BLOCKS["language"])
        if fusion:
            out.update(PARAM_BLOCKS["fusion"])
        return out

    def clone(self) -> "GroundingModel":
        other = GroundingModel.__new__(GroundingModel)
        other.vocabulary = self.vocabulary
        other.d_in = self.d_in
        other.d_model = self.d_model
        other.max_positions = self.max_positions
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other


@dataclass
class AlignmentScores:
    S: np.ndarray  # N x M logits
    cache: dict | None = None

    @property
    def token_features(self) -> np.ndarray:
        """Context-mixed token features P (M x d_model)."""
        return self.cache["H"]


@dataclass(frozen=True)
class LossReport:
    grounding_loss: float
    loc_loss: float = 0.0  # proposals coincide with candidate boxes here

    @property
    def total(self) -> float:
        return self.grounding_loss + self.loc_loss


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _segments(query: Query):
    """Per-token caption index and within-caption position; separators form
    singleton segments at position 0."""
    m_len = len(query.tokens)
    seg = np.zeros(m_len, dtype=np.int64)
    within = np.zeros(m_len, dtype=np.int64)
    n_items = len(query.items)
    extra = 0
    for flat in range(m_len):
        loc = query.token_map.get(flat)
        if loc is None:
            seg[flat] = n_items + extra
            extra += 1
        else:
            seg[flat] = loc[0]
            within[flat] = loc[1]
    return seg, within


def forward(model: GroundingModel, region_features, query: Query) -> AlignmentScores:
    """Alignment logits S = encoded regions x encoded tokens^T x logit_scale."""
    x = getattr(region_features, "features", region_features)
    x = np.asarray(x, dtype=float)
    if x.shape[1] != model.d_in:
        raise ValueError(f"feature width {x.shape[1]} does not match model d_in {model.d_in}")
    p = model.params
    o = x @ p["visual.weight"] + p["visual.bias"]
    tok_ids = model.vocabulary.ids(query.tokens)
    seg_ids, within = _segments(query)
    pos_ids = np.minimum(within, model.max_positions - 1)
    e = p["text.embeddings"][tok_ids]
    c = e + p["text.positions"][pos_ids]
    n_seg = int(seg_ids.max()) + 1 if len(seg_ids) else 0
    seg_sum = np.zeros((n_seg, model.d_model))
    np.add.at(seg_sum, seg_ids, c)
    seg_count = np.bincount(seg_ids, minlength=n_seg).astype(float)
    seg_mean = seg_sum / seg_count[:, None]
    mean_rows = seg_mean[seg_ids]
    c_prev = np.vstack([np.zeros((1, model.d_model)), c[:-1]])
    h = e + mean_rows @ p["mix.global"].T + c @ p["mix.self"].T + c_prev @ p["mix.prev"].T
    scale = p["logit_scale"][0, 0]
    logits_raw = o @ h.T
    cache = {"X": x, "O": o, "E": e, "C": c, "Cprev": c_prev, "mean_rows": mean_rows,
             "seg_ids": seg_ids, "seg_count": seg_count, "H": h,
             "tok_ids": tok_ids, "pos_ids": pos_ids, "A": logits_raw}
    return AlignmentScores(S=scale * logits_raw, cache=cache)


def alignment_loss(scores_matrix: np.ndarray, target: AlignmentTarget) -> float:
    """Mean masked elementwise binary cross-entropy of sigmoid(S) against T."""
    mask = target.loss_mask
    denom = mask.sum()
    if denom == 0:
        raise ValueError("empty loss mask: every column is a separator")
    s, t = scores_matrix, target.matrix
    return float((mask * (np.logaddexp(0.0, s) - t * s)).sum() / denom)


def loss_and_grad(model: GroundingModel, scores: AlignmentScores,
                  target: AlignmentTarget) -> tuple[LossReport, dict]:
    """Loss plus analytic gradients for every parameter block."""
    if scores.cache is None:
        raise ValueError("scores must come from forward() to carry gradients")
    loss = alignment_loss(scores.S, target)
    cache = scores.cache
    p = model.params
    mask, t = target.loss_mask, target.matrix
    denom = mask.sum()
    g = mask * (sigmoid(scores.S) - t) / denom

    scale = p["logit_scale"][0, 0]
    d_raw = scale * g
    d_o = d_raw @ cache["H"]
    d_h = d_raw.T @ cache["O"]
    seg_ids, seg_count = cache["seg_ids"], cache["seg_count"]

    d_mean_rows = d_h @ p["mix.global"]
    d_seg = np.zeros((len(seg_count), d_mean_rows.shape[1]))
    np.add.at(d_seg, seg_ids, d_mean_rows)
    d_c = d_h @ p["mix.self"]
    d_c[:-1] += (d_h @ p["mix.prev"])[1:]
    d_c += (d_seg / seg_count[:, None])[seg_ids]
    d_e = d_h + d_c

    grads = {
        "logit_scale": np.array([[float((g * cache["A"]).sum())]]),
        "visual.weight": cache["X"].T @ d_o,
        "visual.bias": d_o.sum(axis=0, keepdims=True),
        "mix.global": d_h.T @ cache["mean_rows"],
        "mix.self": d_h.T @ cache["C"],
        "mix.prev": d_h.T @ cache["Cprev"],
        "text.embeddings": np.zeros_like(p["text.embeddings"]),
        "text.positions": np.zeros_like(p["text.positions"]),
    }
    np.add.at(grads["text.embeddings"], cache["tok_ids"], d_e)
    np.add.at(grads["text.positions"], cache["pos_ids"], d_c)
    return LossReport(grounding_loss=loss), grads


@dataclass(frozen=True)
class TrainExample:
    features: np.ndarray  # N x d_in
    query: Query
    target: AlignmentTarget
    scene_id: int = -1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.1
    momentum: float = 0.9
    batch_size: int = 8
    freeze_visual: bool = False
    freeze_language: bool = False
    freeze_fusion: bool = False
    detection_mix_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.detection_mix_ratio <= 1.0:
            raise ValueError("detection_mix_ratio must lie in [0, 1]")


def train(model: GroundingModel, triplet_examples, detection_examples,
          config: TrainConfig) -> tuple[GroundingModel, list]:
    """Momentum-SGD training, deterministic for a fixed config and seed.

    Each batch draws from the detection corpus with probability
    detection_mix_ratio, else from the triplet corpus; frozen blocks are
    never touched. Returns the model and per-epoch (epoch, grounding, total)
    loss rows. Raises NumericError on a non-finite loss.
    """
    trip = list(triplet_examples)
    det = list(detection_examples)
    ratio = config.detection_mix_ratio
    if ratio > 0 and not det:
        raise ValueError("detection_mix_ratio > 0 requires a detection corpus")
    if ratio < 1 and not trip:
        raise ValueError("detection_mix_ratio < 1 requires a triplet corpus")
    frozen = model.frozen_names(config.freeze_visual, config.freeze_language,
                                config.freeze_fusion)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    history = []
    n_source = len(det) if ratio >= 1.0 else len(trip)
    n_batches = max(1, math.ceil(n_source / config.batch_size))

    for epoch in range(config.epochs):
        rng = np.random.default_rng(derive_seed(config.seed, "train-epoch", epoch))
        orders = {"trip": list(rng.permutation(len(trip))) if trip else [],
                  "det": list(rng.permutation(len(det))) if det else []}
        cursors = {"trip": 0, "det": 0}
        epoch_losses = []
        for _ in range(n_batches):
            use_det = rng.random() < ratio
            key, source = ("det", det) if use_det else ("trip", trip)
            batch = []
            for _k in range(min(config.batch_size, len(source))):
                if cursors[key] >= len(orders[key]):
                    orders[key] = list(rng.permutation(len(source)))
                    cursors[key] = 0
                batch.append(source[int(orders[key][cursors[key]])])
                cursors[key] += 1
            grad_sum: dict[str, np.ndarray] = {}
            loss_sum = 0.0
            for ex in batch:
                scores = forward(model, ex.features, ex.query)
                report, grads = loss_and_grad(model, scores, ex.target)
                if not np.isfinite(report.total):
                    raise NumericError(f"non-finite loss at epoch {epoch}")
                loss_sum += report.grounding_loss
                for name, grad in grads.items():
                    if name in grad_sum:
                        grad_sum[name] += grad
                    else:
                        grad_sum[name] = grad.copy()
            inv = 1.0 / len(batch)
            for name, grad in grad_sum.items():
                if name in frozen:
                    continue
                velocity[name] = config.momentum * velocity[name] + grad * inv
                model.params[name] -= config.learning_rate * velocity[name]
            epoch_losses.append(loss_sum * inv)
        mean_loss = float(np.mean(epoch_losses))
        if not np.isfinite(mean_loss):
            raise NumericError(f"non-finite loss at epoch {epoch}")
        history.append((epoch, mean_loss, mean_loss))
    return model, history


def _span_detections(sig, span_cols, proposals, query_text, score_threshold, agg="max"):
    block = sig[:, span_cols]
    per_region = block.mean(axis=1) if agg == "mean" else block.max(axis=1)
    dets = []
    for i, s in enumerate(per_region):
        if s > score_threshold:
            box = tuple(proposals[i]) if proposals else (0.0, 0.0, 1.0, 1.0)
            dets.append(Detection(i, box, float(s), query_text))
    dets.sort(key=lambda d: (-d.score, d.proposal_index))
    return dets


def predict(model: GroundingModel, region_features, query_text: str,
            score_threshold: float = 0.5, lexicon: Lexicon | None = None) -> list[Detection]:
    """Detections for a free-text query: per-region max sigmoid score over the
    query's subject-span tokens, above the threshold, sorted descending."""
    tree = parse(query_text, lexicon)
    query = Query(items=(CaptionItem(tuple(tree.tokens), "positive_description"),))
    scores = forward(model, region_features, query)
    sig = sigmoid(scores.S)
    span = list(range(tree.subject.start_token, tree.subject.end_token))
    return _span_detections(sig, span, getattr(region_features, "proposals", None),
                            query_text, score_threshold)


def predict_grouped(model: GroundingModel, region_features, query_texts,
                    score_threshold: float = 0.5, lexicon: Lexicon | None = None,
                    span: str = "caption", agg: str = "max") -> list[list[Detection]]:
    """Score several labels in one multi-caption prompt (separator-joined),
    matching the query format the model is trained on.

    With span="caption" a region's score for a label aggregates over all of
    that label's tokens (agg "mean" or "max"), the regime under which
    entity-blind models fire on every mentioned object; span="subject"
    restricts to the label's subject phrase as in predict().
    """
    trees = [parse(text, lexicon) for text in query_texts]
    items = tuple(CaptionItem(tuple(t.tokens), "positive_description") for t in trees)
    query = Query(items=items)
    scores = forward(model, region_features, query)
    sig = sigmoid(scores.S)
    proposals = getattr(region_features, "proposals", None)
    out = []
    for idx, (text, tree) in enumerate(zip(query_texts, trees)):
        off = query.item_offsets[idx]
        if span == "subject":
            cols = list(range(off + tree.subject.start_token, off + tree.subject.end_token))
        else:
            cols = list(query.item_columns(idx))
        out.append(_span_detections(sig, cols, proposals, text, score_threshold, agg=agg))
    return out


class GroundingDetector:
    """Adapter so a trained model satisfies the labeling detector interface."""

    def __init__(self, model: GroundingModel, lexicon: Lexicon | None = None):
        self.model = model
        self.lexicon = lexicon

    def detect(self, region_features, query_text: str) -> list[Detection]:
        return predict(self.model, region_features, query_text,
                       score_threshold=-1.0, lexicon=self.lexicon)


MAGIC = b"WSCL"
CHECKPOINT_VERSION = 1


def save_checkpoint(model: GroundingModel, path) -> None:
    """Binary checkpoint: magic, u16 version, then per block
    (u32 name length, name, u32 rows, u32 cols, little-endian float64 data)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<H", CHECKPOINT_VERSION))
        for name in sorted(model.params):
            arr = model.params[name]
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, vocabulary: Vocabulary) -> GroundingModel:
    blocks: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise ValueError(f"{path}: not a model checkpoint")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        while True:
            head = fh.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = fh.read(name_len).decode("utf-8")
            rows, cols = struct.unpack("<II", fh.read(8))
            data = np.frombuffer(fh.read(rows * cols * 8), dtype="<f8")
            blocks[name] = data.reshape(rows, cols).copy()
    missing = set(PARAM_BLOCKS["visual"]) - set(blocks)
    if missing:
        raise ValueError(f"{path}: missing parameter blocks {sorted(missing)}")
    if blocks["text.embeddings"].shape[0] != len(vocabulary):
        raise ValueError(f"{path}: embeddings cover {blocks['text.embeddings'].shape[0]} "
                         f"tokens but the vocabulary has {len(vocabulary)}")
    model = GroundingModel.__new__(GroundingModel)
    model.vocabulary = vocabulary
    model.d_in = blocks["visual.weight"].shape[0]
    model.d_model = blocks["visual.weight"].shape[1]
    model.max_positions = blocks["text.positions"].shape[0]
    model.params = blocks
    return model


def save_history(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,grounding_loss,total\n")
        for epoch, grounding, total in history:
            fh.write(f"{epoch},{grounding!r},{total!r}\n")


def load_history(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        next(fh)
        for line in fh:
            epoch, grounding, total = line.strip().split(",")
            out.append((int(epoch), float(grounding), float(total)))
    return out
