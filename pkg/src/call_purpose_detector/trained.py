"""
Trainable scorer: hashed n-gram text encoder with gated tabular fusion.

The text of an utterance (lowercased, at most 150 word tokens) is turned into
hashed 1-3 gram ids whose embeddings are averaged into a text vector ``h``.
Start time and call side are fused in with a learned gate::

    g = sigmoid(W_g [h; t] + b_g)
    f = h + g * (W_t t)
    p = softmax(W_o f + b_o)

Training is mini-batch gradient descent on cross-entropy, deterministic under
the seed. Models are stored in a small versioned binary container.
"""

import json
import logging
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
from sklearn.metrics import accuracy_score, f1_score, precision_score

from .errors import (
    ConfigurationError,
    DivergenceError,
    ModelFormatError,
    TrainingError,
)
from .model import LABEL_ORDER, Label, ScoreTriple, Utterance
from .patterns import PatternAnalysis
from .scoring import ALL_FEATURES, FeatureSet, TabularFeatures
from .tokenizer import word_tokens

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"CPDM"
MODEL_VERSION = 1
TABULAR_DIM = 2
N_CLASSES = len(LABEL_ORDER)
_ARRAY_NAMES = (
    "embeddings",
    "gate_weight",
    "gate_bias",
    "tabular_weight",
    "output_weight",
    "output_bias",
)


@dataclass(frozen=True)
class Hyperparameters:
    epochs: int = 4
    learning_rate: float = 0.5
    weight_decay: float = 1e-4
    batch_size: int = 16
    dim: int = 16
    hash_bits: int = 18
    max_ngram: int = 3
    max_tokens: int = 150
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.dim < 1:
            raise ConfigurationError("epochs, batch_size and dim must be positive")
        if not 1 <= self.hash_bits <= 30:
            raise ConfigurationError("hash_bits must lie in [1, 30]")
        if self.max_ngram < 1 or self.max_tokens < 1:
            raise ConfigurationError("max_ngram and max_tokens must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ConfigurationError("learning_rate must be > 0, weight_decay >= 0")


@dataclass(frozen=True)
class HashedNgramFeaturizer:
    """Maps text to hashed n-gram ids over at most ``max_tokens`` words."""

    hash_bits: int = 18
    max_ngram: int = 3
    max_tokens: int = 150

    @property
    def buckets(self) -> int:
        return 1 << self.hash_bits

    def ids(self, text: str) -> np.ndarray:
        tokens = [token.lower() for token in word_tokens(text)][: self.max_tokens]
        mask = self.buckets - 1
        found: List[int] = []
        for n in range(1, self.max_ngram + 1):
            for start in range(len(tokens) - n + 1):
                gram = " ".join(tokens[start : start + n])
                found.append(zlib.crc32(gram.encode("utf-8")) & mask)
        return np.array(found, dtype=np.int64)


@dataclass
class GatedParameters:
    """Weight blocks of the gated fusion classifier."""

    embeddings: np.ndarray
    gate_weight: np.ndarray
    gate_bias: np.ndarray
    tabular_weight: np.ndarray
    output_weight: np.ndarray
    output_bias: np.ndarray

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    @classmethod
    def initialize(
        cls, buckets: int, dim: int, rng: np.random.Generator
    ) -> "GatedParameters":
        return cls(
            embeddings=rng.normal(0.0, 0.5, size=(buckets, dim)),
            gate_weight=rng.normal(0.0, 0.1, size=(dim, dim + TABULAR_DIM)),
            gate_bias=np.zeros(dim),
            tabular_weight=rng.normal(0.0, 0.1, size=(dim, TABULAR_DIM)),
            output_weight=rng.normal(0.0, 0.1, size=(N_CLASSES, dim)),
            output_bias=np.zeros(N_CLASSES),
        )

    def arrays(self) -> List[Tuple[str, np.ndarray]]:
        return [(name, getattr(self, name)) for name in _ARRAY_NAMES]

    def check_shapes(self) -> None:
        dim = self.dim
        expected = {
            "gate_weight": (dim, dim + TABULAR_DIM),
            "gate_bias": (dim,),
            "tabular_weight": (dim, TABULAR_DIM),
            "output_weight": (N_CLASSES, dim),
            "output_bias": (N_CLASSES,),
        }
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ConfigurationError(
                    f"{name} has shape {actual}, expected {shape}"
                )


def _sigmoid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * values))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def gated_fuse(
    text_vector: np.ndarray, tabular: np.ndarray, params: GatedParameters
) -> np.ndarray:
    """Fuse a text vector with tabular features through the learned gate."""
    text_vector = np.asarray(text_vector, dtype=np.float64)
    tabular = np.asarray(tabular, dtype=np.float64)
    dim = params.dim
    if text_vector.shape[-1] != dim:
        raise ConfigurationError(
            f"text vector has dimension {text_vector.shape[-1]}, model expects {dim}"
        )
    if tabular.shape[-1] != TABULAR_DIM:
        raise ConfigurationError(
            f"tabular vector has dimension {tabular.shape[-1]}, "
            f"model expects {TABULAR_DIM}"
        )
    joined = np.concatenate([text_vector, tabular], axis=-1)
    gate = _sigmoid(joined @ params.gate_weight.T + params.gate_bias)
    return text_vector + gate * (tabular @ params.tabular_weight.T)


@dataclass
class TrainingBatch:
    ids: List[np.ndarray]
    tabular: np.ndarray
    targets: np.ndarray


@dataclass
class _Forward:
    text: np.ndarray
    joined: np.ndarray
    gate: np.ndarray
    projected: np.ndarray
    fused: np.ndarray
    probabilities: np.ndarray


def _encode_text(
    ids_list: Sequence[np.ndarray], embeddings: np.ndarray
) -> np.ndarray:
    text = np.zeros((len(ids_list), embeddings.shape[1]))
    for row, ids in enumerate(ids_list):
        if len(ids):
            text[row] = embeddings[ids].mean(axis=0)
    return text


def _forward(params: GatedParameters, batch: TrainingBatch) -> _Forward:
    text = _encode_text(batch.ids, params.embeddings)
    joined = np.concatenate([text, batch.tabular], axis=1)
    gate = _sigmoid(joined @ params.gate_weight.T + params.gate_bias)
    projected = batch.tabular @ params.tabular_weight.T
    fused = text + gate * projected
    logits = fused @ params.output_weight.T + params.output_bias
    return _Forward(text, joined, gate, projected, fused, _softmax(logits))


def _loss(forward: _Forward, targets: np.ndarray) -> float:
    picked = forward.probabilities[np.arange(len(targets)), targets]
    return float(-np.mean(np.log(np.clip(picked, 1e-300, None))))


def loss_and_gradients(
    params: GatedParameters, batch: TrainingBatch
) -> Tuple[float, Dict[str, np.ndarray], np.ndarray]:
    """Mean cross-entropy, dense gradients and per-example text gradients."""
    forward = _forward(params, batch)
    size = len(batch.targets)
    one_hot = np.zeros_like(forward.probabilities)
    one_hot[np.arange(size), batch.targets] = 1.0
    d_logits = (forward.probabilities - one_hot) / size

    d_fused = d_logits @ params.output_weight
    d_projected = d_fused * forward.gate
    d_gate_in = d_fused * forward.projected * forward.gate * (1.0 - forward.gate)
    d_text = d_fused + d_gate_in @ params.gate_weight[:, : params.dim]

    gradients = {
        "output_weight": d_logits.T @ forward.fused,
        "output_bias": d_logits.sum(axis=0),
        "tabular_weight": d_projected.T @ batch.tabular,
        "gate_weight": d_gate_in.T @ forward.joined,
        "gate_bias": d_gate_in.sum(axis=0),
    }
    return _loss(forward, batch.targets), gradients, d_text


def _apply_step(
    params: GatedParameters,
    batch: TrainingBatch,
    gradients: Dict[str, np.ndarray],
    d_text: np.ndarray,
    hyper: Hyperparameters,
) -> None:
    rate = hyper.learning_rate
    for name, gradient in gradients.items():
        weights = getattr(params, name)
        if name.endswith("weight"):
            gradient = gradient + hyper.weight_decay * weights
        weights -= rate * gradient

    rows: List[np.ndarray] = []
    updates: List[np.ndarray] = []
    for ids, grad in zip(batch.ids, d_text):
        if len(ids):
            rows.append(ids)
            updates.append(np.repeat((grad / len(ids))[None, :], len(ids), axis=0))
    if rows:
        np.add.at(params.embeddings, np.concatenate(rows), -rate * np.vstack(updates))


class LabeledExample(Protocol):
    @property
    def text(self) -> str: ...

    @property
    def label(self) -> Label: ...

    @property
    def tabular(self) -> TabularFeatures: ...


@dataclass
class TrainedScorer:
    """A trained gated-fusion classifier behind the Scorer contract."""

    featurizer: HashedNgramFeaturizer
    params: GatedParameters
    features: FeatureSet = ALL_FEATURES
    hyperparameters: Hyperparameters = field(default_factory=Hyperparameters)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def probabilities(self, text: str, tabular: TabularFeatures) -> np.ndarray:
        batch = TrainingBatch(
            ids=[self.featurizer.ids(text)],
            tabular=tabular.as_array(self.features)[None, :],
            targets=np.zeros(1, dtype=np.int64),
        )
        return _forward(self.params, batch).probabilities[0]

    def score_text(self, text: str, tabular: TabularFeatures) -> ScoreTriple:
        probabilities = self.probabilities(text, tabular)
        return ScoreTriple.from_probabilities(probabilities / probabilities.sum())

    def score(
        self,
        utterance: Utterance,
        analysis: PatternAnalysis,
        tabular: TabularFeatures,
    ) -> ScoreTriple:
        return self.score_text(utterance.text, tabular)

    def predict(self, examples: Sequence[LabeledExample]) -> List[Label]:
        batch = _make_batch(self.featurizer, examples, self.features)
        columns = _forward(self.params, batch).probabilities.argmax(axis=1)
        return [LABEL_ORDER[int(column)] for column in columns]


def _make_batch(
    featurizer: HashedNgramFeaturizer,
    examples: Sequence[LabeledExample],
    features: FeatureSet,
) -> TrainingBatch:
    return TrainingBatch(
        ids=[featurizer.ids(example.text) for example in examples],
        tabular=np.array(
            [example.tabular.as_array(features) for example in examples]
        ).reshape(len(examples), TABULAR_DIM),
        targets=np.array(
            [example.label.column for example in examples], dtype=np.int64
        ),
    )


def train(
    examples: Sequence[LabeledExample],
    hyperparameters: Optional[Hyperparameters] = None,
    features: FeatureSet = ALL_FEATURES,
) -> TrainedScorer:
    """Fit a TrainedScorer; identical inputs and seed give identical weights."""
    hyper = hyperparameters or Hyperparameters()
    labels = {example.label for example in examples}
    if len(labels) < N_CLASSES:
        missing = sorted(label.value for label in set(LABEL_ORDER) - labels)
        raise TrainingError(
            f"training data must contain every label; missing: {', '.join(missing)}"
        )

    featurizer = HashedNgramFeaturizer(
        hyper.hash_bits, hyper.max_ngram, hyper.max_tokens
    )
    rng = np.random.default_rng(hyper.seed)
    params = GatedParameters.initialize(featurizer.buckets, hyper.dim, rng)
    data = _make_batch(featurizer, examples, features)

    step = 0
    loss = float("nan")
    for epoch in range(hyper.epochs):
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        for start in range(0, len(order), hyper.batch_size):
            chosen = order[start : start + hyper.batch_size]
            batch = TrainingBatch(
                ids=[data.ids[i] for i in chosen],
                tabular=data.tabular[chosen],
                targets=data.targets[chosen],
            )
            loss, gradients, d_text = loss_and_gradients(params, batch)
            step += 1
            if not math.isfinite(loss):
                raise DivergenceError(step, loss)
            _apply_step(params, batch, gradients, d_text, hyper)
            epoch_loss += loss * len(chosen)
        logger.info(
            "epoch %d/%d mean loss %.4f",
            epoch + 1,
            hyper.epochs,
            epoch_loss / len(order),
        )

    metadata = {
        "examples": len(examples),
        "steps": step,
        "final_loss": round(loss, 8),
    }
    return TrainedScorer(featurizer, params, features, hyper, metadata)


def _header(scorer: TrainedScorer) -> Dict[str, Any]:
    return {
        "featurizer": asdict(scorer.featurizer),
        "features": asdict(scorer.features),
        "hyperparameters": asdict(scorer.hyperparameters),
        "metadata": scorer.metadata,
        "arrays": [
            [name, list(array.shape)] for name, array in scorer.params.arrays()
        ],
    }


def model_bytes(scorer: TrainedScorer) -> bytes:
    """Serialize a scorer; equal scorers give byte-identical output."""
    header = json.dumps(_header(scorer), sort_keys=True).encode("utf-8")
    parts = [MODEL_MAGIC, struct.pack("<HI", MODEL_VERSION, len(header)), header]
    for _, array in scorer.params.arrays():
        parts.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    return b"".join(parts)


def save_model(scorer: TrainedScorer, path: Union[str, Path]) -> None:
    Path(path).write_bytes(model_bytes(scorer))
    logger.info("Saved model to %s", path)


def model_from_bytes(data: bytes) -> TrainedScorer:
    prefix = len(MODEL_MAGIC) + struct.calcsize("<HI")
    if len(data) < prefix or data[: len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise ModelFormatError("not a call-purpose model file")
    version, header_length = struct.unpack("<HI", data[len(MODEL_MAGIC) : prefix])
    if version != MODEL_VERSION:
        raise ModelFormatError(
            f"model file version {version} is not supported "
            f"(expected {MODEL_VERSION})"
        )
    try:
        header = json.loads(data[prefix : prefix + header_length].decode("utf-8"))
        offset = prefix + header_length
        arrays: Dict[str, np.ndarray] = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            end = offset + 8 * count
            if end > len(data):
                raise ModelFormatError(f"model file truncated in array '{name}'")
            block = np.frombuffer(data[offset:end], dtype="<f8").astype(np.float64)
            arrays[name] = block.reshape(shape)
            offset = end
        if offset != len(data):
            raise ModelFormatError("model file has trailing bytes")
        params = GatedParameters(**{name: arrays[name] for name in _ARRAY_NAMES})
        scorer = TrainedScorer(
            featurizer=HashedNgramFeaturizer(**header["featurizer"]),
            params=params,
            features=FeatureSet(**header["features"]),
            hyperparameters=Hyperparameters(**header["hyperparameters"]),
            metadata=header["metadata"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model file: {exc}") from exc
    params.check_shapes()
    if params.embeddings.shape[0] != scorer.featurizer.buckets:
        raise ModelFormatError("embedding table does not match the hash size")
    return scorer


def load_model(path: Union[str, Path]) -> TrainedScorer:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    return model_from_bytes(data)


@dataclass(frozen=True)
class UtteranceMetrics:
    """Utterance-level quality of a scorer on labeled rows."""

    accuracy: float
    macro_f1: float
    positive_precision: float
    count: int


def label_metrics(
    gold: Sequence[Label], predicted: Sequence[Label]
) -> UtteranceMetrics:
    """Accuracy, macro-F1 over all three labels and positive-class precision."""
    if not gold:
        raise TrainingError("cannot evaluate a scorer on zero rows")
    y_true = [label.value for label in gold]
    y_pred = [label.value for label in predicted]
    labels = [label.value for label in LABEL_ORDER]
    positive = precision_score(
        y_true, y_pred, labels=[Label.POSITIVE.value], average=None, zero_division=0
    )
    return UtteranceMetrics(
        accuracy=float(accuracy_score(y_true, y_pred)),
        macro_f1=float(
            f1_score(y_true, y_pred, labels=labels, average="macro", zero_division=0)
        ),
        positive_precision=float(positive[0]),
        count=len(gold),
    )


def evaluate_utterances(
    scorer: TrainedScorer, examples: Sequence[LabeledExample]
) -> UtteranceMetrics:
    """Accuracy, macro-F1 and positive-class precision on labeled rows."""
    gold = [example.label for example in examples]
    return label_metrics(gold, scorer.predict(examples) if examples else [])


def majority_baseline(examples: Sequence[LabeledExample]) -> UtteranceMetrics:
    """Metrics of always predicting the most frequent label."""
    gold = [example.label for example in examples]
    if not gold:
        raise TrainingError("cannot compute a baseline on zero rows")
    majority = max(LABEL_ORDER, key=gold.count)
    return label_metrics(gold, [majority] * len(gold))
