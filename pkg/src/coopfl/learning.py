"""Minimal MLP training engine: softmax cross-entropy, mini-batch SGD, segmentation.

All parameter math runs in float64 so equivalence tests are bit-stable; wire size
is accounted elsewhere at 32 bits per parameter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import LocalDataset, SampleSet
from .errors import SegmentationError, ShapeError

_TRAIN_STREAM_TAG = 0x7261


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    shape: tuple[int, ...]

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))


@dataclass(frozen=True)
class ModelParams:
    values: np.ndarray  # flat float64 vector
    layout: tuple[LayoutEntry, ...]

    def __post_init__(self):
        if len(self.values) != sum(e.size for e in self.layout):
            raise ShapeError("layout does not cover the parameter vector")

    @property
    def n_params(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ModelSegment:
    range: tuple[int, int]  # [start, stop) over the flat vector
    values: np.ndarray


@dataclass(frozen=True)
class SegmentSpec:
    boundaries: tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    local_epochs: int
    batch_size: int
    seed: int

    def __post_init__(self):
        # learning_rate 0 is allowed: it short-circuits the update but still counts steps
        if self.learning_rate < 0:
            raise ShapeError("learning_rate must be >= 0")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ShapeError("local_epochs and batch_size must be >= 1")


@dataclass(frozen=True)
class TrainStats:
    tau: int  # SGD steps taken
    samples_processed: int
    cycles_used: float


def layer_sizes_of(layout: Sequence[LayoutEntry]) -> list[int]:
    sizes = [layout[0].shape[0]]
    for entry in layout:
        if len(entry.shape) == 2:
            sizes.append(entry.shape[1])
    return sizes


def init_model(layer_sizes: Sequence[int], seed: int) -> ModelParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    if len(layer_sizes) < 2 or any(s <= 0 for s in layer_sizes):
        raise ShapeError("need at least two positive layer sizes")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    chunks = []
    layout = []
    for i, (fan_in, fan_out) in enumerate(zip(layer_sizes, layer_sizes[1:])):
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
        layout.append(LayoutEntry(f"w{i}", (fan_in, fan_out)))
        layout.append(LayoutEntry(f"b{i}", (fan_out,)))
    return ModelParams(np.concatenate(chunks), tuple(layout))


def _unpack(model: ModelParams) -> list[tuple[np.ndarray, np.ndarray]]:
    layers = []
    offset = 0
    entries = iter(model.layout)
    for w_entry in entries:
        b_entry = next(entries)
        w = model.values[offset:offset + w_entry.size].reshape(w_entry.shape)
        offset += w_entry.size
        b = model.values[offset:offset + b_entry.size]
        offset += b_entry.size
        layers.append((w, b))
    return layers


def _forward(layers, x: np.ndarray):
    """Returns (activations per layer input, pre-activations, logits)."""
    acts = [x]
    zs = []
    a = x
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        zs.append(z)
        if i < len(layers) - 1:
            a = np.maximum(z, 0.0)
            acts.append(a)
    return acts, zs, zs[-1]


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_dims(model: ModelParams, feature_dim: int, num_classes: int):
    sizes = layer_sizes_of(model.layout)
    if sizes[0] != feature_dim:
        raise ShapeError(f"model expects {sizes[0]} features, dataset has {feature_dim}")
    if sizes[-1] < num_classes:
        raise ShapeError(f"model outputs {sizes[-1]} classes, dataset needs {num_classes}")


def gradient(model: ModelParams, batch: SampleSet) -> np.ndarray:
    """Analytic backprop gradient of the mean cross-entropy over the batch."""
    if len(batch) == 0:
        raise ShapeError("gradient of an empty batch")
    _check_dims(model, batch.feature_dim, batch.num_classes)
    layers = _unpack(model)
    acts, zs, logits = _forward(layers, batch.features)
    probs = _softmax(logits)
    n = len(batch)
    delta = probs.copy()
    delta[np.arange(n), batch.labels] -= 1.0
    delta /= n
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ w.T) * (zs[i - 1] > 0.0)
    return np.concatenate([np.concatenate([gw.ravel(), gb]) for gw, gb in grads])


def evaluate(model: ModelParams, dataset: SampleSet) -> tuple[float, float]:
    """(mean cross-entropy, top-1 accuracy) over the dataset."""
    if len(dataset) == 0:
        raise ShapeError("cannot evaluate on an empty dataset")
    _check_dims(model, dataset.feature_dim, dataset.num_classes)
    layers = _unpack(model)
    _, _, logits = _forward(layers, dataset.features)
    shifted = logits - logits.max(axis=1, keepdims=True)
    logprobs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = len(dataset)
    loss = float(-logprobs[np.arange(n), dataset.labels].mean())
    accuracy = float((logits.argmax(axis=1) == dataset.labels).mean())
    return loss, accuracy


def train_steps_per_epoch(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)


def local_train(model: ModelParams, dataset: LocalDataset, cfg: TrainConfig,
                round_index: int = 0,
                cycles_per_sample_per_step: float = 1.0) -> tuple[ModelParams, TrainStats]:
    """Mini-batch SGD on softmax cross-entropy.

    Batch order comes from a shuffle stream keyed by (cfg.seed, owner, round), so
    a run is reproducible regardless of the order devices are trained in.
    """
    n = dataset.size
    if n == 0:
        raise ShapeError(f"node {dataset.owner} has no data to train on")
    _check_dims(model, dataset.data.feature_dim, dataset.data.num_classes)
    rng = np.random.default_rng(
        np.random.SeedSequence([int(cfg.seed), _TRAIN_STREAM_TAG, int(dataset.owner),
                                int(round_index)])
    )
    values = model.values.copy()
    steps_per_epoch = train_steps_per_epoch(n, cfg.batch_size)
    for _ in range(cfg.local_epochs):
        order = rng.permutation(n)
        if cfg.learning_rate == 0.0:
            continue
        current = ModelParams(values, model.layout)
        for b in range(steps_per_epoch):
            rows = order[b * cfg.batch_size:(b + 1) * cfg.batch_size]
            grad = gradient(current, dataset.data.take(rows))
            values -= cfg.learning_rate * grad
    tau = cfg.local_epochs * steps_per_epoch
    samples_processed = cfg.local_epochs * n
    stats = TrainStats(tau, samples_processed,
                       cycles_per_sample_per_step * samples_processed)
    return ModelParams(values, model.layout), stats


def default_segment_spec(layout: Sequence[LayoutEntry]) -> SegmentSpec:
    """One segment per layer, grouping each layer's weights with its bias."""
    bounds = []
    offset = 0
    entries = list(layout)
    for i in range(0, len(entries), 2):
        size = entries[i].size + entries[i + 1].size
        bounds.append((offset, offset + size))
        offset += size
    return SegmentSpec(tuple(bounds))


def _validate_spec(spec: SegmentSpec, layout: Sequence[LayoutEntry], total: int):
    edges = {0}
    offset = 0
    for entry in layout:
        offset += entry.size
        edges.add(offset)
    expected_start = 0
    for start, stop in spec.boundaries:
        if start != expected_start:
            raise SegmentationError(f"segment [{start}, {stop}) leaves a gap at {expected_start}")
        if stop <= start:
            raise SegmentationError(f"segment [{start}, {stop}) is empty")
        if start not in edges or stop not in edges:
            raise SegmentationError(
                f"segment [{start}, {stop}) does not align with layout boundaries"
            )
        expected_start = stop
    if expected_start != total:
        raise SegmentationError(f"segments cover [0, {expected_start}) of [0, {total})")


def segment_model(model: ModelParams, spec: SegmentSpec) -> list[ModelSegment]:
    _validate_spec(spec, model.layout, len(model.values))
    return [ModelSegment((s, e), model.values[s:e].copy()) for s, e in spec.boundaries]


def reassemble_model(segments: Sequence[ModelSegment],
                     layout: Sequence[LayoutEntry]) -> ModelParams:
    """Inverse of segment_model; segment order does not matter."""
    total = sum(e.size for e in layout)
    values = np.empty(total)
    covered = 0
    for seg in sorted(segments, key=lambda s: s.range[0]):
        start, stop = seg.range
        if start != covered:
            raise SegmentationError(
                f"segment ranges leave a gap or overlap at [{covered}, {start})"
            )
        if stop - start != len(seg.values):
            raise SegmentationError(f"segment [{start}, {stop}) carries {len(seg.values)} values")
        values[start:stop] = seg.values
        covered = stop
    if covered != total:
        raise SegmentationError(f"missing segment for range [{covered}, {total})")
    return ModelParams(values, tuple(layout))
