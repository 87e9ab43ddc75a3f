"""Datasets: synthetic generation, non-IID partitioning, stratification, offload selection."""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, PartitionError, SelectionError, TransferError

# Flat binary dataset format: header of four u32 little-endian words
# (magic, sample count, feature dim, class count), then row-major f32 features,
# then i32 labels.
DATASET_MAGIC = 0x54455344  # b"DSET" little-endian

BITS_PER_FEATURE = 32


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class SampleSet:
    """Column-oriented store for labeled samples; `ids` are globally unique."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64
    ids: np.ndarray  # (n,) int64
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2 or len(self.labels) != len(self.features):
            raise ConfigError("features must be (n, d) with one label per row")
        if len(self.ids) != len(self.features):
            raise ConfigError("one id per sample required")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ConfigError("labels must lie in [0, num_classes)")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i], int(self.labels[i]))

    def take(self, indices: np.ndarray) -> "SampleSet":
        return SampleSet(
            self.features[indices], self.labels[indices], self.ids[indices], self.num_classes
        )

    @staticmethod
    def from_samples(samples: Sequence[Sample], num_classes: int,
                     ids: Sequence[int] | None = None) -> "SampleSet":
        feats = np.asarray([s.features for s in samples], dtype=np.float64)
        labels = np.asarray([s.label for s in samples], dtype=np.int64)
        if ids is None:
            ids = np.arange(len(samples), dtype=np.int64)
        return SampleSet(feats, labels, np.asarray(ids, dtype=np.int64), num_classes)


@dataclass(frozen=True)
class LocalDataset:
    """Samples owned by one node. Ids stay unique network-wide, so a sample
    can only ever live in one place (offloads move, never copy)."""

    owner: int
    data: SampleSet

    @property
    def size(self) -> int:
        return len(self.data)

    @property
    def sample_ids(self) -> np.ndarray:
        return self.data.ids

    def label_histogram(self) -> np.ndarray:
        return np.bincount(self.data.labels, minlength=self.data.num_classes)


@dataclass(frozen=True)
class Stratum:
    key: int
    member_ids: tuple[int, ...]
    centroid: np.ndarray


@dataclass(frozen=True)
class PartitionSpec:
    scheme: str  # "dirichlet" | "shards"
    seed: int
    alpha: float | None = None
    shards_per_device: int | None = None

    def __post_init__(self):
        if self.scheme == "dirichlet":
            if self.alpha is None or self.alpha <= 0:
                raise ConfigError("dirichlet partition requires alpha > 0")
        elif self.scheme == "shards":
            if self.shards_per_device is None or self.shards_per_device < 1:
                raise ConfigError("shards partition requires shards_per_device >= 1")
        else:
            raise ConfigError(f"unknown partition scheme '{self.scheme}'")


def sample_payload_bits(feature_dim: int) -> int:
    # 32-bit features plus a 32-bit label per sample
    return BITS_PER_FEATURE * (feature_dim + 1)


def make_gaussian_mixture(num_classes: int, feature_dim: int, n_samples: int,
                          class_separation: float, covariance_scale: float,
                          seed: int, stream: int = 0) -> SampleSet:
    """Balanced synthetic pool: one spherical Gaussian per class, means on a circle
    of radius class_separation in the first two feature dimensions."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, stream]))
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    means = np.zeros((num_classes, feature_dim))
    means[:, 0] = class_separation * np.cos(angles)
    if feature_dim > 1:
        means[:, 1] = class_separation * np.sin(angles)
    labels = np.arange(n_samples, dtype=np.int64) % num_classes
    noise = rng.normal(0.0, covariance_scale, size=(n_samples, feature_dim))
    features = means[labels] + noise
    ids = np.arange(n_samples, dtype=np.int64)
    return SampleSet(features, labels, ids, num_classes)


def save_dataset_bin(path: str | Path, data: SampleSet) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack("<IIII", DATASET_MAGIC, len(data), data.feature_dim,
                            data.num_classes))
        f.write(data.features.astype("<f4").tobytes(order="C"))
        f.write(data.labels.astype("<i4").tobytes())


def load_dataset_bin(path: str | Path) -> SampleSet:
    """Load the flat binary dataset format; ids are assigned 0..n-1 in file order."""
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ConfigError(f"{path}: truncated dataset header")
    magic, count, dim, classes = struct.unpack_from("<IIII", raw, 0)
    if magic != DATASET_MAGIC:
        raise ConfigError(f"{path}: bad magic 0x{magic:08x}")
    expected = 16 + count * dim * 4 + count * 4
    if len(raw) != expected:
        raise ConfigError(f"{path}: expected {expected} bytes, found {len(raw)}")
    feats = np.frombuffer(raw, dtype="<f4", count=count * dim, offset=16)
    labels = np.frombuffer(raw, dtype="<i4", count=count, offset=16 + count * dim * 4)
    features = feats.reshape(count, dim).astype(np.float64)
    labels64 = labels.astype(np.int64)
    if count and (labels64.min() < 0 or labels64.max() >= classes):
        raise ConfigError(f"{path}: label outside [0, {classes})")
    return SampleSet(features, labels64, np.arange(count, dtype=np.int64), classes)


def _proportional_counts(proportions: np.ndarray, total: int) -> np.ndarray:
    """Split `total` into integer bins following `proportions` (cumulative flooring)."""
    bounds = np.floor(np.cumsum(proportions) * total + 1e-9).astype(np.int64)
    bounds[-1] = total
    counts = np.diff(np.concatenate(([0], bounds)))
    return counts


def partition_noniid(pool: SampleSet, devices: Sequence[int],
                     spec: PartitionSpec) -> dict[int, LocalDataset]:
    """Assign every pool sample to exactly one device, deterministically per seed.

    dirichlet: per class, device shares drawn from Dirichlet(alpha).
    shards: samples sorted by label, cut into len(devices)*shards_per_device
    contiguous shards, dealt shards_per_device each.

    Devices are guaranteed at least one sample (the largest holder donates when a
    draw leaves someone empty), hence the pool-smaller-than-devices error.
    """
    if len(pool) == 0:
        raise PartitionError("empty sample pool")
    if not devices:
        raise PartitionError("no devices to partition across")
    if len(pool) < len(devices):
        raise PartitionError(
            f"cannot give {len(devices)} devices at least one of {len(pool)} samples"
        )
    devices = sorted(devices)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed]))
    assigned: dict[int, list[np.ndarray]] = {d: [] for d in devices}

    if spec.scheme == "dirichlet":
        for cls in range(pool.num_classes):
            idx = np.flatnonzero(pool.labels == cls)
            if len(idx) == 0:
                continue
            idx = idx[rng.permutation(len(idx))]
            shares = rng.dirichlet(np.full(len(devices), spec.alpha))
            counts = _proportional_counts(shares, len(idx))
            start = 0
            for dev, cnt in zip(devices, counts):
                assigned[dev].append(idx[start:start + cnt])
                start += cnt
    else:  # shards
        order = np.lexsort((pool.ids, pool.labels))
        n_shards = len(devices) * spec.shards_per_device
        if len(pool) < n_shards:
            raise PartitionError(
                f"pool of {len(pool)} cannot fill {n_shards} shards"
            )
        shards = np.array_split(order, n_shards)
        deal = rng.permutation(n_shards)
        for i, dev in enumerate(devices):
            mine = sorted(deal[i * spec.shards_per_device:(i + 1) * spec.shards_per_device])
            assigned[dev].extend(shards[s] for s in mine)

    sizes = {d: sum(len(a) for a in assigned[d]) for d in devices}
    while min(sizes.values()) == 0:
        empty = min(d for d in devices if sizes[d] == 0)
        donor = max(devices, key=lambda d: (sizes[d], -d))
        chunks = assigned[donor]
        last = chunks[-1]
        chunks[-1] = last[:-1]
        assigned[empty].append(last[-1:])
        sizes[donor] -= 1
        sizes[empty] += 1

    result = {}
    for dev in devices:
        idx = np.concatenate([a for a in assigned[dev] if len(a)]) if sizes[dev] else (
            np.empty(0, dtype=np.int64))
        result[dev] = LocalDataset(dev, pool.take(idx))
    return result


def stratify(dataset: LocalDataset, criterion: str = "by_label") -> list[Stratum]:
    """Cluster a local dataset into strata. Centroids are the per-stratum feature
    means, computed once; selection never updates them."""
    if criterion != "by_label":
        raise ConfigError(f"unknown stratification criterion '{criterion}'")
    if dataset.size == 0:
        raise SelectionError("cannot stratify an empty dataset")
    strata = []
    for key in sorted(np.unique(dataset.data.labels)):
        mask = dataset.data.labels == key
        members = dataset.data.ids[mask]
        centroid = dataset.data.features[mask].mean(axis=0)
        strata.append(Stratum(int(key), tuple(int(i) for i in members), centroid))
    return strata


def select_offload_set(dataset: LocalDataset, strata: Sequence[Stratum], k: int) -> list[int]:
    """Pick k representative sample ids: repeatedly take, from the currently most
    populous stratum (tie: smallest key), the unselected member closest to that
    stratum's fixed centroid (tie: smallest id)."""
    if k < 0 or k > dataset.size:
        raise SelectionError(f"cannot select {k} of {dataset.size} samples")
    by_id = {int(sid): i for i, sid in enumerate(dataset.data.ids)}
    remaining: dict[int, list[tuple[float, int]]] = {}
    for stratum in strata:
        entries = []
        for sid in stratum.member_ids:
            row = by_id[sid]
            dist = float(np.linalg.norm(dataset.data.features[row] - stratum.centroid))
            entries.append((dist, sid))
        # descending so the best candidate pops off the tail
        entries.sort(reverse=True)
        remaining[stratum.key] = entries

    chosen: list[int] = []
    for _ in range(k):
        key = max(remaining, key=lambda s: (len(remaining[s]), -s))
        _, sid = remaining[key].pop()
        if not remaining[key]:
            del remaining[key]
        chosen.append(sid)
    return chosen


def apply_data_transfer(sender: LocalDataset, receiver: LocalDataset,
                        ids: Sequence[int]) -> tuple[LocalDataset, LocalDataset]:
    """Move (never copy) the given samples from sender to receiver."""
    sender_ids = set(int(i) for i in sender.data.ids)
    for sid in ids:
        if int(sid) not in sender_ids:
            raise TransferError(f"sample {int(sid)} is not owned by node {sender.owner}")
    if len(ids) == 0:
        return sender, receiver
    id_list = [int(i) for i in ids]
    pos = {int(sid): i for i, sid in enumerate(sender.data.ids)}
    moved_rows = np.asarray([pos[i] for i in id_list], dtype=np.int64)
    keep_mask = np.ones(sender.size, dtype=bool)
    keep_mask[moved_rows] = False
    moved = sender.data.take(moved_rows)
    kept = sender.data.take(np.flatnonzero(keep_mask))
    merged = SampleSet(
        np.concatenate([receiver.data.features, moved.features]),
        np.concatenate([receiver.data.labels, moved.labels]),
        np.concatenate([receiver.data.ids, moved.ids]),
        receiver.data.num_classes,
    )
    return LocalDataset(sender.owner, kept), LocalDataset(receiver.owner, merged)


def empty_dataset(owner: int, feature_dim: int, num_classes: int) -> LocalDataset:
    data = SampleSet(
        np.empty((0, feature_dim)), np.empty(0, dtype=np.int64),
        np.empty(0, dtype=np.int64), num_classes,
    )
    return LocalDataset(owner, data)
