import numpy as np
import pytest

from conftest import make_dataset
from coopfl.data import (LocalDataset, PartitionSpec, SampleSet, apply_data_transfer,
                         load_dataset_bin, make_gaussian_mixture, partition_noniid,
                         sample_payload_bits, save_dataset_bin, select_offload_set,
                         stratify)
from coopfl.errors import ConfigError, PartitionError, SelectionError, TransferError


def balanced_pool(n=1000, classes=5, dim=3, seed=0):
    return make_gaussian_mixture(classes, dim, n, 3.0, 1.0, seed)


def total_variation(p, q):
    return 0.5 * np.abs(p - q).sum()


def reference_selection(dataset, strata, k):
    """Independent re-statement of the selection rule with plain dict bookkeeping."""
    feats = {int(i): f for i, f in zip(dataset.data.ids, dataset.data.features)}
    pools = {s.key: set(s.member_ids) for s in strata}
    centroids = {s.key: s.centroid for s in strata}
    out = []
    for _ in range(k):
        sizes = {key: len(ids) for key, ids in pools.items() if ids}
        top = max(sizes.values())
        key = min(k2 for k2, n in sizes.items() if n == top)
        best = min(pools[key],
                   key=lambda sid: (float(np.linalg.norm(feats[sid] - centroids[key])), sid))
        pools[key].discard(best)
        out.append(best)
    return out


class TestPartition:
    def test_single_device_gets_everything(self):
        pool = balanced_pool(50)
        parts = partition_noniid(pool, [3], PartitionSpec("dirichlet", 0, alpha=1.0))
        assert set(parts) == {3}
        assert parts[3].size == 50
        assert sorted(parts[3].sample_ids) == sorted(pool.ids)

    def test_high_alpha_is_nearly_uniform(self):
        pool = balanced_pool(1000, classes=5)
        parts = partition_noniid(pool, list(range(10)),
                                 PartitionSpec("dirichlet", 21, alpha=1e6))
        for dev, ds in parts.items():
            hist = ds.label_histogram() / ds.size
            assert np.abs(hist - 0.2).max() <= 0.05, f"device {dev}: {hist}"

    def test_shards_one_per_device_single_label(self):
        feats = np.arange(8, dtype=np.float64)[:, None]
        labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
        pool = SampleSet(feats, labels, np.arange(8, dtype=np.int64), 2)
        parts = partition_noniid(pool, [0, 1],
                                 PartitionSpec("shards", 3, shards_per_device=1))
        for ds in parts.values():
            assert len(np.unique(ds.data.labels)) == 1
        labels_seen = {int(ds.data.labels[0]) for ds in parts.values()}
        assert labels_seen == {0, 1}

    def test_every_sample_assigned_exactly_once(self):
        pool = balanced_pool(333)
        parts = partition_noniid(pool, [0, 1, 2, 3],
                                 PartitionSpec("dirichlet", 9, alpha=0.3))
        all_ids = np.concatenate([p.sample_ids for p in parts.values()])
        assert sorted(all_ids) == sorted(pool.ids)

    def test_no_device_left_empty(self):
        pool = balanced_pool(40, classes=2)
        parts = partition_noniid(pool, list(range(12)),
                                 PartitionSpec("dirichlet", 2, alpha=0.05))
        assert all(p.size >= 1 for p in parts.values())

    def test_deterministic_per_seed(self):
        pool = balanced_pool(200)
        spec = PartitionSpec("dirichlet", 77, alpha=0.5)
        a = partition_noniid(pool, [0, 1, 2], spec)
        b = partition_noniid(pool, [0, 1, 2], spec)
        for dev in a:
            assert np.array_equal(a[dev].sample_ids, b[dev].sample_ids)

    def test_fewer_samples_than_devices(self):
        pool = balanced_pool(3, classes=3)
        with pytest.raises(PartitionError):
            partition_noniid(pool, [0, 1, 2, 3], PartitionSpec("dirichlet", 0, alpha=1.0))

    def test_bad_spec_rejected(self):
        with pytest.raises(ConfigError):
            PartitionSpec("dirichlet", 0, alpha=-1.0)
        with pytest.raises(ConfigError):
            PartitionSpec("mystery", 0)


class TestStratify:
    def test_two_strata_by_label(self):
        ds = make_dataset(0, [1.0, 2.0, 3.0], [0, 0, 1])
        strata = stratify(ds)
        assert [s.key for s in strata] == [0, 1]
        assert [len(s.member_ids) for s in strata] == [2, 1]

    def test_single_label_centroid_is_dataset_mean(self):
        ds = make_dataset(0, [[1.0, 2.0], [3.0, 4.0]], [1, 1], num_classes=2)
        strata = stratify(ds)
        assert len(strata) == 1
        assert np.allclose(strata[0].centroid, [2.0, 3.0])

    def test_centroid_arithmetic_mean(self):
        ds = make_dataset(0, [0.0, 0.1, 0.5], [2, 2, 2], num_classes=3)
        strata = stratify(ds)
        assert strata[0].centroid[0] == pytest.approx(0.2)

    def test_strata_partition_dataset(self):
        pool = balanced_pool(60, classes=4)
        ds = LocalDataset(0, pool)
        strata = stratify(ds)
        ids = [i for s in strata for i in s.member_ids]
        assert sorted(ids) == sorted(int(x) for x in pool.ids)
        assert len(set(ids)) == len(ids)

    def test_empty_dataset_rejected(self):
        ds = make_dataset(0, np.empty((0, 1)), [], num_classes=2)
        with pytest.raises(SelectionError):
            stratify(ds)


class TestSelectOffloadSet:
    def setup_method(self):
        # stratum A: ids 1,2,3 at 0.0/0.1/0.5 (centroid 0.2); stratum B: id 4 at 10.0
        self.ds = make_dataset(0, [0.0, 0.1, 0.5, 10.0], [0, 0, 0, 1], ids=[1, 2, 3, 4])
        self.strata = stratify(self.ds)

    def test_zero_k(self):
        assert select_offload_set(self.ds, self.strata, 0) == []

    def test_single_pick_nearest_centroid_of_populous_stratum(self):
        assert select_offload_set(self.ds, self.strata, 1) == [2]
        assert reference_selection(self.ds, self.strata, 1) == [2]

    def test_two_picks_follow_population_decrement(self):
        assert select_offload_set(self.ds, self.strata, 2) == [2, 1]
        assert reference_selection(self.ds, self.strata, 2) == [2, 1]

    def test_matches_reference_on_random_instances(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(4, 40))
            ds = make_dataset(0, rng.normal(size=(n, 2)),
                              rng.integers(0, 3, size=n), ids=rng.permutation(1000)[:n],
                              num_classes=3)
            strata = stratify(ds)
            k = int(rng.integers(0, n + 1))
            assert select_offload_set(ds, strata, k) == reference_selection(ds, strata, k)

    def test_deterministic(self):
        a = select_offload_set(self.ds, self.strata, 3)
        b = select_offload_set(self.ds, self.strata, 3)
        assert a == b

    def test_k_too_large(self):
        with pytest.raises(SelectionError):
            select_offload_set(self.ds, self.strata, 5)

    def test_representative_removal_keeps_distribution(self):
        # selected set distorts the sender's label mix no more than the worst
        # random subset of the same size
        pool = make_gaussian_mixture(4, 3, 200, 2.0, 1.0, seed=9)
        ds = LocalDataset(0, pool)
        k = 40  # 20 percent
        chosen = select_offload_set(ds, stratify(ds), k)
        before = ds.label_histogram() / ds.size

        def after_removal(ids):
            mask = ~np.isin(ds.data.ids, list(ids))
            labels = ds.data.labels[mask]
            return np.bincount(labels, minlength=4) / len(labels)

        tv_selected = total_variation(before, after_removal(chosen))
        rng = np.random.default_rng(123)
        worst = 0.0
        for _ in range(1000):
            subset = rng.choice(ds.data.ids, size=k, replace=False)
            worst = max(worst, total_variation(before, after_removal(subset)))
        assert tv_selected <= worst


class TestTransfer:
    def test_move_all(self):
        s = make_dataset(0, [1.0, 2.0], [0, 1], ids=[10, 11])
        r = make_dataset(1, np.empty((0, 1)), [], ids=[], num_classes=2)
        s2, r2 = apply_data_transfer(s, r, [10, 11])
        assert s2.size == 0 and r2.size == 2
        assert sorted(r2.sample_ids) == [10, 11]

    def test_move_nothing(self):
        s = make_dataset(0, [1.0], [0])
        r = make_dataset(1, [2.0], [1], ids=[5])
        s2, r2 = apply_data_transfer(s, r, [])
        assert s2 is s and r2 is r

    def test_move_subset(self):
        s = make_dataset(0, [1.0, 2.0, 3.0], [0, 0, 0], ids=[1, 2, 3])
        r = make_dataset(1, [4.0], [0], ids=[4])
        s2, r2 = apply_data_transfer(s, r, [2])
        assert sorted(s2.sample_ids) == [1, 3]
        assert sorted(r2.sample_ids) == [2, 4]
        assert s2.size + r2.size == 4

    def test_unowned_id_names_offender(self):
        s = make_dataset(0, [1.0], [0], ids=[1])
        r = make_dataset(1, [2.0], [0], ids=[2])
        with pytest.raises(TransferError, match="sample 9"):
            apply_data_transfer(s, r, [9])

    def test_conservation_over_random_transfers(self):
        rng = np.random.default_rng(4)
        pool = balanced_pool(120, classes=3)
        parts = partition_noniid(pool, [0, 1, 2], PartitionSpec("dirichlet", 5, alpha=0.7))
        initial = sorted(np.concatenate([p.sample_ids for p in parts.values()]))
        for _ in range(30):
            sender, receiver = rng.choice([0, 1, 2], size=2, replace=False)
            if parts[sender].size == 0:
                continue
            k = int(rng.integers(0, parts[sender].size + 1))
            ids = rng.choice(parts[sender].sample_ids, size=k, replace=False)
            parts[sender], parts[receiver] = apply_data_transfer(
                parts[sender], parts[receiver], list(ids))
            now = sorted(np.concatenate([p.sample_ids for p in parts.values()]))
            assert now == initial


class TestPayloadAndFiles:
    def test_sample_payload_bits(self):
        assert sample_payload_bits(8) == 32 * 9

    def test_binary_roundtrip(self, tmp_path):
        pool = balanced_pool(37, classes=3, dim=5)
        path = tmp_path / "pool.bin"
        save_dataset_bin(path, pool)
        loaded = load_dataset_bin(path)
        assert loaded.num_classes == 3
        assert loaded.feature_dim == 5
        assert np.array_equal(loaded.labels, pool.labels)
        assert np.allclose(loaded.features, pool.features, atol=1e-6)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"\x00" * 32)
        with pytest.raises(ConfigError, match="magic"):
            load_dataset_bin(path)

    def test_truncated_file(self, tmp_path):
        pool = balanced_pool(10, classes=2, dim=2)
        path = tmp_path / "trunc.bin"
        save_dataset_bin(path, pool)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(ConfigError, match="bytes"):
            load_dataset_bin(path)
