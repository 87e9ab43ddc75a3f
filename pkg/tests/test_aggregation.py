import numpy as np
import pytest

from coopfl.aggregation import (WeightedSegment, fedavg_aggregate, fednova_aggregate,
                                fednova_update, finalize_from_partials, partial_combine)
from coopfl.errors import AggregationError, ConsistencyError
from coopfl.learning import ModelParams, default_segment_spec, init_model, segment_model


def flat_model(values, layout=None):
    values = np.asarray(values, dtype=np.float64)
    if layout is None:
        layout = init_model([len(values) - 1, 1], 0).layout if len(values) > 1 else None
    if layout is None or sum(e.size for e in layout) != len(values):
        # single weight row covering everything
        from coopfl.learning import LayoutEntry
        layout = (LayoutEntry("w0", (len(values),)),)
    return ModelParams(values, layout)


def dyadic(rng, n, scale=2**-12):
    """Random values exactly representable on a coarse dyadic grid."""
    return rng.integers(-2**13, 2**13, size=n).astype(np.float64) * scale


class TestFedAvg:
    def test_equal_weight_mean(self):
        out = fedavg_aggregate([flat_model([1.0, 1.0]), flat_model([3.0, 3.0])], [1, 1])
        assert np.array_equal(out.values, [2.0, 2.0])

    def test_single_model_identity(self):
        m = flat_model([0.5, -2.0, 7.0])
        out = fedavg_aggregate([m], [13.0])
        assert np.array_equal(out.values, m.values)

    def test_weighted_mean(self):
        out = fedavg_aggregate([flat_model([0.0]), flat_model([3.0])], [2, 1])
        assert np.array_equal(out.values, [1.0])

    def test_layout_mismatch(self):
        a = init_model([2, 2], 0)
        b = init_model([2, 3], 0)
        with pytest.raises(AggregationError):
            fedavg_aggregate([a, b], [1, 1])

    def test_nonpositive_weight_rejected(self):
        with pytest.raises(AggregationError):
            fedavg_aggregate([flat_model([1.0])], [0.0])

    def test_permutation_invariance_in_id_order(self):
        rng = np.random.default_rng(0)
        models = [flat_model(rng.normal(size=6), init_model([2, 2], 0).layout)
                  for _ in range(4)]
        weights = [3.0, 1.0, 2.0, 5.0]
        base = fedavg_aggregate(models, weights)
        perm = [2, 0, 3, 1]
        other = fedavg_aggregate([models[i] for i in perm], [weights[i] for i in perm])
        assert np.allclose(base.values, other.values, rtol=1e-12, atol=1e-14)


class TestFedNova:
    def test_hand_derived_update(self):
        # tau_eff = 0.5*2 + 0.5*1 = 1.5; update = 1.5 * (0.5*(-2/2) + 0.5*(-1/1)) = -1.5
        g = flat_model([0.0])
        out = fednova_aggregate(g, [np.array([-2.0]), np.array([-1.0])], [2, 1], [1.0, 1.0])
        assert np.array_equal(out.values, [-1.5])

    def test_equal_taus_reduce_exactly_to_fedavg(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(1, 5))
            g_vals = dyadic(rng, 6)
            layout = init_model([2, 2], 0).layout
            g = ModelParams(g_vals, layout)
            locals_ = [ModelParams(dyadic(rng, 6), layout) for _ in range(n)]
            weights = [float(rng.integers(1, 50)) for _ in range(n)]
            deltas = [m.values - g.values for m in locals_]  # exact on the dyadic grid
            tau = int(rng.integers(1, 9))
            nova = fednova_aggregate(g, deltas, [tau] * n, weights)
            avg = fedavg_aggregate(locals_, weights)
            assert np.array_equal(nova.values, avg.values)

    def test_single_device_returns_global_plus_delta(self):
        g = flat_model([1.0, -2.0, 0.25])
        delta = np.array([0.5, 0.5, 0.5])
        out = fednova_aggregate(g, [delta], [7], [3.0])
        assert np.array_equal(out.values, g.values + delta)

    def test_zero_tau_rejected(self):
        with pytest.raises(AggregationError):
            fednova_aggregate(flat_model([0.0]), [np.array([1.0])], [0], [1.0])

    def test_general_rule_against_direct_formula(self):
        rng = np.random.default_rng(2)
        layout = init_model([3, 2], 0).layout
        g = ModelParams(rng.normal(size=8), layout)
        deltas = [rng.normal(size=8) for _ in range(3)]
        taus = [2, 5, 3]
        weights = [1.0, 2.0, 3.0]
        out = fednova_aggregate(g, deltas, taus, weights)
        p = np.array(weights) / sum(weights)
        tau_eff = float(np.dot(p, taus))
        expected = g.values + tau_eff * sum(
            pi * (d / t) for pi, d, t in zip(p, deltas, taus))
        assert np.allclose(out.values, expected, rtol=1e-12)

    def test_update_helper_homogeneous_taus_bitwise_fedavg(self):
        rng = np.random.default_rng(3)
        layout = init_model([2, 2], 0).layout
        g = ModelParams(rng.normal(size=6), layout)
        locals_ = [ModelParams(rng.normal(size=6), layout) for _ in range(3)]
        weights = [4.0, 5.0, 6.0]
        out = fednova_update(g, locals_, [4, 4, 4], weights)
        assert np.array_equal(out.values, fedavg_aggregate(locals_, weights).values)


class TestPartialCombine:
    def test_empty_received_is_identity(self):
        own = WeightedSegment((0, 2), np.array([1.0, 2.0]), 3.0)
        assert partial_combine(own, []) is own

    def test_equal_weight_mean(self):
        own = WeightedSegment((0, 1), np.array([1.0]), 1.0)
        out = partial_combine(own, [WeightedSegment((0, 1), np.array([3.0]), 1.0)])
        assert np.array_equal(out.values, [2.0])
        assert out.weight == 2.0

    def test_associativity_within_tolerance(self):
        rng = np.random.default_rng(4)
        segs = [WeightedSegment((0, 3), rng.normal(size=3), float(rng.integers(1, 10)))
                for _ in range(4)]
        left = partial_combine(partial_combine(segs[0], segs[1:3]), [segs[3]])
        right = partial_combine(segs[0], segs[1:])
        assert np.allclose(left.values, right.values, rtol=1e-12, atol=1e-14)
        assert left.weight == pytest.approx(right.weight, rel=1e-12)

    def test_range_mismatch(self):
        own = WeightedSegment((0, 2), np.zeros(2), 1.0)
        with pytest.raises(AggregationError):
            partial_combine(own, [WeightedSegment((2, 4), np.zeros(2), 1.0)])


class TestFinalize:
    def test_single_full_partial_identity(self):
        model = init_model([3, 2], 5)
        partials = [WeightedSegment((0, model.n_params), model.values.copy(), 10.0)]
        out = finalize_from_partials(partials, model.layout)
        assert np.array_equal(out.values, model.values)

    def _random_equivalence_instance(self, rng, n_devices, n_helpers):
        layout = init_model([4, 6, 3], 0).layout
        spec = default_segment_spec(layout)
        models = [ModelParams(rng.normal(size=sum(e.size for e in layout)), layout)
                  for _ in range(n_devices)]
        weights = [float(rng.integers(1, 30)) for _ in range(n_devices)]
        helpers = list(range(n_helpers))
        inbox = {(h, rng_): [] for h in helpers for rng_ in spec.boundaries}
        for d, model in enumerate(models):
            for seg in segment_model(model, spec):
                h = int(rng.integers(0, n_helpers))
                inbox[(h, seg.range)].append(WeightedSegment(seg.range, seg.values,
                                                             weights[d]))
        partials = []
        for key in sorted(inbox):
            segs = inbox[key]
            if segs:
                partials.append(partial_combine(segs[0], segs[1:]))
        return models, weights, partials, layout

    def test_arbitrary_assignment_equals_fedavg(self):
        rng = np.random.default_rng(6)
        for _ in range(25):
            models, weights, partials, layout = self._random_equivalence_instance(
                rng, int(rng.integers(1, 6)), int(rng.integers(1, 4)))
            combined = finalize_from_partials(partials, layout)
            direct = fedavg_aggregate(models, weights)
            err = np.abs(combined.values - direct.values) / np.maximum(
                np.abs(direct.values), 1e-12)
            assert err.max() <= 1e-9

    def test_three_devices_two_helpers_example(self):
        rng = np.random.default_rng(7)
        models, weights, partials, layout = self._random_equivalence_instance(rng, 3, 2)
        combined = finalize_from_partials(partials, layout)
        direct = fedavg_aggregate(models, weights)
        assert np.allclose(combined.values, direct.values, rtol=1e-9)

    def test_dropped_segment_is_consistency_error(self):
        rng = np.random.default_rng(8)
        models, weights, partials, layout = self._random_equivalence_instance(rng, 3, 2)
        # drop one partial from a multi-partial range to unbalance the weights
        ranges = [p.range for p in partials]
        victim_range = next(r for r in ranges if ranges.count(r) >= 1)
        idx = ranges.index(victim_range)
        broken = partials[:idx] + partials[idx + 1:]
        if not any(p.range == victim_range for p in broken):
            # removing the only partial of a range is a missing-range error instead
            with pytest.raises(AggregationError):
                finalize_from_partials(broken, layout)
        else:
            with pytest.raises(ConsistencyError):
                finalize_from_partials(broken, layout)

    def test_missing_range_error(self):
        model = init_model([4, 6, 3], 0)
        spec = default_segment_spec(model.layout)
        segs = segment_model(model, spec)
        partials = [WeightedSegment(segs[0].range, segs[0].values, 1.0)]
        with pytest.raises(AggregationError, match="missing"):
            finalize_from_partials(partials, model.layout)

    def test_unequal_weights_flagged(self):
        model = init_model([2, 2], 0)
        spec = default_segment_spec(model.layout)
        assert spec.boundaries == ((0, 6),)
        layout = model.layout
        half = ((0, 4), (4, 6))
        partials = [
            WeightedSegment(half[0], model.values[:4], 2.0),
            WeightedSegment(half[1], model.values[4:], 3.0),
        ]
        with pytest.raises(ConsistencyError):
            finalize_from_partials(partials, layout)
