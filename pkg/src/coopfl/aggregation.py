"""Global aggregation rules (FedAvg, Nova-style normalized averaging) and
partial aggregation of model segments at intermediary devices."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AggregationError, ConsistencyError
from .learning import LayoutEntry, ModelParams

_WEIGHT_REL_TOL = 1e-9


@dataclass(frozen=True)
class WeightedSegment:
    """A (possibly partially aggregated) segment; weight is the total dataset
    size folded into the values so far."""

    range: tuple[int, int]
    values: np.ndarray
    weight: float

    def __post_init__(self):
        if self.weight <= 0:
            raise AggregationError("segment weight must be > 0")
        if self.range[1] - self.range[0] != len(self.values):
            raise AggregationError(f"segment {self.range} carries {len(self.values)} values")


def _check_layouts(models: Sequence[ModelParams]):
    first = models[0].layout
    for m in models[1:]:
        if m.layout != first:
            raise AggregationError("models have mismatched layouts")


def fedavg_aggregate(models: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    """Element-wise weighted mean with weights normalized to sum 1.

    Accumulation follows input order; callers pass models sorted by device id so
    results are bit-stable under participant permutation.
    """
    if not models:
        raise AggregationError("nothing to aggregate")
    if len(models) != len(weights):
        raise AggregationError("one weight per model required")
    if any(w <= 0 for w in weights):
        raise AggregationError("weights must be > 0")
    _check_layouts(models)
    total = sum(weights)
    acc = np.zeros_like(models[0].values)
    for model, w in zip(models, weights):
        acc += (w / total) * model.values
    return ModelParams(acc, models[0].layout)


def fednova_aggregate(global_model: ModelParams, deltas: Sequence[np.ndarray],
                      taus: Sequence[int], weights: Sequence[float]) -> ModelParams:
    """Normalized averaging: new = global + tau_eff * sum_i p_i * (delta_i / tau_i),
    with tau_eff = sum_i p_i * tau_i and p the normalized weights.

    With homogeneous step counts the rule reduces algebraically to plain weighted
    averaging of the local models; that branch is taken literally so the
    reduction is exact.
    """
    if not deltas:
        raise AggregationError("nothing to aggregate")
    if not (len(deltas) == len(taus) == len(weights)):
        raise AggregationError("deltas, taus and weights must align")
    if any(t < 1 for t in taus):
        raise AggregationError("every tau must be >= 1")
    if len(set(taus)) == 1:
        locals_ = [ModelParams(global_model.values + d, global_model.layout) for d in deltas]
        return fedavg_aggregate(locals_, weights)
    total = sum(weights)
    p = [w / total for w in weights]
    tau_eff = sum(pi * t for pi, t in zip(p, taus))
    acc = np.zeros_like(global_model.values)
    for pi, t, d in zip(p, taus, deltas):
        acc += pi * (d / t)
    return ModelParams(global_model.values + tau_eff * acc, global_model.layout)


def fednova_update(global_model: ModelParams, local_models: Sequence[ModelParams],
                   taus: Sequence[int], weights: Sequence[float]) -> ModelParams:
    """Nova rule applied to raw local models. Homogeneous taus short-circuit to
    fedavg on the originals, which keeps the reduction bit-exact end to end."""
    if taus and len(set(taus)) == 1:
        return fedavg_aggregate(local_models, weights)
    deltas = [m.values - global_model.values for m in local_models]
    return fednova_aggregate(global_model, deltas, taus, weights)


def partial_combine(own: WeightedSegment,
                    received: Sequence[WeightedSegment]) -> WeightedSegment:
    """Fold received same-range segments into one's own by weighted mean."""
    for seg in received:
        if seg.range != own.range:
            raise AggregationError(
                f"cannot combine segment {seg.range} into {own.range}"
            )
    if not received:
        return own
    total = own.weight + sum(s.weight for s in received)
    acc = own.weight * own.values
    for seg in received:
        acc = acc + seg.weight * seg.values
    return WeightedSegment(own.range, acc / total, total)


def finalize_from_partials(partials: Sequence[WeightedSegment],
                           layout: Sequence[LayoutEntry]) -> ModelParams:
    """Per-range weighted mean of partials, reassembled into a full model.

    Every device must have contributed each of its segments exactly once
    somewhere, so the per-range weight totals must agree; a mismatch means a
    segment was lost or duplicated.
    """
    if not partials:
        raise AggregationError("no partial segments to finalize")
    by_range: dict[tuple[int, int], list[WeightedSegment]] = {}
    for seg in partials:
        by_range.setdefault(seg.range, []).append(seg)

    total_size = sum(e.size for e in layout)
    covered = 0
    range_weights: dict[tuple[int, int], float] = {}
    for rng in sorted(by_range):
        if rng[0] > covered:
            raise AggregationError(
                f"missing partial segment for range [{covered}, {rng[0]})"
            )
        if rng[0] < covered:
            raise AggregationError(f"partial segment {rng} overlaps range ending at {covered}")
        covered = rng[1]
        range_weights[rng] = sum(s.weight for s in by_range[rng])
    if covered != total_size:
        raise AggregationError(f"missing partial segment for range [{covered}, {total_size})")

    reference = next(iter(range_weights.values()))
    for rng, w in range_weights.items():
        if not math.isclose(w, reference, rel_tol=_WEIGHT_REL_TOL):
            raise ConsistencyError(
                f"range {rng} accumulated weight {w}, expected {reference}: "
                f"a segment was lost or duplicated"
            )

    values = np.empty(total_size)
    for rng in sorted(by_range):
        total = range_weights[rng]
        acc = np.zeros(rng[1] - rng[0])
        for seg in by_range[rng]:
            acc += (seg.weight / total) * seg.values
        values[rng[0]:rng[1]] = acc
    return ModelParams(values, tuple(layout))
