"""Plan generation, selection, baselines, and event-driven replanning.

Search shape: apps are processed in descending weight-footprint order; for
each app a beam (stratified by layer position) explores segment lengths and
device assignments jointly, carrying cumulative memory reservations and
busy times across apps. Scoring uses the thermally effective busy time
``busy / util_cap`` for capped devices, so the beam steers toward plans
that stay inside comfort ceilings without pruning states that a longer
period would legalize.

The total order used everywhere plans are compared is::

    (objective value, total segments, input-transfer cost, device ids, cuts)

Input-transfer cost sits between the documented tie-breaks so that with
otherwise equal plans the first segment lands on the sensor-bound device.
A brute-force oracle (guarded to tiny instances) shares this order, which
makes heuristic-versus-oracle comparisons well defined.
"""

from __future__ import annotations

import itertools
import json
import logging
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cost_model import (
    WorkloadCost,
    device_utilizations,
    plan_cost,
    route_transfer,
    workload_cost,
)
from .errors import (
    InstanceTooLargeError,
    NoCandidateMeetsFloorError,
    NoOutputError,
    NoRouteError,
    NoSensorError,
    OutOfResourceError,
)
from .fleet import (
    AppSpec,
    AvailabilityChange,
    AvailabilityEvent,
    AvailabilitySnapshot,
    Binding,
    Fleet,
    WearStatus,
    bind_virtual,
)
from .model_ir import ModelGraph, bias_footprint, weight_footprint
from .plans import (
    ExecutionPlan,
    MemoryUse,
    Objective,
    ObjectiveKind,
    PlannedApp,
    PlanSegment,
    SearchConfig,
    memory_use,
    memory_violations,
    segment_data_bytes,
)
from .thermal import ThermalConfig, max_utilization_for_threshold, thermal_feasible

log = logging.getLogger("bodynet.orchestrator")

# Guard for the exhaustive oracle.
ORACLE_MAX_LAYERS = 8
ORACLE_MAX_DEVICES = 3
ORACLE_MAX_APPS = 2


def enumerate_cut_candidates(model: ModelGraph, k_max: int) -> list[list[int]]:
    """All sorted cut lists producing 1..k_max segments of the chain."""
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    n = len(model.layers)
    candidates: list[list[int]] = []
    for ncuts in range(0, min(k_max, n)):
        for combo in itertools.combinations(range(1, n), ncuts):
            candidates.append(list(combo))
    return candidates


@dataclass(frozen=True)
class JointCandidate:
    """A complete, feasible assignment for every app plus its joint cost."""

    planned: tuple[PlannedApp, ...]
    workload: WorkloadCost

    def plan_for(self, app_id: str) -> ExecutionPlan:
        for entry in self.planned:
            if entry.app.id == app_id:
                return entry.plan
        raise KeyError(app_id)


def _pedigree(planned: Sequence[PlannedApp]) -> tuple:
    return tuple((entry.plan.devices(), entry.plan.cuts()) for entry in planned)


def _input_cost(planned: Sequence[PlannedApp], fleet: Fleet) -> float:
    total = 0.0
    for entry in planned:
        seconds, _ = route_transfer(
            fleet, entry.binding.sensor_device, entry.plan.segments[0].device,
            entry.model.input_bytes,
        )
        total += seconds
    return total


def candidate_key(candidate: JointCandidate, objective: Objective, fleet: Fleet) -> tuple:
    if objective.kind is ObjectiveKind.MAX_THROUGHPUT:
        primary = candidate.workload.shared_period_s
    else:
        primary = candidate.workload.total_energy_j
    nseg = sum(len(entry.plan.segments) for entry in candidate.planned)
    return (primary, nseg, _input_cost(candidate.planned, fleet), _pedigree(candidate.planned))


# ---------------------------------------------------------------------------
# Planning context: everything the beam and the oracle share.


@dataclass
class _AppTask:
    app: AppSpec
    model: ModelGraph
    binding: Binding
    # Per-device prefix sums of layer compute seconds (index by device id).
    compute_prefix: dict[str, list[float]]
    # Prefix sums of weight bits and bias counts for O(1) span footprints.
    weight_bits_prefix: list[int]
    bias_prefix: list[int]
    # data_charge[start][stop - start - 1]: precomputed activation charges.
    data_charge: list[list[int]]

    def span_compute(self, device_id: str, start: int, stop: int) -> float:
        prefix = self.compute_prefix[device_id]
        return prefix[stop] - prefix[start]

    def span_weight(self, start: int, stop: int) -> int:
        bits = self.weight_bits_prefix[stop] - self.weight_bits_prefix[start]
        return (bits + 7) // 8

    def span_bias(self, start: int, stop: int) -> int:
        return self.bias_prefix[stop] - self.bias_prefix[start]

    def span_data(self, start: int, stop: int) -> int:
        return self.data_charge[start][stop - start - 1]


class _Context:
    """Fleet snapshot plus derived tables used by one planning pass."""

    def __init__(
        self,
        fleet: Fleet,
        snapshot: AvailabilitySnapshot,
        thermal_cfg: ThermalConfig,
    ):
        self.fleet = fleet
        self.snapshot = snapshot
        self.thermal_cfg = thermal_cfg
        self.device_ids = tuple(sorted(snapshot.available))
        self.util_cap: dict[str, float] = {}
        for dev in fleet.devices:
            wear = snapshot.wear.get(dev.id, WearStatus.WORN)
            self.util_cap[dev.id] = max_utilization_for_threshold(
                dev, wear, fleet.ambient_c, thermal_cfg
            )
        # (latency_s, bandwidth) per directed link, for fast transfer math.
        self.link_params: dict[tuple[str, str], tuple[float, float]] = {
            (l.src, l.dst): (l.latency_s, l.bandwidth_bytes_per_s) for l in fleet.links
        }
        self.mem_caps: dict[str, tuple[int, int, int]] = {
            d.id: (d.weight_mem_bytes, d.bias_mem_bytes, d.data_mem_bytes)
            for d in fleet.devices
        }

    def poisoned_devices(self) -> list[str]:
        """Devices whose idle power alone violates their ceiling: no plan can pass."""
        return [d for d, cap in sorted(self.util_cap.items()) if cap < 0]

    def make_task(self, app: AppSpec, model: ModelGraph, binding: Binding) -> _AppTask:
        compute_prefix: dict[str, list[float]] = {}
        for dev_id in self.device_ids:
            device = self.fleet.device(dev_id)
            acc = [0.0]
            for layer in model.layers:
                acc.append(acc[-1] + layer.macs / device.macs_per_second
                           + device.per_layer_overhead_s)
            compute_prefix[dev_id] = acc
        wbits = [0]
        bias = [0]
        for layer in model.layers:
            wbits.append(wbits[-1] + layer.weight_count * model.quant.weight_bits)
            bias.append(bias[-1] + layer.bias_count)
        n = len(model.layers)
        data_charge: list[list[int]] = []
        for start in range(n):
            row = []
            max_in = model.layer_input_bytes(start)
            max_out = 0
            for stop in range(start + 1, n + 1):
                i = stop - 1
                if i > start:
                    max_in = max(max_in, model.layer_input_bytes(i))
                max_out = max(max_out, model.layers[i].out_activation_bytes)
                row.append(max_in + max_out)
            data_charge.append(row)
        return _AppTask(
            app=app,
            model=model,
            binding=binding,
            compute_prefix=compute_prefix,
            weight_bits_prefix=wbits,
            bias_prefix=bias,
            data_charge=data_charge,
        )


def _order_tasks(tasks: list[_AppTask]) -> list[_AppTask]:
    # Biggest models first: they have the fewest placement options.
    return sorted(
        tasks, key=lambda t: (-t.model.total_weight_footprint(), t.app.id)
    )


# ---------------------------------------------------------------------------
# Joint beam search.


class _Ledger:
    """Materialized cumulative busy times and memory reservations."""

    __slots__ = ("dev_busy", "link_busy", "weight", "bias", "data")

    def __init__(self, dev_busy=None, link_busy=None, weight=None, bias=None, data=None):
        self.dev_busy: dict[str, float] = dev_busy or {}
        self.link_busy: dict[tuple[str, str], float] = link_busy or {}
        self.weight: dict[str, int] = weight or {}
        self.bias: dict[str, int] = bias or {}
        self.data: dict[str, int] = data or {}

    @classmethod
    def from_planned(cls, planned: Sequence[PlannedApp], fleet: Fleet) -> "_Ledger":
        ledger = cls()
        if planned:
            cost = workload_cost(planned, fleet)
            ledger.dev_busy = dict(cost.device_busy_s)
            ledger.link_busy = dict(cost.link_busy_s)
            use = memory_use(planned)
            ledger.weight = dict(use.weight)
            ledger.bias = dict(use.bias)
            ledger.data = dict(use.data)
        return ledger

    def copy(self) -> "_Ledger":
        return _Ledger(
            dict(self.dev_busy), dict(self.link_busy),
            dict(self.weight), dict(self.bias), dict(self.data),
        )

    def max_scores(self, util_cap: Mapping[str, float]) -> tuple[float, float]:
        raw = 0.0
        eff = 0.0
        for dev_id, busy in self.dev_busy.items():
            raw = max(raw, busy)
            eff = max(eff, _effective(busy, util_cap[dev_id]))
        for busy in self.link_busy.values():
            raw = max(raw, busy)
            eff = max(eff, busy)
        return raw, eff


def _effective(busy: float, cap: float) -> float:
    if cap >= 1.0:
        return busy
    if busy <= 0.0:
        return 0.0
    if cap <= 0.0:
        return float("inf")
    return busy / cap


class _Node:
    """One placed segment in a beam state's parent chain."""

    __slots__ = ("parent", "device", "start", "end", "res_adds", "w", "b", "d")

    def __init__(self, parent, device, start, end, res_adds, w, b, d):
        self.parent = parent
        self.device = device
        self.start = start
        self.end = end
        # ((is_link, key, seconds), ...) - busy-time additions of this node.
        self.res_adds = res_adds
        self.w = w
        self.b = b
        self.d = d


class _State:
    """A beam state: a base joint ledger plus a chain of placed segments."""

    __slots__ = (
        "base", "base_planned", "pedigree", "node", "layer",
        "nseg", "own_nseg", "eff_max", "raw_max", "input_total",
        "devseq", "cuts", "key",
    )

    def __init__(self, base, base_planned, pedigree, node, layer, nseg, own_nseg,
                 eff_max, raw_max, input_total, devseq, cuts):
        self.base: _Ledger = base
        self.base_planned: tuple[PlannedApp, ...] = base_planned
        self.pedigree: tuple = pedigree
        self.node: _Node | None = node
        self.layer = layer
        self.nseg = nseg
        self.own_nseg = own_nseg
        self.eff_max = eff_max
        self.raw_max = raw_max
        self.input_total = input_total
        self.devseq: tuple[str, ...] = devseq
        self.cuts: tuple[int, ...] = cuts
        self.key = (eff_max, input_total, nseg, pedigree, devseq, cuts)

    def chain_busy(self, is_link: bool, key) -> float:
        base = self.base.link_busy if is_link else self.base.dev_busy
        total = base.get(key, 0.0)
        node = self.node
        while node is not None:
            for il, k, v in node.res_adds:
                if il == is_link and k == key:
                    total += v
            node = node.parent
        return total

    def chain_mem(self, dev_id: str) -> tuple[int, int, int]:
        w = self.base.weight.get(dev_id, 0)
        b = self.base.bias.get(dev_id, 0)
        d = self.base.data.get(dev_id, 0)
        node = self.node
        while node is not None:
            if node.device == dev_id:
                w += node.w
                b += node.b
                d += node.d
            node = node.parent
        return w, b, d


class _RejectCounter:
    __slots__ = ("weight", "bias", "data", "route")

    def __init__(self):
        self.weight = 0
        self.bias = 0
        self.data = 0
        self.route = 0

    def dominant(self) -> str:
        ranked = sorted(
            (
                (-self.weight, 0, "weight_mem"),
                (-self.data, 1, "data_mem"),
                (-self.bias, 2, "bias_mem"),
                (-self.route, 3, "route"),
            )
        )
        return ranked[0][2]

    def total(self) -> int:
        return self.weight + self.bias + self.data + self.route


def _transfer_seconds(fleet: Fleet, src: str, dst: str, nbytes: int) -> float | None:
    """Like route_transfer but returns None instead of raising."""
    if src == dst:
        return 0.0
    link = fleet.link(src, dst)
    if link is None:
        return None
    return link.latency_s + nbytes / link.bandwidth_bytes_per_s


def _expand_app(
    ctx: _Context,
    task: _AppTask,
    bases: Sequence[_State],
    cfg: SearchConfig,
    rejects: _RejectCounter,
) -> list[_State]:
    """Run the position-stratified beam for one app over all joint bases."""
    n = len(task.model.layers)
    k_max = cfg.max_segments_per_model
    beam = cfg.beam_width
    caps = ctx.util_cap
    mem_caps = ctx.mem_caps
    link_params = ctx.link_params
    device_ids = ctx.device_ids
    sensor = task.binding.sensor_device
    output = task.binding.output_device
    post_s = task.app.postprocess_latency_s
    final_bytes = task.model.output_bytes
    input_bytes = task.model.input_bytes
    layers = task.model.layers

    # frontier[j] = best states whose placed segments cover layers [0, j)
    frontier: list[list[_State]] = [[] for _ in range(n + 1)]
    frontier[0] = list(bases)

    # Candidates are scored lazily as flat tuples; only beam survivors become
    # real _State objects. Ties beyond (score, input cost, segments) resolve
    # by deterministic generation order.
    seq = 0
    for start in range(n):
        states = frontier[start]
        if not states:
            continue
        by_stop: dict[int, list[tuple]] = {}
        handoff_bytes = input_bytes if start == 0 else layers[start - 1].out_activation_bytes
        data_row = task.data_charge[start]
        for state in states:
            remaining_budget = k_max - state.own_nseg
            if remaining_budget <= 0:
                continue
            prev_dev = state.node.device if state.node is not None else None
            in_src = sensor if start == 0 else prev_dev
            state_eff = state.eff_max
            state_raw = state.raw_max
            # Chain walks depend only on (state, device): hoist them out of
            # the stop loop.
            per_dev: list[tuple] = []
            for dev_id in device_ids:
                if dev_id == prev_dev:
                    continue  # merging is always at least as good
                if in_src == dev_id:
                    in_seconds = 0.0
                else:
                    params = link_params.get((in_src, dev_id))
                    if params is None:
                        rejects.route += 1
                        continue
                    in_seconds = params[0] + handoff_bytes / params[1]
                out_params = None
                if dev_id != output:
                    out_params = link_params.get((dev_id, output))
                w0, b0, d0 = state.chain_mem(dev_id)
                dev_base = state.chain_busy(False, dev_id)
                in_link_base = (
                    state.chain_busy(True, (in_src, dev_id)) if in_src != dev_id else 0.0
                )
                out_link_base = (
                    state.chain_busy(True, (dev_id, output))
                    if dev_id != output and out_params is not None else 0.0
                )
                per_dev.append((dev_id, in_seconds, out_params, w0, b0, d0,
                                dev_base, in_link_base, out_link_base, caps[dev_id]))
            post_base = state.chain_busy(False, output) if post_s > 0 else 0.0
            compute_prefix = task.compute_prefix
            for stop in range(start + 1, n + 1):
                if remaining_budget == 1 and stop != n:
                    continue
                final_stop = stop == n
                seg_w = task.span_weight(start, stop)
                seg_b = task.span_bias(start, stop)
                seg_d = data_row[stop - start - 1]
                if start == 0:
                    seg_d += input_bytes
                for (dev_id, in_seconds, out_params, w0, b0, d0, dev_base,
                     in_link_base, out_link_base, cap_util) in per_dev:
                    cap_w, cap_b, cap_d = mem_caps[dev_id]
                    if w0 + seg_w > cap_w:
                        rejects.weight += 1
                        continue
                    if b0 + seg_b > cap_b:
                        rejects.bias += 1
                        continue
                    if d0 + seg_d > cap_d:
                        rejects.data += 1
                        continue
                    out_seconds = -1.0
                    if final_stop and dev_id != output:
                        if out_params is None:
                            rejects.route += 1
                            continue
                        out_seconds = out_params[0] + final_bytes / out_params[1]
                    prefix = compute_prefix[dev_id]
                    compute = prefix[stop] - prefix[start]
                    # Incremental score update over the touched resources.
                    eff_max = state_eff
                    raw_max = state_raw
                    dev_total = dev_base + compute
                    if final_stop and post_s > 0 and output == dev_id:
                        dev_total += post_s
                    if dev_total > raw_max:
                        raw_max = dev_total
                    eff = _effective(dev_total, cap_util)
                    if eff > eff_max:
                        eff_max = eff
                    if in_seconds or in_src != dev_id:
                        if in_src != dev_id:
                            link_total = in_link_base + in_seconds
                            if link_total > raw_max:
                                raw_max = link_total
                            if link_total > eff_max:
                                eff_max = link_total
                    if final_stop:
                        if out_seconds >= 0.0:
                            link_total = out_link_base + out_seconds
                            if link_total > raw_max:
                                raw_max = link_total
                            if link_total > eff_max:
                                eff_max = link_total
                        if post_s > 0 and output != dev_id:
                            out_total = post_base + post_s
                            if out_total > raw_max:
                                raw_max = out_total
                            eff = _effective(out_total, caps[output])
                            if eff > eff_max:
                                eff_max = eff
                    input_total = state.input_total + (in_seconds if start == 0 else 0.0)
                    seq += 1
                    by_stop.setdefault(stop, []).append((
                        eff_max, input_total, state.own_nseg + 1, seq,
                        state, dev_id, in_src, in_seconds, out_seconds,
                        compute, seg_w, seg_b, seg_d, raw_max,
                    ))
        # Keep the best candidates per end position, stratified by segment
        # count so short- and long-segment prefixes cannot crowd each other
        # out of the frontier; then materialize only the survivors.
        total_cap = 2 * beam
        for stop, items in by_stop.items():
            existing = [
                (s.eff_max, s.input_total, s.own_nseg, -1, s) for s in frontier[stop]
            ]
            merged = sorted(existing + items, key=lambda t: t[:4])
            kept: list[_State] = []
            per_stratum: dict[int, int] = {}
            for entry in merged:
                if len(kept) >= total_cap:
                    break
                stratum = entry[2]
                count = per_stratum.get(stratum, 0)
                if count >= beam:
                    continue
                per_stratum[stratum] = count + 1
                if len(entry) == 5:
                    kept.append(entry[4])
                else:
                    kept.append(_materialize(task, entry, stop, post_s, output))
            frontier[stop] = kept
    final = frontier[n]
    final.sort(key=lambda s: s.key)
    return final[: max(beam, 1)]


def _materialize(task: _AppTask, entry: tuple, stop: int, post_s: float,
                 output: str) -> _State:
    (eff_max, input_total, _own, _seq, state, dev_id, in_src, in_seconds,
     out_seconds, compute, seg_w, seg_b, seg_d, raw_max) = entry
    start = state.layer
    res_adds: list[tuple[bool, object, float]] = [(False, dev_id, compute)]
    if in_src != dev_id:
        res_adds.append((True, (in_src, dev_id), in_seconds))
    if stop == len(task.model.layers):
        if out_seconds >= 0.0:
            res_adds.append((True, (dev_id, output), out_seconds))
        if post_s > 0:
            res_adds.append((False, output, post_s))
    node = _Node(state.node, dev_id, start, stop, tuple(res_adds), seg_w, seg_b, seg_d)
    return _State(
        base=state.base,
        base_planned=state.base_planned,
        pedigree=state.pedigree,
        node=node,
        layer=stop,
        nseg=state.nseg + 1,
        own_nseg=state.own_nseg + 1,
        eff_max=eff_max,
        raw_max=raw_max,
        input_total=input_total,
        devseq=state.devseq + (dev_id,),
        cuts=state.cuts if start == 0 else state.cuts + (start,),
    )


def _state_to_planned(state: _State, task: _AppTask) -> PlannedApp:
    segments: list[PlanSegment] = []
    node = state.node
    while node is not None:
        segments.append(PlanSegment(device=node.device, start=node.start, end=node.end))
        node = node.parent
    segments.reverse()
    return PlannedApp(
        app=task.app,
        model=task.model,
        binding=task.binding,
        plan=ExecutionPlan(app=task.app.id, segments=tuple(segments)),
    )


def _evaluate_joint(
    planned: Sequence[PlannedApp], ctx: _Context
) -> JointCandidate | None:
    """Exact-cost evaluation plus memory/thermal feasibility; None if infeasible."""
    if memory_violations(planned, ctx.fleet):
        return None
    try:
        cost = workload_cost(planned, ctx.fleet)
    except NoRouteError:
        return None
    utils = device_utilizations(cost)
    check = thermal_feasible(utils, ctx.snapshot.wear, ctx.fleet, ctx.thermal_cfg)
    if not check.feasible:
        return None
    return JointCandidate(planned=tuple(planned), workload=cost)


def _merge_adjacent(segments: Sequence[PlanSegment]) -> tuple[PlanSegment, ...]:
    merged: list[PlanSegment] = []
    for seg in segments:
        if merged and merged[-1].device == seg.device:
            merged[-1] = PlanSegment(device=seg.device, start=merged[-1].start, end=seg.end)
        else:
            merged.append(seg)
    return tuple(merged)


class _FastEval:
    """Joint re-evaluation with per-app caching for the local search: a
    mutation touches one or two apps, so only those costs recompute."""

    def __init__(self, planned: Sequence[PlannedApp], ctx: _Context):
        self.ctx = ctx
        self.entries = list(planned)
        self.costs = [self._app_cost(e) for e in self.entries]
        self.mems = [memory_use([e]) for e in self.entries]

    def _app_cost(self, entry: PlannedApp):
        try:
            return plan_cost(entry.plan, entry.model, self.ctx.fleet, entry.binding,
                             entry.app.postprocess_latency_s)
        except NoRouteError:
            return None

    def propose(self, replacements: Mapping[int, PlannedApp]) -> JointCandidate | None:
        entries = list(self.entries)
        costs = list(self.costs)
        mems = list(self.mems)
        for i, entry in replacements.items():
            entries[i] = entry
            costs[i] = self._app_cost(entry)
            mems[i] = memory_use([entry])
        candidate = self._evaluate(entries, costs, mems)
        if candidate is not None:
            self._staged = (entries, costs, mems)
        return candidate

    def accept(self) -> None:
        self.entries, self.costs, self.mems = self._staged

    def _evaluate(self, entries, costs, mems) -> JointCandidate | None:
        if any(c is None for c in costs):
            return None
        caps = self.ctx.mem_caps
        weight: dict[str, int] = {}
        bias: dict[str, int] = {}
        data: dict[str, int] = {}
        for mem in mems:
            for dev, v in mem.weight.items():
                weight[dev] = weight.get(dev, 0) + v
            for dev, v in mem.bias.items():
                bias[dev] = bias.get(dev, 0) + v
            for dev, v in mem.data.items():
                data[dev] = data.get(dev, 0) + v
        for dev, used in weight.items():
            if used > caps[dev][0]:
                return None
        for dev, used in bias.items():
            if used > caps[dev][1]:
                return None
        for dev, used in data.items():
            if used > caps[dev][2]:
                return None
        dev_busy: dict[str, float] = {}
        link_busy: dict[tuple[str, str], float] = {}
        per_app = {}
        for entry, cost in zip(entries, costs):
            per_app[entry.app.id] = cost
            for dev, busy in cost.device_busy_s.items():
                dev_busy[dev] = dev_busy.get(dev, 0.0) + busy
            for key, busy in cost.link_busy_s.items():
                link_busy[key] = link_busy.get(key, 0.0) + busy
        period = max([*dev_busy.values(), *link_busy.values()], default=0.0)
        workload = WorkloadCost(per_app=per_app, shared_period_s=period,
                                device_busy_s=dev_busy, link_busy_s=link_busy)
        utils = device_utilizations(workload)
        check = thermal_feasible(utils, self.ctx.snapshot.wear, self.ctx.fleet,
                                 self.ctx.thermal_cfg)
        if not check.feasible:
            return None
        return JointCandidate(planned=tuple(entries), workload=workload)


def _local_search(
    best: JointCandidate,
    ctx: _Context,
    objective: Objective,
    cfg: SearchConfig,
    mutable_ids: frozenset[str],
) -> JointCandidate:
    """Hill-climb: move one segment to another device, swap two segments'
    devices, or shift a cut boundary, accepting strict key improvements."""
    if cfg.local_search_iters == 0 or not best.planned:
        return best
    rng = random.Random(cfg.seed)
    devices = ctx.device_ids
    best_key = candidate_key(best, objective, ctx.fleet)
    evaluator = _FastEval(best.planned, ctx)
    stagnant = 0
    for _ in range(cfg.local_search_iters):
        if stagnant >= 75:
            break
        stagnant += 1
        planned = list(best.planned)
        slots = [
            (i, j)
            for i, entry in enumerate(planned)
            if entry.app.id in mutable_ids
            for j in range(len(entry.plan.segments))
        ]
        if not slots:
            return best
        op = rng.random()
        touched: list[int] = []
        if op < 0.4 and len(slots) >= 2:
            (i1, j1), (i2, j2) = rng.sample(slots, 2)
            d1 = planned[i1].plan.segments[j1].device
            d2 = planned[i2].plan.segments[j2].device
            if d1 == d2:
                continue
            planned = _set_segment_device(planned, i1, j1, d2)
            planned = _set_segment_device(planned, i2, j2, d1)
            touched = [i1, i2]
        elif op < 0.75:
            i, j = slots[rng.randrange(len(slots))]
            current = planned[i].plan.segments[j].device
            choices = [d for d in devices if d != current]
            if not choices:
                continue
            planned = _set_segment_device(planned, i, j, choices[rng.randrange(len(choices))])
            touched = [i]
        else:
            boundaries = [
                (i, j)
                for i, entry in enumerate(planned)
                if entry.app.id in mutable_ids
                for j in range(len(entry.plan.segments) - 1)
            ]
            if not boundaries:
                continue
            i, j = boundaries[rng.randrange(len(boundaries))]
            shifted = _shift_cut(planned[i], j, rng.choice((-1, 1)))
            if shifted is None:
                continue
            planned[i] = shifted
            touched = [i]
        replacements = {
            i: _canonical_entry(planned[i]) for i in sorted(set(touched))
        }
        candidate = evaluator.propose(replacements)
        if candidate is None:
            continue
        key = candidate_key(candidate, objective, ctx.fleet)
        if key < best_key:
            best, best_key = candidate, key
            evaluator.accept()
            stagnant = 0
    return best


def _set_segment_device(
    planned: list[PlannedApp], app_index: int, seg_index: int, device: str
) -> list[PlannedApp]:
    entry = planned[app_index]
    segments = list(entry.plan.segments)
    old = segments[seg_index]
    segments[seg_index] = PlanSegment(device=device, start=old.start, end=old.end)
    new_plan = ExecutionPlan(app=entry.plan.app, segments=tuple(segments))
    updated = list(planned)
    updated[app_index] = PlannedApp(
        app=entry.app, model=entry.model, binding=entry.binding, plan=new_plan
    )
    return updated


def _shift_cut(entry: PlannedApp, boundary: int, delta: int) -> PlannedApp | None:
    """Move the boundary between segments ``boundary`` and ``boundary + 1`` by
    one layer; a segment emptied by the shift is dropped."""
    segments = list(entry.plan.segments)
    left = segments[boundary]
    right = segments[boundary + 1]
    new_edge = left.end + delta
    if new_edge <= left.start and new_edge < right.end:
        # Left segment vanishes; right absorbs it.
        merged = PlanSegment(device=right.device, start=left.start, end=right.end)
        segments[boundary:boundary + 2] = [merged]
    elif new_edge > left.start and new_edge >= right.end:
        merged = PlanSegment(device=left.device, start=left.start, end=right.end)
        segments[boundary:boundary + 2] = [merged]
    elif left.start < new_edge < right.end:
        segments[boundary] = PlanSegment(device=left.device, start=left.start, end=new_edge)
        segments[boundary + 1] = PlanSegment(device=right.device, start=new_edge, end=right.end)
    else:
        return None
    return PlannedApp(
        app=entry.app, model=entry.model, binding=entry.binding,
        plan=ExecutionPlan(app=entry.plan.app, segments=tuple(segments)),
    )


def _canonical_entry(entry: PlannedApp) -> PlannedApp:
    merged = _merge_adjacent(entry.plan.segments)
    if merged == entry.plan.segments:
        return entry
    return PlannedApp(
        app=entry.app, model=entry.model, binding=entry.binding,
        plan=ExecutionPlan(app=entry.plan.app, segments=merged),
    )


def generate_plan_candidates(
    apps: Sequence[tuple[AppSpec, Binding]],
    fleet: Fleet,
    snapshot: AvailabilitySnapshot,
    models: Mapping[str, ModelGraph],
    cfg: SearchConfig = SearchConfig(),
    thermal_cfg: ThermalConfig = ThermalConfig(),
    base: Sequence[PlannedApp] = (),
) -> list[JointCandidate]:
    """Generate ranked joint plan candidates for all apps.

    ``base`` holds already-placed apps whose reservations and busy times are
    fixed; emitted candidates include them. Raises OutOfResourceError naming
    the constraint when some app cannot be placed.
    """
    ctx = _Context(fleet, snapshot, thermal_cfg)
    if not apps:
        candidate = _evaluate_joint(tuple(base), ctx)
        return [candidate] if candidate is not None else []
    poisoned = ctx.poisoned_devices()
    if poisoned:
        raise OutOfResourceError(
            apps[0][0].id, "thermal",
            f"idle power alone overheats device(s) {', '.join(poisoned)}",
        )
    tasks = []
    for app, binding in apps:
        model = models[app.model]
        tasks.append(ctx.make_task(app, model, binding))
    tasks = _order_tasks(tasks)
    orders = [tasks]
    if len(tasks) == 2:
        orders.append([tasks[1], tasks[0]])

    candidates: list[JointCandidate] = []
    infeasible_best: Sequence[PlannedApp] | None = None
    first_failure: OutOfResourceError | None = None
    for ordered in orders:
        try:
            states = _run_joint_beam(ordered, ctx, cfg, fleet, base)
        except OutOfResourceError as exc:
            if first_failure is None:
                first_failure = exc
            continue
        for state in states:
            candidate = _evaluate_joint(state.base_planned, ctx)
            if candidate is not None:
                candidates.append(candidate)
            elif infeasible_best is None:
                infeasible_best = state.base_planned
    if not candidates:
        rescued = _rescue(tasks, ctx, models, cfg, base)
        if rescued is not None:
            return [rescued]
        if first_failure is not None:
            raise first_failure
        app_id = _thermal_offender(infeasible_best, ctx) if infeasible_best else tasks[0].app.id
        raise OutOfResourceError(app_id, "thermal")

    ranking = Objective.max_throughput()
    candidates.sort(key=lambda c: candidate_key(c, ranking, fleet))
    mutable = frozenset(task.app.id for task in tasks)
    improved = _local_search(candidates[0], ctx, ranking, cfg, mutable)
    if improved is not candidates[0]:
        candidates.insert(0, improved)
    # Deduplicate identical plan sets while preserving rank order.
    seen: set[tuple] = set()
    unique: list[JointCandidate] = []
    for cand in candidates:
        tag = _pedigree(cand.planned)
        if tag not in seen:
            seen.add(tag)
            unique.append(cand)
    return unique


def _run_joint_beam(
    tasks: Sequence[_AppTask],
    ctx: _Context,
    cfg: SearchConfig,
    fleet: Fleet,
    base: Sequence[PlannedApp],
) -> list[_State]:
    base_ledger = _Ledger.from_planned(base, fleet)
    raw0, eff0 = base_ledger.max_scores(ctx.util_cap)
    root = _State(
        base=base_ledger,
        base_planned=tuple(base),
        pedigree=_pedigree(base),
        node=None,
        layer=0,
        nseg=sum(len(p.plan.segments) for p in base),
        own_nseg=0,
        eff_max=eff0,
        raw_max=raw0,
        input_total=_input_cost(base, fleet),
        devseq=(),
        cuts=(),
    )
    states: list[_State] = [root]
    for task in tasks:
        rejects = _RejectCounter()
        completions = _expand_app(ctx, task, states, cfg, rejects)
        if not completions:
            raise OutOfResourceError(task.app.id, rejects.dominant())
        # Completed app plans become the joint bases for the next app.
        next_states: list[_State] = []
        for state in completions:
            planned = state.base_planned + (_state_to_planned(state, task),)
            ledger = _ledger_from_state(state, task, fleet)
            next_states.append(
                _State(
                    base=ledger,
                    base_planned=planned,
                    pedigree=_pedigree(planned),
                    node=None,
                    layer=0,
                    nseg=state.nseg,
                    own_nseg=0,
                    eff_max=state.eff_max,
                    raw_max=state.raw_max,
                    input_total=state.input_total,
                    devseq=(),
                    cuts=(),
                )
            )
        states = next_states
    return states


def _ledger_from_state(state: _State, task: _AppTask, fleet: Fleet) -> _Ledger:
    ledger = state.base.copy()
    node = state.node
    while node is not None:
        for il, key, val in node.res_adds:
            target = ledger.link_busy if il else ledger.dev_busy
            target[key] = target.get(key, 0.0) + val
        ledger.weight[node.device] = ledger.weight.get(node.device, 0) + node.w
        ledger.bias[node.device] = ledger.bias.get(node.device, 0) + node.b
        ledger.data[node.device] = ledger.data.get(node.device, 0) + node.d
        node = node.parent
    return ledger


def _thermal_offender(planned: Sequence[PlannedApp], ctx: _Context) -> str:
    cost = workload_cost(planned, ctx.fleet)
    utils = device_utilizations(cost)
    check = thermal_feasible(utils, ctx.snapshot.wear, ctx.fleet, ctx.thermal_cfg)
    hot = set(check.violations)
    for entry in planned:
        if any(seg.device in hot for seg in entry.plan.segments):
            return entry.app.id
    return planned[0].app.id


def _rescue(
    tasks: Sequence[_AppTask],
    ctx: _Context,
    models: Mapping[str, ModelGraph],
    cfg: SearchConfig,
    base: Sequence[PlannedApp],
) -> JointCandidate | None:
    """Exhaustive fallback on tiny instances so the beam never reports a
    false out-of-resource where a feasible plan exists."""
    if base:
        return None
    if len(tasks) > ORACLE_MAX_APPS or len(ctx.device_ids) > ORACLE_MAX_DEVICES:
        return None
    if any(len(t.model.layers) > ORACLE_MAX_LAYERS for t in tasks):
        return None
    try:
        result = brute_force_optimal(
            [(t.app, t.binding) for t in tasks],
            ctx.fleet,
            ctx.snapshot,
            models,
            Objective.max_throughput(),
            ctx.thermal_cfg,
            k_max=cfg.max_segments_per_model,
        )
    except (OutOfResourceError, InstanceTooLargeError):
        return None
    log.debug("beam OOR rescued by exhaustive search")
    return result


def select_plan(
    candidates: Sequence[JointCandidate], objective: Objective, fleet: Fleet
) -> JointCandidate:
    """Pick the best candidate under the objective and the documented total order."""
    if not candidates:
        raise ValueError("candidates must be non-empty")
    pool = list(candidates)
    if objective.kind is ObjectiveKind.MIN_ENERGY and objective.throughput_floor is not None:
        pool = [c for c in pool if c.workload.throughput() >= objective.throughput_floor]
        if not pool:
            raise NoCandidateMeetsFloorError(
                f"no candidate reaches {objective.throughput_floor} inferences/s"
            )
    return min(pool, key=lambda c: candidate_key(c, objective, fleet))


# ---------------------------------------------------------------------------
# Workload-level wrappers.


@dataclass(frozen=True)
class WorkloadPlan:
    """Outcome of a planning pass: placed apps plus suspended ones."""

    planned: tuple[PlannedApp, ...]
    suspended: Mapping[str, str]  # app id -> failed constraint

    def plan_for(self, app_id: str) -> ExecutionPlan | None:
        for entry in self.planned:
            if entry.app.id == app_id:
                return entry.plan
        return None


def plan_workload(
    apps: Sequence[AppSpec],
    models: Mapping[str, ModelGraph],
    fleet: Fleet,
    snapshot: AvailabilitySnapshot,
    cfg: SearchConfig = SearchConfig(),
    thermal_cfg: ThermalConfig = ThermalConfig(),
    objective: Objective = Objective.max_throughput(),
    base: Sequence[PlannedApp] = (),
) -> WorkloadPlan:
    """Bind and plan every app, dropping (and reporting) apps that cannot fit."""
    suspended: dict[str, str] = {}
    bound: list[tuple[AppSpec, Binding]] = []
    for app in apps:
        try:
            binding = bind_virtual(app, fleet, snapshot, models[app.model])
        except NoSensorError:
            suspended[app.id] = "sensor"
            continue
        except NoOutputError:
            suspended[app.id] = "output"
            continue
        bound.append((app, binding))

    while True:
        if not bound:
            base_only = tuple(base)
            return WorkloadPlan(planned=base_only, suspended=suspended)
        try:
            candidates = generate_plan_candidates(
                bound, fleet, snapshot, models, cfg, thermal_cfg, base=base
            )
            chosen = select_plan(candidates, objective, fleet)
            ordered = _in_registration_order(chosen.planned, apps, base)
            return WorkloadPlan(planned=ordered, suspended=suspended)
        except OutOfResourceError as exc:
            suspended[exc.app_id] = exc.constraint
            log.info("app %s suspended: %s", exc.app_id, exc.constraint)
            bound = [(a, b) for a, b in bound if a.id != exc.app_id]


def _in_registration_order(
    planned: Sequence[PlannedApp], apps: Sequence[AppSpec], base: Sequence[PlannedApp]
) -> tuple[PlannedApp, ...]:
    by_id = {entry.app.id: entry for entry in planned}
    ordered: list[PlannedApp] = []
    for entry in base:
        if entry.app.id in by_id:
            ordered.append(by_id.pop(entry.app.id))
    for app in apps:
        if app.id in by_id:
            ordered.append(by_id.pop(app.id))
    ordered.extend(by_id.values())
    return tuple(ordered)


# ---------------------------------------------------------------------------
# Brute-force oracle.


@dataclass
class _EnumeratedPlan:
    segments: tuple[PlanSegment, ...]
    raw: np.ndarray
    eff: np.ndarray
    weight: np.ndarray
    bias: np.ndarray
    data: np.ndarray
    nseg: int
    input_cost: float
    energy: float


def _enumerate_app_plans(
    task: _AppTask,
    ctx: _Context,
    k_max: int,
    res_index: Mapping[tuple, int],
    dev_index: Mapping[str, int],
) -> list[_EnumeratedPlan]:
    fleet = ctx.fleet
    n = len(task.model.layers)
    n_res = len(res_index)
    n_dev = len(dev_index)
    out: list[_EnumeratedPlan] = []
    for cuts in enumerate_cut_candidates(task.model, k_max):
        spans = []
        bounds = [0, *cuts, n]
        for i in range(len(bounds) - 1):
            spans.append((bounds[i], bounds[i + 1]))
        for devices in itertools.product(ctx.device_ids, repeat=len(spans)):
            if any(devices[i] == devices[i + 1] for i in range(len(devices) - 1)):
                continue
            raw = np.zeros(n_res)
            weight = np.zeros(n_dev)
            bias = np.zeros(n_dev)
            data = np.zeros(n_dev)
            energy = 0.0
            ok = True
            input_cost = 0.0
            for i, ((start, stop), dev_id) in enumerate(zip(spans, devices)):
                device = fleet.device(dev_id)
                compute = task.span_compute(dev_id, start, stop)
                raw[res_index[(False, dev_id)]] += compute
                energy += (device.active_power_w - device.idle_power_w) * compute
                weight[dev_index[dev_id]] += task.span_weight(start, stop)
                bias[dev_index[dev_id]] += task.span_bias(start, stop)
                charge = segment_data_bytes(task.model, (start, stop))
                if i == 0:
                    charge += task.model.input_bytes
                data[dev_index[dev_id]] += charge
                src = task.binding.sensor_device if i == 0 else devices[i - 1]
                nbytes = (
                    task.model.input_bytes if i == 0
                    else task.model.layers[start - 1].out_activation_bytes
                )
                seconds = _transfer_seconds(fleet, src, dev_id, nbytes)
                if seconds is None:
                    ok = False
                    break
                if src != dev_id:
                    raw[res_index[(True, (src, dev_id))]] += seconds
                    energy += nbytes * fleet.link(src, dev_id).energy_per_byte_j
                if i == 0:
                    input_cost = seconds
            if not ok:
                continue
            last_dev = devices[-1]
            seconds = _transfer_seconds(fleet, last_dev, task.binding.output_device,
                                        task.model.output_bytes)
            if seconds is None:
                continue
            if last_dev != task.binding.output_device:
                raw[res_index[(True, (last_dev, task.binding.output_device))]] += seconds
                energy += (task.model.output_bytes
                           * fleet.link(last_dev, task.binding.output_device).energy_per_byte_j)
            if task.app.postprocess_latency_s > 0:
                out_dev = fleet.device(task.binding.output_device)
                raw[res_index[(False, out_dev.id)]] += task.app.postprocess_latency_s
                energy += ((out_dev.active_power_w - out_dev.idle_power_w)
                           * task.app.postprocess_latency_s)
            eff = raw.copy()
            for dev_id, idx in dev_index.items():
                cap = ctx.util_cap[dev_id]
                r_idx = res_index[(False, dev_id)]
                if cap < 1.0:
                    if raw[r_idx] > 0 and cap <= 0.0:
                        eff[r_idx] = np.inf
                    elif cap > 0.0:
                        eff[r_idx] = raw[r_idx] / cap
            out.append(
                _EnumeratedPlan(
                    segments=tuple(
                        PlanSegment(device=d, start=s[0], end=s[1])
                        for d, s in zip(devices, spans)
                    ),
                    raw=raw,
                    eff=eff,
                    weight=weight,
                    bias=bias,
                    data=data,
                    nseg=len(spans),
                    input_cost=input_cost,
                    energy=energy,
                )
            )
    return out


def brute_force_optimal(
    apps: Sequence[tuple[AppSpec, Binding]],
    fleet: Fleet,
    snapshot: AvailabilitySnapshot,
    models: Mapping[str, ModelGraph],
    objective: Objective = Objective.max_throughput(),
    thermal_cfg: ThermalConfig = ThermalConfig(),
    k_max: int = 4,
) -> JointCandidate:
    """Exhaustive joint optimum on tiny instances (the test oracle).

    Guard: at most 2 apps, 3 available devices, and 8 layers per model.
    Raises InstanceTooLargeError beyond the guard and OutOfResourceError
    when no feasible joint plan exists.
    """
    if len(apps) > ORACLE_MAX_APPS:
        raise InstanceTooLargeError(f"oracle guard: at most {ORACLE_MAX_APPS} apps")
    if len(snapshot.available) > ORACLE_MAX_DEVICES:
        raise InstanceTooLargeError(f"oracle guard: at most {ORACLE_MAX_DEVICES} devices")
    for app, _ in apps:
        if len(models[app.model].layers) > ORACLE_MAX_LAYERS:
            raise InstanceTooLargeError(
                f"oracle guard: at most {ORACLE_MAX_LAYERS} layers per model"
            )
    if not apps:
        raise ValueError("oracle needs at least one app")

    ctx = _Context(fleet, snapshot, thermal_cfg)
    poisoned = ctx.poisoned_devices()
    if poisoned:
        raise OutOfResourceError(
            apps[0][0].id, "thermal",
            f"idle power alone overheats device(s) {', '.join(poisoned)}",
        )
    dev_index = {dev_id: i for i, dev_id in enumerate(ctx.device_ids)}
    res_keys: list[tuple] = [(False, d) for d in ctx.device_ids]
    for link in fleet.links:
        res_keys.append((True, (link.src, link.dst)))
    res_index = {key: i for i, key in enumerate(res_keys)}

    tasks = [ctx.make_task(app, models[app.model], binding) for app, binding in apps]
    enumerated = [_enumerate_app_plans(t, ctx, k_max, res_index, dev_index) for t in tasks]
    caps_w = np.array([fleet.device(d).weight_mem_bytes for d in ctx.device_ids], dtype=float)
    caps_b = np.array([fleet.device(d).bias_mem_bytes for d in ctx.device_ids], dtype=float)
    caps_d = np.array([fleet.device(d).data_mem_bytes for d in ctx.device_ids], dtype=float)

    for task, plans in zip(tasks, enumerated):
        if not plans:
            raise OutOfResourceError(task.app.id, "route")

    want_energy = objective.kind is ObjectiveKind.MIN_ENERGY
    floor = objective.throughput_floor

    def feasible_period(raw_max: np.ndarray, eff_max: np.ndarray) -> np.ndarray:
        return eff_max <= raw_max * (1 + 1e-12) + 1e-18

    if len(tasks) == 1:
        plans = enumerated[0]
        raw = np.stack([p.raw for p in plans])
        eff = np.stack([p.eff for p in plans])
        weight = np.stack([p.weight for p in plans])
        bias = np.stack([p.bias for p in plans])
        data = np.stack([p.data for p in plans])
        period = raw.max(axis=1)
        eff_max = eff.max(axis=1)
        mask = (
            (weight <= caps_w).all(axis=1)
            & (bias <= caps_b).all(axis=1)
            & (data <= caps_d).all(axis=1)
            & feasible_period(period, eff_max)
        )
        if floor is not None:
            with np.errstate(divide="ignore"):
                mask &= np.where(period > 0, 1.0 / np.maximum(period, 1e-300), np.inf) >= floor
        if not mask.any():
            raise OutOfResourceError(tasks[0].app.id, _oracle_reason(weight, caps_w, data, caps_d))
        values = np.array([p.energy for p in plans]) if want_energy else period
        values = np.where(mask, values, np.inf)
        shortlist = _shortlist(values)
        combos = [(i,) for i in shortlist]
    else:
        plans_a, plans_b = enumerated
        raw_b = np.stack([p.raw for p in plans_b])
        eff_b = np.stack([p.eff for p in plans_b])
        weight_b = np.stack([p.weight for p in plans_b])
        bias_b = np.stack([p.bias for p in plans_b])
        data_b = np.stack([p.data for p in plans_b])
        energy_b = np.array([p.energy for p in plans_b])
        best_value = np.inf
        per_i_values: list[np.ndarray] = []
        any_feasible = False
        for pa in plans_a:
            raw_max = np.maximum(raw_b + pa.raw, 0).max(axis=1)
            eff_max = np.maximum(eff_b + pa.eff, 0).max(axis=1)
            mask = (
                (weight_b + pa.weight <= caps_w).all(axis=1)
                & (bias_b + pa.bias <= caps_b).all(axis=1)
                & (data_b + pa.data <= caps_d).all(axis=1)
                & feasible_period(raw_max, eff_max)
            )
            if floor is not None:
                with np.errstate(divide="ignore"):
                    tput = np.where(raw_max > 0, 1.0 / np.maximum(raw_max, 1e-300), np.inf)
                mask &= tput >= floor
            values = (pa.energy + energy_b) if want_energy else raw_max
            values = np.where(mask, values, np.inf)
            per_i_values.append(values)
            if mask.any():
                any_feasible = True
                best_value = min(best_value, float(values.min()))
        if not any_feasible:
            weight_a = np.stack([p.weight for p in plans_a])
            data_a = np.stack([p.data for p in plans_a])
            raise OutOfResourceError(
                tasks[0].app.id,
                _oracle_reason(weight_a, caps_w, data_a, caps_d),
            )
        threshold = best_value * (1 + 1e-9) + 1e-18
        scored: list[tuple[tuple, tuple[int, int]]] = []
        for i, values in enumerate(per_i_values):
            for j in np.nonzero(values <= threshold)[0]:
                j = int(j)
                approx = (
                    float(values[j]),
                    plans_a[i].nseg + plans_b[j].nseg,
                    plans_a[i].input_cost + plans_b[j].input_cost,
                )
                scored.append((approx, (i, j)))
        scored.sort(key=lambda pair: pair[0])
        combos = [combo for _, combo in scored[:512]]

    # Exact re-evaluation of the shortlisted combinations through cost_model,
    # compared under the shared total order.
    best: JointCandidate | None = None
    best_key: tuple | None = None
    for combo in combos:
        planned = tuple(
            PlannedApp(
                app=task.app,
                model=task.model,
                binding=task.binding,
                plan=ExecutionPlan(app=task.app.id, segments=enumerated[k][idx].segments),
            )
            for k, (task, idx) in enumerate(zip(tasks, combo))
        )
        candidate = _evaluate_joint(planned, ctx)
        if candidate is None:
            continue
        if floor is not None and candidate.workload.throughput() < floor:
            continue
        key = candidate_key(candidate, objective, fleet)
        if best_key is None or key < best_key:
            best, best_key = candidate, key
    if best is None:
        if floor is not None:
            raise NoCandidateMeetsFloorError(
                f"no candidate reaches {floor} inferences/s"
            )
        raise OutOfResourceError(tasks[0].app.id, "thermal")
    return best


def _shortlist(values: np.ndarray) -> list[int]:
    best = float(values.min())
    if not np.isfinite(best):
        return []
    threshold = best * (1 + 1e-9) + 1e-18
    return [int(i) for i in np.nonzero(values <= threshold)[0][:4096]]


def _oracle_reason(
    weight: np.ndarray, caps_w: np.ndarray, data: np.ndarray, caps_d: np.ndarray
) -> str:
    # Heuristic attribution: which capacity is most often exceeded.
    w_fail = int((weight > caps_w).any(axis=1).sum())
    d_fail = int((data > caps_d).any(axis=1).sum())
    if w_fail >= d_fail and w_fail > 0:
        return "weight_mem"
    if d_fail > 0:
        return "data_mem"
    return "thermal"


# ---------------------------------------------------------------------------
# Split-computing baseline.


def neurosurgeon_baseline(
    app: AppSpec,
    binding: Binding,
    fleet: Fleet,
    snapshot: AvailabilitySnapshot,
    model: ModelGraph,
    base: Sequence[PlannedApp] = (),
) -> ExecutionPlan:
    """Two-device split baseline: one cut between the sensor-bound device and
    the largest-weight-memory available device, chosen to minimize latency.

    Memory checks are cumulative over ``base``; thermal constraints are
    ignored (the baseline is thermally unaware by construction).
    """
    local = binding.sensor_device
    remote_candidates = [
        fleet.device(d) for d in sorted(snapshot.available) if d != local
    ]
    if remote_candidates:
        remote = sorted(remote_candidates, key=lambda d: (-d.weight_mem_bytes, d.id))[0].id
    else:
        remote = local
    n = len(model.layers)
    use = memory_use(base)
    best: tuple[float, int] | None = None
    best_plan: ExecutionPlan | None = None
    saw_memory_fail = False
    saw_route_fail = False
    for split in range(n + 1):
        if split == 0:
            segments = (PlanSegment(device=remote, start=0, end=n),)
        elif split == n:
            segments = (PlanSegment(device=local, start=0, end=n),)
        else:
            if local == remote:
                continue
            segments = (
                PlanSegment(device=local, start=0, end=split),
                PlanSegment(device=remote, start=split, end=n),
            )
        plan = ExecutionPlan(app=app.id, segments=segments)
        if not _fits_memory(plan, model, fleet, use):
            saw_memory_fail = True
            continue
        try:
            cost = plan_cost(plan, model, fleet, binding, app.postprocess_latency_s)
        except NoRouteError:
            saw_route_fail = True
            continue
        key = (cost.latency_s, split)
        if best is None or key < best:
            best = key
            best_plan = plan
    if best_plan is None:
        if saw_memory_fail:
            raise OutOfResourceError(app.id, "weight_mem",
                                     f"no split fits on ({local}, {remote})")
        if saw_route_fail:
            raise OutOfResourceError(app.id, "route")
        raise OutOfResourceError(app.id, "weight_mem")
    return best_plan


def _fits_memory(
    plan: ExecutionPlan, model: ModelGraph, fleet: Fleet, use: MemoryUse
) -> bool:
    weight = dict(use.weight)
    bias = dict(use.bias)
    data = dict(use.data)
    for i, seg in enumerate(plan.segments):
        device = fleet.device(seg.device)
        weight[seg.device] = weight.get(seg.device, 0) + weight_footprint(model, seg.span)
        bias[seg.device] = bias.get(seg.device, 0) + bias_footprint(model, seg.span)
        charge = segment_data_bytes(model, seg.span)
        if i == 0:
            charge += model.input_bytes
        data[seg.device] = data.get(seg.device, 0) + charge
        if (
            weight[seg.device] > device.weight_mem_bytes
            or bias[seg.device] > device.bias_mem_bytes
            or data[seg.device] > device.data_mem_bytes
        ):
            return False
    return True


# ---------------------------------------------------------------------------
# Event-driven replanning.


@dataclass(frozen=True)
class ReplanOutcome:
    planned: tuple[PlannedApp, ...]
    suspended: Mapping[str, str]
    replanned: Mapping[str, str]  # app id -> reason
    kept: tuple[str, ...]


def replan_on_event(
    planned: Sequence[PlannedApp],
    suspended: Mapping[str, str],
    event: AvailabilityEvent,
    apps: Sequence[AppSpec],
    models: Mapping[str, ModelGraph],
    fleet: Fleet,
    snapshot: AvailabilitySnapshot,
    cfg: SearchConfig = SearchConfig(),
    thermal_cfg: ThermalConfig = ThermalConfig(),
    objective: Objective = Objective.max_throughput(),
) -> ReplanOutcome:
    """Recompute plans for apps the event actually affects.

    Untouched apps keep their identical plan objects (stability rule).
    Suspended apps retry at every availability event. Reasons recorded per
    replanned app: ``binding``, ``device_lost``, ``thermal``, or ``retry``.
    """
    reasons: dict[str, str] = {}
    kept: list[PlannedApp] = []
    for entry in planned:
        if (
            entry.binding.sensor_device not in snapshot.available
            or entry.binding.output_device not in snapshot.available
        ):
            reasons[entry.app.id] = "binding"
        elif any(seg.device not in snapshot.available for seg in entry.plan.segments):
            reasons[entry.app.id] = "device_lost"
        else:
            kept.append(entry)

    # Wear flips change ceilings: apps hosted on now-violating devices move.
    if kept and event.change in (AvailabilityChange.WORN, AvailabilityChange.DOFFED):
        cost = workload_cost(kept, fleet)
        utils = device_utilizations(cost)
        check = thermal_feasible(utils, snapshot.wear, fleet, thermal_cfg)
        if not check.feasible:
            hot = set(check.violations)
            still_kept = []
            for entry in kept:
                if any(seg.device in hot for seg in entry.plan.segments):
                    reasons[entry.app.id] = "thermal"
                else:
                    still_kept.append(entry)
            kept = still_kept

    for app_id in suspended:
        reasons.setdefault(app_id, "retry")

    if not reasons:
        return ReplanOutcome(
            planned=tuple(planned),
            suspended=dict(suspended),
            replanned={},
            kept=tuple(entry.app.id for entry in planned),
        )

    by_id = {app.id: app for app in apps}
    retry_apps = [by_id[a] for a in apps_order(apps) if a in reasons]
    result = plan_workload(
        retry_apps, models, fleet, snapshot, cfg, thermal_cfg, objective, base=tuple(kept)
    )
    replanned = {
        app_id: reason for app_id, reason in reasons.items()
        if app_id not in result.suspended
    }
    return ReplanOutcome(
        planned=result.planned,
        suspended=dict(result.suspended),
        replanned=replanned,
        kept=tuple(entry.app.id for entry in kept),
    )


def apps_order(apps: Sequence[AppSpec]) -> list[str]:
    return [app.id for app in apps]


# ---------------------------------------------------------------------------
# Plan report serialization.


def plan_report(
    workload_plan: WorkloadPlan,
    fleet: Fleet,
    snapshot: AvailabilitySnapshot,
    thermal_cfg: ThermalConfig = ThermalConfig(),
) -> dict:
    """Structured report of a planning pass; parseable back into plans."""
    if workload_plan.planned:
        cost = workload_cost(workload_plan.planned, fleet)
        utils = device_utilizations(cost)
        temps = thermal_feasible(utils, snapshot.wear, fleet, thermal_cfg).temps_c
        shared = cost.shared_period_s
        apps = [
            {
                "app": entry.app.id,
                "segments": [
                    {"device": s.device, "start": s.start, "end": s.end}
                    for s in entry.plan.segments
                ],
                "period_s": cost.per_app[entry.app.id].period_s,
                "latency_s": cost.per_app[entry.app.id].latency_s,
                "energy_j": cost.per_app[entry.app.id].energy_j,
            }
            for entry in workload_plan.planned
        ]
    else:
        temps = thermal_feasible({}, snapshot.wear, fleet, thermal_cfg).temps_c
        shared = 0.0
        apps = []
    return {
        "apps": apps,
        "shared_period_s": shared,
        "device_temps_c": {k: temps[k] for k in sorted(temps)},
        "oor": [
            {"app": app_id, "constraint": constraint}
            for app_id, constraint in sorted(workload_plan.suspended.items())
        ],
    }


def parse_plan_report(text: str) -> dict[str, ExecutionPlan]:
    data = json.loads(text)
    return {
        entry["app"]: ExecutionPlan.from_dict(entry)
        for entry in data["apps"]
    }
