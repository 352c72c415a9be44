"""Horizontal (row-partitioned) federation through a key-holding coordinator.

Per histogram pass every guest reports the distinct values of its working
rows; the coordinator merges them into global candidate thresholds.  For
each feature it encrypts a random mask histogram and hands it to the first
guest in ring order; each guest homomorphically adds its own per-bin
counts and forwards it; the last guest returns it to the coordinator, which
decrypts, removes the mask and scores every threshold.  Guests only ever
handle ciphertexts of other parties' counts.

Known leakage: the coordinator learns each guest's distinct feature values
of the working rows and the global per-bin counts; guests learn the global
candidate thresholds and every broadcast condition.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..core import (
    CATEGORICAL,
    Condition,
    Dataset,
    HyperParams,
    Rule,
    RuleSet,
    metrics_from_counts,
)
from ..errors import InvalidDataError, MissingLabelsError, ProtocolError, ProtocolIntegrityError
from ..inducer import CountProfile, accepts, candidate_splits, select_best
from .. import paillier
from ..serialize import condition_from_dict, condition_to_dict, ruleset_from_dict, ruleset_to_dict
from ..transport import Channel, send_error

log = logging.getLogger(__name__)

DEFAULT_KEY_BITS = 1024


@dataclass(frozen=True)
class FeatureHistogram:
    """Per-bin (total, positive) counts of one feature over ``bin_edges``.

    Bin ``k`` holds values in ``(edge[k-1], edge[k]]``; rows with a missing
    value are counted separately in ``missing``.  Counts are plaintext ints
    or :class:`~fedfeare.paillier.Ciphertext` objects.
    """

    feature_id: int
    bin_edges: tuple
    bins: tuple
    missing: tuple = (0, 0)

    def __post_init__(self):
        if len(self.bins) != len(self.bin_edges) + 1:
            raise ValueError("bin count must equal edge count + 1")

    @property
    def totals(self) -> np.ndarray:
        return np.array([b[0] for b in self.bins], dtype=np.int64)

    @property
    def positives(self) -> np.ndarray:
        return np.array([b[1] for b in self.bins], dtype=np.int64)

    @property
    def n_rows(self) -> int:
        return int(self.totals.sum()) + int(self.missing[0])

    @property
    def n_positive(self) -> int:
        return int(self.positives.sum()) + int(self.missing[1])

    def profile(self) -> CountProfile:
        tot, pos = self.totals, self.positives
        le_cover = np.cumsum(tot)[:-1]
        le_correct = np.cumsum(pos)[:-1]
        return CountProfile(le_cover, le_correct, int(tot.sum()) - le_cover, int(pos.sum()) - le_correct)


def build_local_histogram(values: np.ndarray, labels: np.ndarray, edges: Sequence[float],
                          feature_id: int = 0) -> FeatureHistogram:
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.float64)
    miss = np.isnan(values)
    v, y = values[~miss], labels[~miss]
    idx = np.searchsorted(edges, v, side="left")
    tot = np.bincount(idx, minlength=len(edges) + 1)
    pos = np.bincount(idx, weights=y, minlength=len(edges) + 1).astype(np.int64)
    bins = tuple((int(a), int(b)) for a, b in zip(tot, pos))
    return FeatureHistogram(feature_id, tuple(float(e) for e in edges), bins,
                            (int(miss.sum()), int(labels[miss].sum())))


@dataclass
class HorizontalReport:
    session: str
    passes: int = 0
    histograms: int = 0
    global_histograms: list = field(default_factory=list)


def _hex_pairs(pairs) -> list:
    return [[c.to_hex() for c in p] for p in pairs]


def _session_id(rng) -> str:
    return format(rng.getrandbits(64), "016x")


# ---------------------------------------------------------------------------
# coordinator

def run_horizontal_coordinator(guests: Sequence[Channel], params: HyperParams = HyperParams(), *,
                               key_bits: int = DEFAULT_KEY_BITS, rng=None, seed=None,
                               keep_histograms: bool = False) -> tuple[RuleSet, HorizontalReport]:
    """Run training over >= 2 guest channels; returns the broadcast rule set."""
    if len(guests) < 2:
        raise ProtocolError("horizontal training needs at least two guests")
    ring = sorted(guests, key=lambda ch: ch.peer)
    if len({ch.peer for ch in ring}) != len(ring):
        raise ProtocolError("guest identifiers must be distinct")
    rng = rng or random.Random(seed)
    session = _session_id(rng)
    report = HorizontalReport(session)
    pk, sk = paillier.keygen(key_bits, rng)
    mask_bound = pk.n // 4

    try:
        for ch in ring:
            ch.send("SessionStart", {"role": "coordinator", "params": params.to_dict(),
                                     "ring": [g.peer for g in ring]}, session)
            ch.send("PublicKey", {"n": pk.to_hex()}, session)

        def histogram_pass(tree: int, depth: int) -> tuple[list[str], list[FeatureHistogram]]:
            for ch in ring:
                ch.send("ScanRequest", {"tree": tree, "depth": depth}, session)
            names, values = None, None
            for ch in ring:
                feats = ch.expect("CandidateValues").body["features"]
                these = [f["name"] for f in feats]
                if names is None:
                    names, values = these, [[] for _ in these]
                elif these != names:
                    raise ProtocolError(f"guest {ch.peer} announced features {these}, expected {names}")
                for acc, f in zip(values, feats):
                    acc.extend(float(x) for x in f["values"])
            if not names:
                raise ProtocolError("guests announced no features")
            masks = []
            for fid, (name, vals) in enumerate(zip(names, values)):
                edges = candidate_splits(vals) if vals else np.empty(0)
                mask = [(rng.randrange(mask_bound), rng.randrange(mask_bound)) for _ in range(len(edges) + 2)]
                masks.append((edges, mask))
                enc = [(paillier.encrypt(pk, a, rng), paillier.encrypt(pk, b, rng)) for a, b in mask]
                ring[0].send("MaskedHistogram", {
                    "feature": name, "edges": [float(e) for e in edges],
                    "bins": _hex_pairs(enc[:-1]), "missing": [c.to_hex() for c in enc[-1]],
                }, session)
            hists = []
            for fid, (name, (edges, mask)) in enumerate(zip(names, masks)):
                body = ring[-1].expect("HistogramReturn").body
                if body["feature"] != name or len(body["bins"]) != len(edges) + 1:
                    raise ProtocolError(f"histogram for {body['feature']!r} does not match the pass")
                cells = list(body["bins"]) + [body["missing"]]
                counts = []
                for (c_tot, c_pos), (m_tot, m_pos) in zip(cells, mask):
                    tot = paillier.decrypt(sk, pk, pk.ciphertext(int(c_tot, 16))) - m_tot
                    pos = paillier.decrypt(sk, pk, pk.ciphertext(int(c_pos, 16))) - m_pos
                    if tot < 0 or pos < 0 or pos > tot:
                        raise ProtocolIntegrityError(f"unmasked counts ({tot}, {pos}) are impossible")
                    counts.append((tot, pos))
                hists.append(FeatureHistogram(fid, tuple(float(e) for e in edges),
                                              tuple(counts[:-1]), counts[-1]))
            report.passes += 1
            report.histograms += len(hists)
            if keep_histograms:
                report.global_histograms.append(hists)
            return names, hists

        rules, covers, corrects, targets = [], [], [], []
        n_rows = n_positive = None
        for tree in range(params.tree_number):
            conditions: list[Condition] = []
            running_f = 0.0
            n_target = None
            last_stats = None
            for depth in range(params.max_depth):
                names, hists = histogram_pass(tree, depth)
                if n_target is None:
                    n_target = hists[0].n_positive
                    if n_rows is None:
                        n_rows, n_positive = hists[0].n_rows, n_target
                    if n_target == 0:
                        break
                best = None
                for name, h in zip(names, hists):
                    sel = select_best(h.profile(), n_target, params.beta)
                    if sel is not None and (best is None or sel[2] > best[3]):
                        best = (name, sel[0], sel[1], sel[2], sel[3], h.bin_edges)
                if best is None or not accepts(best[3], running_f, params.pruning_min):
                    break
                name, j, direction, f, stats, edges = best
                cond = Condition(name, direction, edges[j])
                conditions.append(cond)
                running_f, last_stats = f, stats
                end = depth + 1 == params.max_depth
                for ch in ring:
                    ch.send("ConditionBroadcast", {"tree": tree, "depth": depth,
                                                   "condition": condition_to_dict(cond), "end_tree": end}, session)
                if end:
                    break
            if not conditions or len(conditions) < params.max_depth:
                for ch in ring:
                    ch.send("ConditionBroadcast", {"tree": tree, "depth": len(conditions),
                                                   "condition": None, "end_tree": True}, session)
            if not conditions:
                break
            rules.append(Rule(tuple(conditions)))
            covers.append(last_stats.n_cover)
            corrects.append(last_stats.n_correct)
            targets.append(n_target)

        metrics = metrics_from_counts(covers, corrects, targets, n_rows or 0, n_positive or 0, params.beta)
        rs = RuleSet(tuple(rules), params, tuple(metrics))
        for ch in ring:
            ch.send("RuleSetBroadcast", {"ruleset": ruleset_to_dict(rs)}, session)
            ch.send("SessionEnd", {}, session)
    except ProtocolError as e:
        for ch in ring:
            send_error(ch, session, e)
        raise
    log.info("horizontal session %s: %d rules, %d passes", session, len(rs), report.passes)
    return rs, report


# ---------------------------------------------------------------------------
# guest

def run_horizontal_guest(coordinator: Channel, data: Dataset, *, prev: Channel | None = None,
                         next: Channel | None = None, rng=None, seed=None) -> RuleSet:
    """Contribute local counts as a guest; returns the final broadcast rule set.

    ``prev``/``next`` are the ring links to the neighbouring guests; the
    first guest receives masked histograms from the coordinator and the
    last one returns them to it.
    """
    if not data.has_labels:
        raise MissingLabelsError("a guest must hold labels")
    if any(k == CATEGORICAL for k in data.feature_kinds):
        raise InvalidDataError("encode categorical columns consistently across guests before training")
    rng = rng or random.Random(seed)
    y = data.labels
    session = ""
    pk = None
    residual = np.arange(data.n_rows)
    working = residual
    conditions: list[Condition] = []
    result = None
    source = prev if prev is not None else coordinator
    sink = next if next is not None else coordinator
    out_kind = "MaskedHistogram" if next is not None else "HistogramReturn"

    def forward_histograms():
        for fid, (name, col) in enumerate(zip(data.feature_names, data.columns)):
            body = source.expect("MaskedHistogram").body
            if body["feature"] != name:
                raise ProtocolError(f"bin edges announced for {body['feature']!r}, expected {name!r}")
            edges = np.array(body["edges"], dtype=np.float64)
            if len(edges) > 1 and not (np.diff(edges) > 0).all():
                raise ProtocolError("bin edges are not strictly ascending")
            if len(body["bins"]) != len(edges) + 1:
                raise ProtocolError("bin count does not match edges")
            h = build_local_histogram(col[working], y[working], edges, fid)
            cells = list(body["bins"]) + [body["missing"]]
            local = list(h.bins) + [h.missing]
            summed = []
            for (c_tot, c_pos), (tot, pos) in zip(cells, local):
                summed.append([
                    paillier.c_add(pk, pk.ciphertext(int(c_tot, 16)), paillier.encrypt(pk, tot, rng)).to_hex(),
                    paillier.c_add(pk, pk.ciphertext(int(c_pos, 16)), paillier.encrypt(pk, pos, rng)).to_hex(),
                ])
            sink.send(out_kind, {"feature": name, "edges": body["edges"],
                                 "bins": summed[:-1], "missing": summed[-1]}, session)

    try:
        while True:
            msg = coordinator.recv()
            if msg.kind == "SessionStart":
                session = msg.session
            elif msg.kind == "PublicKey":
                pk = paillier.PublicKey.from_hex(msg.body["n"])
            elif msg.kind == "ScanRequest":
                if pk is None:
                    raise ProtocolError("ScanRequest before PublicKey")
                feats = []
                for name, col in zip(data.feature_names, data.columns):
                    v = col[working]
                    feats.append({"name": name, "values": [float(x) for x in np.unique(v[~np.isnan(v)])]})
                coordinator.send("CandidateValues", {"features": feats}, session)
                forward_histograms()
            elif msg.kind == "ConditionBroadcast":
                if msg.body["condition"] is not None:
                    cond = condition_from_dict(msg.body["condition"])
                    if cond.feature not in data.feature_names:
                        raise ProtocolError(f"broadcast condition on unknown feature {cond.feature!r}")
                    conditions.append(cond)
                    working = working[cond.mask(data.column(cond.feature)[working])]
                if msg.body["end_tree"]:
                    if conditions:
                        residual = np.setdiff1d(residual, working, assume_unique=True)
                    conditions = []
                    working = residual
            elif msg.kind == "RuleSetBroadcast":
                result = ruleset_from_dict(msg.body["ruleset"])
            elif msg.kind == "SessionEnd":
                if result is None:
                    raise ProtocolError("session ended without a rule set")
                return result
            elif msg.kind == "Error":
                raise ProtocolError(f"coordinator aborted: {msg.body.get('message')}")
            else:
                raise ProtocolError(f"guest cannot handle {msg.kind}")
    except ProtocolError as e:
        send_error(coordinator, session, e)
        raise


__all__ = [
    "FeatureHistogram", "HorizontalReport", "build_local_histogram",
    "run_horizontal_coordinator", "run_horizontal_guest",
]
