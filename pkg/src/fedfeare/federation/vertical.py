"""Vertical (feature-partitioned) federation: one active and one passive party.

The active party holds labels and drives induction.  It encrypts every
label once, and at each depth sends the current node's instance ids to the
passive party, which answers, for each of its candidate thresholds, the
plaintext cover count and the homomorphic sum of the encrypted labels of
the covered rows.  Thresholds never leave the passive party: the active
side refers to them by index only.

Known leakage under honest-but-curious parties: the passive party sees
node instance-id subsets and which of its splits were chosen; the active
party sees per-candidate cover counts of passive features.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field

import numpy as np

from ..core import (
    CATEGORICAL,
    Condition,
    Dataset,
    Direction,
    HyperParams,
    OpaqueSplit,
    Rule,
    RuleSet,
    apply_direction,
    encode_categoricals,
    metrics_from_counts,
)
from ..errors import (
    AlignmentError,
    InvalidDataError,
    MissingLabelsError,
    ProtocolError,
    ProtocolIntegrityError,
    StaleModelError,
)
from ..inducer import CountProfile, accepts, best_over_features, candidate_splits, select_best
from .. import paillier
from ..transport import Channel, send_error

log = logging.getLogger(__name__)

DEFAULT_KEY_BITS = 1024


@dataclass
class PassiveSplitTable:
    """Thresholds chosen during training, keyed by (feature_id, split_index)."""

    party: str
    feature_names: tuple = ()
    entries: dict = field(default_factory=dict)

    def add(self, feature_id: int, threshold: float) -> int:
        for (f, j), t in self.entries.items():
            if f == feature_id and t == threshold:
                return j
        j = sum(1 for f, _ in self.entries if f == feature_id)
        self.entries[(feature_id, j)] = float(threshold)
        return j

    def threshold(self, feature_id: int, split_index: int) -> float:
        try:
            return self.entries[(feature_id, split_index)]
        except KeyError:
            raise StaleModelError(
                f"no split ({feature_id}, {split_index}) recorded at {self.party}") from None

    def to_dict(self) -> dict:
        return {
            "party": self.party,
            "features": list(self.feature_names),
            "entries": [{"feature_id": f, "split_index": j, "threshold": t}
                        for (f, j), t in sorted(self.entries.items())],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PassiveSplitTable":
        t = cls(d["party"], tuple(d.get("features", ())))
        for e in d["entries"]:
            t.entries[(int(e["feature_id"]), int(e["split_index"]))] = float(e["threshold"])
        return t


@dataclass
class VerticalReport:
    session: str
    scans: int = 0
    decryptions: int = 0
    passive_splits: int = 0
    covered_rows: list = field(default_factory=list)


def substitute_thresholds(rs: RuleSet, table: PassiveSplitTable) -> RuleSet:
    """Replace opaque conditions by the passive party's plaintext thresholds.

    Only meaningful where both sides cooperate (tests, audits).
    """
    rules = []
    for rule in rs.rules:
        conds = []
        for c in rule:
            if c.is_opaque:
                s = c.threshold
                name = table.feature_names[s.feature_id]
                conds.append(Condition(name, c.direction, table.threshold(s.feature_id, s.split_index)))
            else:
                conds.append(c)
        rules.append(Rule(tuple(conds)))
    return RuleSet(tuple(rules), rs.params, rs.per_rule_metrics, rs.encodings)


# ---------------------------------------------------------------------------
# active party

def _session_id(rng) -> str:
    return format(rng.getrandbits(64), "016x")


def _decode_profile(entry: dict, pk, sk, n_node: int, report: VerticalReport) -> CountProfile:
    le, gt = entry.get("le"), entry.get("gt")
    if not isinstance(le, list) or not isinstance(gt, list) or len(le) != len(gt):
        raise ProtocolError("malformed ScanReply feature entry")

    def side(pairs):
        covers, corrects = [], []
        for cover, enc in pairs:
            cover = int(cover)
            correct = paillier.decrypt(sk, pk, pk.ciphertext(int(enc, 16)))
            report.decryptions += 1
            if not 0 <= cover <= n_node or correct > cover:
                raise ProtocolIntegrityError(
                    f"decrypted count {correct} inconsistent with cover {cover} (node size {n_node})")
            covers.append(cover)
            corrects.append(correct)
        return np.array(covers, dtype=np.int64), np.array(corrects, dtype=np.int64)

    le_cover, le_correct = side(le)
    gt_cover, gt_correct = side(gt)
    return CountProfile(le_cover, le_correct, gt_cover, gt_correct)


def run_vertical_active(peer: Channel, data: Dataset, params: HyperParams = HyperParams(), *,
                        key_bits: int = DEFAULT_KEY_BITS, rng=None, seed=None,
                        passive_party: str | None = None) -> tuple[RuleSet, VerticalReport]:
    """Drive training as the label holder; returns the rule set and a run report.

    Conditions on passive features come back as opaque splits.  Local
    features win exact F-score ties against passive ones, so the result
    equals centralized training on ``[local columns..., passive columns...]``.
    """
    if not data.has_labels:
        raise MissingLabelsError("the active party must hold labels")
    if any(k == CATEGORICAL for k in data.feature_kinds):
        data = encode_categoricals(data)
    rng = rng or random.Random(seed)
    passive_party = passive_party or peer.peer
    session = _session_id(rng)
    report = VerticalReport(session)
    y = data.labels
    ids = data.instance_ids

    pk, sk = paillier.keygen(key_bits, rng)
    peer.send("SessionStart", {"role": "active", "params": params.to_dict()}, session)
    peer.send("PublicKey", {"n": pk.to_hex()}, session)
    enc = [paillier.encrypt(pk, int(v), rng).to_hex() for v in y]
    peer.send("EncryptedLabels", {"ids": list(ids), "labels": enc}, session)

    residual = np.arange(data.n_rows)
    rules, covers, corrects, targets = [], [], [], []
    for tree in range(params.tree_number):
        n_target = int(y[residual].sum())
        if n_target == 0:
            break
        working = residual
        conditions: list[Condition] = []
        running_f = 0.0
        for depth in range(params.max_depth):
            if len(working) == 0:
                break
            best = best_over_features(data, working, n_target, params.beta)
            choice = None if best is None else ("local", best)

            peer.send("ScanRequest", {"tree": tree, "depth": depth,
                                      "ids": [ids[i] for i in working]}, session)
            reply = peer.expect("ScanReply")
            report.scans += 1
            for entry in reply.body["features"]:
                prof = _decode_profile(entry, pk, sk, len(working), report)
                sel = select_best(prof, n_target, params.beta)
                if sel is None:
                    continue
                j, direction, f, stats = sel
                if choice is None or f > _f_of(choice):
                    choice = ("passive", (int(entry["feature_id"]), j, direction, f, stats))

            if choice is None or not accepts(_f_of(choice), running_f, params.pruning_min):
                break
            if choice[0] == "local":
                c = choice[1].candidate
                conditions.append(Condition(c.feature, c.direction, c.threshold))
                working = working[apply_direction(data.column(c.feature)[working], c.direction, c.threshold)]
            else:
                feature_id, j, direction, f, stats = choice[1]
                peer.send("SplitChosen", {"feature_id": feature_id, "j": j, "op": direction.value}, session)
                cov = peer.expect("CoveredSet")
                covered = set(cov.body["ids"])
                keep = np.fromiter((ids[i] in covered for i in working), dtype=bool, count=len(working))
                if int(keep.sum()) != len(covered) or len(covered) != stats.n_cover:
                    raise ProtocolIntegrityError("covered set disagrees with the scanned cover count")
                split = OpaqueSplit(passive_party, feature_id, int(cov.body["split_index"]))
                conditions.append(Condition.opaque(split, direction))
                working = working[keep]
                report.passive_splits += 1
            running_f = _f_of(choice)
        if not conditions:
            break
        rules.append(Rule(tuple(conditions)))
        covers.append(len(working))
        corrects.append(int(y[working].sum()))
        targets.append(n_target)
        report.covered_rows.append(working)
        residual = np.setdiff1d(residual, working, assume_unique=True)

    peer.send("SessionEnd", {}, session)
    metrics = metrics_from_counts(covers, corrects, targets, data.n_rows, int(y.sum()), params.beta)
    log.info("vertical session %s: %d rules, %d scans", session, len(rules), report.scans)
    return RuleSet(tuple(rules), params, tuple(metrics), data.encodings), report


def _f_of(choice) -> float:
    kind, val = choice
    return val.f_score if kind == "local" else val[3]


# ---------------------------------------------------------------------------
# passive party

class _PassiveState:
    def __init__(self, data: Dataset, party: str, rng=None):
        self.data = data
        self.rng = rng or random.Random()
        self.row_of = {iid: i for i, iid in enumerate(data.instance_ids)}
        self.table = PassiveSplitTable(party, data.feature_names)
        self.session = ""
        self.pk = None
        self.enc_labels: list[int] | None = None
        self.last_rows: np.ndarray | None = None
        self.last_thresholds: list[np.ndarray] = []

    def rows_for(self, ids) -> np.ndarray:
        try:
            return np.array([self.row_of[i] for i in ids], dtype=np.int64)
        except KeyError as e:
            raise AlignmentError(f"instance {e.args[0]!r} unknown to the passive party") from None

    def set_labels(self, body: dict) -> None:
        ids, labels = body["ids"], body["labels"]
        if len(ids) != len(labels):
            raise ProtocolError("EncryptedLabels ids/labels differ in length")
        if len(ids) != self.data.n_rows or set(ids) != set(self.row_of):
            raise AlignmentError("instance ids of active and passive parties do not match")
        enc = [0] * self.data.n_rows
        for iid, c in zip(ids, labels):
            enc[self.row_of[iid]] = int(c, 16)
        self.enc_labels = enc

    def scan(self, ids) -> list[dict]:
        if self.enc_labels is None or self.pk is None:
            raise ProtocolError("scan before key and labels were received")
        rows = self.rows_for(ids)
        nn = self.pk.n_squared
        self.last_rows = rows
        self.last_thresholds = []
        out = []
        for fid, col in enumerate(self.data.columns):
            vals = col[rows]
            ok = ~np.isnan(vals)
            r, v = rows[ok], vals[ok]
            order = np.argsort(v, kind="stable")
            r, v = r[order], v[order]
            u, starts = np.unique(v, return_index=True)
            thresholds = candidate_splits(u)
            self.last_thresholds.append(thresholds)
            if len(thresholds) == 0:
                out.append({"feature_id": fid, "le": [], "gt": []})
                continue
            # product of encrypted labels per distinct value
            bounds = list(starts) + [len(v)]
            groups = []
            for a, b in zip(bounds[:-1], bounds[1:]):
                acc = 1
                for i in r[a:b]:
                    acc = acc * self.enc_labels[i] % nn
                groups.append(acc)
            k = len(u)
            prefix, acc = [], 1
            for g in groups[:-1]:
                acc = acc * g % nn
                prefix.append(acc)
            suffix, acc = [0] * (k - 1), 1
            for jj in range(k - 1, 0, -1):
                acc = acc * groups[jj] % nn
                suffix[jj - 1] = acc
            # fresh Enc(0) per cell so products cannot be matched to the active party's ciphertexts
            prefix = [self._rerandomize(c) for c in prefix]
            suffix = [self._rerandomize(c) for c in suffix]
            le_cover = bounds[1:k]
            out.append({
                "feature_id": fid,
                "le": [[str(c), format(s, "x")] for c, s in zip(le_cover, prefix)],
                "gt": [[str(len(v) - c), format(s, "x")] for c, s in zip(le_cover, suffix)],
            })
        return out

    def _rerandomize(self, c: int) -> int:
        r = paillier.random_unit(self.pk, self.rng)
        return c * paillier.powmod(r, self.pk.n, self.pk.n_squared) % self.pk.n_squared

    def choose(self, body: dict) -> dict:
        if self.last_rows is None:
            raise ProtocolError("SplitChosen before any scan")
        fid, j = int(body["feature_id"]), int(body["j"])
        try:
            t = float(self.last_thresholds[fid][j])
        except IndexError:
            raise ProtocolError(f"no candidate ({fid}, {j}) in the last scan") from None
        direction = Direction(body["op"])
        rows = self.last_rows
        covered = rows[apply_direction(self.data.columns[fid][rows], direction, t)]
        split_index = self.table.add(fid, t)
        return {"feature_id": fid, "split_index": split_index,
                "ids": [self.data.instance_ids[i] for i in covered]}

    def predict(self, body: dict) -> dict:
        rows = self.rows_for(body["ids"])
        results = []
        for c in body["conditions"]:
            fid, idx = int(c["feature_id"]), int(c["split_index"])
            if not 0 <= fid < self.data.n_features:
                raise StaleModelError(f"unknown passive feature {fid}")
            t = self.table.threshold(fid, idx)
            m = apply_direction(self.data.columns[fid][rows], Direction(c["op"]), t)
            results.append("".join("1" if b else "0" for b in m))
        return {"results": results}


def _passive_data(data: Dataset) -> Dataset:
    if data.has_labels:
        raise InvalidDataError("labels must not be supplied to a passive party")
    if any(k == CATEGORICAL for k in data.feature_kinds):
        data = encode_categoricals(data)
    return data


def run_vertical_passive(peer: Channel, data: Dataset, *, party: str | None = None,
                         rng=None, seed=None) -> PassiveSplitTable:
    """Answer scan and split requests until the active party ends the session.

    ``rng`` (or ``seed``) drives ciphertext re-randomization.
    """
    st = _PassiveState(_passive_data(data), party or peer.local, rng or random.Random(seed))
    while True:
        msg = peer.recv()
        try:
            if msg.kind == "SessionStart":
                st.session = msg.session
            elif msg.kind == "PublicKey":
                st.pk = paillier.PublicKey.from_hex(msg.body["n"])
            elif msg.kind == "EncryptedLabels":
                st.set_labels(msg.body)
            elif msg.kind == "ScanRequest":
                peer.send("ScanReply", {"features": st.scan(msg.body["ids"])}, st.session)
            elif msg.kind == "SplitChosen":
                peer.send("CoveredSet", st.choose(msg.body), st.session)
            elif msg.kind == "PredictRequest":
                peer.send("PredictReply", st.predict(msg.body), st.session)
            elif msg.kind == "SessionEnd":
                return st.table
            elif msg.kind == "Error":
                raise ProtocolError(f"active party aborted: {msg.body.get('message')}")
            else:
                raise ProtocolError(f"passive party cannot handle {msg.kind}")
        except (ProtocolError, InvalidDataError) as e:
            send_error(peer, st.session, e)
            raise


def serve_vertical_predict(peer: Channel, data: Dataset, table: PassiveSplitTable) -> int:
    """Evaluate opaque conditions for the active party until SessionEnd.

    Errors are reported to the peer and serving continues.  Returns the
    number of requests answered.
    """
    st = _PassiveState(_passive_data(data), table.party)
    st.table = table
    served = 0
    while True:
        msg = peer.recv()
        if msg.kind == "SessionEnd":
            return served
        if msg.kind == "SessionStart":
            st.session = msg.session
            continue
        if msg.kind != "PredictRequest":
            send_error(peer, st.session, ProtocolError(f"unexpected {msg.kind}"))
            continue
        try:
            peer.send("PredictReply", st.predict(msg.body), st.session)
            served += 1
        except (ProtocolError, KeyError, ValueError) as e:
            send_error(peer, st.session, e if isinstance(e, ProtocolError) else ProtocolError(str(e)))


def joint_predict_vertical(peer: Channel, rs: RuleSet, data: Dataset, *, session: str = "",
                           end_session: bool = False) -> np.ndarray:
    """Predict 0/1 per instance; the passive party evaluates opaque conditions.

    ``data`` holds the active party's features for the instances; the
    passive party returns only one bit per (instance, condition).
    """
    data = rs.prepare(data)
    opaque = []
    for rule in rs.rules:
        for c in rule:
            if c.is_opaque and c not in opaque:
                opaque.append(c)
    bits = {}
    if opaque:
        req = {"ids": list(data.instance_ids),
               "conditions": [{"feature_id": c.threshold.feature_id,
                               "split_index": c.threshold.split_index,
                               "op": c.direction.value} for c in opaque]}
        peer.send("PredictRequest", req, session)
        reply = peer.expect("PredictReply")
        results = reply.body["results"]
        if len(results) != len(opaque) or any(len(r) != data.n_rows for r in results):
            raise ProtocolError("PredictReply has the wrong shape")
        for c, r in zip(opaque, results):
            bits[c] = np.frombuffer(r.encode(), dtype=np.uint8) == ord("1")
    out = np.zeros(data.n_rows, dtype=bool)
    for rule in rs.rules:
        m = np.ones(data.n_rows, dtype=bool)
        for c in rule:
            m &= bits[c] if c.is_opaque else c.mask(data.column(c.feature))
        out |= m
    if end_session:
        peer.send("SessionEnd", {}, session)
    return out.astype(np.int64)


__all__ = [
    "PassiveSplitTable", "VerticalReport", "run_vertical_active", "run_vertical_passive",
    "serve_vertical_predict", "joint_predict_vertical", "substitute_thresholds",
]
