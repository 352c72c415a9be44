"""Run every party of a session on its own thread, in-process or over loopback TCP."""
from __future__ import annotations

import random
import threading
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..core import Dataset, HyperParams, RuleSet, concat_columns, concat_rows
from ..errors import TransportError
from ..inducer import learn_rule_set
from ..transport import Channel, Listener, Transcript, make_inproc_pair, socket_connect
from .horizontal import HorizontalReport, run_horizontal_coordinator, run_horizontal_guest
from .vertical import (
    PassiveSplitTable,
    VerticalReport,
    run_vertical_active,
    run_vertical_passive,
    substitute_thresholds,
)

ACTIVE, PASSIVE, COORDINATOR = "B", "A", "C"


def party_rng(seed, role: str) -> random.Random:
    """Independent, reproducible randomness per party."""
    return random.Random(f"fedfeare/{seed}/{role}")


def run_parties(targets: dict[str, Callable[[], object]], channels: dict[str, Sequence[Channel]],
                timeout: float | None = 600) -> dict[str, object]:
    """Run ``targets`` concurrently; the first failure closes the failing party's channels and is re-raised."""
    results: dict[str, object] = {}
    errors: list[tuple[str, BaseException]] = []
    lock = threading.Lock()

    def wrap(name, fn):
        try:
            out = fn()
            with lock:
                results[name] = out
        except BaseException as e:  # noqa: BLE001 - re-raised in the caller
            with lock:
                errors.append((name, e))
            for ch in channels.get(name, ()):
                ch.close()

    threads = [threading.Thread(target=wrap, args=(n, f), name=f"party-{n}", daemon=True)
               for n, f in targets.items()]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
    if any(t.is_alive() for t in threads):
        for chs in channels.values():
            for ch in chs:
                ch.close()
        raise TransportError("session did not finish in time")
    if errors:
        # the first recorded error is the root cause; later ones are fallout
        raise errors[0][1]
    return results


def _link(a: str, b: str, transport: str, transcript: Transcript) -> tuple[Channel, Channel]:
    """Connected (a-side, b-side) channels between parties ``a`` and ``b``."""
    if transport == "inproc":
        return make_inproc_pair(a, b, transcript)
    if transport == "socket":
        with Listener("127.0.0.1:0", local=b, transcript=transcript) as lst:
            ca = socket_connect(lst.address, a, peer=b, transcript=transcript)
            cb = lst.accept(timeout=30)
        if cb.peer != a:
            raise TransportError(f"handshake named {cb.peer!r}, expected {a!r}")
        return ca, cb
    raise ValueError(f"unknown transport {transport!r}")


# ---------------------------------------------------------------------------

@dataclass
class VerticalResult:
    ruleset: RuleSet
    table: PassiveSplitTable
    report: VerticalReport
    transcript: Transcript

    @property
    def plaintext_ruleset(self) -> RuleSet:
        return substitute_thresholds(self.ruleset, self.table)


def simulate_vertical(active: Dataset, passive: Dataset, params: HyperParams = HyperParams(), *,
                      key_bits: int = 1024, seed=0, transport: str = "inproc") -> VerticalResult:
    transcript = Transcript()
    ch_b, ch_a = _link(ACTIVE, PASSIVE, transport, transcript)
    out = run_parties(
        {ACTIVE: lambda: run_vertical_active(ch_b, active, params, key_bits=key_bits,
                                             rng=party_rng(seed, "active"), passive_party=PASSIVE),
         PASSIVE: lambda: run_vertical_passive(ch_a, passive, party=PASSIVE, rng=party_rng(seed, "passive"))},
        {ACTIVE: [ch_b], PASSIVE: [ch_a]},
    )
    ch_a.close()
    ch_b.close()
    rs, report = out[ACTIVE]
    return VerticalResult(rs, out[PASSIVE], report, transcript)


def split_columns(data: Dataset, n_active: int) -> tuple[Dataset, Dataset]:
    """First ``n_active`` features (and the labels) to the active party, the rest to the passive one."""
    names = data.feature_names
    active = data.select(names[:n_active])
    passive = data.select(names[n_active:]).without_labels()
    return active, passive


def vertical_oracle(active: Dataset, passive: Dataset, params: HyperParams) -> RuleSet:
    """Centralized training on the joined columns, active features first."""
    return learn_rule_set(concat_columns([active, passive]), params)


# ---------------------------------------------------------------------------

@dataclass
class HorizontalResult:
    ruleset: RuleSet
    guest_rulesets: dict
    report: HorizontalReport
    transcript: Transcript


def guest_names(k: int) -> list[str]:
    return [f"G{i + 1}" for i in range(k)]


def simulate_horizontal(parts: Sequence[Dataset] | dict, params: HyperParams = HyperParams(), *,
                        key_bits: int = 1024, seed=0, transport: str = "inproc",
                        keep_histograms: bool = False) -> HorizontalResult:
    """Train with one guest per row partition (named G1, G2, ... unless a dict is given)."""
    if not isinstance(parts, dict):
        parts = dict(zip(guest_names(len(parts)), parts))
    names = sorted(parts)
    transcript = Transcript()
    to_guest, from_coord = {}, {}
    for g in names:
        to_guest[g], from_coord[g] = _link(COORDINATOR, g, transport, transcript)
    nxt, prv = {}, {}
    for a, b in zip(names, names[1:]):
        nxt[a], prv[b] = _link(a, b, transport, transcript)

    targets = {COORDINATOR: lambda: run_horizontal_coordinator(
        [to_guest[g] for g in names], params, key_bits=key_bits,
        rng=party_rng(seed, COORDINATOR), keep_histograms=keep_histograms)}
    chans = {COORDINATOR: list(to_guest.values())}
    for g in names:
        targets[g] = (lambda g=g: run_horizontal_guest(
            from_coord[g], parts[g], prev=prv.get(g), next=nxt.get(g), rng=party_rng(seed, g)))
        chans[g] = [c for c in (from_coord[g], prv.get(g), nxt.get(g)) if c is not None]
    out = run_parties(targets, chans)
    for chs in chans.values():
        for c in chs:
            c.close()
    rs, report = out[COORDINATOR]
    return HorizontalResult(rs, {g: out[g] for g in names}, report, transcript)


def split_rows(data: Dataset, k: int, rng: random.Random | None = None) -> list[Dataset]:
    """Partition rows into ``k`` parts, contiguously or by a seeded shuffle."""
    idx = np.arange(data.n_rows)
    if rng is not None:
        idx = np.array(rng.sample(range(data.n_rows), data.n_rows), dtype=np.int64)
    return [data.take(np.sort(chunk)) for chunk in np.array_split(idx, k)]


def horizontal_oracle(parts: Sequence[Dataset], params: HyperParams) -> RuleSet:
    return learn_rule_set(concat_rows(list(parts)), params)


__all__ = [
    "run_parties", "simulate_vertical", "simulate_horizontal", "split_columns", "split_rows",
    "vertical_oracle", "horizontal_oracle", "VerticalResult", "HorizontalResult", "party_rng",
]
