"""Transcript scans for leaked plaintext."""
from __future__ import annotations

import json

import numpy as np

from fedfeare.transport import Transcript


def leaves(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            yield from leaves(v)
    elif isinstance(obj, list):
        for v in obj:
            yield from leaves(v)
    else:
        yield obj


def lists(obj):
    if isinstance(obj, dict):
        for v in obj.values():
            yield from lists(v)
    elif isinstance(obj, list):
        yield obj
        for v in obj:
            yield from lists(v)


def vertical_leaks(transcript: Transcript, labels, passive_columns, active="B", passive="A") -> list[str]:
    """Findings: plaintext label vectors anywhere, passive values or thresholds in passive->active frames,
    and scan ciphertexts the active party could match against its own."""
    found = []
    y_int = [int(v) for v in labels]
    y_str = [str(v) for v in y_int]
    for (src, dst), frames in transcript.channels().items():
        for raw in frames:
            obj = json.loads(raw)
            for lst in lists(obj["body"]):
                if lst == y_int or lst == y_str:
                    found.append(f"{src}->{dst} {obj['kind']}: label vector in clear")
            if src == active and obj["kind"] == "EncryptedLabels":
                bad = [c for c in obj["body"]["labels"] if int(c, 16) in (0, 1)]
                if bad:
                    found.append("EncryptedLabels carries 0/1 values")
    label_cts = set()
    for raw in transcript.frames(active, passive):
        obj = json.loads(raw)
        if obj["kind"] == "EncryptedLabels":
            label_cts.update(int(c, 16) for c in obj["body"]["labels"])
    for raw in transcript.frames(passive, active):
        obj = json.loads(raw)
        if obj["kind"] == "ScanReply":
            for feat in obj["body"]["features"]:
                for _, c in feat["le"] + feat["gt"]:
                    if int(c, 16) in label_cts:
                        found.append("ScanReply ciphertext equals a row's label ciphertext")
    secret = set()
    for col in passive_columns:
        v = np.unique(col[~np.isnan(col)])
        secret.update(float(x) for x in v)
        secret.update(float(x) for x in (v[:-1] + v[1:]) / 2)
    for raw in transcript.frames(passive, active):
        obj = json.loads(raw)
        for leaf in leaves(obj["body"]):
            if isinstance(leaf, float):
                found.append(f"{obj['kind']}: float {leaf!r} sent by passive party")
        text = raw.decode()
        for s in secret:
            if s != int(s) and repr(s) in text:
                found.append(f"{obj['kind']}: passive value {s!r} appears in a frame")
    return found


def horizontal_leaks(transcript: Transcript, guests, max_count: int) -> list[str]:
    """Findings: any guest->guest histogram cell that is not a ciphertext-sized value."""
    found = []
    guests = set(guests)
    for (src, dst), frames in transcript.channels().items():
        if src not in guests or dst not in guests:
            continue
        for raw in frames:
            obj = json.loads(raw)
            if obj["kind"] != "MaskedHistogram":
                found.append(f"{src}->{dst}: unexpected {obj['kind']}")
                continue
            cells = list(obj["body"]["bins"]) + [obj["body"]["missing"]]
            for cell in cells:
                for c in cell:
                    if not isinstance(c, str) or int(c, 16) <= max_count:
                        found.append(f"{src}->{dst}: bin cell {c!r} looks like a plain count")
    return found
