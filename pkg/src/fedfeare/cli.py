"""Command-line entry points: ``fedfeare <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import __version__
from .core import HyperParams, RuleSet, evaluate_rule_set
from .data import DataSchema, load_csv, save_csv
from .errors import FedFeareError, InvalidDataError
from .federation.horizontal import run_horizontal_coordinator, run_horizontal_guest
from .federation.session import (
    ACTIVE,
    COORDINATOR,
    PASSIVE,
    horizontal_oracle,
    party_rng,
    simulate_horizontal,
    simulate_vertical,
    split_columns,
    split_rows,
    vertical_oracle,
)
from .federation.vertical import DEFAULT_KEY_BITS, run_vertical_active, run_vertical_passive
from .inducer import learn_rule_set
from .serialize import format_table, report_csv, ruleset_from_json, ruleset_to_json
from .synthetic import SyntheticSpec, gen_synthetic
from .transport import Listener, Transcript, socket_connect

log = logging.getLogger("fedfeare")

SEED_ENV = "FEDFEARE_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_params(p: argparse.ArgumentParser) -> None:
    p.add_argument("--max-depth", type=int, default=3)
    p.add_argument("--trees", type=int, default=3, help="number of rules (trees) to learn")
    p.add_argument("--pruning-min", type=float, default=0.01)
    p.add_argument("--beta", type=float, default=1.0, help="F-beta weight; 0.5 favours precision")


def _add_data(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--data", required=required, help="input CSV")
    p.add_argument("--label-col", default="label")
    p.add_argument("--id-col", default=None)
    p.add_argument("--categorical", action="append", default=[], metavar="COLUMN",
                   help="treat COLUMN as categorical (repeatable)")


def _add_seed(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", default=None, help=f"randomness seed (falls back to ${SEED_ENV}, then 0)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="fedfeare", description="F-score-gain rule extraction, centralized or federated.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="centralized training")
    _add_data(p)
    _add_params(p)
    _add_seed(p)
    p.add_argument("--out", default="rules.json")
    p.add_argument("--report", default=None)

    p = sub.add_parser("evaluate", help="metric table of a rule set on labeled data")
    _add_data(p)
    p.add_argument("--rules", required=True)
    p.add_argument("--report", default=None)

    p = sub.add_parser("predict", help="per-row 0/1 predictions")
    _add_data(p)
    p.add_argument("--rules", required=True)
    p.add_argument("--out", default=None, help="output CSV (default stdout)")

    p = sub.add_parser("gen-data", help="synthetic data with planted rules")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None)
    _add_seed(p)

    p = sub.add_parser("fed-train", help="one party of a federated training session over TCP")
    p.add_argument("--mode", choices=["vertical", "horizontal"], required=True)
    p.add_argument("--role", choices=["active", "passive", "guest", "coordinator"], required=True)
    _add_data(p, required=False)
    _add_params(p)
    _add_seed(p)
    p.add_argument("--listen", default=None, metavar="HOST:PORT")
    p.add_argument("--connect", default=None, metavar="HOST:PORT")
    p.add_argument("--party-id", default=None, help="this party's name on the wire")
    p.add_argument("--peer-id", default=None, help="vertical: the other party's name when connecting")
    p.add_argument("--guests", type=int, default=2, help="coordinator: number of guests to accept")
    p.add_argument("--ring-listen", default=None, metavar="HOST:PORT",
                   help="guest: accept the previous guest in the ring here")
    p.add_argument("--ring-next", default=None, metavar="HOST:PORT",
                   help="guest: connect to the next guest in the ring")
    p.add_argument("--key-bits", type=int, default=DEFAULT_KEY_BITS)
    p.add_argument("--timeout", type=float, default=60.0, help="seconds to wait for peers")
    p.add_argument("--out", default=None, help="rule set JSON (passive: split table JSON)")
    p.add_argument("--report", default=None)
    p.add_argument("--transcript", default=None, help="write the frames this party sent and received")

    p = sub.add_parser("simulate", help="all parties in-process, checked against centralized training")
    p.add_argument("--mode", choices=["vertical", "horizontal"], required=True)
    p.add_argument("--parts", type=int, default=2)
    _add_data(p)
    _add_params(p)
    _add_seed(p)
    p.add_argument("--key-bits", type=int, default=DEFAULT_KEY_BITS)
    p.add_argument("--transport", choices=["inproc", "socket"], default="inproc")
    p.add_argument("--transcript", default=None)
    p.add_argument("--out", default=None)
    return ap


# ---------------------------------------------------------------------------

def resolve_seed(flag) -> str:
    if flag is not None:
        return str(flag)
    return os.environ.get(SEED_ENV, "0")


def _params(a) -> HyperParams:
    return HyperParams(max_depth=a.max_depth, tree_number=a.trees, pruning_min=a.pruning_min, beta=a.beta)


def _schema(a) -> DataSchema:
    return DataSchema(label_column=a.label_col, id_column=a.id_col,
                      kinds={c: "categorical" for c in a.categorical})


def _write(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _read_rules(path) -> RuleSet:
    with open(path, encoding="utf-8") as fh:
        return ruleset_from_json(fh.read())


def _emit(rs: RuleSet, a, metrics=None) -> None:
    if getattr(a, "out", None):
        _write(a.out, ruleset_to_json(rs))
    if getattr(a, "report", None):
        _write(a.report, report_csv(rs, metrics))
    print(format_table(rs, metrics))


def cmd_train(a) -> int:
    data = load_csv(a.data, _schema(a))
    rs = learn_rule_set(data, _params(a))
    _emit(rs, a)
    return 0


def cmd_evaluate(a) -> int:
    rs = _read_rules(a.rules)
    data = load_csv(a.data, _schema(a))
    _emit(rs, argparse.Namespace(report=a.report), evaluate_rule_set(data, rs))
    return 0


def cmd_predict(a) -> int:
    rs = _read_rules(a.rules)
    data = load_csv(a.data, _schema(a))
    pred = rs.predict(data)
    text = "id,prediction\n" + "".join(f"{i},{int(p)}\n" for i, p in zip(data.instance_ids, pred))
    if a.out:
        _write(a.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_data(a) -> int:
    with open(a.spec, encoding="utf-8") as fh:
        raw = json.load(fh)
    if a.seed is not None or "seed" not in raw:
        raw["seed"] = int(resolve_seed(a.seed))
    data, truth = gen_synthetic(SyntheticSpec.from_dict(raw))
    save_csv(data, a.out)
    if a.truth:
        _write(a.truth, ruleset_to_json(truth))
    print(f"wrote {data.n_rows} rows, {data.n_positive} positive, to {a.out}")
    return 0


def _need(a, *names) -> None:
    missing = [n for n in names if getattr(a, n.replace("-", "_")) is None]
    if missing:
        raise UsageError(f"--role {a.role} requires " + ", ".join("--" + n for n in missing))


def cmd_fed_train(a) -> int:
    seed = resolve_seed(a.seed)
    transcript = Transcript()
    channels = []
    try:
        if a.mode == "vertical":
            if a.role not in ("active", "passive"):
                raise UsageError("vertical mode has roles active and passive")
            _need(a, "data")
            if (a.listen is None) == (a.connect is None):
                raise UsageError("give exactly one of --listen and --connect")
            me = a.party_id or (ACTIVE if a.role == "active" else PASSIVE)
            other = a.peer_id or (PASSIVE if a.role == "active" else ACTIVE)
            data = load_csv(a.data, _schema(a))
            if a.role == "passive" and data.has_labels:
                raise InvalidDataError("labels must not be supplied to a passive party")
            if a.listen:
                with Listener(a.listen, me, transcript) as lst:
                    ch = lst.accept(a.timeout)
            else:
                ch = socket_connect(a.connect, me, other, transcript, retry_for=a.timeout)
            channels.append(ch)
            if a.role == "active":
                rs, _ = run_vertical_active(ch, data, _params(a), key_bits=a.key_bits,
                                            rng=party_rng(seed, "active"), passive_party=ch.peer)
                _emit(rs, a)
            else:
                table = run_vertical_passive(ch, data, party=me, rng=party_rng(seed, "passive"))
                if a.out:
                    _write(a.out, json.dumps(table.to_dict(), sort_keys=True, indent=2))
                print(f"passive party {me}: {len(table.entries)} split(s) stored")
        else:
            if a.role == "coordinator":
                _need(a, "listen")
                me = a.party_id or COORDINATOR
                with Listener(a.listen, me, transcript) as lst:
                    guests = [lst.accept(a.timeout) for _ in range(a.guests)]
                channels.extend(guests)
                rs, _ = run_horizontal_coordinator(guests, _params(a), key_bits=a.key_bits,
                                                   rng=party_rng(seed, me))
                _emit(rs, a)
            elif a.role == "guest":
                _need(a, "data", "connect", "party-id")
                data = load_csv(a.data, _schema(a))
                lst = Listener(a.ring_listen, a.party_id, transcript) if a.ring_listen else None
                try:
                    coord = socket_connect(a.connect, a.party_id, a.peer_id or COORDINATOR, transcript,
                                           retry_for=a.timeout)
                    channels.append(coord)
                    nxt = prv = None
                    if a.ring_next:
                        nxt = socket_connect(a.ring_next, a.party_id, None, transcript, retry_for=a.timeout)
                        channels.append(nxt)
                    if lst is not None:
                        prv = lst.accept(a.timeout)
                        channels.append(prv)
                finally:
                    if lst is not None:
                        lst.close()
                rs = run_horizontal_guest(coord, data, prev=prv, next=nxt, rng=party_rng(seed, a.party_id))
                _emit(rs, a)
            else:
                raise UsageError("horizontal mode has roles coordinator and guest")
    finally:
        for ch in channels:
            ch.close()
        if a.transcript:
            transcript.dump(a.transcript)
    return 0


def cmd_simulate(a) -> int:
    seed = resolve_seed(a.seed)
    params = _params(a)
    data = load_csv(a.data, _schema(a))
    if a.mode == "vertical":
        if a.parts != 2:
            raise UsageError("vertical simulation is two-party; use --parts 2")
        if data.n_features < 2:
            raise InvalidDataError("vertical simulation needs at least two feature columns")
        active, passive = split_columns(data, (data.n_features + 1) // 2)
        res = simulate_vertical(active, passive, params, key_bits=a.key_bits, seed=seed, transport=a.transport)
        fed, central = res.plaintext_ruleset, vertical_oracle(active, passive, params)
        shown = res.ruleset
    else:
        if a.parts < 2:
            raise UsageError("horizontal simulation needs --parts >= 2")
        parts = split_rows(data, a.parts, party_rng(seed, "split"))
        res = simulate_horizontal(parts, params, key_bits=a.key_bits, seed=seed, transport=a.transport)
        fed, central = res.ruleset, horizontal_oracle(parts, params)
        shown = fed
    if a.transcript:
        res.transcript.dump(a.transcript)
    if a.out:
        _write(a.out, ruleset_to_json(shown))
    print(f"federated ({a.mode}, {a.parts} parties):")
    print(format_table(shown))
    print()
    print("centralized:")
    print(format_table(central))
    if not fed.same_rules(central):
        _error_line("EquivalenceError", "federated and centralized rule sets differ")
        return 1
    print()
    print("equivalent: yes")
    return 0


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "gen-data": cmd_gen_data,
    "fed-train": cmd_fed_train,
    "simulate": cmd_simulate,
}


def _error_line(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": message}, sort_keys=True), file=sys.stderr)


def cli_main(argv=None) -> int:
    """Run a command; returns the process exit code (0 ok, 1 failure, 2 usage)."""
    try:
        a = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[a.command](a)
    except UsageError as e:
        _error_line("UsageError", str(e))
        return 2
    except (FedFeareError, OSError, ValueError, KeyError) as e:
        _error_line(type(e).__name__, str(e))
        return 1


def main() -> None:
    sys.exit(cli_main())
