import json
import socket
import subprocess
import sys
import threading

import pytest

from fedfeare import DataSchema, load_csv, ruleset_from_json, save_csv
from fedfeare.cli import cli_main
from fedfeare.federation import split_rows

SPEC = {"n_rows": 600, "n_features": 4, "seed": 11, "levels": 20,
        "rules": [[{"feature": "x0", "op": "gt", "threshold": 0.8}, {"feature": "x2", "op": "le", "threshold": 0.5}]]}


@pytest.fixture
def data_csv(tmp_path):
    (tmp_path / "spec.json").write_text(json.dumps(SPEC))
    assert cli_main(["gen-data", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "d.csv"),
                     "--truth", str(tmp_path / "truth.json")]) == 0
    return tmp_path / "d.csv"


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def error_of(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_gen_data_truth(data_csv, tmp_path):
    truth = ruleset_from_json((tmp_path / "truth.json").read_text())
    assert len(truth.rules) == 1
    d = load_csv(data_csv, DataSchema(id_column="id"))
    assert (d.labels == truth.predict(d)).all()


def test_gen_data_seed_flag_reproducible(tmp_path):
    (tmp_path / "s.json").write_text(json.dumps(SPEC))
    for name in ("a", "b"):
        assert cli_main(["gen-data", "--spec", str(tmp_path / "s.json"), "--out", str(tmp_path / f"{name}.csv"),
                         "--seed", "5"]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_train_then_evaluate_same_report(data_csv, tmp_path):
    rules, r1, r2 = (tmp_path / n for n in ("r.json", "r1.csv", "r2.csv"))
    assert cli_main(["train", "--data", str(data_csv), "--id-col", "id", "--out", str(rules),
                     "--report", str(r1)]) == 0
    assert cli_main(["evaluate", "--data", str(data_csv), "--id-col", "id", "--rules", str(rules),
                     "--report", str(r2)]) == 0
    assert r1.read_bytes() == r2.read_bytes()


def test_predict(data_csv, tmp_path, capsys):
    rules = tmp_path / "r.json"
    cli_main(["train", "--data", str(data_csv), "--id-col", "id", "--out", str(rules)])
    capsys.readouterr()
    assert cli_main(["predict", "--data", str(data_csv), "--id-col", "id", "--rules", str(rules)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "id,prediction" and len(lines) == 601
    assert {ln.split(",")[1] for ln in lines[1:]} <= {"0", "1"}


@pytest.mark.parametrize("mode", ["horizontal", "vertical"])
def test_simulate_equivalent(data_csv, mode, capsys):
    assert cli_main(["simulate", "--mode", mode, "--parts", "2", "--data", str(data_csv), "--id-col", "id",
                     "--key-bits", "256"]) == 0
    assert "equivalent: yes" in capsys.readouterr().out


def test_simulate_seeded_transcripts(data_csv, tmp_path):
    outs = []
    for name in ("t1", "t2"):
        p = tmp_path / name
        assert cli_main(["simulate", "--mode", "horizontal", "--parts", "3", "--data", str(data_csv),
                         "--id-col", "id", "--key-bits", "256", "--seed", "9", "--transcript", str(p)]) == 0
        outs.append(p.read_bytes())
    assert outs[0] == outs[1] and outs[0]


def test_seed_env_fallback(data_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("FEDFEARE_SEED", "3")
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["simulate", "--mode", "vertical", "--data", str(data_csv), "--id-col", "id", "--key-bits", "256"]
    cli_main(base + ["--transcript", str(a)])
    cli_main(base + ["--transcript", str(b), "--seed", "3"])
    assert a.read_bytes() == b.read_bytes()


def test_passive_refuses_labeled_file(data_csv, capsys):
    code = cli_main(["fed-train", "--mode", "vertical", "--role", "passive", "--data", str(data_csv),
                     "--listen", "127.0.0.1:0"])
    assert code != 0
    err = error_of(capsys)
    assert err["error"] == "InvalidDataError" and "passive" in err["message"]


def test_bad_label_error_line(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("x,label\n1,2\n")
    assert cli_main(["train", "--data", str(p)]) == 1
    assert error_of(capsys)["error"] == "LabelDomainError"


def test_usage_error_line(capsys):
    assert cli_main(["train"]) == 2
    assert error_of(capsys)["error"] == "UsageError"


def test_missing_file(capsys):
    assert cli_main(["train", "--data", "/nonexistent.csv"]) == 1
    assert error_of(capsys)["error"] == "FileNotFoundError"


def test_vertical_fed_train_over_tcp(data_csv, tmp_path):
    d = load_csv(data_csv, DataSchema(id_column="id"))
    save_csv(d.select(["x0", "x1"]), tmp_path / "act.csv")
    save_csv(d.select(["x2", "x3"]).without_labels(), tmp_path / "pas.csv")
    port = free_port()
    codes = {}
    passive = threading.Thread(target=lambda: codes.update(p=cli_main([
        "fed-train", "--mode", "vertical", "--role", "passive", "--data", str(tmp_path / "pas.csv"),
        "--id-col", "id", "--listen", f"127.0.0.1:{port}", "--out", str(tmp_path / "table.json")])))
    passive.start()
    codes["a"] = cli_main([
        "fed-train", "--mode", "vertical", "--role", "active", "--data", str(tmp_path / "act.csv"),
        "--id-col", "id", "--connect", f"127.0.0.1:{port}", "--key-bits", "256", "--out", str(tmp_path / "v.json")])
    passive.join(30)
    assert codes == {"a": 0, "p": 0}
    rs = ruleset_from_json((tmp_path / "v.json").read_text())
    table = json.loads((tmp_path / "table.json").read_text())
    n_opaque = sum(c.is_opaque for r in rs.rules for c in r)
    assert n_opaque >= 1 and len(table["entries"]) >= 1


def test_horizontal_fed_train_over_tcp(data_csv, tmp_path):
    d = load_csv(data_csv, DataSchema(id_column="id"))
    for i, part in enumerate(split_rows(d, 2)):
        save_csv(part, tmp_path / f"g{i + 1}.csv")
    cport, rport = free_port(), free_port()
    codes = {}
    args = {
        "C": ["--role", "coordinator", "--listen", f"127.0.0.1:{cport}", "--guests", "2", "--key-bits", "256",
              "--out", str(tmp_path / "c.json")],
        "G1": ["--role", "guest", "--party-id", "G1", "--data", str(tmp_path / "g1.csv"), "--id-col", "id",
               "--connect", f"127.0.0.1:{cport}", "--ring-next", f"127.0.0.1:{rport}"],
        "G2": ["--role", "guest", "--party-id", "G2", "--data", str(tmp_path / "g2.csv"), "--id-col", "id",
               "--connect", f"127.0.0.1:{cport}", "--ring-listen", f"127.0.0.1:{rport}",
               "--out", str(tmp_path / "g2.json")],
    }
    threads = [threading.Thread(target=lambda n=n, a=a: codes.update({n: cli_main(["fed-train", "--mode",
                                                                                   "horizontal"] + a)}))
               for n, a in args.items()]
    for t in threads:
        t.start()
    for t in threads:
        t.join(60)
    assert codes == {"C": 0, "G1": 0, "G2": 0}
    assert (tmp_path / "c.json").read_text() == (tmp_path / "g2.json").read_text()


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fedfeare", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.strip()
