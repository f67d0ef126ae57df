import json

import pytest

from dcralgo.cli import main, parse_address
from dcralgo.dcr import derive_address
from dcralgo.scenario import corpus_text


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def ledger_file(tmp_path, capsys):
    path = tmp_path / "ledger.json"
    code, out, _ = run(capsys, "create", "corpus:mortgage.dcr", "--ledger", str(path), "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["app_id"] == 1 and doc["txn_count"] == 24 and len(doc["steps"]) == 24
    return path


def test_create_reports_steps_and_escrow(ledger_file, capsys):
    code, out, _ = run(capsys, "create", "corpus:mortgage.dcr", "--ledger", str(ledger_file))
    assert code == 0
    assert out.startswith("app 2: 24 transactions, fees 24000 microAlgos, escrow locked 828500")


def test_exec_and_state(ledger_file, capsys):
    code, out, _ = run(capsys, "exec", "6", "--app", "1", "--ledger", str(ledger_file))
    assert code == 1 and "rejected (NotEnabled)" in out
    code, out, _ = run(capsys, "exec", "1", "--app", "1", "--ledger", str(ledger_file), "--as", "creator")
    assert code == 1 and "NotExecutor" in out
    for e in (1, 2, 3, 6):
        code, out, _ = run(capsys, "exec", str(e), "--app", "1", "--ledger", str(ledger_file), "--json")
        assert code == 0 and json.loads(out)["approved"]
    code, out, _ = run(capsys, "state", "--app", "1", "--ledger", str(ledger_file), "--json")
    doc = json.loads(out)
    assert doc["TEN"] == 6 and doc["accepting"] and len(doc["events"]) == 6
    assert not doc["events"][3]["included"]
    code, out, _ = run(capsys, "accepting", "--app", "1", "--ledger", str(ledger_file))
    assert code == 0 and out.strip() == "accepting"


def test_state_initial(ledger_file, capsys):
    code, out, _ = run(capsys, "state", "--app", "1", "--ledger", str(ledger_file))
    assert code == 0
    assert out.rstrip().endswith("non-accepting")
    row6 = [line for line in out.splitlines() if line.strip().startswith("6 ")][0]
    assert " I " in row6 and " P " in row6


def test_empty_graph(tmp_path, capsys):
    g = tmp_path / "empty.dcr"
    g.write_text("dcrgraph v1\n")
    ledger = tmp_path / "l.json"
    code, out, _ = run(capsys, "create", str(g), "--ledger", str(ledger), "--json")
    assert code == 0 and json.loads(out)["txn_count"] == 1
    code, out, _ = run(capsys, "state", "--app", "1", "--ledger", str(ledger), "--json")
    doc = json.loads(out)
    assert doc["events"] == [] and doc["accepting"]


def test_create_62_events_fails_at_step_62(tmp_path, capsys):
    lines = ["dcrgraph v1"] + [f"event {i} executor={derive_address(str(i)).hex()}" for i in range(1, 63)]
    g = tmp_path / "big.dcr"
    g.write_text("\n".join(lines))
    code, _, err = run(capsys, "create", str(g), "--ledger", str(tmp_path / "l.json"))
    assert code == 1 and "step 62" in err and "CapacityExceeded" in err


def test_parse_error_exit_code(tmp_path, capsys):
    g = tmp_path / "bad.dcr"
    g.write_text("dcrgraph v1\nevent 1\n")
    code, _, err = run(capsys, "create", str(g), "--ledger", str(tmp_path / "l.json"))
    assert code == 1 and "line 2" in err


def test_accepting_on_graph_file(capsys):
    code, out, _ = run(capsys, "accepting", "corpus:mortgage.dcr", "--trace", "1,2,3,6")
    assert code == 0 and out.strip() == "accepting"
    code, out, _ = run(capsys, "accepting", "corpus:mortgage.dcr")
    assert "non-accepting" in out and "6" in out
    code, _, err = run(capsys, "accepting", "corpus:mortgage.dcr", "--trace", "5")
    assert code == 1 and "NotEnabledAtStep" in err


def test_cost_table(capsys):
    code, out, _ = run(capsys, "cost", "5", "11", "3", "--compare", "--json")
    doc = json.loads(out)
    assert code == 0
    assert doc["creation"]["usd_excl_escrow"] == "0.02720"
    assert doc["creation"]["usd_incl_escrow"] == "1.01796"
    assert [r["table_ratio"] for r in doc["comparison"]] == [17494, 467, 19534]


def test_cost_limits(capsys):
    code, out, _ = run(capsys, "cost", "61", "0", "0", "--json")
    assert json.loads(out)["creation"]["escrow_overall"] == 6_728_500
    code, out, _ = run(capsys, "cost", "0", "0", "0", "--rate", "1.0", "--curve", "--curve-max", "2")
    assert "1 transactions" in out and "execution: 1000 microAlgos (0.001 Algo, $0.00100)" in out
    curve = [line for line in out.splitlines() if line.startswith("escrow ") and "events" in line]
    assert curve[-1] == "escrow  2 events: $0.42850" and len(curve) == 3
    code, _, err = run(capsys, "cost", "62", "0", "0")
    assert code == 1 and "OutOfRange" in err


def test_fuzz_command(capsys):
    code, out, _ = run(capsys, "fuzz", "--seed", "1", "--iterations", "20", "--max-events", "20",
                       "--density", "0.15", "--json")
    doc = json.loads(out)
    assert code == 0 and doc["passed"] and doc["graphs"] == 20
    code, out, _ = run(capsys, "fuzz", "--iterations", "0")
    assert code == 0 and out.startswith("pass")


def test_fuzz_finds_literal_variant_bug(capsys):
    code, out, err = run(capsys, "fuzz", "--seed", "3", "--iterations", "50", "--literal")
    assert code == 1 and "DifferentialMismatch" in err
    assert "counterexample" in out and "dcrgraph v1" in out


def test_replay(tmp_path, capsys):
    scn = tmp_path / "m.scn"
    scn.write_text(corpus_text("mortgage.scn"))
    code, out, _ = run(capsys, "replay", str(scn))
    assert code == 0 and out.rstrip().endswith("pass")
    scn.write_text("scenario v1\ngraph corpus:mortgage.dcr\ncheck accepting\n")
    code, out, _ = run(capsys, "replay", str(scn))
    assert code == 1 and "FAIL" in out


@pytest.mark.parametrize("argv", [
    [],
    ["launch"],
    ["exec", "1"],
    ["cost", "5", "11"],
    ["cost", "1", "1", "1", "--rate", "-2"],
    ["fuzz", "--max-events", "62"],
    ["fuzz", "--density", "1.5"],
])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_missing_ledger_is_usage_error(tmp_path, capsys):
    code, _, err = run(capsys, "state", "--app", "1", "--ledger", str(tmp_path / "nope.json"))
    assert code == 2 and "create" in err


def test_unknown_app(ledger_file, capsys):
    code, _, err = run(capsys, "state", "--app", "7", "--ledger", str(ledger_file))
    assert code == 1 and "UnknownApp" in err


def test_parse_address():
    assert parse_address("ab" * 32) == bytes.fromhex("ab" * 32)
    assert parse_address("caseworker") == derive_address("caseworker")
