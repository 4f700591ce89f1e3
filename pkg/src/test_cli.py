# src/test_cli.py
import csv
import json
from pathlib import Path
import tempfile

import numpy as np
import pytest

from src.cli import main, parse_int_list, UsageError
from src.data_io import write_dense
from src.report import RunReport, read_jsonl, validate_report, write_report
from src.bandit import EvalLedger


def load(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def test_knn_report_with_oracle() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "knn.json"
        code = main(["knn", "--n", "40", "--d", "50", "--k", "3", "--oracle", "--report", str(out)])
        assert code == 0
        rep = load(out)
        validate_report(rep)
        assert rep["app"] == "knn"
        assert len(rep["result"]["neighbors"]) == 40
        assert 0.0 <= rep["accuracy"]["score"] <= 1.0
        assert rep["gain"] > 0


def test_same_seed_reports_match() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        paths = [Path(tmp) / "a.json", Path(tmp) / "b.json"]
        for p in paths:
            assert main(["medoid", "--n", "30", "--d", "10", "--seed", "3", "--report", str(p)]) == 0
        a, b = (load(p) for p in paths)
        a.pop("wall_time")
        b.pop("wall_time")
        assert a == b


def test_missing_input_is_usage_error() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "none.json"
        code = main(["kmeans", "--data", str(Path(tmp) / "nope.csv"), "--report", str(out)])
        assert code == 2
        assert not out.exists()


def test_bad_config_is_usage_error() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "bad.json"
        assert main(["knn", "--delta", "2", "--report", str(out)]) == 2
        assert main(["knn", "--sigma-mode", "fixed", "--report", str(out)]) == 2
        assert not out.exists()
    with pytest.raises(SystemExit) as exc:
        main(["knn", "--k", "five"])
    assert exc.value.code == 2


def test_constant_target_is_runtime_error() -> None:
    rng = np.random.default_rng(0)
    X = np.column_stack([rng.normal(size=40), rng.normal(size=40), np.ones(40)])
    with tempfile.TemporaryDirectory() as tmp:
        data = Path(tmp) / "x.csv"
        write_dense(data, X)
        out = Path(tmp) / "mmi.json"
        assert main(["mmi", "--data", str(data), "--target-col", "2", "--report", str(out)]) == 1
        assert main(["mmi", "--data", str(data), "--report", str(out)]) == 2
        assert not out.exists()


def test_mmi_pull_log() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "mmi.json"
        log = Path(tmp) / "pulls.jsonl"
        args = ["mmi", "--n", "200", "--d", "4", "--oracle", "--report", str(out), "--pull-log", str(log)]
        assert main(args) == 0
        rows = read_jsonl(log)
        assert rows and {"step", "event", "arm", "lcb", "ucb"} <= set(rows[0])
        rep = load(out)
        assert rep["result"]["feature"] == 0
        assert rep["brute_total"] == 200 * 4


def test_pull_log_rejected_for_multi_bandit_commands() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "r.json"
        log = Path(tmp) / "pulls.jsonl"
        for cmd in ("knn", "kmeans", "hier"):
            assert main([cmd, "--n", "12", "--d", "8", "--report", str(out), "--pull-log", str(log)]) == 2
        assert not out.exists()
        assert not log.exists()
        assert main(["medoid", "--n", "12", "--d", "8", "--report", str(out), "--pull-log", str(log)]) == 0
        assert read_jsonl(log)


def test_kmeans_brute_total_counts_every_round() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "km.json"
        assert main(["kmeans", "--n", "40", "--d", "6", "--k", "3", "--iters", "4", "--report", str(out)]) == 0
        rep = load(out)
        rounds = rep["result"]["n_iter"] + 1
        assert rep["brute_total"] == 40 * 3 * rounds
        assert rep["ledger"]["effective_total"] <= rep["brute_total"]


def test_hier_linkage_csv() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "hier.json"
        link = Path(tmp) / "link.csv"
        args = ["hier", "--n", "12", "--d", "8", "--report", str(out), "--linkage-csv", str(link)]
        assert main(args) == 0
        with link.open(encoding="utf-8") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["a", "b", "value", "size"]
        assert len(rows) == 12
        assert load(out)["result"]["arms_created"] == 11 ** 2


def test_gaincurve_csv() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "gain.json"
        table = Path(tmp) / "gain.csv"
        args = ["gaincurve", "--app", "knn", "--n", "30", "--dims", "16,64", "--k", "3", "--report", str(out), "--csv", str(table)]
        assert main(args) == 0
        lines = table.read_text(encoding="utf-8").strip().splitlines()
        assert lines[0] == "d,gain,effective_total,brute_total"
        assert len(lines) == 3
        assert load(out)["result"]["app"] == "knn"


def test_parse_int_list() -> None:
    assert parse_int_list("1, 2,3", "--dims") == [1, 2, 3]
    with pytest.raises(UsageError):
        parse_int_list("1,x", "--dims")
    with pytest.raises(UsageError):
        parse_int_list("", "--dims")


def test_validate_report_rejects_bad_blocks() -> None:
    led = EvalLedger()
    led.register("p", 4)
    led.touch("p", 2)
    rep = RunReport.from_ledger("knn", 0, {}, {}, {}, led, brute_total=1.0).as_dict()
    validate_report(rep)
    assert rep["gain"] == pytest.approx(2.0)
    for key, bad in (("app", "sorting"), ("seed", "zero"), ("schema_version", "0.1")):
        broken = dict(rep, **{key: bad})
        with pytest.raises(ValueError):
            validate_report(broken)
    missing = dict(rep)
    missing.pop("ledger")
    with tempfile.TemporaryDirectory() as tmp:
        with pytest.raises(ValueError):
            write_report(Path(tmp) / "r.json", missing)
        assert not (Path(tmp) / "r.json").exists()


if __name__ == "__main__":
    test_knn_report_with_oracle()
    test_same_seed_reports_match()
    test_missing_input_is_usage_error()
    test_bad_config_is_usage_error()
    test_constant_target_is_runtime_error()
    test_mmi_pull_log()
    test_pull_log_rejected_for_multi_bandit_commands()
    test_kmeans_brute_total_counts_every_round()
    test_hier_linkage_csv()
    test_gaincurve_csv()
    test_parse_int_list()
    test_validate_report_rejects_bad_blocks()
    print("[OK] cli tests passed")
