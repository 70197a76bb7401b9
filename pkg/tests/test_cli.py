"""CLI subcommands: exit codes and emitted artifacts."""

import csv
import json
import os

import pytest

from racecert.cli import main


def test_toy_replay_exit_zero(tmp_path, capsys):
    out = str(tmp_path / "out")
    assert main(["toy-replay", "--out", out]) == 0
    text = capsys.readouterr().out
    assert "incumbent=2.886234" in text
    assert "replay_ok=True" in text
    assert os.path.exists(os.path.join(out, "toy-exact.ndjson"))
    assert os.path.exists(os.path.join(out, "toy-surrogate.ndjson"))


def test_validate_roundtrip_and_reports(tmp_path, capsys):
    out = str(tmp_path / "out")
    main(["toy-replay", "--out", out])
    ledger = os.path.join(out, "toy-exact.ndjson")
    assert main(["validate", ledger, "--recompute-metrics"]) == 0
    text = capsys.readouterr().out
    assert "replay_ok=True" in text
    assert "recomputed expansions=" in text
    with open(ledger + ".verdict.json", encoding="utf-8") as fh:
        assert json.load(fh)["ok"] is True


def test_validate_rejects_malformed(tmp_path):
    bad = str(tmp_path / "bad.ndjson")
    with open(bad, "w", encoding="utf-8") as fh:
        fh.write("")
    assert main(["validate", bad]) == 1


def test_suite_emits_csv_and_ledgers(tmp_path):
    out = str(tmp_path / "suite")
    assert main(["suite", "--suite", "A", "--depth", "2", "--seeds", "3",
                 "--out", out]) == 0
    csv_path = os.path.join(out, "suite.csv")
    with open(csv_path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    rows = [ln for ln in lines if not ln.startswith("#")]
    assert comments  # aggregate mean/CI rows
    reader = csv.DictReader(rows)
    body = list(reader)
    assert len(body) == 6  # 3 seeds x {Exact, Surrogate}
    assert {"mode", "seed", "expansions"} <= set(body[0])
    ledgers = [f for f in os.listdir(os.path.join(out, "ledgers"))
               if f.endswith(".ndjson")]
    assert len(ledgers) == 6


def test_tightness_slack_signs(tmp_path):
    out = str(tmp_path / "tight")
    assert main(["tightness", "--suite", "A", "--depth", "2", "--seeds", "2",
                 "--out", out]) == 0
    with open(os.path.join(out, "tightness.csv"), encoding="utf-8") as fh:
        rows = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    for row in csv.DictReader(rows):
        assert float(row["key_minus_rsm"]) >= -1e-9
        assert float(row["stop_slack"]) <= 1e-9


def test_nub_sweep_monotone(tmp_path):
    out = str(tmp_path / "sweep")
    assert main(["nub-sweep", "--factors", "1,2", "--seeds", "2",
                 "--out", out]) == 0
    with open(os.path.join(out, "nub_sweep.csv"), encoding="utf-8") as fh:
        rows = [ln for ln in fh.read().splitlines() if not ln.startswith("#")]
    body = list(csv.DictReader(rows))
    by_factor = {}
    for row in body:
        by_factor.setdefault(float(row["n_ub_factor"]), []).append(row)
    assert set(by_factor) == {1.0, 2.0}
    # Factor 1 leaves nothing to tighten; factor 2 yields kappa = -log 2.
    for row in by_factor[1.0]:
        assert abs(float(row["mean_kappa"])) < 1e-9
    for row in by_factor[2.0]:
        assert float(row["mean_kappa"]) < 0


def test_find_adversarial(capsys):
    assert main(["find-adversarial", "--max-seeds", "5"]) == 0
    assert "adversarial seed: 1" in capsys.readouterr().out


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
