import csv
import io
import itertools
import json
import subprocess
import sys

import pytest

from conftest import FIXTURES
from statslice.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, main

P1 = str(FIXTURES / "p1.ir")


def members(path):
    return {m["stmt"] for m in json.loads(path.read_text())["members"]}


@pytest.fixture()
def runs(tmp_path):
    out = tmp_path / "runs"
    assert main(["run", "--program", P1, "--input", "[1]", "--input", "[0]", "--sample-rate", "1.0",
                 "--out", str(out), "--oracle"]) == EXIT_OK
    return out


def test_run_writes_artifacts(runs):
    names = sorted(p.name for p in runs.iterdir())
    assert names == [
        "run-00000.bt.json", "run-00000.deps.json", "run-00000.trace.jsonl",
        "run-00001.bt.json", "run-00001.deps.json", "run-00001.trace.jsonl",
        "sampler-state.json",
    ]
    d = json.loads((runs / "run-00000.deps.json").read_text())
    assert d["failed"] is True
    assert [(x["writer"], x["reader"]) for x in d["deps"]] == [("0:0:1", "0:1:0")]


def test_run_continues_numbering(runs):
    assert main(["run", "--program", P1, "--input", "[0]", "--out", str(runs)]) == EXIT_OK
    assert (runs / "run-00002.deps.json").exists()


def test_end_to_end_p1(runs, tmp_path):
    odg = tmp_path / "odg.json"
    deps = sorted(str(p) for p in runs.glob("*.deps.json"))
    assert main(["merge", *deps, "--out", str(odg)]) == EXIT_OK
    sl = tmp_path / "slice.json"
    assert main(["slice", "--program", P1, "--odg", str(odg), "--trace", str(runs / "run-00000.bt.json"),
                 "--out", str(sl)]) == EXIT_OK
    assert members(sl) == {"0:0:0", "0:0:1", "0:0:2", "0:0:3", "0:1:0", "0:1:1"}
    dyn = tmp_path / "dyn.json"
    assert main(["oracle", "--program", P1, "--input", "[1]", "--out", str(dyn)]) == EXIT_OK
    assert members(dyn) == members(sl)
    sta = tmp_path / "static.json"
    assert main(["oracle", "--program", P1, "--mode", "static", "--seed-stmt", "0:1:1", "--out", str(sta)]) == 0
    assert members(sta) == members(sl) | {"0:2:0"}
    txt = tmp_path / "slice.txt"
    assert main(["slice", "--program", P1, "--odg", str(odg), "--trace", str(runs / "run-00000.bt.json"),
                 "--format", "text", "--out", str(txt)]) == EXIT_OK
    assert "fail v" in txt.read_text()


def test_seed_on_passing_run(runs, tmp_path):
    odg = tmp_path / "odg.json"
    main(["merge", *map(str, runs.glob("*.deps.json")), "--out", str(odg)])
    sl = tmp_path / "s.json"
    assert main(["slice", "--program", P1, "--odg", str(odg), "--trace", str(runs / "run-00001.bt.json"),
                 "--seed-stmt", "0:3:0", "--out", str(sl)]) == EXIT_OK
    assert members(sl) == {"0:3:0", "0:0:3", "0:0:2"}
    assert main(["slice", "--program", P1, "--odg", str(odg), "--trace", str(runs / "run-00001.bt.json")]) == EXIT_DATA


def test_merge_is_order_invariant(runs, tmp_path):
    deps = sorted(str(p) for p in runs.glob("*.deps.json"))
    outs = set()
    for k, perm in enumerate(itertools.permutations(deps)):
        path = tmp_path / f"m{k}.json"
        main(["merge", *perm, "--out", str(path)])
        outs.add(path.read_text())
    assert len(outs) == 1
    again = tmp_path / "again.json"
    main(["merge", str(tmp_path / "m0.json"), deps[0], "--out", str(again)])
    ends = lambda path: {(a["writer"], a["reader"]) for a in json.loads(path.read_text())["arcs"]}
    assert ends(again) == ends(tmp_path / "m0.json")


def test_usage_errors(tmp_path, capsys):
    assert main(["merge"]) == EXIT_USAGE
    assert "no inputs" in capsys.readouterr().err
    assert main(["run", "--input", "[1]"]) == EXIT_USAGE
    assert main(["run", "--program", P1, "--out", str(tmp_path)]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["slice", "--program", P1])
    assert exc.value.code == EXIT_USAGE


def test_data_errors(tmp_path, runs, capsys):
    bad = tmp_path / "bad.ir"
    bad.write_text("fun main() {\nb0:\n  x = bogus\n}\n")
    assert main(["oracle", "--program", str(bad), "--input", "[1]"]) == EXIT_DATA
    assert main(["oracle", "--program", str(tmp_path / "missing.ir")]) == EXIT_DATA
    assert main(["oracle", "--program", P1, "--input", "[0]"]) == EXIT_DATA  # no fault, no seed
    assert main(["oracle", "--program", P1, "--mode", "static"]) == EXIT_DATA
    other = tmp_path / "p2.ir"
    other.write_text((FIXTURES / "p2.ir").read_text())
    odg = tmp_path / "odg.json"
    main(["merge", *map(str, runs.glob("*.deps.json")), "--out", str(odg)])
    capsys.readouterr()
    assert main(["slice", "--program", str(other), "--odg", str(odg),
                 "--trace", str(runs / "run-00000.bt.json")]) == EXIT_DATA
    assert "program mismatch" in capsys.readouterr().err
    junk = tmp_path / "junk.json"
    junk.write_text('{"kind": "other"}')
    assert main(["merge", str(junk)]) == EXIT_DATA


def test_gen_writes_corpus(tmp_path):
    out = tmp_path / "corpus"
    assert main(["gen", "--rng-seed", "4", "--n", "3", "--out", str(out)]) == EXIT_OK
    index = json.loads((out / "corpus.json").read_text())
    assert len(index["entries"]) == 3
    for e in index["entries"]:
        assert (out / e["program"]).exists()


def test_eval_header_only(capsys):
    assert main(["eval", "--n", "0"]) == EXIT_OK
    assert capsys.readouterr().out.strip().startswith("program,stmts,runs")
    assert len(capsys.readouterr().out.strip().splitlines()) <= 1


def test_eval_full_rate(tmp_path):
    out = tmp_path / "ev"
    assert main(["eval", "--rng-seed", "1", "--n", "4", "--runs", "8", "--sample-rate", "1.0",
                 "--out", str(out)]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO((out / "table.csv").read_text())))
    assert len(rows) == 4 and all(float(r["recovery"]) == 1.0 for r in rows)
    cdf = list(csv.DictReader(io.StringIO((out / "cdf.csv").read_text())))
    assert len(cdf) == 4 * 8


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "statslice", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "merge" in r.stdout
