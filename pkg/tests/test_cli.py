import json
import math
from importlib import resources

import jsonschema
import pytest

from pebblemark.cli import main
from pebblemark.graph import parse
from pebblemark.reports import loglog_slope, plot_emit, report_hash
from pebblemark.errors import ShapeError


def _run(capsys, *argv):
    rc = main(list(map(str, argv)))
    out = capsys.readouterr()
    return rc, out.out, out.err


@pytest.fixture
def fig5_file(tmp_path, capsys):
    p = tmp_path / "fig5.txt"
    rc, _, _ = _run(capsys, "graph", "build", "--family", "fig5", "--n", 16, "--k", 4, "--seed", "01", "--out", p)
    assert rc == 0
    return p


def test_build_line(capsys):
    rc, out, _ = _run(capsys, "graph", "build", "--family", "line", "--n", 8)
    assert rc == 0 and parse(out).n == 8


def test_build_prints_generated_seed(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("PEBBLEMARK_SEED", raising=False)
    rc, _, err = _run(capsys, "graph", "build", "--family", "grates", "--n", 8, "--out", tmp_path / "g.txt")
    assert rc == 0 and err.startswith("seed: ")


def test_env_seed_is_used(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PEBBLEMARK_SEED", "abcd")
    _run(capsys, "graph", "build", "--family", "fig5", "--n", 16, "--k", 4, "--out", tmp_path / "a.txt")
    _run(capsys, "graph", "build", "--family", "fig5", "--n", 16, "--k", 4, "--seed", "abcd", "--out", tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_text() == (tmp_path / "b.txt").read_text()


def test_verify_amenable(fig5_file, capsys):
    rc, out, _ = _run(capsys, "graph", "verify", "--check", "amenable", "--trials", 4, "--seed", "00", fig5_file)
    assert rc == 0 and json.loads(out)["passed"]


def test_verify_superconc(tmp_path, capsys):
    p = tmp_path / "sc.txt"
    _run(capsys, "graph", "build", "--family", "superconc", "--n", 8, "--out", p)
    rc, out, _ = _run(capsys, "graph", "verify", "--check", "superconc", "--trials", 20, "--seed", "00", p)
    assert rc == 0 and json.loads(out)["passed"]


def test_eval_emits_output_and_vector(fig5_file, tmp_path, capsys):
    vec = tmp_path / "vec.txt"
    rc, out, _ = _run(capsys, "mhf", "eval", "--graph", fig5_file, "--input", "00ff", "--coins", "01", "--emit-output", "--vector", vec)
    rc2, out2, _ = _run(capsys, "mhf", "eval", "--graph", fig5_file, "--input", "00ff", "--coins", "02", "--emit-output")
    assert rc == rc2 == 0 and out == out2 and len(out.strip()) % 64 == 0
    assert vec.read_text().startswith("vector v1 ")


def test_eval_refuses_small_cache(fig5_file, capsys):
    rc, _, err = _run(capsys, "mhf", "eval", "--graph", fig5_file, "--input", "00", "--coins", "01", "--cache", 2)
    assert rc == 1 and "cache" in err


def test_bad_hex_is_contract_error(fig5_file, capsys):
    rc, _, _ = _run(capsys, "mhf", "eval", "--graph", fig5_file, "--input", "zz", "--coins", "01")
    assert rc == 1


def test_missing_file_is_error(tmp_path, capsys):
    rc, _, _ = _run(capsys, "pebble", "run", "--graph", tmp_path / "nope.txt", "--seed", "1")
    assert rc == 1


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["graph", "build", "--bogus"])
    assert exc.value.code == 2


def test_game_json_matches_schema(fig5_file, capsys):
    rc, out, _ = _run(capsys, "game", "run", "--graph", fig5_file, "--trials", 20, "--seed", "07", "--json")
    assert rc == 0
    schema = json.loads(resources.files("pebblemark").joinpath("schemas/game_report.schema.json").read_text())
    report = json.loads(out)
    jsonschema.validate(report, schema)
    assert report["trials"] == 20


def test_game_adaptive_mode(fig5_file, capsys):
    rc, out, _ = _run(capsys, "game", "run", "--graph", fig5_file, "--trials", 5, "--mode", "adaptive:2", "--attacker", "coin", "--seed", "07")
    assert rc == 0 and json.loads(out)["rounds"] == 2


def test_plot_and_slope(tmp_path, capsys):
    rep = tmp_path / "suite.json"
    rc, _, _ = _run(capsys, "pebble", "suite", "--family", "static", "--ns", "64,128,256", "--seed", "3", "--report", rep)
    assert rc == 0
    rc, out, _ = _run(capsys, "plot", "--kind", "cc", rep)
    lines = out.splitlines()
    assert lines[0] == "n\tstrategy\tcc" and len(lines) == 4
    ns, ccs = zip(*((int(a), int(c)) for a, _, c in (ln.split("\t") for ln in lines[1:])))
    # independent least-squares fit on the emitted columns
    lx, ly = [math.log(v) for v in ns], [math.log(v) for v in ccs]
    mx, my = sum(lx) / 3, sum(ly) / 3
    slope = sum((a - mx) * (b - my) for a, b in zip(lx, ly)) / sum((a - mx) ** 2 for a in lx)
    assert abs(slope - json.loads(rep.read_text())["slope"]) < 1e-9


def test_plot_kind_mismatch(tmp_path, capsys):
    with pytest.raises(ShapeError):
        plot_emit({"kind": "cc", "rows": []}, "advantage")
    assert plot_emit({"kind": "cc", "rows": []}, "cc") == "n\tstrategy\tcc\n"
    p = tmp_path / "r.json"
    p.write_text(json.dumps({"kind": "cc", "rows": []}))
    rc, _, _ = _run(capsys, "plot", "--kind", "advantage", p)
    assert rc == 1


def test_loglog_slope_exact():
    assert loglog_slope([2, 4, 8], [4, 16, 64]) == pytest.approx(2.0, abs=1e-12)


@pytest.mark.parametrize(
    "cmd",
    [
        ["pebble", "run", "--graph", "{g}", "--strategy", "generic"],
        ["mhf", "eval", "--graph", "{g}", "--input", "0102"],
        ["game", "run", "--graph", "{g}", "--trials", "10", "--evaluator", "noshuffle"],
    ],
)
def test_repro_reproduces_hashes(cmd, fig5_file, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("PEBBLEMARK_SEED", raising=False)
    monkeypatch.chdir(tmp_path)
    rep = tmp_path / "rep.json"
    argv = [c.replace("{g}", str(fig5_file)) for c in cmd] + ["--report", str(rep)]
    assert main(argv) == 0
    capsys.readouterr()
    first = json.loads(rep.read_text())
    rc, out, _ = _run(capsys, "repro", "--out", tmp_path / "again.json", str(rep) + ".manifest.json")
    assert rc == 0 and "matches" in out
    again = json.loads((tmp_path / "again.json").read_text())
    assert report_hash(again) == report_hash(first)
    assert again.get("trace_hash") == first.get("trace_hash")


def test_repro_detects_changed_input(fig5_file, tmp_path, capsys):
    rep = tmp_path / "rep.json"
    main(["mhf", "eval", "--graph", str(fig5_file), "--input", "01", "--coins", "02", "--report", str(rep)])
    fig5_file.write_text(fig5_file.read_text() + "# edited\n")
    rc, _, err = _run(capsys, "repro", "--out", tmp_path / "x.json", str(rep) + ".manifest.json")
    assert rc == 1 and "changed" in err
