import csv
import json

import pytest

from mpprl import cli


def run(argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def dataset(tmp_path):
    d = tmp_path / "data"
    assert run(["gen", "--records", 120, "--corruption", 0.2, "--seed", 3, "--out-dir", d]) == 0
    return d


def test_gen_files(dataset):
    names = sorted(p.name for p in dataset.iterdir())
    assert names == ["party_1.csv", "party_2.csv", "party_3.csv", "truth.csv"]
    with open(dataset / "party_1.csv") as fh:
        assert next(csv.reader(fh)) == ["rid", "given_name", "surname", "suburb", "postcode"]


@pytest.mark.parametrize("mode", ["mpam", "mpam-f", "lai"])
def test_link_then_eval(dataset, tmp_path, mode, capsys):
    out = tmp_path / mode
    assert run(["link", dataset, "--mode", mode, "--truth", dataset / "truth.csv", "--out-dir", out]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["report"]["mode"] == mode
    f1_link = report["quality"]["f1"]
    assert (out / "report.txt").read_text().startswith(f"mode={mode}\n")
    assert not list(out.glob("*.part"))
    capsys.readouterr()
    assert run(["eval", out / "matches.csv", dataset / "truth.csv", "--out-dir", out]) == 0
    text = capsys.readouterr().out
    assert f"f1={f1_link:.6f}" in text
    assert (out / "quality.txt").read_text() == text


def test_link_without_truth_writes_pseudonyms(dataset, tmp_path):
    out = tmp_path / "o"
    assert run(["link", dataset / "party_1.csv", dataset / "party_2.csv", dataset / "party_3.csv",
                "--out-dir", out]) == 0
    rows = (out / "matches.csv").read_text().splitlines()
    assert rows[0] == "party_1,party_2,party_3,dice"
    assert len(rows) > 1 and len(rows[1].split(",")[0]) == 32


def test_config_file_and_overrides(dataset, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[bloom]\nl = 300\nk = 10\n[protocol]\nthreshold = 0.9\n")
    out = tmp_path / "o"
    assert run(["link", dataset, "--config", cfg, "--threshold", 0.95, "--out-dir", out]) == 0
    report = json.loads((out / "report.json").read_text())["report"]
    assert report["configured_k"] == 10
    dice = [float(r.split(",")[-1]) for r in (out / "matches.csv").read_text().splitlines()[1:]]
    assert all(d >= 0.95 for d in dice)


def test_attack(dataset, tmp_path):
    out = tmp_path / "a"
    assert run(["attack", dataset, "--out-dir", out]) == 0
    text = (out / "attack.txt").read_text()
    assert "dr_mean=" in text and "position_3.dr_marketer=" in text
    assert (out / "sensitivity_party_2.csv").exists()


def test_bench(tmp_path):
    cfg = tmp_path / "b.ini"
    cfg.write_text("[bench]\nparties = 3\nsizes = 60\nmodes = mpam,mpam-f,lai\n")
    assert run(["bench", "--config", cfg, "--out-dir", tmp_path]) == 0
    rows = list(csv.DictReader(open(tmp_path / "bench.csv")))
    assert [r["mode"] for r in rows] == ["mpam", "mpam-f", "lai"]
    assert list(rows[0]) == cli.BENCH_COLUMNS


def test_errors(dataset, tmp_path, capsys):
    assert run(["link", dataset / "party_1.csv", dataset / "party_2.csv", "--out-dir", tmp_path]) == 1
    assert "at least 3 parties" in capsys.readouterr().err
    assert run(["link", tmp_path / "missing", "--out-dir", tmp_path]) == 1
    assert run(["link", dataset, "--config", tmp_path / "nope.ini"]) == 1
    with pytest.raises(SystemExit):
        run(["link", dataset, "--mode", "bogus"])


def test_indivisible_length_rejected(dataset, tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[bloom]\nl = 500\npad_segments = no\n")
    # 500 bits cannot be split into 3 segments without padding
    assert run(["link", dataset, "--config", cfg, "--out-dir", tmp_path]) == 1


def test_round_trip_is_deterministic(tmp_path, capsys):
    d = tmp_path / "d"
    run(["gen", "--records", 1000, "--corruption", 0.2, "--seed", 5, "--out-dir", d])
    scores = []
    for rep in range(2):
        out = tmp_path / f"r{rep}"
        run(["link", d, "--out-dir", out, "--truth", d / "truth.csv"])
        capsys.readouterr()
        run(["eval", out / "matches.csv", d / "truth.csv"])
        scores.append(capsys.readouterr().out)
    assert scores[0] == scores[1]


def test_modes_agree_on_exact_duplicates(tmp_path):
    d = tmp_path / "d"
    run(["gen", "--records", 300, "--corruption", 0.0, "--seed", 6, "--out-dir", d])
    found = {}
    for mode in ("mpam", "lai"):
        run(["link", d, "--mode", mode, "--truth", d / "truth.csv", "--out-dir", tmp_path / mode])
        rows = (tmp_path / mode / "matches.csv").read_text().splitlines()[1:]
        found[mode] = {tuple(r.split(",")[:3]) for r in rows}
    truth = {tuple(r.split(",")[1:]) for r in (d / "truth.csv").read_text().splitlines()[1:]}
    assert truth <= found["mpam"] and truth <= found["lai"]


def test_bench_one_row_per_cell(tmp_path):
    cfg = tmp_path / "b.ini"
    cfg.write_text("[bench]\nparties = 3,4\nsizes = 40,60\nmodes = mpam,lai\n")
    assert run(["bench", "--config", cfg, "--out-dir", tmp_path]) == 0
    rows = list(csv.DictReader(open(tmp_path / "bench.csv")))
    assert {(r["mode"], r["parties"], r["records"]) for r in rows} == {
        (m, str(p), str(n)) for m in ("mpam", "lai") for p in (3, 4) for n in (40, 60)}
    assert len(rows) == 8


def test_inline_config_comments(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[protocol]\nmode = mpam-f   ; filtered\nthreshold = 0.9 # strict\n")
    cfg = cli.load_config(path)
    assert cfg["protocol"]["mode"] == "mpam-f"
    assert cfg["protocol"].getfloat("threshold") == 0.9
