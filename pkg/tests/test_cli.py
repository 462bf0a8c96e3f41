import json
import os

import pytest

from milpgen.cli import main
from milpgen.mps import read_mps

MIS_PARAMS = json.dumps({"nodes": 30, "mean_degree": 5.0, "graph": "barabasi_albert",
                         "formulation": "clique"})


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def mps_bytes(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d)) if f.endswith(".mps")}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--family", "mis", "--count", "100", "--seed", "7",
                 "--params", MIS_PARAMS, "--out", str(d / "data")]) == 0
    cfg = {"version": 1, "train": {"hidden": 8, "depth": 2, "selection": "final"}}
    (d / "run.json").write_text(json.dumps(cfg))
    assert main(["train", "--config", str(d / "run.json"), "--data", str(d / "data"),
                 "--out", str(d / "model" / "ck.bin"), "--steps", "40", "--lr", "0.005"]) == 0
    return d


def test_gen_data_outputs(workdir):
    files = mps_bytes(workdir / "data")
    assert len(files) == 100
    man = json.loads((workdir / "data" / "manifest.json").read_text())
    assert man["count"] == 100 and man["family"] == "mis"
    resolved = json.loads((workdir / "data" / "resolved_config.json").read_text())
    assert resolved["seed"] == 7 and resolved["family"]["count"] == 100


def test_gen_data_rerun_identical(workdir, tmp_path, capsys):
    code, _, _ = run(capsys, "gen-data", "--family", "mis", "--count", "100", "--seed", "7",
                     "--params", MIS_PARAMS, "--out", tmp_path / "again")
    assert code == 0 and mps_bytes(tmp_path / "again") == mps_bytes(workdir / "data")


def test_self_similarity(workdir, tmp_path, capsys):
    data = workdir / "data"
    for half, files in (("a", sorted(os.listdir(data))[:50]), ("b", sorted(os.listdir(data))[50:100])):
        (tmp_path / half).mkdir()
        for f in files:
            if f.endswith(".mps"):
                (tmp_path / half / f).write_bytes((data / f).read_bytes())
    code, out, _ = run(capsys, "similarity", "--set-a", tmp_path / "a", "--set-b", tmp_path / "b",
                       "--csv", tmp_path / "sim.csv")
    assert code == 0
    assert json.loads(out)["score"] >= 0.9
    assert (tmp_path / "sim.csv").read_text().startswith("statistic,js,score")


def test_train_outputs(workdir):
    model = workdir / "model"
    assert (model / "ck.bin").exists() and (model / "resolved_config.json").exists()
    log = (model / "ck.log.jsonl").read_text().splitlines()
    assert len(log) == 40
    resolved = json.loads((model / "resolved_config.json").read_text())
    assert resolved["train"]["steps"] == 40 and resolved["train"]["hidden"] == 8


def test_train_rerun_identical(workdir, tmp_path, capsys):
    code, _, _ = run(capsys, "train", "--config", workdir / "run.json", "--data", workdir / "data",
                     "--out", tmp_path / "ck.bin", "--steps", "40", "--lr", "0.005")
    assert code == 0
    assert (tmp_path / "ck.bin").read_bytes() == (workdir / "model" / "ck.bin").read_bytes()


def test_generate_and_eta_monotone(workdir, tmp_path, capsys):
    scores = []
    for eta in (0.01, 0.3, 1.0):
        out = tmp_path / f"gen_{eta}"
        code, _, _ = run(capsys, "generate", "--checkpoint", workdir / "model" / "ck.bin",
                         "--data", workdir / "data", "--out", out, "--eta", eta, "--count", 100,
                         "--seed", 3)
        assert code == 0 and len(mps_bytes(out)) == 100
        code, text, _ = run(capsys, "similarity", "--set-a", workdir / "data", "--set-b", out)
        scores.append(json.loads(text)["score"])
    assert scores[0] >= scores[1] >= scores[2]
    again = tmp_path / "again"
    run(capsys, "generate", "--checkpoint", workdir / "model" / "ck.bin", "--data", workdir / "data",
        "--out", again, "--eta", 0.3, "--count", 100, "--seed", 3)
    assert mps_bytes(again) == mps_bytes(tmp_path / "gen_0.3")


@pytest.mark.parametrize("kind", ["random", "bowly"])
def test_baselines(workdir, tmp_path, capsys, kind):
    code, _, _ = run(capsys, "baseline", "--kind", kind, "--data", workdir / "data",
                     "--out", tmp_path / kind, "--eta", 0.1, "--count", 1)
    assert code == 0 and len(mps_bytes(tmp_path / kind)) > 0
    resolved = json.loads((tmp_path / kind / "resolved_config.json").read_text())
    assert resolved["paths"]["baseline"] == kind


def test_stats_solve_hardness_roundtrip(workdir, tmp_path, capsys):
    one = sorted((workdir / "data").glob("*.mps"))[0]
    code, out, _ = run(capsys, "stats", "--data", one)
    assert code == 0 and out.splitlines()[0].startswith("instance,coef_dens")
    code, out, _ = run(capsys, "solve", "--input", one, "--out", tmp_path / "solve.json")
    rows = json.loads(out)
    assert code == 0 and rows[0]["status"] == "optimal"
    code, out, _ = run(capsys, "hardness", "--data", one, "--reference", one)
    rep = json.loads(out)
    assert code == 0 and rep["mean_nodes"] == rep["ref_mean_nodes"]
    assert rep["feasibility"]["fraction"] == 1.0
    code, out, _ = run(capsys, "roundtrip-check", "--data", workdir / "data")
    assert code == 0 and json.loads(out) == {"checked": 100, "failures": []}


def test_export_embeddings(workdir, tmp_path, capsys):
    code, _, _ = run(capsys, "export-embeddings", "--checkpoint", workdir / "model" / "ck.bin",
                     "--data", workdir / "data", "--out", tmp_path / "emb.csv")
    lines = (tmp_path / "emb.csv").read_text().splitlines()
    assert code == 0 and len(lines) == 101
    assert lines[0] == "instance," + ",".join(f"e{k}" for k in range(8))


def test_downstream(tmp_path, capsys):
    params = json.dumps({"knapsacks": 3, "vars_per_knapsack": 3, "int_vars": 3})
    for name, seed in (("tr", 1), ("te", 2), ("au", 3)):
        assert main(["gen-data", "--family", "mik", "--count", "6", "--seed", str(seed),
                     "--params", params, "--out", str(tmp_path / name)]) == 0
    capsys.readouterr()
    code, out, _ = run(capsys, "downstream", "--train", tmp_path / "tr", "--test", tmp_path / "te",
                       "--augment", tmp_path / "au", "--epochs", 5)
    rep = json.loads(out)
    assert code == 0 and rep["n_augment"] == 6 and rep["n_test"] == 6


class TestErrors:
    def test_bad_subcommand(self, capsys):
        code, _, err = run(capsys, "frobnicate")
        assert code == 1
        assert json.loads(err.strip().splitlines()[-1])["exit_code"] == 1

    def test_missing_input(self, tmp_path, capsys):
        code, _, err = run(capsys, "stats", "--data", tmp_path / "nope")
        assert code == 2 and json.loads(err.strip().splitlines()[-1])["error"]

    def test_malformed_mps(self, tmp_path, capsys):
        (tmp_path / "bad.mps").write_text("NAME x\nROWS\n Q r\nENDATA\n")
        code, _, _ = run(capsys, "stats", "--data", tmp_path / "bad.mps")
        assert code == 2

    def test_unknown_config_key(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text(json.dumps({"version": 1, "train": {"stepz": 3}}))
        code, _, err = run(capsys, "gen-data", "--config", tmp_path / "c.json", "--family", "mis",
                           "--out", tmp_path / "o")
        assert code == 1 and "stepz" in err

    def test_unknown_top_level_key(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text(json.dumps({"version": 1, "extra": 1}))
        code, _, _ = run(capsys, "gen-data", "--config", tmp_path / "c.json", "--out", tmp_path / "o")
        assert code == 1

    def test_bad_version(self, tmp_path, capsys):
        (tmp_path / "c.json").write_text(json.dumps({"version": 99}))
        code, _, _ = run(capsys, "gen-data", "--config", tmp_path / "c.json", "--out", tmp_path / "o")
        assert code == 1

    def test_bad_generator_param(self, tmp_path, capsys):
        code, _, _ = run(capsys, "gen-data", "--family", "mis", "--params", '{"colour": 1}',
                         "--out", tmp_path / "o")
        assert code in (1, 2)

    def test_roundtrip_reads_instances(self, workdir):
        inst = read_mps(sorted((workdir / "data").glob("*.mps"))[0])
        assert inst.n == 30
