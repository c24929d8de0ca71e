import json

import numpy as np
import pytest

from cellloc.cli import DATA_DIR_ENV, main
from cellloc.dataset import load_dir
from cellloc.postprocess import Hmm, fit_hmm, hmm_filter


@pytest.fixture(scope="module")
def corpus(tmp_path_factory, small_scenario):
    """A four-recording corpus generated through the CLI itself."""
    root = tmp_path_factory.mktemp("corpus")
    scn = root / "scenario.json"
    scn.write_text(small_scenario.to_json(), encoding="utf-8")
    out = root / "data"
    code = main(["generate", "--out", str(out), "--sets", "4", "--seed", "9",
                 "--scenario", str(scn)])
    assert code == 0
    return out


def _tree_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


class TestGenerate:
    def test_writes_sets_scenario_manifest(self, corpus):
        names = {p.name for p in corpus.iterdir()}
        assert names == {"set00.csv", "set01.csv", "set02.csv", "set03.csv",
                         "scenario.json", "manifest.json"}
        sets = load_dir(corpus)
        assert [ms.id for ms in sets] == ["set00", "set01", "set02", "set03"]
        assert all(ms.is_fully_labeled() for ms in sets)

    def test_manifest_contents(self, corpus):
        manifest = json.loads((corpus / "manifest.json").read_text())
        assert manifest["tool"] == "cellloc"
        assert manifest["command"] == "generate"
        assert manifest["seed"] == 9
        assert "manifest.json" in manifest["outputs"]
        assert set(manifest["outputs"]) >= {"set00.csv", "scenario.json"}

    def test_rerun_is_byte_identical(self, tmp_path, small_scenario):
        scn = tmp_path / "scenario.json"
        scn.write_text(small_scenario.to_json(), encoding="utf-8")
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["generate", "--out", str(out), "--sets", "2", "--seed", "3",
                         "--scenario", str(scn)]) == 0
        assert _tree_bytes(a) == _tree_bytes(b)

    def test_bad_sets_count(self, tmp_path):
        assert main(["generate", "--out", str(tmp_path / "x"), "--sets", "0"]) == 2


class TestEvaluate:
    def test_outputs_and_stdout(self, corpus, tmp_path, capsys):
        out = tmp_path / "eval"
        code = main(["evaluate", "--data", str(corpus), "--out", str(out)])
        assert code == 0
        report = json.loads((out / "report.json").read_text())
        assert report["n_splits"] == 4
        assert 0.0 <= report["mean_accuracy"] <= 1.0
        assert report["config"]["filter"] == "none"
        assert len(report["splits"]) == 4

        header = (out / "predictions.csv").read_text().splitlines()[0]
        assert header == "split,val_id,t,truth,y_hat,z_hat"
        assert f"mean accuracy over 4 splits: {report['mean_accuracy']:.4f}" \
            in capsys.readouterr().out

    def test_rerun_is_byte_identical(self, corpus, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["evaluate", "--data", str(corpus), "--out", str(out),
                         "--filter", "hmm"]) == 0
        assert _tree_bytes(a) == _tree_bytes(b)

    def test_median_m_implies_median(self, corpus, tmp_path):
        out = tmp_path / "eval"
        assert main(["evaluate", "--data", str(corpus), "--out", str(out),
                     "--median-m", "3"]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["config"]["filter"] == "median(3)"

    def test_median_m_conflicts_with_hmm(self, corpus, tmp_path):
        assert main(["evaluate", "--data", str(corpus), "--out", str(tmp_path / "x"),
                     "--filter", "hmm", "--median-m", "3"]) == 2

    def test_data_dir_from_env(self, corpus, tmp_path, monkeypatch):
        monkeypatch.setenv(DATA_DIR_ENV, str(corpus))
        assert main(["evaluate", "--out", str(tmp_path / "eval")]) == 0

    def test_no_data_dir(self, tmp_path, monkeypatch):
        monkeypatch.delenv(DATA_DIR_ENV, raising=False)
        assert main(["evaluate", "--out", str(tmp_path / "x")]) == 2

    def test_missing_data_dir(self, tmp_path):
        assert main(["evaluate", "--data", str(tmp_path / "nope"),
                     "--out", str(tmp_path / "x")]) == 2

    def test_corrupt_csv_exits_3(self, corpus, tmp_path):
        data = tmp_path / "data"
        data.mkdir()
        for p in corpus.glob("set0[01].csv"):
            (data / p.name).write_bytes(p.read_bytes())
        (data / "set02.csv").write_text("t,label,rssi_A\n0,9,-50\n")
        assert main(["evaluate", "--data", str(data), "--out", str(tmp_path / "x"),
                     "--n-train", "1"]) == 3

    def test_unknown_node_name(self, corpus, tmp_path):
        assert main(["evaluate", "--data", str(corpus), "--out", str(tmp_path / "x"),
                     "--nodes", "bogus"]) == 3


class TestSweepL:
    def test_cells_and_summary(self, corpus, tmp_path, capsys):
        out = tmp_path / "sweep"
        code = main(["sweep-l", "--data", str(corpus), "--out", str(out),
                     "--l-values", "1,2", "--filters", "none,hmm"])
        assert code == 0
        cells = (out / "sweep_cells.csv").read_text().splitlines()
        assert cells[0] == "l,filter,mask_bits,train_ids,val_id,accuracy"
        assert len(cells) == 1 + 2 * 2 * 4
        summary = (out / "sweep_summary.csv").read_text().splitlines()
        assert len(summary) == 1 + 4
        stdout = capsys.readouterr().out
        assert "L=1 filter=none mean accuracy" in stdout
        assert "L=2 filter=hmm mean accuracy" in stdout

    def test_bad_l_values(self, corpus, tmp_path):
        assert main(["sweep-l", "--data", str(corpus), "--out", str(tmp_path / "x"),
                     "--l-values", "a,b"]) == 2

    def test_unknown_filter_token(self, corpus, tmp_path):
        assert main(["sweep-l", "--data", str(corpus), "--out", str(tmp_path / "x"),
                     "--filters", "mode"]) == 2


class TestSweepNodes:
    def test_restricted_enumeration(self, corpus, tmp_path, capsys):
        out = tmp_path / "nodes"
        code = main(["sweep-nodes", "--data", str(corpus), "--out", str(out),
                     "--l", "1", "--nodes", "I-E,I-DR,O-M", "--bins", "10"])
        assert code == 0
        acc = (out / "mask_accuracy.csv").read_text().splitlines()
        assert acc[0] == "mask_bits,nodes,n_nodes,mean_accuracy"
        assert len(acc) == 1 + 7
        hist = (out / "mask_histogram.csv").read_text().splitlines()
        assert len(hist) == 1 + 10
        assert sum(int(line.split(",")[2]) for line in hist[1:]) == 7
        assert len(capsys.readouterr().out.strip().splitlines()) == 5


class TestFilter:
    def test_median_per_group(self, tmp_path):
        src = tmp_path / "pred.csv"
        src.write_text(
            "split,val_id,t,y_hat\n"
            "a+b,c,0,0\na+b,c,1,1\na+b,c,2,0\na+b,c,3,0\n"
            "a+c,b,0,1\na+c,b,1,1\n",
            encoding="utf-8")
        dst = tmp_path / "out.csv"
        assert main(["filter", "--predictions", str(src), "--out", str(dst),
                     "--median", "2"]) == 0
        lines = dst.read_text().splitlines()
        assert lines[0] == "split,val_id,t,y_hat,z_hat"
        # the spike in the first stream dies; the second stream restarts clean
        assert [l.split(",")[-1] for l in lines[1:]] == ["0", "0", "0", "0", "1", "1"]

    def test_ungrouped_is_one_stream(self, tmp_path):
        src = tmp_path / "pred.csv"
        src.write_text("y_hat\n0\n1\n0\n0\n", encoding="utf-8")
        dst = tmp_path / "out.csv"
        assert main(["filter", "--predictions", str(src), "--out", str(dst),
                     "--median", "2"]) == 0
        assert [l for l in dst.read_text().splitlines()[1:]] == ["0,0", "1,0", "0,0", "0,0"]

    def test_hmm_model_file(self, tmp_path):
        model = fit_hmm([0, 0, 1, 1, 2, 2], [0, 0, 1, 2, 2, 2])
        mpath = tmp_path / "model.json"
        model.save(mpath)

        y = [0, 0, 1, 1, 2, 1, 2, 2]
        src = tmp_path / "pred.csv"
        src.write_text("y_hat\n" + "\n".join(str(v) for v in y) + "\n", encoding="utf-8")
        dst = tmp_path / "out.csv"
        assert main(["filter", "--predictions", str(src), "--out", str(dst),
                     "--hmm", str(mpath)]) == 0
        got = [int(l.split(",")[-1]) for l in dst.read_text().splitlines()[1:]]
        expected = hmm_filter(Hmm.load(mpath), np.array(y, dtype=np.int64))
        assert got == list(expected)

    def test_requires_exactly_one_mode(self, tmp_path):
        src = tmp_path / "pred.csv"
        src.write_text("y_hat\n0\n", encoding="utf-8")
        dst = str(tmp_path / "out.csv")
        assert main(["filter", "--predictions", str(src), "--out", dst]) == 2
        assert main(["filter", "--predictions", str(src), "--out", dst,
                     "--median", "2", "--hmm", "x.json"]) == 2

    def test_missing_y_hat_column(self, tmp_path):
        src = tmp_path / "pred.csv"
        src.write_text("t,label\n0,1\n", encoding="utf-8")
        assert main(["filter", "--predictions", str(src),
                     "--out", str(tmp_path / "o.csv"), "--median", "1"]) == 3

    def test_missing_predictions_file(self, tmp_path):
        assert main(["filter", "--predictions", str(tmp_path / "nope.csv"),
                     "--out", str(tmp_path / "o.csv"), "--median", "1"]) == 2


class TestValidate:
    def test_ok_and_fail(self, corpus, tmp_path, capsys):
        good = corpus / "set00.csv"
        assert main(["validate", str(good)]) == 0
        out = capsys.readouterr().out
        assert out.startswith(f"OK {good}:") and "10 nodes" in out

        bad = tmp_path / "bad.csv"
        bad.write_text("t,label,rssi_A\n0,9,-50\n", encoding="utf-8")
        assert main(["validate", str(good), str(bad)]) == 3
        out = capsys.readouterr().out
        assert f"FAIL {bad}:" in out and f"OK {good}:" in out

    def test_directory_scan(self, corpus, capsys):
        assert main(["validate", "--data", str(corpus)]) == 0
        assert len(capsys.readouterr().out.strip().splitlines()) == 4

    def test_nothing_to_validate(self):
        assert main(["validate"]) == 2


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.startswith("cellloc ")
