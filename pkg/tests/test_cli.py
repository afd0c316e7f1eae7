import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from test_metrics import brute_force
from ultralight import accounting as acct
from ultralight.blocks import MambaConfig
from ultralight.cli import main
from ultralight.imageio import read_pgm_bytes, write_ppm

HERE = Path(__file__).parent
GOLDEN = HERE / "golden"
EVAL = HERE / "fixtures" / "eval"


def run(capsys, *argv):
    rc = main(list(argv))
    out, err = capsys.readouterr()
    return rc, out, err


@pytest.mark.parametrize("argv,golden", [
    (["params", "--block", "mamba", "--d-model", "1024"], "params_mamba_1024.json"),
    (["params", "--block", "ss2d", "--d-model", "256", "--baseline", "1024"], "params_ss2d_256_vs_1024.json"),
    (["params", "--block", "pvm", "--d-model", "1024", "--p", "4", "--baseline", "1024"], "params_pvm_1024_p4.json"),
    (["flops", "--convention", "macs"], "flops_default_macs.json"),
    (["eval", "--pred", str(EVAL / "pred"), "--truth", str(EVAL / "truth")], "eval_fixture.json"),
    (["selftest"], "selftest.json"),
])
def test_json_matches_golden(capsys, argv, golden):
    rc, out, _ = run(capsys, *argv, "--format", "json")
    assert rc == 0
    assert json.loads(out) == json.loads((GOLDEN / golden).read_text())


def test_params_text_total_lines(capsys):
    _, out, _ = run(capsys, "params", "--block", "mamba", "--d-model", "1024")
    assert out.splitlines()[-1].split() == ["total", "23435264"]
    _, out, _ = run(capsys, "params", "--block", "ss2d", "--d-model", "256")
    assert out.splitlines()[-1].split() == ["total", "2921984"]


def test_params_pvm_p1_cross_check(capsys):
    _, out, _ = run(capsys, "params", "--block", "pvm", "--d-model", "64", "--p", "1", "--format", "json")
    doc = json.loads(out)
    branch = acct.mamba_params(MambaConfig(64)).total
    assert doc["total"] == branch + 4 * 64 + 64 * 64 + 1


def test_params_csv_and_config(capsys, tmp_path):
    _, out, _ = run(capsys, "params", "--block", "mamba", "--d-model", "256", "--baseline", "1024", "--format", "csv")
    rows = [r.split(",") for r in out.splitlines()]
    assert rows[0] == ["term", "count"] and ["reduction_percent_rounded", "93.7"] in rows
    cfg = tmp_path / "c.json"
    cfg.write_text("{}")
    _, out, _ = run(capsys, "params", "--config", str(cfg), "--format", "json")
    assert 44000 <= json.loads(out)["total"] <= 54000


def test_flops_text_prints_convention(capsys):
    rc, out, _ = run(capsys, "flops")
    assert rc == 0 and "convention: 2macs" in out and "GFLOPs:" in out


def test_eval_matches_metric_oracle(capsys):
    _, out, _ = run(capsys, "eval", "--pred", str(EVAL / "pred"), "--truth", str(EVAL / "truth"), "--format", "json")
    doc = json.loads(out)
    assert [r["file"] for r in doc["rows"]] == ["case0.pgm", "case1.pgm", "case2.pgm"]
    for row in doc["rows"]:
        pred = read_pgm_bytes(EVAL / "pred" / row["file"]) / 255.0
        truth = (read_pgm_bytes(EVAL / "truth" / row["file"]) >= 128).astype(float)
        tp, tn, fp, fn = brute_force(pred, truth)
        assert row["dsc"] == 2 * tp / (2 * tp + fp + fn)
        assert row["se"] == tp / (tp + fn) and row["sp"] == tn / (tn + fp)
        assert row["acc"] == (tp + tn) / (tp + tn + fp + fn)
    assert doc["mean"]["dsc"] == pytest.approx(np.mean([r["dsc"] for r in doc["rows"]]))


def test_eval_identical_dirs(capsys):
    _, out, _ = run(capsys, "eval", "--pred", str(EVAL / "truth"), "--truth", str(EVAL / "truth"))
    assert out.splitlines()[-1].split() == ["mean", "1.0000", "1.0000", "1.0000", "1.0000"]


def test_eval_unmatched_and_empty(capsys, tmp_path):
    pred, truth = tmp_path / "p", tmp_path / "t"
    pred.mkdir()
    truth.mkdir()
    shutil.copy(EVAL / "pred" / "case0.pgm", pred / "case0.pgm")
    shutil.copy(EVAL / "truth" / "case1.pgm", truth / "case1.pgm")
    rc, _, err = run(capsys, "eval", "--pred", str(pred), "--truth", str(truth))
    assert rc == 3 and "warning" in err
    shutil.copy(EVAL / "truth" / "case0.pgm", truth / "case0.pgm")
    rc, out, err = run(capsys, "eval", "--pred", str(pred), "--truth", str(truth))
    assert rc == 0 and "case1.pgm" in err and "case1" not in out


def test_scan_bench(capsys):
    rc, out, _ = run(capsys, "scan-bench", "--len", "200", "--repeat", "1", "--format", "json")
    doc = json.loads(out)
    assert rc == 0 and [r["chunk"] for r in doc["rows"]] == [None, 1, 7, 64, 200]
    assert all(r["max_rel_dev"] <= 1e-5 for r in doc["rows"])
    _, out, _ = run(capsys, "scan-bench", "--len", "1", "--repeat", "1", "--format", "json")
    assert all(r["max_rel_dev"] == 0 for r in json.loads(out)["rows"])


def test_init_and_infer(capsys, tmp_path, rng):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"input_size": 32, "seed": 2}))
    write_ppm(tmp_path / "in.ppm", rng.integers(0, 256, (3, 32, 32), dtype=np.uint8))
    assert run(capsys, "init", "--config", str(cfg), "--out", str(tmp_path / "w.bin"))[0] == 0
    base = ["infer", "--config", str(cfg), "--image", str(tmp_path / "in.ppm")]
    assert run(capsys, *base, "--weights", str(tmp_path / "w.bin"), "--out", str(tmp_path / "a.pgm"))[0] == 0
    assert run(capsys, *base, "--out", str(tmp_path / "b.pgm"))[0] == 0
    assert run(capsys, *base, "--chunk", "5", "--out", str(tmp_path / "c.pgm"))[0] == 0
    a = read_pgm_bytes(tmp_path / "a.pgm")
    assert a.shape == (32, 32)
    assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
    assert np.abs(a.astype(int) - read_pgm_bytes(tmp_path / "c.pgm")).max() <= 1


@pytest.mark.parametrize("argv,code", [
    ([], 1),
    (["params"], 1),
    (["params", "--block", "mamba"], 1),
    (["params", "--block", "mamba", "--d-model", "8", "--p", "2"], 1),
    (["scan-bench", "--chunks", "0"], 1),
    (["scan-bench", "--chunks", "x"], 1),
    (["params", "--block", "pvm", "--d-model", "10"], 2),
    (["flops", "--config", "/nonexistent/c.json"], 2),
])
def test_exit_codes(capsys, argv, code):
    rc, out, err = run(capsys, *argv)
    assert rc == code and out == ""
    assert len(err.strip().splitlines()) == 1


def test_infer_shape_mismatch_exit_2(capsys, tmp_path, rng):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"input_size": 64}))
    write_ppm(tmp_path / "in.ppm", rng.integers(0, 256, (3, 32, 32), dtype=np.uint8))
    rc, _, err = run(capsys, "infer", "--config", str(cfg), "--image", str(tmp_path / "in.ppm"),
                     "--out", str(tmp_path / "o.pgm"))
    assert rc == 2 and "expects" in err


def test_help_documents_json_keys(capsys):
    with pytest.raises(SystemExit):
        main(["--help"])
    out = capsys.readouterr().out
    assert "json output keys" in out and "total_gflops" in out
