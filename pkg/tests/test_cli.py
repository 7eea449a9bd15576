import json

import numpy as np
import pytest

from survicl.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, read_predictions
from survicl.config import ModelConfig
from survicl.io import read_dataset, vendored_path, write_dataset
from survicl.model import SicModel, save_checkpoint

TINY_CONFIG = {
    "model": {"d_model": 16, "n_heads": 2, "n_dataset_layers": 1, "n_bins": 6},
    "stages": [{"steps": 3, "samples": 48, "datasets_per_step": 2,
                "lr_schedule": {"kind": "constant", "value": 1e-3}}],
}


@pytest.fixture
def tiny_config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY_CONFIG))
    return str(p)


def test_exit_codes(tmp_path, capsys):
    assert main(["--help"]) == EXIT_OK
    assert main([]) == EXIT_USAGE
    assert main(["generate"]) == EXIT_USAGE
    assert main(["generate", "--n", "0", "--out", str(tmp_path)]) == EXIT_USAGE
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text('{"nonsense": 1}')
    assert main(["--config", str(bad_cfg), "generate", "--n", "1", "--out", str(tmp_path)]) == EXIT_USAGE
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,time,event\n1,2,7\n")
    assert main(["cv", "--model", "coxph", "--data", str(bad)]) == EXIT_DATA
    corrupt = tmp_path / "c.sick"
    corrupt.write_bytes(b"nope")
    assert main(["predict", "--checkpoint", str(corrupt), "--context", str(bad), "--query", str(bad),
                 "--out", str(tmp_path / "p.csv")]) == EXIT_DATA
    nofail = tmp_path / "none.csv"
    nofail.write_text("x0,time,event\n1,1,0\n2,2,0\n")
    pred = tmp_path / "pred.csv"
    pred.write_text("row,0.0,1.5\n0,1.0,0.5\n1,1.0,0.5\n")
    assert main(["evaluate", "--pred", str(pred), "--labels", str(nofail)]) == EXIT_NUMERIC
    assert main(["cv", "--model", "sic", "--data", str(nofail)]) == EXIT_USAGE


def test_generate_bookkeeping(tmp_path):
    out = tmp_path / "gen"
    assert main(["--seed", "4", "generate", "--n", "3", "--rows", "40", "--out", str(out)]) == EXIT_OK
    files = sorted(out.glob("dataset_*.csv"))
    assert [f.name for f in files] == ["dataset_00000.csv", "dataset_00001.csv", "dataset_00002.csv"]
    for i, f in enumerate(files):
        ds = read_dataset(f)
        assert ds.n == 40 and ds.manifest["index"] == i
        assert f.with_suffix(".json").exists()


def test_cv_command(tmp_path):
    out = tmp_path / "vet.cv.csv"
    args = ["cv", "--model", "coxph", "--data", str(vendored_path("veteran.csv")),
            "--schema", str(vendored_path("veteran.json")), "--out", str(out)]
    assert main(args) == EXIT_OK
    lines = out.read_text().splitlines()
    assert len(lines) == 7 and lines[-1].startswith("summary")
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["n_defined"] == 5 and 0.6 < side["mean"] < 0.8


def test_predict_and_evaluate(tmp_path, tiny_config):
    gen = tmp_path / "gen"
    main(["generate", "--n", "2", "--rows", "60", "--out", str(gen)])
    ck = tmp_path / "m.sick"
    assert main(["--config", tiny_config, "pretrain", "--out", str(ck)]) == EXIT_OK
    full = read_dataset(sorted(gen.glob("*.csv"))[0])
    ctx = write_dataset(full.subset(np.arange(30)), tmp_path / "ctx.csv")
    qry = write_dataset(full.subset(np.arange(30, 60)), tmp_path / "qry.csv")
    pred = tmp_path / "pred.csv"
    assert main(["predict", "--checkpoint", str(ck), "--context", str(ctx), "--query", str(qry),
                 "--out", str(pred)]) == EXIT_OK
    grid, curves = read_predictions(pred)
    assert grid[0] == 0.0 and curves.shape[0] == 30
    assert np.all(np.diff(curves, axis=1) <= 1e-12)
    res = tmp_path / "res.json"
    assert main(["evaluate", "--pred", str(pred), "--labels", str(qry), "--out", str(res)]) == EXIT_OK
    c = json.loads(res.read_text())["c_index_td"]
    assert 0.0 <= c <= 1.0


def test_predict_with_schema(tmp_path):
    ck = save_checkpoint(SicModel.create(ModelConfig(d_model=16, n_heads=2, n_bins=6), 0), tmp_path / "m.sick")
    pred = tmp_path / "vet_pred.csv"
    assert main(["predict", "--checkpoint", str(ck), "--context", str(vendored_path("veteran.csv")),
                 "--query", str(vendored_path("veteran.csv")), "--schema", str(vendored_path("veteran.json")),
                 "--out", str(pred)]) == EXIT_OK
    _, curves = read_predictions(pred)
    assert curves.shape[0] == 137
