import json

import numpy as np
import pytest

from survicl.config import PriorConfig
from survicl.errors import ParseError, SchemaError
from survicl.io import (
    CategoricalEncoder,
    DatasetSchema,
    impute_median,
    ingest_real,
    load_vendored,
    manifest_path,
    read_dataset,
    write_dataset,
)
from survicl.prior import generate_dataset


def test_round_trip_is_exact(tmp_path):
    ds = generate_dataset(PriorConfig(), 100, 3)
    path = write_dataset(ds, tmp_path / "d.csv")
    back = read_dataset(path)
    assert np.array_equal(back.X, ds.X) and np.array_equal(back.time, ds.time)
    assert np.array_equal(back.event, ds.event)
    assert back.manifest == json.loads(json.dumps(ds.manifest))


def _write(tmp_path, rows, header="x0,time,event"):
    p = tmp_path / "f.csv"
    p.write_text(header + "\n" + "\n".join(rows) + "\n")
    return p


def test_bad_event_reports_row(tmp_path):
    rows = ["0.1,1.0,1", "0.2,2.0,0", "0.3,3.0,1", "0.4,4.0,0", "0.5,5.0,2"]
    with pytest.raises(ParseError) as info:
        read_dataset(_write(tmp_path, rows))
    assert info.value.row == 5 and "row 5" in str(info.value)


@pytest.mark.parametrize("rows, header", [
    (["0.1,0.0,1"], "x0,time,event"),
    (["0.1,abc,1"], "x0,time,event"),
    (["0.1,1.0"], "x0,time,event"),
    (["0.1,1.0,1"], "a,time,event"),
    ([], "x0,time,event"),
])
def test_malformed_files(tmp_path, rows, header):
    with pytest.raises(ParseError):
        read_dataset(_write(tmp_path, rows, header))


def test_missing_manifest_and_missing_features(tmp_path):
    ds = read_dataset(_write(tmp_path, ["0.1,1.0,1", ",2.0,0"]))
    assert ds.manifest == {"provenance": "unknown"}
    assert np.isnan(ds.X[1, 0])
    assert not manifest_path(tmp_path / "f.csv").exists()


def test_veteran_bundle():
    ds = load_vendored("veteran")
    assert ds.n == 137
    assert abs(ds.event.mean() - 0.934) < 0.005
    assert "karno" in ds.manifest["feature_names"]


def test_lung_bundle_has_missing_values():
    ds = load_vendored("lung")
    assert ds.n == 228 and ds.manifest["missing_cells"] > 0
    assert set(np.unique(ds.event)) == {0, 1}


def test_categorical_encoder():
    enc = CategoricalEncoder(["a", "b", "c"])
    np.testing.assert_array_equal(enc.codes(["b", "z", "a"]), [1, 3, 0])
    oh = enc.one_hot(["a", "b", "c", "z"])
    np.testing.assert_array_equal(oh, [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert enc.column_names("f") == ["f=b", "f=c", "f=other"]


def test_unknown_category_maps_to_other(tmp_path):
    schema = DatasetSchema(features=[{"name": "g", "kind": "categorical"}, {"name": "v"}],
                           time="t", event="d", event_values=["dead"])
    a = tmp_path / "a.csv"
    a.write_text("g,v,t,d\nx,1.5,3,dead\ny,NA,4,alive\n")
    b = tmp_path / "b.csv"
    b.write_text("g,v,t,d\nw,2.0,5,dead\n")
    first = ingest_real(a, schema)
    assert first.manifest["feature_names"] == ["g=y", "g=other", "v"]
    assert np.isnan(first.X[1, 2]) and list(first.event) == [1, 0]
    second = ingest_real(b, schema, categories=first.manifest["categories"])
    np.testing.assert_array_equal(second.X[0], [0, 1, 2.0])


def test_schema_validation(tmp_path):
    with pytest.raises(SchemaError):
        DatasetSchema(features=[{"name": "t"}], time="t", event="d")
    with pytest.raises(SchemaError):
        DatasetSchema(features=[{"name": "a", "kind": "text"}], time="t", event="d")
    with pytest.raises(SchemaError):
        DatasetSchema.load(tmp_path / "absent.json")
    schema = DatasetSchema(features=[{"name": "q"}], time="t", event="d")
    p = tmp_path / "c.csv"
    p.write_text("a,t,d\n1,2,1\n")
    with pytest.raises(SchemaError):
        ingest_real(p, schema)


def test_impute_median_uses_training_rows():
    train = np.array([[1.0, np.nan], [3.0, 4.0], [np.nan, 6.0]])
    test = np.array([[np.nan, np.nan]])
    a, b = impute_median(train, test)
    np.testing.assert_array_equal(a, [[1, 5], [3, 4], [2, 6]])
    np.testing.assert_array_equal(b, [[2, 5]])
