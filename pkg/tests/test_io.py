import json
import math

import numpy as np
import pytest

from icqr import Dataset, Observation, ValidationError
from icqr.io import (
    StudyConfig,
    dump_json17,
    parse_study_config,
    read_dataset_csv,
    write_dataset_csv,
)


def test_csv_round_trip_preserves_everything(tmp_path):
    rng = np.random.default_rng(40)
    rows = [
        Observation.exact(1.2345678901234567, (1.0, 0.25)),
        Observation.censored(-math.inf, 0.5, (1.0, -1.5)),
        Observation.censored(0.5, 2.0, (1.0, rng.normal())),
        Observation.censored(2.0, math.inf, (1.0, 3.0)),
    ]
    ds = Dataset.from_observations(rows)
    path = tmp_path / "data.csv"
    write_dataset_csv(str(path), ds)
    back = read_dataset_csv(str(path))
    np.testing.assert_array_equal(back.delta, ds.delta)
    np.testing.assert_array_equal(back.left, ds.left)
    np.testing.assert_array_equal(back.right, ds.right)
    np.testing.assert_array_equal(back.covariates, ds.covariates)
    assert back.time[0] == ds.time[0]


def test_csv_accepts_endpoint_spelling_variants(tmp_path):
    path = tmp_path / "data.csv"
    path.write_text(
        "delta,time,left,right,x1\n"
        "0,,-Infinity,0.5,1.0\n"
        "0,,0.5,+INF,0.0\n"
        "0,,,1.0,0.5\n"          # blank left endpoint means open below
        "1,2.0,,,0.25\n"
        "1,3.0,3.0,3.0,0.5\n")   # exact row may repeat its time
    ds = read_dataset_csv(str(path))
    assert np.isneginf(ds.left[0]) and ds.right[0] == 0.5
    assert ds.left[1] == 0.5 and np.isposinf(ds.right[1])
    assert np.isneginf(ds.left[2]) and ds.right[2] == 1.0
    assert ds.delta[3] and ds.time[3] == 2.0
    assert ds.delta[4] and ds.left[4] == 3.0
    # the intercept column is prepended on read
    np.testing.assert_array_equal(ds.covariates[:, 0], np.ones(5))


def test_csv_header_validation(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("delta,time,lo,hi,x1\n1,1.0,,,0.0\n")
    with pytest.raises(ValidationError, match="header"):
        read_dataset_csv(str(path))
    path.write_text("delta,time,left,right,z1\n1,1.0,,,0.0\n")
    with pytest.raises(ValidationError, match="x1"):
        read_dataset_csv(str(path))
    path.write_text("")
    with pytest.raises(ValidationError, match="empty"):
        read_dataset_csv(str(path))
    path.write_text("delta,time,left,right,x1\n")
    with pytest.raises(ValidationError, match="no data rows"):
        read_dataset_csv(str(path))


def test_csv_row_problems_are_collected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "delta,time,left,right,x1\n"
        "2,1.0,,,0.0\n"           # bad delta
        "1,1.0,0.5,1.0,0.0\n"     # exact row with contradictory endpoints
        "0,9.9,0.5,1.0,0.0\n"     # censored row with a time
        "0,,0.5,oops,0.0\n"       # unparseable endpoint
        "1,1.0,,,abc\n")          # unparseable covariate
    with pytest.raises(ValidationError) as err:
        read_dataset_csv(str(path))
    msg = str(err.value)
    for fragment in ("row 2", "row 3", "row 4", "row 5", "row 6"):
        assert fragment in msg


def test_csv_log_transform_rules(tmp_path):
    path = tmp_path / "raw.csv"
    path.write_text(
        "delta,time,left,right,x1\n"
        "1,1.0,,,0.0\n"
        "0,,0,2.0,0.5\n")        # raw 0 as left endpoint opens the interval
    ds = read_dataset_csv(str(path), log_transform=True)
    assert ds.time[0] == 0.0
    assert np.isneginf(ds.left[1])
    np.testing.assert_allclose(ds.right[1], math.log(2.0), rtol=1e-15)

    path.write_text("delta,time,left,right,x1\n0,,-1.0,2.0,0.5\n")
    with pytest.raises(ValidationError, match="negative raw times"):
        read_dataset_csv(str(path), log_transform=True)

    path.write_text("delta,time,left,right,x1\n0,,0.5,0,0.5\n")
    with pytest.raises(ValidationError, match="left endpoint"):
        read_dataset_csv(str(path), log_transform=True)


def test_json17_round_trips_doubles(tmp_path):
    rng = np.random.default_rng(41)
    values = rng.standard_normal(50) * 10.0 ** rng.integers(-8, 8, size=50)
    text = dump_json17({"values": values})
    back = np.array(json.loads(text)["values"])
    np.testing.assert_array_equal(back, values)


def test_json17_encodes_special_values_and_types(tmp_path):
    obj = {
        "nan": math.nan,
        "pinf": math.inf,
        "ninf": -math.inf,
        "int": np.int64(7),
        "bool": np.bool_(True),
        "arr": np.array([[1.0, 2.0]]),
        "none": None,
        "tuple": (1, 2),
    }
    decoded = json.loads(dump_json17(obj))
    assert decoded["nan"] == "nan"
    assert decoded["pinf"] == "inf"
    assert decoded["ninf"] == "-inf"
    assert decoded["int"] == 7
    assert decoded["bool"] is True
    assert decoded["arr"] == [[1.0, 2.0]]
    assert decoded["none"] is None
    assert decoded["tuple"] == [1, 2]
    path = tmp_path / "out.json"
    dump_json17(obj, str(path))
    assert json.loads(path.read_text()) == decoded
    with pytest.raises(ValidationError, match="serialize"):
        dump_json17({"bad": object()})


def test_json17_output_is_stable():
    obj = {"b": 1.0 / 3.0, "a": [math.pi]}
    assert dump_json17(obj) == dump_json17(obj)
    # keys are sorted so semantically equal dicts serialize identically
    assert dump_json17({"a": [math.pi], "b": 1.0 / 3.0}) == dump_json17(obj)


def test_parse_study_config_full(tmp_path):
    path = tmp_path / "study.cfg"
    path.write_text(
        "# comparison run\n"
        "n = 150\n"
        "tau = 0.3\n"
        "error = logistic   # heavy tails\n"
        "hetero = m2\n"
        "scheme = ic\n"
        "seed = 11\n"
        "replicates = 20\n"
        "bootstrap = 50\n"
        "ci_level = 0.9\n"
        "estimators = ks, zfd\n"
        "bandwidth = 0.25\n"
        "label = sweep-a\n")
    cfg = parse_study_config(str(path))
    assert cfg == StudyConfig(n=150, tau=0.3, error="logistic", hetero="m2",
                              scheme="ic", seed=11, replicates=20, bootstrap=50,
                              ci_level=0.9, estimators=("ks", "zfd"),
                              bandwidth=0.25, label="sweep-a")


def test_parse_study_config_defaults_and_auto_p0(tmp_path):
    path = tmp_path / "study.cfg"
    path.write_text("p0 = auto\n")
    cfg = parse_study_config(str(path))
    assert cfg.p0 is None
    assert cfg.n == 200
    assert cfg.estimators == ("ks",)


def test_parse_study_config_collects_all_errors(tmp_path):
    path = tmp_path / "study.cfg"
    path.write_text(
        "n = 50\n"
        "colour = blue\n"
        "tau 0.5\n"
        "n = 100\n"
        "estimators = ks, ols\n"
        "seed = 1.5\n")
    with pytest.raises(ValidationError) as err:
        parse_study_config(str(path))
    msg = str(err.value)
    assert "line 2" in msg and "unknown key" in msg
    assert "line 3" in msg and "key=value" in msg
    assert "line 4" in msg and "duplicate" in msg
    assert "line 5" in msg and "estimators" in msg
    assert "line 6" in msg and "bad value" in msg
