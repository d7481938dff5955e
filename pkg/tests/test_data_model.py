import numpy as np
import pytest

from ivhet import (
    ColumnMap,
    ConfigError,
    Dataset,
    DomainError,
    EmptyDataError,
    load_dataset,
    validate,
)


def test_column_map_rejects_duplicates():
    with pytest.raises(ConfigError):
        ColumnMap(outcome="a", treatment="a", instrument="z")


def test_column_map_rejects_empty_names():
    with pytest.raises(ConfigError):
        ColumnMap(outcome="", treatment="d", instrument="z")


def test_column_map_from_json(tmp_path):
    p = tmp_path / "map.json"
    p.write_text('{"outcome": "y", "treatment": "d", "instrument": "z", '
                 '"covariates": ["a", "b"], "cluster": "c"}')
    cmap = ColumnMap.from_json(str(p))
    assert cmap.covariates == ("a", "b")
    assert cmap.cluster == "c"


def test_column_map_from_json_rejects_unknown_keys(tmp_path):
    p = tmp_path / "map.json"
    p.write_text('{"outcome": "y", "treatment": "d", "instrument": "z", '
                 '"bogus": 1}')
    with pytest.raises(ConfigError, match="bogus"):
        ColumnMap.from_json(str(p))


def test_dataset_coerces_and_freezes():
    ds = Dataset(y=[1, 2.0, 3], d=[0, 1, 0], z=[1, 0, 1], x=[1, 2, 3])
    assert ds.y.dtype == np.float64
    assert ds.d.dtype == np.int64
    assert ds.x.shape == (3, 1)
    assert ds.covariate_names == ("x1",)
    with pytest.raises(ValueError):
        ds.y[0] = 99.0


def test_dataset_rejects_nonbinary_treatment():
    with pytest.raises(DomainError, match="treatment"):
        Dataset(y=[1.0, 2.0], d=[0, 2], z=[0, 1], x=[0.0, 1.0])


def test_dataset_rejects_nonfinite_outcome():
    with pytest.raises(DomainError):
        Dataset(y=[np.nan, 2.0], d=[0, 1], z=[0, 1], x=[0.0, 1.0])


def test_dataset_rejects_single_row():
    with pytest.raises(DomainError):
        Dataset(y=[1.0], d=[0], z=[0], x=[0.0])


def test_dataset_subset():
    ds = Dataset(y=[1.0, 2, 3, 4], d=[0, 1, 0, 1], z=[1, 0, 1, 0],
                 x=[5.0, 6, 7, 8], cluster=[1, 1, 2, 2])
    sub = ds.subset(np.array([True, False, True, False]))
    assert sub.n == 2
    assert list(sub.y) == [1.0, 3.0]
    assert list(sub.cluster) == [1, 2]


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return str(p)


def test_load_basic(tmp_path):
    path = _write(tmp_path, "y,d,z,x\n1.5,1,0,2\n2.5,0,1,3\n")
    ds = load_dataset(path, ColumnMap("y", "d", "z", ("x",)))
    assert ds.n == 2
    assert ds.dropped == 0
    assert list(ds.x[:, 0]) == [2.0, 3.0]


def test_load_missing_column_is_config_error(tmp_path):
    path = _write(tmp_path, "y,d,z\n1,0,1\n2,1,0\n")
    with pytest.raises(ConfigError, match="x"):
        load_dataset(path, ColumnMap("y", "d", "z", ("x",)))


def test_load_rejects_miscoded_binary(tmp_path):
    path = _write(tmp_path, "y,d,z\n1,yes,1\n2,0,0\n")
    with pytest.raises(DomainError, match="yes"):
        load_dataset(path, ColumnMap("y", "d", "z"))


def test_load_accepts_float_coded_binary(tmp_path):
    path = _write(tmp_path, "y,d,z\n1,1.0,0.0\n2,0.0,1.0\n")
    ds = load_dataset(path, ColumnMap("y", "d", "z"))
    assert list(ds.d) == [1, 0]
    assert list(ds.z) == [0, 1]


def test_load_drops_and_counts_bad_rows(tmp_path):
    path = _write(tmp_path, "y,d,z,x\n1,1,0,2\n,0,1,3\nfoo,1,1,4\n2,0,0,\n3,1,1,9\n")
    ds = load_dataset(path, ColumnMap("y", "d", "z", ("x",)))
    assert ds.n == 2
    assert ds.dropped == 3


def test_load_empty_is_empty_data_error(tmp_path):
    path = _write(tmp_path, "y,d,z\n,0,1\n")
    with pytest.raises(EmptyDataError):
        load_dataset(path, ColumnMap("y", "d", "z"))


def test_load_cluster_strings_factorized_in_order(tmp_path):
    path = _write(tmp_path,
                  "y,d,z,site\n1,0,1,boston\n2,1,0,austin\n3,0,1,boston\n4,1,0,chicago\n")
    ds = load_dataset(path, ColumnMap("y", "d", "z", (), cluster="site"))
    assert list(ds.cluster) == [0, 1, 0, 2]


def test_load_handles_bom(tmp_path):
    p = tmp_path / "bom.csv"
    p.write_bytes("y,d,z\n1,0,1\n2,1,0\n".encode("utf-8-sig"))
    ds = load_dataset(str(p), ColumnMap("y", "d", "z"))
    assert ds.n == 2


def test_validate_flags_no_variation():
    ds = Dataset(y=[1.0, 2, 3], d=[0, 1, 0], z=[1, 1, 1], x=[1.0, 2, 3])
    rep = validate(ds)
    assert any("instrument" in e for e in rep.errors)
    ds2 = Dataset(y=[1.0, 2, 3], d=[1, 1, 1], z=[1, 0, 1], x=[1.0, 2, 3])
    rep2 = validate(ds2)
    assert any("treatment" in e for e in rep2.errors)


def test_validate_warns_constant_covariate():
    ds = Dataset(y=[1.0, 2, 3, 4], d=[0, 1, 0, 1], z=[1, 0, 1, 0],
                 x=np.column_stack([[1.0, 1, 1, 1], [1.0, 2, 3, 4]]),
                 covariate_names=("const", "varies"))
    rep = validate(ds)
    assert rep.passed
    assert any("const" in w for w in rep.warnings)
    assert not any("varies" in w for w in rep.warnings)
