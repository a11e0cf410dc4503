import numpy as np
import pytest

from errors import ConfigError
from rng_utils import StreamFactory, stream
from store import RunStore, config_hash, read_json, read_table


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_csv_has_lf_endings_and_a_header(tmp_path):
    store = RunStore(tmp_path)
    store.write_csv("t.csv", ("x", "y"), [(0.5, np.float64(1.25)), (1, 2)])
    raw = (tmp_path / "t.csv").read_bytes()
    assert raw == b"x,y\n0.5,1.25\n1,2\n"
    assert list(store.checksums()) == ["t.csv"]


def test_json_is_sorted(tmp_path):
    store = RunStore(tmp_path)
    store.write_json("d.json", {"b": np.int64(2), "a": np.array([1.0, 2.0])})
    text = (tmp_path / "d.json").read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"')
    assert read_json(tmp_path / "d.json") == {"a": [1.0, 2.0], "b": 2}


def test_read_table_skips_header_and_comments(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("r,w\n# comment\n0.0,1.0\n0.5,2.0\n", encoding="utf-8")
    x, values = read_table(path)
    assert list(x) == [0.0, 0.5]
    assert list(values) == [1.0, 2.0]


def test_read_table_rejects_bad_rows(tmp_path):
    path = tmp_path / "w.csv"
    path.write_text("0.0,1.0\nfoo,bar\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_table(path)
    (tmp_path / "empty.csv").write_text("x,value\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        read_table(tmp_path / "empty.csv")


def test_streams_depend_only_on_seed_and_name():
    assert np.array_equal(stream(1, "coupling", 8, 0).random(5), stream(1, "coupling", 8, 0).random(5))
    assert not np.array_equal(stream(1, "coupling", 8, 0).random(5), stream(1, "coupling", 8, 1).random(5))
    assert not np.array_equal(stream(1, "gibbs").random(5), stream(2, "gibbs").random(5))


def test_replica_streams_are_independent():
    factory = StreamFactory(7)
    draws = [rng.random(3) for rng in factory.replica_streams("poc", 3)]
    assert len({tuple(d) for d in draws}) == 3
    assert np.array_equal(factory("poc", 1).random(3), draws[1])
