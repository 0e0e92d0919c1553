import numpy as np
import pytest

from common.archive import load_archive, save_archive
from common.errors import DataError
from conftest import records
from ingestion.bundle import Domain, load_bundle, save_bundle
from ingestion.filtering import FilterRole, density_filter, drop_short_histories
from ingestion.loader import ingest, read_corpus, read_interactions, read_texts, write_corpus
from ingestion.splitter import split_leave_one_out


def _write(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    return str(path)


# ------------------------------------------------------------
# Lectura
# ------------------------------------------------------------
def test_read_interactions_reports_line_of_bad_timestamp(tmp_path):
    path = _write(tmp_path / "t.tsv", ["u1\ti1\t10", "", "u1\ti2\tnope"])
    with pytest.raises(DataError, match=":3:"):
        read_interactions(path, Domain.TARGET)


def test_read_interactions_requires_three_fields(tmp_path):
    path = _write(tmp_path / "t.tsv", ["u1\ti1"])
    with pytest.raises(DataError, match="expected"):
        read_interactions(path, Domain.TARGET)


def test_non_utf8_bytes_name_the_line(tmp_path):
    path = tmp_path / "t.tsv"
    path.write_bytes(b"u1\ti1\t10\nu1\ti\xff2\t11\n")
    with pytest.raises(DataError, match=r":2: not valid UTF-8"):
        read_interactions(str(path), Domain.TARGET)
    with pytest.raises(DataError, match=r":2: not valid UTF-8"):
        read_texts(str(path))


def test_quiet_reader_prints_nothing(tmp_path, capsys):
    path = _write(tmp_path / "t.tsv", ["u1\ti1\t10", "u1\ti1\t10"])
    rows = read_interactions(path, Domain.TARGET, verbose=False)
    ingest(rows, {Domain.TARGET: {"i1": "doc"}}, verbose=False)
    assert capsys.readouterr().out == ""

    read_interactions(path, Domain.TARGET)
    assert "[LOADER] 2 target records" in capsys.readouterr().out


def test_read_texts_collapses_whitespace(tmp_path):
    path = _write(tmp_path / "x.tsv", ["i1\t  red   fox\tjumps "])
    assert read_texts(path) == {"i1": "red fox jumps"}


def test_ingest_drops_exact_duplicates_only():
    rows = records(Domain.TARGET, [("u", "i", 1), ("u", "i", 1), ("u", "i", 2)])
    corpus = ingest(rows, {Domain.TARGET: {"i": "doc"}})
    assert len(corpus.records[Domain.TARGET]) == 2


def test_ingest_lists_items_without_text():
    rows = records(Domain.SOURCE, [("u", "a", 1), ("u", "b", 1)])
    with pytest.raises(DataError, match="1 source items have no text entry: b"):
        ingest(rows, {Domain.SOURCE: {"a": "doc"}})


def test_ingest_rejects_negative_timestamp():
    with pytest.raises(DataError, match="negative timestamp"):
        ingest(records(Domain.TARGET, [("u", "i", -1)]), {Domain.TARGET: {"i": "x"}})


def test_corpus_file_keeps_item_order(tmp_path):
    path = str(tmp_path / "corpus.txt")
    write_corpus(path, ["first doc", "second\tdoc", ""])
    assert read_corpus(path) == ["first doc", "second doc", ""]


# ------------------------------------------------------------
# Filtrado de densidad
# ------------------------------------------------------------
def test_density_filter_is_single_simultaneous_pass():
    # item "rare" has one interaction -> dropped; user "b" then keeps 2 records but was measured at 3
    rows = records(
        Domain.TARGET,
        [("a", "x", 1), ("a", "y", 2), ("b", "x", 1), ("b", "y", 2), ("b", "rare", 3)],
    )
    kept = density_filter(rows, FilterRole.TARGET_DOMAIN, bounds=(2, 3, 2, 5), verbose=False)
    assert {(r.user_key, r.item_key) for r in kept} == {("a", "x"), ("a", "y"), ("b", "x"), ("b", "y")}


def test_density_filter_upper_bounds_are_inclusive():
    rows = records(Domain.SOURCE, [("a", f"i{j}", j) for j in range(3)])
    assert len(density_filter(rows, FilterRole.SOURCE_DOMAIN, bounds=(1, 3, 1, 1), verbose=False)) == 3
    with pytest.raises(DataError, match="relax the thresholds"):
        density_filter(rows, FilterRole.SOURCE_DOMAIN, bounds=(1, 2, 1, 1), verbose=False)


def test_density_filter_rejects_mixed_domains():
    rows = records(Domain.SOURCE, [("a", "x", 1)]) + records(Domain.TARGET, [("a", "x", 1)])
    with pytest.raises(DataError):
        density_filter(rows, FilterRole.SOURCE_DOMAIN, verbose=False)


def test_drop_short_histories():
    rows = records(Domain.TARGET, [("a", "x", 1), ("a", "y", 2), ("a", "z", 3), ("b", "x", 1)])
    kept = drop_short_histories(rows, verbose=False)
    assert {r.user_key for r in kept} == {"a"}


# ------------------------------------------------------------
# Partición leave-one-out
# ------------------------------------------------------------
def test_split_is_chronological_with_stable_ties():
    target = records(
        Domain.TARGET,
        [("u", "late", 30), ("u", "tie_a", 10), ("u", "tie_b", 10), ("u", "first", 5)],
    )
    bundle = split_leave_one_out(target, verbose=False)
    key = bundle.item_keys.__getitem__
    assert [key(v) for v in bundle.train.item] == ["first", "tie_a"]
    assert key(int(bundle.valid.item[0])) == "tie_b"
    assert key(int(bundle.test.item[0])) == "late"


def test_split_puts_target_ids_before_source_ids():
    target = records(Domain.TARGET, [("t", f"ti{j}", j) for j in range(3)])
    source = records(Domain.SOURCE, [("s1", "si", 1), ("s2", "si", 2)])
    bundle = split_leave_one_out(target, source, verbose=False)

    assert bundle.user_keys == ("t", "s1", "s2")
    assert bundle.n_target_users == 1 and bundle.n_source_users == 2
    assert bundle.n_target_items == 3 and bundle.n_source_items == 1
    assert bundle.source.user.tolist() == [1, 2]
    assert bundle.source.item.tolist() == [3, 3]
    assert bundle.user_items[0] == frozenset({0, 1, 2})


def test_split_rejects_short_histories():
    with pytest.raises(DataError, match="density filtering must run first"):
        split_leave_one_out(records(Domain.TARGET, [("u", "a", 1), ("u", "b", 2)]), verbose=False)


def test_bundle_persists_clusters(tmp_path):
    target = records(Domain.TARGET, [("u", f"i{j}", j) for j in range(4)])
    bundle = split_leave_one_out(target, verbose=False)
    assert not bundle.has_clusters

    clustered = bundle.with_clusters(np.array([1, 0, 1, 0]))
    path = str(tmp_path / "bundle.bin")
    save_bundle(clustered, path)
    loaded = load_bundle(path)

    assert loaded.has_clusters
    assert loaded.same_as(clustered)
    assert not loaded.same_as(bundle)


def test_bundle_rejects_short_cluster_assignment():
    bundle = split_leave_one_out(records(Domain.TARGET, [("u", f"i{j}", j) for j in range(3)]), verbose=False)
    with pytest.raises(DataError):
        bundle.with_clusters(np.array([0, 1]))


# ------------------------------------------------------------
# Archivo binario
# ------------------------------------------------------------
def test_archive_bytes_are_deterministic(tmp_path):
    arrays = {"b": np.arange(3), "a": np.eye(2)}
    first, second = tmp_path / "1.bin", tmp_path / "2.bin"
    save_archive(str(first), "thing", arrays, {"n": 1})
    save_archive(str(second), "thing", dict(reversed(list(arrays.items()))), {"n": 1})
    assert first.read_bytes() == second.read_bytes()


def test_archive_checks_kind(tmp_path):
    path = str(tmp_path / "x.bin")
    save_archive(path, "graphs", {"a": np.zeros(1)})
    with pytest.raises(DataError, match="expected 'checkpoint'"):
        load_archive(path, "checkpoint")


def test_archive_rejects_garbage(tmp_path):
    path = tmp_path / "x.bin"
    path.write_bytes(b"not a zip")
    with pytest.raises(DataError, match="Cannot open archive"):
        load_archive(str(path), "graphs")
