#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for the catalog."""

import pytest  # noqa: F401

from irregular_sdm import catalog as sdm_catalog
from irregular_sdm.catalog import Catalog, IndexHistoryRecord
from irregular_sdm.errors import (
    CatalogCorruptError,
    ConflictError,
    InitializationError,
    LifecycleError,
    NotFoundError,
    ValidationError,
)
from irregular_sdm.metadata import DataType, Kind, OrgLevel


def history_record(tmp_path, nprocs=2):
    return IndexHistoryRecord(
        total_nodes=5,
        total_edges=4,
        nprocs=nprocs,
        history_path=str(tmp_path / "history" / "h.sdmh"),
        per_rank_edge_counts=[2, 3][:nprocs] + [0] * (nprocs - 2),
        per_rank_node_counts=[3, 4][:nprocs] + [0] * (nprocs - 2),
        per_rank_byte_offsets=[28 + 100 * r for r in range(nprocs)],
    )


def test_initialize_creates_tables(tmp_path):
    """A new catalog has the six table files."""
    catalog = Catalog.initialize("app", tmp_path / "cat", 2)
    catalog.finalize()
    names = sorted(p.name for p in (tmp_path / "cat").iterdir())
    assert names == [
        "access_pattern.tbl",
        "execution.tbl",
        "import.tbl",
        "index.tbl",
        "index_history.tbl",
        "run.tbl",
    ]


def test_run_ids_increase(tmp_path):
    """Reopening a catalog starts a new run."""
    first = sdm_catalog.initialize("app", tmp_path, 1)
    first.finalize()
    second = sdm_catalog.initialize("app", tmp_path, 4, org_level=OrgLevel.L2)
    second.finalize()
    assert (first.run_id, second.run_id) == (1, 2)
    runs = sdm_catalog.read_tables(tmp_path)["run"]
    assert [r["nprocs"] for r in runs] == ["1", "4"]
    assert runs[1]["org_level"] == "2"


def test_unwritable_root(tmp_path):
    """A root below a regular file cannot be created."""
    (tmp_path / "file").write_text("x")
    with pytest.raises(InitializationError):
        Catalog.initialize("app", tmp_path / "file" / "cat", 1)


def test_corrupt_table_names_file(tmp_path):
    """A record with a field lacking a value is reported with the file."""
    (tmp_path / "run.tbl").write_text("run_id=1\tapp_name\n")
    with pytest.raises(CatalogCorruptError) as e:
        Catalog.initialize("app", tmp_path, 1)
    assert e.value.path.name == "run.tbl"
    assert "run.tbl" in str(e.value)


def test_truncated_table(tmp_path):
    """A last record without its newline is corrupt."""
    (tmp_path / "execution.tbl").write_text("run_id=1\tdataset=p")
    with pytest.raises(CatalogCorruptError):
        Catalog.initialize("app", tmp_path, 1)


def test_define_groups(catalog):
    """Group ids count from 0 across result and import groups."""
    result = catalog.define_group(
        ["p", "q"], DataType.FLOAT64, 5, Kind.RESULT, org_level=3
    )
    imported = catalog.define_group(["edge1"], "INT32", 4, "IMPORT", source="m.dat")
    assert (result.group_id, imported.group_id) == (0, 1)
    assert result.label == "G0"
    assert result.org_level == OrgLevel.L3
    assert imported.org_level is None
    assert catalog.groups() == [result, imported]
    assert catalog.group_of("q") == result


def test_import_attributes(catalog, import_group_args):
    """Datasets of an import group may override type and count."""
    group = catalog.define_group(**import_group_args)
    assert group.data_type_of("edge1") == DataType.INT32
    assert group.data_type_of("x") == DataType.FLOAT64
    assert group.global_count_of("x") == 4
    assert group.global_count_of("y") == 5
    (stored,) = catalog.groups()
    assert stored == group


def test_result_group_needs_level(catalog):
    with pytest.raises(ValidationError):
        catalog.define_group(["p"], DataType.FLOAT64, 5, Kind.RESULT)


def test_duplicate_dataset(catalog):
    """A dataset name can be defined once per run."""
    catalog.define_group(["p"], DataType.FLOAT64, 5, Kind.RESULT, org_level=1)
    with pytest.raises(ConflictError):
        catalog.define_group(["q", "p"], DataType.FLOAT64, 5, Kind.RESULT, org_level=1)


def test_bad_dataset_name(catalog):
    with pytest.raises(ValidationError):
        catalog.define_group(["a b"], DataType.FLOAT64, 5, Kind.RESULT, org_level=1)


def test_same_name_in_next_run(tmp_path):
    """Dataset names are scoped to a run."""
    first = Catalog.initialize("app", tmp_path, 1)
    first.define_group(["p"], DataType.FLOAT64, 5, Kind.RESULT, org_level=1)
    first.finalize()
    second = Catalog.initialize("app", tmp_path, 1)
    group = second.define_group(["p"], DataType.FLOAT64, 5, Kind.RESULT, org_level=1)
    assert group.group_id == 0
    assert len(second.groups(run_id=1)) == 1
    second.finalize()


def test_record_and_get_offset(catalog):
    catalog.record_offset("p", 1, "G0.dat", 0, 40)
    catalog.record_offset("p", 2, "G0.dat", 40, 40)
    record = catalog.get_offset("p", 2)
    assert (record.file_id, record.byte_offset, record.byte_length) == (
        "G0.dat",
        40,
        40,
    )
    assert record.end == 80


def test_record_offset_conflicts(catalog):
    """Repeated timesteps and overlapping byte ranges are rejected."""
    catalog.record_offset("p", 1, "G0.dat", 0, 40)
    with pytest.raises(ConflictError):
        catalog.record_offset("p", 1, "G0.dat", 40, 40)
    with pytest.raises(ConflictError):
        catalog.record_offset("q", 1, "G0.dat", 39, 40)
    catalog.record_offset("q", 1, "G1.dat", 0, 40)


def test_timesteps_start_at_one(catalog):
    with pytest.raises(ValidationError):
        catalog.record_offset("p", 0, "G0.dat", 0, 40)


def test_get_offset_missing(catalog):
    with pytest.raises(NotFoundError):
        catalog.get_offset("p", 1)


def test_index_history(tmp_path, catalog):
    """Histories are found by size and number of processes only."""
    assert catalog.lookup_index_history(5, 4, 2) is None
    record = history_record(tmp_path)
    catalog.insert_index_history(record)
    assert record.history_id == 1
    found = catalog.lookup_index_history(5, 4, 2)
    assert found == record
    assert found.history_path == str(tmp_path / "history" / "h.sdmh")
    assert catalog.lookup_index_history(5, 4, 4) is None
    assert catalog.lookup_index_history(5, 5, 2) is None


def test_index_history_duplicate(tmp_path, catalog):
    catalog.insert_index_history(history_record(tmp_path))
    with pytest.raises(ConflictError):
        catalog.insert_index_history(history_record(tmp_path))


def test_index_history_invalid(tmp_path, catalog):
    """The per-rank lists must have an entry per process."""
    record = history_record(tmp_path)
    record.per_rank_byte_offsets = [28]
    with pytest.raises(ValidationError):
        catalog.insert_index_history(record)


def test_index_history_persists(tmp_path):
    """A history registered in one run is found in the next."""
    first = Catalog.initialize("app", tmp_path / "cat", 2)
    first.insert_index_history(history_record(tmp_path))
    first.finalize()
    rows = sdm_catalog.read_tables(tmp_path / "cat")["index_history"]
    assert rows[0]["history_path"] == "../history/h.sdmh"
    second = Catalog.initialize("app", tmp_path / "cat", 2)
    assert second.lookup_index_history(5, 4, 2) == history_record(tmp_path)
    second.finalize()


def test_import_source_relative(tmp_path):
    """Import sources are stored relative to the catalog directory."""
    source = tmp_path / "input" / "mesh.dat"
    first = Catalog.initialize("app", tmp_path / "cat", 2)
    group = first.define_group(["edge1"], "INT32", 4, "IMPORT", source=source)
    first.finalize()
    assert group.source == str(source)
    rows = sdm_catalog.read_tables(tmp_path / "cat")["import"]
    assert rows[0]["source"] == "../input/mesh.dat"
    second = Catalog.initialize("app", tmp_path / "cat", 2)
    assert second.groups(run_id=group.run_id) == [group]
    second.finalize()


def test_use_after_finalize(catalog):
    catalog.finalize()
    with pytest.raises(LifecycleError):
        catalog.define_group(["p"], DataType.FLOAT64, 5, Kind.RESULT, org_level=1)
    with pytest.raises(LifecycleError):
        catalog.lookup_index_history(5, 4, 2)
    with pytest.raises(LifecycleError):
        catalog.finalize()


def test_dump_normalized(catalog):
    tables = catalog.dump(normalize=True)
    assert tables["run"][0]["timestamp"] == "-"
    assert tables["run"][0]["app_name"] == "test"
