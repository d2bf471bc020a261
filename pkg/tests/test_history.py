#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for saving and replaying index distributions."""

import threading

import numpy as np
import pytest

from irregular_sdm import history, workloads
from irregular_sdm.catalog import IndexHistoryRecord, read_tables
from irregular_sdm.errors import (
    ConflictError,
    HistoryCorruptError,
    HistoryMismatch,
    RankFailure,
)
from irregular_sdm.harness import run_ranks
from irregular_sdm.history import (
    AsyncTicket,
    HistoryFile,
    index_registry,
    partition_index_with_history,
    precreate_histories,
    section_offsets,
)
from irregular_sdm.partition import PartitioningVector, block_range, distribute_edges


def register(catalog, mesh, pv, history_dir):
    """Distribute the mesh, save it and return the index sets."""

    def program(comm):
        lo, hi = block_range(mesh.total_edges, comm.rank, comm.nprocs)
        index_set = distribute_edges(mesh.edges.slice(lo, hi), pv, comm)
        ticket = index_registry(
            catalog if comm.rank == 0 else None, index_set, comm, history_dir
        )
        ticket.wait()
        return index_set

    return run_ranks(pv.nprocs, program)


@pytest.fixture()
def registered(tmp_path, catalog, worked_example):
    """The worked example saved to a history, and its catalog record."""
    mesh, pv = worked_example
    index_sets = register(catalog, mesh, pv, tmp_path / "history")
    record = catalog.lookup_index_history(5, 4, 2)
    return index_sets, record


def test_section_offsets():
    """A 28-byte header, then sections of 8 + 24E + 8 + 8N bytes."""
    assert section_offsets([2, 3], [3, 4]) == ([28, 116], 236)
    assert section_offsets([], []) == ([], 28)


def test_registry_layout(tmp_path, registered):
    index_sets, record = registered
    path = tmp_path / "history" / "history_N5_E4_P2.sdmh"
    assert record.history_path == str(path)
    assert path.stat().st_size == 236
    assert record.per_rank_edge_counts == [2, 3]
    assert record.per_rank_node_counts == [3, 4]
    assert record.per_rank_byte_offsets == [28, 116]
    assert HistoryFile(path).read_header() == {
        "total_nodes": 5,
        "total_edges": 4,
        "nprocs": 2,
    }


def test_finalize_waits_for_history(tmp_path, catalog, worked_example, monkeypatch):
    """The catalog is not closed before the history file is written."""
    mesh, pv = worked_example
    release = threading.Event()
    write_section = HistoryFile.write_section

    def held_write(self, offset, data):
        release.wait(10)
        return write_section(self, offset, data)

    monkeypatch.setattr(HistoryFile, "write_section", held_write)

    def program(comm):
        lo, hi = block_range(mesh.total_edges, comm.rank, comm.nprocs)
        index_set = distribute_edges(mesh.edges.slice(lo, hi), pv, comm)
        index_registry(
            catalog if comm.rank == 0 else None,
            index_set,
            comm,
            tmp_path / "history",
        )
        return index_set

    index_sets = run_ranks(pv.nprocs, program)
    ticket = catalog.pending
    finalizer = threading.Thread(target=catalog.finalize)
    finalizer.start()
    finalizer.join(0.2)
    assert finalizer.is_alive()
    assert not ticket.done()
    assert read_tables(catalog.root_dir)["index_history"] == []

    release.set()
    finalizer.join(10)
    assert not finalizer.is_alive()
    assert ticket.done()
    rows = read_tables(catalog.root_dir)["index_history"]
    assert len(rows) == 1
    for rank in range(pv.nprocs):
        replayed = partition_index_with_history(ticket.record, rank, pv)
        assert replayed == index_sets[rank]


def test_replay(registered, worked_example):
    """Replaying gives the distribution without any ring shift."""
    _, pv = worked_example
    index_sets, record = registered
    for rank in range(2):
        replay = partition_index_with_history(record, rank, pv)
        assert replay == index_sets[rank]
        assert replay.stats.ring_shifts == 0
        assert replay.stats.history_reads == 1
        assert replay.stats.strategy == "history"


def test_replay_random_meshes(tmp_path, catalog):
    for seed in range(20):
        mesh = workloads.random_mesh(seed)
        pv = workloads.random_partition(seed, mesh.total_nodes, 3)
        index_sets = register(catalog, mesh, pv, tmp_path / "history")
        record = catalog.lookup_index_history(mesh.total_nodes, mesh.total_edges, 3)
        for rank in range(3):
            replay = partition_index_with_history(record, rank, pv)
            assert replay == index_sets[rank], f"seed {seed}"


def test_other_nprocs_is_a_mismatch(registered):
    _, record = registered
    pv = PartitioningVector([0, 1, 2, 3, 0], nprocs=4)
    with pytest.raises(HistoryMismatch) as e:
        partition_index_with_history(record, 0, pv)
    assert (e.value.recorded, e.value.requested) == (2, 4)


def test_other_partition_is_corrupt(registered):
    """Owned nodes must agree with the partitioning vector."""
    _, record = registered
    pv = PartitioningVector([1, 0, 1, 0, 1], nprocs=2)
    with pytest.raises(HistoryCorruptError):
        partition_index_with_history(record, 0, pv)


def test_truncated_file(registered, worked_example):
    _, pv = worked_example
    _, record = registered
    with open(record.history_path, "r+b") as fd:
        fd.truncate(200)
    partition_index_with_history(record, 0, pv)
    with pytest.raises(HistoryCorruptError):
        partition_index_with_history(record, 1, pv)


def test_bad_magic(registered, worked_example):
    _, pv = worked_example
    _, record = registered
    with open(record.history_path, "r+b") as fd:
        fd.write(b"XXXX")
    with pytest.raises(HistoryCorruptError):
        partition_index_with_history(record, 0, pv)


def test_missing_file(registered, worked_example):
    _, pv = worked_example
    _, record = registered
    HistoryFile(record.history_path).path.unlink()
    with pytest.raises(HistoryCorruptError):
        partition_index_with_history(record, 0, pv)


def test_register_twice(tmp_path, registered, catalog, worked_example):
    mesh, pv = worked_example
    with pytest.raises(RankFailure) as e:
        register(catalog, mesh, pv, tmp_path / "other")
    assert isinstance(e.value.error, ConflictError)


def test_failed_write_is_not_registered(tmp_path, catalog):
    """A history whose sections cannot be written never reaches the catalog."""
    path = tmp_path / "missing" / "h.sdmh"
    record = IndexHistoryRecord(
        total_nodes=1,
        total_edges=0,
        nprocs=1,
        history_path=str(path),
        per_rank_edge_counts=[0],
        per_rank_node_counts=[1],
        per_rank_byte_offsets=[28],
    )
    ticket = AsyncTicket(record, HistoryFile(path), catalog)
    ticket.submit(28, b"\0" * 24)
    with pytest.raises(HistoryCorruptError):
        history.wait(ticket, timeout=10)
    assert ticket.done()
    assert catalog.lookup_index_history(1, 0, 1) is None


def test_precreate_histories(tmp_path, catalog):
    """Histories made ahead of time replay for every process count."""
    mesh, labels = workloads.grid_mesh(60, seed=3)

    def partition(nprocs):
        return PartitioningVector.blocks(mesh.total_nodes, nprocs, order=labels)

    records = precreate_histories(
        catalog, mesh, partition, [1, 2, 3], tmp_path / "history"
    )
    assert [r.nprocs for r in records] == [1, 2, 3]
    for nprocs in (1, 2, 3):
        record = catalog.lookup_index_history(
            mesh.total_nodes, mesh.total_edges, nprocs
        )
        assert record is not None
        pv = partition(nprocs)
        owned = np.flatnonzero(pv.owner == nprocs - 1)
        replay = partition_index_with_history(record, nprocs - 1, pv)
        assert replay.owned_nodes.tolist() == owned.tolist()
