#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for the sequential references."""

import dataclasses

import numpy as np
import pytest

from irregular_sdm import oracles, workloads
from irregular_sdm.errors import VerificationError


def test_worked_example(worked_example):
    mesh, pv = worked_example
    result = oracles.sequential_oracles(mesh, pv)
    rank0, rank1 = result.index_sets
    assert rank0.held_edges.local_to_global.tolist() == [0, 2]
    assert rank0.node_map.local_to_global.tolist() == [0, 3, 1]
    assert rank1.held_edges.local_to_global.tolist() == [3, 0, 1]
    assert rank1.node_map.local_to_global.tolist() == [1, 2, 4, 0]
    assert rank1.owned_node_count == 3
    assert rank0.stats.strategy == "oracle"


def test_reference_region(worked_example):
    """Every node is written once, by its owner."""
    mesh, pv = worked_example
    result = oracles.sequential_oracles(mesh, pv, value=lambda g: 2.0 * g + 1)
    assert np.frombuffer(result.region, "<f8").tolist() == [1.0, 3.0, 5.0, 7.0, 9.0]


def test_every_edge_is_held():
    """Each edge is held by one or two ranks, and each node owned once."""
    for seed in range(30):
        mesh = workloads.random_mesh(seed)
        pv = workloads.random_partition(seed, mesh.total_nodes, 4)
        index_sets = oracles.sequential_oracles(mesh, pv).index_sets
        held = np.zeros(mesh.total_edges, dtype=int)
        owned = np.zeros(mesh.total_nodes, dtype=int)
        for index_set in index_sets:
            held[index_set.held_edges.local_to_global] += 1
            owned[index_set.owned_nodes] += 1
        assert held.min(initial=1) >= 1 and held.max(initial=1) <= 2
        assert owned.tolist() == [1] * mesh.total_nodes


def test_verify(tmp_path):
    """Each mesh is checked for every number of processes."""
    assert oracles.verify(7, tmp_path, cases=2) == 10
    assert (tmp_path / "case_7" / "history").is_dir()
    assert (tmp_path / "case_8" / "data_P8" / "G0.dat").exists()


def test_verify_full_size(tmp_path):
    """200 random meshes on 1, 2, 3, 4 and 8 processes."""
    assert oracles.verify(0, tmp_path, cases=200) == 1000


def test_verify_detects_differences(tmp_path, monkeypatch):
    reference = oracles.reference_index_set

    def wrong(*args):
        index_set = reference(*args)
        return dataclasses.replace(index_set, total_edges=index_set.total_edges + 1)

    monkeypatch.setattr(oracles, "reference_index_set", wrong)
    with pytest.raises(VerificationError) as e:
        oracles.verify(3, tmp_path, cases=1, nprocs_list=(2,))
    assert "index distribution" in str(e.value)
