#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Tests for the meshes and workloads."""

import json

import numpy as np
import pytest

from irregular_sdm import workloads
from irregular_sdm.errors import NotFoundError, ValidationError
from irregular_sdm.metadata import OrgLevel, Workload
from irregular_sdm.workloads import WorkloadSpec


def test_worked_example_spec():
    """The worked example always has five nodes."""
    spec = WorkloadSpec(kind="worked-example", total_nodes=100)
    assert spec.total_nodes == 5
    assert spec.timesteps == 2
    assert [g.names for g in spec.result_groups] == [["p", "q"]]


def test_defaults():
    fun3d = WorkloadSpec(kind=Workload.FUN3D_LIKE)
    rt = WorkloadSpec(kind="rt", level=1)
    assert (fun3d.total_nodes, fun3d.timesteps) == (2000, 2)
    assert (rt.total_nodes, rt.timesteps) == (1000, 5)
    assert rt.level == OrgLevel.L1


def test_bad_spec():
    with pytest.raises(ValidationError):
        WorkloadSpec(timesteps=0)
    with pytest.raises(ValidationError):
        WorkloadSpec(nprocs=0)
    with pytest.raises(ValueError):
        WorkloadSpec(kind="lattice")


def test_value_formulas():
    assert workloads.edge_array_values(2, 3).tolist() == [0.25, 1.25, 2.25]
    assert workloads.node_array_values(1, 2).tolist() == [0.125, 1.125]
    assert workloads.result_values(1, 3, [0, 4]).tolist() == [200.25, 204.25]


def test_grid_mesh():
    """A 3 x 3 grid has 16 edges and 8 triangles."""
    mesh, labels = workloads.grid_mesh(9, seed=1)
    assert mesh.total_edges == 16
    assert mesh.total_triangles == 8
    assert sorted(labels.tolist()) == list(range(9))
    nodes = np.concatenate((mesh.edges.edge1, mesh.edges.edge2))
    assert sorted(set(nodes.tolist())) == list(range(9))
    assert mesh.triangles.min() >= 0 and mesh.triangles.max() < 9
    assert mesh.edge_array_names == ["x"]


def test_grid_mesh_seeded():
    first, _ = workloads.grid_mesh(50, seed=4, edge_arrays=4, node_arrays=4)
    again, _ = workloads.grid_mesh(50, seed=4, edge_arrays=4, node_arrays=4)
    other, _ = workloads.grid_mesh(50, seed=5, edge_arrays=4, node_arrays=4)
    assert first.edges == again.edges
    assert first.edges != other.edges
    assert first.node_array_names == ["y0", "y1", "y2", "y3"]


def test_grid_mesh_size_limit():
    with pytest.raises(ValidationError):
        workloads.grid_mesh(0)
    with pytest.raises(ValidationError):
        workloads.grid_mesh(workloads.max_nodes + 1)


def test_random_mesh_bounds():
    for seed in range(50):
        mesh = workloads.random_mesh(seed, max_nodes=10, max_edges=20)
        assert 1 <= mesh.total_nodes <= 10
        assert 0 <= mesh.total_edges <= 20
        mesh.edges.validate(mesh.total_nodes)


def test_random_partition():
    pv = workloads.random_partition(2, 100, 4)
    assert pv.nprocs == 4
    assert pv.owner.min() >= 0 and pv.owner.max() < 4
    assert pv == workloads.random_partition(2, 100, 4)


def test_fun3d_datasets(tmp_path):
    spec = WorkloadSpec(kind="fun3d", total_nodes=100, nprocs=3)
    workload = workloads.gen_workload(spec, tmp_path)
    names = [name for _, name, _ in workload.result_datasets]
    assert names == ["q1", "q2", "q3", "q4", "flux"]
    flux = workload.result_datasets[-1][2]
    assert workload.global_count(flux) == 500
    assert workload.imported_arrays == [
        "edges",
        "x0",
        "x1",
        "x2",
        "x3",
        "y0",
        "y1",
        "y2",
        "y3",
    ]
    assert workload.partition.nprocs == 3


def test_rt_datasets(tmp_path):
    spec = WorkloadSpec(kind="rt", total_nodes=64, nprocs=2)
    workload = workloads.gen_workload(spec, tmp_path)
    _, _, triangles = workload.result_datasets[1]
    assert triangles.association == "triangle"
    assert workload.global_count(triangles) == workload.mesh.total_triangles == 98
    assert workload.imported_arrays == ["edges"]


def test_gen_writes_files(tmp_path):
    spec = WorkloadSpec(kind="rt", total_nodes=30, nprocs=4, seed=2)
    workload = workloads.gen_workload(spec, tmp_path / "input")
    names = sorted(p.name for p in (tmp_path / "input").iterdir())
    assert names == ["mesh.dat", "partition_P4.bin", "triangles.dat", "workload.json"]
    manifest = json.loads((tmp_path / "input" / "workload.json").read_text())
    assert manifest["total_edges"] == workload.mesh.total_edges
    assert manifest["offsets"]["end"] == workload.mesh_path.stat().st_size


def test_load_workload(tmp_path):
    """A generated workload reads back the same."""
    spec = WorkloadSpec(kind="fun3d", total_nodes=80, nprocs=2, seed=9)
    generated = workloads.gen_workload(spec, tmp_path)
    loaded = workloads.load_workload(tmp_path, level=OrgLevel.L2)
    assert loaded.mesh.edges.edge1.tolist() == generated.mesh.edges.edge1.tolist()
    assert loaded.mesh.edges.edge2.tolist() == generated.mesh.edges.edge2.tolist()
    assert loaded.mesh.triangles.tolist() == generated.mesh.triangles.tolist()
    assert loaded.partition == generated.partition
    assert loaded.spec.level == OrgLevel.L2
    assert loaded.manifest() == generated.manifest()


def test_load_for_other_nprocs(tmp_path):
    """Without a partition file the partition is rebuilt for the new count."""
    workloads.gen_workload(WorkloadSpec(kind="fun3d", total_nodes=40), tmp_path)
    loaded = workloads.load_workload(tmp_path, nprocs=3)
    assert loaded.partition.nprocs == 3
    assert sorted(set(loaded.partition.owner.tolist())) == [0, 1, 2]


def test_load_missing(tmp_path):
    with pytest.raises(NotFoundError):
        workloads.load_workload(tmp_path)


def test_worked_example_blocks():
    mesh, pv = workloads.build_workload(WorkloadSpec(nprocs=3))
    assert mesh.total_nodes == 5
    assert pv.owner.tolist() == [0, 0, 1, 1, 2]
