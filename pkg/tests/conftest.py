#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""Fixtures for testing the irregular_sdm package."""

import pytest

from irregular_sdm import SDMParameters, workloads
from irregular_sdm.catalog import Catalog
from irregular_sdm.metadata import DataType, Kind


@pytest.fixture()
def worked_example():
    """The five-node, four-edge mesh and its partitioning vector."""
    return workloads.worked_example()


@pytest.fixture()
def mesh_file(tmp_path, worked_example):
    """The import file of the worked example."""
    mesh, _ = worked_example
    path = tmp_path / "mesh.dat"
    mesh.write(path)
    return path


@pytest.fixture()
def catalog(tmp_path):
    """An open catalog for two processes, finalized after the test."""
    result = Catalog.initialize("test", tmp_path / "catalog", 2)
    yield result
    if not result._finalized:
        result.finalize()


@pytest.fixture()
def import_group_args(mesh_file):
    """define_group arguments for the import group of the worked example."""
    return dict(
        names=["edge1", "edge2", "x", "y"],
        data_type=DataType.INT32,
        global_count=4,
        kind=Kind.IMPORT,
        attributes={
            "x": {"data_type": DataType.FLOAT64},
            "y": {"data_type": DataType.FLOAT64, "global_count": 5},
        },
        source=str(mesh_file),
    )


@pytest.fixture()
def make_parameters(tmp_path):
    """A factory for pipeline parameters with every directory under tmp_path."""

    def make(directory="run", **changes):
        base = tmp_path / directory
        data = {
            "workload_dir": str(base / "input"),
            "data_dir": str(base / "data"),
            "catalog_dir": str(base / "catalog"),
            "history_dir": str(base / "history"),
        }
        data.update(changes)
        return SDMParameters(values=data)

    return make
