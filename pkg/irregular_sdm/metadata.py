# -*- coding: utf-8 -*-
"""
metadata for the Scientific Data Manager: enumerations, element types, table
schemas and file naming.
"""

import enum

import numpy as np


class DataType(enum.Enum):
    """Element types of datasets, stored little-endian on disk."""

    INT32 = "INT32"
    FLOAT64 = "FLOAT64"

    @property
    def dtype(self):
        return np.dtype(_dtypes[self.value])

    @property
    def size(self):
        return self.dtype.itemsize


_dtypes = {"INT32": "<i4", "FLOAT64": "<f8"}


class Kind(enum.Enum):
    """Whether a group holds results written by SDM or data imported into it."""

    RESULT = "RESULT"
    IMPORT = "IMPORT"


class OrgLevel(enum.IntEnum):
    """File-organization levels.

    L1: one file per dataset per timestep.
    L2: one file per dataset, timesteps appended.
    L3: one file per group.
    """

    L1 = 1
    L2 = 2
    L3 = 3


class Workload(enum.Enum):
    FUN3D_LIKE = "fun3d"
    RT_LIKE = "rt"
    WORKED_EXAMPLE = "worked-example"


data_types = tuple(t.value for t in DataType)
kinds = tuple(k.value for k in Kind)
org_levels = ("1", "2", "3")
workloads = tuple(w.value for w in Workload)
write_methods = ("two-phase", "sequential")
distribution_strategies = ("single-pass", "two-pass")

# The six catalog tables and the fields every record must carry. Optional
# fields may be added to a record but these are checked when reading.
tables = {
    "run": ("run_id", "app_name", "nprocs", "timestamp", "org_level"),
    "access_pattern": (
        "run_id",
        "group_id",
        "names",
        "data_type",
        "global_count",
        "org_level",
    ),
    "execution": (
        "run_id",
        "dataset",
        "timestep",
        "file_id",
        "byte_offset",
        "byte_length",
    ),
    "import": (
        "run_id",
        "group_id",
        "names",
        "data_types",
        "global_counts",
        "source",
    ),
    "index": (
        "history_id",
        "total_nodes",
        "total_edges",
        "nprocs",
        "per_rank_edge_counts",
        "per_rank_node_counts",
    ),
    "index_history": ("history_id", "history_path", "per_rank_byte_offsets"),
}

table_suffix = ".tbl"

history_magic = b"SDMH"
history_version = 1

# Mesh import files are edge1 and edge2 as INT32 followed by edge arrays and
# node arrays as FLOAT64.
index_type = DataType.INT32
value_type = DataType.FLOAT64


def group_label(group_id):
    """The name used for a group in file names."""
    return f"G{group_id}"


def region_file_name(level, group_id, dataset, timestep):
    """The file a dataset region lives in for a given file-organization level."""
    group = group_label(group_id)
    level = OrgLevel(level)
    if level == OrgLevel.L1:
        return f"{group}_{dataset}_t{timestep}.dat"
    elif level == OrgLevel.L2:
        return f"{group}_{dataset}.dat"
    return f"{group}.dat"


def history_file_name(total_nodes, total_edges, nprocs):
    return f"history_N{total_nodes}_E{total_edges}_P{nprocs}.sdmh"
