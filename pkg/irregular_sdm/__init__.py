# -*- coding: utf-8 -*-

"""
irregular_sdm
Scientific data management for irregular applications: index distribution
with ghost edges, history files, and noncontiguous collective I/O.
"""

# Bring up the classes so that they appear to be directly in
# the irregular_sdm package.

from irregular_sdm.catalog import (  # noqa: F401
    Catalog,
    DataGroupDescriptor,
    ExecutionRecord,
    IndexHistoryRecord,
    initialize,
)
from irregular_sdm.dataio import (  # noqa: F401
    DataView,
    DatasetRegion,
    SDMHandle,
    resolve_region,
)
from irregular_sdm.errors import *  # noqa: F401, F403
from irregular_sdm.harness import RankContext, run_ranks  # noqa: F401
from irregular_sdm.history import (  # noqa: F401
    AsyncTicket,
    HistoryFile,
    index_registry,
    partition_index_with_history,
    precreate_histories,
)
from irregular_sdm.metadata import DataType, Kind, OrgLevel, Workload  # noqa: F401
from irregular_sdm.partition import (  # noqa: F401
    EdgeList,
    GrowableBuffer,
    LocalIndexSet,
    MapArray,
    PartitioningVector,
    block_range,
    distribute_edges,
    grow,
    localize_vector,
    partition_data_size,
    partition_index_size,
)
from irregular_sdm.sdm_parameters import SDMParameters  # noqa: F401
from irregular_sdm.sdm import SDM  # noqa: F401
from irregular_sdm.workloads import WorkloadSpec, gen_workload  # noqa: F401
from irregular_sdm.oracles import sequential_oracles  # noqa: F401

__author__ = "The irregular_sdm developers"
__version__ = "2026.10.19"
