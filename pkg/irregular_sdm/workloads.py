# -*- coding: utf-8 -*-

"""Meshes and workloads for exercising the data manager.

Three workloads are available:

worked-example
    The five-node, four-edge mesh used to explain the index distribution, with
    the partitioning vector [0, 1, 1, 0, 1] and results p and q.
fun3d
    The I/O skeleton of a vertex-centered CFD code: the edges, four arrays on
    the edges and four on the nodes are imported; four node datasets and one
    five-component node dataset are written at each of two timesteps.
rt
    The I/O skeleton of a Rayleigh-Taylor code: a node dataset and a triangle
    dataset written at each of five timesteps.

All values are pure functions of their indices, so any run can be checked
against them.
"""

from dataclasses import dataclass, field
import json
import logging
import math
from pathlib import Path

import numpy as np

from irregular_sdm.errors import NotFoundError, ValidationError
from irregular_sdm.metadata import OrgLevel, Workload, index_type, value_type
from irregular_sdm.partition import EdgeList, PartitioningVector

logger = logging.getLogger(__name__)

manifest_name = "workload.json"
mesh_name = "mesh.dat"

# Keep desk-scale runs at desk scale.
max_nodes = 2_000_000


def mesh_offsets(total_edges, total_nodes, n_edge_arrays=1, n_node_arrays=1):
    """Byte offsets of the arrays in a mesh import file.

    The file holds edge1 and edge2 as 4-byte integers, then the edge arrays and
    the node arrays as 8-byte floats. With one array of each this is::

        edge1 0, edge2 4E, x 8E, y 8E + 8E
    """
    isize = index_type.size
    fsize = value_type.size
    offsets = {"edge1": 0, "edge2": total_edges * isize}
    base = 2 * total_edges * isize
    for k in range(n_edge_arrays):
        offsets[f"edge_array_{k}"] = base + k * total_edges * fsize
    base += n_edge_arrays * total_edges * fsize
    for k in range(n_node_arrays):
        offsets[f"node_array_{k}"] = base + k * total_nodes * fsize
    offsets["end"] = base + n_node_arrays * total_nodes * fsize
    return offsets


def edge_array_values(k, total_edges):
    return np.arange(total_edges, dtype=np.float64) + 0.125 * k


def node_array_values(k, total_nodes):
    return np.arange(total_nodes, dtype=np.float64) + 0.125 * k


def result_values(k, timestep, indices):
    """The value of element i of the k-th result dataset at a timestep."""
    return np.asarray(indices, dtype=np.float64) + 0.25 * k + 100.0 * (timestep - 1)


@dataclass
class ResultGroupSpec:
    """A group of result datasets a workload writes.

    association is "node" or "triangle"; components is the number of values
    stored per node or triangle.
    """

    names: list
    association: str = "node"
    components: int = 1


@dataclass(eq=False)
class Mesh:
    """An unstructured mesh with the arrays imported alongside it."""

    total_nodes: int
    edges: EdgeList
    edge_array_names: list = field(default_factory=lambda: ["x"])
    node_array_names: list = field(default_factory=lambda: ["y"])
    triangles: np.ndarray = None

    @property
    def total_edges(self):
        return self.edges.total_edges

    @property
    def total_triangles(self):
        return 0 if self.triangles is None else int(self.triangles.shape[0])

    @property
    def offsets(self):
        """Offsets of the arrays in the mesh file, by array name."""
        raw = mesh_offsets(
            self.total_edges,
            self.total_nodes,
            len(self.edge_array_names),
            len(self.node_array_names),
        )
        result = {"edge1": raw["edge1"], "edge2": raw["edge2"]}
        for k, name in enumerate(self.edge_array_names):
            result[name] = raw[f"edge_array_{k}"]
        for k, name in enumerate(self.node_array_names):
            result[name] = raw[f"node_array_{k}"]
        result["end"] = raw["end"]
        return result

    def write(self, path):
        """Write the mesh import file."""
        with Path(path).open("wb") as fd:
            fd.write(self.edges.edge1.astype(index_type.dtype).tobytes())
            fd.write(self.edges.edge2.astype(index_type.dtype).tobytes())
            for k in range(len(self.edge_array_names)):
                values = edge_array_values(k, self.total_edges)
                fd.write(values.astype(value_type.dtype).tobytes())
            for k in range(len(self.node_array_names)):
                values = node_array_values(k, self.total_nodes)
                fd.write(values.astype(value_type.dtype).tobytes())

    @classmethod
    def read_edges(cls, path, total_edges):
        """Read edge1 and edge2 from a mesh file with one process."""
        raw = np.fromfile(Path(path), dtype=index_type.dtype, count=2 * total_edges)
        if raw.size != 2 * total_edges:
            raise ValidationError(f"{path} holds fewer than {total_edges} edges")
        return EdgeList(raw[:total_edges], raw[total_edges:])


def worked_example():
    """The five-node mesh and its partitioning vector."""
    mesh = Mesh(
        total_nodes=5,
        edges=EdgeList([0, 1, 0, 2], [1, 2, 3, 4]),
    )
    return mesh, PartitioningVector([0, 1, 1, 0, 1], nprocs=2)


def grid_mesh(total_nodes, seed=0, edge_arrays=1, node_arrays=1):
    """A triangulated grid with shuffled node and edge numbering.

    Nodes are laid out row by row on a grid roughly sqrt(N) wide. Each node is
    joined to its right, lower and lower-right neighbors, which splits every
    cell into two triangles. The node labels and the edge order are then
    permuted so the files look like those of an unstructured mesher.

    Returns
    -------
    (Mesh, numpy.ndarray)
        The mesh and the node labels in grid order, for partitioning.
    """
    if total_nodes < 1 or total_nodes > max_nodes:
        raise ValidationError(f"{total_nodes} nodes is outside [1, {max_nodes}]")
    width = max(1, math.ceil(math.sqrt(total_nodes)))
    k = np.arange(total_nodes)
    col = k % width
    pairs = []
    right = k[(col < width - 1) & (k + 1 < total_nodes)]
    pairs.append(np.column_stack((right, right + 1)))
    down = k[k + width < total_nodes]
    pairs.append(np.column_stack((down, down + width)))
    diagonal = k[(col < width - 1) & (k + width + 1 < total_nodes)]
    pairs.append(np.column_stack((diagonal, diagonal + width + 1)))
    edges = np.concatenate(pairs)
    cells = diagonal
    triangles = np.concatenate(
        (
            np.column_stack((cells, cells + 1, cells + width + 1)),
            np.column_stack((cells, cells + width + 1, cells + width)),
        )
    )

    rng = np.random.default_rng(seed)
    labels = rng.permutation(total_nodes)
    edges = labels[edges][rng.permutation(edges.shape[0])]
    triangles = labels[triangles]

    mesh = Mesh(
        total_nodes=total_nodes,
        edges=EdgeList(edges[:, 0], edges[:, 1]),
        edge_array_names=_array_names("x", edge_arrays),
        node_array_names=_array_names("y", node_arrays),
        triangles=triangles,
    )
    return mesh, labels


def _array_names(prefix, n):
    return [prefix] if n == 1 else [f"{prefix}{k}" for k in range(n)]


def random_mesh(seed, max_nodes=200, max_edges=1000):
    """A random multigraph, self loops and repeated edges included."""
    rng = np.random.default_rng(seed)
    total_nodes = int(rng.integers(1, max_nodes + 1))
    total_edges = int(rng.integers(0, max_edges + 1))
    edge1 = rng.integers(0, total_nodes, size=total_edges)
    edge2 = rng.integers(0, total_nodes, size=total_edges)
    return Mesh(total_nodes=total_nodes, edges=EdgeList(edge1, edge2))


def random_partition(seed, total_nodes, nprocs):
    rng = np.random.default_rng(seed + 7919 * nprocs)
    return PartitioningVector(rng.integers(0, nprocs, size=total_nodes), nprocs)


@dataclass
class WorkloadSpec:
    """What to generate and how to run it.

    Attributes
    ----------
    kind : Workload
        fun3d, rt or worked-example.
    total_nodes : int
        The number of mesh nodes. Ignored for the worked example.
    timesteps : int
        The number of timesteps results are written for.
    level : OrgLevel
        The file-organization level of the result groups.
    nprocs : int
        The number of ranks.
    seed : int
        Seed for the node and edge numbering.
    """

    kind: Workload = Workload.WORKED_EXAMPLE
    total_nodes: int = None
    timesteps: int = None
    level: OrgLevel = OrgLevel.L3
    nprocs: int = 2
    seed: int = 0

    def __post_init__(self):
        self.kind = Workload(self.kind)
        self.level = OrgLevel(int(self.level))
        defaults = _defaults[self.kind]
        if self.total_nodes is None:
            self.total_nodes = defaults["total_nodes"]
        if self.timesteps is None:
            self.timesteps = defaults["timesteps"]
        if self.kind == Workload.WORKED_EXAMPLE:
            self.total_nodes = 5
        if self.nprocs < 1:
            raise ValidationError(f"nprocs must be at least 1, not {self.nprocs}")
        if self.timesteps < 1:
            raise ValidationError(f"timesteps must be at least 1, not {self.timesteps}")

    @property
    def result_groups(self):
        return _result_groups[self.kind]


_defaults = {
    Workload.WORKED_EXAMPLE: {"total_nodes": 5, "timesteps": 2},
    Workload.FUN3D_LIKE: {"total_nodes": 2000, "timesteps": 2},
    Workload.RT_LIKE: {"total_nodes": 1000, "timesteps": 5},
}

_result_groups = {
    Workload.WORKED_EXAMPLE: [ResultGroupSpec(["p", "q"])],
    Workload.FUN3D_LIKE: [
        ResultGroupSpec(["q1", "q2", "q3", "q4"]),
        ResultGroupSpec(["flux"], components=5),
    ],
    Workload.RT_LIKE: [
        ResultGroupSpec(["node_data"]),
        ResultGroupSpec(["triangle_data"], association="triangle"),
    ],
}


@dataclass(eq=False)
class GeneratedWorkload:
    """The files of a workload and everything needed to run it."""

    spec: WorkloadSpec
    directory: Path
    mesh: Mesh
    partition: PartitioningVector

    @property
    def mesh_path(self):
        return self.directory / mesh_name

    @property
    def partition_path(self):
        return self.directory / partition_file_name(self.spec.nprocs)

    @property
    def result_datasets(self):
        """(index, name, group spec) for every result dataset, in order."""
        result = []
        for group in self.spec.result_groups:
            for name in group.names:
                result.append((len(result), name, group))
        return result

    def global_count(self, group):
        if group.association == "triangle":
            return self.mesh.total_triangles * group.components
        return self.mesh.total_nodes * group.components

    @property
    def imported_arrays(self):
        """Names of the imported arrays: the edge list, then edge and node arrays."""
        return (
            ["edges"] + self.mesh.edge_array_names + self.mesh.node_array_names
        )

    def manifest(self):
        mesh = self.mesh
        return {
            "workload": self.spec.kind.value,
            "total_nodes": mesh.total_nodes,
            "total_edges": mesh.total_edges,
            "total_triangles": mesh.total_triangles,
            "timesteps": self.spec.timesteps,
            "seed": self.spec.seed,
            "nprocs": self.spec.nprocs,
            "edge_arrays": mesh.edge_array_names,
            "node_arrays": mesh.node_array_names,
            "offsets": mesh.offsets,
            "result_groups": [
                {
                    "names": g.names,
                    "association": g.association,
                    "components": g.components,
                }
                for g in self.spec.result_groups
            ],
            "mesh_file": mesh_name,
            "partition_file": partition_file_name(self.spec.nprocs),
        }


def partition_file_name(nprocs):
    return f"partition_P{nprocs}.bin"


def build_workload(spec):
    """The mesh and partitioning vector of a workload, without writing files."""
    if spec.kind == Workload.WORKED_EXAMPLE:
        mesh, pv = worked_example()
        if spec.nprocs != 2:
            pv = PartitioningVector.blocks(mesh.total_nodes, spec.nprocs)
        return mesh, pv

    arrays = 4 if spec.kind == Workload.FUN3D_LIKE else 1
    mesh, labels = grid_mesh(
        spec.total_nodes, seed=spec.seed, edge_arrays=arrays, node_arrays=arrays
    )
    if spec.kind == Workload.RT_LIKE:
        mesh.edge_array_names = []
        mesh.node_array_names = []
    pv = PartitioningVector.blocks(mesh.total_nodes, spec.nprocs, order=labels)
    return mesh, pv


def gen_workload(spec, directory):
    """Write the mesh file, partitioning vector and manifest of a workload.

    Parameters
    ----------
    spec : WorkloadSpec
        The workload to generate.
    directory : str or pathlib.Path
        Where to put the files; created if needed.

    Returns
    -------
    GeneratedWorkload
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mesh, pv = build_workload(spec)
    workload = GeneratedWorkload(
        spec=spec, directory=directory, mesh=mesh, partition=pv
    )
    mesh.write(workload.mesh_path)
    pv.to_file(workload.partition_path)
    if mesh.triangles is not None:
        mesh.triangles.astype(index_type.dtype).tofile(directory / "triangles.dat")
    with (directory / manifest_name).open("w") as fd:
        json.dump(workload.manifest(), fd, indent=4, sort_keys=True)
    logger.info(
        f"Generated {spec.kind.value}: {mesh.total_nodes} nodes, "
        f"{mesh.total_edges} edges in {directory}"
    )
    return workload


def load_workload(directory, nprocs=None, level=OrgLevel.L3):
    """Reopen a generated workload from its manifest."""
    directory = Path(directory)
    path = directory / manifest_name
    if not path.exists():
        raise NotFoundError(f"No workload in {directory}")
    with path.open() as fd:
        manifest = json.load(fd)
    nprocs = manifest["nprocs"] if nprocs is None else nprocs
    spec = WorkloadSpec(
        kind=manifest["workload"],
        total_nodes=manifest["total_nodes"],
        timesteps=manifest["timesteps"],
        level=level,
        nprocs=nprocs,
        seed=manifest["seed"],
    )
    mesh = Mesh(
        total_nodes=manifest["total_nodes"],
        edges=Mesh.read_edges(directory / mesh_name, manifest["total_edges"]),
        edge_array_names=manifest["edge_arrays"],
        node_array_names=manifest["node_arrays"],
    )
    triangles = directory / "triangles.dat"
    if triangles.exists():
        mesh.triangles = np.fromfile(triangles, dtype=index_type.dtype).reshape(-1, 3)
    pv_path = directory / partition_file_name(nprocs)
    if pv_path.exists():
        pv = PartitioningVector.from_file(pv_path, nprocs)
    else:
        pv = build_workload(spec)[1]
    return GeneratedWorkload(spec=spec, directory=directory, mesh=mesh, partition=pv)
