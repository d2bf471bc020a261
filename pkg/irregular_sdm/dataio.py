# -*- coding: utf-8 -*-

"""Collective I/O of irregularly distributed data.

Each rank describes which elements of a global dataset it holds with a map
array (a "data view"). Writes, reads and imports then move data between the
rank's local buffer and the dataset's region in a file, element by element in
global order.

Where the regions live depends on the file-organization level of the group:

L1
    ``G<group>_<dataset>_t<timestep>.dat``, one file per dataset and timestep.
L2
    ``G<group>_<dataset>.dat``, timesteps appended.
L3
    ``G<group>.dat``, every timestep of every dataset of the group appended in
    the order they are written.

The offset of each region is recorded in the execution table of the catalog,
which is the only way to find a region again.
"""

from dataclasses import dataclass
import logging
import os
from pathlib import Path

import numpy as np

from irregular_sdm.errors import (
    BoundsError,
    ConflictError,
    LifecycleError,
    NotFoundError,
    SDMError,
    StateError,
    ValidationError,
)
from irregular_sdm.metadata import Kind, OrgLevel, region_file_name
from irregular_sdm.partition import EdgeList, MapArray, block_range

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class DataView:
    """The elements of a dataset a rank holds.

    Attributes
    ----------
    dataset : str
        The dataset the view is bound to.
    map : MapArray
        The global index of each local element.
    count : int
        The number of local elements.
    owned : numpy.ndarray
        True for the local elements this rank writes. The others are ghosts,
        which are read but never written.
    """

    dataset: str
    map: MapArray
    count: int
    owned: np.ndarray = None

    def __post_init__(self):
        if self.owned is None:
            self.owned = np.ones(self.count, dtype=bool)
        self.owned = np.asarray(self.owned, dtype=bool)
        if self.count != self.map.count:
            raise ValidationError(
                f"The view of {self.dataset} has {self.count} elements but its map "
                f"has {self.map.count}"
            )
        if self.owned.shape != (self.count,):
            raise ValidationError(
                f"The ownership mask of {self.dataset} does not match its map"
            )

    @property
    def owned_indices(self):
        return self.map.local_to_global[self.owned]


@dataclass(frozen=True)
class DatasetRegion:
    """Where one timestep of one dataset is stored."""

    file_id: str
    base_offset: int
    length: int


def resolve_region(
    catalog, level, group, dataset, timestep, data_dir=None, for_write=False
):
    """The region of a dataset at a timestep.

    Parameters
    ----------
    catalog : Catalog
        The catalog, whose execution table holds the offsets of written regions.
    level : OrgLevel
        The file-organization level.
    group : DataGroupDescriptor
        The group of the dataset.
    dataset : str
        The dataset.
    timestep : int
        The timestep, from 1.
    data_dir : str or pathlib.Path
        The directory of the data files, needed for writing.
    for_write : bool
        Place a new region: at the start of a level-1 file, otherwise at the end
        of the file. When reading, the offset comes from the execution table.

    Returns
    -------
    DatasetRegion
    """
    if dataset not in group.names:
        raise NotFoundError(f"Dataset '{dataset}' is not in group {group.label}")
    level = OrgLevel(int(level))
    length = group.global_count_of(dataset) * group.data_type_of(dataset).size
    if not for_write:
        record = catalog.get_offset(dataset, timestep)
        return DatasetRegion(record.file_id, record.byte_offset, record.byte_length)

    file_id = region_file_name(level, group.group_id, dataset, timestep)
    base_offset = 0
    if level != OrgLevel.L1:
        path = Path(data_dir) / file_id
        base_offset = path.stat().st_size if path.exists() else 0
    return DatasetRegion(file_id, base_offset, length)


def _read_elements(path, offset, dtype, count):
    """count elements of dtype at offset in a file."""
    path = Path(path)
    try:
        size = path.stat().st_size
    except FileNotFoundError:
        raise NotFoundError(f"The file {path} does not exist")
    end = offset + count * dtype.itemsize
    if offset < 0 or end > size:
        raise BoundsError(
            f"Bytes {offset}-{end} are past the end of {path} ({size} bytes)"
        )
    if count == 0:
        return np.empty(0, dtype=dtype)
    return np.fromfile(path, dtype=dtype, count=count, offset=offset)


def _runs(indices):
    """Split sorted indices into runs of consecutive values: [(start, stop)]."""
    if indices.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(indices) != 1) + 1
    starts = np.concatenate(([0], breaks))
    stops = np.concatenate((breaks, [indices.size]))
    return list(zip(starts.tolist(), stops.tolist()))


class SDMHandle(object):
    """The per-rank handle of the data manager within a job.

    Every rank of the job creates one. Rank 0 holds the catalog; the other
    ranks receive what they need from it through the collectives.

    Parameters
    ----------
    comm : RankContext
        The collectives of the job.
    catalog : Catalog or None
        The catalog, on rank 0 only.
    data_dir : str or pathlib.Path
        The directory result files are written in.
    """

    def __init__(self, comm, catalog, data_dir):
        self.comm = comm
        self.catalog = catalog if comm.rank == 0 else None
        self.data_dir = Path(data_dir)
        self.partition = None
        self.views = {}
        self._groups = {}
        self._released = set()
        if comm.rank == 0:
            self.data_dir.mkdir(parents=True, exist_ok=True)
        comm.barrier()

    def __repr__(self):
        return f"SDMHandle(rank={self.comm.rank}, data_dir='{self.data_dir}')"

    @property
    def rank(self):
        return self.comm.rank

    @property
    def nprocs(self):
        return self.comm.nprocs

    # Groups and views

    def define_group(
        self,
        names,
        data_type,
        global_count,
        kind,
        org_level=None,
        attributes=None,
        source=None,
    ):
        """Define a data group in the catalog. Collective.

        See :meth:`Catalog.define_group` for the parameters.
        """
        group = self.comm.on_root(
            lambda: self.catalog.define_group(
                names,
                data_type,
                global_count,
                kind,
                org_level=org_level,
                attributes=attributes,
                source=source,
            )
        )
        for name in group.names:
            self._groups[name] = group
        return group

    def group_of(self, dataset):
        try:
            return self._groups[dataset]
        except KeyError:
            raise NotFoundError(f"Dataset '{dataset}' is not defined")

    def partition_table(self, pv):
        """Use a partitioning vector to decide which node values a rank writes."""
        pv.validate()
        self.partition = pv

    def set_data_view(self, dataset, map, count=None, owner=None):
        """Bind a map array to a dataset.

        Parameters
        ----------
        dataset : str
            The dataset.
        map : MapArray or array-like
            The global index of each local element.
        count : int, optional
            The number of local elements, by default the length of the map.
        owner : array-like or "nodes", optional
            The rank owning each element of the global dataset; a rank writes
            only the elements it owns. "nodes" uses the partitioning vector, for
            datasets with one value per mesh node. By default the rank owns
            every element in its map.
        """
        group = self.group_of(dataset)
        if group.group_id in self._released:
            raise LifecycleError(f"The import list holding {dataset} was released")
        if not isinstance(map, MapArray):
            map = MapArray(map)
        count = map.count if count is None else int(count)
        global_count = group.global_count_of(dataset)
        map.validate(global_count)

        owned = None
        if isinstance(owner, str):
            if owner != "nodes":
                raise ValidationError(f"Unknown owner '{owner}' for {dataset}")
            if self.partition is None:
                raise StateError(
                    f"{dataset} is owned by node but no partitioning vector is set"
                )
            owner = self.partition.owner
        if owner is not None:
            owner = np.asarray(owner)
            if owner.shape != (global_count,):
                raise ValidationError(
                    f"The owner array of {dataset} has {owner.shape[0]} entries, "
                    f"the dataset {global_count}"
                )
            owned = owner[map.local_to_global] == self.rank
        view = DataView(dataset, map, count, owned)
        self.views[dataset] = view
        return view

    def _view(self, dataset, view=None):
        if view is not None:
            return view
        try:
            return self.views[dataset]
        except KeyError:
            raise StateError(f"No data view is bound to {dataset}")

    # Results

    def _prepare_region(self, group, dataset, timestep):
        """Place a new region and make room for it in its file. Rank 0 only."""
        try:
            self.catalog.get_offset(dataset, timestep)
        except NotFoundError:
            pass
        else:
            raise ConflictError(f"{dataset} at timestep {timestep} was already written")
        region = resolve_region(
            self.catalog,
            group.org_level,
            group,
            dataset,
            timestep,
            data_dir=self.data_dir,
            for_write=True,
        )
        path = self.data_dir / region.file_id
        with path.open("r+b" if path.exists() else "wb") as fd:
            fd.truncate(region.base_offset + region.length)
        logger.debug(
            f"{dataset} t={timestep} -> {region.file_id} at {region.base_offset}"
        )
        return region

    def collective_write(self, dataset, timestep, buffer, method="two-phase"):
        """Write a timestep of a dataset from the local buffers. Collective.

        Each rank contributes the elements it owns; element g of the dataset
        lands at byte base_offset + g * element_size of the region.

        Parameters
        ----------
        dataset : str
            A dataset of a result group.
        timestep : int
            The timestep, from 1.
        buffer : array-like
            The local values, one per element of the bound view.
        method : str
            "two-phase" aggregates the values and has each rank write one
            contiguous range. "sequential" lets each rank in turn write its own
            values.

        Returns
        -------
        DatasetRegion
        """
        error = None
        try:
            group = self.group_of(dataset)
            if group.kind != Kind.RESULT:
                raise ValidationError(f"{dataset} is not a result dataset")
            view = self._view(dataset)
            dtype = group.data_type_of(dataset).dtype
            values = np.asarray(buffer).astype(dtype, copy=False).ravel()
            if values.size != view.count:
                raise ValidationError(
                    f"The buffer for {dataset} has {values.size} elements, the view "
                    f"{view.count}"
                )
            if method not in ("two-phase", "sequential"):
                raise ValidationError(f"Unknown write method '{method}'")
        except SDMError as e:
            error = e
        self.comm.agree(error)

        indices = view.owned_indices
        owned_values = values[view.owned]
        global_count = group.global_count_of(dataset)
        two_phase = method == "two-phase"
        gathered = self.comm.gather((indices, owned_values if two_phase else None))
        full = None

        def place():
            nonlocal full
            full = self._assemble(dataset, global_count, dtype, gathered)
            return self._prepare_region(group, dataset, timestep)

        region = self.comm.on_root(place)
        path = self.data_dir / region.file_id
        if two_phase:
            self._write_two_phase(path, region, dtype, global_count, full)
        else:
            self._write_sequential(path, region, dtype, indices, owned_values)

        self.comm.barrier()
        self.comm.on_root(
            lambda: self.catalog.record_offset(
                dataset, timestep, region.file_id, region.base_offset, region.length
            )
        )
        return region

    def _assemble(self, dataset, global_count, dtype, gathered):
        """Check every element has exactly one owner. Rank 0 only.

        Returns the whole region in global order when the values were gathered
        too, otherwise None.
        """
        indices = np.concatenate([g[0] for g in gathered])
        unique = np.unique(indices)
        if unique.size != indices.size:
            raise ValidationError(
                f"Elements of {dataset} are owned by more than one rank"
            )
        if unique.size != global_count:
            raise ValidationError(
                f"Only {unique.size} of the {global_count} elements of {dataset} "
                "are owned by a rank"
            )
        if gathered[0][1] is None:
            return None
        full = np.empty(global_count, dtype=dtype)
        full[indices] = np.concatenate([g[1] for g in gathered])
        return full

    def _write_two_phase(self, path, region, dtype, global_count, full):
        """Rank 0 hands each rank one contiguous block of the region to write."""
        blocks = None
        if self.rank == 0:
            blocks = [
                full[slice(*block_range(global_count, r, self.nprocs))]
                for r in range(self.nprocs)
            ]
        block = self.comm.scatter(blocks)
        lo, hi = block_range(global_count, self.rank, self.nprocs)
        error = None
        try:
            if hi > lo:
                with path.open("r+b") as fd:
                    fd.seek(region.base_offset + lo * dtype.itemsize)
                    fd.write(block.tobytes())
        except OSError as e:
            error = e
        self.comm.agree(error)

    def _write_sequential(self, path, region, dtype, indices, values):
        order = np.argsort(indices, kind="stable")
        indices = indices[order]
        values = values[order]
        error = None
        for turn in range(self.nprocs):
            if turn == self.rank and error is None:
                try:
                    with path.open("r+b") as fd:
                        for start, stop in _runs(indices):
                            offset = indices[start] * dtype.itemsize
                            fd.seek(region.base_offset + offset)
                            fd.write(values[start:stop].tobytes())
                except OSError as e:
                    error = e
            self.comm.barrier()
        self.comm.agree(error)

    def collective_read(self, dataset, timestep, view=None):
        """Read a timestep of a dataset into a local buffer. Collective.

        Ghost elements are read too, so values may be duplicated across ranks.
        """
        group = self.group_of(dataset)
        region = self.comm.on_root(
            lambda: resolve_region(
                self.catalog, group.org_level, group, dataset, timestep
            )
        )
        error = result = None
        try:
            view = self._view(dataset, view)
            dtype = group.data_type_of(dataset).dtype
            count = region.length // dtype.itemsize
            values = _read_elements(
                self.data_dir / region.file_id, region.base_offset, dtype, count
            )
            result = values[view.map.local_to_global]
        except SDMError as e:
            error = e
        self.comm.agree(error)
        return result

    # Imports

    def _import_group(self, dataset):
        group = self.group_of(dataset)
        if group.kind != Kind.IMPORT:
            raise ValidationError(f"{dataset} is not an imported dataset")
        if group.group_id in self._released:
            raise LifecycleError(f"The import list holding {dataset} was released")
        if group.source is None:
            raise StateError(f"The import group of {dataset} has no source file")
        return group

    def import_contiguous(self, dataset, file_offset, total_count, rank=None):
        """This rank's contiguous block of an array in the import file.

        The block is block_range(total_count, rank, nprocs).
        """
        group = self._import_group(dataset)
        rank = self.rank if rank is None else rank
        dtype = group.data_type_of(dataset).dtype
        path = Path(group.source)
        self._check_extent(path, file_offset, total_count, dtype)
        lo, hi = block_range(total_count, rank, self.nprocs)
        return _read_elements(path, file_offset + lo * dtype.itemsize, dtype, hi - lo)

    def import_broadcast(self, dataset, file_offset, total_count):
        """Like import_contiguous, but rank 0 reads the whole array. Collective."""
        group = self._import_group(dataset)
        dtype = group.data_type_of(dataset).dtype
        path = Path(group.source)
        values = self.comm.on_root(
            lambda: _read_elements(path, file_offset, dtype, total_count)
        )
        lo, hi = block_range(total_count, self.rank, self.nprocs)
        return values[lo:hi]

    def import_with_view(self, dataset, file_offset, total_count, view=None):
        """The elements of the bound view from an array in the import file."""
        group = self._import_group(dataset)
        view = self._view(dataset, view)
        dtype = group.data_type_of(dataset).dtype
        indices = view.map.local_to_global
        if indices.size > 0 and (indices.min() < 0 or indices.max() >= total_count):
            raise BoundsError(
                f"The view of {dataset} reaches element {indices.max()} of an array "
                f"of {total_count}"
            )
        values = _read_elements(Path(group.source), file_offset, dtype, total_count)
        return values[view.map.local_to_global]

    def import_edges(self, total_edges, edge1="edge1", edge2="edge2", offsets=None):
        """This rank's block of the edge list, with global edge ids."""
        size = self.group_of(edge1).data_type_of(edge1).size
        offsets = offsets or {edge1: 0, edge2: total_edges * size}
        first = self.import_contiguous(edge1, offsets[edge1], total_edges)
        second = self.import_contiguous(edge2, offsets[edge2], total_edges)
        lo, hi = block_range(total_edges, self.rank, self.nprocs)
        return EdgeList(first, second, np.arange(lo, hi, dtype=np.int64))

    def _check_extent(self, path, file_offset, total_count, dtype):
        try:
            size = os.path.getsize(path)
        except FileNotFoundError:
            raise NotFoundError(f"The import file {path} does not exist")
        end = file_offset + total_count * dtype.itemsize
        if file_offset < 0 or end > size:
            raise BoundsError(
                f"Bytes {file_offset}-{end} are past the end of {path} ({size} bytes)"
            )

    def release_importlist(self):
        """Free the views of the import groups. Result views stay bound.

        Returns
        -------
        int
            The number of datasets released.
        """
        imports = {
            g.group_id: g for g in self._groups.values() if g.kind == Kind.IMPORT
        }
        if len(imports) == 0:
            raise StateError("No import group has been defined")
        pending = [g for i, g in imports.items() if i not in self._released]
        if len(pending) == 0:
            raise LifecycleError("The import list has already been released")
        released = 0
        for group in pending:
            for name in group.names:
                self.views.pop(name, None)
                released += 1
            self._released.add(group.group_id)
        logger.debug(f"Rank {self.rank} released {released} imported datasets")
        return released

    def finalize(self):
        """Finalize the catalog. Collective."""
        self.comm.barrier()
        self.comm.on_root(lambda: self.catalog.finalize())
