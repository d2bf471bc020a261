# -*- coding: utf-8 -*-

"""The embedded metadata catalog.

The catalog is a directory holding the six tables of the data manager, each a
UTF-8 text file with one record per line. Fields are written as ``name=value``
pairs separated by tabs; integers are decimal and lists are comma separated.
Tables are append-only: records are never rewritten, so a crash can at worst
leave a truncated last line, which is reported as corruption when reopening.

Catalog handles belong to rank 0 of a job. Other ranks only see values that
rank 0 broadcasts to them.
"""

from dataclasses import dataclass, field
from datetime import datetime, timezone
import logging
import os
from pathlib import Path
import re
import threading

from irregular_sdm import metadata
from irregular_sdm.errors import (
    CatalogCorruptError,
    ConflictError,
    InitializationError,
    LifecycleError,
    NotFoundError,
    ValidationError,
)
from irregular_sdm.metadata import DataType, Kind, OrgLevel

logger = logging.getLogger(__name__)

_integer_fields = {
    "run_id",
    "nprocs",
    "group_id",
    "global_count",
    "timestep",
    "byte_offset",
    "byte_length",
    "history_id",
    "total_nodes",
    "total_edges",
}

_valid_name = re.compile(r"^[A-Za-z0-9_.+-]+$")
_escapes = {"\\": "\\\\", "\t": "\\t", "\n": "\\n"}
_unescapes = {v[1]: k for k, v in _escapes.items()}
_enum_types = (DataType, Kind, OrgLevel)


def _encode(value):
    if isinstance(value, (list, tuple)):
        value = ",".join(str(v) for v in value)
    elif isinstance(value, _enum_types):
        value = value.value
    elif value is None:
        value = ""
    return "".join(_escapes.get(c, c) for c in str(value))


def _decode(text):
    return re.sub(r"\\(.)", lambda m: _unescapes.get(m.group(1), m.group(1)), text)


def _int_list(text):
    return [int(v) for v in text.split(",")] if text != "" else []


def _str_list(text):
    return text.split(",") if text != "" else []


@dataclass
class DataGroupDescriptor:
    """A set of datasets whose metadata and file organization are chosen jointly.

    Attributes
    ----------
    group_id : int
        Unique within a run, counted from 0 across result and import groups.
    names : [str]
        The datasets in the group.
    data_type : DataType
        The element type shared by the datasets, unless overridden.
    global_count : int
        The number of elements in each dataset, unless overridden.
    kind : Kind
        RESULT for data written by SDM, IMPORT for data created outside it.
    org_level : OrgLevel or None
        The file-organization level of a result group.
    attributes : {str: (DataType, int)}
        Per-dataset data type and global count, for every name in the group.
    source : str or None
        The file an import group is read from.
    run_id : int
        The run the group was defined in.
    """

    group_id: int
    names: list
    data_type: DataType
    global_count: int
    kind: Kind
    org_level: OrgLevel = None
    attributes: dict = field(default_factory=dict)
    source: str = None
    run_id: int = 0

    def __post_init__(self):
        for name in self.names:
            self.attributes.setdefault(name, (self.data_type, self.global_count))

    @property
    def label(self):
        return metadata.group_label(self.group_id)

    def data_type_of(self, dataset):
        return self.attributes[dataset][0]

    def global_count_of(self, dataset):
        return self.attributes[dataset][1]


@dataclass
class ExecutionRecord:
    """Where one timestep of one dataset was written."""

    dataset: str
    timestep: int
    file_id: str
    byte_offset: int
    byte_length: int
    run_id: int = 0

    @property
    def end(self):
        return self.byte_offset + self.byte_length


@dataclass
class IndexHistoryRecord:
    """The metadata of a history file holding a completed index distribution."""

    total_nodes: int
    total_edges: int
    nprocs: int
    history_path: str
    per_rank_edge_counts: list
    per_rank_node_counts: list
    per_rank_byte_offsets: list
    history_id: int = field(default=None, compare=False)

    @property
    def key(self):
        return (self.total_nodes, self.total_edges, self.nprocs)

    def validate(self):
        if self.nprocs < 1:
            raise ValidationError(f"nprocs must be at least 1, not {self.nprocs}")
        for name in (
            "per_rank_edge_counts",
            "per_rank_node_counts",
            "per_rank_byte_offsets",
        ):
            if len(getattr(self, name)) != self.nprocs:
                raise ValidationError(
                    f"{name} has {len(getattr(self, name))} entries for "
                    f"{self.nprocs} processes"
                )
        if sum(self.per_rank_edge_counts) < self.total_edges:
            raise ValidationError(
                f"The ranks hold {sum(self.per_rank_edge_counts)} edges, fewer than "
                f"the {self.total_edges} in the mesh"
            )


class _Table(object):
    """One append-only table file."""

    def __init__(self, path, fields):
        self.path = Path(path)
        self.name = self.path.stem
        self.fields = fields
        self.rows = []
        self._fd = None

    def load(self):
        if not self.path.exists():
            self.path.touch()
            return
        text = self.path.read_text(encoding="utf-8")
        if text != "" and not text.endswith("\n"):
            raise CatalogCorruptError(self.path, "the last record is truncated")
        for lineno, line in enumerate(text.splitlines(), start=1):
            row = {}
            for item in line.split("\t"):
                name, sep, value = item.partition("=")
                if sep == "":
                    raise CatalogCorruptError(
                        self.path, f"line {lineno}: field '{item}' has no value"
                    )
                row[name] = _decode(value)
            missing = [f for f in self.fields if f not in row]
            if len(missing) > 0:
                raise CatalogCorruptError(
                    self.path, f"line {lineno}: missing {', '.join(missing)}"
                )
            for name in _integer_fields.intersection(row):
                try:
                    int(row[name])
                except ValueError:
                    raise CatalogCorruptError(
                        self.path, f"line {lineno}: {name} is not an integer"
                    )
            self.rows.append(row)

    def append(self, **values):
        row = {name: _encode(values[name]) for name in values}
        if self._fd is None:
            self._fd = self.path.open("a", encoding="utf-8")
        self._fd.write("\t".join(f"{k}={v}" for k, v in row.items()) + "\n")
        self._fd.flush()
        self.rows.append({k: _decode(v) for k, v in row.items()})

    def close(self):
        if self._fd is None:
            # Still make sure the table exists on disk.
            self.path.touch()
            return
        os.fsync(self._fd.fileno())
        self._fd.close()
        self._fd = None


class Catalog(object):
    """The metadata catalog of an application.

    Use :meth:`Catalog.initialize` (or :func:`initialize`) to open one; an
    existing catalog in the directory is reopened and a new run recorded.

    Attributes
    ----------
    root_dir : pathlib.Path
        The directory holding the table files.
    app_name : str
        The application the catalog belongs to.
    run_id : int
        The run this handle records, numbered from 1.
    tables : {str: _Table}
        The six tables, by name.
    """

    def __init__(self, app_name, root_dir):
        self.app_name = app_name
        self.root_dir = Path(root_dir).absolute()
        self.tables = {
            name: _Table(self.root_dir / (name + metadata.table_suffix), fields)
            for name, fields in metadata.tables.items()
        }
        self.run_id = None
        self.nprocs = None
        self._lock = threading.RLock()
        self._pending = None
        self._finalized = False

    @classmethod
    def initialize(cls, app_name, root_dir, nprocs, org_level=None):
        """Open (creating if needed) the catalog and record a new run.

        Parameters
        ----------
        app_name : str
            The name of the application.
        root_dir : str or pathlib.Path
            Directory for the table files.
        nprocs : int
            The number of processes of this run.
        org_level : OrgLevel or int, optional
            The file-organization level the run writes with.

        Returns
        -------
        Catalog
        """
        catalog = cls(app_name, root_dir)
        try:
            catalog.root_dir.mkdir(parents=True, exist_ok=True)
            if not os.access(catalog.root_dir, os.W_OK):
                raise PermissionError(f"{catalog.root_dir} is not writable")
        except OSError as e:
            raise InitializationError(
                f"Cannot use {catalog.root_dir} for the catalog: {e}"
            ) from e

        for table in catalog.tables.values():
            table.load()

        runs = catalog.tables["run"].rows
        catalog.run_id = max((int(r["run_id"]) for r in runs), default=0) + 1
        catalog.nprocs = int(nprocs)
        catalog.tables["run"].append(
            run_id=catalog.run_id,
            app_name=app_name,
            nprocs=catalog.nprocs,
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            org_level=None if org_level is None else int(org_level),
        )
        logger.info(f"Opened catalog {catalog.root_dir}, run {catalog.run_id}")
        return catalog

    def _check_open(self):
        if self._finalized:
            raise LifecycleError(f"The catalog {self.root_dir} has been finalized")

    def _relative(self, path):
        """A file path as stored in the tables, relative to the catalog."""
        return os.path.relpath(os.path.abspath(path), self.root_dir)

    def _resolve(self, stored):
        return os.path.normpath(os.path.join(self.root_dir, stored))

    # Groups and datasets

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
        """Define and persist a data group for this run.

        Parameters
        ----------
        names : [str]
            The datasets in the group.
        data_type : DataType or str
            The element type of the datasets.
        global_count : int
            The number of elements of each dataset.
        kind : Kind or str
            RESULT groups go to the access_pattern table, IMPORT groups to
            the import table.
        org_level : OrgLevel or int
            The file-organization level, required for result groups.
        attributes : {str: {"data_type": ..., "global_count": ...}}, optional
            Overrides for individual datasets, only allowed in import groups.
        source : str, optional
            The file an import group is read from.

        Returns
        -------
        DataGroupDescriptor
        """
        with self._lock:
            self._check_open()
            names = list(names)
            data_type = DataType(data_type)
            kind = Kind(kind)
            global_count = int(global_count)
            stored_source = None if source is None else self._relative(source)
            source = None if source is None else self._resolve(stored_source)

            if len(names) == 0:
                raise ValidationError("A data group needs at least one dataset")
            for name in names:
                if not _valid_name.match(name):
                    raise ValidationError(f"'{name}' is not a valid dataset name")
            if global_count < 0:
                raise ValidationError(f"Invalid global count {global_count}")
            if len(set(names)) != len(names):
                raise ConflictError(f"Duplicate dataset names in {names}")
            existing = self.groups()
            used = {n for group in existing for n in group.names}
            duplicates = [n for n in names if n in used]
            if len(duplicates) > 0:
                raise ConflictError(
                    f"Dataset(s) {', '.join(duplicates)} already defined in run "
                    f"{self.run_id}"
                )

            overrides = {}
            for name, values in (attributes or {}).items():
                if name not in names:
                    raise ValidationError(f"Attributes given for unknown {name}")
                overrides[name] = (
                    DataType(values.get("data_type", data_type)),
                    int(values.get("global_count", global_count)),
                )

            group_id = len(existing)
            if kind == Kind.RESULT:
                if org_level is None:
                    raise ValidationError("A result group needs an org_level")
                org_level = OrgLevel(int(org_level))
                if any(v != (data_type, global_count) for v in overrides.values()):
                    raise ValidationError(
                        "Datasets of a result group share data type and global count"
                    )
                self.tables["access_pattern"].append(
                    run_id=self.run_id,
                    group_id=group_id,
                    names=names,
                    data_type=data_type,
                    global_count=global_count,
                    org_level=int(org_level),
                )
            else:
                org_level = None
                self.tables["import"].append(
                    run_id=self.run_id,
                    group_id=group_id,
                    names=names,
                    data_types=[
                        overrides.get(n, (data_type,))[0].value for n in names
                    ],
                    global_counts=[
                        overrides.get(n, (None, global_count))[1] for n in names
                    ],
                    source=stored_source,
                )
            logger.debug(f"Defined {kind.value} group {group_id}: {names}")
            return DataGroupDescriptor(
                group_id=group_id,
                names=names,
                data_type=data_type,
                global_count=global_count,
                kind=kind,
                org_level=org_level,
                attributes=overrides,
                source=source,
                run_id=self.run_id,
            )

    def groups(self, run_id=None):
        """The groups defined in a run, by default the current one, by id."""
        with self._lock:
            self._check_open()
            run_id = self.run_id if run_id is None else run_id
            result = []
            for row in self.tables["access_pattern"].rows:
                if int(row["run_id"]) != run_id:
                    continue
                result.append(
                    DataGroupDescriptor(
                        group_id=int(row["group_id"]),
                        names=_str_list(row["names"]),
                        data_type=DataType(row["data_type"]),
                        global_count=int(row["global_count"]),
                        kind=Kind.RESULT,
                        org_level=OrgLevel(int(row["org_level"])),
                        run_id=run_id,
                    )
                )
            for row in self.tables["import"].rows:
                if int(row["run_id"]) != run_id:
                    continue
                names = _str_list(row["names"])
                types = [DataType(t) for t in _str_list(row["data_types"])]
                counts = _int_list(row["global_counts"])
                result.append(
                    DataGroupDescriptor(
                        group_id=int(row["group_id"]),
                        names=names,
                        data_type=types[0],
                        global_count=counts[0],
                        kind=Kind.IMPORT,
                        attributes=dict(zip(names, zip(types, counts))),
                        source=self._resolve(row["source"]) if row["source"] else None,
                        run_id=run_id,
                    )
                )
            return sorted(result, key=lambda g: g.group_id)

    def group_of(self, dataset, run_id=None):
        for group in self.groups(run_id):
            if dataset in group.names:
                return group
        raise NotFoundError(f"Dataset '{dataset}' is not defined")

    # The execution table

    def record_offset(self, dataset, timestep, file_id, byte_offset, byte_length):
        """Record where a timestep of a dataset was written.

        Only rank 0 calls this, after the data is in the file.
        """
        with self._lock:
            self._check_open()
            timestep = int(timestep)
            byte_offset = int(byte_offset)
            byte_length = int(byte_length)
            if timestep < 1:
                raise ValidationError(f"Timesteps start at 1, not {timestep}")
            if byte_offset < 0 or byte_length < 0:
                raise ValidationError(
                    f"Invalid byte range {byte_offset}+{byte_length} for {dataset}"
                )
            end = byte_offset + byte_length
            for record in self.execution_records():
                if record.dataset == dataset and record.timestep == timestep:
                    raise ConflictError(
                        f"{dataset} at timestep {timestep} was already written"
                    )
                if (
                    record.file_id == file_id
                    and byte_offset < record.end
                    and record.byte_offset < end
                ):
                    raise ConflictError(
                        f"Bytes {byte_offset}-{end} of {file_id} overlap "
                        f"{record.dataset} at timestep {record.timestep}"
                    )
            self.tables["execution"].append(
                run_id=self.run_id,
                dataset=dataset,
                timestep=timestep,
                file_id=file_id,
                byte_offset=byte_offset,
                byte_length=byte_length,
            )

    def execution_records(self, run_id=None):
        with self._lock:
            self._check_open()
            run_id = self.run_id if run_id is None else run_id
            return [
                ExecutionRecord(
                    dataset=row["dataset"],
                    timestep=int(row["timestep"]),
                    file_id=row["file_id"],
                    byte_offset=int(row["byte_offset"]),
                    byte_length=int(row["byte_length"]),
                    run_id=int(row["run_id"]),
                )
                for row in self.tables["execution"].rows
                if int(row["run_id"]) == run_id
            ]

    def get_offset(self, dataset, timestep, run_id=None):
        """The ExecutionRecord for a dataset and timestep.

        Raises
        ------
        NotFoundError
            If that timestep of the dataset was never written in the run.
        """
        for record in self.execution_records(run_id):
            if record.dataset == dataset and record.timestep == int(timestep):
                return record
        raise NotFoundError(f"No data for {dataset} at timestep {timestep}")

    # The index and index_history tables

    def lookup_index_history(self, total_nodes, total_edges, nprocs):
        """The history record for a problem size and process count, or None."""
        with self._lock:
            self._check_open()
            key = (int(total_nodes), int(total_edges), int(nprocs))
            for row in self.tables["index"].rows:
                if (
                    int(row["total_nodes"]),
                    int(row["total_edges"]),
                    int(row["nprocs"]),
                ) != key:
                    continue
                history_id = int(row["history_id"])
                for hrow in self.tables["index_history"].rows:
                    if int(hrow["history_id"]) == history_id:
                        break
                else:
                    raise CatalogCorruptError(
                        self.tables["index_history"].path,
                        f"no entry for history {history_id}",
                    )
                return IndexHistoryRecord(
                    total_nodes=key[0],
                    total_edges=key[1],
                    nprocs=key[2],
                    history_path=self._resolve(hrow["history_path"]),
                    per_rank_edge_counts=_int_list(row["per_rank_edge_counts"]),
                    per_rank_node_counts=_int_list(row["per_rank_node_counts"]),
                    per_rank_byte_offsets=_int_list(hrow["per_rank_byte_offsets"]),
                    history_id=history_id,
                )
            return None

    def insert_index_history(self, record):
        """Persist the metadata of a history file.

        Parameters
        ----------
        record : IndexHistoryRecord
            The record, whose history file must already be complete.
        """
        with self._lock:
            self._check_open()
            record.validate()
            if self.lookup_index_history(*record.key) is not None:
                raise ConflictError(
                    "A history already exists for {} nodes, {} edges and {} "
                    "processes".format(*record.key)
                )
            history_id = len(self.tables["index"].rows) + 1
            path = self._relative(record.history_path)
            self.tables["index"].append(
                history_id=history_id,
                total_nodes=record.total_nodes,
                total_edges=record.total_edges,
                nprocs=record.nprocs,
                per_rank_edge_counts=record.per_rank_edge_counts,
                per_rank_node_counts=record.per_rank_node_counts,
            )
            self.tables["index_history"].append(
                history_id=history_id,
                history_path=path,
                per_rank_byte_offsets=record.per_rank_byte_offsets,
            )
            record.history_id = history_id
            logger.info(f"Registered history {history_id} at {path}")

    # Lifecycle

    def attach_pending(self, ticket):
        """Remember an outstanding asynchronous write, waiting on any earlier one."""
        self._check_open()
        previous = self._pending
        if previous is not None and previous is not ticket:
            previous.wait()
        self._pending = ticket

    @property
    def pending(self):
        return self._pending

    def finalize(self):
        """Wait for pending writes, flush every table to disk and close.

        The handle cannot be used afterwards.
        """
        self._check_open()
        if self._pending is not None:
            self._pending.wait()
            self._pending = None
        with self._lock:
            for table in self.tables.values():
                table.close()
            self._finalized = True
        logger.info(f"Finalized catalog {self.root_dir}, run {self.run_id}")

    def dump(self, normalize=False):
        """The raw rows of every table.

        Parameters
        ----------
        normalize : bool
            Blank the timestamps so two runs can be compared.

        Returns
        -------
        {str: [{str: str}]}
        """
        result = {}
        for name, table in self.tables.items():
            rows = [dict(row) for row in table.rows]
            if normalize:
                for row in rows:
                    if "timestamp" in row:
                        row["timestamp"] = "-"
            result[name] = rows
        return result


def initialize(app_name, root_dir, nprocs, org_level=None):
    """Open the catalog in root_dir for a new run of app_name."""
    return Catalog.initialize(app_name, root_dir, nprocs, org_level=org_level)


def read_tables(root_dir, normalize=False):
    """Read the tables of a catalog directory without starting a run."""
    root_dir = Path(root_dir)
    result = {}
    for name, fields in metadata.tables.items():
        table = _Table(root_dir / (name + metadata.table_suffix), fields)
        if not table.path.exists():
            raise NotFoundError(f"{table.path} does not exist")
        table.load()
        rows = table.rows
        if normalize:
            for row in rows:
                if "timestamp" in row:
                    row["timestamp"] = "-"
        result[name] = rows
    return result
