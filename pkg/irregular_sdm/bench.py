# -*- coding: utf-8 -*-

"""Relative timings of the phases of the pipeline.

Each measurement runs the full pipeline in its own directory and records the
slowest rank's time for a phase: the import of the edges, the index
distribution, and the write and read of the results. Write and read rates are
given as bandwidths. Only the ratios between variants are meaningful.
"""

import logging
from pathlib import Path

import irregular_sdm
from irregular_sdm.sdm import SDM
from seamm_util import Q_
import seamm_util.printing as printing
from seamm_util.printing import FormattedText as __

logger = logging.getLogger(__name__)
printer = printing.getPrinter("SDM")

# (measurement, variant, phase, parameters)
measurements = [
    ("import", "parallel", "import", {"import_method": "parallel"}),
    ("import", "broadcast", "import", {"import_method": "broadcast"}),
    ("distribution", "single-pass", "distribution", {"strategy": "single-pass"}),
    ("distribution", "two-pass", "distribution", {"strategy": "two-pass"}),
    ("distribution", "history", "distribution", {"use_history": True}),
]


def _bandwidth(nbytes, seconds):
    if seconds <= 0:
        return None
    return Q_(nbytes / seconds, "B/s").to("MB/s")


def bench(parameters, work_dir, levels=(1, 2, 3)):
    """Time the variants of each phase.

    Parameters
    ----------
    parameters : SDMParameters
        The workload, number of processes and other settings shared by all runs.
    work_dir : str or pathlib.Path
        Directory for the runs; each gets its own subdirectory.
    levels : [int]
        The file-organization levels to time writing and reading at.

    Returns
    -------
    [dict]
        One row per measurement with keys measurement, variant, level,
        seconds and bandwidth (a pint quantity in MB/s, or None).
    """
    work_dir = Path(work_dir)
    base = parameters.values_to_dict()
    history_dir = work_dir / "history"
    catalog_dir = work_dir / "catalog"
    rows = []

    def run(name, **changes):
        P = {
            **base,
            "workload_dir": str(work_dir / "input"),
            "data_dir": str(work_dir / name),
            "catalog_dir": str(catalog_dir),
            "history_dir": str(history_dir),
            **changes,
        }
        sdm = SDM(irregular_sdm.SDMParameters(values=P))
        return sdm.run()

    # Make sure a history exists for the replay measurement.
    run("warmup", use_history=False, register_history=True)

    for measurement, variant, phase, changes in measurements:
        changes = {"use_history": False, "register_history": False, **changes}
        results = run(f"{measurement}-{variant}", **changes)
        if variant == "history" and not results["history_hit"]:
            logger.warning("The history was not used for the replay measurement")
        rows.append(
            {
                "measurement": measurement,
                "variant": variant,
                "level": int(results["level"]),
                "seconds": results["timings"].get(phase, 0.0),
                "bandwidth": None,
            }
        )

    for level in levels:
        for method in ("two-phase", "sequential"):
            results = run(
                f"io-L{level}-{method}",
                level=str(level),
                write_method=method,
                use_history=True,
                register_history=False,
            )
            nbytes = results["bytes_written"]
            for phase in ("write", "read"):
                seconds = results["timings"].get(phase, 0.0)
                rows.append(
                    {
                        "measurement": phase,
                        "variant": method,
                        "level": level,
                        "seconds": seconds,
                        "bandwidth": _bandwidth(nbytes, seconds),
                    }
                )
    return rows


def print_table(rows):
    printer.normal(
        __(
            "Timings are the slowest rank's wall-clock time for each phase.",
            indent=4 * " ",
            wrap=True,
            dedent=False,
        )
    )
    printer.normal("")
    printer.normal("    Measurement   Variant       Level    Seconds    MB/s")
    printer.normal("    ----------------------------------------------------")
    for row in rows:
        bandwidth = row["bandwidth"]
        rate = "" if bandwidth is None else f"{bandwidth.magnitude:8.1f}"
        printer.normal(
            f"    {row['measurement']:13s} {row['variant']:13s} {row['level']:5d} "
            f"{row['seconds']:10.4f} {rate}"
        )
    printer.normal("")
