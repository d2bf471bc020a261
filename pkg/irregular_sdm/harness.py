# -*- coding: utf-8 -*-

"""A deterministic runtime of logical ranks.

Each rank runs the same program in its own thread and talks to the others only
through five collectives: barrier, ring shift, broadcast, gather to a root and
scatter from a root. Payloads are deep-copied when received, so ranks never
share mutable state.

A job either completes on every rank or fails as a whole. If a rank raises, or
leaves the job while others wait in a collective, every waiting rank is woken
and :func:`run_ranks` reports the failure.
"""

import collections
import copy
import logging
import threading

from irregular_sdm.errors import (
    CollectiveMismatchError,
    DeadlockError,
    RankFailure,
    SDMError,
    ValidationError,
)

logger = logging.getLogger(__name__)


class _Barrier(object):
    """A reusable barrier that notices ranks leaving the job."""

    def __init__(self, parties, timeout=None):
        self.parties = parties
        self.timeout = timeout
        self.count = 0
        self.generation = 0
        self.left = {}
        self._cond = threading.Condition()

    def wait(self, rank, op):
        with self._cond:
            if len(self.left) > 0:
                raise self._deadlock(rank, op)
            generation = self.generation
            self.count += 1
            if self.count == self.parties:
                self.count = 0
                self.generation += 1
                self._cond.notify_all()
                return
            completed = self._cond.wait_for(
                lambda: self.generation != generation or len(self.left) > 0,
                self.timeout,
            )
            if self.generation != generation:
                return
            if not completed:
                self.left[rank] = "timed out"
                self._cond.notify_all()
            raise self._deadlock(rank, op)

    def leave(self, rank, reason):
        with self._cond:
            self.left.setdefault(rank, reason)
            self._cond.notify_all()

    def _deadlock(self, rank, op):
        others = ", ".join(f"rank {r} {why}" for r, why in sorted(self.left.items()))
        return DeadlockError(f"Rank {rank} cannot complete {op}: {others}")


class _Job(object):
    """State shared by the ranks of one job. Only the collectives touch it."""

    def __init__(self, nprocs, timeout=None, sequential=False):
        self.nprocs = nprocs
        self.barrier = _Barrier(nprocs, timeout=timeout)
        self.slots = [None] * nprocs
        self.baton = threading.Lock() if sequential else None


class RankContext(object):
    """The view one rank has of the job.

    Attributes
    ----------
    rank : int
        This rank, 0 <= rank < nprocs.
    nprocs : int
        The number of ranks in the job.
    counters : collections.Counter
        How many times each collective has been called on this rank.
    """

    def __init__(self, job, rank):
        self._job = job
        self.rank = rank
        self.nprocs = job.nprocs
        self.counters = collections.Counter()

    def __repr__(self):
        return f"RankContext(rank={self.rank}, nprocs={self.nprocs})"

    @property
    def next_rank(self):
        return (self.rank + 1) % self.nprocs

    @property
    def previous_rank(self):
        return (self.rank - 1) % self.nprocs

    def _wait(self, op):
        job = self._job
        if job.baton is not None:
            job.baton.release()
        try:
            job.barrier.wait(self.rank, op)
        finally:
            if job.baton is not None:
                job.baton.acquire()

    def _exchange(self, op, payload, take):
        """Post a payload, wait for all ranks, and pick from the posted slots.

        take is applied to the list of payloads before anyone may leave the
        collective, so received objects are copied before the sender can touch
        them again.
        """
        self.counters[op] += 1
        job = self._job
        job.slots[self.rank] = (op, payload)
        self._wait(op)
        ops = {slot[0] for slot in job.slots}
        received = None
        if len(ops) == 1:
            received = take([slot[1] for slot in job.slots])
        self._wait(op)
        if len(ops) > 1:
            raise CollectiveMismatchError(
                f"Ranks called different collectives together: {sorted(ops)}"
            )
        return received

    def barrier(self):
        """Wait until every rank has reached the barrier."""
        self._exchange("barrier", None, lambda values: None)

    def ring_shift(self, payload):
        """Send payload to the next rank on the ring; return the previous one's."""
        return self._exchange(
            "ring_shift",
            payload,
            lambda values: copy.deepcopy(values[self.previous_rank]),
        )

    def bcast(self, payload=None, root=0):
        """Return the root's payload on every rank."""
        if self.rank == root:
            self._exchange("bcast", payload, lambda values: None)
            return payload
        return self._exchange(
            "bcast", None, lambda values: copy.deepcopy(values[root])
        )

    def gather(self, payload, root=0):
        """Return the list of every rank's payload on the root, None elsewhere."""
        if self.rank != root:
            return self._exchange("gather", payload, lambda values: None)
        return self._exchange(
            "gather",
            payload,
            lambda values: [
                v if r == root else copy.deepcopy(v) for r, v in enumerate(values)
            ],
        )

    def scatter(self, payloads=None, root=0):
        """Return payloads[rank] of the root's list on every rank.

        The root passes one payload per rank; the others pass nothing.
        """
        if self.rank == root:
            self._exchange("scatter", payloads, lambda values: None)
            return payloads[root]
        return self._exchange(
            "scatter", None, lambda values: copy.deepcopy(values[root][self.rank])
        )

    def allgather(self, payload):
        """Gather to rank 0 then broadcast the list back."""
        return self.bcast(self.gather(payload))

    def on_root(self, function, root=0):
        """Call function on the root only and return its result on every rank.

        An SDMError or OSError raised by function is raised on every rank.
        """
        result = error = None
        if self.rank == root:
            try:
                result = function()
            except (SDMError, OSError) as e:
                error = e
        result, error = self.bcast((result, error), root=root)
        if error is not None:
            raise error
        return result

    def agree(self, error=None):
        """Fail on every rank if any rank passed an error.

        A rank raises its own error, or else that of the lowest rank with one.
        """
        errors = self.allgather(error)
        for e in errors:
            if e is not None:
                raise error if error is not None else e

    def check_same(self, what, value):
        """Fail on every rank unless all ranks passed the same value."""
        values = self.allgather(value)
        if any(v != values[0] for v in values):
            raise CollectiveMismatchError(
                f"Ranks disagree on {what}: {', '.join(str(v) for v in values)}"
            )
        return values[0]


def run_ranks(nprocs, program, sequential=False, timeout=None):
    """Run program on nprocs logical ranks and return each rank's result.

    Parameters
    ----------
    nprocs : int
        The number of ranks.
    program : callable
        Called as ``program(context)`` on each rank with its RankContext.
    sequential : bool
        Let only one rank run at a time, switching ranks at collectives. The
        results are identical; this is meant for debugging.
    timeout : float, optional
        Seconds a rank may wait in one collective before the job is declared
        deadlocked.

    Returns
    -------
    list
        The value returned by program on each rank, in rank order.

    Raises
    ------
    RankFailure
        If any rank raised; the lowest failing rank and its error are given.
    DeadlockError
        If a rank left the job while the others waited in a collective.
    """
    if nprocs < 1:
        raise ValidationError(f"A job needs at least one rank, not {nprocs}")

    job = _Job(nprocs, timeout=timeout, sequential=sequential)
    results = [None] * nprocs
    errors = {}

    def body(rank):
        context = RankContext(job, rank)
        if job.baton is not None:
            job.baton.acquire()
        try:
            results[rank] = program(context)
            job.barrier.leave(rank, "has finished")
        except BaseException as e:
            errors[rank] = e
            job.barrier.leave(rank, f"failed with {e.__class__.__name__}")
        finally:
            if job.baton is not None:
                job.baton.release()

    threads = [
        threading.Thread(target=body, args=(rank,), name=f"rank-{rank}", daemon=True)
        for rank in range(nprocs)
    ]
    logger.debug(f"Starting {nprocs} ranks")
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()

    failures = {r: e for r, e in errors.items() if not isinstance(e, DeadlockError)}
    if len(failures) > 0:
        rank = min(failures)
        raise RankFailure(rank, failures[rank]) from failures[rank]
    if len(errors) > 0:
        rank = min(errors)
        raise errors[rank]
    return results
