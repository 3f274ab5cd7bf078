"""Local, deterministic map-shuffle-reduce with bounded-memory external sort.

Items are (key, tag, value) tuples of bytes/int/bytes.  Keys are hashed with
FNV-1a 64 into partitions; each partition is sorted by (key, tag, value),
spilling length-prefixed runs to disk whenever its buffer exceeds its share
of the memory budget, then merged and reduced one key group at a time.  Two
runs over the same inputs and config are byte-identical.

Spill run format (private, deleted on success): a sequence of records
``<u32 key_len><u32 tag><u32 value_len><key bytes><value bytes>``, all
little-endian, in sorted order.
"""

from __future__ import annotations

import heapq
import itertools
import os
import struct
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

from .errors import EngineError, FlatlinkError

KeyedItem = tuple[bytes, int, bytes]  # (key, tag, value)

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_RUN_HEADER = struct.Struct("<III")

# Rough per-item bookkeeping cost charged against the sort budget on top of
# the raw key/value bytes (tuple + object headers).
_ITEM_OVERHEAD = 64


def fnv1a_64(data: bytes) -> int:
    """FNV-1a, 64-bit: the fixed, documented hash behind partitioning."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def partition_of(key: bytes, partitions: int) -> int:
    if partitions < 1:
        raise EngineError("partitions must be >= 1")
    if partitions == 1:
        return 0
    return fnv1a_64(key) % partitions


@dataclass
class ExecConfig:
    partitions: int = 16
    memory_budget_bytes: int = 256 * 1024 * 1024
    spill_dir: str | None = None
    parallelism: int = 1

    def validate(self) -> None:
        if self.partitions < 1:
            raise EngineError("partitions must be >= 1")
        if self.parallelism < 1:
            raise EngineError("parallelism must be >= 1")
        if self.memory_budget_bytes < 1:
            raise EngineError("memory_budget_bytes must be >= 1")


@dataclass
class JobStats:
    """Filled in as a job runs; spill_runs is the observable for scale tests.

    Counters are exact when parallelism == 1 (the default); concurrent
    reduces may undercount them.  Output bytes are unaffected either way.
    """

    items_in: int = 0
    spill_runs: int = 0
    peak_buffer_bytes: int = 0
    keys_reduced: int = 0

    def saw_buffer(self, nbytes: int) -> None:
        if nbytes > self.peak_buffer_bytes:
            self.peak_buffer_bytes = nbytes


class _Spill:
    """One sorted run on disk."""

    def __init__(self, spill_dir: str):
        fd, self.path = tempfile.mkstemp(prefix="run-", suffix=".spill", dir=spill_dir)
        self._fh = os.fdopen(fd, "wb", buffering=1 << 16)

    def write_items(self, items: Iterable[KeyedItem]) -> None:
        write = self._fh.write
        for key, tag, value in items:
            write(_RUN_HEADER.pack(len(key), tag, len(value)))
            write(key)
            write(value)
        self._fh.close()

    def read_items(self) -> Iterator[KeyedItem]:
        try:
            with open(self.path, "rb", buffering=1 << 16) as fh:
                while True:
                    header = fh.read(_RUN_HEADER.size)
                    if not header:
                        return
                    if len(header) != _RUN_HEADER.size:
                        raise EngineError(f"truncated spill run {self.path}")
                    klen, tag, vlen = _RUN_HEADER.unpack(header)
                    key = fh.read(klen)
                    value = fh.read(vlen)
                    if len(key) != klen or len(value) != vlen:
                        raise EngineError(f"truncated spill run {self.path}")
                    yield key, tag, value
        finally:
            try:
                os.unlink(self.path)
            except OSError:
                pass


class ExternalSorter:
    """Buffers (key, tag, value) items, spilling sorted runs past the budget."""

    def __init__(self, budget_bytes: int, spill_dir: str, stats: JobStats | None = None):
        self.budget_bytes = max(budget_bytes, 1)
        self.spill_dir = spill_dir
        self.stats = stats if stats is not None else JobStats()
        self._buffer: list[KeyedItem] = []
        self._buffer_bytes = 0
        self._runs: list[_Spill] = []

    def add(self, item: KeyedItem) -> None:
        self._buffer.append(item)
        self._buffer_bytes += len(item[0]) + len(item[2]) + _ITEM_OVERHEAD
        if self._buffer_bytes >= self.budget_bytes:
            self._spill()

    def _spill(self) -> None:
        if not self._buffer:
            return
        self.stats.saw_buffer(self._buffer_bytes)
        self._buffer.sort()
        run = _Spill(self.spill_dir)
        run.write_items(self._buffer)
        self._runs.append(run)
        self.stats.spill_runs += 1
        self._buffer = []
        self._buffer_bytes = 0

    def iter_sorted(self) -> Iterator[KeyedItem]:
        """Consume the sorter: yields all items sorted by (key, tag, value)."""
        self.stats.saw_buffer(self._buffer_bytes)
        self._buffer.sort()
        if not self._runs:
            yield from self._buffer
            self._buffer = []
            return
        streams = [run.read_items() for run in self._runs]
        streams.append(iter(self._buffer))
        yield from heapq.merge(*streams)
        self._buffer = []
        self._runs = []


def external_sort(
    items: Iterable[KeyedItem],
    cfg: ExecConfig,
    stats: JobStats | None = None,
) -> Iterator[KeyedItem]:
    """Sort an arbitrarily large stream by (key, tag, value)."""
    cfg.validate()
    with _spill_scope(cfg) as spill_dir:
        sorter = ExternalSorter(cfg.memory_budget_bytes, spill_dir, stats)
        for item in items:
            sorter.add(item)
        yield from sorter.iter_sorted()


class _spill_scope:
    """Use cfg.spill_dir if set, else a private temp dir removed on exit."""

    def __init__(self, cfg: ExecConfig):
        self._configured = cfg.spill_dir
        self._own: str | None = None

    def __enter__(self) -> str:
        if self._configured:
            os.makedirs(self._configured, exist_ok=True)
            return self._configured
        self._own = tempfile.mkdtemp(prefix="flatlink-")
        return self._own

    def __exit__(self, *exc) -> None:
        if self._own is not None:
            try:
                os.rmdir(self._own)
            except OSError:
                pass  # leftover runs from an aborted job


ReduceFn = Callable[[bytes, Iterator[tuple[int, bytes]]], Iterable[bytes]]


def _reduce_partition(
    sorted_items: Iterator[KeyedItem],
    reduce_fn: ReduceFn,
    stats: JobStats,
) -> Iterator[tuple[bytes, bytes]]:
    for key, group in itertools.groupby(sorted_items, key=lambda item: item[0]):
        stats.keys_reduced += 1
        tagged = ((tag, value) for _, tag, value in group)
        try:
            for out in reduce_fn(key, tagged):
                yield key, out
        except FlatlinkError:
            raise  # domain errors already name their context
        except Exception as exc:
            raise EngineError(f"reduce_fn failed for key {key!r}: {exc}") from exc


def run_group_by(
    inputs: list[tuple[int, Iterable[bytes]]],
    key_fn: Callable[[bytes], bytes],
    reduce_fn: ReduceFn,
    cfg: ExecConfig,
    stats: JobStats | None = None,
    merged: bool = False,
) -> Iterator[bytes]:
    """Group all tagged input items by key and reduce each group once.

    reduce_fn(key, tagged_values) sees the group's (tag, item) pairs sorted
    by (tag, item bytes) and must be pure.  Output order is ascending
    (partition, key); with merged=True the per-partition streams are merged
    so outputs come in ascending key order globally.
    """
    cfg.validate()
    if stats is None:
        stats = JobStats()
    with _spill_scope(cfg) as spill_dir:
        nparts = cfg.partitions
        per_sorter = max(cfg.memory_budget_bytes // nparts, 1)
        sorters = [ExternalSorter(per_sorter, spill_dir, stats) for _ in range(nparts)]
        for tag, stream in inputs:
            for item in stream:
                key = key_fn(item)
                if not key:
                    raise EngineError("key_fn produced an empty key")
                sorters[partition_of(key, nparts)].add((key, tag, item))
                stats.items_in += 1

        def partition_stream(p: int) -> Iterator[tuple[bytes, bytes]]:
            return _reduce_partition(sorters[p].iter_sorted(), reduce_fn, stats)

        if cfg.parallelism > 1:
            streams = _prereduce_parallel(partition_stream, nparts, cfg.parallelism, spill_dir)
        else:
            streams = [partition_stream(p) for p in range(nparts)]

        if merged:
            for _, out in heapq.merge(*streams, key=lambda pair: pair[0]):
                yield out
        else:
            for stream in streams:
                for _, out in stream:
                    yield out


def _prereduce_parallel(
    partition_stream: Callable[[int], Iterator[tuple[bytes, bytes]]],
    nparts: int,
    parallelism: int,
    spill_dir: str,
) -> list[Iterator[tuple[bytes, bytes]]]:
    """Run partition reduces on worker threads, spooling outputs to disk.

    Partitions are independent; spools are replayed in partition order, so
    results are identical to the sequential path.
    """

    def spool(p: int) -> _Spill:
        run = _Spill(spill_dir)
        run.write_items([(key, 0, out) for key, out in partition_stream(p)])
        return run

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        spools = list(pool.map(spool, range(nparts)))
    return [((key, value) for key, _, value in run.read_items()) for run in spools]
