"""Compile a knowledge base's raw triple files into one flat entity file.

A URI gets a line iff it occurs as the subject of at least one parseable
triple; subjects spread over multiple input files merge into a single
record.  Output lines are sorted ascending by subject URI and the whole run
is byte-deterministic for fixed inputs and config.
"""

from __future__ import annotations

import itertools
import os
import struct
from dataclasses import dataclass, field
from typing import Iterator

from . import engine
from .errors import FlatlinkError
from .flat_record import LABEL_RE, record_from_triples, serialize_record
from .rdf_ingest import LITERAL, URI, ObjectValue, ParseReport, Triple, iter_triples

_SEQ = struct.Struct(">Q")


@dataclass
class KbSpec:
    label: str
    input_paths: list[str]
    output_path: str

    def validate(self) -> None:
        if not LABEL_RE.fullmatch(self.label):
            raise FlatlinkError(
                f"bad KB label {self.label!r}: must match {LABEL_RE.pattern}"
            )
        if not self.input_paths:
            raise FlatlinkError(f"KB {self.label!r} has no input files")


@dataclass
class CompileReport:
    label: str = ""
    entities: int = 0
    triples: int = 0
    skipped_lines: int = 0
    spill_runs: int = 0
    parse: ParseReport = field(default_factory=ParseReport)

    def as_kv(self) -> str:
        return (
            f"label={self.label} entities={self.entities} triples={self.triples} "
            f"skipped_lines={self.skipped_lines} spill_runs={self.spill_runs}"
        )


def _encode_triple(triple: Triple, seq: int) -> bytes:
    # subject \t predicate \t seq8 kind obj; subject/predicate are free of
    # bytes <= 0x20, so byte order on the item equals (subject, predicate,
    # seq) order and split(b"\t", 2) recovers the fields unambiguously.
    kind = b"L" if triple.object.kind == LITERAL else b"U"
    return (
        triple.subject.encode("utf-8")
        + b"\t"
        + triple.predicate.encode("utf-8")
        + b"\t"
        + _SEQ.pack(seq)
        + kind
        + triple.object.lexical.encode("utf-8")
    )


def _decode_triple(item: bytes) -> Triple:
    subject, predicate, rest = item.split(b"\t", 2)
    kind = URI if rest[8:9] == b"U" else LITERAL
    return Triple(
        subject.decode("utf-8"),
        predicate.decode("utf-8"),
        ObjectValue(kind, rest[9:].decode("utf-8")),
    )


def _subject_of(item: bytes) -> bytes:
    return item[: item.index(b"\t")]


def _reduce_entity(key: bytes, tagged: Iterator[tuple[int, bytes]]):
    subject = key.decode("utf-8")
    triples = [_decode_triple(item) for _, item in tagged]
    yield serialize_record(record_from_triples(subject, triples)).encode("utf-8")


def compile_kb(
    spec: KbSpec,
    cfg: engine.ExecConfig,
    stats: engine.JobStats | None = None,
) -> CompileReport:
    """Run the wrapper stage for one KB; returns the summary report."""
    spec.validate()
    report = CompileReport(label=spec.label)
    if stats is None:
        stats = engine.JobStats()

    def items() -> Iterator[bytes]:
        seq = itertools.count()
        for path in spec.input_paths:
            file_report = ParseReport()
            for triple in iter_triples(path, file_report):
                yield _encode_triple(triple, next(seq))
            report.parse.merge(file_report)

    lines = engine.run_group_by(
        [(0, items())],
        _subject_of,
        _reduce_entity,
        cfg,
        stats=stats,
        merged=True,
    )
    with open(spec.output_path, "wb") as out:
        for line in lines:
            out.write(line)
            out.write(b"\n")
            report.entities += 1

    report.triples = report.parse.triples_ok
    report.skipped_lines = report.parse.lines_skipped
    report.spill_runs = stats.spill_runs
    if report.triples == 0:
        os.unlink(spec.output_path)
        raise FlatlinkError(
            f"KB {spec.label!r}: no parseable triples in {spec.input_paths}"
        )
    return report
