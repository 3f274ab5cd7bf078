"""Post-processing utilities: seeded sampling, type filtering, stats, validation.

All tools are single-pass and streaming; sampled or filtered lines are
copied byte-identically, so link ids and provenance survive.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field

from .errors import FlatlinkError
from .flat_record import EntityRecord, parse_record
from .link_join import parse_link_line
from .rdf_ingest import URI

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"

MODES = ("entity", "link2", "link3")
SIDES = ("first", "second", "third", "any", "all")

_ARITY = {"entity": 1, "link2": 2, "link3": 3}


@dataclass
class SampleSpec:
    n: int
    seed: int

    def validate(self) -> None:
        if self.n < 0:
            raise FlatlinkError("sample size must be >= 0")


def sample_lines(in_path: str, spec: SampleSpec, out_path: str) -> int:
    """Reservoir-sample min(n, total) lines, preserving input order.

    Algorithm R with Python's Mersenne Twister: the generator is seeded with
    spec.seed; the first n lines fill the reservoir without drawing; every
    later line i (0-based) draws j = Random.randrange(i + 1) and replaces
    reservoir slot j when j < n.  Identical (file, n, seed) always produce
    byte-identical output.
    """
    spec.validate()
    rng = random.Random(spec.seed)
    reservoir: list[tuple[int, bytes]] = []
    with open(in_path, "rb") as fh:
        for i, line in enumerate(fh):
            if i < spec.n:
                reservoir.append((i, line))
                continue
            j = rng.randrange(i + 1)
            if j < spec.n:
                reservoir[j] = (i, line)
    reservoir.sort()
    with open(out_path, "wb") as out:
        for _, line in reservoir:
            out.write(line)
    return len(reservoir)


@dataclass
class TypeFilterSpec:
    type_uri: str
    side: str = "any"
    type_predicate: str = RDF_TYPE

    def validate(self, mode: str) -> None:
        if self.side not in SIDES:
            raise FlatlinkError(f"unknown side {self.side!r}")
        positional = {"first": 1, "second": 2, "third": 3}.get(self.side)
        if positional is not None and positional > _ARITY[mode]:
            raise FlatlinkError(f"side {self.side!r} is invalid for mode {mode!r}")


@dataclass
class FilterReport:
    lines_read: int = 0
    lines_kept: int = 0
    lines_skipped: int = 0  # unparseable

    def as_kv(self) -> str:
        return (
            f"lines_read={self.lines_read} lines_kept={self.lines_kept} "
            f"lines_skipped={self.lines_skipped}"
        )


def _line_records(line: str, mode: str) -> list[EntityRecord]:
    if mode == "entity":
        return [parse_record(line)]
    parsed = parse_link_line(line)
    if len(parsed.groups) != _ARITY[mode]:
        raise FlatlinkError(
            f"expected {_ARITY[mode]} record groups, found {len(parsed.groups)}"
        )
    return [parse_record(slot) for _, slot in parsed.groups]


def _has_type(rec: EntityRecord, spec: TypeFilterSpec) -> bool:
    values = rec.properties.get(spec.type_predicate, [])
    return any(v.kind == URI and v.lexical == spec.type_uri for v in values)


def _matches(records: list[EntityRecord], spec: TypeFilterSpec) -> bool:
    if spec.side == "any":
        return any(_has_type(r, spec) for r in records)
    if spec.side == "all":
        return all(_has_type(r, spec) for r in records)
    index = {"first": 0, "second": 1, "third": 2}[spec.side]
    return _has_type(records[index], spec)


def filter_by_type(
    in_path: str,
    spec: TypeFilterSpec,
    out_path: str,
    mode: str,
    report: FilterReport | None = None,
) -> int:
    """Copy the lines whose designated record(s) carry the type; returns count kept."""
    if mode not in MODES:
        raise FlatlinkError(f"unknown mode {mode!r}")
    spec.validate(mode)
    if report is None:
        report = FilterReport()
    with open(in_path, "rb") as fh, open(out_path, "wb") as out:
        for raw in fh:
            report.lines_read += 1
            try:
                records = _line_records(raw.rstrip(b"\n").decode("utf-8"), mode)
            except (FlatlinkError, UnicodeDecodeError):
                report.lines_skipped += 1
                continue
            if _matches(records, spec):
                out.write(raw)
                report.lines_kept += 1
    return report.lines_kept


@dataclass
class StatsReport:
    mode: str = "entity"
    lines: int = 0
    bytes: int = 0
    unparseable: int = 0
    slot_entities: list[int] = field(default_factory=list)  # distinct URIs per slot
    top_types: list[tuple[str, int]] = field(default_factory=list)

    def as_kv(self) -> str:
        slots = ",".join(str(c) for c in self.slot_entities)
        types = " ".join(f"type:{uri}={n}" for uri, n in self.top_types)
        base = (
            f"mode={self.mode} lines={self.lines} bytes={self.bytes} "
            f"unparseable={self.unparseable} slot_entities={slots}"
        )
        return f"{base} {types}".rstrip()

    def as_text(self) -> str:
        out = [
            f"lines:       {self.lines}",
            f"bytes:       {self.bytes}",
            f"unparseable: {self.unparseable}",
        ]
        for i, count in enumerate(self.slot_entities, 1):
            out.append(f"slot {i} distinct entities: {count}")
        if self.top_types:
            out.append("top types:")
            for uri, n in self.top_types:
                out.append(f"  {n:>10}  {uri}")
        return "\n".join(out)


def stats(
    in_path: str,
    mode: str,
    type_predicate: str = RDF_TYPE,
    top_k: int = 10,
) -> StatsReport:
    """Single-pass line/byte counts, per-slot distinct entities, type histogram."""
    if mode not in MODES:
        raise FlatlinkError(f"unknown mode {mode!r}")
    report = StatsReport(mode=mode)
    slot_uris: list[set[str]] = [set() for _ in range(_ARITY[mode])]
    histogram: Counter[str] = Counter()
    with open(in_path, "rb") as fh:
        for raw in fh:
            report.lines += 1
            report.bytes += len(raw)
            try:
                records = _line_records(raw.rstrip(b"\n").decode("utf-8"), mode)
            except (FlatlinkError, UnicodeDecodeError):
                report.unparseable += 1
                continue
            for slot, rec in enumerate(records):
                slot_uris[slot].add(rec.uri)
                for value in rec.properties.get(type_predicate, []):
                    if value.kind == URI:
                        histogram[value.lexical] += 1
    report.slot_entities = [len(s) for s in slot_uris]
    report.top_types = sorted(histogram.items(), key=lambda kv: (-kv[1], kv[0]))[:top_k]
    return report


@dataclass
class ValidationReport:
    ok_lines: int = 0
    violations: list[tuple[int, str]] = field(default_factory=list)
    violation_count: int = 0
    violation_cap: int = 100

    def flag(self, line_no: int, reason: str) -> None:
        self.violation_count += 1
        if len(self.violations) < self.violation_cap:
            self.violations.append((line_no, reason))

    def as_kv(self) -> str:
        return f"ok_lines={self.ok_lines} violations={self.violation_count}"


def _check_control_bytes(raw: bytes) -> str | None:
    for b in raw:
        if b < 0x20 and b not in (0x09,):
            return f"raw control byte 0x{b:02x}"
    return None


def _check_literal_quoting(line: str) -> str | None:
    # Escaped tokens never begin with two double quotes unless they are a
    # complete literal wrapper, so any prefix-only match is a violation.
    for token in line.split("\t"):
        if token.startswith('""'):
            if not (len(token) >= 4 and token.endswith('""')):
                return f"unbalanced literal quotes in token {token[:40]!r}"
    return None


def validate(in_path: str, mode: str) -> ValidationReport:
    """Check parseability, structure, quoting and link-id uniqueness per line.

    Violations are data findings, not failures; callers decide the exit
    status.  Link ids are tracked in a streaming set sized by file line
    count.
    """
    if mode not in MODES:
        raise FlatlinkError(f"unknown mode {mode!r}")
    report = ValidationReport()
    seen_ids: set[str] = set()
    with open(in_path, "rb") as fh:
        for line_no, raw in enumerate(fh, 1):
            stripped = raw.rstrip(b"\n")
            bad = _check_control_bytes(stripped)
            if bad is not None:
                report.flag(line_no, bad)
                continue
            try:
                line = stripped.decode("utf-8")
            except UnicodeDecodeError as exc:
                report.flag(line_no, f"not UTF-8: {exc.reason}")
                continue
            bad = _check_literal_quoting(line)
            if bad is not None:
                report.flag(line_no, bad)
                continue
            try:
                _line_records(line, mode)
            except FlatlinkError as exc:
                report.flag(line_no, str(exc))
                continue
            if mode != "entity":
                link_id = line.split("\t", 1)[0]
                if link_id in seen_ids:
                    report.flag(line_no, f"duplicate link id {link_id!r}")
                    continue
                seen_ids.add(link_id)
            report.ok_lines += 1
    return report
