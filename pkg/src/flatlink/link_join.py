"""Join entity files with sameAs ground truth into self-contained linkage files.

A 2-way line has five tab-delimited slots::

    <link id> TAB <labelL>-instance TAB <left record> TAB <labelR>-instance TAB <right record>

where each record slot is the verbatim line from the source entity file.
A 3-way line carries ``<idA>,<idB>`` in its first slot followed by three
(sentinel, record) groups.  Sentinels never occur inside record tokens (the
token escape layer guards them), so every line parses on its own by
scanning for sentinel-shaped tokens.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from . import engine
from .errors import FlatRecordError, LinkJoinError
from .flat_record import (
    LABEL_RE,
    SENTINEL_SHAPE,
    SENTINEL_SUFFIX,
    unescape_token,
)
from .rdf_ingest import URI, ParseReport, iter_triples

OWL_SAMEAS = "http://www.w3.org/2002/07/owl#sameAs"
GT_FORMATS = ("tsv-pairs", "ntriples-sameas")

_LEN = struct.Struct("<I")


def sentinel_for(label: str) -> str:
    if not LABEL_RE.fullmatch(label):
        raise LinkJoinError(f"bad KB label {label!r}: must match {LABEL_RE.pattern}")
    return label + SENTINEL_SUFFIX


def gen_link_id(prefix: str, n: int) -> str:
    """`<prefix>-<n>`, n >= 1 in plain decimal."""
    if n < 1:
        raise LinkJoinError("link counter must be >= 1")
    return f"{prefix}-{n}"


@dataclass
class LinkLine:
    link_id: str
    groups: list[tuple[str, str]]  # (label, verbatim record slot)


def parse_link_line(line: str, labels: Iterable[str] | None = None) -> LinkLine:
    """Split one linkage line into its id and (label, record) groups.

    With labels=None any sentinel-shaped token opens a group; valid record
    tokens can never be sentinel-shaped, so no registry is required.
    """
    if labels is None:
        def is_sentinel(tok: str) -> bool:
            return SENTINEL_SHAPE.fullmatch(tok) is not None
    else:
        registry = {sentinel_for(label) for label in labels}

        def is_sentinel(tok: str) -> bool:
            return tok in registry

    tokens = line.split("\t")
    link_id = tokens[0]
    if not link_id:
        raise LinkJoinError("empty link id slot")
    if len(tokens) < 2 or not is_sentinel(tokens[1]):
        raise LinkJoinError("expected a sentinel label after the link id")

    groups: list[tuple[str, str]] = []
    label: str | None = None
    slot: list[str] = []
    for tok in tokens[1:]:
        if is_sentinel(tok):
            if label is not None:
                if not slot:
                    raise LinkJoinError(f"empty record slot under {label!r}")
                groups.append((label, "\t".join(slot)))
            label = tok[: -len(SENTINEL_SUFFIX)]
            slot = []
        else:
            slot.append(tok)
    if not slot:
        raise LinkJoinError(f"empty record slot under {label!r}")
    groups.append((label, "\t".join(slot)))
    return LinkLine(link_id, groups)


@dataclass
class GtReport:
    lines_total: int = 0
    pairs_ok: int = 0
    lines_skipped: int = 0
    first_errors: list[tuple[int, str]] = field(default_factory=list)
    error_cap: int = 20

    def record_error(self, line_no: int, reason: str) -> None:
        self.lines_skipped += 1
        if len(self.first_errors) < self.error_cap:
            self.first_errors.append((line_no, reason))


def _safe_uri(uri: str) -> bool:
    return bool(uri) and all(ord(c) > 0x20 for c in uri)


def load_ground_truth(
    path: str,
    format: str,
    sameas_uri: str = OWL_SAMEAS,
    report: GtReport | None = None,
    dedup: bool = True,
) -> Iterator[tuple[str, str]]:
    """Stream (left, right) URI pairs from a ground-truth file.

    Pairs keep file orientation; with dedup=True (the default) duplicates
    are dropped via an in-memory set, sized for desk-scale files.  join2
    passes dedup=False and collapses duplicates inside its shuffle instead.
    """
    if format not in GT_FORMATS:
        raise LinkJoinError(f"unknown ground-truth format {format!r}")
    if report is None:
        report = GtReport()
    seen: set[tuple[str, str]] | None = set() if dedup else None

    def emit(pair: tuple[str, str]) -> bool:
        if seen is not None:
            if pair in seen:
                return False
            seen.add(pair)
        return True

    if format == "tsv-pairs":
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, raw in enumerate(fh, 1):
                report.lines_total += 1
                line = raw.rstrip("\r\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) != 2:
                    report.record_error(line_no, f"expected 2 fields, got {len(fields)}")
                    continue
                left, right = fields
                if not (_safe_uri(left) and _safe_uri(right)):
                    report.record_error(line_no, "empty URI or control/space character")
                    continue
                report.pairs_ok += 1
                if emit((left, right)):
                    yield left, right
    else:
        parse = ParseReport(error_cap=report.error_cap)
        for triple in iter_triples(path, parse):
            if triple.predicate != sameas_uri:
                report.record_error(parse.lines_total, f"predicate is not {sameas_uri}")
                continue
            if triple.object.kind != URI:
                report.record_error(parse.lines_total, "sameAs object is a literal")
                continue
            pair = (triple.subject, triple.object.lexical)
            if not (_safe_uri(pair[0]) and _safe_uri(pair[1])):
                report.record_error(parse.lines_total, "control/space character in URI")
                continue
            report.pairs_ok += 1
            if emit(pair):
                yield pair
        report.lines_total += parse.lines_total
        report.lines_skipped += parse.lines_skipped
        for entry in parse.first_errors:
            if len(report.first_errors) < report.error_cap:
                report.first_errors.append(entry)


@dataclass
class Join2Report:
    labels: tuple[str, str] = ("", "")
    pairs_read: int = 0
    pairs_unique: int = 0
    pairs_dropped_left: int = 0
    pairs_dropped_right: int = 0
    lines_emitted: int = 0
    gt_lines_skipped: int = 0
    spill_runs: int = 0

    def as_kv(self) -> str:
        return (
            f"labels={self.labels[0]},{self.labels[1]} pairs_read={self.pairs_read} "
            f"pairs_unique={self.pairs_unique} pairs_dropped_left={self.pairs_dropped_left} "
            f"pairs_dropped_right={self.pairs_dropped_right} lines_emitted={self.lines_emitted} "
            f"gt_lines_skipped={self.gt_lines_skipped} spill_runs={self.spill_runs}"
        )


def _iter_entity_items(path: str) -> Iterator[bytes]:
    # item = raw uri \t verbatim line; the uri field is the unescaped first
    # token, matching the raw URIs carried by ground-truth items.
    with open(path, "rb") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip(b"\n")
            if not line:
                raise LinkJoinError(f"{path}:{line_no}: blank line in entity file")
            token = line.split(b"\t", 1)[0]
            try:
                uri = unescape_token(token.decode("utf-8")).encode("utf-8")
            except (FlatRecordError, UnicodeDecodeError) as exc:
                raise LinkJoinError(f"{path}:{line_no}: bad entity line: {exc}") from exc
            yield uri + b"\t" + line


def _first_field(item: bytes) -> bytes:
    return item[: item.index(b"\t")]


def _reduce_match_left(key: bytes, tagged: Iterator[tuple[int, bytes]]):
    # tag 0: entity line for this uri (at most one); tag 1: gt items l \t r,
    # sorted by r with duplicates adjacent.
    line = None
    seen_entity = 0
    item = next(tagged, None)
    while item is not None and item[0] == 0:
        seen_entity += 1
        if seen_entity > 1:
            raise LinkJoinError(
                f"duplicate subject {key.decode('utf-8', 'replace')!r} in left entity file"
            )
        line = item[1].split(b"\t", 1)[1]
        item = next(tagged, None)
    prev_r = None
    while item is not None:
        r = item[1].split(b"\t", 1)[1]
        if r != prev_r:
            prev_r = r
            if line is None:
                yield b"D"
            else:
                yield b"M" + r + b"\t" + key + b"\t" + line
        item = next(tagged, None)


def _reduce_match_right(key: bytes, tagged: Iterator[tuple[int, bytes]]):
    # tag 0: entity line for this uri; tag 1: survivors r \t l \t left-line,
    # one per unique pair, sorted by l.
    line = None
    seen_entity = 0
    item = next(tagged, None)
    while item is not None and item[0] == 0:
        seen_entity += 1
        if seen_entity > 1:
            raise LinkJoinError(
                f"duplicate subject {key.decode('utf-8', 'replace')!r} in right entity file"
            )
        line = item[1].split(b"\t", 1)[1]
        item = next(tagged, None)
    while item is not None:
        _, l, left_line = item[1].split(b"\t", 2)
        if line is None:
            yield b"D"
        else:
            yield (
                b"M" + l + b"\t" + key + b"\t"
                + _LEN.pack(len(left_line)) + left_line + line
            )
        item = next(tagged, None)


def join2(
    left_path: str,
    right_path: str,
    gt_path: str,
    gt_format: str,
    labels: tuple[str, str],
    out_path: str,
    cfg: engine.ExecConfig,
    sameas_uri: str = OWL_SAMEAS,
    stats: engine.JobStats | None = None,
) -> Join2Report:
    """Inner-join two entity files through the ground truth.

    One output line per unique ground-truth pair present on both sides;
    link ids count up from 1 in ascending (left uri, right uri) order, which
    is also the file order.
    """
    sentinel_left = sentinel_for(labels[0])
    sentinel_right = sentinel_for(labels[1])
    if labels[0] == labels[1]:
        raise LinkJoinError("join labels must be distinct")
    if stats is None:
        stats = engine.JobStats()
    gt_report = GtReport()
    report = Join2Report(labels=labels)

    def gt_items() -> Iterator[bytes]:
        for left, right in load_ground_truth(
            gt_path, gt_format, sameas_uri, gt_report, dedup=False
        ):
            yield left.encode("utf-8") + b"\t" + right.encode("utf-8")

    matched_left = engine.run_group_by(
        [(0, _iter_entity_items(left_path)), (1, gt_items())],
        _first_field,
        _reduce_match_left,
        cfg,
        stats=stats,
    )

    def survivors() -> Iterator[bytes]:
        for out in matched_left:
            if out == b"D":
                report.pairs_dropped_left += 1
            else:
                yield out[1:]

    matched_both = engine.run_group_by(
        [(0, _iter_entity_items(right_path)), (1, survivors())],
        _first_field,
        _reduce_match_right,
        cfg,
        stats=stats,
    )

    def sortable() -> Iterator[engine.KeyedItem]:
        for out in matched_both:
            if out == b"D":
                report.pairs_dropped_right += 1
            else:
                l, r, payload = out[1:].split(b"\t", 2)
                yield l + b"\t" + r, 0, payload

    prefix = labels[0][0] + labels[1][0]
    s_left = sentinel_left.encode("utf-8")
    s_right = sentinel_right.encode("utf-8")
    with open(out_path, "wb") as out:
        for n, (_, _, payload) in enumerate(engine.external_sort(sortable(), cfg, stats), 1):
            (llen,) = _LEN.unpack_from(payload)
            left_line = payload[4 : 4 + llen]
            right_line = payload[4 + llen :]
            out.write(
                gen_link_id(prefix, n).encode("utf-8")
                + b"\t" + s_left + b"\t" + left_line
                + b"\t" + s_right + b"\t" + right_line
                + b"\n"
            )
            report.lines_emitted += 1

    report.pairs_read = gt_report.pairs_ok
    report.gt_lines_skipped = gt_report.lines_skipped
    report.pairs_unique = (
        report.pairs_dropped_left + report.pairs_dropped_right + report.lines_emitted
    )
    report.spill_runs = stats.spill_runs
    return report


@dataclass
class Join3Report:
    lines_left: int = 0
    lines_right: int = 0
    lines_emitted: int = 0
    spill_runs: int = 0

    def as_kv(self) -> str:
        return (
            f"lines_left={self.lines_left} lines_right={self.lines_right} "
            f"lines_emitted={self.lines_emitted} spill_runs={self.spill_runs}"
        )


def _iter_link_items(
    path: str,
    shared_label: str,
    allowed: set[str],
    keep_shared_slot: bool,
    counter: list[int],
) -> Iterator[bytes]:
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, 1):
            line = raw.rstrip("\n")
            try:
                parsed = parse_link_line(line)
            except LinkJoinError as exc:
                raise LinkJoinError(f"{path}:{line_no}: {exc}") from exc
            if len(parsed.groups) != 2:
                raise LinkJoinError(
                    f"{path}:{line_no}: expected a 2-way line, got "
                    f"{len(parsed.groups)} record groups"
                )
            by_label = dict(parsed.groups)
            if shared_label not in by_label:
                raise LinkJoinError(
                    f"{path}:{line_no}: shared KB {shared_label!r} absent"
                )
            (other_label,) = set(by_label) - {shared_label}
            if other_label not in allowed:
                raise LinkJoinError(
                    f"{path}:{line_no}: KB {other_label!r} is not in the output order"
                )
            shared_slot = by_label[shared_label]
            other_slot = by_label[other_label]
            uri = unescape_token(shared_slot.split("\t", 1)[0])
            counter[0] += 1
            head = (
                uri.encode("utf-8") + b"\t"
                + parsed.link_id.encode("utf-8") + b"\t"
                + other_label.encode("utf-8") + b"\t"
            )
            if keep_shared_slot:
                shared_bytes = shared_slot.encode("utf-8")
                yield head + _LEN.pack(len(shared_bytes)) + shared_bytes + other_slot.encode("utf-8")
            else:
                yield head + other_slot.encode("utf-8")


def _reduce_cross(key: bytes, tagged: Iterator[tuple[int, bytes]]):
    # tag 0: lines of file_AB containing this shared uri (buffered);
    # tag 1: lines of file_CB, streamed against the buffer.
    left: list[bytes] = []
    item = next(tagged, None)
    while item is not None and item[0] == 0:
        left.append(item[1].split(b"\t", 1)[1])
        item = next(tagged, None)
    while item is not None:
        right = item[1].split(b"\t", 1)[1]
        id_b, label_b, slot_b = right.split(b"\t", 2)
        for entry in left:
            id_a, label_a, rest = entry.split(b"\t", 2)
            (slen,) = _LEN.unpack_from(rest)
            shared_slot = rest[4 : 4 + slen]
            slot_a = rest[4 + slen :]
            yield (
                id_a + b"\t" + id_b + b"\t" + label_a + b"\t" + label_b + b"\t"
                + _LEN.pack(len(shared_slot)) + shared_slot
                + _LEN.pack(len(slot_a)) + slot_a
                + slot_b
            )
        item = next(tagged, None)


def join3(
    ab_path: str,
    cb_path: str,
    shared_label: str,
    order: list[str],
    out_path: str,
    cfg: engine.ExecConfig,
    stats: engine.JobStats | None = None,
) -> Join3Report:
    """Join two 2-way linkage files on their shared KB's entity URIs.

    Every AB line pairs with every CB line holding the same shared-KB URI;
    the shared record is taken from the AB side.  Output is sorted by the
    (idA, idB) byte pair and each first slot reads ``idA,idB``.
    """
    if len(order) != 3 or len(set(order)) != 3:
        raise LinkJoinError("order must list 3 distinct KB labels")
    if shared_label not in order:
        raise LinkJoinError(f"shared label {shared_label!r} missing from order")
    for label in order:
        sentinel_for(label)  # validates
    allowed = set(order)
    if stats is None:
        stats = engine.JobStats()
    report = Join3Report()
    count_ab = [0]
    count_cb = [0]

    crossed = engine.run_group_by(
        [
            (0, _iter_link_items(ab_path, shared_label, allowed, True, count_ab)),
            (1, _iter_link_items(cb_path, shared_label, allowed, False, count_cb)),
        ],
        _first_field,
        _reduce_cross,
        cfg,
        stats=stats,
    )

    def sortable() -> Iterator[engine.KeyedItem]:
        for out in crossed:
            id_a, id_b, payload = out.split(b"\t", 2)
            yield id_a + b"\t" + id_b, 0, payload

    sentinels = {label: sentinel_for(label).encode("utf-8") for label in order}
    with open(out_path, "wb") as out:
        for key, _, payload in engine.external_sort(sortable(), cfg, stats):
            id_a, id_b = key.split(b"\t")
            label_a, label_b, rest = payload.split(b"\t", 2)
            (slen,) = _LEN.unpack_from(rest)
            shared_slot = rest[4 : 4 + slen]
            (alen,) = _LEN.unpack_from(rest, 4 + slen)
            slot_a = rest[8 + slen : 8 + slen + alen]
            slot_b = rest[8 + slen + alen :]
            slots = {
                shared_label: shared_slot,
                label_a.decode("utf-8"): slot_a,
                label_b.decode("utf-8"): slot_b,
            }
            if len(slots) != 3 or set(slots) != allowed:
                raise LinkJoinError(
                    f"line labels {sorted(slots)} do not cover the output order"
                )
            parts = [id_a + b"," + id_b]
            for label in order:
                parts.append(sentinels[label])
                parts.append(slots[label])
            out.write(b"\t".join(parts) + b"\n")
            report.lines_emitted += 1

    report.lines_left = count_ab[0]
    report.lines_right = count_cb[0]
    report.spill_runs = stats.spill_runs
    return report
