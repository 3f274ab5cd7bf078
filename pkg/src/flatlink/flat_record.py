"""Flat, single-line, non-recursive entity serialization.

One entity per line: ``uri TAB key TAB value TAB key TAB value ...``.
A key with n values contributes n adjacent (key, value) token pairs, so the
token stream stays strictly alternating and a single split plus one linear
scan recovers the record.  Literal values are wrapped in exactly two double
quotes (``""lexical""``); everything else is a URI reference.

Token escaping (bijective; applied to every token before it enters a line):

    \\   -> \\\\        tab -> \\t       newline -> \\n      CR -> \\r

and a ``\\s`` guard prefix is added when the escaped token would otherwise
collide with line structure, i.e. when it

  * matches the reserved sentinel shape ``<label>-instance`` used to delimit
    record slots inside linkage lines, or
  * starts with two double quotes, which would mimic the literal wrapper.

``unescape_token(escape_token(x)) == x`` for every string x.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import FlatRecordError
from .rdf_ingest import LITERAL, URI, ObjectValue, Triple

# Join labels are validated against this alphabet, so every registered
# sentinel token falls inside SENTINEL_SHAPE and the escape guard below is
# sufficient to keep record tokens sentinel-free.
LABEL_RE = re.compile(r"[a-z0-9][a-z0-9_.-]*")
SENTINEL_SUFFIX = "-instance"
SENTINEL_SHAPE = re.compile(r"[a-z0-9][a-z0-9_.-]*-instance")


@dataclass
class EntityRecord:
    """An entity's full information set; serializes to exactly one line."""

    uri: str
    properties: dict[str, list[ObjectValue]]


def _needs_guard(escaped: str) -> bool:
    if SENTINEL_SHAPE.fullmatch(escaped):
        return True
    return escaped.startswith('""')


def escape_token(raw: str) -> str:
    esc = (
        raw.replace("\\", "\\\\")
        .replace("\t", "\\t")
        .replace("\n", "\\n")
        .replace("\r", "\\r")
    )
    if _needs_guard(esc):
        esc = "\\s" + esc
    return esc


def unescape_token(token: str) -> str:
    if "\\" not in token:
        return token
    out: list[str] = []
    i = 0
    n = len(token)
    while i < n:
        c = token[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= n:
            raise FlatRecordError("dangling escape at end of token")
        nxt = token[i + 1]
        if nxt == "\\":
            out.append("\\")
        elif nxt == "t":
            out.append("\t")
        elif nxt == "n":
            out.append("\n")
        elif nxt == "r":
            out.append("\r")
        elif nxt == "s":
            pass  # guard marker, contributes nothing
        else:
            raise FlatRecordError(f"unknown escape code \\{nxt}")
        i += 2
    return "".join(out)


def _value_token(value: ObjectValue) -> str:
    if value.kind == LITERAL:
        return '""' + escape_token(value.lexical) + '""'
    return escape_token(value.lexical)


def _parse_value_token(token: str) -> ObjectValue:
    if len(token) >= 4 and token.startswith('""') and token.endswith('""'):
        return ObjectValue(LITERAL, unescape_token(token[2:-2]))
    return ObjectValue(URI, unescape_token(token))


def serialize_record(rec: EntityRecord) -> str:
    """Emit the one-line form; token count is 1 + 2 * (number of values)."""
    tokens = [escape_token(rec.uri)]
    for key, values in rec.properties.items():
        ekey = escape_token(key)
        for value in values:
            tokens.append(ekey)
            tokens.append(_value_token(value))
    return "\t".join(tokens)


def parse_record(line: str) -> EntityRecord:
    """Single-pass, non-recursive inverse of serialize_record.

    Repeats of a key (adjacent or not) aggregate into one ordered value
    list; key order is first occurrence in the line.
    """
    tokens = line.split("\t")
    if len(tokens) % 2 == 0:
        raise FlatRecordError(f"even token count ({len(tokens)})")
    if len(tokens) == 1:
        raise FlatRecordError("record has no properties")
    uri = unescape_token(tokens[0])
    if not uri:
        raise FlatRecordError("empty record URI")
    properties: dict[str, list[ObjectValue]] = {}
    for i in range(1, len(tokens), 2):
        key = unescape_token(tokens[i])
        if not key:
            raise FlatRecordError(f"empty key at token {i}")
        properties.setdefault(key, []).append(_parse_value_token(tokens[i + 1]))
    return EntityRecord(uri, properties)


def record_from_triples(subject: str, triples: list[Triple]) -> EntityRecord:
    """Aggregate all triples of one subject into a record.

    Exact duplicate (predicate, object) pairs collapse to one; keys are
    ordered lexicographically, values in first-occurrence order.
    """
    if not triples:
        raise FlatRecordError("an entity must be subject of at least one triple")
    grouped: dict[str, list[ObjectValue]] = {}
    seen: set[tuple[str, ObjectValue]] = set()
    for t in triples:
        if t.subject != subject:
            raise FlatRecordError(
                f"triple subject {t.subject!r} does not match record subject {subject!r}"
            )
        pair = (t.predicate, t.object)
        if pair in seen:
            continue
        seen.add(pair)
        grouped.setdefault(t.predicate, []).append(t.object)
    return EntityRecord(subject, {k: grouped[k] for k in sorted(grouped)})


def record_to_triples(rec: EntityRecord) -> list[Triple]:
    """Flatten back to triples (used to check information-set equivalence)."""
    return [
        Triple(rec.uri, key, value)
        for key, values in rec.properties.items()
        for value in values
    ]
