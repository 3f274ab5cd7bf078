"""Shared synthetic-data builders for the test suite."""

from __future__ import annotations

import random

import pytest

from flatlink.rdf_ingest import LITERAL, URI, ObjectValue, Triple

PREDICATES = [
    "http://x.org/p/name",
    "http://x.org/p/age",
    "http://x.org/p/knows",
    "http://x.org/p/hasBrother",
    "http://www.w3.org/1999/02/22-rdf-syntax-ns#type",
]

TYPES = [
    "http://x.org/t/FootballPlayer",
    "http://x.org/t/CivilParish",
    "http://x.org/t/Band",
]


def subject_uri(kb: str, i: int) -> str:
    return f"http://{kb}.org/e{i}"


def random_object(rng: random.Random) -> ObjectValue:
    if rng.random() < 0.4:
        return ObjectValue(LITERAL, rng.choice(["32", "Joan Crax", "a b", "x,y", ""]))
    return ObjectValue(URI, f"http://obj.org/o{rng.randrange(500)}")


def synth_triples(
    rng: random.Random,
    kb: str,
    n_triples: int,
    n_subjects: int,
    typed: bool = False,
) -> list[Triple]:
    """Random triples over a fixed subject pool; every subject gets >= 1."""
    triples = []
    for s in range(n_subjects):
        subject = subject_uri(kb, s)
        triples.append(Triple(subject, rng.choice(PREDICATES), random_object(rng)))
        if typed:
            triples.append(
                Triple(
                    subject,
                    "http://www.w3.org/1999/02/22-rdf-syntax-ns#type",
                    ObjectValue(URI, rng.choice(TYPES)),
                )
            )
    while len(triples) < n_triples:
        subject = subject_uri(kb, rng.randrange(n_subjects))
        triples.append(Triple(subject, rng.choice(PREDICATES), random_object(rng)))
    rng.shuffle(triples)
    return triples


def render_nt_lines(triples: list[Triple]) -> list[str]:
    from flatlink.rdf_ingest import render_triple

    return [render_triple(t) for t in triples]


def write_nt(path, triples: list[Triple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in render_nt_lines(triples):
            fh.write(line + "\n")


@pytest.fixture
def rng() -> random.Random:
    return random.Random(0xF1A7)
