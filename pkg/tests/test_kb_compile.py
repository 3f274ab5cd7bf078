import collections

import pytest

from flatlink.engine import ExecConfig, JobStats
from flatlink.errors import FlatlinkError
from flatlink.flat_record import parse_record
from flatlink.kb_compile import KbSpec, compile_kb
from flatlink.rdf_ingest import URI, ObjectValue, Triple

from conftest import synth_triples, write_nt


def cfg_for(tmp_path, **kw) -> ExecConfig:
    kw.setdefault("partitions", 4)
    kw.setdefault("memory_budget_bytes", 1 << 20)
    kw.setdefault("spill_dir", str(tmp_path / "spill"))
    return ExecConfig(**kw)


def read_lines(path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def group_oracle(triples) -> dict[str, set]:
    """Independent hash group-by: subject -> deduplicated (p, o) set."""
    grouped = collections.defaultdict(set)
    for t in triples:
        grouped[t.subject].add((t.predicate, t.object))
    return dict(grouped)


def flatten_lines(path) -> dict[str, set]:
    out = {}
    for line in read_lines(path):
        rec = parse_record(line)
        assert rec.uri not in out, "subject appears on two lines"
        out[rec.uri] = {(k, v) for k, values in rec.properties.items() for v in values}
    return out


def test_two_singleton_entities_sorted(tmp_path):
    triples = [
        Triple("http://x/b", "http://x/q", ObjectValue(URI, "http://x/y")),
        Triple("http://x/a", "http://x/p", ObjectValue(URI, "http://x/x")),
    ]
    src = tmp_path / "kb.nt"
    write_nt(src, triples)
    out = tmp_path / "kb.ents"
    report = compile_kb(KbSpec("kb", [str(src)], str(out)), cfg_for(tmp_path))
    lines = read_lines(out)
    assert len(lines) == 2
    assert parse_record(lines[0]).uri == "http://x/a"
    assert parse_record(lines[1]).uri == "http://x/b"
    assert report.entities == 2
    assert report.triples == 2


def test_multi_file_subjects_merge(tmp_path):
    # the same subject split over two input files folds into one record
    one = tmp_path / "one.nt"
    two = tmp_path / "two.nt"
    write_nt(one, [Triple("http://x/a", "http://x/p", ObjectValue(URI, "http://x/1"))])
    write_nt(two, [Triple("http://x/a", "http://x/q", ObjectValue(URI, "http://x/2"))])
    out = tmp_path / "kb.ents"
    report = compile_kb(KbSpec("kb", [str(one), str(two)], str(out)), cfg_for(tmp_path))
    lines = read_lines(out)
    assert len(lines) == 1
    rec = parse_record(lines[0])
    assert set(rec.properties) == {"http://x/p", "http://x/q"}
    assert report.entities == 1


def test_compile_matches_group_by_oracle(tmp_path, rng):
    triples = synth_triples(rng, "big", 10_000, 1000)
    src = tmp_path / "kb.nt"
    write_nt(src, triples)
    out = tmp_path / "kb.ents"
    report = compile_kb(
        KbSpec("kb", [str(src)], str(out)), cfg_for(tmp_path, memory_budget_bytes=64 * 1024)
    )
    expected = group_oracle(triples)
    got = flatten_lines(out)
    assert set(got) == set(expected)
    for subject in expected:
        assert got[subject] == expected[subject]
    assert report.entities == len(expected)


def test_entity_iff_subject(tmp_path):
    # URIs appearing only as objects must produce no line
    triples = [
        Triple("http://x/s", "http://x/p", ObjectValue(URI, "http://x/only-object")),
    ]
    src = tmp_path / "kb.nt"
    write_nt(src, triples)
    out = tmp_path / "kb.ents"
    compile_kb(KbSpec("kb", [str(src)], str(out)), cfg_for(tmp_path))
    subjects = {parse_record(line).uri for line in read_lines(out)}
    assert subjects == {"http://x/s"}


def test_output_sorted_and_deterministic(tmp_path, rng):
    triples = synth_triples(rng, "kb", 2000, 300)
    src = tmp_path / "kb.nt"
    write_nt(src, triples)
    out1 = tmp_path / "a.ents"
    out2 = tmp_path / "b.ents"
    compile_kb(KbSpec("kb", [str(src)], str(out1)), cfg_for(tmp_path, memory_budget_bytes=16 * 1024))
    compile_kb(KbSpec("kb", [str(src)], str(out2)), cfg_for(tmp_path, partitions=9))
    b1 = out1.read_bytes()
    assert b1 == out2.read_bytes()
    subjects = [parse_record(line).uri for line in read_lines(out1)]
    assert subjects == sorted(subjects)


def test_malformed_lines_counted_not_fatal(tmp_path):
    src = tmp_path / "kb.nt"
    src.write_text(
        "<http://x/a> <http://x/p> <http://x/o> .\n"
        "not a triple\n"
        '<http://x/a> <http://x/q> "v" .\n',
        encoding="utf-8",
    )
    out = tmp_path / "kb.ents"
    report = compile_kb(KbSpec("kb", [str(src)], str(out)), cfg_for(tmp_path))
    assert report.triples == 2
    assert report.skipped_lines == 1
    assert report.entities == 1


def test_empty_kb_is_an_error(tmp_path):
    src = tmp_path / "kb.nt"
    src.write_text("# nothing here\n", encoding="utf-8")
    out = tmp_path / "kb.ents"
    with pytest.raises(FlatlinkError, match="no parseable triples"):
        compile_kb(KbSpec("kb", [str(src)], str(out)), cfg_for(tmp_path))
    assert not out.exists()


def test_bad_label_rejected(tmp_path):
    with pytest.raises(FlatlinkError, match="label"):
        compile_kb(KbSpec("DBpedia", ["x.nt"], "y"), cfg_for(tmp_path))
    with pytest.raises(FlatlinkError, match="label"):
        compile_kb(KbSpec("has space", ["x.nt"], "y"), cfg_for(tmp_path))


def test_spills_observed_under_small_budget(tmp_path, rng):
    triples = synth_triples(rng, "kb", 5000, 500)
    src = tmp_path / "kb.nt"
    write_nt(src, triples)
    out = tmp_path / "kb.ents"
    stats = JobStats()
    report = compile_kb(
        KbSpec("kb", [str(src)], str(out)),
        cfg_for(tmp_path, memory_budget_bytes=8 * 1024, partitions=2),
        stats=stats,
    )
    assert report.spill_runs >= 1
    assert stats.spill_runs == report.spill_runs
    # spilling must not change the result
    assert flatten_lines(out) == group_oracle(triples)
