import hashlib
import os
import shutil

import pytest

from flatlink.cli import main, parse_pipeline_config
from flatlink.errors import ConfigError

DEMO = os.path.join(os.path.dirname(__file__), os.pardir, "demo")


def run(capsys, *argv) -> tuple[int, str, str]:
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def demo_dir(tmp_path):
    dest = tmp_path / "demo"
    shutil.copytree(DEMO, dest)
    return dest


def test_compile_subcommand(capsys, demo_dir, tmp_path):
    out = tmp_path / "fb.ents"
    code, stdout, stderr = run(
        capsys, "compile", "--label", "freebase",
        "--in", str(demo_dir / "freebase.nt"), "--out", str(out),
    )
    assert code == 0
    assert "entities=8" in stdout
    assert stderr.startswith("config: cmd=compile")
    assert out.exists()


def test_compile_multiple_inputs_comma_separated(capsys, demo_dir, tmp_path):
    out = tmp_path / "db.ents"
    code, stdout, _ = run(
        capsys, "compile", "--label", "dbpedia",
        "--in", f"{demo_dir}/dbpedia_infobox.nt,{demo_dir}/dbpedia_types.nt",
        "--out", str(out),
    )
    assert code == 0
    assert "entities=7" in stdout


def test_join2_subcommand(capsys, demo_dir, tmp_path):
    fb = tmp_path / "fb.ents"
    db = tmp_path / "db.ents"
    run(capsys, "compile", "--label", "freebase", "--in", str(demo_dir / "freebase.nt"),
        "--out", str(fb))
    run(capsys, "compile", "--label", "dbpedia",
        "--in", f"{demo_dir}/dbpedia_infobox.nt,{demo_dir}/dbpedia_types.nt",
        "--out", str(db))
    out = tmp_path / "fd.links"
    code, stdout, _ = run(
        capsys, "join2", "--left", str(fb), "--right", str(db),
        "--gt", str(demo_dir / "gt_fd.tsv"), "--labels", "freebase,dbpedia",
        "--out", str(out),
    )
    assert code == 0
    assert "lines_emitted=6" in stdout
    assert out.read_text(encoding="utf-8").startswith("fd-1\tfreebase-instance\t")


def test_flag_order_independence(capsys, demo_dir, tmp_path):
    out1 = tmp_path / "a.ents"
    out2 = tmp_path / "b.ents"
    run(capsys, "compile", "--label", "yago", "--in", str(demo_dir / "yago.nt"),
        "--out", str(out1))
    run(capsys, "compile", "--out", str(out2), "--in", str(demo_dir / "yago.nt"),
        "--label", "yago")
    assert out1.read_bytes() == out2.read_bytes()


def test_pipeline_runs_and_is_deterministic(capsys, tmp_path):
    hashes = []
    for round_dir in ("one", "two"):
        dest = tmp_path / round_dir
        shutil.copytree(DEMO, dest)
        code, stdout, _ = run(capsys, "pipeline", "--config", str(dest / "demo.cfg"))
        assert code == 0
        digest = {}
        for name in ("freebase.ents", "dbpedia.ents", "yago.ents",
                     "fd.links", "yd.links", "dfy.links"):
            digest[name] = hashlib.sha256((dest / "out" / name).read_bytes()).hexdigest()
        hashes.append(digest)
    assert hashes[0] == hashes[1]


def test_pipeline_outputs_validate_clean(capsys, demo_dir):
    code, _, _ = run(capsys, "pipeline", "--config", str(demo_dir / "demo.cfg"))
    assert code == 0
    for name, mode in (
        ("freebase.ents", "entity"),
        ("dbpedia.ents", "entity"),
        ("yago.ents", "entity"),
        ("fd.links", "link2"),
        ("yd.links", "link2"),
        ("dfy.links", "link3"),
    ):
        code, stdout, _ = run(
            capsys, "validate", "--in", str(demo_dir / "out" / name),
            "--mode", mode, "--machine",
        )
        assert code == 0, f"{name}: {stdout}"
        assert "violations=0" in stdout


def test_validate_exit_code_nonzero_on_violation(capsys, tmp_path):
    bad = tmp_path / "bad.ents"
    bad.write_text("uri\tkey-without-value\n", encoding="utf-8")
    code, stdout, _ = run(capsys, "validate", "--in", str(bad), "--mode", "entity")
    assert code == 1
    assert "violations: 1" in stdout


def test_sample_and_filter_and_stats(capsys, demo_dir, tmp_path):
    run(capsys, "pipeline", "--config", str(demo_dir / "demo.cfg"))
    links = demo_dir / "out" / "fd.links"

    sampled = tmp_path / "sample.links"
    code, stdout, _ = run(
        capsys, "sample", "--in", str(links), "--out", str(sampled),
        "-n", "3", "--seed", "42",
    )
    assert code == 0
    assert "lines_written=3" in stdout

    filtered = tmp_path / "players.links"
    code, stdout, _ = run(
        capsys, "filter-type", "--in", str(links), "--out", str(filtered),
        "--mode", "link2", "--type-uri", "http://dbpedia.org/ontology/FootballPlayer",
        "--side", "second",
    )
    assert code == 0
    assert "lines_written=2" in stdout  # Alex Park and Eli Vega

    code, stdout, _ = run(
        capsys, "stats", "--in", str(links), "--mode", "link2", "--machine",
    )
    assert code == 0
    assert "lines=6" in stdout
    assert f"bytes={links.stat().st_size}" in stdout


def test_error_is_single_line(capsys, tmp_path):
    code, stdout, stderr = run(
        capsys, "compile", "--label", "BAD LABEL", "--in", "x.nt",
        "--out", str(tmp_path / "o"),
    )
    assert code == 2
    err_lines = [l for l in stderr.splitlines() if l.startswith("error: ")]
    assert len(err_lines) == 1


def test_missing_input_reports_error(capsys, tmp_path):
    code, _, stderr = run(
        capsys, "compile", "--label", "kb", "--in", str(tmp_path / "absent.nt"),
        "--out", str(tmp_path / "o"),
    )
    assert code == 2
    assert "error: " in stderr


def test_env_overrides(capsys, demo_dir, tmp_path, monkeypatch):
    spill = tmp_path / "custom-spill"
    monkeypatch.setenv("FLATLINK_SPILL_DIR", str(spill))
    monkeypatch.setenv("FLATLINK_PARALLELISM", "2")
    out = tmp_path / "fb.ents"
    code, _, stderr = run(
        capsys, "compile", "--label", "freebase",
        "--in", str(demo_dir / "freebase.nt"), "--out", str(out),
    )
    assert code == 0
    assert f"spill_dir={spill}" in stderr
    assert "parallelism=2" in stderr
    assert spill.is_dir()


def test_flag_beats_env(capsys, demo_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("FLATLINK_PARALLELISM", "2")
    out = tmp_path / "fb.ents"
    _, _, stderr = run(
        capsys, "compile", "--label", "freebase",
        "--in", str(demo_dir / "freebase.nt"), "--out", str(out),
        "--parallelism", "3",
    )
    assert "parallelism=3" in stderr


def test_config_parser_rejects_bad_files(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("nonsense line\n", encoding="utf-8")
    with pytest.raises(ConfigError, match="key=value"):
        parse_pipeline_config(str(cfg))

    cfg.write_text("unknown.key=1\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        parse_pipeline_config(str(cfg))

    cfg.write_text(
        "kb1.label=a\nkb1.inputs=x\nkb1.out=o1\n"
        "kb2.label=a\nkb2.inputs=y\nkb2.out=o2\n"
        "link1.gt=g\nlink1.gt_format=tsv-pairs\nlink1.out=o3\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="unique"):
        parse_pipeline_config(str(cfg))

    cfg.write_text(
        "kb1.label=a\nkb1.inputs=x\nkb1.out=same\n"
        "kb2.label=b\nkb2.inputs=y\nkb2.out=same\n"
        "link1.gt=g\nlink1.gt_format=tsv-pairs\nlink1.out=o3\n",
        encoding="utf-8",
    )
    with pytest.raises(ConfigError, match="distinct"):
        parse_pipeline_config(str(cfg))


def test_config_relative_paths_resolve_to_config_dir(tmp_path):
    sub = tmp_path / "nested"
    sub.mkdir()
    cfg = sub / "p.cfg"
    cfg.write_text(
        "kb1.label=a\nkb1.inputs=x.nt\nkb1.out=out/a.ents\n"
        "kb2.label=b\nkb2.inputs=y.nt\nkb2.out=out/b.ents\n"
        "link1.gt=gt.tsv\nlink1.gt_format=tsv-pairs\nlink1.out=out/ab.links\n",
        encoding="utf-8",
    )
    pipe = parse_pipeline_config(str(cfg))
    assert pipe.kbs[0].input_paths == [str(sub / "x.nt")]
    assert pipe.links[0]["out"] == str(sub / "out" / "ab.links")
