"""Command line subcommands and exit codes."""

import csv
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from bhshader import starfield, tables
from bhshader.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERIFY, main

SMALL_FLAT = ["--flat", "--no-galaxy", "--no-disc", "--no-bloom", "--width", "24",
              "--height", "16", "--starmap-size", "32", "--catalog-count", "500"]


def test_gen_catalog(tmp_path, capsys):
    out = tmp_path / "cat.txt"
    assert main(["gen-catalog", "--seed", "4", "--count", "300", "-o", str(out)]) == EXIT_OK
    assert "300 stars" in capsys.readouterr().out
    catalog = starfield.load_catalog(out)
    assert len(catalog) == 300
    again = tmp_path / "again.txt"
    main(["gen-catalog", "--seed", "4", "--count", "300", "-o", str(again)])
    assert out.read_bytes() == again.read_bytes()


def test_render_flat_frame(tmp_path):
    out = tmp_path / "img" / "frame.png"
    assert main(["render", *SMALL_FLAT, "--output", str(out)]) == EXIT_OK
    img = np.asarray(Image.open(out))
    assert img.shape == (16, 24, 3) and img.any()


def test_animate_numbers_frames(tmp_path):
    out = tmp_path / "anim.png"
    code = main(["animate", *SMALL_FLAT, "--frame-end", "2", "--no-hdr", "--output", str(out)])
    assert code == EXIT_OK
    assert sorted(p.name for p in tmp_path.iterdir()) == ["anim_0000.png", "anim_0001.png"]


@pytest.mark.parametrize("text", ["bogus_key = 3\n", "width = -5\n", "flat = perhaps\n"])
def test_bad_config_file_exits_2(tmp_path, text, capsys):
    cfg = tmp_path / "scene.cfg"
    cfg.write_text(text)
    assert main(["render", "--config", str(cfg)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_missing_inputs_exit_2(tmp_path):
    assert main(["render", "--config", str(tmp_path / "nope.cfg")]) == EXIT_CONFIG
    assert main(["verify", "--tables", str(tmp_path / "nope.bht")]) == EXIT_CONFIG
    bad = tmp_path / "bad.bht"
    bad.write_bytes(b"not a table")
    assert main(["verify", "--tables", str(bad), "--rays", "10"]) == EXIT_CONFIG


def test_precompute_small(tmp_path):
    out = tmp_path / "small.bht"
    code = main(["precompute", "--epsilon", "1e-3", "--d-size", "32", "--u-width", "16",
                 "--u-height", "8", "-o", str(out), "--color-output", ""])
    assert code == EXIT_OK
    tb = tables.load(out)
    assert tb.deflection.data.shape[:2] == (32, 32)
    assert tb.inverse_radius.data.shape[:2] == (8, 16)


def test_verify_coarse_tables_warns(tmp_path, coarse_tables, capsys):
    path = tmp_path / "coarse.bht"
    tables.save(coarse_tables, path)
    code = main(["verify", "--tables", str(path), "--rays", "200",
                 "--out-dir", str(tmp_path / "v")])
    assert code == EXIT_OK
    assert "warning: tables are coarser" in capsys.readouterr().out
    assert (tmp_path / "v").is_dir()


def test_verify_corrupted_tables_exit_3(tmp_path, geo_tables, capsys):
    bent = tables.GeodesicTables(
        tables.Table(geo_tables.deflection.table_id, geo_tables.deflection.data + 0.01,
                     geo_tables.deflection.epsilon),
        geo_tables.inverse_radius)
    path = tmp_path / "bent.bht"
    tables.save(bent, path)
    code = main(["verify", "--tables", str(path), "--rays", "300",
                 "--out-dir", str(tmp_path / "v")])
    assert code == EXIT_VERIFY
    assert "FAIL" in capsys.readouterr().out


def test_bench_writes_csv(tmp_path, table_files):
    out = tmp_path / "bench"
    code = main(["bench", "--width", "32", "--height", "18", "--starmap-size", "32",
                 "--catalog-count", "500", "--no-galaxy",
                 "--tables", str(table_files["tables"]),
                 "--color-table", str(table_files["color_table"]),
                 "--frames", "1", "--steps", "50", "--out-dir", str(out)])
    assert code == EXIT_OK
    with open(out / "bench.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["mode"] for r in rows] == ["tables", "raymarch-50"]
    assert (out / "bench.png").exists()


def test_entry_point_exit_code(tmp_path):
    cfg = tmp_path / "scene.cfg"
    cfg.write_text("no_such_key = 1\n")
    proc = subprocess.run([sys.executable, "-m", "bhshader.cli", "render", "--config", str(cfg)],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_CONFIG
