"""Criterion: figures render from real experiment CSVs; bad schemas are
rejected with a nonzero exit."""

import subprocess
import sys
from pathlib import Path

import pytest

from streamalloc_plots.cli import main as plot_main
from streamalloc_plots.render import PlotSpec, SchemaError, read_results, render


@pytest.fixture(scope="module")
def result_csvs(tmp_path_factory):
    """Small but real runs of the three experiments via the primary CLI."""
    root = tmp_path_factory.mktemp("results")
    runs = {
        "fig2a": ["fig2a", "--n", "10,15", "--h", "0.6,0.8", "--T", "400",
                   "--replications", "2"],
        "fig2b": ["fig2b", "--n", "10,15", "--h", "0.4", "--T", "400",
                   "--replications", "2", "--w", "8"],
        "regret": ["regret", "--T", "4000", "--replications", "3"],
    }
    paths = {}
    for kind, args in runs.items():
        out = root / kind
        proc = subprocess.run(
            [sys.executable, "-m", "streamalloc.cli", *args, "--out", str(out)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        paths[kind] = out / "results.csv"
    return paths


def test_renders_all_three_kinds(result_csvs, tmp_path):
    for kind, csv in result_csvs.items():
        out = tmp_path / f"{kind}.png"
        rendered = render(PlotSpec(csv, kind, out))
        assert rendered.exists() and rendered.stat().st_size > 0


def test_cli_renders(result_csvs, tmp_path):
    out = tmp_path / "fig2a.png"
    rc = plot_main(
        ["--kind", "fig2a", "--in", str(result_csvs["fig2a"]), "--out", str(out)]
    )
    assert rc == 0
    assert out.exists()


def test_rendering_is_reproducible(result_csvs, tmp_path):
    a = render(PlotSpec(result_csvs["fig2b"], "fig2b", tmp_path / "a.png"))
    b = render(PlotSpec(result_csvs["fig2b"], "fig2b", tmp_path / "b.png"))
    assert a.read_bytes() == b.read_bytes()


def test_schema_mismatch_rejected(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(SchemaError):
        read_results(bad)
    rc = plot_main(["--kind", "fig2a", "--in", str(bad), "--out", str(tmp_path / "x.png")])
    assert rc != 0
    assert not (tmp_path / "x.png").exists()


def test_missing_schema_comment_rejected(tmp_path, result_csvs):
    stripped = tmp_path / "stripped.csv"
    lines = [
        ln
        for ln in result_csvs["fig2a"].read_text().splitlines()
        if not ln.startswith("#")
    ]
    stripped.write_text("\n".join(lines) + "\n")
    rc = plot_main(
        ["--kind", "fig2a", "--in", str(stripped), "--out", str(tmp_path / "y.png")]
    )
    assert rc == 1


def test_empty_csv_rejected(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    rc = plot_main(["--kind", "regret", "--in", str(empty), "--out", str(tmp_path / "z.png")])
    assert rc != 0


def test_unknown_kind_rejected(result_csvs, tmp_path):
    with pytest.raises(ValueError):
        PlotSpec(result_csvs["fig2a"], "fig99", tmp_path / "q.png")
