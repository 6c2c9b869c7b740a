import json
import xml.etree.ElementTree as ET

import pytest

from impmaxwell.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from impmaxwell.errors import InvalidArgumentError
from impmaxwell.study import (
    CSV_HEADER,
    StudyConfig,
    StudyReport,
    StudyRow,
    emit_csv,
    read_csv,
    report_to_svg,
    run_study,
)

SVG_NS = "{http://www.w3.org/2000/svg}"


def write_config(tmp_path, **kw):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(kw), encoding="utf-8")
    return str(path)


def row(k=10.0, p=0, level=0, nl=4.0, err=0.5):
    return StudyRow("cube-smooth", k, p, level, 0.5, 100, nl, err, err)


def test_study_three_levels(tmp_path):
    cfg = write_config(tmp_path, case="cube-smooth", k=[10], p=[0], levels=3, base_n=1)
    assert main(["study", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "study.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == CSV_HEADER
    assert len(lines) == 4
    assert (tmp_path / "study.svg").exists()


def test_study_product_rows():
    report = run_study(StudyConfig("cube-smooth", [10, 20], [0, 1], levels=2, base_n=1, best_approx=False))
    assert len(report.rows) == 8
    assert {(r.k, r.p, r.level) for r in report.rows} == {
        (k, p, lv) for k in (10, 20) for p in (0, 1) for lv in (0, 1)
    }


def test_const_field_sanity():
    report = run_study(StudyConfig("const-field", [3.0, 7.0], [0, 1], levels=2, base_n=1))
    assert report.ok
    assert all(r.rel_err_paper_norm <= 1e-9 for r in report.rows)
    assert all(r.best_err_imp <= 1e-10 for r in report.rows)


def test_missing_diagnostics_are_empty(tmp_path):
    report = run_study(StudyConfig("const-field", [2.0], [0], levels=1, base_n=1, best_approx=False))
    emit_csv(report, tmp_path / "s.csv", timing=False)
    fields = (tmp_path / "s.csv").read_text().splitlines()[1].split(",")
    named = dict(zip(CSV_HEADER.split(","), fields))
    assert named["best_err_imp"] == named["gamma_kh"] == named["delta_k"] == named["runtime_s"] == ""
    assert named["solver_iters"] == "0"


def test_diagnostic_columns_filled():
    report = run_study(StudyConfig("cube-smooth", [4.0], [0], levels=1, base_n=1, inf_sup=True, delta_k=True))
    r = report.rows[0]
    assert 0 < r.gamma_kh <= 1 + 1e-8
    assert r.delta_k > 0 and r.quasi_ratio >= 1 - 1e-8


def test_csv_header_only(tmp_path):
    path = emit_csv(StudyReport(), tmp_path / "e.csv")
    assert path.read_bytes() == (CSV_HEADER + "\n").encode()


def test_csv_round_trip(tmp_path):
    report = run_study(StudyConfig("cube-smooth", [5.0], [0, 1], levels=2, base_n=1, delta_k=True))
    path = emit_csv(report, tmp_path / "r.csv")
    raw = path.read_bytes()
    assert b"\r" not in raw and len(raw.splitlines()) == 5
    again = read_csv(path)
    assert again.rows == report.rows
    assert emit_csv(again, tmp_path / "r2.csv").read_bytes() == raw


def test_csv_infinite_ratio_round_trip(tmp_path):
    r = row()
    r.quasi_ratio = float("inf")
    rep = StudyReport([r])
    assert read_csv(emit_csv(rep, tmp_path / "i.csv")).rows == rep.rows


def test_read_csv_rejects_header(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidArgumentError):
        read_csv(bad)


def polylines(svg):
    root = ET.fromstring(svg)
    out = []
    for pl in root.iter(SVG_NS + "polyline"):
        out.append([tuple(map(float, pt.split(","))) for pt in pl.get("points").split()])
    return root, out


def test_svg_structure():
    rep = StudyReport([row(level=i, nl=4.0 * 2**i, err=0.5 / 3**i) for i in range(3)])
    svg = report_to_svg(rep)
    assert "<script" not in svg
    root, lines = polylines(svg)
    assert root.get("version") == "1.1"
    assert len(lines) == 1 and len(lines[0]) == 3
    ys = [y for _, y in lines[0]]
    assert ys[0] < ys[1] < ys[2]
    xs = [x for x, _ in lines[0]]
    assert xs[0] < xs[1] < xs[2]


def test_svg_legend_entries():
    rep = StudyReport([row(k=k, level=i, nl=2.0 + i, err=0.3 / (i + 1)) for k in (10.0, 20.0) for i in range(2)])
    svg = report_to_svg(rep)
    root, lines = polylines(svg)
    legends = [g for g in root.iter(SVG_NS + "g") if g.get("class") == "legend"]
    assert len(legends) == 2 and len(lines) == 2


def test_svg_degenerate(caplog):
    svg = report_to_svg(StudyReport([row(err=0.0)]))
    _, lines = polylines(svg)
    assert lines == []
    assert "<rect" in svg
    assert any("zero" in rec.message for rec in caplog.records)


def test_svg_empty_report():
    with pytest.raises(InvalidArgumentError):
        report_to_svg(StudyReport())


def test_determinism_no_timing(tmp_path):
    cfg = write_config(tmp_path, case="cube-smooth", k=[6], p=[0, 1], levels=2, base_n=1, delta_k=True)
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["study", "--config", cfg, "--out", str(out), "--no-timing", "--threads", "1"]) == EXIT_OK
        outs.append((out / "study.csv").read_bytes())
    assert outs[0] == outs[1]


def test_plot_subcommand(tmp_path):
    cfg = write_config(tmp_path, case="cube-smooth", k=[6], p=[0], levels=2, base_n=1)
    main(["study", "--config", cfg, "--out", str(tmp_path)])
    (tmp_path / "study.svg").unlink()
    assert main(["plot", str(tmp_path / "study.csv")]) == EXIT_OK
    assert (tmp_path / "study.svg").exists()


def test_infsup_subcommand(tmp_path, capsys):
    cfg = write_config(tmp_path, case="cube-smooth", k=[1, 4], p=[0], levels=1, base_n=1)
    assert main(["infsup", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    lines = (tmp_path / "infsup.csv").read_text().splitlines()
    assert lines[0] == "n,k,p,variant,gamma_kh" and len(lines) == 5


def test_verify_subcommand(capsys):
    assert main(["verify", "--seed", "3"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 4 and all(line.startswith("PASS") for line in out)


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["study"],
    ["study", "--solver", "cg"],
    ["study", "--config", "/nonexistent/config.json"],
    ["plot"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == EXIT_USAGE


@pytest.mark.parametrize("bad", [
    {"case": "sphere", "k": [1], "p": [0]},
    {"case": "cube-smooth", "k": [], "p": [0]},
    {"case": "cube-smooth", "k": [0.5], "p": [0]},
    {"case": "cube-smooth", "k": [1], "p": [4]},
    {"case": "cube-smooth", "k": [1], "p": [0], "levels": 0},
    {"case": "cube-smooth", "k": [1], "p": [0], "tol": 2.0},
    {"case": "cube-smooth", "k": [1], "p": [0], "colour": "red"},
])
def test_invalid_config(tmp_path, bad, capsys):
    assert main(["study", "--config", write_config(tmp_path, **bad)]) == EXIT_USAGE


def test_malformed_json(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    assert main(["study", "--config", str(path)]) == EXIT_USAGE


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    cfg = write_config(tmp_path, case="const-field", k=[2], p=[0], levels=1, base_n=1)
    assert main(["study", "--config", cfg, "--out", str(blocker / "sub")]) == EXIT_NUMERIC


def test_failed_cell_exit_code(tmp_path, capsys):
    # gmres with ILU0 on a tiny budget cannot meet 1e-15; the cell fails and the study continues
    cfg = write_config(tmp_path, case="cube-smooth", k=[10], p=[0], levels=[1, 2], base_n=1,
                       solver="gmres", tol=1e-15)
    code = main(["study", "--config", cfg, "--out", str(tmp_path)])
    assert code == EXIT_NUMERIC
    assert "failed" in capsys.readouterr().err
