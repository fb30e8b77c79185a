import csv

from sadi.metrics import MetricReport
from sadi.report import distance_table, markdown, pixel_table, write_reports

DISTANCES = ("jensen_shannon", "kullback_leibler", "wasserstein", "hist_intersection", "hist_correlation")


def _report(mse, correlation=0.5):
    values = {k: 0.1 for k in DISTANCES}
    values["hist_correlation"] = correlation
    return MetricReport(mse=mse, ve=0.25, depth=dict(values), surface=dict(values))


def test_pixel_table_formats():
    columns, body = pixel_table([("CA", _report(12.3456)), ("Proposal", _report(0.0))])
    assert columns == ["", "MSE", "VE"]
    assert body == [["CA", "12.346", "0.2500"], ["Proposal", "0.000", "0.2500"]]


def test_distance_table_columns_and_undefined():
    columns, body = distance_table([("CA", _report(1.0, correlation=None))])
    assert columns[:3] == ["", "Jensen-Shannon Depth", "Jensen-Shannon Surface"]
    assert columns[-1] == "Hist. Correlation Surface"
    assert len(columns) == 11
    assert body[0][-2:] == ["undefined", "undefined"]


def test_write_reports(tmp_path):
    header = {"train": {"steps": 3, "seed": 0}, "eval": {"region": "hole"}}
    paths = write_reports(tmp_path / "out", [("CA", _report(2.0))], header)
    assert set(paths) == {"pixel_errors.csv", "pixel_errors.md",
                          "distribution_distances.csv", "distribution_distances.md"}
    lines = paths["pixel_errors.csv"].read_text().splitlines()
    assert lines[:3] == ["# train.steps=3", "# train.seed=0", "# eval.region=hole"]
    rows = list(csv.reader(line for line in lines if not line.startswith("#")))
    assert rows[0] == ["config", "MSE", "VE"]
    assert rows[1] == ["CA", "2.000", "0.2500"]
    md = paths["distribution_distances.md"].read_text()
    assert "<!-- train.steps=3 -->" in md
    assert "| CA | 0.1000 |" in md


def test_markdown_without_header():
    text = markdown(["", "MSE"], [["CA", "1.0"]], title="Errors")
    assert text == "### Errors\n\n|  | MSE |\n|---|---|\n| CA | 1.0 |\n"
