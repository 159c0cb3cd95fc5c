"""
Tests for canonical report emission.
"""

import json

import pandas as pd
import pytest

from src import __version__
from src.core.errors import OutputError, ParseError
from src.models.schemas import Report
from src.services.report_service import (
    canonical_json,
    emit_report,
    load_report,
    write_curve_csv,
)


@pytest.fixture
def report():
    return Report(
        command="bench",
        inputs={"what": "max", "instance": "a.json"},
        results={"value": 0.8000000000000002, "order": (0, 1), "ratio": float("nan")},
        flags=["note"],
    )


class TestEmission:
    """Test the canonical JSON form."""

    def test_byte_identical(self, report):
        assert canonical_json(report) == canonical_json(report.model_copy(deep=True))

    def test_layout(self, report):
        text = canonical_json(report)
        assert text.endswith("}\n")
        doc = json.loads(text)
        assert list(doc) == sorted(doc)
        assert doc["results"]["value"] == 0.8
        assert doc["results"]["order"] == [0, 1]
        assert doc["results"]["ratio"] == "nan"
        assert doc["version"] == __version__

    def test_emit_to_file(self, tmp_path, report):
        path = tmp_path / "reports" / "bench.json"
        text = emit_report(report, path)
        assert path.read_text() == text
        loaded = load_report(path)
        assert loaded.command == "bench"
        assert loaded.results["value"] == 0.8

    def test_emit_without_path(self, report):
        assert emit_report(report) == canonical_json(report)

    def test_unwritable_path(self, tmp_path, report):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(OutputError):
            emit_report(report, blocker / "r.json")


class TestLoadReport:
    """Test reading reports back."""

    def test_missing(self, tmp_path):
        with pytest.raises(OutputError):
            load_report(tmp_path / "none.json")

    def test_not_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(ParseError):
            load_report(path)

    def test_wrong_schema(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"inputs": {}}))
        with pytest.raises(ParseError, match="schema"):
            load_report(path)


class TestCurveCsv:
    """Test the curve writer."""

    def test_write(self, tmp_path):
        frame = pd.DataFrame({"t": [0.0, 0.5], "y": [1.0, 1 / 3]})
        path = write_curve_csv(frame, tmp_path / "y.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "t,y"
        assert lines[2] == "0.5,0.333333333333"
