"""
Tests for the CSV and JSON writers and the configuration hash.
"""

import json

import numpy as np

from brwtie_lab.models import CheckResult
from brwtie_lab.reporting import (
    canonical_json,
    config_hash,
    read_csv,
    write_csv,
    write_json,
)


class TestConfigHash:
    """Test the canonical form and hash of configurations."""

    def test_key_order_does_not_matter(self):
        """Test that the hash ignores mapping order."""
        assert config_hash({"a": 1, "b": [1.5, 2]}) == config_hash(
            {"b": [1.5, 2], "a": 1}
        )

    def test_values_matter(self):
        """Test that a changed value changes the hash."""
        assert config_hash({"a": 1}) != config_hash({"a": 2})

    def test_numpy_and_models_are_plain(self):
        """Test that numpy scalars, arrays and models serialise."""
        check = CheckResult(name="x", passed=True, value=np.float64(0.5))
        text = canonical_json({"arr": np.arange(3), "check": check})

        document = json.loads(text)
        assert document["arr"] == [0, 1, 2]
        assert document["check"]["value"] == 0.5


class TestWriters:
    """Test the table and document writers."""

    def test_csv_header_and_precision(self, tmp_path):
        """Test the hash comment, the column line and full precision."""
        path = write_csv(
            tmp_path / "sub" / "table.csv",
            {"t": [0.0, 0.5], "v": [1.0 / 3.0, np.pi]},
            "abc123",
        )

        lines = path.read_text().splitlines()
        assert lines[0] == "# config_hash=abc123"
        assert lines[1] == "# t,v"
        table = read_csv(path)
        assert table.shape == (2, 2)
        assert table[1, 1] == np.pi

    def test_csv_is_reproducible(self, tmp_path):
        """Test that identical input produces identical bytes."""
        columns = {"x": np.linspace(0.0, 1.0, 7), "y": np.sin(np.arange(7.0))}
        first = write_csv(tmp_path / "a.csv", columns, "h").read_bytes()
        second = write_csv(tmp_path / "b.csv", columns, "h").read_bytes()
        assert first == second

    def test_json_non_finite_values(self, tmp_path):
        """Test that nan and infinities become valid JSON."""
        path = write_json(
            tmp_path / "doc.json",
            {"nan": float("nan"), "up": np.inf, "down": -np.inf},
            "feed",
        )

        document = json.loads(path.read_text())
        assert document == {
            "nan": None,
            "up": "inf",
            "down": "-inf",
            "config_hash": "feed",
        }

    def test_json_without_hash(self, tmp_path):
        """Test that no hash key is added when none is given."""
        document = json.loads(write_json(tmp_path / "d.json", {"a": 1}).read_text())
        assert document == {"a": 1}
