"""Serialization round-trips and parse error reporting."""

import pytest

from paretorank.core import LabelSource, RelevanceLevel
from paretorank.dataset_io import (
    DATASET_SCHEMA,
    DatasetParseError,
    SchemaVersionError,
    dataset_fingerprint,
    dumps_dataset,
    loads_dataset,
    read_dataset,
    read_truth,
    write_dataset,
    write_truth,
)


class TestDatasetRoundTrip:
    def test_write_read_write_identical(self, tiny_dataset, tmp_path):
        path1 = tmp_path / "a.jsonl"
        path2 = tmp_path / "b.jsonl"
        write_dataset(tiny_dataset, str(path1))
        reread = read_dataset(str(path1))
        write_dataset(reread, str(path2))
        assert path1.read_bytes() == path2.read_bytes()

    def test_round_trip_preserves_content(self, tiny_dataset, tmp_path):
        path = tmp_path / "d.jsonl"
        write_dataset(tiny_dataset, str(path))
        reread = read_dataset(str(path))
        assert reread.feature_dim == tiny_dataset.feature_dim
        assert reread.queries == tiny_dataset.queries
        assert reread.items == tiny_dataset.items
        assert reread.examples == tiny_dataset.examples

    def test_fingerprint_stable(self, tiny_dataset):
        assert dataset_fingerprint(tiny_dataset) == dataset_fingerprint(tiny_dataset)

    def test_fingerprint_sensitive_to_content(self, tiny_dataset, tmp_path):
        path = tmp_path / "d.jsonl"
        write_dataset(tiny_dataset, str(path))
        text = path.read_text()
        mutated = text.replace('"relevance":0.9', '"relevance":0.8')
        assert mutated != text
        other = loads_dataset(mutated)
        assert dataset_fingerprint(other) != dataset_fingerprint(tiny_dataset)

    def test_header_first_line(self, tiny_dataset):
        first = dumps_dataset(tiny_dataset).splitlines()[0]
        assert DATASET_SCHEMA in first

    def test_blank_lines_ignored(self, tiny_dataset):
        text = dumps_dataset(tiny_dataset)
        lines = text.splitlines()
        padded = "\n".join([lines[0], ""] + lines[1:]) + "\n"
        assert loads_dataset(padded).examples == tiny_dataset.examples


class TestDatasetParseErrors:
    def test_empty_file(self):
        with pytest.raises(DatasetParseError):
            loads_dataset("")

    def test_wrong_schema(self, tiny_dataset):
        text = dumps_dataset(tiny_dataset).replace(DATASET_SCHEMA, "other/v9")
        with pytest.raises(SchemaVersionError):
            loads_dataset(text)

    def test_invalid_json_reports_line(self, tiny_dataset):
        lines = dumps_dataset(tiny_dataset).splitlines()
        lines[2] = "{not json"
        with pytest.raises(DatasetParseError) as err:
            loads_dataset("\n".join(lines))
        assert err.value.line_no == 3

    def test_unknown_kind(self, tiny_dataset):
        lines = dumps_dataset(tiny_dataset).splitlines()
        lines.append('{"kind":"mystery"}')
        with pytest.raises(DatasetParseError):
            loads_dataset("\n".join(lines))

    def test_bad_source_value(self, tiny_dataset):
        text = dumps_dataset(tiny_dataset).replace(
            '"source":"behavioral"', '"source":"wishes"'
        )
        with pytest.raises(DatasetParseError):
            loads_dataset(text)

    def test_header_dim_mismatch(self, tiny_dataset):
        text = dumps_dataset(tiny_dataset).replace(
            '"feature_dim":3', '"feature_dim":7'
        )
        with pytest.raises(SchemaVersionError):
            loads_dataset(text)


class TestTruthRoundTrip:
    def test_write_read_write_identical(self, tmp_path):
        truth = {
            ("q1", "a2"): RelevanceLevel.LABEL_4,
            ("q1", "a1"): RelevanceLevel.LABEL_1,
            ("q0", "a9"): RelevanceLevel.LABEL_5,
        }
        p1 = tmp_path / "t1.jsonl"
        p2 = tmp_path / "t2.jsonl"
        write_truth(truth, str(p1))
        reread = read_truth(str(p1))
        assert reread == truth
        write_truth(reread, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_sorted_output(self, tmp_path):
        truth = {
            ("qb", "a1"): RelevanceLevel.LABEL_2,
            ("qa", "a1"): RelevanceLevel.LABEL_3,
        }
        path = tmp_path / "t.jsonl"
        write_truth(truth, str(path))
        lines = path.read_text().splitlines()
        assert lines == sorted(lines)

    def test_bad_level_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text('{"query_id":"q","app_id":"a","true_level":9}\n')
        with pytest.raises(DatasetParseError):
            read_truth(str(path))

    def test_simulated_world_round_trips(self, small_sim, tmp_path):
        dataset, truth = small_sim
        dpath = tmp_path / "d.jsonl"
        tpath = tmp_path / "t.jsonl"
        write_dataset(dataset, str(dpath))
        write_truth(truth, str(tpath))
        assert read_dataset(str(dpath)).examples == dataset.examples
        assert read_truth(str(tpath)) == truth
