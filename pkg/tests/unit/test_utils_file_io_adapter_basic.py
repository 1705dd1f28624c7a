"""
Unit tests for FileIoAdapter.

Exercises atomic writes, appends and the translation of OS errors into
domain file errors.
"""

from pathlib import Path

import pytest

from splurge_context_transformer.exceptions import SplurgeContextTransformerFileError
from splurge_context_transformer.utils import FileIoAdapter


@pytest.mark.unit
class TestFileIoAdapterReadWrite:
    """Round trips through the adapter."""

    def test_write_text_creates_parents(self, temp_dir: Path) -> None:
        target = temp_dir / "nested" / "deeper" / "report.json"
        written = FileIoAdapter.write_text(target, '{"mean_ap": 0.5}\n', context_type="report")
        assert written == target
        assert FileIoAdapter.read_text(target) == '{"mean_ap": 0.5}\n'

    def test_write_bytes_leaves_no_temporary_file(self, temp_dir: Path) -> None:
        FileIoAdapter.write_bytes(temp_dir / "weights.ckpt", b"SPCT\x01", context_type="checkpoint")
        assert sorted(p.name for p in temp_dir.iterdir()) == ["weights.ckpt"]
        assert FileIoAdapter.read_bytes(temp_dir / "weights.ckpt") == b"SPCT\x01"

    def test_overwrite_replaces_content(self, temp_dir: Path) -> None:
        target = temp_dir / "config.json"
        FileIoAdapter.write_text(target, "first")
        FileIoAdapter.write_text(target, "second")
        assert target.read_text(encoding="utf-8") == "second"

    def test_append_line_adds_single_newline(self, temp_dir: Path) -> None:
        target = temp_dir / "metrics.jsonl"
        FileIoAdapter.append_line(target, '{"step": 0}\n', context_type="metrics")
        FileIoAdapter.append_line(target, '{"step": 1}', context_type="metrics")
        assert target.read_text(encoding="utf-8") == '{"step": 0}\n{"step": 1}\n'


@pytest.mark.unit
class TestFileIoAdapterErrors:
    """Error translation."""

    def test_missing_file_raises_file_error(self, temp_dir: Path) -> None:
        with pytest.raises(SplurgeContextTransformerFileError) as exc_info:
            FileIoAdapter.read_bytes(temp_dir / "absent.ckpt", context_type="checkpoint")
        assert "Checkpoint not found" in str(exc_info.value)
        assert exc_info.value.details["context_type"] == "checkpoint"

    def test_require_file_rejects_directory(self, temp_dir: Path) -> None:
        with pytest.raises(SplurgeContextTransformerFileError):
            FileIoAdapter.require_file(temp_dir, context_type="checkpoint")

    def test_require_file_returns_resolved_path(self, temp_dir: Path) -> None:
        target = temp_dir / "present.ckpt"
        target.write_bytes(b"x")
        assert FileIoAdapter.require_file(target) == target.resolve()

    def test_invalid_encoding_raises_file_error(self, temp_dir: Path) -> None:
        target = temp_dir / "latin.txt"
        target.write_bytes(b"\xff\xfe\xfa")
        with pytest.raises(SplurgeContextTransformerFileError, match="Invalid encoding"):
            FileIoAdapter.read_text(target, context_type="config")
