"""
Tests for logging performance module.

Tests timing of training phases with real loggers and no mocks.
"""

import logging
import threading
import time
from io import StringIO

import pytest

from splurge_context_transformer.logging.context import run_context
from splurge_context_transformer.logging.core import get_logger
from splurge_context_transformer.logging.performance import (
    PerformanceLogger,
    log_performance,
    performance_context,
)


class _CaptureMixin:
    """Attach a StringIO handler to a logger for the duration of a test."""

    logger_name: str | None = None

    def setup_method(self) -> None:
        self.log_output = StringIO()
        self.handler = logging.StreamHandler(self.log_output)
        self.handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
        self.logger = logging.getLogger(self.logger_name) if self.logger_name else get_logger()
        self.logger.setLevel(logging.DEBUG)
        self.logger.addHandler(self.handler)

    def teardown_method(self) -> None:
        self.logger.removeHandler(self.handler)
        self.handler.close()


@pytest.mark.unit
class TestPerformanceLogger(_CaptureMixin):
    """Test PerformanceLogger class."""

    logger_name = "test_performance"

    def setup_method(self) -> None:
        super().setup_method()
        self.performance_logger = PerformanceLogger(self.logger)

    def test_initialization(self) -> None:
        assert self.performance_logger._logger is self.logger
        assert self.performance_logger.last_duration is None

    @pytest.mark.parametrize(
        ("duration", "level"),
        [(0.05, "DEBUG"), (1.0, "DEBUG"), (12.5, "INFO"), (900.0, "WARNING")],
    )
    def test_level_follows_duration(self, duration: float, level: str) -> None:
        self.performance_logger.log_timing("phase", duration)

        log_content = self.log_output.getvalue()
        assert log_content.startswith(f"{level} Performance: phase took {duration:.3f}s")

    def test_records_last_duration(self) -> None:
        self.performance_logger.log_timing("finetune", 3.25, variant="full")
        assert self.performance_logger.last_duration == 3.25

    def test_context_pairs_are_appended(self) -> None:
        self.performance_logger.log_timing("finetune", 0.75, variant="full", shots=5, trial=2)

        log_content = self.log_output.getvalue()
        assert "Performance: finetune took 0.750s | variant=full | shots=5 | trial=2" in log_content

    def test_without_context(self) -> None:
        self.performance_logger.log_timing("evaluate", 0.25)

        log_content = self.log_output.getvalue()
        assert "Performance: evaluate took 0.250s" in log_content
        assert " | " not in log_content

    def test_active_run_id_is_added(self) -> None:
        with run_context("run-42"):
            self.performance_logger.log_timing("pretrain", 0.1)

        assert "run=run-42" in self.log_output.getvalue()

    def test_explicit_run_is_not_overwritten(self) -> None:
        with run_context("run-42"):
            self.performance_logger.log_timing("pretrain", 0.1, run="manual")

        log_content = self.log_output.getvalue()
        assert "run=manual" in log_content
        assert "run-42" not in log_content


@pytest.mark.unit
class TestLogPerformanceDecorator(_CaptureMixin):
    """Test log_performance decorator function."""

    def test_returns_value_and_logs(self) -> None:
        @log_performance("render_batch", scenes=4)
        def render(count: int, *, scale: int) -> int:
            time.sleep(0.01)
            return count * scale

        assert render(3, scale=2) == 6

        log_content = self.log_output.getvalue()
        assert "Performance: render_batch took" in log_content
        assert "scenes=4" in log_content

    def test_logs_when_function_raises(self) -> None:
        @log_performance("diverging_step")
        def step() -> None:
            raise ValueError("loss is nan")

        with pytest.raises(ValueError, match="loss is nan"):
            step()

        assert "Performance: diverging_step took" in self.log_output.getvalue()

    def test_preserves_metadata(self) -> None:
        @log_performance("documented")
        def documented() -> None:
            """Docstring kept."""

        assert documented.__name__ == "documented"
        assert documented.__doc__ == "Docstring kept."


@pytest.mark.unit
class TestPerformanceContext(_CaptureMixin):
    """Test performance_context context manager."""

    def test_yields_logger_and_logs_on_exit(self) -> None:
        with performance_context("evaluate", split="target") as perf_logger:
            assert isinstance(perf_logger, PerformanceLogger)
            time.sleep(0.01)

        assert perf_logger.last_duration is not None and perf_logger.last_duration >= 0.0
        log_content = self.log_output.getvalue()
        assert "Performance: evaluate took" in log_content
        assert "split=target" in log_content

    def test_logs_when_body_raises(self) -> None:
        with pytest.raises(RuntimeError):
            with performance_context("finetune"):
                raise RuntimeError("boom")

        assert "Performance: finetune took" in self.log_output.getvalue()

    def test_nested_timings(self) -> None:
        with performance_context("ablation", variants=2) as perf_logger:
            perf_logger.log_timing("trial", 0.05, trial=1)

        lines = self.log_output.getvalue().splitlines()
        assert "Performance: trial took 0.050s | trial=1" in lines[0]
        assert "Performance: ablation took" in lines[1]

    def test_run_ids_are_isolated_per_thread(self) -> None:
        def worker(run_id: str) -> None:
            with run_context(run_id):
                with performance_context("worker"):
                    pass

        threads = [threading.Thread(target=worker, args=(f"run-{i}",)) for i in range(3)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()

        log_content = self.log_output.getvalue()
        for i in range(3):
            assert f"run=run-{i}" in log_content
        assert log_content.count("Performance: worker took") == 3
