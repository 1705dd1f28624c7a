"""
Unit tests for the error hierarchy.
"""

import pickle

import pytest

from splurge_context_transformer.exceptions import (
    SplurgeContextTransformerCheckpointError,
    SplurgeContextTransformerConfigValidationError,
    SplurgeContextTransformerDimensionError,
    SplurgeContextTransformerError,
    SplurgeContextTransformerFileError,
    SplurgeContextTransformerNumericalError,
    SplurgeContextTransformerParameterError,
    SplurgeContextTransformerRuntimeError,
    SplurgeContextTransformerValueError,
    SplurgeFrameworkError,
)


@pytest.mark.unit
class TestErrorHierarchy:
    """Subclass relations the CLI relies on for exit codes."""

    @pytest.mark.parametrize(
        ("error_type", "parent"),
        [
            (SplurgeContextTransformerDimensionError, SplurgeContextTransformerValueError),
            (SplurgeContextTransformerParameterError, SplurgeContextTransformerValueError),
            (SplurgeContextTransformerNumericalError, SplurgeContextTransformerRuntimeError),
            (SplurgeContextTransformerCheckpointError, SplurgeContextTransformerFileError),
            (SplurgeContextTransformerConfigValidationError, SplurgeContextTransformerError),
        ],
    )
    def test_parents(self, error_type: type, parent: type) -> None:
        assert issubclass(error_type, parent)
        assert issubclass(error_type, SplurgeFrameworkError)

    def test_numerical_error_is_not_a_value_error(self) -> None:
        assert not issubclass(SplurgeContextTransformerNumericalError, SplurgeContextTransformerValueError)


@pytest.mark.unit
class TestErrorFormatting:
    """Structured message rendering."""

    def test_full_message_with_details(self) -> None:
        err = SplurgeContextTransformerDimensionError("shapes differ", details={"a": (2, 3)})
        assert str(err) == "[splurge-context-transformer.numerics.dimension] shapes differ (a=(2, 3))"

    def test_error_code_is_normalized_and_appended(self) -> None:
        err = SplurgeContextTransformerNumericalError("loss is NaN", error_code="Non Finite_Loss")
        assert err.error_code == "non-finite-loss"
        assert err.full_code == "splurge-context-transformer.numerical.non-finite-loss"

    def test_trailing_code_not_duplicated(self) -> None:
        err = SplurgeContextTransformerCheckpointError("bad magic", error_code="checkpoint")
        assert err.full_code == "splurge-context-transformer.operation.file.checkpoint"

    def test_details_are_copied(self) -> None:
        err = SplurgeContextTransformerParameterError("bad kernel", details={"kernel": 0})
        err.details["kernel"] = 5
        assert err.details == {"kernel": 0}

    def test_pickle_round_trip(self) -> None:
        err = SplurgeContextTransformerNumericalError("diverged", details={"step": 12, "last_finite_loss": 3.5})
        restored = pickle.loads(pickle.dumps(err))
        assert type(restored) is SplurgeContextTransformerNumericalError
        assert restored.details == {"step": 12, "last_finite_loss": 3.5}
        assert str(restored) == str(err)
