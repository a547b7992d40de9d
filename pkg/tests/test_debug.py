import io
import time

import pytest

import wick_utils
from wick_utils.cumulants import FBMModel, GaussianModel, PoissonModel, TableModel
from wick_utils.debug import (
    DEBUG_WRAPPED,
    WickDebugger,
    diagnose_model,
    enable_debug_mode,
    explain_wick_error,
)
from wick_utils.errors import (
    BasisMismatchError,
    ConvergenceError,
    GridMismatchError,
    ModelError,
    SlotCapError,
    UnknownExperimentError,
    WellDefinednessError,
)


class TestWickDebugger:
    """Test the WickDebugger class."""

    def test_successful_operation(self, capsys):
        """Test tracking successful operations."""
        debugger = WickDebugger(verbose=True)

        with debugger.operation("Test operation"):
            time.sleep(0.05)

        assert len(debugger.records) == 1
        assert debugger.records[0].success is True
        assert debugger.records[0].duration >= 0.05

        captured = capsys.readouterr()
        assert captured.out == ""
        assert "Starting: Test operation" in captured.err
        assert "Completed: Test operation" in captured.err

    def test_failed_operation(self, capsys):
        """Test tracking failed operations."""
        debugger = WickDebugger(verbose=True)

        with pytest.raises(ValueError):
            with debugger.operation("Failing operation"):
                raise ValueError("Test error")

        assert debugger.records[0].success is False
        assert debugger.records[0].error == "Test error"
        assert "Failed: Failing operation" in capsys.readouterr().err

    def test_quiet_mode(self, capsys):
        """Test debugger in quiet mode."""
        debugger = WickDebugger(verbose=False)

        with debugger.operation("Quiet operation"):
            debugger.note("not shown")

        captured = capsys.readouterr()
        assert captured.out == ""
        assert captured.err == ""

    def test_custom_stream(self):
        stream = io.StringIO()
        debugger = WickDebugger(stream=stream)
        debugger.note("halfway")
        assert stream.getvalue() == "  halfway\n"

    def test_summarize(self):
        """Test operation summary."""
        stream = io.StringIO()
        debugger = WickDebugger(verbose=False, stream=stream)

        with debugger.operation("Op1"):
            pass
        try:
            with debugger.operation("Op2"):
                raise ModelError("bad model")
        except ModelError:
            pass

        debugger.summarize()
        text = stream.getvalue()
        assert "Operation Summary: 2 operations, 1 failed" in text
        lines = text.strip().splitlines()
        assert lines[-2].split()[:2] == ["ok", "Op1"]
        assert lines[-1].split()[:2] == ["FAIL", "Op2"]
        assert lines[-1].endswith("bad model")

    def test_summarize_without_records(self):
        stream = io.StringIO()
        WickDebugger(stream=stream).summarize()
        assert stream.getvalue() == ""


class TestDiagnoseModel:
    """Test model diagnostics."""

    def test_fbm(self):
        report = diagnose_model(FBMModel(0.7), detailed=False)
        assert report["time_indexed"] is True
        assert set(report["cumulants"]) == {"0.25", "0.5", "0.75", "1"}
        assert report["cumulants"]["1"][2] == pytest.approx(1.0)
        assert report["cumulants"]["1"][3] == 0.0
        assert report["derivatives"]["1/2"] == pytest.approx(0.7, rel=1e-6)
        assert report["issues"] == []

    def test_static_model(self):
        report = diagnose_model(PoissonModel(2), max_order=3, detailed=False)
        assert report["cumulants"] == {"static": {1: 2.0, 2: 2.0, 3: 2.0}}
        assert report["derivatives"] == {}

    def test_relation_suggestion(self):
        report = diagnose_model(GaussianModel([[1, 1], [1, 1]], components=["a", "b"]), detailed=False)
        assert report["polynomial_relation_free"] is False
        assert any("relation-free" in s for s in report["suggestions"])

    def test_negative_variance(self):
        report = diagnose_model(TableModel({"x,x": -1}), max_order=2, detailed=False)
        assert report["cumulants"]["static"] == {1: 0.0, 2: -1.0}
        assert "Negative variance at t=None" in report["issues"]

    def test_detailed_output(self):
        stream = io.StringIO()
        diagnose_model(FBMModel(0.6), detailed=True, stream=stream)
        assert "Check time derivatives" in stream.getvalue()
        assert "Operation Summary:" in stream.getvalue()


class TestExplainWickError:
    """Test error explanation functionality."""

    def test_slot_cap(self):
        explanation = explain_wick_error(SlotCapError(14, 12))
        assert "slot cap" in explanation
        assert "WICK_SLOT_CAP" in explanation
        assert "Suggestions:" in explanation

    def test_well_definedness(self):
        explanation = explain_wick_error(WellDefinednessError("relation"))
        assert "as_random_variables=False" in explanation

    def test_basis_mismatch(self):
        explanation = explain_wick_error(BasisMismatchError("mixed"))
        assert "to_monomial_basis" in explanation

    def test_grid_mismatch(self):
        explanation = explain_wick_error(GridMismatchError("grid"))
        assert "rosenblatt_kernel_family" in explanation

    def test_convergence(self):
        explanation = explain_wick_error(ConvergenceError("ratio 1.2"))
        assert "ratio test" in explanation

    def test_unknown_experiment(self):
        explanation = explain_wick_error(UnknownExperimentError("nope"))
        assert "EXPERIMENTS" in explanation

    def test_model_error(self):
        explanation = explain_wick_error(ModelError("Hurst index"))
        assert "poisson:2" in explanation

    def test_file_not_found(self):
        explanation = explain_wick_error(FileNotFoundError("No such file: 'run.json'"))
        assert "Check the path/URL for typos" in explanation

    def test_with_context(self):
        explanation = explain_wick_error(ModelError("x"), {"command": "appell"})
        assert "Context:" in explanation
        assert "command: appell" in explanation

    def test_generic_error(self):
        explanation = explain_wick_error(RuntimeError("Something went wrong"))
        assert "RuntimeError: Something went wrong" in explanation
        assert "Suggestions:" not in explanation

    def test_traceback_location(self):
        try:
            PoissonModel(-1)
        except ModelError as e:
            explanation = explain_wick_error(e)
        assert "Error occurred in:" in explanation


class TestDebugMode:
    """Test global debug mode."""

    def test_wraps_public_functions(self, capsys, monkeypatch):
        for name in DEBUG_WRAPPED:
            monkeypatch.setattr(wick_utils, name, getattr(wick_utils, name))

        enable_debug_mode()
        assert "Debug mode enabled" in capsys.readouterr().err
        wrapped = wick_utils.appell_polynomial
        assert hasattr(wrapped, "__wrapped__")

        enable_debug_mode()
        assert wick_utils.appell_polynomial is wrapped

        with pytest.raises(UnknownExperimentError):
            wick_utils.monte_carlo("nonexistent", 200, seed=0)
        assert "No Monte Carlo experiment" in capsys.readouterr().err
