"""
Validation suite plumbing
"""
import math

import pandas as pd
import pytest

from src.core import validation
from src.core.exceptions import ConvergenceFailure
from src.core.validation import (
    CHECK_NAMES, CheckResult, all_passed, run_validation, summary_counts, write_validation,
)

def test_selected_checks_pass(tmp_path):
    results = run_validation(only=['psi_identity', 'prelog_factors'], quick=True)
    assert [r.name for r in results] == ['psi_identity', 'prelog_factors']
    assert all_passed(results)
    path = write_validation(results, str(tmp_path))
    frame = pd.read_csv(path)
    assert list(frame['check']) == ['psi_identity', 'prelog_factors']
    assert frame['passed'].all()

def test_unknown_check_rejected():
    with pytest.raises(ValueError):
        run_validation(only=['no_such_check'])

def test_raising_check_becomes_failure(monkeypatch):
    def failing():
        def check(config, quick, seed):
            raise ConvergenceFailure("stalled")
        return [(name, check) for name in CHECK_NAMES]

    monkeypatch.setattr(validation, '_suite', failing)
    results = run_validation(only=['binary_gap'])
    assert len(results) == 1
    assert not results[0].passed
    assert math.isnan(results[0].value)
    assert "ConvergenceFailure" in results[0].detail

def test_informational_results_are_not_graded():
    results = [
        CheckResult("a", True, 0.0, 1.0),
        CheckResult("b", False, 2.0, 1.0, informational=True),
    ]
    assert all_passed(results)
    assert summary_counts(results) == {'checks': 1, 'passed': 1}
    results.append(CheckResult("c", False, 2.0, 1.0))
    assert not all_passed(results)
