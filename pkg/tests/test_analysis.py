"""
Report tables
"""
import math

import pandas as pd
import pytest

from src.core.analysis import (
    markdown_table, metric_summary, prelog_table, rmse_by_point, scheme_table, write_report,
)
from src.core.experiments import ExperimentSpec
from src.utils.constants import ExperimentKind

def test_metric_summary_skips_non_finite():
    summary = metric_summary(pd.Series([1.0, 3.0, float('inf'), float('nan')]))
    assert (summary.mean, summary.std, summary.count) == (2.0, 1.0, 2)
    assert summary.cell() == "2 ± 1"
    assert metric_summary(pd.Series([float('nan')])).cell() == "n/a"
    assert metric_summary(pd.Series([0.25])).cell() == "0.25"

def test_markdown_table():
    table = markdown_table(['a', 'b'], [[1, 2]])
    assert table.splitlines() == ["| a | b |", "|---|---|", "| 1 | 2 |"]

def test_rmse_is_taken_over_the_campaign():
    """sqrt of the mean squared error, not the mean of per-trial RMSEs"""
    frame = pd.DataFrame({
        'rcs_variance_dbsm': [0.0, 0.0, 10.0],
        'squared_error': [1.0, 9.0, float('nan')],
    })
    rmse = rmse_by_point(frame, 'rcs_variance_dbsm')
    assert rmse[0.0] == pytest.approx(math.sqrt(5.0))
    assert 10.0 not in rmse.index

def test_prelog_table_values():
    rows = prelog_table([128]).splitlines()
    assert rows[2] == "| 128 | 0.992 | 0.500 | 1.984 |"

def test_scheme_table_rows():
    frame = pd.DataFrame({
        'peb_threshold_m': [0.1, 0.2],
        'se_jap': [2.0, 3.0], 'se_cap': [1.5, 2.5], 'se_rap': [float('nan'), 1.0],
    })
    lines = scheme_table(frame, 'peb_threshold_m').splitlines()
    assert lines[0] == "| scheme | peb_threshold_m=0.1 | peb_threshold_m=0.2 |"
    assert lines[-1] == "| RAP | n/a | 1 |"

def test_scheme_table_cellular_row():
    frame = pd.DataFrame({'peb_threshold_m': [0.1], 'se_jap': [2.0], 'se_cap': [1.0], 'se_cellular': [0.5]})
    lines = scheme_table(frame, 'peb_threshold_m', ('jap', 'cap', 'cellular')).splitlines()
    assert [line.split(" | ")[0] for line in lines[2:]] == ["| JAP", "| CAP", "| CELLULAR"]

def test_write_report(tmp_path):
    spec = ExperimentSpec(kind=ExperimentKind.WAVEFORM_GAP, values=[16])
    frame = pd.DataFrame([{
        'sweep_index': 0, 'subcarriers': 16.0, 'trial': 0, 'seed': 1, 'status': 'ok', 'error': '',
        'prelog_otfs': 0.94, 'prelog_ofdm': 0.5, 'prelog_ratio': 1.88, 'd33_ratio': 1.0, 'd44_ratio': 1.0,
        'se_otfs': 3.0, 'se_ofdm': 1.6,
    }])
    path = write_report({'waveform_gap': (spec, frame)}, str(tmp_path))
    text = open(path, encoding='utf-8').read()
    assert text.startswith("# Campaign report")
    assert "## waveform_gap" in text
    assert "| 16 | 0.941 | 0.500 | 1.882 |" in text

def test_write_report_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        write_report({}, str(tmp_path))
    spec = ExperimentSpec(kind=ExperimentKind.PEB_VS_AOA)
    with pytest.raises(ValueError):
        write_report({'peb_vs_aoa': (spec, pd.DataFrame())}, str(tmp_path))
