"""
Analysis module for campaign results and the markdown report
"""

import math
import os
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from src.core.comms import prelog_factor
from src.core.scenario import OtfsGrid
from src.utils.constants import ExperimentKind, Waveform

@dataclass
class MetricSummary:
    """Statistics of one metric at one sweep point"""
    mean: float
    std: float
    count: int

    def cell(self) -> str:
        if self.count == 0:
            return "n/a"
        if self.count == 1 or self.std == 0:
            return f"{self.mean:.4g}"
        return f"{self.mean:.4g} ± {self.std:.2g}"

def metric_summary(values: pd.Series) -> MetricSummary:
    values = values.astype(float)
    finite = values[np.isfinite(values)]
    if len(finite) == 0:
        return MetricSummary(float('nan'), float('nan'), 0)
    return MetricSummary(float(finite.mean()), float(finite.std(ddof=0)), int(len(finite)))

def rmse_by_point(frame: pd.DataFrame, variable: str) -> pd.Series:
    """sqrt(mean squared error) per sweep point, the campaign-level RMSE"""
    ok = frame[np.isfinite(frame['squared_error'].astype(float))]
    return ok.groupby(variable, sort=True)['squared_error'].mean().apply(math.sqrt)

def markdown_table(header: Sequence[str], rows: List[Sequence[str]]) -> str:
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join("---" for _ in header) + "|",
    ]
    lines += ["| " + " | ".join(str(c) for c in row) + " |" for row in rows]
    return "\n".join(lines)

def sweep_table(frame: pd.DataFrame, variable: str, columns: Sequence[str]) -> str:
    rows = []
    for value, group in frame.groupby(variable, sort=True):
        flagged = int((group['status'] != 'ok').sum())
        rows.append([f"{value:g}", *(metric_summary(group[c]).cell() for c in columns), str(flagged)])
    return markdown_table([variable, *columns, 'flagged'], rows)

def scheme_table(frame: pd.DataFrame, variable: str, schemes: Sequence[str] = ('jap', 'cap', 'rap')) -> str:
    """Scheme x budget table of the mean min SE"""
    values = sorted(frame[variable].unique())
    rows = []
    for scheme in schemes:
        column = f"se_{scheme}"
        cells = [metric_summary(frame[frame[variable] == v][column]).cell() for v in values]
        rows.append([scheme.upper(), *cells])
    return markdown_table(['scheme', *(f"{variable}={v:g}" for v in values)], rows)

def prelog_table(sizes: Sequence[int]) -> str:
    """Pre-log factors with N_cp = M = N"""
    rows = []
    for size in sizes:
        grid = OtfsGrid(M=int(size), N=int(size), delta_f=1.0, T=1.0, N_cp=int(size), carrier_freq=1.0)
        otfs = prelog_factor(grid, Waveform.OTFS)
        ofdm = prelog_factor(grid, Waveform.OFDM)
        rows.append([str(size), f"{otfs:.3f}", f"{ofdm:.3f}", f"{otfs / ofdm:.3f}"])
    return markdown_table(['M = N = N_cp', 'pre-log OTFS', 'pre-log OFDM', 'ratio'], rows)

def campaign_section(spec, frame: pd.DataFrame) -> str:
    sweep = spec.sweep
    variable = sweep.variable
    kind = spec.kind
    parts = [
        f"## {kind.value}",
        "",
        f"Sweep over `{variable}`, {spec.trials} trial(s) per point, base seed {spec.base_seed}. "
        f"Raw rows: `{kind.value}.csv`, summary: `{kind.value}_summary.json`.",
        "",
        sweep_table(frame, variable, sweep.columns),
    ]
    if kind == ExperimentKind.SE_VS_PEB_BUDGET:
        parts += ["", "Minimum spectral efficiency (bit/s/Hz) per scheme:", "", scheme_table(frame, variable)]
    if kind == ExperimentKind.CELLULAR_BASELINE:
        table = scheme_table(frame, variable, ('jap', 'cap', 'cellular'))
        parts += ["", "Minimum spectral efficiency (bit/s/Hz), cell-free against one co-located site:", "", table]
    if kind == ExperimentKind.RMSE_VS_RCS:
        rmse = rmse_by_point(frame, variable)
        rows = [[f"{v:g}", f"{r:.4g}"] for v, r in rmse.items()]
        parts += ["", "Campaign RMSE (m):", "", markdown_table([variable, 'rmse'], rows)]
    if kind == ExperimentKind.WAVEFORM_GAP:
        sizes = sorted(int(v) for v in frame[variable].unique())
        parts += ["", prelog_table(sizes)]
    if kind == ExperimentKind.CONVERGENCE:
        parts += ["", f"Per-iteration traces: `{kind.value}_trace.csv`."]
    return "\n".join(parts)

def write_report(campaigns: Dict[str, Tuple[object, pd.DataFrame]], output_dir: str) -> str:
    """report.md with one section per campaign; returns its path"""
    if not campaigns:
        raise ValueError("No campaign results to report")
    for name, (_, frame) in campaigns.items():
        if frame.empty:
            raise ValueError(f"Campaign '{name}' has no results")

    sections = ["# Campaign report", ""]
    for name in sorted(campaigns):
        spec, frame = campaigns[name]
        sections += [campaign_section(spec, frame), ""]

    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "report.md")
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write("\n".join(sections))
    return path
