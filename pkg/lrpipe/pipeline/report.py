"""
Report assembly: one row per grid cell per stage, relative gains w.r.t. the paired baseline cells,
and their medians over the seeds.

Every number in a row is read from the ``evaluation.json`` stored next to the row's ``checkpoint``.
"""
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from ..calibration import LayerCalibration
from ..compress import CompressionMethod, objective_errors
from ..io import PathLike, load_json, save_csv, save_json
from ..linalg import nuclear_norm, svd, sketch_stable_rank
from ..model import FactorizedLayer, ModelState

__all__ = (
    'STAGES', 'COLUMNS', 'ExperimentReport', 'relative_gain', 'layer_spectrum', 'model_spectra',
    'summarize_spectra', 'model_objectives', 'objective_means', 'add_gains', 'median_gains', 'emit_report',
    'load_report',
)

STAGES = 'base', 'prehab', 'surgery', 'rehab'
COLUMNS = [
    'method', 'ratio', 'lambda', 'seed', 'stage', 'status',
    'loss', 'accuracy', 'parameters', 'factorized_parameters',
    'mean_stable_rank', 'mean_whitened_stable_rank', 'mean_sketched_stable_rank', 'mean_tail_energy',
    *(f'mean_{method.value}_error' for method in CompressionMethod),
    'gain_accuracy', 'gain_loss', 'checkpoint', 'baseline_checkpoint',
]
GROUP = ['method', 'ratio', 'lambda', 'stage']


def relative_gain(candidate: float, baseline: float) -> Optional[float]:
    """
    ``(candidate - baseline) / baseline``, or None if the baseline is zero or either value is missing.

    Examples
    --------
    >>> round(relative_gain(64.06, 58.42), 4)
    0.0965
    """
    if candidate is None or baseline is None or baseline == 0:
        return None
    if not (math.isfinite(candidate) and math.isfinite(baseline)):
        return None
    return (candidate - baseline) / baseline


def _stable_rank(sigma: np.ndarray) -> Optional[float]:
    frobenius = float(np.sum(sigma ** 2))
    return float(np.sum(sigma)) ** 2 / frobenius if frobenius > 0 else None


def layer_spectrum(w: np.ndarray, x: np.ndarray, sketch_columns: int, seed: int) -> dict:
    """The full raw and whitened spectra of ``w`` together with the exact and sketched stable ranks."""
    raw, whitened = svd(w), svd(w @ x)
    sketched = None
    if whitened.sigma[0] > 0:
        sketched = sketch_stable_rank(w @ x, min(sketch_columns, w.shape[1]), seed)

    return {
        'singular_values': raw.sigma.tolist(),
        'whitened_singular_values': whitened.sigma.tolist(),
        'stable_rank': _stable_rank(raw.sigma),
        'whitened_stable_rank': _stable_rank(whitened.sigma),
        'sketched_whitened_stable_rank': sketched,
        'nuclear_norm': nuclear_norm(whitened),
    }


def model_spectra(model: ModelState, whitening: Sequence[np.ndarray], layers: Sequence[int],
                  sketch_columns: int, seed: int) -> List[dict]:
    """Spectra of the (effective) weights of ``layers``, whitened by the frozen factors of the base model."""
    return [
        {'layer': index, **layer_spectrum(model.layers[index].effective_weight(), whitening[index],
                                          sketch_columns, seed)}
        for index in layers
    ]


def summarize_spectra(spectra: Sequence[dict], ranks: Optional[Dict[int, int]], top_k: int) -> List[dict]:
    """
    Keeps the ``top_k`` leading singular values and adds the whitened tail energy ``sum_{i > r} sigma_i^2``
    at the plan rank ``r`` of each layer, if ``ranks`` are given.
    """
    result = []
    for entry in spectra:
        whitened = np.asarray(entry['whitened_singular_values'])
        tail = None
        if ranks is not None:
            tail = float(np.sum(whitened[ranks[entry['layer']]:] ** 2))

        result.append({
            'layer': entry['layer'],
            'top_singular_values': entry['singular_values'][:top_k],
            'top_whitened_singular_values': entry['whitened_singular_values'][:top_k],
            'stable_rank': entry['stable_rank'],
            'whitened_stable_rank': entry['whitened_stable_rank'],
            'sketched_whitened_stable_rank': entry['sketched_whitened_stable_rank'],
            'tail_energy': tail,
        })

    return result


def _mean(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def spectra_means(spectra: Sequence[dict]) -> dict:
    return {
        'mean_stable_rank': _mean(s['stable_rank'] for s in spectra),
        'mean_whitened_stable_rank': _mean(s['whitened_stable_rank'] for s in spectra),
        'mean_sketched_stable_rank': _mean(s['sketched_whitened_stable_rank'] for s in spectra),
        'mean_tail_energy': _mean(s['tail_energy'] for s in spectra),
    }


def model_objectives(dense: ModelState, compressed: ModelState,
                     calibrations: Sequence[LayerCalibration]) -> List[dict]:
    """
    The error of every factorized layer of ``compressed`` w.r.t. the same layer of ``dense``,
    under the objective of each compression method. ``calibrations`` are the ones the surgery used.
    """
    return [
        {'layer': index, **objective_errors(dense.layers[index].effective_weight(), layer.effective_weight(),
                                            calibrations[index])}
        for index, layer in enumerate(compressed.layers) if isinstance(layer, FactorizedLayer)
    ]


def objective_means(objectives: Sequence[dict]) -> dict:
    return {
        f'mean_{method.value}_error': _mean(entry[method.value] for entry in objectives)
        for method in CompressionMethod
    }


def _pair_key(row: dict):
    return row['method'], row['ratio'], row['seed'], row['stage']


def add_gains(rows: Sequence[dict], baseline_lambda: float) -> List[dict]:
    """
    Every row gets the relative gains of its accuracy and loss w.r.t. the row of the same method, ratio,
    seed and stage with ``lambda == baseline_lambda``. Rows without a successful baseline get None.
    """
    baselines = {
        _pair_key(row): row for row in rows if row['lambda'] == baseline_lambda and row['status'] == 'ok'
    }
    result = []
    for row in rows:
        baseline = baselines.get(_pair_key(row)) if row['status'] == 'ok' else None
        gains = {'gain_accuracy': None, 'gain_loss': None, 'baseline_checkpoint': None}
        if baseline is not None:
            gains = {
                'gain_accuracy': relative_gain(row['accuracy'], baseline['accuracy']),
                'gain_loss': relative_gain(row['loss'], baseline['loss']),
                'baseline_checkpoint': baseline['checkpoint'],
            }
        result.append({**row, **gains})

    return result


def _none_if_nan(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def median_gains(rows: Sequence[dict]) -> List[dict]:
    """Medians over the seeds of the relative gains of every (method, ratio, lambda, stage)."""
    frame = pd.DataFrame(list(rows), columns=COLUMNS)
    if frame.empty:
        return []

    frame[['gain_accuracy', 'gain_loss']] = frame[['gain_accuracy', 'gain_loss']].astype(float)
    groups = frame.groupby(GROUP, dropna=False, sort=False)[['gain_accuracy', 'gain_loss']]
    medians = groups.median().reset_index()
    counts = groups.count().reset_index()['gain_accuracy']
    medians['n_seeds'] = counts.astype(int)
    return [{k: _none_if_nan(v) for k, v in record.items()} for record in medians.to_dict('records')]


@dataclass
class ExperimentReport:
    """
    Attributes
    ----------
    config
        the resolved experiment config, all the defaults included.
    rows
        one dict per grid cell per stage, keyed by ``COLUMNS`` plus the per-layer ``spectra`` and ``objectives``.
    failures
        the stage failures, each with the cell, the stage and the error message.
    """
    config: dict
    rows: List[dict] = field(default_factory=list)
    failures: List[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            'config': self.config, 'columns': COLUMNS, 'rows': self.rows,
            'median_gains': median_gains(self.rows), 'failures': self.failures,
        }

    @classmethod
    def from_dict(cls, value: dict) -> 'ExperimentReport':
        return cls(value['config'], value['rows'], value['failures'])

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame([{name: row.get(name) for name in COLUMNS} for row in self.rows], columns=COLUMNS)


def emit_report(report: ExperimentReport, folder: PathLike, formats: Sequence[str] = ('csv', 'json')) -> List[Path]:
    """
    Writes ``report.csv`` (one row per cell per stage, a fixed column order, the per-layer entries summarized
    by their means) and ``report.json`` (the full nested report).
    """
    folder = Path(folder)
    paths = []
    for fmt in formats:
        path = folder / f'report.{fmt}'
        if fmt == 'csv':
            save_csv(report.frame(), path, index=False)
        elif fmt == 'json':
            save_json(report.to_dict(), path, indent=2)
        else:
            raise ValueError(f'Unknown report format "{fmt}".')
        paths.append(path)

    return paths


def load_report(path: PathLike) -> ExperimentReport:
    return ExperimentReport.from_dict(load_json(path))
