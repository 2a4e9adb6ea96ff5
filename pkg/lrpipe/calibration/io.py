"""Calibration bundles use the model container format with their own ``format`` tag."""
from typing import Sequence, List

from ..io import PathLike, load_json, save_json
from ..model.io import FORMAT_VERSION, check_container, matrix_from_json, matrix_to_json
from .statistics import LayerCalibration

__all__ = 'calibration_to_dict', 'calibration_from_dict', 'save_calibration', 'load_calibration'

CALIBRATION_FORMAT = 'lrpipe.calibration'
_MATRICES = 'whitening_x', 'whitening_x_inv', 'fisher_diag', 'kfac_a', 'kfac_g'


def calibration_to_dict(calibrations: Sequence[LayerCalibration]) -> dict:
    layers = []
    for calibration in calibrations:
        entry = {name: matrix_to_json(getattr(calibration, name)) for name in _MATRICES}
        entry['sample_count'] = calibration.sample_count
        layers.append(entry)

    return {'format': CALIBRATION_FORMAT, 'version': FORMAT_VERSION, 'layers': layers}


def calibration_from_dict(value: dict) -> List[LayerCalibration]:
    check_container(value, CALIBRATION_FORMAT)
    return [
        LayerCalibration(**{name: matrix_from_json(entry[name]) for name in _MATRICES},
                         sample_count=entry['sample_count'])
        for entry in value['layers']
    ]


def save_calibration(calibrations: Sequence[LayerCalibration], path: PathLike):
    save_json(calibration_to_dict(calibrations), path)


def load_calibration(path: PathLike) -> List[LayerCalibration]:
    return calibration_from_dict(load_json(path))
