"""
Experiment configuration: a single json document parsed into nested dataclasses.

Every section is optional, missing keys take their defaults, unknown keys are an error.
``config_to_dict`` materializes all the defaults, so the resolved config can be stored next to the results.
"""
import json
from dataclasses import dataclass, field, fields, is_dataclass, asdict, replace
from enum import Enum
from typing import List, NamedTuple, Optional, Tuple, Union, get_args, get_origin, get_type_hints

from ..checks import join
from ..compress import CompressionMethod
from ..io import PathLike, load_json
from ..train import PrehabConfig, RehabConfig, TrainConfig

__all__ = (
    'ConfigError', 'DatasetSpec', 'ModelSpec', 'CalibrationConfig', 'CompressionConfig', 'StageToggles',
    'GridConfig', 'ReportConfig', 'ExperimentConfig', 'Cell', 'parse_cell',
    'config_from_dict', 'config_to_dict', 'load_config',
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    """
    A planted-teacher classification task: gaussian inputs labeled by a network with low-rank weights.

    Attributes
    ----------
    kind
        only "planted" is available.
    input_dim, num_classes
    planted_rank
        the rank of every teacher weight matrix.
    teacher_hidden
        the widths of the teacher's hidden layers.
    n_train, n_calibration, n_test, n_rehab
        the sizes of the splits. The rehab split is optional.
    seed
    """
    kind: str = 'planted'
    input_dim: int = 64
    num_classes: int = 4
    planted_rank: int = 4
    teacher_hidden: Tuple[int, ...] = (32,)
    n_train: int = 4096
    n_calibration: int = 512
    n_test: int = 2048
    n_rehab: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.kind != 'planted':
            raise ValueError(f'Unknown dataset kind "{self.kind}".')
        if self.input_dim < 1 or self.num_classes < 2:
            raise ValueError('At least one input dimension and two classes are required.')
        if self.planted_rank < 1 or any(width < 1 for width in self.teacher_hidden):
            raise ValueError('The planted rank and the teacher widths must be positive.')
        if min(self.n_train, self.n_calibration, self.n_test) < self.num_classes or self.n_rehab < 0:
            raise ValueError(f'Every split must contain at least one sample per class, '
                             f'got sizes {join([self.n_train, self.n_calibration, self.n_test])}.')
        if 0 < self.n_rehab < self.num_classes:
            raise ValueError(f'The rehab split must be empty or contain at least {self.num_classes} samples.')


@dataclass(frozen=True)
class ModelSpec:
    hidden: Tuple[int, ...] = (64, 32)

    def __post_init__(self):
        if not self.hidden or any(width < 1 for width in self.hidden):
            raise ValueError(f'At least one hidden layer of positive width is required, got {self.hidden}.')


@dataclass(frozen=True)
class CalibrationConfig:
    """
    Attributes
    ----------
    batch_size
        the chunk size used to accumulate the statistics.
    recalibrate_before_surgery
        whether the statistics are estimated again on the prehabilitated model before compressing it.
        By default the statistics of the base model are used for every stage.
    """
    batch_size: int = 256
    recalibrate_before_surgery: bool = False

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f'`batch_size` must be positive, got {self.batch_size}.')


@dataclass(frozen=True)
class CompressionConfig:
    """
    Attributes
    ----------
    methods
    ratios
        fractions of removed parameters of the compressed layers.
    layers
        the compressed layers, all the hidden ones by default.
    """
    methods: Tuple[CompressionMethod, ...] = (CompressionMethod.whitened_svd,)
    ratios: Tuple[float, ...] = (.2, .4, .5, .6)
    layers: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, 'methods', tuple(map(CompressionMethod, self.methods)))
        for ratio in self.ratios:
            if not 0 < ratio < 1:
                raise ValueError(f'Every ratio must be in (0, 1), got {ratio}.')


@dataclass(frozen=True)
class StageToggles:
    prehab: bool = True
    surgery: bool = True
    rehab: bool = True

    def __post_init__(self):
        if self.rehab and not self.surgery:
            raise ValueError('Rehab requires the surgery stage.')


@dataclass(frozen=True)
class GridConfig:
    """The penalty strengths and the seeds. Together with the methods and ratios they span the grid."""
    lambdas: Tuple[float, ...] = (0., .1)
    seeds: Tuple[int, ...] = tuple(range(10))

    def __post_init__(self):
        if not self.seeds:
            raise ValueError('At least one seed is required.')
        if not self.lambdas:
            raise ValueError('At least one penalty strength is required.')
        if any(lam < 0 for lam in self.lambdas):
            raise ValueError(f'The penalty strengths must be non-negative, got {join(self.lambdas)}.')
        for name in ['lambdas', 'seeds']:
            values = getattr(self, name)
            if len(set(values)) != len(values):
                raise ValueError(f'`{name}` contains duplicates: {join(values)}.')


@dataclass(frozen=True)
class ReportConfig:
    """
    Attributes
    ----------
    baseline_lambda
        the relative gains of every cell are computed w.r.t. the paired cell with this penalty strength.
    top_k
        the number of leading singular values stored per layer.
    sketch_columns
        the size of the sketch used by the randomized stable rank estimate.
    """
    baseline_lambda: float = 0.
    top_k: int = 5
    sketch_columns: int = 16

    def __post_init__(self):
        if self.top_k < 1 or self.sketch_columns < 1:
            raise ValueError('`top_k` and `sketch_columns` must be positive.')


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    calibration: CalibrationConfig = field(default_factory=CalibrationConfig)
    prehab: PrehabConfig = field(default_factory=PrehabConfig)
    compression: CompressionConfig = field(default_factory=CompressionConfig)
    rehab: RehabConfig = field(default_factory=RehabConfig)
    stages: StageToggles = field(default_factory=StageToggles)
    grid: GridConfig = field(default_factory=GridConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    out: str = 'experiment'

    def __post_init__(self):
        if self.rehab.split == 'rehab' and self.stages.rehab and self.dataset.n_rehab == 0:
            raise ValueError('Rehab on the "rehab" split requires `dataset.n_rehab > 0`.')
        layers = self.compression.layers
        if layers is not None:
            n_layers = len(self.model.hidden) + 1
            if any(not 0 <= index < n_layers for index in layers):
                raise ValueError(f'The compressed layers {join(layers)} are out of range for {n_layers} layers.')

    def cells(self) -> List['Cell']:
        """
        All the grid cells in a fixed order: methods, then ratios, then penalty strengths, then seeds.
        Without surgery, or with no ratios, every cell stops after prehab.
        """
        methods, ratios = self.compression.methods, self.compression.ratios
        if not self.stages.surgery or not methods or not ratios:
            methods, ratios = [None], [None]

        return [
            Cell(method, ratio, lam, seed)
            for method in methods for ratio in ratios for lam in self.grid.lambdas for seed in self.grid.seeds
        ]

    def with_seeds(self, seeds) -> 'ExperimentConfig':
        return replace(self, grid=replace(self.grid, seeds=tuple(seeds)))


class Cell(NamedTuple):
    method: Optional[CompressionMethod]
    ratio: Optional[float]
    lam: float
    seed: int

    def matches(self, pattern: dict) -> bool:
        return all(getattr(self, name) == value for name, value in pattern.items())


_CELL_KEYS = {'method': ('method', CompressionMethod), 'ratio': ('ratio', float), 'lambda': ('lam', float),
              'seed': ('seed', int)}


def parse_cell(text: str) -> dict:
    """
    Parses a partial cell description like ``"method=whitened_svd,ratio=0.5,lambda=0.1,seed=3"``.

    Returns
    -------
    pattern: dict
        the given fields, ready for ``Cell.matches``.
    """
    pattern = {}
    for item in filter(None, text.split(',')):
        key, sep, value = item.partition('=')
        key = key.strip()
        if not sep or key not in _CELL_KEYS:
            raise ConfigError(f'Cannot parse "{item}": expected one of {join(_CELL_KEYS)} followed by "=value".')
        name, convert = _CELL_KEYS[key]
        try:
            pattern[name] = convert(value.strip())
        except ValueError as e:
            raise ConfigError(f'Invalid value for "{key}": {value!r}.') from e

    return pattern


def _prehab_from_dict(value: dict, where: str) -> PrehabConfig:
    value = dict(value)
    if 'lam' in value:
        raise ConfigError(f'Unknown keys in "{where}": lam. The penalty strength is called "lambda".')
    if 'lambda' in value:
        value['lam'] = value.pop('lambda')
    preset = value.pop('preset', None)
    if preset is not None:
        if not isinstance(preset, str):
            raise ConfigError(f'"{where}.preset" must be a string, got {preset!r}.')
        try:
            base = PrehabConfig.from_preset(preset)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        value = {**{f.name: getattr(base, f.name) for f in fields(PrehabConfig)}, **value}

    return _build(PrehabConfig, value, where)


def _is_tuple(hint) -> bool:
    if get_origin(hint) is Union:
        return any(map(_is_tuple, get_args(hint)))
    return get_origin(hint) is tuple


def _build(cls, value, where: str):
    if not isinstance(value, dict):
        raise ConfigError(f'"{where}" must be an object, got {type(value).__name__}.')

    hints = get_type_hints(cls)
    unknown = set(value) - {f.name for f in fields(cls) if f.init}
    if unknown:
        raise ConfigError(f'Unknown keys in "{where}": {join(sorted(unknown))}.')

    kwargs = {}
    for name, item in value.items():
        hint, path = hints[name], f'{where}.{name}' if where else name
        if hint is PrehabConfig:
            item = _prehab_from_dict(item, path)
        elif is_dataclass(hint):
            item = _build(hint, item, path)
        elif isinstance(item, list) and _is_tuple(hint):
            item = tuple(item)
        kwargs[name] = item

    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(f'Invalid "{where or "config"}": {e}') from e


def config_from_dict(value: dict) -> ExperimentConfig:
    return _build(ExperimentConfig, value, '')


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def config_to_dict(config: ExperimentConfig) -> dict:
    """All the settings, defaults included. ``config_from_dict(config_to_dict(c))`` equals ``c``."""
    result = _plain(asdict(config))
    result['prehab']['lambda'] = result['prehab'].pop('lam')
    return result


def load_config(path: PathLike) -> ExperimentConfig:
    try:
        value = load_json(path)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f'Cannot read the config "{path}": {e}') from e

    return config_from_dict(value)
