"""
The staged pipeline: base training, calibration, prehab, surgery, rehab and evaluation,
repeated over the grid of (method, ratio, lambda, seed) cells.

Every stage stores its output in its own folder and is skipped if the output already exists,
so an interrupted run can be resumed. The layout of ``out``::

    config.json, dataset.npz, report.csv, report.json
    seed_<s>/
        calibration.json
        base/                                    model.json, metrics.jsonl, evaluation.json
        lambda_<l>/prehab/                       model.json, metrics.jsonl, evaluation.json[, calibration.json]
        lambda_<l>/<method>/ratio_<r>/surgery/   model.json, evaluation.json
        lambda_<l>/<method>/ratio_<r>/rehab/     model.json, metrics.jsonl, evaluation.json

Cells with ``lambda == 0`` skip prehab and reuse the base model.
"""
import shutil
from dataclasses import replace
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from ..calibration import calibrate, load_calibration, save_calibration
from ..commands import flush, locked, populate
from ..compress import compress_model, make_plan, parameter_summary, rank_for_ratio
from ..io import PathLike, load_json, load_or_create, save_json
from ..itertools import collect, zip_equal
from ..model import evaluate, init_model, load_model, save_model
from ..train import JSONLogger, prehab, rehab, train_base
from .config import Cell, ConfigError, ExperimentConfig, config_to_dict
from .data import PlantedDataset, gen_dataset, load_dataset, save_dataset
from .report import ExperimentReport, STAGES, add_gains, model_objectives, model_spectra, objective_means, \
    spectra_means, summarize_spectra

__all__ = 'StageError', 'run_experiment', 'cell_stages', 'cell_folder', 'prepare_dataset'


class StageError(RuntimeError):
    def __init__(self, cell: Cell, stage: str, message: str):
        super().__init__(f'Stage "{stage}" failed for {format_cell(cell)}: {message}')
        self.cell = cell
        self.stage = stage


def format_cell(cell: Cell) -> str:
    method = None if cell.method is None else cell.method.value
    return f'method={method},ratio={cell.ratio},lambda={cell.lam},seed={cell.seed}'


def cell_stages(config: ExperimentConfig, cell: Cell) -> List[str]:
    stages = ['base', 'prehab'] if config.stages.prehab else ['base']
    if cell.method is not None:
        stages.append('surgery')
        if config.stages.rehab:
            stages.append('rehab')
    return stages


def cell_folder(cell: Cell, stage: str, prehab_enabled: bool = True) -> Path:
    """The folder of the checkpoint a stage of a cell reads its numbers from, relative to the experiment."""
    seed = Path(f'seed_{cell.seed}')
    if stage == 'base' or (stage == 'prehab' and cell.lam == 0):
        return seed / 'base'
    branch = seed / f'lambda_{float(cell.lam)!r}' if prehab_enabled and cell.lam != 0 else seed / 'base'
    if stage == 'prehab':
        return branch / 'prehab'
    return branch / cell.method.value / f'ratio_{float(cell.ratio)!r}' / stage


def prepare_dataset(config: ExperimentConfig, path: PathLike) -> PlantedDataset:
    populate(path, lambda: save_dataset(gen_dataset(config.dataset), path))
    return load_dataset(path)


def _compressed_layers(config: ExperimentConfig) -> List[int]:
    layers = config.compression.layers
    return list(range(len(config.model.hidden))) if layers is None else list(layers)


def _plan_ranks(config: ExperimentConfig, ratio: Optional[float]) -> Optional[Dict[int, int]]:
    if ratio is None:
        return None
    dims = [config.dataset.input_dim, *config.model.hidden, config.dataset.num_classes]
    return {i: rank_for_ratio(dims[i + 1], dims[i], ratio) for i in _compressed_layers(config)}


class _SeedRun:
    """Runs, or only loads if ``train`` is False, all the stages of a single seed. Shared stages run once."""

    def __init__(self, config: ExperimentConfig, out: Path, dataset: PlantedDataset, seed: int, train: bool,
                 progress: bool):
        self.config, self.out, self.dataset, self.seed = config, out, dataset, seed
        self.train, self.progress = train, progress
        self._cache = {}

    def _memo(self, key, func: Callable, *args):
        """Shared stages fail once: the same exception is raised again for every cell that needs them."""
        if key not in self._cache:
            try:
                self._cache[key] = True, func(*args)
            except Exception as e:
                self._cache[key] = False, e

        ok, value = self._cache[key]
        if not ok:
            raise value
        return value

    def _checkpoint(self, folder: Path, create: Callable, save=save_model, load=load_model, name='model.json'):
        path = self.out / folder / name
        if not self.train:
            return load(path)

        def run():
            (self.out / folder).mkdir(parents=True, exist_ok=True)
            return create(self.out / folder)

        value = load_or_create(path, run, save=save, load=load)
        shutil.rmtree(self.out / folder / 'checkpoints', ignore_errors=True)
        return value

    def base(self):
        def create(folder):
            config = replace(self.config.train, seed=self.seed)
            model = init_model(self.config.dataset.input_dim, self.config.model.hidden,
                               self.config.dataset.num_classes, self.seed)
            return train_base(model, self.dataset.train, config, JSONLogger(folder / 'metrics.jsonl'),
                              folder / 'checkpoints', self.progress)[0]

        return self._memo('base', self._checkpoint, Path(f'seed_{self.seed}/base'), create)

    def calibration(self):
        def create(folder):
            return calibrate(self.base(), self.dataset.calibration, self.config.calibration.batch_size)

        return self._memo('calibration', self._checkpoint, Path(f'seed_{self.seed}'), create,
                          save_calibration, load_calibration, 'calibration.json')

    def prehab(self, cell: Cell):
        if not self.config.stages.prehab or cell.lam == 0:
            return self.base()

        def create(folder):
            config = replace(self.config.prehab, lam=cell.lam, seed=self.seed)
            return prehab(self.base(), self.dataset.train, self.calibration(), config,
                          JSONLogger(folder / 'metrics.jsonl'), folder / 'checkpoints', self.progress)[0]

        folder = cell_folder(cell, 'prehab')
        return self._memo(folder, self._checkpoint, folder, create)

    def surgery_calibration(self, cell: Cell):
        if not self.config.calibration.recalibrate_before_surgery or cell.lam == 0 or not self.config.stages.prehab:
            return self.calibration()

        def create(folder):
            return calibrate(self.prehab(cell), self.dataset.calibration, self.config.calibration.batch_size)

        folder = cell_folder(cell, 'prehab')
        return self._memo((folder, 'calibration'), self._checkpoint, folder, create,
                          save_calibration, load_calibration, 'calibration.json')

    def surgery(self, cell: Cell):
        def create(folder):
            model = self.prehab(cell)
            plan = make_plan(model, cell.method, cell.ratio, self.config.compression.layers)
            return compress_model(model, plan, self.surgery_calibration(cell))

        folder = cell_folder(cell, 'surgery', self.config.stages.prehab)
        return self._memo(folder, self._checkpoint, folder, create)

    def rehab(self, cell: Cell):
        def create(folder):
            config = replace(self.config.rehab, seed=self.seed)
            data = self.dataset.split(config.split)
            return rehab(self.surgery(cell), data, config, JSONLogger(folder / 'metrics.jsonl'), self.progress)[0]

        folder = cell_folder(cell, 'rehab', self.config.stages.prehab)
        return self._memo(folder, self._checkpoint, folder, create)

    def evaluation(self, cell: Cell, stage: str) -> dict:
        folder = cell_folder(cell, stage, self.config.stages.prehab)

        def create(_):
            model = getattr(self, stage)(cell) if stage != 'base' else self.base()
            loss, accuracy = evaluate(model, self.dataset.test)
            whitening = [c.whitening_x for c in self.calibration()]
            spectra = model_spectra(model, whitening, _compressed_layers(self.config),
                                    self.config.report.sketch_columns, self.seed)
            objectives = []
            if stage in ('surgery', 'rehab'):
                objectives = model_objectives(self.prehab(cell), model, self.surgery_calibration(cell))
            return {
                'loss': loss, 'accuracy': accuracy, 'parameters': parameter_summary(model), 'spectra': spectra,
                'objectives': objectives,
            }

        return self._memo((folder, 'evaluation'), self._checkpoint, folder, create,
                          save_json, load_json, 'evaluation.json')

    @collect
    def rows(self, cell: Cell, failures: list):
        failed = None
        for stage in cell_stages(self.config, cell):
            row = {
                'method': None if cell.method is None else cell.method.value, 'ratio': cell.ratio,
                'lambda': cell.lam, 'seed': cell.seed, 'stage': stage,
                'checkpoint': str(cell_folder(cell, stage, self.config.stages.prehab) / 'model.json'),
            }
            if failed is None:
                try:
                    evaluation = self.evaluation(cell, stage)
                except Exception as e:
                    failed = f'{type(e).__name__}: {e}'
                    failures.append({'cell': format_cell(cell), 'stage': stage, 'error': failed})
                    flush(str(StageError(cell, stage, failed)))

            if failed is not None:
                yield {**row, 'status': 'failed', 'spectra': [], 'objectives': []}
                continue

            spectra = summarize_spectra(evaluation['spectra'], _plan_ranks(self.config, cell.ratio),
                                        self.config.report.top_k)
            yield {
                **row, 'status': 'ok', 'loss': evaluation['loss'], 'accuracy': evaluation['accuracy'],
                'parameters': evaluation['parameters']['total'],
                'factorized_parameters': evaluation['parameters']['factorized'],
                **spectra_means(spectra), **objective_means(evaluation['objectives']),
                'spectra': spectra, 'objectives': evaluation['objectives'],
            }


def _run_seed(config: ExperimentConfig, out: Path, seed: int, cells: Sequence[Cell], train: bool,
              progress: bool) -> Tuple[List[List[dict]], List[dict]]:
    dataset = load_dataset(out / 'dataset.npz')
    run = _SeedRun(config, out, dataset, seed, train, progress)
    failures = []
    rows = [run.rows(cell, failures) for cell in cells]
    return rows, failures


def run_experiment(config: ExperimentConfig, out: PathLike = None, *, resume: bool = False, cell: dict = None,
                   workers: int = 1, train: bool = True, progress: bool = False) -> ExperimentReport:
    """
    Run the whole grid and assemble the report. ``out`` defaults to ``config.out``.

    Parameters
    ----------
    config
    out
    resume
        whether to reuse the outputs of a previous run in ``out``.
    cell
        a pattern as returned by ``parse_cell``: only the matching cells are run and reported.
    workers
        the number of processes. Different seeds are independent and run in parallel.
    train
        if False, nothing is computed: the report is assembled from the stored outputs,
        and every missing output is reported as a failure.
    progress
        whether to show progressbars during training.

    Notes
    -----
    A failed stage doesn't stop the run: it is recorded in ``report.failures``, the later stages of the same cell
    are marked as failed, and the remaining cells continue.
    """
    out = Path(config.out if out is None else out)
    cells = config.cells()
    if cell:
        cells = [c for c in cells if c.matches(cell)]
        if not cells:
            raise ConfigError(f'No grid cell matches the pattern {cell}.')

    if train:
        if (out / 'config.json').exists() and not resume:
            raise FileExistsError(f'"{out}" already contains an experiment. Pass `resume` to continue it.')
        out.mkdir(parents=True, exist_ok=True)

    with locked(out):
        if train:
            save_json(config_to_dict(config), out / 'config.json', indent=2)
            prepare_dataset(config, out / 'dataset.npz')

        seeds = sorted({c.seed for c in cells}, key=list(config.grid.seeds).index)
        jobs = [[c for c in cells if c.seed == seed] for seed in seeds]
        func = partial(_run_seed, config, out, train=train, progress=progress)
        if workers > 1 and len(seeds) > 1:
            from loky import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=min(workers, len(seeds))) as executor:
                results = list(executor.map(func, seeds, jobs))
        else:
            results = list(map(func, seeds, jobs))

    by_cell, failures = {}, []
    for job, (rows, errors) in zip_equal(jobs, results):
        by_cell.update(zip_equal(job, rows))
        failures.extend(errors)

    rows = [row for c in cells for row in by_cell[c]]
    rows = add_gains(rows, config.report.baseline_lambda)
    order = {format_cell(c): i for i, c in enumerate(cells)}
    failures.sort(key=lambda f: (order[f['cell']], STAGES.index(f['stage'])))
    return ExperimentReport(config_to_dict(config), rows, failures)
