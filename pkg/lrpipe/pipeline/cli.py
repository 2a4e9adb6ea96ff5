import argparse
import sys
from dataclasses import replace
from pathlib import Path

from ..calibration import calibrate, load_calibration, save_calibration
from ..commands import flush
from ..compress import CompressionMethod, compress_model, make_plan, parameter_summary
from ..io import dumps_json, load_json
from ..model import evaluate, init_model, load_model, save_model
from ..train import JSONLogger, prehab, rehab, train_base
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config, parse_cell
from .data import gen_dataset, load_dataset, save_dataset
from .experiment import run_experiment
from .report import emit_report

__all__ = 'main', 'build_parser'

EXIT_CONFIG, EXIT_STAGE = 1, 2


def _config(args) -> ExperimentConfig:
    config = load_config(args.config) if getattr(args, 'config', None) else ExperimentConfig()
    if getattr(args, 'seed', None) is not None:
        config = config.with_seeds([args.seed])
    return config


def _seed(config: ExperimentConfig) -> int:
    return config.grid.seeds[0]


def _out(args, name: str) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


def gen_data(args):
    config = _config(args)
    path = _out(args, 'dataset.npz')
    save_dataset(gen_dataset(config.dataset), path)
    flush(f'The dataset is saved to "{path}".')


def train(args):
    config = _config(args)
    dataset, seed = load_dataset(args.data), _seed(config)
    model = init_model(config.dataset.input_dim, config.model.hidden, config.dataset.num_classes, seed)
    model, _ = train_base(model, dataset.train, replace(config.train, seed=seed),
                          JSONLogger(_out(args, 'metrics.jsonl')), progress=args.progress)
    save_model(model, _out(args, 'model.json'))


def calibrate_(args):
    config = _config(args)
    calibrations = calibrate(load_model(args.model), load_dataset(args.data).calibration,
                             config.calibration.batch_size)
    save_calibration(calibrations, _out(args, 'calibration.json'))


def prehab_(args):
    config = _config(args)
    prehab_config = replace(config.prehab, seed=_seed(config))
    if args.lam is not None:
        prehab_config = replace(prehab_config, lam=args.lam)

    model, _ = prehab(load_model(args.model), load_dataset(args.data).train, load_calibration(args.calibration),
                      prehab_config, JSONLogger(_out(args, 'metrics.jsonl')), progress=args.progress)
    save_model(model, _out(args, 'model.json'))


def compress(args):
    config = _config(args)
    model = load_model(args.model)
    calibrations = load_calibration(args.calibration) if args.calibration else None
    plan = make_plan(model, args.method, args.ratio, config.compression.layers)
    model = compress_model(model, plan, calibrations)
    save_model(model, _out(args, 'model.json'))
    flush(f'Ranks: {plan.ranks}, parameters: {parameter_summary(model)["total"]}.')


def rehab_(args):
    config = _config(args)
    rehab_config = replace(config.rehab, seed=_seed(config))
    data = load_dataset(args.data).split(rehab_config.split)
    model, _ = rehab(load_model(args.model), data, rehab_config, JSONLogger(_out(args, 'metrics.jsonl')),
                     progress=args.progress)
    save_model(model, _out(args, 'model.json'))


def eval_(args):
    model = load_model(args.model)
    loss, accuracy = evaluate(model, load_dataset(args.data).split(args.split))
    print(dumps_json({'loss': loss, 'accuracy': accuracy, 'parameters': parameter_summary(model)}))


def _finish(report, out: Path) -> int:
    for path in emit_report(report, out):
        flush(f'The report is saved to "{path}".')
    if report.failures:
        flush(f'{len(report.failures)} stage(s) failed.')
        return EXIT_STAGE
    return 0


def report_(args):
    out = Path(args.out)
    config = config_from_dict(load_json(out / 'config.json'))
    return _finish(run_experiment(config, out, train=False), out)


def sweep(args):
    config = _config(args)
    if args.recalibrate:
        config = replace(config, calibration=replace(config.calibration, recalibrate_before_surgery=True))
    out = Path(args.out or config.out)
    cell = parse_cell(args.cell) if args.cell else None
    report = run_experiment(config, out, resume=args.resume, cell=cell, workers=args.workers,
                            progress=args.progress)
    return _finish(report, out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser('lrpipe', description='Compression-aware training, surgery and recovery.')
    commands = parser.add_subparsers(dest='command', required=True)

    def command(name, func, *arguments, help):
        sub = commands.add_parser(name, help=help)
        sub.set_defaults(func=func)
        for argument in arguments:
            if argument in ('config', 'data', 'model', 'calibration'):
                sub.add_argument(f'--{argument}', required=argument not in ('config', 'calibration'))
            elif argument == 'out':
                sub.add_argument('--out', required=name != 'sweep', help='Destination folder.')
            elif argument == 'seed':
                sub.add_argument('--seed', type=int, help='Replaces the seeds of the config.')
            elif argument == 'progress':
                sub.add_argument('--progress', action='store_true', help='Show progressbars.')
        return sub

    command('gen-data', gen_data, 'config', 'out', help='Generate the planted dataset.')
    command('train', train, 'config', 'data', 'out', 'seed', 'progress', help='Train a base model.')
    command('calibrate', calibrate_, 'config', 'data', 'model', 'out', help='Estimate the layer statistics.')
    sub = command('prehab', prehab_, 'config', 'data', 'model', 'out', 'seed', 'progress',
                  help='Train with the rank penalty.')
    sub.add_argument('--calibration', required=True)
    sub.add_argument('--lambda', dest='lam', type=float, help='Overrides the penalty strength.')
    sub = command('compress', compress, 'config', 'model', 'calibration', 'out', help='Compress a model.')
    sub.add_argument('--method', required=True, choices=[m.value for m in CompressionMethod])
    sub.add_argument('--ratio', required=True, type=float)
    command('rehab', rehab_, 'config', 'data', 'model', 'out', 'seed', 'progress',
            help='Fine-tune the factors of a compressed model.')
    sub = command('eval', eval_, 'data', 'model', help='Evaluate a model.')
    sub.add_argument('--split', default='test', choices=['train', 'calibration', 'test', 'rehab'])
    command('report', report_, 'out', help='Assemble the report of a sweep.')
    sub = command('sweep', sweep, 'config', 'out', 'seed', 'progress', help='Run the whole grid.')
    sub.add_argument('--resume', action='store_true', help='Continue the experiment stored in the destination.')
    sub.add_argument('--cell', help='Run a single cell, e.g. "method=whitened_svd,ratio=0.5,lambda=0.1,seed=0".')
    sub.add_argument('--workers', type=int, default=1, help='The number of processes.')
    sub.add_argument('--recalibrate', action='store_true', help='Estimate the statistics again before surgery.')
    return parser


def main(argv=None) -> int:
    """
    Returns the exit code: 0 on success, 1 for an invalid config or a misuse, 2 if some stage failed.
    """
    args = build_parser().parse_args(argv)
    try:
        return args.func(args) or 0
    except (ConfigError, FileExistsError) as e:
        print(f'Error: {e}', file=sys.stderr, flush=True)
        return EXIT_CONFIG
    except Exception as e:
        print(f'Error: "{args.command}" failed: {type(e).__name__}: {e}', file=sys.stderr, flush=True)
        return EXIT_STAGE


if __name__ == '__main__':
    sys.exit(main())
