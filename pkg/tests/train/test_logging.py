import json

from lrpipe.io import load_jsonl
from lrpipe.train import CompositeLogger, ConsoleLogger, JSONLogger, TrainConfig, train_base


def test_json_logger(small_model, linear_task, tmpdir):
    path = tmpdir / 'curve.jsonl'
    open(path, 'w').write('stale\n')
    logger = JSONLogger(path)
    _, curve = train_base(small_model, linear_task, TrainConfig(batch_size=50, n_steps=6), logger=logger)

    records = load_jsonl(path)
    assert len(records) == 6
    for record, expected in zip(records, curve):
        assert record['wall_clock'] >= 0
        assert {k: v for k, v in record.items() if k != 'wall_clock'} == expected
    assert [r['wall_clock'] for r in records] == sorted(r['wall_clock'] for r in records)


def test_console_logger(capsys):
    logger = ConsoleLogger()
    logger.step({'step': 0, 'task_loss': 1.})
    assert capsys.readouterr().out == ''

    logger.train([{'task_loss': 1., 'stable_rank': [1, 2], 'degenerate': 0}, {'task_loss': 3., 'degenerate': 2}], 4)
    out = capsys.readouterr().out
    assert out.startswith('00004: Train loss')
    assert 'task_loss: 2.0' in out and 'degenerate: 1.0' in out
    assert 'stable_rank' not in out


def test_composite_logger(tmpdir, capsys):
    path = tmpdir / 'values.jsonl'
    logger = CompositeLogger(ConsoleLogger(), JSONLogger(path))
    logger.value('accuracy', .5, 3)

    assert capsys.readouterr().out == '00003: accuracy: 0.5\n'
    assert [json.loads(line) for line in open(path)] == [{'step': 3, 'accuracy': .5}]


def test_json_logger_resume(small_model, linear_task, tmpdir):
    config = TrainConfig(learning_rate=.01, batch_size=32, n_epochs=3)
    train_base(small_model, linear_task, config, logger=JSONLogger(tmpdir / 'full.jsonl'))

    path = tmpdir / 'resumed.jsonl'
    partial = TrainConfig(learning_rate=.01, batch_size=32, n_epochs=2)
    train_base(small_model, linear_task, partial, JSONLogger(path), checkpoints_path=tmpdir / 'checkpoints')
    first = load_jsonl(path)
    # the steps of an unfinished epoch are dropped on resume
    open(path, 'a').write(json.dumps({'step': len(first), 'task_loss': 0., 'wall_clock': 1e6}) + '\n')
    train_base(small_model, linear_task, config, JSONLogger(path), checkpoints_path=tmpdir / 'checkpoints')

    def strip(records):
        return [{k: v for k, v in r.items() if k != 'wall_clock'} for r in records]

    full, resumed = load_jsonl(tmpdir / 'full.jsonl'), load_jsonl(path)
    assert strip(resumed) == strip(full)
    assert resumed[:len(first)] == first
    assert [r['wall_clock'] for r in resumed] == sorted(r['wall_clock'] for r in resumed)
